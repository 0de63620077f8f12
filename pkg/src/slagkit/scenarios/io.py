"""CSV tables and deterministic SVG polyline plots."""

from __future__ import annotations

import csv
import io
import math
from numbers import Number

import numpy as np

from ..errors import InputError

__all__ = ["format_value", "csv_bytes", "write_csv", "emit_plot"]


def format_value(v):
    """Locale-free text for a CSV cell; floats carry 17 significant digits."""
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, Number):
        x = float(v)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return format(x, ".17g")
    return str(v)


def csv_bytes(header, rows):
    """RFC 4180 CSV (CRLF line ends, minimal quoting) as UTF-8 bytes."""
    buf = io.StringIO(newline="")
    w = csv.writer(buf, lineterminator="\r\n", quoting=csv.QUOTE_MINIMAL)
    w.writerow(header)
    for r in rows:
        if len(r) != len(header):
            raise InputError(f"row has {len(r)} cells, header has {len(header)}")
        w.writerow([format_value(v) for v in r])
    return buf.getvalue().encode("utf-8")


def write_csv(path, header, rows):
    data = csv_bytes(header, rows)
    with open(path, "wb") as fh:
        fh.write(data)
    return data


_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf", "#8c564b", "#e377c2")


def _num(x):
    s = format(float(x) + 0.0, ".9g")
    return "0" if s == "-0" else s


def emit_plot(paths, zeros=(), width=480, stroke_width=None, title=None, seed=None):
    """Standalone SVG 1.1 with one polyline per path and zeros as dots.

    Parameters
    ----------
    paths : sequence of (name, points) or sequence of points
        Points are complex numbers (or (x, y) pairs) in the y-plane.
    zeros : sequence of complex
        Marked with small filled circles.
    width : int
        Pixel width; the height follows the aspect ratio of the data.

    Returns
    -------
    bytes
        Identical bytes for identical inputs.
    """
    items = []
    for i, p in enumerate(paths):
        if isinstance(p, tuple) and len(p) == 2 and isinstance(p[0], str):
            name, pts = p
        else:
            name, pts = f"path{i}", p
        arr = np.asarray(pts)
        if arr.ndim == 2 and arr.shape[1] == 2 and not np.iscomplexobj(arr):
            arr = arr[:, 0] + 1j * arr[:, 1]
        arr = np.asarray(arr, dtype=complex).ravel()
        if arr.size < 2:
            raise InputError(f"path {name!r} needs at least 2 points")
        if not np.all(np.isfinite(arr)):
            raise InputError(f"path {name!r} has a non-finite coordinate")
        items.append((name, arr))
    if not items:
        raise InputError("nothing to plot: empty path collection")
    zs = np.asarray([complex(z) for z in zeros], dtype=complex)
    if zs.size and not np.all(np.isfinite(zs)):
        raise InputError("zero marker has a non-finite coordinate")
    allp = np.concatenate([a for _, a in items] + ([zs] if zs.size else []))
    x0, x1 = allp.real.min(), allp.real.max()
    y0, y1 = allp.imag.min(), allp.imag.max()
    span = max(x1 - x0, y1 - y0, 1e-12)
    wx = max(x1 - x0, 1e-3 * span)
    wy = max(y1 - y0, 1e-3 * span)
    mx, my = 0.05 * wx, 0.05 * wy
    vb = (x0 - mx, -(y1 + my), wx + 2 * mx, wy + 2 * my)
    height = max(1, int(round(width * vb[3] / vb[2])))
    sw = stroke_width if stroke_width is not None else 0.004 * max(vb[2], vb[3])
    out = [
        '<?xml version="1.0" encoding="UTF-8" standalone="no"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{width}" height="{height}" '
        f'viewBox="{_num(vb[0])} {_num(vb[1])} {_num(vb[2])} {_num(vb[3])}">',
    ]
    if title is not None:
        out.append(f"<title>{_escape(title)}</title>")
    if seed is not None:
        out.append(f"<desc>seed={int(seed)}</desc>")
    for i, (name, arr) in enumerate(items):
        pts = " ".join(f"{_num(z.real)},{_num(-z.imag)}" for z in arr)
        color = _PALETTE[i % len(_PALETTE)]
        out.append(f'<polyline id="{_escape(name)}" fill="none" stroke="{color}" '
                   f'stroke-width="{_num(sw)}" points="{pts}"/>')
    r = 2.5 * sw
    for z in zs:
        out.append(f'<circle class="zero" cx="{_num(z.real)}" cy="{_num(-z.imag)}" r="{_num(r)}" fill="black"/>')
    out.append("</svg>")
    return ("\n".join(out) + "\n").encode("utf-8")


def _escape(s):
    return (str(s).replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")
            .replace('"', "&quot;"))
