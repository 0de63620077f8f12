"""JSON scenario configuration with byte-offset error reporting."""

from __future__ import annotations

import copy
import json
import json.decoder
import json.scanner
import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigError
from ..qdiff import Disk, QuadraticDifferential

__all__ = ["SCENARIOS", "ScenarioConfig", "parse_config", "DEFAULTS"]

SCENARIOS = ("vanishing-path", "ty-family", "s1s2-loop", "cyl-solve", "thimble-check", "warped-green")

_POLY_YY1 = {"type": "polynomial", "coefficients": [[0.0, 0.0], [-1.0, 0.0], [1.0, 0.0]]}
_RAT_S1S2 = {"type": "rational", "coefficients": [[1.0, 0.0]],
             "denominator": [[-1.0, 0.0], [0.0, 0.0], [1.0, 0.0]]}

# per-scenario defaults: differential, parameters, tolerances
DEFAULTS = {
    "vanishing-path": {
        "differential": _POLY_YY1,
        "parameters": {"length_bound": 10.0, "expected_abs_Z": None},
        "tolerances": {"abs_Z": 1e-6, "bps_rel": 1e-6, "residual": 1e-8},
    },
    "ty-family": {
        "differential": None,
        "parameters": {"epsilon3": 0.1, "epsilon4": 0.01, "s_range": [0.0, 3.14159], "n_s": 17},
        "tolerances": {"psi_star": 1e-3, "s_exclusion": 1e-2},
    },
    "s1s2-loop": {
        "differential": _RAT_S1S2,
        "parameters": {"expected_length": None},
        "tolerances": {"length": 1e-6, "phase": 1e-7, "closure": 1e-8},
    },
    "cyl-solve": {
        "differential": None,
        "parameters": {"T": 20.0, "h": 0.01, "lmax": 16, "band": 4, "n_random": 50},
        "tolerances": {"inverse": 1e-8, "rate_l1": 1e-2, "rate_l2": 2e-2},
    },
    "thimble-check": {
        "differential": None,
        "parameters": {"n_samples": 32, "y_min": 1.0, "y_max": 10.0, "n_y": 8},
        "tolerances": {"omega": 1e-8, "exponent": 1e-2, "fiber_scale": 5e-2},
    },
    "warped-green": {
        "differential": None,
        "parameters": {"N": 12, "A": 10.0, "rho_max": 1000.0, "perturbation": [0.5]},
        "tolerances": {"laplacian": 1e-10, "flux": 1e-6, "wronskian": 1e-10, "decay": 0.1},
    },
}

_TOP_KEYS = {"scenario", "differential", "domain", "tolerances", "seed", "out", "parameters"}
_DIFF_KEYS = {"type", "coefficients", "denominator"}
_DOMAIN_KEYS = {"center", "radius"}


class _PosList(list):
    offset = 0


class _PosDict(dict):
    offset = 0


class _Decoder(json.JSONDecoder):
    """Decoder that remembers the character offset of every array and object."""

    def __init__(self):
        super().__init__()
        base_array, base_object = self.parse_array, self.parse_object

        def parse_array(s_and_end, scan_once):
            values, end = base_array(s_and_end, scan_once)
            out = _PosList(values)
            out.offset = s_and_end[1] - 1
            return out, end

        def parse_object(s_and_end, strict, scan_once, object_hook, object_pairs_hook, memo=None,
                         _w=json.decoder.WHITESPACE.match, _ws=json.decoder.WHITESPACE_STR):
            pairs, end = base_object(s_and_end, strict, scan_once, None, list, memo)
            out = _PosDict(pairs)
            out.offset = s_and_end[1] - 1
            return out, end

        self.parse_array = parse_array
        self.parse_object = parse_object
        self.scan_once = json.scanner.py_make_scanner(self)


@dataclass
class ScenarioConfig:
    """Validated scenario configuration with defaults filled in."""

    scenario: str
    differential: dict | None
    domain: dict
    tolerances: dict
    parameters: dict
    seed: int = 0
    out: str = "out"
    raw: dict = field(default_factory=dict, repr=False)

    def echo(self):
        return {
            "scenario": self.scenario,
            "differential": self.differential,
            "domain": self.domain,
            "tolerances": self.tolerances,
            "parameters": self.parameters,
            "seed": self.seed,
            "out": self.out,
        }

    def quadratic_differential(self):
        """The configured differential on the configured domain."""
        if self.differential is None:
            raise ConfigError(f"scenario {self.scenario} has no differential")
        d = self.differential
        num = tuple(complex(re, im) for re, im in d["coefficients"])
        den = tuple(complex(re, im) for re, im in d.get("denominator") or [[1.0, 0.0]])
        radius = self.domain["radius"]
        dom = Disk(complex(*self.domain["center"]), math.inf if radius is None else float(radius))
        return QuadraticDifferential(_simplify(num), _simplify(den), domain=dom)

    def ty_family(self):
        """Closure ``s -> QuadraticDifferential`` for the three-plus-one zero family."""
        p = self.parameters
        e3, e4 = float(p["epsilon3"]), float(p["epsilon4"])

        def roots(s):
            y1 = e3 + e4 * np.exp(1j * s)
            y2 = e3 - e4 * np.exp(1j * s)
            return y1, y2, -2 * e3

        def family(s):
            y1, y2, y3 = roots(s)
            return QuadraticDifferential.from_roots([0.0, y1, y2, y3])

        def selector(qd, s):
            y1, y2, _ = roots(s)
            return (y1, y2, 0.0)

        return family, selector


def _simplify(coeffs):
    """Drop imaginary parts that are exactly zero."""
    if all(c.imag == 0 for c in coeffs):
        return tuple(c.real for c in coeffs)
    return coeffs


def _byte_offset(text, pos):
    return len(text[:pos].encode("utf-8"))


def _offset(text, node, default=0):
    return _byte_offset(text, getattr(node, "offset", default))


def _check_keys(text, obj, allowed, where):
    if not isinstance(obj, dict):
        raise ConfigError(f"{where} must be an object", _offset(text, obj))
    extra = sorted(set(obj) - allowed)
    if extra:
        start = getattr(obj, "offset", 0)
        pos = text.find(json.dumps(extra[0]), start)
        raise ConfigError(f"unknown field(s) in {where}: {', '.join(extra)}",
                          _byte_offset(text, pos if pos >= 0 else start))


def _is_number(x):
    return isinstance(x, (int, float)) and not isinstance(x, bool) and math.isfinite(x)


def _coefficients(text, arr, name):
    if not isinstance(arr, list) or not arr:
        raise ConfigError(f"{name} must be a nonempty array of [re, im] pairs", _offset(text, arr))
    out = []
    for c in arr:
        if not isinstance(c, list) or len(c) != 2:
            n = len(c) if isinstance(c, list) else "non-array"
            raise ConfigError(f"{name}: coefficient arity {n}, expected 2", _offset(text, c, arr.offset))
        if not all(_is_number(v) for v in c):
            raise ConfigError(f"{name}: coefficients must be finite numbers", _offset(text, c))
        out.append([float(c[0]), float(c[1])])
    return out


def parse_config(data):
    """Parse and validate a UTF-8 JSON scenario configuration.

    Parameters
    ----------
    data : bytes or str
        The JSON document.

    Returns
    -------
    ScenarioConfig

    Raises
    ------
    ConfigError
        On malformed JSON, unknown scenarios or fields, bad coefficient
        arity or nonpositive tolerances; the message carries a byte offset.
    """
    if isinstance(data, bytes):
        try:
            text = data.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ConfigError(f"config is not UTF-8: {exc.reason}", exc.start) from None
    else:
        text = data
    try:
        doc = _Decoder().decode(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON: {exc.msg}", _byte_offset(text, exc.pos)) from None
    _check_keys(text, doc, _TOP_KEYS, "config")
    scen = doc.get("scenario")
    if scen not in SCENARIOS:
        raise ConfigError(f"unknown scenario {scen!r}; expected one of {', '.join(SCENARIOS)}",
                          _byte_offset(text, text.find('"scenario"')) if '"scenario"' in text else 0)
    defaults = copy.deepcopy(DEFAULTS[scen])

    diff = defaults["differential"]
    if "differential" in doc:
        d = doc["differential"]
        _check_keys(text, d, _DIFF_KEYS, "differential")
        kind = d.get("type", "polynomial")
        if kind not in ("polynomial", "rational"):
            raise ConfigError(f"differential type must be polynomial or rational, got {kind!r}", _offset(text, d))
        diff = {"type": kind, "coefficients": _coefficients(text, d.get("coefficients"), "coefficients")}
        if "denominator" in d:
            if kind == "polynomial":
                raise ConfigError("a polynomial differential takes no denominator", _offset(text, d))
            diff["denominator"] = _coefficients(text, d["denominator"], "denominator")
        elif kind == "rational":
            raise ConfigError("a rational differential needs a denominator", _offset(text, d))

    domain = {"center": [0.0, 0.0], "radius": None}
    if "domain" in doc:
        dm = doc["domain"]
        _check_keys(text, dm, _DOMAIN_KEYS, "domain")
        if "center" in dm:
            c = dm["center"]
            if not isinstance(c, list) or len(c) != 2 or not all(_is_number(v) for v in c):
                raise ConfigError("domain center must be [re, im]", _offset(text, c, dm.offset))
            domain["center"] = [float(c[0]), float(c[1])]
        if "radius" in dm and dm["radius"] is not None:
            r = dm["radius"]
            if not _is_number(r) or r <= 0:
                raise ConfigError("domain radius must be a positive number", _offset(text, dm))
            domain["radius"] = float(r)

    tol = defaults["tolerances"]
    if "tolerances" in doc:
        t = doc["tolerances"]
        _check_keys(text, t, set(tol), "tolerances")
        for k, v in t.items():
            if not _is_number(v) or v <= 0:
                raise ConfigError(f"tolerance {k} must be a positive number", _offset(text, t))
            tol[k] = float(v)

    params = defaults["parameters"]
    if "parameters" in doc:
        p = doc["parameters"]
        _check_keys(text, p, set(params), "parameters")
        for k, v in p.items():
            params[k] = _plain(v)

    seed = doc.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
        raise ConfigError("seed must be a nonnegative integer", _offset(text, doc))
    out = doc.get("out", "out")
    if not isinstance(out, str) or not out:
        raise ConfigError("out must be a nonempty string", _offset(text, doc))
    return ScenarioConfig(scen, diff, domain, tol, params, seed, out, raw=_plain(doc))


def _plain(v):
    if isinstance(v, dict):
        return {k: _plain(x) for k, x in v.items()}
    if isinstance(v, list):
        return [_plain(x) for x in v]
    return v
