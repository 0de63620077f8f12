"""Matplotlib report figures (PNG) for each scenario."""

from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

__all__ = ["render_figures"]

_RC = {
    "figure.figsize": (5.0, 3.6),
    "figure.dpi": 120,
    "font.size": 9,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "savefig.bbox": "tight",
}


def _save(fig, out_dir, name):
    path = os.path.join(out_dir, name)
    fig.savefig(path, metadata={"Software": None})
    plt.close(fig)
    return name


def _plane(series, title):
    fig, ax = plt.subplots()
    for name, y in series.get("paths", []):
        y = np.asarray(y)
        ax.plot(y.real, y.imag, lw=1.2, label=name)
    zs = np.asarray(series.get("zeros", []), dtype=complex)
    if zs.size:
        ax.plot(zs.real, zs.imag, "k.", ms=8, label="zeros")
    ax.set_aspect("equal", adjustable="datalim")
    ax.set_xlabel("Re y")
    ax.set_ylabel("Im y")
    ax.set_title(title)
    return fig


def render_figures(scenario, result, out_dir, seed=0):
    """Render the scenario's figures into ``out_dir``; returns file names."""
    s = result.series
    names = []
    with plt.rc_context(_RC):
        if scenario == "vanishing-path":
            names.append(_save(_plane(s, "saddle connections"), out_dir, "saddle_connections.png"))
        elif scenario == "s1s2-loop":
            names.append(_save(_plane(s, "closed geodesic"), out_dir, "closed_geodesic.png"))
        elif scenario == "ty-family":
            fig, ax = plt.subplots()
            psi = np.asarray(s["psi"], dtype=float)
            ex = np.asarray(s["exists"], dtype=bool)
            ax.plot(s["s"], psi, "-", color="0.6", lw=1)
            ax.plot(np.asarray(s["s"])[ex], psi[ex], "o", ms=4, label="direct connection")
            ax.plot(np.asarray(s["s"])[~ex], psi[~ex], "x", ms=5, label="no direct connection")
            ax.axhline(2 * np.pi / 3, ls="--", color="k", lw=0.8, label="2π/3")
            if s.get("s_star") is not None:
                ax.axvline(s["s_star"], ls=":", color="r", lw=0.8, label="s*")
            ax.set_xlabel("s")
            ax.set_ylabel("ψ")
            ax.legend(frameon=False)
            names.append(_save(fig, out_dir, "wall_scan.png"))
        elif scenario == "cyl-solve":
            fig, ax = plt.subplots()
            for l, prof in sorted(s["profiles"].items()):
                ax.semilogy(s["t"], np.maximum(prof, 1e-300), lw=1.2,
                            label=f"l={l}, rate {s['rates'][l]:.4f}")
            ax.set_ylim(1e-14, None)
            ax.set_xlabel("t")
            ax.set_ylabel("fiberwise norm")
            ax.legend(frameon=False)
            names.append(_save(fig, out_dir, "cyl_decay.png"))
        elif scenario == "thimble-check":
            fig, ax = plt.subplots()
            ax.loglog(s["y"], s["diameter"], "o-", ms=4, label=f"slope {s['slope']:.4f}")
            ax.set_xlabel("|y|")
            ax.set_ylabel("vanishing-cycle diameter")
            ax.legend(frameon=False)
            names.append(_save(fig, out_dir, "vanishing_diameter.png"))
        elif scenario == "warped-green":
            fig, (a1, a2) = plt.subplots(1, 2, figsize=(8.0, 3.2))
            a1.loglog(s["rho"], np.abs(s["lap"]), lw=1.2)
            a1.set_xlabel("ρ")
            a1.set_ylabel("|ΔG|")
            a2.semilogx(s["rho"], s["flux"] - 1, lw=1.2)
            a2.set_xlabel("ρ")
            a2.set_ylabel("normalized flux - 1")
            names.append(_save(fig, out_dir, "green.png"))
    return names
