"""The named scenarios: computation, checks, tables and plots."""

from __future__ import annotations

import itertools
import math
import os
import time
from dataclasses import dataclass, field

import numpy as np

from .. import __version__
from ..cylinder import (ModeField, bump, decay_rate, dirac_apply, dirac_solve, lm_index,
                        random_ave_rhs)
from ..errors import InputError, SlagError
from ..geodesics import (ShootConfig, closed_geodesic, find_saddle_connections, geodesic_residual,
                         parallel_map, shoot_from_zero, wall_crossing_scan)
from ..green import fundamental_wronskian, green_function
from ..local_models import (ModelPoint, PotentialField, fiber_metric_scale, thimble_sl_residual,
                            vanishing_cycle_diameter, warped_laplacian_apply)
from .config import DEFAULTS, ScenarioConfig
from .io import csv_bytes, emit_plot
from .report import Check, RunReport

__all__ = ["ScenarioResult", "run_scenario", "compute_scenario", "zeros_table", "fan_paths",
           "write_artifacts"]

TWO_PI_OVER_3 = 2 * np.pi / 3


@dataclass
class ScenarioResult:
    """Checks plus in-memory artifacts of one scenario."""

    checks: list
    tables: dict = field(default_factory=dict)   # name -> (header, rows)
    svgs: dict = field(default_factory=dict)     # name -> bytes
    series: dict = field(default_factory=dict)   # plotting data for figures


def _uses_default_differential(cfg):
    return cfg.differential == DEFAULTS[cfg.scenario]["differential"]


def zeros_table(qd):
    header = ["index", "re", "im", "multiplicity", "residual"]
    rows = [[i, z.location.real, z.location.imag, z.multiplicity, z.residual]
            for i, z in enumerate(qd.zeros())]
    return header, rows


def _vanishing_path(cfg):
    qd = cfg.quadratic_differential()
    p, tol = cfg.parameters, cfg.tolerances
    expected = p["expected_abs_Z"]
    if expected is None and _uses_default_differential(cfg):
        expected = math.pi / 8  # Beta integral for y(y-1)
    zeros = qd.zeros()
    simple = [z for z in zeros if z.multiplicity == 1]
    if len(simple) < 2:
        raise InputError("vanishing-path needs at least two simple zeros in the domain")
    header = ["seed", "zero_a_re", "zero_a_im", "zero_b_re", "zero_b_im", "Z_re", "Z_im", "abs_Z",
              "length", "bps_gap", "phase", "residual"]
    rows, checks, paths = [], [], []
    pairs = list(itertools.combinations(simple, 2))
    found = parallel_map(lambda ab: find_saddle_connections(qd, ab[0].location, ab[1].location,
                                                            float(p["length_bound"])), pairs)
    for (za, zb), conns in zip(pairs, found):
        tag = f"{za.location:.6g}->{zb.location:.6g}"
        checks.append(Check(f"at_most_one_connection[{tag}]", len(conns), 1, "le"))
        for c in conns:
            res = geodesic_residual(qd, c.path, zero_start=True, zero_end=True)
            Z = complex(c.central_charge)
            rows.append([cfg.seed, za.location.real, za.location.imag, zb.location.real, zb.location.imag,
                         Z.real, Z.imag, abs(Z), c.length, c.bps_gap, c.phase, res])
            checks.append(Check(f"bps_equality[{tag}]", c.bps_gap / c.length, tol["bps_rel"], "le"))
            checks.append(Check(f"constant_phase[{tag}]", res, tol["residual"], "le"))
            paths.append((f"connection_{len(paths)}", c.path.y))
    checks.insert(0, Check("connections_found", len(rows), 1, "ge"))
    if expected is not None:
        for r in rows:
            checks.append(Check("abs_Z", r[7], float(expected), "abs_le", tol["abs_Z"],
                                note="Beta-integral oracle" if p["expected_abs_Z"] is None else ""))
    svgs = {}
    if paths:
        svgs["saddle_connections.svg"] = emit_plot(paths, [z.location for z in zeros], seed=cfg.seed,
                                                   title="saddle connections")
    return ScenarioResult(checks, {"saddle_connections.csv": (header, rows)}, svgs,
                          {"paths": paths, "zeros": [z.location for z in zeros]})


def _ty_family(cfg):
    p, tol = cfg.parameters, cfg.tolerances
    family, selector = cfg.ty_family()
    lo, hi = p["s_range"]
    s_values = np.linspace(float(lo), float(hi), int(p["n_s"]))
    res = wall_crossing_scan(family, s_values, selector)
    header = ["seed", "s", "psi", "exists_direct", "psi_below_2pi_3", "reference_length", "defined"]
    rows = []
    mismatches = 0
    undefined = 0
    for s, psi, ex, L in zip(res.s_grid, res.psi, res.exists_direct, res.lengths):
        defined = bool(np.isfinite(psi))
        rows.append([cfg.seed, s, psi, bool(ex), bool(psi < TWO_PI_OVER_3) if defined else None, L, defined])
        if not defined:
            undefined += 1
            continue
        if res.s_star is not None and abs(s - res.s_star) <= tol["s_exclusion"]:
            continue
        if bool(ex) != bool(psi < TWO_PI_OVER_3):
            mismatches += 1
    checks = [Check("s_star_found", res.s_star is not None, True, "eq")]
    psi_star = res.psi_star if res.psi_star is not None else float("nan")
    checks.append(Check("psi_at_s_star", psi_star, TWO_PI_OVER_3, "abs_le", tol["psi_star"]))
    checks.append(Check("direct_iff_psi_below_2pi_3_mismatches", mismatches, 0, "le"))
    # points where the shared-vertex reference pair does not exist are listed, not judged
    summary = ("seed", "s_star", "psi_star", "undefined_points")
    tables = {"wall_scan.csv": (header, rows),
              "wall_summary.csv": (list(summary), [[cfg.seed, res.s_star, psi_star, undefined]])}
    qd_star = family(res.s_star if res.s_star is not None else float(s_values[0]))
    series = {"s": res.s_grid, "psi": res.psi, "exists": res.exists_direct, "s_star": res.s_star,
              "zeros": [z.location for z in qd_star.zeros()]}
    return ScenarioResult(checks, tables, {}, series)


def _s1s2_loop(cfg):
    qd = cfg.quadratic_differential()
    p, tol = cfg.parameters, cfg.tolerances
    expected = p["expected_length"]
    if expected is None and _uses_default_differential(cfg):
        expected = 2 * math.pi  # residue of the square root at infinity
    bp = qd.branch_points()
    if len(bp) != 2:
        raise InputError(f"s1s2-loop needs exactly two branch points, found {len(bp)}")
    path = closed_geodesic(qd, tuple(bp))
    res = geodesic_residual(qd, path)
    gap = abs(path.y[-1] - path.y[0])
    header = ["seed", "length", "phase", "closure_gap", "phase_residual", "n_points"]
    rows = [[cfg.seed, path.length, path.theta, gap, res, len(path.y)]]
    checks = [Check("closure_gap", gap, tol["closure"], "le"),
              Check("constant_phase", res, tol["phase"], "le")]
    if expected is not None:
        checks.append(Check("length", path.length, float(expected), "abs_le", tol["length"]))
    svgs = {"closed_geodesic.svg": emit_plot([("closed_geodesic", path.y)], bp, seed=cfg.seed,
                                             title="closed geodesic")}
    track = [[cfg.seed, s, y.real, y.imag] for s, y in zip(path.s, path.y)]
    return ScenarioResult(checks, {"closed_geodesic.csv": (header, rows),
                                   "closed_geodesic_track.csv": (["seed", "s", "re", "im"], track)},
                          svgs, {"paths": [("closed_geodesic", path.y)], "zeros": list(bp)})


def _cyl_solve(cfg):
    p, tol = cfg.parameters, cfg.tolerances
    T, h = float(p["T"]), float(p["h"])
    n = int(round(2 * T / h)) + 1
    t = np.linspace(-T, T, n)
    lmax = int(p["lmax"])
    rng = np.random.default_rng(cfg.seed)
    worst = 0.0
    for _ in range(int(p["n_random"])):
        rhs = random_ave_rhs(rng, t, lmax, band=min(int(p["band"]), lmax))
        sol = dirac_solve(rhs)
        worst = max(worst, (dirac_apply(sol) - rhs).norm() / rhs.norm())
    rates = {}
    profiles = {}
    for l, comp in ((1, "g"), (2, "p")):
        rhs = ModeField.zeros(t, max(2, min(lmax, 2)), "rhs")
        rhs[comp][lm_index(l, 0)] = bump(t)
        sol = dirac_solve(rhs)
        rates[l] = decay_rate(sol)[0]
        profiles[l] = np.sqrt(sol.pointwise_sq())
    checks = [
        Check("inverse_residual", worst, tol["inverse"], "le"),
        Check("decay_rate_l1", rates[1], math.sqrt(2), "abs_le", tol["rate_l1"]),
        Check("decay_rate_l2", rates[2], math.sqrt(6), "abs_le", tol["rate_l2"]),
    ]
    header = ["seed", "quantity", "value", "expected"]
    rows = [[cfg.seed, "inverse_residual", worst, None],
            [cfg.seed, "decay_rate_l1", rates[1], math.sqrt(2)],
            [cfg.seed, "decay_rate_l2", rates[2], math.sqrt(6)]]
    stride = max(1, n // 400)
    prof = [[cfg.seed, tt, a, b] for tt, a, b in zip(t[::stride], profiles[1][::stride], profiles[2][::stride])]
    return ScenarioResult(checks, {"cyl_solve.csv": (header, rows),
                                   "cyl_profile.csv": (["seed", "t", "norm_l1", "norm_l2"], prof)},
                          {}, {"t": t, "profiles": profiles, "rates": rates})


def _thimble_check(cfg):
    p, tol = cfg.parameters, cfg.tolerances
    rng = np.random.default_rng(cfg.seed)
    m = int(p["n_samples"])
    x = rng.normal(size=(m, 3))
    r2 = rng.uniform(float(p["y_min"]), float(p["y_max"]), size=m)
    x *= np.sqrt(r2 / (x ** 2).sum(axis=1))[:, None]
    checks, rows = [], []
    for kind in ("euclidean", "semiflat"):
        _, w = thimble_sl_residual(PotentialField(kind), x.astype(complex))
        checks.append(Check(f"omega_on_real_locus[{kind}]", w, tol["omega"], "le"))
        rows.append([cfg.seed, f"omega_residual_{kind}", w])
    ys = np.geomspace(float(p["y_min"]), float(p["y_max"]), int(p["n_y"]))
    diam = np.array([vanishing_cycle_diameter(y) for y in ys])
    slope = float(np.polyfit(np.log(ys), np.log(diam), 1)[0])
    checks.append(Check("diameter_exponent", slope, 0.25, "abs_le", tol["exponent"]))
    rows.append([cfg.seed, "diameter_exponent", slope])
    scale = []
    for y in (float(p["y_max"]), 10 * float(p["y_max"])):
        rho = ModelPoint((math.sqrt(y), 0.0, 0.0)).rho
        scale.append(fiber_metric_scale(y) / math.sqrt(rho))
    drift = abs(scale[1] / scale[0] - 1)
    checks.append(Check("fiber_scale_over_sqrt_rho_drift", drift, tol["fiber_scale"], "le"))
    rows.append([cfg.seed, "fiber_scale_ratio_drift", drift])
    diam_rows = [[cfg.seed, y, d] for y, d in zip(ys, diam)]
    return ScenarioResult(checks, {"thimble_check.csv": (["seed", "quantity", "value"], rows),
                                   "vanishing_diameter.csv": (["seed", "y_tilde", "diameter"], diam_rows)},
                          {}, {"y": ys, "diameter": diam, "slope": slope})


def _warped_green(cfg):
    p, tol = cfg.parameters, cfg.tolerances
    rho = np.linspace(2.0, 10.0, 801)
    lap = float(np.abs(warped_laplacian_apply(rho, np.sqrt(rho))).max())
    N, A, rmax = float(p["N"]), float(p["A"]), float(p["rho_max"])
    flat = green_function(N, A, rmax)
    flux_dev = float(np.abs(flat.flux_raw - 2 * np.pi).max())
    pert = green_function(N, A, rmax, perturbation=p["perturbation"] or None)
    far = pert.rho >= 10
    norm_dev = float(np.abs(pert.flux[far] - 1).max())
    W = fundamental_wronskian(rho)
    w_dev = float(np.abs(W - 0.5 / np.sqrt(rho)).max())
    checks = [
        Check("laplacian_of_sqrt_rho", lap, tol["laplacian"], "le"),
        Check("flat_flux_minus_2pi", flux_dev, tol["flux"], "le"),
        Check("normalized_flux_minus_1", norm_dev, tol["flux"], "le"),
        Check("decay_exponent", pert.decay_exponent, -N * (1 - tol["decay"]), "le"),
        Check("wronskian_vs_plus_half_rho^-1/2", w_dev, tol["wronskian"], "le",
              note="h1 h2' - h2 h1' for h1 = 1, h2 = rho^(1/2)"),
    ]
    rows = [[cfg.seed, "laplacian_of_sqrt_rho", lap], [cfg.seed, "flat_flux_max_deviation", flux_dev],
            [cfg.seed, "normalized_flux_max_deviation", norm_dev], [cfg.seed, "c_G", pert.c_G],
            [cfg.seed, "decay_exponent", pert.decay_exponent], [cfg.seed, "corrections", pert.corrections],
            [cfg.seed, "wronskian_deviation", w_dev]]
    prof = [[cfg.seed, r, g, f, abs(lv)] for r, g, f, lv in zip(pert.rho, pert.G, pert.flux, pert.laplacian)]
    return ScenarioResult(checks, {"warped_green.csv": (["seed", "quantity", "value"], rows),
                                   "green_profile.csv": (["seed", "rho", "G", "flux", "abs_laplacian"], prof)},
                          {}, {"rho": pert.rho, "flux": pert.flux, "lap": pert.laplacian, "N": N})


_RUNNERS = {
    "vanishing-path": _vanishing_path,
    "ty-family": _ty_family,
    "s1s2-loop": _s1s2_loop,
    "cyl-solve": _cyl_solve,
    "thimble-check": _thimble_check,
    "warped-green": _warped_green,
}


def compute_scenario(cfg: ScenarioConfig) -> ScenarioResult:
    """Run a scenario in memory."""
    try:
        return _RUNNERS[cfg.scenario](cfg)
    except SlagError as exc:
        exc.args = (f"scenario {cfg.scenario}: {exc.args[0] if exc.args else exc}",) + exc.args[1:]
        raise


def fan_paths(qd, zero, n_phases=4, max_length=1.0):
    """Geodesics leaving a simple zero in its three directions for several phases."""
    cfg = ShootConfig(max_length=max_length)
    out = []
    for k in range(3):
        for j in range(n_phases):
            theta = 2 * np.pi * j / n_phases
            path = shoot_from_zero(qd, zero, k, theta, cfg)
            out.append((f"k{k}_phase{j}", path))
    return out


def write_artifacts(result, out_dir, figures=False, scenario=None, seed=0):
    """Write CSV and SVG artifacts (and optional PNG figures); returns file names."""
    os.makedirs(out_dir, exist_ok=True)
    names = []
    for name, (header, rows) in sorted(result.tables.items()):
        with open(os.path.join(out_dir, name), "wb") as fh:
            fh.write(csv_bytes(header, rows))
        names.append(name)
    for name, data in sorted(result.svgs.items()):
        with open(os.path.join(out_dir, name), "wb") as fh:
            fh.write(data)
        names.append(name)
    if figures:
        from .figures import render_figures
        names.extend(render_figures(scenario, result, out_dir, seed))
    return names


def run_scenario(cfg: ScenarioConfig, out_dir=None, figures=False):
    """Run a scenario, write its artifacts and the JSON RunReport.

    Returns
    -------
    RunReport
    """
    t0 = time.perf_counter()
    result = compute_scenario(cfg)
    wall = time.perf_counter() - t0
    out_dir = cfg.out if out_dir is None else out_dir
    names = write_artifacts(result, out_dir, figures, cfg.scenario, cfg.seed)
    report = RunReport(cfg.scenario, result.checks, wall, __version__, cfg.echo(), cfg.seed,
                       sorted(names) + ["run_report.json"])
    with open(os.path.join(out_dir, "run_report.json"), "w", encoding="utf-8") as fh:
        fh.write(report.to_json())
    return report
