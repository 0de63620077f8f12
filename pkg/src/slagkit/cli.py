"""Command-line interface.

Exit codes: 0 all checks pass, 1 a check failed, 2 configuration error,
3 numerical non-convergence.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from .errors import ConfigError, InputError, NonConvergence, ZeroEncountered
from .scenarios.config import SCENARIOS, parse_config
from .scenarios.io import csv_bytes, emit_plot
from .scenarios.runner import fan_paths, run_scenario, zeros_table

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3

_SUBCOMMAND_SCENARIO = {
    "saddle": "vanishing-path",
    "scan-wall": "ty-family",
    "closed": "s1s2-loop",
    "cyl-solve": "cyl-solve",
    "thimble-check": "thimble-check",
    "green": "warped-green",
}


def _common(parser, suppress):
    d = argparse.SUPPRESS if suppress else None
    parser.add_argument("--config", metavar="PATH", default=d, help="JSON scenario configuration")
    parser.add_argument("--out", metavar="DIR", default=d, help="output directory")
    parser.add_argument("--seed", metavar="N", type=int, default=d, help="seed for randomized checks")
    parser.add_argument("--quiet", action="store_true", default=argparse.SUPPRESS if suppress else False,
                        help="print only failures and errors")


def build_parser():
    parser = argparse.ArgumentParser(prog="slagkit", description=__doc__.splitlines()[0])
    _common(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True)
    parent = argparse.ArgumentParser(add_help=False)
    _common(parent, suppress=True)
    sub.add_parser("zeros", parents=[parent], help="zeros of the configured differential")
    for name, scen in _SUBCOMMAND_SCENARIO.items():
        sub.add_parser(name, parents=[parent], help=f"run the {scen} scenario")
    fan = sub.add_parser("fan", parents=[parent], help="SVG fan of geodesics from a simple zero")
    fan.add_argument("--n-phases", type=int, default=4)
    fan.add_argument("--max-length", type=float, default=1.0)
    fan.add_argument("--zero-index", type=int, default=0)
    sub.add_parser("report", parents=[parent],
                   help="run the configured scenario (or all) with figures")
    return parser


def _load(args, scenario):
    if args.config:
        with open(args.config, "rb") as fh:
            cfg = parse_config(fh.read())
        if scenario is not None and cfg.scenario != scenario:
            raise ConfigError(f"subcommand expects scenario {scenario!r}, config has {cfg.scenario!r}")
    else:
        cfg = parse_config(json.dumps({"scenario": scenario or "vanishing-path"}).encode())
    if args.seed is not None:
        cfg.seed = args.seed
    if args.out is not None:
        cfg.out = args.out
    return cfg


def _say(args, msg, failure=False):
    if failure or not args.quiet:
        print(msg, file=sys.stderr if failure else sys.stdout)


def _print_report(args, report):
    for c in report.checks:
        _say(args, c.line(), failure=not c.passed)
    _say(args, f"{report.scenario}: {'PASS' if report.passed else 'FAIL'} "
               f"({report.wall_clock:.2f} s, artifacts in {report.config['out']})")


def _run(args):
    cmd = args.command
    if cmd in _SUBCOMMAND_SCENARIO:
        cfg = _load(args, _SUBCOMMAND_SCENARIO[cmd])
        report = run_scenario(cfg)
        _print_report(args, report)
        return EXIT_OK if report.passed else EXIT_FAIL
    if cmd == "report":
        if args.config:
            cfgs = [_load(args, None)]
        else:
            base = args.out or "report"
            cfgs = []
            for scen in SCENARIOS:
                c = parse_config(json.dumps({"scenario": scen}).encode())
                c.out = os.path.join(base, scen)
                if args.seed is not None:
                    c.seed = args.seed
                cfgs.append(c)
        ok = True
        for cfg in cfgs:
            report = run_scenario(cfg, figures=True)
            _print_report(args, report)
            ok &= report.passed
        return EXIT_OK if ok else EXIT_FAIL
    if cmd == "zeros":
        cfg = _load(args, None)
        qd = cfg.quadratic_differential()
        header, rows = zeros_table(qd)
        data = csv_bytes(header, rows)
        os.makedirs(cfg.out, exist_ok=True)
        with open(os.path.join(cfg.out, "zeros.csv"), "wb") as fh:
            fh.write(data)
        _say(args, data.decode().rstrip())
        return EXIT_OK
    if cmd == "fan":
        if args.config:
            cfg = _load(args, None)
        else:
            cfg = parse_config(json.dumps({"scenario": "vanishing-path", "differential": {
                "type": "polynomial", "coefficients": [[0, 0], [1, 0]]}}).encode())
            if args.out is not None:
                cfg.out = args.out
            if args.seed is not None:
                cfg.seed = args.seed
        qd = cfg.quadratic_differential()
        simple = [z for z in qd.zeros() if z.multiplicity == 1]
        if not simple:
            raise InputError("fan needs a simple zero")
        if not 0 <= args.zero_index < len(simple):
            raise InputError(f"zero index {args.zero_index} out of range (have {len(simple)} simple zeros)")
        z = simple[args.zero_index].location
        fan = fan_paths(qd, z, args.n_phases, args.max_length)
        os.makedirs(cfg.out, exist_ok=True)
        svg = emit_plot([(n, p.y) for n, p in fan], [zz.location for zz in qd.zeros()], seed=cfg.seed,
                        title="geodesic fan")
        with open(os.path.join(cfg.out, "fan.svg"), "wb") as fh:
            fh.write(svg)
        rows = [[cfg.seed, n, p.theta, p.length, p.termination] for n, p in fan]
        with open(os.path.join(cfg.out, "fan.csv"), "wb") as fh:
            fh.write(csv_bytes(["seed", "path", "theta", "length", "termination"], rows))
        _say(args, f"fan: {len(fan)} geodesics from {z:.6g} -> {os.path.join(cfg.out, 'fan.svg')}")
        return EXIT_OK
    raise AssertionError(cmd)


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return _run(args)
    except (ConfigError, InputError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NonConvergence, ZeroEncountered) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
