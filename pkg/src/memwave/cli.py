"""memwave command line: check | simulate | analyze | sweep | examples.

Exit codes: 0 success, 2 validation failure, 3 blow-up, 4 degenerate analysis.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .errors import BlowUp, DegenerateFit, ParseError, UnknownExample, UnsupportedDomain, ValidationError
from .io import energy_svg
from .measure import dyadic_intervals, verify_certificate
from .scenario import EXAMPLES, cmd_examples, load_scenario, parse_scenario_text
from .sweep import analyze, run_sweep, write_sweep

EXIT_OK, EXIT_INVALID, EXIT_BLOWUP, EXIT_DEGENERATE = 0, 2, 3, 4


def _parse_values(text: str) -> list:
    """'0,0.2,0.4' or 'start:stop:count' (inclusive linspace)."""
    if text.count(":") == 2:
        a, b, n = text.split(":")
        # 12 significant digits keep 0.2 from printing as 0.19999999999999998
        return [float(f"{v:.12g}") for v in np.linspace(float(a), float(b), int(n))]
    out = []
    for tok in text.split(","):
        tok = tok.strip()
        try:
            out.append(float(tok))
        except ValueError:
            out.append(tok)
    return out


def cmd_check(args) -> int:
    sc = load_scenario(args.scenario)
    horizon = max(sc.certificate.lam.support_end, sc.measure.support_end)
    if not np.isfinite(horizon) or horizon <= 0:
        horizon = 10.0 / sc.certificate.alpha
    ver = verify_certificate(sc.certificate, sc.measure, dyadic_intervals(horizon, 8))
    report = {
        "scenario": sc.name,
        "admissibility": sc.admissibility.to_json(),
        "partition": sc.partition_report.to_json(),
        "certificate": {k: v for k, v in sc.certificate.to_json().items() if k != "lambda"},
        "verification": ver.to_json(),
    }
    print(json.dumps(report, indent=2))
    return EXIT_OK if ver.passed else EXIT_INVALID


def cmd_simulate(args) -> int:
    sc = load_scenario(args.scenario)
    traj = sc.run()
    out = Path(args.out)
    files = traj.write_csv(out)
    summary = {"scenario": sc.name, "dt": traj.dt, "h": traj.h, "n_steps": traj.n_steps,
               "damped_nodes": [int(n) for n in traj.grid.n_nodes], "notes": traj.warnings}
    (out / "trajectory.json").write_text(json.dumps(summary, indent=2) + "\n")
    print(f"wrote {len(files) + 1} files to {out}")
    return EXIT_OK


def cmd_analyze(args) -> int:
    sc = load_scenario(args.scenario)
    res = analyze(sc)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    res.report.write_csv(out / "energy.csv")
    fit = res.fit.to_json()
    fit["dissipation_C"] = res.dissipation_C if np.isfinite(res.dissipation_C) else "inf"
    (out / "fit.json").write_text(json.dumps(fit, indent=2) + "\n")
    (out / "energy.svg").write_text(energy_svg(res.report.t, res.report.E_total, title=f"{sc.name}: log E(t)"))
    print(json.dumps(fit, indent=2))
    return EXIT_OK


def cmd_sweep(args) -> int:
    template = parse_scenario_text(Path(args.template).read_text())
    grid = {}
    for item in args.param:
        if "=" not in item:
            raise ParseError(f"--param expects path=values, got {item!r}")
        path, vals = item.split("=", 1)
        grid[path] = _parse_values(vals)
    rows = run_sweep(template, grid, args.workers)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    path = write_sweep(rows, sorted(grid), out / "sweep.csv")
    print(f"{len(rows)} runs -> {path}")
    return EXIT_OK


def cmd_examples_main(args) -> int:
    names = sorted(EXAMPLES) if args.name in (None, "all") else [args.name]
    for n in names:
        print(cmd_examples(n, args.out))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="memwave", description="wave equation with memory boundary damping")
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("check", help="validate a scenario and verify its certificate")
    c.add_argument("scenario")
    c.set_defaults(func=cmd_check)

    s = sub.add_parser("simulate", help="run the solver and write traces")
    s.add_argument("scenario")
    s.add_argument("--out", default="out")
    s.set_defaults(func=cmd_simulate)

    a = sub.add_parser("analyze", help="energy report, decay fit and plot")
    a.add_argument("scenario")
    a.add_argument("--out", default="out")
    a.set_defaults(func=cmd_analyze)

    w = sub.add_parser("sweep", help="run a template over a parameter grid")
    w.add_argument("template")
    w.add_argument("--param", action="append", default=[], metavar="PATH=VALUES",
                   help="dotted JSON path and values, e.g. measure.atoms.0.weight=0:1.2:7")
    w.add_argument("--workers", type=int, default=None)
    w.add_argument("--out", default="out")
    w.set_defaults(func=cmd_sweep)

    e = sub.add_parser("examples", help="write example scenario files")
    e.add_argument("name", nargs="?", default="all")
    e.add_argument("--out", default=".")
    e.set_defaults(func=cmd_examples_main)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValidationError, ParseError, UnknownExample, UnsupportedDomain) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except BlowUp as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BLOWUP
    except DegenerateFit as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE


if __name__ == "__main__":
    sys.exit(main())
