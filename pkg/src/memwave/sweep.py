"""The simulate -> energy -> fit pipeline, and parameter sweeps over it."""

from __future__ import annotations

import copy
import itertools
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from .energy import DecayFit, EnergyReport, dissipation_check, fit_decay, full_energy
from .errors import BlowUp, DegenerateFit, MemwaveError, ParseError, UnsupportedDomain, ValidationError
from .io import write_rows
from .scenario import Scenario, scenario_from_dict, set_path
from .solver import Trajectory

STATUS_OK = "ok"


@dataclass
class Analysis:
    trajectory: Trajectory
    report: EnergyReport
    fit: DecayFit
    dissipation_C: float


def analyze(sc: Scenario) -> Analysis:
    traj = sc.run()
    report = full_energy(traj, sc.certificate)
    fit = fit_decay(report, sc.fit_start)
    C = dissipation_check(traj, report, sc.certificate)
    return Analysis(traj, report, fit, C)


def worker_threads() -> int:
    env = os.environ.get("MEMWAVE_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return os.cpu_count() or 1


def run_point(template: dict, assignment: tuple[tuple[str, object], ...]) -> dict:
    """One sweep row; failures become a status instead of an exception."""
    obj = copy.deepcopy(template)
    for path, value in assignment:
        set_path(obj, path, value)
    row = {path: value for path, value in assignment}
    row.update(omega=math.nan, komornik_T=math.nan, mono_violation_max=math.nan)
    try:
        sc = scenario_from_dict(obj)
        res = analyze(sc)
    except (ValidationError, ParseError, UnsupportedDomain) as exc:
        row["status"] = f"validation: {exc}"
        return row
    except BlowUp as exc:
        row["status"] = f"blowup: {exc}"
        return row
    except DegenerateFit as exc:
        row["status"] = f"degenerate: {exc}"
        return row
    except MemwaveError as exc:
        row["status"] = f"error: {exc}"
        return row
    row.update(omega=res.fit.omega, komornik_T=res.fit.komornik_T,
               mono_violation_max=res.report.max_violation, status=STATUS_OK)
    return row


def run_sweep(template: dict, grid: dict[str, Sequence], workers: int | None = None) -> list[dict]:
    """Cartesian product of ``grid`` (dotted path -> values); rows sorted by parameters."""
    paths = sorted(grid)
    points = [tuple(zip(paths, vals)) for vals in itertools.product(*(list(grid[p]) for p in paths))]
    workers = min(workers or worker_threads(), max(1, len(points)))
    if workers == 1:
        rows = [run_point(template, pt) for pt in points]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(run_point, itertools.repeat(template), points))
    rows.sort(key=lambda r: tuple(r[p] for p in paths))
    return rows


def write_sweep(rows: list[dict], paths: Sequence[str], out: str | Path) -> Path:
    header = [*paths, "omega", "komornik_T", "mono_violation_max", "status"]
    return write_rows(out, header, ([r[h] for h in header] for r in rows))
