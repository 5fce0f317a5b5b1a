"""Scenario files: parsing, validation of the decay hypotheses, and the example library."""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np

from .errors import (
    CFLViolation,
    EmptyDirichlet,
    MemwaveError,
    NotStrictlyDominated,
    ParseError,
    UnknownExample,
    ValidationError,
)
from .geometry import (
    AdmissibilityReport,
    AffineField,
    BoundaryPartition,
    Disk2D,
    Interval1D,
    PartitionReport,
    PerturbedField,
    Rectangle2D,
    check_admissibility,
    partition_boundary,
    partition_from_tags,
    verify_partition,
)
from .measure import (
    DEFAULT_TOL,
    DecayCertificate,
    MeasureRepr,
    build_lambda,
    build_lambda_compact,
    find_alpha,
    total_variation,
)
from .solver import InitialData, SolverConfig, Trajectory, simulate

REQUIRED_KEYS = ("domain", "field", "partition", "measure", "mu0", "certificate", "solver", "analysis")


@dataclass
class Scenario:
    name: str
    domain: Interval1D | Rectangle2D | Disk2D
    field: AffineField | PerturbedField
    partition: BoundaryPartition
    partition_report: PartitionReport
    admissibility: AdmissibilityReport
    measure: MeasureRepr
    mu0: float
    certificate: DecayCertificate
    solver: SolverConfig
    fit_start: float
    source: dict

    @property
    def dim(self) -> int:
        return self.domain.dim

    def run(self) -> Trajectory:
        return simulate(self.domain, self.field, self.partition, self.measure, self.mu0, self.solver)


# ---------------------------------------------------------------------------
# parsing


def _domain_from_json(obj: dict):
    shape = obj.get("shape")
    if shape == "interval":
        return Interval1D(float(obj.get("x_left", 0.0)), float(obj.get("x_right", 1.0)))
    if shape == "rectangle":
        return Rectangle2D(float(obj.get("x_min", 0.0)), float(obj.get("x_max", 1.0)),
                           float(obj.get("y_min", 0.0)), float(obj.get("y_max", 1.0)))
    if shape == "disk":
        return Disk2D(tuple(float(c) for c in obj.get("center", (0.0, 0.0))), float(obj.get("radius", 1.0)))
    raise ParseError(f"unknown domain shape {shape!r}")


def _field_from_json(obj: dict):
    variant = obj.get("variant", "affine")
    if variant == "affine":
        return AffineField(np.asarray(obj["A"], dtype=float), np.asarray(obj["x0"], dtype=float))
    if variant == "perturbed":
        return PerturbedField(float(obj["d"]), np.asarray(obj["A_skew"], dtype=float), np.asarray(obj["x0"], dtype=float),
                              tuple(np.asarray(g, dtype=float) for g in obj["grid"]), np.asarray(obj["F"], dtype=float),
                              lipschitz=obj.get("lipschitz"))
    raise ParseError(f"unknown field variant {variant!r}")


def _solver_from_json(obj: dict) -> SolverConfig:
    dt = obj.get("dt", "auto")
    return SolverConfig(
        h=float(obj["h"]),
        T_final=float(obj["T_final"]),
        dt=None if dt in (None, "auto") else float(dt),
        cfl=float(obj.get("cfl", 0.9)),
        eps_hist=float(obj.get("eps_hist", 1e-12)),
        snapshot_stride=int(obj.get("snapshot_stride", 1)),
        initial=InitialData.from_json(obj.get("initial", {})),
    )


def parse_scenario_text(text: str) -> dict:
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, exc.lineno, exc.colno) from None
    if not isinstance(obj, dict):
        raise ParseError("scenario must be a JSON object", 1, 1)
    missing = [k for k in REQUIRED_KEYS if k not in obj]
    if missing:
        raise ParseError(f"missing top-level keys: {', '.join(missing)}")
    return obj


def load_scenario(path: str | Path) -> Scenario:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc.strerror}") from None
    return scenario_from_dict(parse_scenario_text(text), name=path.stem)


def scenario_from_dict(obj: dict, name: str = "scenario") -> Scenario:
    """Build and validate: field, partition, certificate, CFL, then delay resolution."""
    obj = copy.deepcopy(obj)
    try:
        dom = _domain_from_json(obj["domain"])
        field_spec = _field_from_json(obj["field"])
        mu = MeasureRepr.from_json(obj["measure"])
        mu0 = float(obj["mu0"])
        cert_opts = obj["certificate"]
        solver = _solver_from_json(obj["solver"])
        fit_start = float(obj["analysis"].get("fit_start", 0.0))
    except ParseError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, MemwaveError):
            raise
        raise ParseError(f"malformed scenario: {exc}") from None

    adm = check_admissibility(field_spec, dom)
    if not adm.admissible:
        raise ValidationError("Eq. 1", f"inf div m = {adm.inf_div:.6g} is not above sup(div m - 2 lambda_m) = "
                                       f"{adm.sup_div_minus_2lam:.6g}")

    part_spec = obj["partition"]
    try:
        if part_spec == "auto":
            part = partition_boundary(field_spec, dom)
        elif isinstance(part_spec, dict):
            part = partition_from_tags(field_spec, dom, part_spec)
        else:
            raise ParseError("partition must be \"auto\" or a segment -> tag object")
    except EmptyDirichlet as exc:
        raise ValidationError("Eq. 2", str(exc)) from None
    except KeyError as exc:
        raise ParseError(str(exc)) from None
    prep = verify_partition(field_spec, dom, part)
    if prep.sign_violations or prep.dirichlet_measure <= 0:
        raise ValidationError("Eq. 2", f"sign condition fails (worst violation {prep.worst_sign_violation:.3g}, "
                                       f"|D| = {prep.dirichlet_measure:.3g})")
    if prep.interface_violations:
        raise ValidationError("Eq. 3", f"m.n > 0 at a D/N interface (worst {prep.worst_interface_violation:.3g})")

    cert = build_certificate(mu, mu0, cert_opts)

    try:
        dt = solver.check_cfl(dom.dim)
    except CFLViolation as exc:
        raise ValidationError("CFL", str(exc)) from None
    taus = [t for t, _ in mu.atoms]
    if taus and min(taus) < dt * (1 - 1e-9):
        raise ValidationError("delay resolution", f"smallest delay {min(taus)} is below dt = {dt:.6g}")
    return Scenario(name, dom, field_spec, part, prep, adm, mu, mu0, cert, solver, fit_start, obj)


def build_certificate(mu: MeasureRepr, mu0: float, opts: dict) -> DecayCertificate:
    if not mu0 > 0:
        raise ValidationError("Eq. 5", f"mu0 = {mu0} must be positive")
    nu = total_variation(mu)
    if not nu.total_mass < mu0:
        raise ValidationError("Eq. 5", f"|mu|(R+) = {nu.total_mass:.6g} is not below mu0 = {mu0}")
    builder = opts.get("builder", "series")
    tol = float(opts.get("tol", DEFAULT_TOL))
    alpha = opts.get("alpha", "auto")
    try:
        if builder == "compact":
            return build_lambda_compact(mu, mu0)
        if builder != "series":
            raise ParseError(f"unknown certificate builder {builder!r}")
        a = find_alpha(mu, mu0) if alpha == "auto" else float(alpha)
        cert = build_lambda(mu, mu0, a, tol)
    except NotStrictlyDominated as exc:
        raise ValidationError("Eq. 5", str(exc)) from None
    except MemwaveError as exc:
        if isinstance(exc, (ParseError, ValidationError)):
            raise
        raise ValidationError("Eq. 5", str(exc)) from None
    if not cert.lambda_mass + cert.tail_bound < mu0:
        raise ValidationError("Eq. 5", f"lambda(R+) + tail = {cert.lambda_mass + cert.tail_bound:.6g} >= mu0")
    return cert


# ---------------------------------------------------------------------------
# examples

_BASE = {
    "domain": {"shape": "interval", "x_left": 0.0, "x_right": 1.0},
    "field": {"variant": "affine", "A": [[1.0]], "x0": [0.0]},
    "partition": "auto",
    "certificate": {"alpha": "auto", "tol": 1e-10, "builder": "series"},
    "solver": {
        "h": 1.0 / 256,
        "dt": "auto",
        "T_final": 20.0,
        "snapshot_stride": 64,
        "initial": {"kind": "bump", "center": [0.4], "radius": 0.2, "amplitude": 1.0, "direction": "standing"},
    },
    "analysis": {"fit_start": 2.0},
}

EXAMPLES: dict[str, dict[str, Any]] = {
    # convolution kernel 0.4 exp(-2 s); lambda(R+) = 0.4 / (2 - alpha)
    "ex1_expkernel": {"mu0": 1.0, "measure": {"atoms": [], "pieces": [
        {"a": 0.0, "b": "inf", "kind": "exp", "c": 0.4, "beta": 2.0}]}},
    # three delays, total variation 0.45
    "ex2_diraccomb": {"mu0": 1.0, "measure": {"atoms": [
        {"tau": 0.3, "weight": 0.2}, {"tau": 0.7, "weight": -0.15}, {"tau": 1.1, "weight": 0.1}], "pieces": []}},
    # piecewise-constant kernel with sign-definite pieces, int |k| = 0.35
    "ex3_roughkernel": {"mu0": 1.0, "measure": {"atoms": [], "pieces": [
        {"a": 0.0, "b": 0.5, "kind": "poly", "coeffs": [0.3]},
        {"a": 0.5, "b": 1.0, "kind": "poly", "coeffs": [-0.2]},
        {"a": 1.0, "b": 2.0, "kind": "poly", "coeffs": [0.1]}]}},
    # kernel 0.8 s cut to [0.2, 0.8), mass 0.24
    "ex4_truncated": {"mu0": 1.0, "measure": {"atoms": [], "pieces": [
        {"a": 0.2, "b": 0.8, "kind": "poly", "coeffs": [0.0, 0.8]}]}},
    # single delay 0.4 at tau = 0.5
    "ex5_delay": {"mu0": 1.0, "measure": {"atoms": [{"tau": 0.5, "weight": 0.4}], "pieces": []}},
}

_ALIASES = {k.split("_")[0]: k for k in EXAMPLES}


def example_config(name: str) -> dict:
    key = _ALIASES.get(name, name)
    if key not in EXAMPLES:
        raise UnknownExample(f"unknown example {name!r}; choose from {', '.join(sorted(EXAMPLES))}")
    cfg = copy.deepcopy(_BASE)
    cfg.update(copy.deepcopy(EXAMPLES[key]))
    return {"name": key, **cfg}


def cmd_examples(name: str, out: str | Path) -> Path:
    cfg = example_config(name)
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"{cfg['name']}.json"
    path.write_text(json.dumps(cfg, indent=2) + "\n")
    return path


def set_path(obj: dict, dotted: str, value) -> dict:
    """Assign ``value`` at a dotted path such as ``measure.atoms.0.weight``."""
    parts = dotted.split(".")
    cur = obj
    for p in parts[:-1]:
        cur = cur[int(p)] if isinstance(cur, list) else cur.setdefault(p, {})
    last = parts[-1]
    if isinstance(cur, list):
        cur[int(last)] = value
    else:
        cur[last] = value
    return obj

