"""Multiplier fields, admissibility constants and boundary partitions.

Supported domains are an interval, an axis-aligned rectangle and a disk.  The
rectangle has corners and the interval is one dimensional; both are accepted as
numerical conveniences and every report carries a note saying so.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .errors import EmptyDirichlet, OutOfDomain

SIGN_TOL = 1e-12


# ---------------------------------------------------------------------------
# domains


@dataclass(frozen=True)
class BoundarySample:
    point: np.ndarray
    normal: np.ndarray
    weight: float
    segment: str
    param: float  # arclength position along the segment


@dataclass(frozen=True)
class Interval1D:
    x_left: float = 0.0
    x_right: float = 1.0
    dim = 1

    def __post_init__(self):
        if not self.x_right > self.x_left:
            raise ValueError("interval needs x_right > x_left")

    def contains(self, x, tol: float = 1e-12) -> bool:
        x = np.atleast_1d(x)
        return bool(self.x_left - tol <= x[0] <= self.x_right + tol)

    def segments(self) -> dict[str, tuple[np.ndarray, np.ndarray, float]]:
        return {
            "left": (np.array([self.x_left]), np.array([-1.0]), 0.0),
            "right": (np.array([self.x_right]), np.array([1.0]), 0.0),
        }

    def boundary_samples(self, resolution: float = 64.0) -> list[BoundarySample]:
        return [
            BoundarySample(np.array([self.x_left]), np.array([-1.0]), 1.0, "left", 0.0),
            BoundarySample(np.array([self.x_right]), np.array([1.0]), 1.0, "right", 0.0),
        ]

    @property
    def notes(self) -> list[str]:
        return ["one-dimensional domain: n = 1 lies outside the n >= 2 setting"]

    def to_json(self) -> dict:
        return {"shape": "interval", "x_left": self.x_left, "x_right": self.x_right}


@dataclass(frozen=True)
class Rectangle2D:
    x_min: float = 0.0
    x_max: float = 1.0
    y_min: float = 0.0
    y_max: float = 1.0
    dim = 2

    def __post_init__(self):
        if not (self.x_max > self.x_min and self.y_max > self.y_min):
            raise ValueError("rectangle needs positive extents")

    def contains(self, x, tol: float = 1e-12) -> bool:
        return bool(
            self.x_min - tol <= x[0] <= self.x_max + tol and self.y_min - tol <= x[1] <= self.y_max + tol
        )

    def edges(self) -> dict[str, tuple[np.ndarray, np.ndarray, np.ndarray]]:
        """name -> (start, end, outward normal); edges run counter-clockwise."""
        a, b, c, d = self.x_min, self.x_max, self.y_min, self.y_max
        return {
            "bottom": (np.array([a, c]), np.array([b, c]), np.array([0.0, -1.0])),
            "right": (np.array([b, c]), np.array([b, d]), np.array([1.0, 0.0])),
            "top": (np.array([b, d]), np.array([a, d]), np.array([0.0, 1.0])),
            "left": (np.array([a, d]), np.array([a, c]), np.array([-1.0, 0.0])),
        }

    def boundary_samples(self, resolution: float = 64.0) -> list[BoundarySample]:
        out = []
        for name, (p0, p1, nu) in self.edges().items():
            length = float(np.linalg.norm(p1 - p0))
            n = max(2, int(math.ceil(length * resolution)))
            ds = length / n
            for i in range(n):
                s = (i + 0.5) * ds
                out.append(BoundarySample(p0 + (p1 - p0) * s / length, nu, ds, name, s))
        return out

    @property
    def notes(self) -> list[str]:
        return ["rectangle corners are not C2; corner conormals use the tangent of the N edge"]

    def to_json(self) -> dict:
        return {"shape": "rectangle", "x_min": self.x_min, "x_max": self.x_max, "y_min": self.y_min, "y_max": self.y_max}


@dataclass(frozen=True)
class Disk2D:
    center: tuple[float, float] = (0.0, 0.0)
    radius: float = 1.0
    dim = 2

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("disk needs a positive radius")

    def contains(self, x, tol: float = 1e-12) -> bool:
        return bool(np.hypot(x[0] - self.center[0], x[1] - self.center[1]) <= self.radius + tol)

    def boundary_samples(self, resolution: float = 64.0) -> list[BoundarySample]:
        n = max(16, int(math.ceil(2 * math.pi * self.radius * resolution)))
        dth = 2 * math.pi / n
        out = []
        for i in range(n):
            th = (i + 0.5) * dth
            nu = np.array([math.cos(th), math.sin(th)])
            out.append(BoundarySample(np.asarray(self.center) + self.radius * nu, nu, self.radius * dth, "circle", self.radius * th))
        return out

    @property
    def notes(self) -> list[str]:
        return []

    def to_json(self) -> dict:
        return {"shape": "disk", "center": list(self.center), "radius": self.radius}


Domain = Interval1D | Rectangle2D | Disk2D


# ---------------------------------------------------------------------------
# vector fields


def _sym(J: np.ndarray) -> np.ndarray:
    return 0.5 * (J + J.T)


def smallest_sym_eigenvalue(J: np.ndarray) -> float:
    """Smallest eigenvalue of the symmetric part of J (closed form up to n = 2)."""
    S = _sym(np.asarray(J, dtype=float))
    n = S.shape[0]
    if n == 1:
        return float(S[0, 0])
    if n == 2:
        half_tr = 0.5 * (S[0, 0] + S[1, 1])
        det = S[0, 0] * S[1, 1] - S[0, 1] * S[1, 0]
        return float(half_tr - math.sqrt(max(half_tr * half_tr - det, 0.0)))
    return float(np.linalg.eigvalsh(S)[0])


@dataclass(frozen=True)
class AffineField:
    """m(x) = A (x - x0)."""

    A: np.ndarray
    x0: np.ndarray

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        x0 = np.atleast_1d(np.asarray(self.x0, dtype=float))
        if A.shape != (x0.size, x0.size):
            raise ValueError("A must be n x n with n = len(x0)")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "x0", x0)

    @property
    def dim(self) -> int:
        return self.x0.size

    def value(self, x) -> np.ndarray:
        return self.A @ (np.atleast_1d(np.asarray(x, dtype=float)) - self.x0)

    def jacobian(self, x) -> np.ndarray:
        return self.A

    def scaled(self, t: float) -> "AffineField":
        return AffineField(t * self.A, self.x0)

    def to_json(self) -> dict:
        return {"variant": "affine", "A": self.A.tolist(), "x0": self.x0.tolist()}


@dataclass(frozen=True)
class PerturbedField:
    """m(x) = (d I + A_skew)(x - x0) + F(x), F sampled on a tensor grid.

    ``F_values`` has shape ``grid_shape + (n,)``; ``F_jacobians`` has shape
    ``grid_shape + (n, n)`` and defaults to finite differences of the samples.
    Both are interpolated multilinearly.
    """

    d: float
    A_skew: np.ndarray
    x0: np.ndarray
    grid: tuple[np.ndarray, ...]
    F_values: np.ndarray
    F_jacobians: np.ndarray | None = None
    lipschitz: float | None = None
    _interp: tuple = field(default=(), repr=False, compare=False)

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A_skew, dtype=float))
        x0 = np.atleast_1d(np.asarray(self.x0, dtype=float))
        n = x0.size
        grid = tuple(np.asarray(g, dtype=float) for g in self.grid)
        F = np.asarray(self.F_values, dtype=float)
        if not self.d > 0:
            raise ValueError("perturbed field needs d > 0")
        if A.shape != (n, n) or not np.allclose(A, -A.T, atol=1e-14):
            raise ValueError("A_skew must be a skew-symmetric n x n matrix")
        if len(grid) != n or F.shape != tuple(g.size for g in grid) + (n,):
            raise ValueError("F samples do not match the grid")
        if self.F_jacobians is None:
            J = np.empty(F.shape + (n,))
            for i in range(n):
                J[..., i, :] = np.stack(np.gradient(F[..., i], *grid, edge_order=2), axis=-1) if n > 1 else np.gradient(F[..., i], grid[0], edge_order=2)[..., None]
        else:
            J = np.asarray(self.F_jacobians, dtype=float)
        sym = 0.5 * (J + np.swapaxes(J, -1, -2))
        norms = np.linalg.norm(sym.reshape(-1, n, n), ord=2, axis=(1, 2))
        if norms.max() >= self.d / n:
            raise ValueError(f"sup |(grad F)^s| = {norms.max():.6g} must be < d/n = {self.d / n:.6g}")
        object.__setattr__(self, "A_skew", A)
        object.__setattr__(self, "x0", x0)
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "F_values", F)
        object.__setattr__(self, "F_jacobians", J)
        object.__setattr__(
            self,
            "_interp",
            (
                RegularGridInterpolator(grid, F, method="linear"),
                RegularGridInterpolator(grid, J, method="linear"),
            ),
        )

    @property
    def dim(self) -> int:
        return self.x0.size

    def _base(self) -> np.ndarray:
        return self.d * np.eye(self.dim) + self.A_skew

    def value(self, x) -> np.ndarray:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return self._base() @ (x - self.x0) + self._interp[0](x[None, :])[0]

    def jacobian(self, x) -> np.ndarray:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return self._base() + self._interp[1](x[None, :])[0]

    def scaled(self, t: float) -> "PerturbedField":
        return PerturbedField(t * self.d, t * self.A_skew, self.x0, self.grid, t * self.F_values, t * self.F_jacobians,
                              None if self.lipschitz is None else t * self.lipschitz)

    def to_json(self) -> dict:
        return {
            "variant": "perturbed",
            "d": self.d,
            "A_skew": self.A_skew.tolist(),
            "x0": self.x0.tolist(),
            "grid": [g.tolist() for g in self.grid],
            "F": self.F_values.tolist(),
        }


VectorFieldSpec = AffineField | PerturbedField


def field_eval(spec: VectorFieldSpec, x, dom: Domain | None = None) -> tuple[np.ndarray, float, float]:
    """Return (m(x), div m(x), lambda_m(x))."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if dom is not None and not dom.contains(x):
        raise OutOfDomain(f"{x.tolist()} is outside the domain")
    if isinstance(spec, PerturbedField):
        for g, xi in zip(spec.grid, x):
            if not (g[0] - 1e-12 <= xi <= g[-1] + 1e-12):
                raise OutOfDomain(f"{x.tolist()} is outside the sampled grid of F")
    J = spec.jacobian(x)
    return spec.value(x), float(np.trace(J)), smallest_sym_eigenvalue(J)


# ---------------------------------------------------------------------------
# admissibility


@dataclass
class AdmissibilityReport:
    inf_div: float
    sup_div_minus_2lam: float
    admissible: bool
    c_m: float | None
    a0: float | None
    margin: float
    lipschitz_slack: float = 0.0
    notes: list[str] = field(default_factory=list)

    def to_json(self) -> dict:
        out = {
            "inf_div": self.inf_div,
            "sup_div_minus_2lam": self.sup_div_minus_2lam,
            "admissible": self.admissible,
            "margin": self.margin,
            "lipschitz_slack": self.lipschitz_slack,
            "notes": list(self.notes),
        }
        if self.admissible:
            out["c_m"] = self.c_m
            out["a0"] = self.a0
        return out


def _report(inf_div: float, sup_g: float, slack: float, notes: list[str]) -> AdmissibilityReport:
    lo, hi = inf_div - slack, sup_g + slack
    ok = lo > hi
    return AdmissibilityReport(
        inf_div=lo,
        sup_div_minus_2lam=hi,
        admissible=ok,
        c_m=0.5 * (lo - hi) if ok else None,
        a0=0.5 * (lo + hi) if ok else None,
        margin=lo - hi,
        lipschitz_slack=slack,
        notes=notes,
    )


def check_admissibility(spec: VectorFieldSpec, dom: Domain) -> AdmissibilityReport:
    """inf div m > sup (div m - 2 lambda_m); constants c(m) and a0.

    Affine fields give exact constants.  Perturbed fields are sampled at the
    grid nodes inside the domain; both extrema are widened by a Lipschitz slack
    ``L * h * sqrt(n) / 2`` (L user-supplied or estimated by finite differences).
    """
    notes = list(dom.notes)
    if spec.dim != dom.dim:
        raise ValueError(f"field dimension {spec.dim} does not match domain dimension {dom.dim}")
    if isinstance(spec, AffineField):
        div = float(np.trace(spec.A))
        lam = smallest_sym_eigenvalue(spec.A)
        return _report(div, div - 2.0 * lam, 0.0, notes)
    grids = np.meshgrid(*spec.grid, indexing="ij")
    pts = np.stack([g.ravel() for g in grids], axis=-1)
    J = spec._base() + spec.F_jacobians.reshape(-1, spec.dim, spec.dim)
    div = np.trace(J, axis1=1, axis2=2)
    lam = np.array([smallest_sym_eigenvalue(j) for j in J])
    g = div - 2.0 * lam
    inside = np.array([dom.contains(p) for p in pts])
    shape = tuple(gr.size for gr in spec.grid)
    spacing = max(float(np.max(np.diff(gr))) for gr in spec.grid)
    if spec.lipschitz is not None:
        L = spec.lipschitz
    else:
        L = 0.0
        for arr in (div.reshape(shape), g.reshape(shape)):
            for ax, gr in enumerate(spec.grid):
                if gr.size > 1:
                    diffs = np.abs(np.diff(arr, axis=ax)) / np.expand_dims(np.diff(gr), tuple(i for i in range(spec.dim) if i != ax))
                    L = max(L, float(diffs.max()))
    slack = L * spacing * math.sqrt(spec.dim) / 2.0
    notes.append(f"perturbed field sampled on {inside.sum()} grid nodes")
    return _report(float(div[inside].min()), float(g[inside].max()), slack, notes)


# ---------------------------------------------------------------------------
# boundary partition


@dataclass
class Segment:
    name: str
    start: float
    end: float
    tag: str


@dataclass
class Interface:
    point: np.ndarray
    conormal: np.ndarray
    m_dot_n: float


@dataclass
class BoundaryPartition:
    samples: list[BoundarySample]
    tags: list[str]
    m_dot_nu: np.ndarray
    segments: list[Segment]
    interfaces: list[Interface]
    notes: list[str] = field(default_factory=list)

    @property
    def dirichlet_measure(self) -> float:
        return float(sum(s.weight for s, t in zip(self.samples, self.tags) if t == "D"))

    def tag_of(self, segment: str, param: float) -> str:
        """Tag of the boundary point at arclength ``param`` of ``segment``."""
        best = None
        for seg in self.segments:
            if seg.name != segment:
                continue
            if seg.start - 1e-12 <= param <= seg.end + 1e-12:
                return seg.tag
            dist = min(abs(param - seg.start), abs(param - seg.end))
            if best is None or dist < best[0]:
                best = (dist, seg.tag)
        if best is None:
            raise KeyError(segment)
        return best[1]

    def to_json(self) -> dict:
        return {
            "segments": [{"name": s.name, "start": s.start, "end": s.end, "tag": s.tag} for s in self.segments],
            "interfaces": [
                {"point": i.point.tolist(), "conormal": i.conormal.tolist(), "m_dot_n": i.m_dot_n} for i in self.interfaces
            ],
            "dirichlet_measure": self.dirichlet_measure,
            "notes": list(self.notes),
        }


def _runs(tags: Sequence[str]) -> list[tuple[int, int, str]]:
    runs = []
    start = 0
    for i in range(1, len(tags) + 1):
        if i == len(tags) or tags[i] != tags[start]:
            runs.append((start, i, tags[start]))
            start = i
    return runs


def _interface_conormal_rect(dom: Rectangle2D, seg_n: Segment) -> list[tuple[np.ndarray, np.ndarray]]:
    """Interface points at the ends of an N run with the outward tangent of the N part."""
    p0, p1, _ = dom.edges()[seg_n.name]
    length = float(np.linalg.norm(p1 - p0))
    t = (p1 - p0) / length
    return [(p0 + t * seg_n.start, -t), (p0 + t * seg_n.end, t)]


def _build_partition(spec: VectorFieldSpec, dom: Domain, samples, tags, mdn, notes) -> BoundaryPartition:
    segments: list[Segment] = []
    interfaces: list[Interface] = []
    if isinstance(dom, Interval1D):
        for s, t in zip(samples, tags):
            segments.append(Segment(s.segment, 0.0, 0.0, t))
        return BoundaryPartition(samples, tags, mdn, segments, interfaces, notes)
    if isinstance(dom, Rectangle2D):
        order = list(dom.edges())
        for name in order:
            idx = [i for i, s in enumerate(samples) if s.segment == name]
            p0, p1, _ = dom.edges()[name]
            length = float(np.linalg.norm(p1 - p0))
            for a, b, tag in _runs([tags[i] for i in idx]):
                start = 0.0 if a == 0 else 0.5 * (samples[idx[a - 1]].param + samples[idx[a]].param)
                end = length if b == len(idx) else 0.5 * (samples[idx[b - 1]].param + samples[idx[b]].param)
                segments.append(Segment(name, start, end, tag))
        # neighbours along the counter-clockwise loop
        n_seg = len(segments)
        for k, seg in enumerate(segments):
            if seg.tag != "N":
                continue
            prev_seg = segments[(k - 1) % n_seg]
            next_seg = segments[(k + 1) % n_seg]
            ends = _interface_conormal_rect(dom, seg)
            for (pt, n), other in ((ends[0], prev_seg), (ends[1], next_seg)):
                if other.tag == "D":
                    interfaces.append(Interface(pt, n, float(spec.value(pt) @ n)))
        return BoundaryPartition(samples, tags, mdn, segments, interfaces, notes)
    # disk: arcs of consecutive samples, the loop closes on itself
    runs = _runs(tags)
    if len(runs) > 1 and runs[0][2] == runs[-1][2]:
        a0, _, tag = runs[-1]
        runs = [(a0 - len(tags), runs[0][1], tag)] + runs[1:-1]
    dth = 2 * math.pi / len(tags)
    for a, b, tag in runs:
        segments.append(Segment("circle", dom.radius * a * dth, dom.radius * b * dth, tag))
    if len({t for t in tags}) > 1:
        for a, b, tag in runs:
            if tag != "N":
                continue
            for th, direction in ((a * dth, -1.0), (b * dth, 1.0)):
                pt = np.asarray(dom.center) + dom.radius * np.array([math.cos(th), math.sin(th)])
                tangent = direction * np.array([-math.sin(th), math.cos(th)])
                interfaces.append(Interface(pt, tangent, float(spec.value(pt) @ tangent)))
    return BoundaryPartition(samples, tags, mdn, segments, interfaces, notes)


def partition_boundary(spec: VectorFieldSpec, dom: Domain, resolution: float = 64.0) -> BoundaryPartition:
    """Propose N = {m.nu >= 0}, D = {m.nu < 0}, snapped to whole edges when possible.

    Samples with m.nu = 0 go to N unless that would leave D empty, in which case
    they go to D.  Rectangle edges whose samples all share one sign are tagged
    as a whole; mixed edges are split into runs.
    """
    samples = dom.boundary_samples(resolution)
    mdn = np.array([float(spec.value(s.point) @ s.normal) for s in samples])
    notes = list(dom.notes)
    tags = ["N" if v >= -SIGN_TOL else "D" for v in mdn]
    if not any(t == "D" for t in tags):
        zero = [abs(v) <= SIGN_TOL for v in mdn]
        if any(zero):
            tags = ["D" if z else "N" for z in zero]
            notes.append("samples with m.nu = 0 assigned to D so that the Dirichlet part is nonempty")
    if isinstance(dom, Rectangle2D):
        for name in dom.edges():
            idx = [i for i, s in enumerate(samples) if s.segment == name]
            vals = mdn[idx]
            if np.all(vals >= -SIGN_TOL) and np.any(vals > SIGN_TOL):
                for i in idx:
                    tags[i] = "N"
            elif np.all(vals <= SIGN_TOL) and np.any(vals < -SIGN_TOL):
                for i in idx:
                    tags[i] = "D"
    part = _build_partition(spec, dom, samples, tags, mdn, notes)
    if not part.dirichlet_measure > 0:
        raise EmptyDirichlet("m.nu > 0 on the whole boundary; the Dirichlet part would have zero measure")
    return part


def partition_from_tags(spec: VectorFieldSpec, dom: Domain, tags_by_segment: dict[str, str], resolution: float = 64.0) -> BoundaryPartition:
    """User partition given as segment name -> 'D' | 'N' (interval/rectangle edges)."""
    samples = dom.boundary_samples(resolution)
    mdn = np.array([float(spec.value(s.point) @ s.normal) for s in samples])
    missing = {s.segment for s in samples} - set(tags_by_segment)
    if missing:
        raise KeyError(f"partition lacks segments {sorted(missing)}")
    tags = [tags_by_segment[s.segment] for s in samples]
    return _build_partition(spec, dom, samples, tags, mdn, list(dom.notes))


@dataclass
class PartitionReport:
    passed: bool
    worst_sign_violation: float
    worst_interface_violation: float
    sign_violations: list[int]
    interface_violations: list[int]
    dirichlet_measure: float

    def to_json(self) -> dict:
        return {
            "passed": self.passed,
            "worst_sign_violation": self.worst_sign_violation,
            "worst_interface_violation": self.worst_interface_violation,
            "n_sign_violations": len(self.sign_violations),
            "n_interface_violations": len(self.interface_violations),
            "dirichlet_measure": self.dirichlet_measure,
        }


def verify_partition(spec: VectorFieldSpec, dom: Domain, part: BoundaryPartition) -> PartitionReport:
    """Re-check the sign conditions per sample and m.n <= 0 at D/N interfaces."""
    sign_bad, worst = [], 0.0
    for i, (s, tag) in enumerate(zip(part.samples, part.tags)):
        v = float(spec.value(s.point) @ s.normal)
        viol = -v if tag == "N" else v
        if viol > SIGN_TOL:
            sign_bad.append(i)
            worst = max(worst, viol)
    iface_bad, worst_i = [], 0.0
    for k, itf in enumerate(part.interfaces):
        v = float(spec.value(itf.point) @ itf.conormal)
        if v > SIGN_TOL:
            iface_bad.append(k)
            worst_i = max(worst_i, v)
    dm = part.dirichlet_measure
    return PartitionReport(not sign_bad and not iface_bad and dm > 0, worst, worst_i, sign_bad, iface_bad, dm)
