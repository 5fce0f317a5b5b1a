"""Explicit leapfrog solver for the wave equation with memory boundary damping.

Interior nodes use the standard second-order leapfrog update with the 3-point
(1D) or 5-point (2D) Laplacian.  On the damped part of the boundary the ghost
value is eliminated with the discrete condition::

    (u_ghost - u_inner) / (2h) + m.nu * (mu0 * v^k + int_0^t v(t - s) dmu(s)) = 0,
    v^k = (u^{k+1} - u^{k-1}) / (2 dt)

The instantaneous term is solved implicitly (one scalar equation per node);
the memory integral uses strictly past velocity samples from a ring buffer.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import BlowUp, CFLViolation, DelayUnderResolved, HistoryExhausted, UnsupportedDomain
from .geometry import BoundaryPartition, Disk2D, Interval1D, Rectangle2D, VectorFieldSpec
from .measure import INF, MeasureRepr, total_variation

BLOWUP_LIMIT = 1e12
CFL_MAX = 0.95


# ---------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class InitialData:
    """Initial displacement/velocity profile.

    kind:
      ``bump``      C-infinity bump A*exp(1 - 1/(1 - r^2)), r = |x - center| / radius;
                    ``direction`` = "standing" (u1 = 0) or, in 1D, "right"/"left"
                    (u1 = -/+ u0', a single travelling pulse)
      ``gaussian``  A*exp(-|x - center|^2 / width^2), u1 = 0
      ``eigenmode`` product of sin(k pi (x - x_min) / L) over the axes, u1 = 0
      ``custom``    nodal arrays ``u0`` and ``u1``
    """

    kind: str = "bump"
    center: tuple[float, ...] = (0.4,)
    radius: float = 0.2
    width: float = 0.1
    amplitude: float = 1.0
    direction: str = "standing"
    indices: tuple[int, ...] = (1,)
    u0: tuple = ()
    u1: tuple = ()

    @classmethod
    def from_json(cls, obj: dict) -> "InitialData":
        obj = dict(obj)
        for key in ("center", "indices"):
            if key in obj:
                obj[key] = tuple(np.atleast_1d(obj[key]).tolist())
        for key in ("u0", "u1"):
            if key in obj:
                obj[key] = tuple(np.asarray(obj[key], dtype=float).ravel().tolist())
        return cls(**obj)

    def to_json(self) -> dict:
        out = {"kind": self.kind, "amplitude": self.amplitude}
        if self.kind == "bump":
            out.update(center=list(self.center), radius=self.radius, direction=self.direction)
        elif self.kind == "gaussian":
            out.update(center=list(self.center), width=self.width)
        elif self.kind == "eigenmode":
            out.update(indices=list(self.indices))
        else:
            out.update(u0=list(self.u0), u1=list(self.u1))
        return out

    def evaluate(self, grid: "Grid") -> tuple[np.ndarray, np.ndarray]:
        X = grid.mesh()
        if self.kind == "custom":
            u0 = np.asarray(self.u0, dtype=float).reshape(grid.shape)
            u1 = np.asarray(self.u1, dtype=float).reshape(grid.shape) if self.u1 else np.zeros(grid.shape)
            return u0, u1
        c = np.asarray(self.center, dtype=float)
        if self.kind == "bump":
            disp = [(X[i] - c[i]) / self.radius for i in range(grid.dim)]
            r2 = sum(d**2 for d in disp)
            inside = r2 < 1.0
            safe = np.where(inside, 1.0 - r2, 1.0)
            u0 = np.where(inside, self.amplitude * np.exp(1.0 - 1.0 / safe), 0.0)
            if self.direction == "standing":
                return u0, np.zeros(grid.shape)
            if grid.dim != 1 or self.direction not in ("right", "left"):
                raise ValueError("travelling bumps are 1D with direction 'right' or 'left'")
            du = np.where(inside, u0 * (-2.0 * disp[0] / safe**2) / self.radius, 0.0)
            return u0, (-du if self.direction == "right" else du)
        if self.kind == "gaussian":
            r2 = sum((X[i] - c[i]) ** 2 for i in range(grid.dim))
            return self.amplitude * np.exp(-r2 / self.width**2), np.zeros(grid.shape)
        if self.kind == "eigenmode":
            u0 = np.full(grid.shape, self.amplitude)
            for i, k in enumerate(self.indices):
                lo, hi = grid.extent[i]
                u0 = u0 * np.sin(k * math.pi * (X[i] - lo) / (hi - lo))
            return u0, np.zeros(grid.shape)
        raise ValueError(f"unknown initial data kind {self.kind!r}")


@dataclass(frozen=True)
class SolverConfig:
    h: float
    T_final: float
    dt: float | None = None
    cfl: float = 0.9
    eps_hist: float = 1e-12
    snapshot_stride: int = 1
    initial: InitialData = field(default_factory=InitialData)

    def time_step(self, dim: int) -> float:
        if self.dt is None:
            if not 0 < self.cfl <= CFL_MAX:
                raise CFLViolation(f"CFL target {self.cfl} must lie in (0, {CFL_MAX}]")
            # shrink slightly so that T_final falls on the time grid
            target = self.cfl * self.h / math.sqrt(dim)
            return self.T_final / math.ceil(self.T_final / target - 1e-9)
        return float(self.dt)

    def check_cfl(self, dim: int) -> float:
        dt = self.time_step(dim)
        limit = CFL_MAX * self.h / math.sqrt(dim)
        if not 0 < dt <= limit * (1 + 1e-12):
            raise CFLViolation(f"CFL violated: dt = {dt:.6g} exceeds {CFL_MAX} h / sqrt(n) = {limit:.6g}")
        return dt

    def n_steps(self, dim: int) -> int:
        return int(round(self.T_final / self.time_step(dim)))


# ---------------------------------------------------------------------------
# grid


@dataclass
class Grid:
    dim: int
    h: float
    shape: tuple[int, ...]
    extent: tuple[tuple[float, float], ...]
    dirichlet: np.ndarray        # bool mask over nodes
    n_nodes: np.ndarray          # flat indices of damped (N) boundary nodes
    n_sum_mdn: np.ndarray        # sum of m.nu over the ghost directions of each N node
    facet_node: np.ndarray       # facet -> position in n_nodes
    facet_mdn: np.ndarray
    facet_weight: np.ndarray
    node_weight: np.ndarray      # trapezoid weights for nodal integrals
    notes: list[str] = field(default_factory=list)

    def mesh(self) -> list[np.ndarray]:
        axes = [np.linspace(lo, hi, n) for (lo, hi), n in zip(self.extent, self.shape)]
        return np.meshgrid(*axes, indexing="ij")

    def node_positions(self) -> np.ndarray:
        return np.stack([m.ravel() for m in self.mesh()], axis=-1)

    @property
    def boundary_measure_N(self) -> float:
        return float(self.facet_weight.sum())


def _n_cells(lo: float, hi: float, h: float) -> int:
    n = int(round((hi - lo) / h))
    if n < 2 or abs(n * h - (hi - lo)) > 1e-9 * (hi - lo):
        raise ValueError(f"extent {hi - lo} is not a multiple of h = {h}")
    return n


def build_grid(dom, spec: VectorFieldSpec, part: BoundaryPartition, h: float) -> Grid:
    if isinstance(dom, Disk2D):
        raise UnsupportedDomain("the finite-difference solver supports intervals and rectangles only")
    if isinstance(dom, Interval1D):
        m = _n_cells(dom.x_left, dom.x_right, h)
        shape = (m + 1,)
        extent = ((dom.x_left, dom.x_right),)
        dirichlet = np.zeros(shape, bool)
        nodes, sums, fn, fm, fw = [], [], [], [], []
        for idx, name, x, nu in ((0, "left", dom.x_left, -1.0), (m, "right", dom.x_right, 1.0)):
            if part.tag_of(name, 0.0) == "D":
                dirichlet[idx] = True
            else:
                mdn = float(spec.value([x])[0] * nu)
                fn.append(len(nodes))
                nodes.append(idx)
                sums.append(mdn)
                fm.append(mdn)
                fw.append(1.0)
        weight = np.full(shape, h)
        weight[[0, -1]] = 0.5 * h
        return Grid(1, h, shape, extent, dirichlet, np.array(nodes, int), np.array(sums), np.array(fn, int),
                    np.array(fm), np.array(fw), weight, [])
    mx = _n_cells(dom.x_min, dom.x_max, h)
    my = _n_cells(dom.y_min, dom.y_max, h)
    shape = (mx + 1, my + 1)
    extent = ((dom.x_min, dom.x_max), (dom.y_min, dom.y_max))
    xs = np.linspace(dom.x_min, dom.x_max, mx + 1)
    ys = np.linspace(dom.y_min, dom.y_max, my + 1)
    edges = dom.edges()

    def memberships(i, j):
        out = []
        if j == 0:
            out.append(("bottom", xs[i] - dom.x_min))
        if i == mx:
            out.append(("right", ys[j] - dom.y_min))
        if j == my:
            out.append(("top", dom.x_max - xs[i]))
        if i == 0:
            out.append(("left", dom.y_max - ys[j]))
        return out

    dirichlet = np.zeros(shape, bool)
    nodes, sums, fn, fm, fw = [], [], [], [], []
    for i in range(mx + 1):
        for j in range(my + 1):
            mem = memberships(i, j)
            if not mem:
                continue
            if any(part.tag_of(name, s) == "D" for name, s in mem):
                dirichlet[i, j] = True
                continue
            pos = np.array([xs[i], ys[j]])
            mval = spec.value(pos)
            k = len(nodes)
            nodes.append(i * (my + 1) + j)
            total = 0.0
            for name, _ in mem:
                mdn = float(mval @ edges[name][2])
                total += mdn
                fn.append(k)
                fm.append(mdn)
                fw.append(h if len(mem) == 1 else 0.5 * h)
            sums.append(total)
    wx = np.full(mx + 1, h)
    wx[[0, -1]] *= 0.5
    wy = np.full(my + 1, h)
    wy[[0, -1]] *= 0.5
    notes = ["corners shared by a D and an N edge are Dirichlet"]
    return Grid(2, h, shape, extent, dirichlet, np.array(nodes, int), np.array(sums), np.array(fn, int),
                np.array(fm), np.array(fw), np.outer(wx, wy), notes)


def laplacian_mirror(u: np.ndarray, h: float) -> np.ndarray:
    """Laplacian with missing neighbours replaced by the mirrored inner value."""
    p = np.pad(u, 1, mode="reflect")
    out = np.zeros_like(u)
    for ax in range(u.ndim):
        lo = [slice(1, -1)] * u.ndim
        hi = [slice(1, -1)] * u.ndim
        lo[ax] = slice(0, -2)
        hi[ax] = slice(2, None)
        out += p[tuple(lo)] + p[tuple(hi)] - 2.0 * u
    return out / h**2


def standard_energy(grid: Grid, u: np.ndarray, v: np.ndarray) -> float:
    """1/2 int v^2 + |grad u|^2: trapezoid for v^2, edge differences for the gradient."""
    kinetic = float(np.sum(grid.node_weight * v**2))
    grad = 0.0
    for ax in range(grid.dim):
        d = np.diff(u, axis=ax) / grid.h
        w = grid.h ** grid.dim
        if grid.dim == 2:
            other = 1 - ax
            tw = np.ones(u.shape[other])
            tw[[0, -1]] = 0.5
            shape = [1, 1]
            shape[other] = -1
            grad += float(np.sum(w * tw.reshape(shape) * d**2))
        else:
            grad += float(np.sum(w * d**2))
    return 0.5 * (kinetic + grad)


# ---------------------------------------------------------------------------
# memory kernel and history


@dataclass
class MemoryKernel:
    """Lag weights of the discrete convolution int_0^t v(t - s) dmu(s).

    Cell ``l`` covers lags ``s in [l dt, (l+1) dt]``; its contribution is
    ``p[l] v^{k-l} + q[l] v^{k-l-1}``.  ``p[0]`` multiplies the unknown current
    velocity and is folded into the implicit coefficient.
    """

    dt: float
    p: np.ndarray
    q: np.ndarray
    horizon: float
    truncated_mass: float

    @property
    def n_cells(self) -> int:
        return self.p.size

    @property
    def implicit_weight(self) -> float:
        return float(self.p[0]) if self.p.size else 0.0

    @property
    def lag_weights(self) -> np.ndarray:
        """w[j] = p[j] + q[j-1] for j = 0..n_cells."""
        w = np.zeros(self.n_cells + 1)
        w[:-1] += self.p
        w[1:] += self.q
        return w

    def sparse_lags(self) -> tuple[np.ndarray, np.ndarray]:
        w = self.lag_weights
        lags = np.nonzero(w)[0]
        lags = lags[lags >= 1]
        return lags, w[lags]


def memory_horizon(mu: MeasureRepr, eps_hist: float) -> tuple[float, float]:
    """Smallest practical horizon H with |mu|([H, inf)) <= eps_hist, plus that mass."""
    nu = total_variation(mu)
    if not nu.pieces or math.isfinite(nu.pieces[-1].b):
        return nu.support_end, 0.0
    H = max(1.0, nu.pieces[-1].a + 1.0)
    while nu.tail(H) > eps_hist:
        H *= 2.0
    lo, hi = nu.pieces[-1].a, H
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if nu.tail(mid) > eps_hist:
            lo = mid
        else:
            hi = mid
    return hi, nu.tail(hi)


def build_kernel(mu: MeasureRepr, dt: float, n_steps: int, eps_hist: float = 1e-12) -> MemoryKernel:
    H, trunc = memory_horizon(mu, eps_hist)
    # lags beyond the simulated window never meet a nonzero sample
    H_eff = min(H, (n_steps + 1) * dt)
    n_cells = max(1, int(math.ceil(H_eff / dt - 1e-9)))
    p = np.zeros(n_cells)
    q = np.zeros(n_cells)
    for tau, w in mu.atoms:
        lag = tau / dt
        n = int(round(lag))
        if lag < 1.0 - 1e-9:
            raise DelayUnderResolved(f"atom delay {tau} is shorter than dt = {dt}")
        if abs(lag - n) <= 1e-9 * max(1.0, lag):
            if n - 1 < n_cells:
                q[n - 1] += w
            continue
        l = int(math.floor(lag))
        if l >= n_cells:
            continue
        theta = lag - l
        p[l] += w * (1.0 - theta)
        q[l] += w * theta
    for piece in mu.pieces:
        hi = min(piece.b, n_cells * dt)
        if piece.a >= hi:
            continue
        first = int(math.floor(piece.a / dt))
        last = int(math.ceil(hi / dt))
        nodes = np.arange(first, last + 1) * dt
        pts = np.unique(np.clip(np.concatenate([nodes, [piece.a, hi]]), piece.a, hi))
        s1, s2 = pts[:-1], pts[1:]
        keep = s2 > s1
        s1, s2 = s1[keep], s2[keep]
        mid = 0.5 * (s1 + s2)
        cell = np.minimum(np.floor(mid / dt).astype(int), n_cells - 1)
        th1 = s1 / dt - cell
        th2 = s2 / dt - cell
        k1 = piece._local(s1 - piece.a)
        k2 = piece._local(s2 - piece.a)
        half = 0.5 * (s2 - s1)
        np.add.at(p, cell, half * (k1 * (1 - th1) + k2 * (1 - th2)))
        np.add.at(q, cell, half * (k1 * th1 + k2 * th2))
    return MemoryKernel(dt, p, q, H, trunc if H <= H_eff else 0.0)


class HistoryBuffer:
    """Ring buffer of boundary velocity samples, one column per damped node."""

    def __init__(self, capacity: int, n_nodes: int):
        self.capacity = max(1, int(capacity))
        self.data = np.zeros((self.capacity, n_nodes))
        self.count = 0

    def push(self, v: np.ndarray) -> None:
        self.data[self.count % self.capacity] = v
        self.count += 1

    def sample(self, index: int) -> np.ndarray:
        """v^index (zero for negative index, i.e. quiescent prehistory)."""
        if index < 0:
            return np.zeros(self.data.shape[1])
        if index >= self.count or self.count - index > self.capacity:
            raise HistoryExhausted(f"sample {index} is not in the buffer")
        return self.data[index % self.capacity]

    def lagged(self, lags: np.ndarray) -> np.ndarray:
        """Rows v^{count - lag}; prehistory rows are zero."""
        if lags.size and lags.max() > self.capacity:
            raise HistoryExhausted("lag exceeds buffer capacity")
        idx = (self.count - lags) % self.capacity
        rows = self.data[idx]
        if self.count < self.capacity:
            rows = np.where((self.count - lags >= 0)[:, None], rows, 0.0)
        return rows


def boundary_flux(kernel: MemoryKernel, history: HistoryBuffer, mu0: float,
                  lags: np.ndarray | None = None, weights: np.ndarray | None = None) -> tuple[float, np.ndarray]:
    """(coefficient of v^k, known remainder) of mu0 v^k + int_0^{t_k} v(t_k - s) dmu(s).

    ``history.count`` must equal the current step index k (samples v^0..v^{k-1}).
    """
    if lags is None:
        lags, weights = kernel.sparse_lags()
    k = history.count
    if lags.size:
        rem = weights @ history.lagged(lags)
    else:
        rem = np.zeros(history.data.shape[1])
    if 0 < k < kernel.n_cells and kernel.p[k] != 0.0:
        # cell k lies beyond s = t_k and is not part of int_0^{t_k}
        rem = rem - kernel.p[k] * history.sample(0)
    return mu0 + kernel.implicit_weight, rem


# ---------------------------------------------------------------------------
# stepping


@dataclass
class SimulationState:
    t: float
    u_prev: np.ndarray
    u_curr: np.ndarray
    k: int


@dataclass
class Trajectory:
    dt: float
    h: float
    n_steps: int
    grid: Grid
    traces: np.ndarray               # (n_steps + 1, n_N) boundary velocities v^0..v^K
    snapshot_steps: np.ndarray
    snapshot_u: np.ndarray
    snapshot_v: np.ndarray
    e0_steps: np.ndarray             # standard energy at every step
    kernel_truncated_mass: float = 0.0
    warnings: list[str] = field(default_factory=list)

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n_steps + 1) * self.dt

    @property
    def snapshot_times(self) -> np.ndarray:
        return self.snapshot_steps * self.dt

    @property
    def T_final(self) -> float:
        return self.n_steps * self.dt

    def snapshot_index(self, t: float) -> int:
        k = int(round(t / self.dt))
        hits = np.nonzero(self.snapshot_steps == k)[0]
        if not hits.size or abs(k * self.dt - t) > 1e-9 * max(1.0, t):
            from .errors import SnapshotMissing

            raise SnapshotMissing(f"no snapshot at t = {t}")
        return int(hits[0])

    def write_csv(self, out: Path) -> list[Path]:
        from .io import write_trajectory_csv

        return write_trajectory_csv(self, out)


def step(state: SimulationState, history: HistoryBuffer, kernel: MemoryKernel, grid: Grid, mu0: float,
         dt: float, lags=None, weights=None) -> tuple[SimulationState, np.ndarray]:
    """Advance one leapfrog step; returns the new state and v^k at all nodes."""
    u, up = state.u_curr, state.u_prev
    r_dt2 = dt * dt
    lap = laplacian_mirror(u, grid.h)
    new = 2.0 * u - up + r_dt2 * lap
    flat_new = new.reshape(-1)
    if grid.n_nodes.size:
        coef, rem = boundary_flux(kernel, history, mu0, lags, weights)
        S = grid.n_sum_mdn
        g = dt / grid.h * coef * S
        idx = grid.n_nodes
        u_f, up_f, lap_f = u.reshape(-1)[idx], up.reshape(-1)[idx], lap.reshape(-1)[idx]
        flat_new[idx] = (2.0 * u_f - up_f * (1.0 - g) + r_dt2 * lap_f - 2.0 * r_dt2 / grid.h * S * rem) / (1.0 + g)
    new[grid.dirichlet] = 0.0
    peak = float(np.max(np.abs(new))) if new.size else 0.0
    if not math.isfinite(peak) or peak > BLOWUP_LIMIT:
        raise BlowUp(f"solution blew up at t = {state.t + dt:.6g}", t=state.t + dt)
    v = (new - up) / (2.0 * dt)
    if grid.n_nodes.size:
        history.push(v.reshape(-1)[grid.n_nodes])
    return SimulationState(state.t + dt, u, new, state.k + 1), v


def _initial_previous(grid: Grid, u0, u1, kernel: MemoryKernel, mu0: float, dt: float) -> np.ndarray:
    lap = laplacian_mirror(u0, grid.h).reshape(-1).copy()
    if grid.n_nodes.size:
        coef = mu0 + kernel.implicit_weight
        lap[grid.n_nodes] -= 2.0 / grid.h * grid.n_sum_mdn * coef * u1.reshape(-1)[grid.n_nodes]
    prev = u0 - dt * u1 + 0.5 * dt * dt * lap.reshape(grid.shape)
    prev[grid.dirichlet] = 0.0
    return prev


def simulate(dom, spec: VectorFieldSpec, part: BoundaryPartition, mu: MeasureRepr, mu0: float,
             config: SolverConfig) -> Trajectory:
    """Run from t = 0 to T_final; deterministic for a given input."""
    dim = 1 if isinstance(dom, Interval1D) else 2
    dt = config.check_cfl(dim)
    grid = build_grid(dom, spec, part, config.h)
    K = int(round(config.T_final / dt))
    kernel = build_kernel(mu, dt, K, config.eps_hist)
    coef = mu0 + kernel.implicit_weight
    if grid.n_nodes.size and coef <= 0:
        raise ValueError("implicit boundary coefficient must be positive")
    u0, u1 = config.initial.evaluate(grid)
    notes = list(grid.notes)
    if np.any(np.abs(u0[grid.dirichlet]) > 0):
        notes.append("u0 does not vanish on the Dirichlet boundary; it is set to zero there")
    u0 = u0.copy()
    u0[grid.dirichlet] = 0.0
    if grid.n_nodes.size and np.any(np.abs(u1.reshape(-1)[grid.n_nodes]) > 1e-14):
        msg = "u1 does not vanish on the damped boundary (compatibility condition not met)"
        warnings.warn(msg)
        notes.append(msg)
    u1 = u1.copy()
    u1[grid.dirichlet] = 0.0

    lags, weights = kernel.sparse_lags()
    history = HistoryBuffer(int(lags.max()) + 1 if lags.size else 1, grid.n_nodes.size)
    state = SimulationState(0.0, _initial_previous(grid, u0, u1, kernel, mu0, dt), u0, 0)
    stride = max(1, int(config.snapshot_stride))
    snap_steps = sorted(set(range(0, K + 1, stride)) | {K})
    snap_set = set(snap_steps)
    n_nodes = int(np.prod(grid.shape))
    su = np.empty((len(snap_steps), n_nodes))
    sv = np.empty((len(snap_steps), n_nodes))
    traces = np.empty((K + 1, grid.n_nodes.size))
    e0 = np.empty(K + 1)
    si = 0
    for k in range(K + 1):
        try:
            new_state, v = step(state, history, kernel, grid, mu0, dt, lags, weights)
        except BlowUp as exc:
            raise BlowUp(str(exc), t=exc.t) from None
        traces[k] = v.reshape(-1)[grid.n_nodes]
        e0[k] = standard_energy(grid, state.u_curr, v)
        if k in snap_set:
            su[si] = state.u_curr.reshape(-1)
            sv[si] = v.reshape(-1)
            si += 1
        state = new_state
    return Trajectory(dt, config.h, K, grid, traces, np.array(snap_steps), su, sv, e0,
                      kernel.truncated_mass, notes)
