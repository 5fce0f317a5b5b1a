"""Post-hoc energy of a finished trajectory, dissipation audit and decay fitting.

The energy is

    E(t) = E0(t) + 1/2 int_{dOmega_N} m.nu [ P(t) + F(t) ] dsigma
    P(t) = int_0^t v(t - r)^2 lam([r, t]) dr
    F(t) = int_0^inf v(r)^2 lam([max(r, t), inf)) dr

The velocity trace between time nodes is the piecewise-linear interpolant of the
solver's centred differences, so both memory terms reduce to exact sums of cell
moments of w(r) = lam([r, inf)).  F(t) is cut at T_final and the missing tail
is bounded explicitly.
"""

from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import integrate

from .errors import DegenerateFit, TraceMissing
from .measure import DecayCertificate, MeasureRepr, apply_T
from .solver import Trajectory, standard_energy

_GX, _GW = np.polynomial.legendre.leggauss(8)
_GX = 0.5 * (_GX + 1.0)
_GW = 0.5 * _GW


# ---------------------------------------------------------------------------
# helpers


def _facet_coefficients(traj: Trajectory) -> np.ndarray:
    """Per damped node: sum over its facets of weight * m.nu."""
    g = traj.grid
    coef = np.zeros(g.n_nodes.size)
    np.add.at(coef, g.facet_node, g.facet_weight * g.facet_mdn)
    return coef


def cell_moments(fn, breakpoints, dt: float, n_cells: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """a, b, c with a_l = int (1-th)^2 f, b_l = int th(1-th) f, c_l = int th^2 f over [l dt, (l+1) dt].

    ``fn`` must be smooth between the given breakpoints (vectorised).
    """
    edges = np.arange(n_cells + 1) * dt
    pts = np.unique(np.concatenate([edges, [b for b in breakpoints if 0 < b < n_cells * dt]]))
    s1, s2 = pts[:-1], pts[1:]
    cell = np.minimum(np.floor(0.5 * (s1 + s2) / dt).astype(int), n_cells - 1)
    r = s1[:, None] + (s2 - s1)[:, None] * _GX[None, :]
    wts = (s2 - s1)[:, None] * _GW[None, :]
    vals = fn(r.ravel()).reshape(r.shape) * wts
    th = r / dt - cell[:, None]
    a = np.zeros(n_cells)
    b = np.zeros(n_cells)
    c = np.zeros(n_cells)
    np.add.at(a, cell, np.sum(vals * (1 - th) ** 2, axis=1))
    np.add.at(b, cell, np.sum(vals * th * (1 - th), axis=1))
    np.add.at(c, cell, np.sum(vals * th**2, axis=1))
    return a, b, c


def _tail_moments(lam: MeasureRepr, dt: float, n_cells: int):
    return cell_moments(lam.tail_array, lam.breakpoints, dt, n_cells)


def _density_moments(lam: MeasureRepr, dt: float, n_cells: int):
    """Moments of dlam itself: densities by quadrature, atoms split by linear interpolation."""
    a, b, c = cell_moments(lam.density, lam.breakpoints, dt, n_cells)
    for tau, w in lam.atoms:
        lag = tau / dt
        l = int(math.floor(lag + 1e-9))
        th = max(0.0, lag - l)
        if th < 1e-9 and l >= 1:
            l, th = l - 1, 1.0
        if l >= n_cells:
            continue
        a[l] += w * (1 - th) ** 2
        b[l] += w * th * (1 - th)
        c[l] += w * th**2
    return a, b, c


def _conv(kernel: np.ndarray, x: np.ndarray) -> np.ndarray:
    return np.convolve(kernel, x)[: x.size]


def _lagged_products(V: np.ndarray):
    """X_j = V_j^2, Y_j = V_j V_{j-1}, Z_j = V_{j-1}^2 with the j = 0 rows zeroed."""
    X = V**2
    Y = np.zeros_like(V)
    Z = np.zeros_like(V)
    Y[1:] = V[1:] * V[:-1]
    Z[1:] = V[:-1] ** 2
    X0 = X.copy()
    X0[0] = 0.0
    return X0, Y, Z


def _cell_square_integrals(V: np.ndarray, dt: float) -> np.ndarray:
    """int over cell m of the squared linear interpolant, m = 0..K-1."""
    return dt / 3.0 * (V[:-1] ** 2 + V[:-1] * V[1:] + V[1:] ** 2)


def _require_traces(traj: Trajectory, t: float) -> int:
    k = int(round(t / traj.dt))
    if abs(k * traj.dt - t) > 1e-9 * max(1.0, abs(t)):
        raise TraceMissing(f"t = {t} is not on the time grid")
    if k < 0 or k > traj.n_steps:
        raise TraceMissing(f"traces do not cover t = {t}")
    return k


# ---------------------------------------------------------------------------
# energy terms


def energy_standard(traj: Trajectory, t: float) -> float:
    """1/2 int (v^2 + |grad u|^2) from the snapshot at time t."""
    i = traj.snapshot_index(t)
    g = traj.grid
    return standard_energy(g, traj.snapshot_u[i].reshape(g.shape), traj.snapshot_v[i].reshape(g.shape))


def _past_series(traj: Trajectory, lam: MeasureRepr, V: np.ndarray, moments=None) -> np.ndarray:
    """P(t_k) for every k, for one (aggregated) trace V."""
    dt = traj.dt
    K = V.size - 1
    if K == 0:
        return np.zeros(1)
    a, b, c = moments if moments is not None else _tail_moments(lam, dt, K)
    X0, Y, Z = _lagged_products(V)
    main = _conv(a, X0) + 2.0 * _conv(b, Y) + _conv(c, Z)
    cum = np.concatenate([[0.0], np.cumsum(_cell_square_integrals(V, dt))])
    t = np.arange(K + 1) * dt
    open_tail = lam.tail_array(t + 1e-9 * dt)     # lam((t, inf))
    return main - open_tail * cum


def _future_series(traj: Trajectory, lam: MeasureRepr, V: np.ndarray, moments=None) -> np.ndarray:
    dt = traj.dt
    K = V.size - 1
    if K == 0:
        return np.zeros(1)
    a, b, c = moments if moments is not None else _tail_moments(lam, dt, K)
    G = a * V[:-1] ** 2 + 2.0 * b * V[:-1] * V[1:] + c * V[1:] ** 2
    ahead = np.concatenate([np.cumsum(G[::-1])[::-1], [0.0]])
    cum = np.concatenate([[0.0], np.cumsum(_cell_square_integrals(V, dt))])
    t = np.arange(K + 1) * dt
    closed_tail = lam.tail_array(t - 1e-9 * dt)   # lam([t, inf))
    return closed_tail * cum + ahead


def _aggregate(traj: Trajectory, fn, lam: MeasureRepr) -> np.ndarray:
    """Sum over damped nodes of weight * m.nu * fn(trace); quadratic in the trace."""
    coef = _facet_coefficients(traj)
    K = traj.n_steps
    out = np.zeros(K + 1)
    if not coef.size or (not lam.atoms and not lam.pieces):
        return out
    moments = _tail_moments(lam, traj.dt, K) if K else None
    for j, cj in enumerate(coef):
        if cj != 0.0:
            out += cj * fn(traj, lam, traj.traces[:, j], moments)
    return out


def memory_term_past(traj: Trajectory, lam: MeasureRepr, t: float) -> float:
    """int_{dOmega_N} m.nu int_0^t v(t - r)^2 lam([r, t]) dr dsigma."""
    k = _require_traces(traj, t)
    if k == 0:
        return 0.0
    sub = _truncate(traj, k)
    return float(_aggregate(sub, _past_series, lam)[k])


def _truncate(traj: Trajectory, k: int) -> Trajectory:
    from dataclasses import replace

    return replace(traj, n_steps=k, traces=traj.traces[: k + 1])


def future_truncation_bound(traj: Trajectory, lam: MeasureRepr) -> float:
    """sum |w m.nu| * sup v^2 * int_{T_final}^inf lam([r, inf)) dr."""
    g = traj.grid
    if not g.n_nodes.size or not traj.traces.size:
        return 0.0
    surface = float(np.sum(g.facet_weight * np.abs(g.facet_mdn)))
    vmax2 = float(np.max(traj.traces**2))
    tlam = apply_T(lam).tail(traj.T_final) if (lam.atoms or lam.pieces) else 0.0
    return surface * vmax2 * tlam


def memory_term_future(traj: Trajectory, lam: MeasureRepr, t: float, T_final: float | None = None) -> tuple[float, float]:
    """(int m.nu int_0^{T_final} v(r)^2 lam([max(r, t), inf)) dr dsigma, truncation bound)."""
    T_final = traj.T_final if T_final is None else T_final
    kf = _require_traces(traj, T_final)
    k = _require_traces(traj, t)
    if k > kf:
        raise TraceMissing("t must not exceed T_final")
    sub = _truncate(traj, kf)
    return float(_aggregate(sub, _future_series, lam)[k]), future_truncation_bound(sub, lam)


# ---------------------------------------------------------------------------
# reports


@dataclass
class EnergyReport:
    t: np.ndarray
    E0: np.ndarray
    E_mem_past: np.ndarray
    E_mem_future: np.ndarray
    E_total: np.ndarray
    trunc_bound: np.ndarray
    mono_violation: np.ndarray
    notes: list[str] = field(default_factory=list)

    @property
    def max_violation(self) -> float:
        return float(self.mono_violation.max()) if self.mono_violation.size else 0.0

    @property
    def violations(self) -> list[tuple[float, float]]:
        idx = np.nonzero(self.mono_violation > 0)[0]
        return [(float(self.t[i]), float(self.mono_violation[i])) for i in idx]

    def write_csv(self, path: Path) -> Path:
        path = Path(path)
        header = ["t", "E0", "E_mem_past", "E_mem_future", "E_total", "trunc_bound", "mono_violation"]
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for row in zip(self.t, self.E0, self.E_mem_past, self.E_mem_future, self.E_total,
                           self.trunc_bound, self.mono_violation):
                w.writerow([repr(float(x)) for x in row])
        return path

    @classmethod
    def read_csv(cls, path: Path) -> "EnergyReport":
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        return cls(*[data[:, i] for i in range(7)])


def full_energy(traj: Trajectory, cert: DecayCertificate | MeasureRepr) -> EnergyReport:
    """E_total at every time step of the trajectory.

    ``cert`` may be a certificate (its lambda is used) or any nonnegative measure,
    e.g. |mu| for the comparison energy.
    """
    lam = cert.lam if isinstance(cert, DecayCertificate) else cert
    if not lam.is_nonnegative:
        raise ValueError("the energy needs a nonnegative measure")
    past = _aggregate(traj, _past_series, lam)
    future = _aggregate(traj, _future_series, lam)
    bound = future_truncation_bound(traj, lam)
    total = traj.e0_steps + 0.5 * (past + future)
    viol = np.zeros_like(total)
    viol[1:] = np.maximum(0.0, np.diff(total))
    notes = []
    if traj.kernel_truncated_mass:
        notes.append(f"history truncation mass {traj.kernel_truncated_mass:.3g}")
    return EnergyReport(traj.times, traj.e0_steps.copy(), past, future, total,
                        np.full(total.shape, 0.5 * bound), viol, notes)


def flux_series(traj: Trajectory, lam: MeasureRepr) -> np.ndarray:
    """D(t_k) = int_{dOmega_N} m.nu (v^2 + int_0^t v(t - s)^2 dlam(s)) dsigma."""
    coef = _facet_coefficients(traj)
    K = traj.n_steps
    out = np.zeros(K + 1)
    if not coef.size:
        return out
    mom = _density_moments(lam, traj.dt, K) if K else (np.zeros(0),) * 3
    for j, cj in enumerate(coef):
        if cj == 0.0:
            continue
        V = traj.traces[:, j]
        q = np.zeros(K + 1)
        if K:
            X0, Y, Z = _lagged_products(V)
            a, b, c = mom
            q = _conv(a, X0) + 2.0 * _conv(b, Y) + _conv(c, Z)
        out += cj * (V**2 + q)
    return out


def dissipation_check(traj: Trajectory, report: EnergyReport, cert: DecayCertificate | MeasureRepr,
                      tol: float | None = None, max_samples: int = 400) -> float:
    """Largest C with E(S) - E(T) >= C * int_S^T D dt - tol over sampled pairs S < T.

    The default ``tol`` is the accumulated discrete monotonicity violation, the
    part of the inequality that the scheme only satisfies up to O(h).
    Returns ``inf`` when no pair carries flux.
    """
    lam = cert.lam if isinstance(cert, DecayCertificate) else cert
    D = flux_series(traj, lam)
    Dcum = np.concatenate([[0.0], np.cumsum(0.5 * traj.dt * (D[1:] + D[:-1]))])
    E = report.E_total
    if tol is None:
        tol = float(report.mono_violation.sum()) + 1e-12 * abs(float(E[0]))
    idx = np.unique(np.linspace(0, E.size - 1, min(E.size, max_samples)).round().astype(int))
    i, j = np.triu_indices(idx.size, k=1)
    dE = E[idx[i]] - E[idx[j]] + tol
    dF = Dcum[idx[j]] - Dcum[idx[i]]
    scale = max(float(Dcum[-1]), 1e-300)
    mask = dF > 1e-12 * scale
    if not np.any(mask) or Dcum[-1] == 0.0:
        return math.inf
    return max(0.0, float(np.min(dE[mask] / dF[mask])))


# ---------------------------------------------------------------------------
# decay fitting


@dataclass
class DecayFit:
    window: tuple[float, float]
    omega: float
    intercept: float
    r2: float
    komornik_T: float
    theorem_bound_ok: bool

    def to_json(self) -> dict:
        return {
            "omega": self.omega,
            "r2": self.r2,
            "komornik_T": self.komornik_T,
            "theorem_bound_ok": self.theorem_bound_ok,
            "window": [self.window[0], self.window[1]],
        }

    def write_json(self, path: Path) -> Path:
        Path(path).write_text(json.dumps(self.to_json(), indent=2) + "\n")
        return Path(path)


def fit_decay(report: EnergyReport, t_start: float, min_samples: int = 8) -> DecayFit:
    t = np.asarray(report.t, dtype=float)
    E = np.asarray(report.E_total, dtype=float)
    sel = t >= t_start - 1e-12
    tw, Ew = t[sel], E[sel]
    bad = np.nonzero(~(Ew > 0))[0]
    if bad.size:
        tw, Ew = tw[: bad[0]], Ew[: bad[0]]
    if tw.size < min_samples:
        raise DegenerateFit(f"only {tw.size} positive samples in the fit window")
    y = np.log(Ew)
    A = np.vstack([tw, np.ones_like(tw)]).T
    (slope, intercept), *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - (slope * tw + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else 1.0
    tail = np.concatenate([integrate.cumulative_trapezoid(Ew[::-1], -tw[::-1], initial=0.0)[::-1]])
    T = max(0.0, float(np.max(tail / Ew)))
    E0 = float(E[0])
    ok = False
    if T > 0:
        late = tw >= T
        ok = bool(np.all(Ew[late] <= E0 * np.exp(1.0 - tw[late] / T) * (1 + 1e-12))) if np.any(late) else False
    return DecayFit((float(tw[0]), float(tw[-1])), float(-slope), float(intercept), r2, T, ok)


# ---------------------------------------------------------------------------
# oracle


def nested_past_oracle(traj: Trajectory, lam: MeasureRepr, t: float) -> float:
    """int m.nu int_{[0,t]} (int_0^s v(t - r)^2 dr) dlam(s): the unrearranged nested form.

    The inner integral is exact for the piecewise-linear trace; the outer one uses
    adaptive quadrature on the densities and point evaluation at the atoms.
    """
    k = _require_traces(traj, t)
    dt = traj.dt
    coef = _facet_coefficients(traj)
    total = 0.0
    for j, cj in enumerate(coef):
        if cj == 0.0:
            continue
        V = traj.traces[: k + 1, j][::-1]          # V[l] = v(t - l dt)
        cells = np.concatenate([[0.0], np.cumsum(_cell_square_integrals(V, dt))]) if k else np.zeros(1)

        def G(s, V=V, cells=cells):
            if s <= 0:
                return 0.0
            l = min(int(s // dt), k - 1)
            x = s / dt - l
            A, B = V[l], V[l + 1]
            # int_0^x ((1-th)A + th B)^2 dth
            part = A * A * (x - x * x + x**3 / 3) + 2 * A * B * (x * x / 2 - x**3 / 3) + B * B * x**3 / 3
            return cells[l] + dt * part

        val = sum(w * G(tau) for tau, w in lam.atoms if tau <= t + 1e-9 * dt)
        for piece in lam.pieces:
            lo, hi = piece.a, min(piece.b, t)
            if hi <= lo:
                continue
            pts = np.arange(math.ceil(lo / dt), math.floor(hi / dt) + 1) * dt
            with warnings.catch_warnings():
                # roundoff warnings at <= 1e-11 relative are expected near the kinks of G
                warnings.simplefilter("ignore", integrate.IntegrationWarning)
                res, _ = integrate.quad(lambda s: G(s) * float(piece._local(s - piece.a)), lo, hi,
                                        points=pts[(pts > lo) & (pts < hi)][:50] if pts.size else None,
                                        limit=2000, epsabs=0.0, epsrel=1e-11)
            val += res
        total += cj * val
    return total
