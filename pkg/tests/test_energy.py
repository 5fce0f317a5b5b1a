import json
import math
from dataclasses import replace

import numpy as np
import pytest

from memwave.energy import (
    EnergyReport,
    dissipation_check,
    energy_standard,
    fit_decay,
    full_energy,
    memory_term_future,
    memory_term_past,
    nested_past_oracle,
)
from memwave.errors import DegenerateFit, SnapshotMissing, TraceMissing
from memwave.geometry import AffineField, Interval1D, partition_boundary, partition_from_tags
from memwave.measure import DensityPiece, MeasureRepr, build_lambda, build_lambda_compact, find_alpha, total_variation
from memwave.solver import InitialData, SolverConfig, simulate

LINE = Interval1D(0.0, 1.0)
M1 = AffineField(np.eye(1), np.zeros(1))
PART1 = partition_boundary(M1, LINE)
UNIFORM = MeasureRepr((), (DensityPiece.poly(0.0, 1.0, [1.0]),))


def synthetic(values, dt):
    """A trajectory carrying the given trace on the single damped node (m.nu = 1, weight 1)."""
    base = simulate(LINE, M1, PART1, MeasureRepr.zero(), 1.0,
                    SolverConfig(h=1 / 8, dt=1 / 16, T_final=0.125))
    values = np.asarray(values, dtype=float)
    K = values.size - 1
    return replace(base, dt=dt, n_steps=K, traces=values[:, None], e0_steps=np.zeros(K + 1),
                   snapshot_steps=np.array([0]), snapshot_u=base.snapshot_u[:1], snapshot_v=base.snapshot_v[:1])


@pytest.fixture(scope="module")
def delay_run():
    mu = MeasureRepr.dirac(0.5, 0.4)
    cert = build_lambda(mu, 1.0, find_alpha(mu, 1.0))
    tr = simulate(LINE, M1, PART1, mu, 1.0,
                  SolverConfig(h=1 / 128, T_final=6.0, snapshot_stride=16,
                               initial=InitialData(center=(0.4,), radius=0.2)))
    return mu, cert, tr


# ---------------------------------------------------------------------------
# standard energy


def test_energy_standard_of_eigenmode():
    part = partition_from_tags(M1, LINE, {"left": "D", "right": "D"})
    tr = simulate(LINE, M1, part, MeasureRepr.zero(), 1.0,
                  SolverConfig(h=1 / 128, T_final=0.5, initial=InitialData(kind="eigenmode", indices=(1,))))
    assert energy_standard(tr, 0.0) == pytest.approx(np.pi**2 / 4, abs=3.0 / 128**2)


def test_energy_standard_needs_snapshot(delay_run):
    _, _, tr = delay_run
    with pytest.raises(SnapshotMissing):
        energy_standard(tr, tr.dt * 3)


def test_zero_state_energy():
    tr = simulate(LINE, M1, PART1, MeasureRepr.zero(), 1.0,
                  SolverConfig(h=1 / 16, T_final=0.5, initial=InitialData(amplitude=0.0)))
    assert energy_standard(tr, 0.0) == 0.0


# ---------------------------------------------------------------------------
# memory terms on synthetic traces


def test_past_term_uniform_measure_constant_trace():
    tr = synthetic(np.ones(201), 0.01)
    # int_0^2 lam([r, 2]) dr = int_0^1 (1 - r) dr
    assert memory_term_past(tr, UNIFORM, 2.0) == pytest.approx(0.5, abs=1e-12)


def test_future_term_uniform_measure_constant_trace():
    tr = synthetic(np.ones(201), 0.01)
    val, bound = memory_term_future(tr, UNIFORM, 0.0, 2.0)
    assert val == pytest.approx(0.5, abs=1e-12)
    assert bound == 0.0


def test_zero_measure_terms():
    tr = synthetic(np.ones(11), 0.1)
    assert memory_term_past(tr, MeasureRepr.zero(), 1.0) == 0.0
    assert memory_term_future(tr, MeasureRepr.zero(), 0.5) == (0.0, 0.0)


def test_traces_must_cover_time():
    tr = synthetic(np.ones(11), 0.1)
    with pytest.raises(TraceMissing):
        memory_term_past(tr, UNIFORM, 1.5)
    with pytest.raises(TraceMissing):
        memory_term_past(tr, UNIFORM, 0.55)


def test_future_term_vanishes_beyond_compact_support():
    rng = np.random.default_rng(5)
    tr = synthetic(rng.normal(size=301), 0.01)
    lam = build_lambda_compact(MeasureRepr.dirac(0.5, 0.3), 1.0).lam
    for t in (0.6, 1.5, 3.0):
        val, _ = memory_term_future(tr, lam, t)
        assert val == 0.0


def test_future_bound_covers_missing_tail():
    V = np.ones(101)
    lam = MeasureRepr((), (DensityPiece.exponential(0.0, math.inf, 1.0, 1.0),))
    short = synthetic(V, 0.01)
    val_short, bound = memory_term_future(short, lam, 0.5)
    long_ = synthetic(np.ones(3001), 0.01)
    val_long, _ = memory_term_future(long_, lam, 0.5)
    assert val_short <= val_long <= val_short + bound + 1e-12


def _random_measure(rng):
    atoms = [(float(t), float(rng.uniform(0.05, 0.5))) for t in np.sort(rng.uniform(0.05, 1.5, rng.integers(0, 3)))]
    a = float(rng.uniform(0.0, 0.5))
    pieces = [DensityPiece.poly(a, a + float(rng.uniform(0.2, 1.0)), [float(rng.uniform(0.1, 1)), float(rng.uniform(0, 1))])]
    if rng.random() < 0.5:
        pieces.append(DensityPiece.exponential(2.0, math.inf, float(rng.uniform(0.1, 1)), float(rng.uniform(0.5, 3))))
    return MeasureRepr.build(atoms, pieces)


def test_past_term_matches_nested_quadrature():
    rng = np.random.default_rng(17)
    dt = 0.01
    s = np.arange(401) * dt
    for _ in range(10):
        V = np.sin(rng.uniform(1, 8) * s + rng.uniform(0, 6)) * np.exp(-rng.uniform(0, 0.5) * s)
        tr = synthetic(V, dt)
        lam = _random_measure(rng)
        t = int(rng.integers(20, 400)) * dt
        a = memory_term_past(tr, lam, t)
        b = nested_past_oracle(tr, lam, t)
        assert a == pytest.approx(b, rel=1e-6)


# ---------------------------------------------------------------------------
# full energy


def test_zero_measure_energy_is_standard():
    tr = simulate(LINE, M1, PART1, MeasureRepr.zero(), 1.0,
                  SolverConfig(h=1 / 64, T_final=2.0, initial=InitialData(center=(0.4,))))
    rep = full_energy(tr, MeasureRepr.zero())
    assert np.array_equal(rep.E_total, rep.E0)


def test_energy_terms_nonnegative(delay_run):
    mu, cert, tr = delay_run
    rep = full_energy(tr, cert)
    assert np.all(rep.E_mem_past >= -1e-14)
    assert np.all(rep.E_mem_future >= -1e-14)
    assert np.allclose(rep.E_total, rep.E0 + 0.5 * (rep.E_mem_past + rep.E_mem_future), rtol=0, atol=1e-13)


def test_smaller_measure_gives_smaller_energy(delay_run):
    mu, cert, tr = delay_run
    big = full_energy(tr, cert).E_total
    small = full_energy(tr, total_variation(mu)).E_total
    assert np.all(small <= big + 1e-14)


def test_report_csv_round_trip(tmp_path, delay_run):
    _, cert, tr = delay_run
    rep = full_energy(tr, cert)
    path = rep.write_csv(tmp_path / "energy.csv")
    header = path.read_text().splitlines()[0]
    assert header == "t,E0,E_mem_past,E_mem_future,E_total,trunc_bound,mono_violation"
    back = EnergyReport.read_csv(path)
    assert np.array_equal(back.E_total, rep.E_total)


# ---------------------------------------------------------------------------
# dissipation


def test_dissipation_check_positive(delay_run):
    mu, cert, tr = delay_run
    rep = full_energy(tr, cert)
    assert dissipation_check(tr, rep, cert) > 0


def test_dissipation_check_no_memory():
    tr = simulate(LINE, M1, PART1, MeasureRepr.zero(), 1.0,
                  SolverConfig(h=1 / 128, T_final=3.0, initial=InitialData(center=(0.4,))))
    rep = full_energy(tr, MeasureRepr.zero())
    C = dissipation_check(tr, rep, MeasureRepr.zero())
    # exact continuous value is mu0 = 1; the discrete check should be near it
    assert 0.5 < C <= 1.1


def test_dissipation_check_zero_solution():
    tr = simulate(LINE, M1, PART1, MeasureRepr.zero(), 1.0,
                  SolverConfig(h=1 / 16, T_final=0.5, initial=InitialData(amplitude=0.0)))
    rep = full_energy(tr, MeasureRepr.zero())
    assert dissipation_check(tr, rep, MeasureRepr.zero()) == math.inf


# ---------------------------------------------------------------------------
# decay fits


def _report(t, E):
    z = np.zeros_like(t)
    return EnergyReport(t, E, z, z, E, z, z)


def test_fit_recovers_planted_rate():
    t = np.linspace(0, 20, 2001)
    fit = fit_decay(_report(t, np.exp(-2 * t)), 2.0)
    assert fit.omega == pytest.approx(2.0, rel=1e-6)
    assert fit.r2 == pytest.approx(1.0)
    assert fit.komornik_T == pytest.approx(0.5, rel=1e-3)
    assert fit.theorem_bound_ok


@pytest.mark.parametrize("omega", [0.05, 0.7, 3.0])
def test_fit_recovers_planted_rates(omega):
    t = np.linspace(0, 10, 501)
    fit = fit_decay(_report(t, 4.0 * np.exp(-omega * t)), 1.0)
    assert fit.omega == pytest.approx(omega, rel=1e-6)


def test_fit_constant_energy():
    t = np.linspace(0, 20, 201)
    fit = fit_decay(_report(t, np.ones_like(t)), 2.0)
    assert abs(fit.omega) < 1e-12
    assert fit.komornik_T == pytest.approx(18.0)
    assert not fit.theorem_bound_ok


def test_fit_degenerate():
    t = np.linspace(0, 1, 5)
    with pytest.raises(DegenerateFit):
        fit_decay(_report(t, np.exp(-t)), 0.0)


def test_fit_window_shrinks_at_nonpositive_sample():
    t = np.linspace(0, 10, 101)
    E = np.exp(-t)
    E[80:] = 0.0
    fit = fit_decay(_report(t, E), 1.0)
    assert fit.window[1] == pytest.approx(t[79])
    assert fit.omega == pytest.approx(1.0, rel=1e-9)


def test_fit_json_keys(tmp_path):
    t = np.linspace(0, 5, 101)
    fit = fit_decay(_report(t, np.exp(-t)), 1.0)
    obj = json.loads(fit.write_json(tmp_path / "fit.json").read_text())
    assert set(obj) == {"omega", "r2", "komornik_T", "theorem_bound_ok", "window"}
