"""Acceptance gate: one PASS/FAIL line per criterion, printed past pytest's capture."""

import copy
import math
import time

import numpy as np
import pytest

from memwave.energy import dissipation_check, fit_decay, full_energy, memory_term_past, nested_past_oracle
from memwave.geometry import AffineField, Interval1D, Rectangle2D, check_admissibility, partition_boundary
from memwave.measure import (
    MeasureRepr,
    apply_T,
    dyadic_intervals,
    exp_moment,
    total_variation,
    verify_certificate,
)
from memwave.scenario import EXAMPLES, example_config, scenario_from_dict
from memwave.solver import InitialData, SolverConfig, simulate

from test_measure import quad_integral, random_measure

LINE = Interval1D(0.0, 1.0)
M1 = AffineField(np.eye(1), np.zeros(1))
PART1 = partition_boundary(M1, LINE)


@pytest.fixture
def report(capsys):
    def emit(num, title, ok, detail):
        with capsys.disabled():
            print(f"\n[acceptance {num}] {'PASS' if ok else 'FAIL'}  {title}: {detail}")
        assert ok, detail

    return emit


def ex5(h=1 / 256, T=20.0):
    cfg = copy.deepcopy(example_config("ex5"))
    cfg["solver"].update(h=h, T_final=T)
    return scenario_from_dict(cfg)


@pytest.fixture(scope="module")
def ex5_runs():
    out = {}
    for h in (1 / 256, 1 / 512):
        sc = ex5(h)
        traj = sc.run()
        out[h] = (sc, traj, full_energy(traj, sc.certificate))
    return out


def test_1_measure_oracles(report):
    t0 = time.perf_counter()
    worst_T = 0.0
    for tau in (0.3, 1.0, 2.5):
        m = MeasureRepr.dirac(tau)
        for n in range(1, 13):
            m = apply_T(m)
            exact = tau**n / math.factorial(n)
            worst_T = max(worst_T, abs(m.total_mass - exact) / exact)
    rng = np.random.default_rng(2024)
    worst_exp = 0.0
    for _ in range(20):
        mu = random_measure(rng)
        alpha = float(rng.uniform(0.0, 1.2))
        expect = quad_integral(mu, lambda s: math.exp(alpha * s))
        worst_exp = max(worst_exp, abs(exp_moment(mu, alpha) - expect) / max(abs(expect), 1e-3))
    elapsed = time.perf_counter() - t0
    ok = worst_T <= 1e-10 and worst_exp <= 1e-10 and elapsed < 1.0
    report(1, "measure oracles", ok, f"T^n rel err {worst_T:.2e}, exp_moment rel err {worst_exp:.2e}, {elapsed:.2f} s")


def test_2_certificates(report):
    t0 = time.perf_counter()
    lines, ok = [], True
    for name in sorted(EXAMPLES):
        sc = scenario_from_dict(example_config(name))
        cert = sc.certificate
        horizon = max(cert.lam.support_end, sc.measure.support_end)
        if not np.isfinite(horizon):
            horizon = 10.0 / cert.alpha
        ver = verify_certificate(cert, sc.measure, dyadic_intervals(horizon, 8))
        slack = min(ver.domination_slack, ver.integration_slack)
        good = cert.lambda_mass + cert.tail_bound < sc.mu0 and slack >= -1e-9
        ok &= good
        lines.append(f"{name.split('_')[0]} lambda+eps={cert.lambda_mass + cert.tail_bound:.4f} slack={slack:.1e}")
    elapsed = time.perf_counter() - t0
    ok &= elapsed < 5.0
    report(2, "certificates", ok, "; ".join(lines) + f"; {elapsed:.2f} s")


def test_3_absorbing(report):
    t0 = time.perf_counter()
    ratios = []
    for h in (1 / 256, 1 / 512):
        tr = simulate(LINE, M1, PART1, MeasureRepr.zero(), 1.0,
                      SolverConfig(h=h, T_final=2.5, snapshot_stride=10**6,
                                   initial=InitialData(center=(0.4,), radius=0.2)))
        ratios.append(tr.e0_steps[-1] / tr.e0_steps[0])
    elapsed = time.perf_counter() - t0
    ok = ratios[0] <= 1e-2 and ratios[1] <= ratios[0] / 2 and elapsed < 10
    report(3, "absorbing boundary", ok,
           f"E0(2.5)/E0(0) = {ratios[0]:.2e} (h=1/256), {ratios[1]:.2e} (h=1/512), {elapsed:.2f} s")


def test_4_reflection(report):
    h, t1 = 1 / 512, 1.0
    init = InitialData(kind="bump", center=(0.5,), radius=0.15, direction="right")
    tr = simulate(LINE, M1, PART1, MeasureRepr.zero(), 3.0, SolverConfig(h=h, T_final=t1, initial=init))
    x = np.linspace(0, 1, 513)
    u = tr.snapshot_u[tr.snapshot_index(t1)]
    r = (2 - x - t1 - 0.5) / 0.15
    # the right-going pulse phi(x - t) comes back from x = 1 as R phi(2 - x - t)
    ref = np.where(np.abs(r) < 1, np.exp(1 - 1 / np.maximum(1 - r**2, 1e-300)), 0.0)
    ratio = float(u @ ref / (ref @ ref))
    ok = abs(ratio + 0.5) <= 0.02 * 0.5
    report(4, "reflection coefficient", ok, f"measured {ratio:.5f} vs -0.5")


def test_5_monotonicity(report, ex5_runs):
    viol = {}
    for h, (sc, tr, rep) in ex5_runs.items():
        viol[h] = rep.max_violation / rep.E_total[0]
    sc, tr, rep = ex5_runs[1 / 256]
    C = dissipation_check(tr, rep, sc.certificate)
    ok = viol[1 / 256] <= 1e-3 and viol[1 / 512] <= viol[1 / 256] / 2 and C > 0
    report(5, "energy monotonicity", ok,
           f"max increase / E(0) = {viol[1 / 256]:.2e} (h=1/256), {viol[1 / 512]:.2e} (h=1/512), C = {C:.3f}")


def test_6_exponential_decay(report, ex5_runs):
    t0 = time.perf_counter()
    sc, tr, rep = ex5_runs[1 / 256]
    fit = fit_decay(rep, 2.0)
    ok1 = fit.r2 >= 0.95 and fit.omega > 0 and fit.theorem_bound_ok and fit.window[1] == pytest.approx(20.0)

    f = AffineField(np.eye(2), np.array([-0.5, 0.5]))
    dom = Rectangle2D()
    part = partition_boundary(f, dom)
    init = InitialData(kind="gaussian", center=(0.5, 0.5), width=0.1)
    omegas = []
    for h in (1 / 64, 1 / 96):
        tr2 = simulate(dom, f, part, sc.measure, sc.mu0,
                       SolverConfig(h=h, T_final=20.0, snapshot_stride=10**6, initial=init))
        omegas.append(fit_decay(full_energy(tr2, sc.certificate), 2.0).omega)
    spread = abs(omegas[0] - omegas[1]) / omegas[1]
    elapsed = time.perf_counter() - t0
    ok = ok1 and min(omegas) > 0 and spread <= 0.2 and elapsed < 300
    report(6, "exponential decay", ok,
           f"1D omega={fit.omega:.4f} R2={fit.r2:.4f} T={fit.komornik_T:.3f} bound_ok={fit.theorem_bound_ok}; "
           f"2D omega {omegas[0]:.4f} (h=1/64) vs {omegas[1]:.4f} (h=1/96), spread {spread:.1%}; {elapsed:.1f} s")


def test_7_fubini(report):
    rng = np.random.default_rng(7)
    names = sorted(EXAMPLES)
    worst = 0.0
    for _ in range(10):
        cfg = example_config(names[int(rng.integers(len(names)))])
        cfg["solver"].update(h=1 / 64, T_final=4.0, snapshot_stride=10**6)
        sc = scenario_from_dict(cfg)
        tr = sc.run()
        t = int(rng.integers(tr.n_steps // 4, tr.n_steps)) * tr.dt
        a = memory_term_past(tr, sc.certificate.lam, t)
        b = nested_past_oracle(tr, sc.certificate.lam, t)
        worst = max(worst, abs(a - b) / abs(b))
    report(7, "Fubini equivalence", worst <= 1e-6, f"worst relative gap {worst:.2e} over 10 probes")


def test_8_multiplier_constants(report):
    sq = Rectangle2D()
    skew = np.array([[0.0, 1.3], [-1.3, 0.0]])
    # (A, c(m), a0) with c = (inf div - sup(div - 2 lam)) / 2, a0 the half-sum
    cases = [(np.eye(2), 1.0, 1.0), (np.diag([2.0, 1.0]), 1.0, 2.0), (np.diag([3.0, 0.5]), 0.5, 3.0)]
    err_exact = err_skew = err_scale = 0.0
    for A, c, a0 in cases:
        base = check_admissibility(AffineField(A, np.array([0.2, -0.1])), sq)
        err_exact = max(err_exact, abs(base.c_m - c), abs(base.a0 - a0))
        pert = check_admissibility(AffineField(A + skew, np.array([0.2, -0.1])), sq)
        err_skew = max(err_skew, abs(pert.c_m - base.c_m), abs(pert.a0 - base.a0))
        for t in (0.1, 2.5, 40.0):
            sc = check_admissibility(AffineField(t * A, np.array([0.2, -0.1])), sq)
            err_scale = max(err_scale, abs(sc.c_m - t * base.c_m) / (t * base.c_m))
    ok = err_exact <= 1e-12 and err_skew <= 1e-12 and err_scale <= 1e-12
    report(8, "multiplier constants", ok, f"exact {err_exact:.1e}, skew {err_skew:.1e}, scaling {err_scale:.1e}")


def test_9_lambda_substitution(report, ex5_runs):
    sc, tr, rep = ex5_runs[1 / 256]
    small = full_energy(tr, total_variation(sc.measure))
    excess = float(np.max(small.E_total - rep.E_total))
    report(9, "lambda substitution", excess <= 0.0,
           f"max(E_|mu| - E_lambda) = {excess:.2e} over {rep.t.size} samples")
