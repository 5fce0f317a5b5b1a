import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from memwave.errors import DegreeOverflow, InvalidMeasure, NotStrictlyDominated, SignChangeError, UnboundedSupport
from memwave.measure import (
    DensityPiece,
    MeasureRepr,
    apply_T,
    build_lambda,
    build_lambda_compact,
    dyadic_intervals,
    exp_moment,
    find_alpha,
    power_moment,
    tail,
    total_variation,
    verify_certificate,
)


# ---------------------------------------------------------------------------
# quadrature oracle, independent of the closed forms


def quad_integral(mu: MeasureRepr, f, lo=0.0, hi=math.inf):
    """int_{[lo, hi)} f dmu by atom sums plus scipy.quad on each piece."""
    total = sum(w * f(t) for t, w in mu.atoms if lo <= t < hi)
    for p in mu.pieces:
        # the infinite pieces decay at least like exp(-1.5 s); cut where they are negligible
        a, b = max(p.a, lo), min(p.b, hi, 250.0)
        if a >= b:
            continue
        val, _ = integrate.quad(lambda s: f(s) * float(p.density(s)), a, b, epsabs=0, epsrel=1e-13, limit=400)
        total += val
    return total


def random_measure(rng, allow_infinite=True):
    atoms = [(float(t), float(rng.uniform(-1, 1))) for t in np.sort(rng.uniform(0.05, 3, rng.integers(0, 4)))]
    pieces = []
    edges = np.sort(rng.uniform(0, 3, 2 * rng.integers(1, 3)))
    for a, b in zip(edges[::2], edges[1::2]):
        if b - a < 1e-3:
            continue
        if rng.random() < 0.5:
            pieces.append(DensityPiece.poly(a, b, [float(rng.uniform(0.1, 1)), float(rng.uniform(0, 0.5))]))
        else:
            pieces.append(DensityPiece.exponential(a, b, float(rng.uniform(-1, 1)), float(rng.uniform(0.5, 3))))
    if allow_infinite and rng.random() < 0.5:
        pieces.append(DensityPiece.exponential(3.5, math.inf, float(rng.uniform(0.1, 1)), float(rng.uniform(1.5, 4))))
    return MeasureRepr.build(atoms, pieces)


# ---------------------------------------------------------------------------
# pieces


def test_poly_piece_global_coefficients():
    p = DensityPiece.poly(0.2, 0.8, [0.0, 0.8])
    assert p.density(0.5) == pytest.approx(0.4)
    assert p.mass() == pytest.approx(0.4 * (0.64 - 0.04), rel=1e-14)


def test_sign_changing_piece_rejected():
    with pytest.raises(SignChangeError):
        DensityPiece.poly(0.0, 1.0, [-0.5, 1.0])


def test_infinite_polynomial_rejected():
    with pytest.raises(InvalidMeasure):
        DensityPiece.poly(0.0, math.inf, [1.0])


def test_atom_at_zero_rejected():
    with pytest.raises(InvalidMeasure):
        MeasureRepr.dirac(0.0, 1.0)


def test_exponential_piece_tail():
    mu = MeasureRepr((), (DensityPiece.exponential(0.0, math.inf, 1.0, 2.0),))
    assert tail(mu, 1.0) == pytest.approx(math.exp(-2) / 2, rel=1e-14)
    assert mu.total_mass == pytest.approx(0.5, rel=1e-14)


def test_exp_moment_exponential_kernel():
    mu = MeasureRepr((), (DensityPiece.exponential(0.0, math.inf, 1.0, 1.0),))
    assert exp_moment(mu, 0.5) == pytest.approx(2.0, rel=1e-13)


def test_half_open_convention():
    mu = MeasureRepr.build([(1.0, 2.0)])
    assert mu.mass(0.0, 1.0) == 0.0
    assert mu.mass(1.0, 2.0) == 2.0
    assert mu.tail(1.0) == 2.0
    assert mu.tail_open(1.0) == 0.0


def test_json_round_trip():
    rng = np.random.default_rng(3)
    for _ in range(10):
        mu = random_measure(rng)
        back = MeasureRepr.from_json(json.loads(json.dumps(mu.to_json())))
        for s in (0.0, 0.5, 1.7, 3.2, 5.0):
            assert back.tail(s) == pytest.approx(mu.tail(s), rel=1e-12, abs=1e-14)


def test_json_schema_field_names():
    obj = {"atoms": [{"tau": 0.5, "weight": 0.4}],
           "pieces": [{"a": 0.0, "b": "inf", "kind": "exp", "c": 0.4, "beta": 2.0},
                      ]}
    mu = MeasureRepr.from_json(obj)
    assert mu.total_mass == pytest.approx(0.4 + 0.2)


# ---------------------------------------------------------------------------
# the tail operator


@pytest.mark.parametrize("tau", [0.3, 1.0, 2.5])
def test_T_power_masses_of_a_dirac(tau):
    m = MeasureRepr.dirac(tau)
    for n in range(1, 13):
        m = apply_T(m)
        assert m.total_mass == pytest.approx(tau**n / math.factorial(n), rel=1e-10)


def test_T_mass_identity_against_quadrature():
    rng = np.random.default_rng(11)
    for _ in range(5):
        mu = total_variation(random_measure(rng))
        m = mu
        for n in range(1, 6):
            m = apply_T(m)
            expect = quad_integral(mu, lambda s: s**n / math.factorial(n))
            assert m.total_mass == pytest.approx(expect, rel=1e-10)
            assert power_moment(mu, n) == pytest.approx(expect, rel=1e-10)


def test_T_density_is_tail():
    mu = MeasureRepr.build([(0.7, 0.5)], [DensityPiece.poly(0.2, 1.2, [1.0, -0.5])])
    tm = apply_T(mu)
    for s in (0.05, 0.3, 0.69, 0.71, 1.0, 1.19):
        assert float(tm.density(s)) == pytest.approx(mu.tail(s), rel=1e-12)


def test_T_degree_overflow():
    m = MeasureRepr.dirac(1.0)
    with pytest.raises(DegreeOverflow):
        for _ in range(40):
            m = apply_T(m)


@settings(max_examples=40, deadline=None)
@given(c1=st.floats(0.0, 3.0), c2=st.floats(0.0, 3.0), seed=st.integers(0, 10_000))
def test_T_is_linear(c1, c2, seed):
    rng = np.random.default_rng(seed)
    mu = total_variation(random_measure(rng))
    nu = total_variation(random_measure(rng))
    lhs = apply_T(mu * c1 + nu * c2)
    rhs = apply_T(mu) * c1 + apply_T(nu) * c2
    for a, b in ((0.0, 0.4), (0.4, 1.3), (1.3, 6.0), (0.0, math.inf)):
        assert lhs.mass(a, b) == pytest.approx(rhs.mass(a, b), rel=1e-9, abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10_000), n=st.integers(1, 40))
def test_partition_masses_sum_to_total(seed, n):
    rng = np.random.default_rng(seed)
    mu = random_measure(rng, allow_infinite=False)
    smax = 3.5
    cuts = np.concatenate([[0.0], np.sort(rng.uniform(0, smax, n)), [smax]])
    parts = sum(mu.mass(a, b) for a, b in zip(cuts[:-1], cuts[1:]))
    assert parts == pytest.approx(mu.mass(0.0, smax), abs=1e-12)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_total_variation_dominates(seed):
    rng = np.random.default_rng(seed)
    mu = random_measure(rng)
    nu = total_variation(mu)
    assert nu.is_nonnegative
    for a, b in dyadic_intervals(4.0, 4):
        assert abs(mu.mass(a, b)) <= nu.mass(a, b) + 1e-14


# ---------------------------------------------------------------------------
# exponential moments


def test_exp_moment_against_quadrature_random():
    rng = np.random.default_rng(2024)
    for _ in range(20):
        mu = random_measure(rng)
        alpha = float(rng.uniform(0.0, 1.2))
        expect = quad_integral(mu, lambda s: math.exp(alpha * s))
        assert exp_moment(mu, alpha) == pytest.approx(expect, rel=1e-10, abs=1e-13)


def test_find_alpha_single_delay():
    mu = MeasureRepr.dirac(1.0, 0.5)
    assert find_alpha(mu, 1.0) == pytest.approx(math.log(2) / 2, rel=1e-8)


def test_find_alpha_not_dominated():
    with pytest.raises(NotStrictlyDominated):
        find_alpha(MeasureRepr.dirac(1.0, 1.5), 1.0)
    with pytest.raises(NotStrictlyDominated):
        find_alpha(MeasureRepr.dirac(1.0, 0.5), 0.0)


def test_find_alpha_exponential_kernel():
    mu = MeasureRepr((), (DensityPiece.exponential(0.0, math.inf, 0.4, 2.0),))
    # 0.4 / (2 - a) = 1 at a = 1.6
    assert find_alpha(mu, 1.0) == pytest.approx(0.8, rel=1e-8)


# ---------------------------------------------------------------------------
# dominating measure


def test_build_lambda_single_delay():
    mu = MeasureRepr.dirac(1.0)
    cert = build_lambda(mu, 2.0, math.log(1.5))
    assert cert.lambda_mass == pytest.approx(1.5, abs=1e-10)
    assert cert.lambda_mass + cert.tail_bound < 2.0
    rep = verify_certificate(cert, mu, dyadic_intervals(4.0, 6))
    assert rep.passed


def test_build_lambda_exponential_closed_form():
    mu = MeasureRepr((), (DensityPiece.exponential(0.0, math.inf, 0.4, 2.0),))
    cert = build_lambda(mu, 1.0, 0.8)
    assert cert.lambda_mass == pytest.approx(0.4 / (2 - 0.8), abs=1e-9)


def test_lambda_mass_converges_monotonically():
    mu = MeasureRepr.build([(0.3, 0.2), (0.7, -0.15)])
    alpha = find_alpha(mu, 1.0)
    target = exp_moment(total_variation(mu), alpha)
    gaps = [target - build_lambda(mu, 1.0, alpha, tol).lambda_mass for tol in (1e-4, 1e-7, 1e-10)]
    assert all(g >= -1e-15 for g in gaps)
    assert gaps[0] >= gaps[1] >= gaps[2]
    assert gaps[2] <= 1e-10


def test_tail_moment_bound():
    mu = MeasureRepr.build([(0.5, 0.4)], [DensityPiece.poly(0.0, 1.0, [0.2])])
    cert = build_lambda(mu, 1.0, find_alpha(mu, 1.0))
    lhs = apply_T(cert.lam, max_degree=None).total_mass
    assert lhs <= cert.lambda_mass / cert.alpha + 1e-12


def test_build_lambda_rejects_large_moment():
    with pytest.raises(NotStrictlyDominated):
        build_lambda(MeasureRepr.dirac(1.0, 0.9), 1.0, 1.0)


def test_compact_lambda():
    mu = MeasureRepr.dirac(1.0, 0.5)
    cert = build_lambda_compact(mu, 1.0)
    assert cert.builder == "compact"
    assert cert.lambda_mass == pytest.approx(0.75)
    assert cert.lambda_mass < 1.0
    assert exp_moment(total_variation(mu), cert.alpha) < 1.0
    assert verify_certificate(cert, mu, dyadic_intervals(1.0, 8)).passed


def test_compact_lambda_needs_bounded_support():
    mu = MeasureRepr((), (DensityPiece.exponential(0.0, math.inf, 0.4, 2.0),))
    with pytest.raises(UnboundedSupport):
        build_lambda_compact(mu, 1.0)


def test_verification_detects_bad_certificate():
    mu = MeasureRepr.dirac(1.0, 0.5)
    cert = build_lambda(mu, 1.0, find_alpha(mu, 1.0))
    from dataclasses import replace

    bad = replace(cert, lam=cert.lam * 0.5)
    assert not verify_certificate(bad, mu, dyadic_intervals(2.0, 6)).passed
