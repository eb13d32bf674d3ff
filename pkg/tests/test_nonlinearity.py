import math

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from gapbif.nonlinearity import (ConvexMinorant, EnergyFunctional, ExponentError, Weight, builtin_nonlinearity,
                                 check_assumptions, check_minorant_properties, critical_exponent,
                                 lower_bound_c1)
from gapbif.spectral import DiscreteOperator

exponents = st.tuples(st.floats(2.05, 5.95), st.floats(2.05, 5.95)).map(sorted)
amplitudes = st.floats(-10.0, 10.0, allow_nan=False)


def test_minorant_breakpoint_and_constant():
    m = ConvexMinorant(3.0, 4.0)
    assert m.rho == pytest.approx(0.75)  # (alpha/beta)^(1/(beta-alpha))
    assert m.kappa == pytest.approx(0.75**4 - 0.75**3)
    assert m.kappa <= 0
    # both pieces meet continuously at rho
    assert float(m.H(m.rho * (1 - 1e-12))) == pytest.approx(float(m.H(m.rho * (1 + 1e-12))), abs=1e-10)


def test_equal_exponents_give_pure_power():
    m = ConvexMinorant(4.0, 4.0)
    u = np.linspace(-3, 3, 13)
    np.testing.assert_allclose(m.H(u), np.abs(u) ** 4)


def test_bad_exponents_rejected():
    with pytest.raises(ExponentError):
        ConvexMinorant(2.0, 3.0)
    with pytest.raises(ExponentError):
        ConvexMinorant(4.0, 3.0)


def test_critical_exponent():
    assert critical_exponent(1) == math.inf and critical_exponent(3) == 6.0


@settings(max_examples=40, deadline=None)
@given(exponents, amplitudes, amplitudes, st.floats(0.0, 5.0))
def test_minorant_properties(ab, u, v, t):
    a, b = ab
    m = ConvexMinorant(a, b)
    tol = 1e-12
    H = lambda x: float(m.H(x))
    assert H(u) >= 0.0
    assert H(u) <= float(m.G(u)) * (1 + tol) + 1e-300
    assert H(0.5 * (u + v)) <= 0.5 * (H(u) + H(v)) * (1 + tol) + 1e-300
    lo, hi = min(t**a, t**b), max(t**a, t**b)
    assert lo * H(u) <= H(t * u) * (1 + tol) + 1e-300
    assert H(t * u) <= hi * H(u) * (1 + tol) + 1e-300


@settings(max_examples=15, deadline=None)
@given(exponents, st.floats(0.01, 10.0))
def test_minorant_closed_form_matches_quadrature(ab, u):
    m = ConvexMinorant(*ab)
    assert m.H_by_quadrature(u) == pytest.approx(float(m.H(u)), rel=1e-10, abs=1e-12)


def test_minorant_property_report_passes():
    rep = check_minorant_properties(ConvexMinorant(2.5, 5.0), 2000, 3)
    assert rep.passed, rep.failures()
    with pytest.raises(ValueError):
        check_minorant_properties(ConvexMinorant(2.5, 5.0), 10)


def test_constant_weight_satisfies_every_assumption():
    nl = builtin_nonlinearity("pure_power", beta=4.0, weight=Weight("constant"))
    rep = check_assumptions(nl)
    assert rep.passed, rep.failures()


def test_cosine_weight_vanishes_somewhere():
    # B = 1 + cos(2 pi x) is zero at x = 1/2, so F is not uniformly positive at infinity
    nl = builtin_nonlinearity("pure_power", beta=4.0, weight=Weight("cosine"))
    rep = check_assumptions(nl)
    assert rep.failures() == ["positive_at_infinity"]
    assert rep.verdicts["positive_at_infinity"]["min_F_where_weight_positive"] > 0


def test_minorant_nonlinearity_assumptions():
    nl = builtin_nonlinearity("minorant", alpha=3.0, beta=4.0, weight=Weight("constant"))
    rep = check_assumptions(nl)
    assert rep.passed, rep.failures()
    assert nl.pinching_radius == pytest.approx(0.75)


def test_lower_bound_c1():
    nl = builtin_nonlinearity("minorant", alpha=3.0, beta=4.0, weight=Weight("constant"))
    c1 = lower_bound_c1(nl, 0.1)
    assert c1 > 0
    with pytest.raises(ValueError):
        lower_bound_c1(nl, 0.0)


def test_pure_power_family_checks():
    with pytest.raises(ExponentError):
        builtin_nonlinearity("pure_power", alpha=3.0, beta=4.0)
    with pytest.raises(ValueError):
        builtin_nonlinearity("cubic")


@pytest.fixture(scope="module")
def functional(shifted):
    pot, gap = shifted
    op = DiscreteOperator(pot, 8, 32)
    nl = builtin_nonlinearity("minorant", alpha=3.0, beta=4.0)
    return EnergyFunctional(0.5 * gap.b, op, nl)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.1, 3.0))
def test_gradient_matches_central_differences(functional, seed, amp):
    E = functional
    op = E.op
    r = np.random.default_rng(seed)
    u = amp * np.exp(-0.5 * (op.x / 0.7) ** 2) + 0.05 * r.standard_normal(op.size)
    v = r.standard_normal(op.size)
    v /= op.l2_norm(v)
    eps = 1e-5
    fd = (E(u + eps * v) - E(u - eps * v)) / (2 * eps)
    an = op.inner(E.gradient(u), v)
    assert fd == pytest.approx(an, rel=1e-6, abs=1e-9)


def test_energy_identity(functional, rng):
    E = functional
    op = E.op
    u = rng.standard_normal(op.size)
    lhs = E(u) - 0.5 * op.inner(E.gradient(u), u)
    assert lhs == pytest.approx(op.integrate(0.5 * E.f(u) * u - E.F(u)), rel=1e-12)


def test_linearization_matches_difference_quotient(functional, rng):
    E = functional
    u = rng.uniform(-2, 2, E.op.size)
    step = 1e-7
    fd = (E.f(u + step) - E.f(u - step)) / (2 * step)
    mask = np.abs(np.abs(u) - E.nl.pinching_radius) > 1e-4  # h has a kink at rho
    np.testing.assert_allclose(E.dfdu(u)[mask], fd[mask], rtol=1e-5, atol=1e-8)
