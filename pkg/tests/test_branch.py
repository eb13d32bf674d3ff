import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gapbif.branch import (BranchPoint, branch_exponents, check_branch_rates, fit_rate, geometric_schedule, reembed)
from gapbif.nonlinearity import builtin_nonlinearity
from gapbif.solver import fiber_maximize
from gapbif.spectral import DiscreteOperator, PeriodicPotential


def test_reference_exponents():
    assert branch_exponents(4.0, 1) == pytest.approx((0.25, 1.5))
    assert branch_exponents(3.0, 1) == pytest.approx((0.75, 2.5))
    assert branch_exponents(3.0, 2) == pytest.approx((0.5, 2.0))


def test_geometric_schedule():
    d = geometric_schedule(2.0, 0.2, 1e-3, 12)
    assert len(d) == 12 and d[0] == pytest.approx(0.4) and d[-1] == pytest.approx(2e-3)
    assert np.allclose(d[1:] / d[:-1], d[1] / d[0])
    r = geometric_schedule(2.0, 0.2, ratio=10 ** -0.25, points=5)
    assert r[-1] == pytest.approx(0.4 * 10**-1)
    with pytest.raises(ValueError):
        geometric_schedule(1.0, ratio=1.5)


@settings(max_examples=50, deadline=None)
@given(st.floats(-3, 3), st.floats(1e-3, 1e3), st.integers(4, 20))
def test_fit_recovers_power_law(theta, scale, n):
    d = np.geomspace(0.1, 1e-3, n)
    fit = fit_rate(scale * d**theta, "y", d=d)
    assert fit.theta == pytest.approx(theta, abs=1e-9)
    assert fit.n_points == n


def test_fit_window_and_degenerate_cases():
    d = np.geomspace(1.0, 1e-3, 10)
    fit = fit_rate(d**2, "y", d_max=0.1, d=d)
    assert fit.window[1] <= 0.1 and fit.theta == pytest.approx(2.0)
    assert fit_rate(np.full(10, 3.0), "y", d=d).theta == 0.0
    with pytest.raises(ValueError):
        fit_rate(d[:3], "y", d=d[:3])
    with pytest.raises(ValueError):
        fit_rate(np.arange(1.0, 6.0), "y", d=np.full(5, 0.01))


def test_fit_ignores_nonpositive_values():
    d = np.geomspace(0.1, 1e-3, 8)
    y = d**1.5
    y[2] = -1.0
    assert fit_rate(y, "y", d=d).n_points == 7


def _synthetic(theta_n, theta_e, theta_c):
    pts = []
    for d in np.geomspace(0.2, 1e-3, 12):
        p = BranchPoint(1.0 - d, d, h1_norm=d**theta_n, energy=0.5 * d**theta_e, c_ub=d**theta_c,
                        converged=True, norm_ratio=1.0)
        pts.append(p)
    return pts


def test_check_branch_rates_on_exact_rates():
    nl = builtin_nonlinearity("pure_power", beta=4.0)
    rep = check_branch_rates(_synthetic(0.25, 1.5, 1.5), nl)
    assert rep.passed, rep.failures()


def test_check_branch_rates_flags_slow_level():
    nl = builtin_nonlinearity("pure_power", beta=4.0)
    rep = check_branch_rates(_synthetic(0.25, 1.5, 1.0), nl)
    assert set(rep.failures()) >= {"level_rate", "level_rate_sharp", "level_vs_energy"}


def test_reembed_keeps_profile():
    pot = PeriodicPotential.constant(1.0)
    small, big = DiscreteOperator(pot, 8, 8), DiscreteOperator(pot, 16, 8)
    u = np.exp(-small.x**2)
    v = reembed(u, small, big)
    assert big.l2_norm(v) == pytest.approx(small.l2_norm(u))
    np.testing.assert_allclose(v, np.exp(-big.x**2) * (np.abs(big.x) < 4), atol=1e-6)
    np.testing.assert_allclose(reembed(v, big, small), u)


def test_fiber_level_slope_approaches_energy_rate_near_edge(ctx, pure_power):
    # In the sweep window the level bound decays more slowly than d^1.5; the lower
    # bound from the fiber maximum reaches the reference slope only for d ~ 1e-5.
    ds = [4e-5, 1e-5]
    vals = []
    for d in ds:
        zd = ctx.direction(ctx.gap.b - d)
        vals.append(fiber_maximize(ctx.gap.b - d, zd.zeta, pure_power, zd.op)[1])
    slope = np.log(vals[0] / vals[1]) / np.log(ds[0] / ds[1])
    assert slope == pytest.approx(1.5, abs=0.03)
