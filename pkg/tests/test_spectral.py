import math

import numpy as np
import pytest
import scipy.linalg as sla
from hypothesis import given, settings, strategies as st
from scipy.special import mathieu_a, mathieu_b

from gapbif.spectral import (DiscreteOperator, GapMarginError, GridMismatchError, PeriodicPotential,
                             SpectralGap, bloch_bands, build_split, cell_matrix, coercivity,
                             coercivity_from_constants, find_gaps, lambda_grid, quadratic_form, shift_to_gap,
                             split_from_matrix, supercell_spectrum)


def test_mathieu_gap_edges_match_characteristic_values():
    # -u'' + 2q cos(2 pi x) u = E u is Mathieu's equation in z = pi x with parameter q / pi^2;
    # the first gap is bounded by pi^2 b_1 and pi^2 a_1.
    q = 1.0
    pot = PeriodicPotential.mathieu(q)
    lo = math.pi**2 * mathieu_b(1, q / math.pi**2)
    hi = math.pi**2 * mathieu_a(1, q / math.pi**2)
    coarse = find_gaps(bloch_bands(pot, 4, 65, 32))[0]
    fine = find_gaps(bloch_bands(pot, 4, 65, 64))[0]
    # second-order finite differences: Richardson extrapolation removes the h^2 term
    a = (4 * fine.a - coarse.a) / 3
    b = (4 * fine.b - coarse.b) / 3
    assert abs(a - lo) / lo < 1e-6
    assert abs(b - hi) / hi < 1e-6
    assert coarse.k_a == pytest.approx(math.pi) and coarse.k_b == pytest.approx(math.pi)


def test_free_bands_match_closed_form():
    m, c = 16, 0.3
    bands = bloch_bands(PeriodicPotential.constant(c), 4, 33, m)
    for k, e in zip(bands.k, bands.energies):
        exact = np.sort([m**2 * (2 - 2 * math.cos((k + 2 * math.pi * j) / m)) + c for j in range(-3, 4)])[:4]
        np.testing.assert_allclose(e, exact, rtol=1e-11, atol=1e-11)


def test_supercell_spectrum_is_union_of_cell_problems():
    pot, L, m = PeriodicPotential.mathieu(1.0), 6, 12
    ev = supercell_spectrum(pot, L, m)
    from_cells = np.sort(np.concatenate([np.linalg.eigvalsh(cell_matrix(pot, m, 2 * math.pi * j / L))
                                         for j in range(L)]))
    np.testing.assert_allclose(ev, from_cells, atol=1e-9)


def test_shift_to_gap_centers_midpoint():
    pot = PeriodicPotential.mathieu(1.0)
    gap = find_gaps(bloch_bands(pot, 4, 65, 32))[0]
    spot, sgap = shift_to_gap(pot, gap)
    assert sgap.a == pytest.approx(-sgap.b)
    assert spot.offset == pytest.approx(-0.5 * (gap.a + gap.b))
    with pytest.raises(ValueError):
        shift_to_gap(pot, gap, shift=gap.b + 1.0)


def test_shifted_gap_of_default_problem(shifted):
    _, gap = shifted
    # frozen from the Richardson-checked band computation at 32 points per cell
    assert gap.b == pytest.approx(0.9998370257968823, rel=1e-9)
    assert gap.contains_zero


def test_gap_requires_ordered_edges():
    with pytest.raises(ValueError):
        SpectralGap(1.0, 0.5, 0, 1)


def test_split_dimensions_and_backends_agree(box, rng):
    op, split = box
    dense = split_from_matrix(op, op.matrix.toarray())
    assert split.dim_y == dense.dim_y == op.cells  # one band below the gap
    assert split.dim_y + split.dim_z == op.size
    for _ in range(5):
        v = rng.standard_normal(op.size)
        assert op.l2_norm(split.P(v) - dense.P(v)) <= 1e-10 * op.l2_norm(v)


def test_coercivity_constants_are_rayleigh_infima(box):
    op, split = box
    D = op.matrix.toarray()
    w, vecs = np.linalg.eigh(D)
    # H^1 Gram matrix of the forward-difference norm, up to the common factor h
    n, h = op.size, op.h
    K = (2 * np.eye(n) - np.roll(np.eye(n), 1, 0) - np.roll(np.eye(n), -1, 0)) / h**2
    G = K + np.eye(n)
    Y, Z = vecs[:, w < 0], vecs[:, w > 0]
    alpha = sla.eigh(-(Y.T @ D @ Y), Y.T @ G @ Y, eigvals_only=True).min()
    beta = sla.eigh(Z.T @ D @ Z, Z.T @ G @ Z, eigvals_only=True).min()
    assert split.alpha0 == pytest.approx(alpha, rel=1e-9)
    assert split.beta0 == pytest.approx(beta, rel=1e-9)
    assert split.alpha0 == pytest.approx(0.09194644845736111, rel=1e-8)
    assert split.beta0 == pytest.approx(0.09192957528490206, rel=1e-8)


def test_coercivity_piecewise_formula():
    c = coercivity_from_constants(-0.5, 0.1, 0.2, -1.0, 1.0)
    assert (c.alpha, c.beta) == pytest.approx((0.05, 0.2))  # alpha vanishes as lambda -> a
    c = coercivity_from_constants(0.5, 0.1, 0.2, -1.0, 1.0)
    assert (c.alpha, c.beta) == pytest.approx((0.1, 0.1))
    assert c.n_lambda == pytest.approx(0.05)
    with pytest.raises(ValueError, match="not in gap"):
        coercivity_from_constants(1.5, 0.1, 0.2, -1.0, 1.0)


def test_zero_eigenvalue_is_rejected():
    op = DiscreteOperator(PeriodicPotential.constant(0.0), 4, 8)
    with pytest.raises(GapMarginError):
        build_split(op)


def test_grid_mismatch_is_reported(box):
    op, split = box
    with pytest.raises(GridMismatchError):
        op.h1_norm(np.zeros(op.size + 1))


def test_quadratic_form_matches_matrix(box, rng):
    op, _ = box
    u = rng.standard_normal(op.size)
    assert quadratic_form(u, 0.3, op) == pytest.approx(op.inner(op.apply(u) - 0.3 * u, u), rel=1e-10)


vectors = st.integers(min_value=0, max_value=2**32 - 1)


@settings(max_examples=25, deadline=None)
@given(vectors)
def test_projector_properties(box, seed):
    op, split = box
    r = np.random.default_rng(seed)
    u, v = r.standard_normal(op.size), r.standard_normal(op.size)
    Pu = split.P(u)
    scale = op.l2_norm(u) * op.l2_norm(v)
    assert op.l2_norm(split.P(Pu) - Pu) <= 1e-10 * op.l2_norm(u)
    assert abs(op.inner(Pu, v) - op.inner(u, split.P(v))) <= 1e-10 * scale
    assert op.l2_norm(u - Pu - split.positive_part(u)) <= 1e-10 * op.l2_norm(u)
    # whole-cell translations commute with P
    m = op.points_per_cell
    assert np.max(np.abs(split.P(np.roll(u, m)) - np.roll(Pu, m))) <= 1e-10 * np.max(np.abs(u))


@settings(max_examples=25, deadline=None)
@given(vectors, st.floats(min_value=0.02, max_value=0.98))
def test_splitting_inequalities(box, shifted, seed, frac):
    op, split = box
    _, gap = shifted
    lam = gap.a + frac * gap.width
    co = coercivity(lam, split, gap)
    r = np.random.default_rng(seed)
    y = split.P(r.standard_normal(op.size))
    z = split.Q(r.standard_normal(op.size))
    qy, qz = quadratic_form(y, lam, op), quadratic_form(z, lam, op)
    tol = 1e-8 * (op.h1_norm(y) ** 2 + op.h1_norm(z) ** 2)
    assert qy <= -co.alpha * op.h1_norm(y) ** 2 + tol
    assert qz >= co.beta * op.h1_norm(z) ** 2 - tol
    assert qz - qy >= co.n_lambda * op.h1_norm(y + z) ** 2 - tol


def test_lambda_grid_interior(shifted):
    _, gap = shifted
    lams = lambda_grid(gap)
    assert len(lams) == 9 and all(gap.contains(l) for l in lams)


def test_two_dimensional_bands_are_pair_sums():
    pot1 = PeriodicPotential.mathieu(1.0)
    pot2 = PeriodicPotential.mathieu(1.0, dimension=2)
    b1 = bloch_bands(pot1, 3, 9, 16)
    b2 = bloch_bands(pot2, 3, 9, 16)
    assert b2.energies.min() == pytest.approx(2 * b1.energies.min(), rel=1e-12)
