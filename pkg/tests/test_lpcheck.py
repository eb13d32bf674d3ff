import math

import numpy as np
import pytest
import scipy.sparse as sp

from gapbif.lpcheck import (Contour, LpProbeSet, RieszProjector, lp_projection_ratio, riesz_agreement,
                            transversality_margin)


def test_riesz_on_diagonal_two_by_two():
    A = sp.diags([-1.0, 2.0])
    R = RieszProjector(A, Contour(-2.0, 0.0, 1.0, nodes=16))
    np.testing.assert_allclose(R(np.array([1.0, 0.0])), [1.0, 0.0], atol=1e-12)
    np.testing.assert_allclose(R(np.array([0.0, 1.0])), [0.0, 0.0], atol=1e-12)


def test_gauss_panels_beat_trapezoid():
    A = sp.diags([-1.0, -0.3, 0.4, 2.0])
    v = np.ones(4)
    exact = np.array([1.0, 1.0, 0.0, 0.0])
    err = {}
    for rule in ("gauss", "trapezoid"):
        R = RieszProjector(A, Contour(-2.0, 0.0, 1.0, nodes=16, rule=rule))
        err[rule] = np.max(np.abs(R(v) - exact))
    # trapezoid is only second order here because the rectangle's corners break periodicity
    assert err["gauss"] < 1e-10 and err["trapezoid"] > 1e-5


def test_contour_must_avoid_spectrum():
    with pytest.raises(ValueError):
        Contour(-2.0, 0.0).validate(np.array([-1.0, 0.0, 1.0]))
    with pytest.raises(ValueError):
        Contour(-2.0, rule="simpson").quadrature()


def test_contour_weights_integrate_constant_and_pole():
    nodes, w = Contour(-2.0, 0.0, 1.0, nodes=16).quadrature()
    assert abs(np.sum(w)) < 1e-13
    assert np.sum(w / (nodes + 1.0)) == pytest.approx(2j * math.pi, abs=1e-10)


def test_riesz_agreement_on_box(box):
    op, split = box
    rep = riesz_agreement(op, split, (4, 8, 16), 5, np.random.default_rng(0))
    assert rep.passed, rep.failures()


def test_l2_ratio_and_orthogonal_margin(box):
    op, split = box
    u = LpProbeSet(seed=0).random_bumps(op)[0]
    assert lp_projection_ratio(split.P, u, 2.0, op) <= 1 + 1e-10
    assert transversality_margin(split, 2.0, 10, 0) == pytest.approx(math.sqrt(2.0), abs=1e-10)


def test_probe_sets_are_reproducible(box):
    op, _ = box
    a, b = LpProbeSet(seed=7).all(op), LpProbeSet(seed=7).all(op)
    assert a.keys() == b.keys()
    assert all(np.array_equal(a[k], b[k]) for k in a)
    with pytest.raises(ValueError):
        LpProbeSet(exponents=(0.5,))
