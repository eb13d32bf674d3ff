"""Admissible nonlinearities, the convex minorant ``H`` and the energy functional."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Optional

import numpy as np
from scipy.integrate import quad

from .reporting import Report
from .spectral import DiscreteOperator, quadratic_form


class ExponentError(ValueError):
    pass


def critical_exponent(dimension: int) -> float:
    """Sobolev exponent ``2N/(N-2)``; infinite for ``N <= 2``."""
    return math.inf if dimension <= 2 else 2.0 * dimension / (dimension - 2)


def _check_exponents(alpha: float, beta: float) -> None:
    if not (alpha > 2.0 and beta >= alpha):
        raise ExponentError(f"need 2 < alpha <= beta, got alpha={alpha}, beta={beta}")


# --------------------------------------------------------------------------
# convex minorant of min(|u|^beta, |u|^alpha)
# --------------------------------------------------------------------------

def minorant_h(u, alpha: float, beta: float):
    """Odd function ``sign(u) * min(beta |u|^(beta-1), alpha |u|^(alpha-1))``."""
    _check_exponents(alpha, beta)
    u = np.asarray(u, dtype=float)
    a = np.abs(u)
    return np.sign(u) * np.minimum(beta * a ** (beta - 1), alpha * a ** (alpha - 1))


@dataclass(frozen=True)
class ConvexMinorant:
    """``H(u) = |u|^beta`` for ``|u| <= rho``, ``kappa + |u|^alpha`` beyond.

    ``rho = (alpha/beta)^(1/(beta-alpha))`` is where the two branches of ``h``
    cross and ``kappa = rho^beta - rho^alpha <= 0`` makes ``H`` continuous.
    """

    alpha: float
    beta: float

    def __post_init__(self):
        _check_exponents(self.alpha, self.beta)

    @property
    def rho(self) -> float:
        if self.beta == self.alpha:
            return 1.0
        return (self.alpha / self.beta) ** (1.0 / (self.beta - self.alpha))

    @property
    def kappa(self) -> float:
        return self.rho**self.beta - self.rho**self.alpha

    def h(self, u):
        return minorant_h(u, self.alpha, self.beta)

    def dh(self, u):
        """Derivative of ``h`` (defined except at ``|u| = rho``, where the right branch is taken)."""
        a = np.abs(np.asarray(u, dtype=float))
        al, be = self.alpha, self.beta
        return np.where(a <= self.rho, be * (be - 1) * a ** (be - 2), al * (al - 1) * a ** (al - 2))

    def H(self, u):
        a = np.abs(np.asarray(u, dtype=float))
        return np.where(a <= self.rho, a**self.beta, self.kappa + a**self.alpha)

    def G(self, u):
        a = np.abs(np.asarray(u, dtype=float))
        return np.minimum(a**self.beta, a**self.alpha)

    def H_by_quadrature(self, u: float) -> float:
        """``int_0^|u| h`` by adaptive quadrature; the breakpoint ``rho`` is passed explicitly."""
        a = abs(float(u))
        pts = [self.rho] if 0.0 < self.rho < a else None
        val, _ = quad(lambda v: float(self.h(v)), 0.0, a, points=pts, epsabs=1e-14, epsrel=1e-13, limit=200)
        return val


def minorant_H(u, m: ConvexMinorant):
    return m.H(u)


def check_minorant_properties(m: ConvexMinorant, n_samples: int = 10_000, rng=None,
                              rtol: float = 1e-12) -> Report:
    """Sample the five minorant properties on ``u`` in [-10, 10], ``t`` in [0, 5].

    Every inequality ``lhs <= rhs`` is accepted when
    ``lhs <= rhs + rtol * max(|lhs|, |rhs|)``.
    """
    if n_samples < 1000:
        raise ValueError("n_samples must be >= 1000")
    rng = np.random.default_rng(rng)
    u = rng.uniform(-10, 10, n_samples)
    v = rng.uniform(-10, 10, n_samples)
    t = rng.uniform(0, 5, n_samples)
    H = m.H

    def leq(lhs, rhs):
        return lhs <= rhs + rtol * np.maximum(np.abs(lhs), np.abs(rhs))

    checks = {}
    ok = leq(H(u), m.G(u))
    checks["upper_bound"] = ok
    ok = leq(H(0.5 * (u + v)), 0.5 * (H(u) + H(v)))
    checks["midpoint_convexity"] = ok
    small = 1e-3
    ratio0 = float(H(small) / small**m.beta)
    big = 1e3
    ratio_inf = float(H(big) / big**m.alpha)
    tlo = np.minimum(t**m.alpha, t**m.beta)
    thi = np.maximum(t**m.alpha, t**m.beta)
    Htu = H(t * u)
    checks["pseudo_homogeneity"] = leq(tlo * H(u), Htu) & leq(Htu, thi * H(u))

    report = Report("convex-minorant", anchor="convex minorant H of min(|u|^beta,|u|^alpha)",
                    params={"alpha": m.alpha, "beta": m.beta, "rho": m.rho, "kappa": m.kappa,
                            "n_samples": n_samples, "rtol": rtol})
    for name, mask in checks.items():
        bad = np.flatnonzero(~mask)
        detail = {}
        if bad.size:
            i = int(bad[0])
            detail = {"u": float(u[i]), "v": float(v[i]), "t": float(t[i])}
        report.verdict(name, bool(mask.all()), failures=int(bad.size), **detail)
    report.verdict("behaviour_near_zero", 1 - 1e-6 <= ratio0 <= 1.0 + rtol, ratio=ratio0)
    # H(u)/|u|^alpha = 1 + kappa/|u|^alpha exactly beyond rho
    expected = abs(m.kappa) / big**m.alpha
    report.verdict("behaviour_at_infinity", abs(ratio_inf - 1.0) <= expected + 4 * np.finfo(float).eps,
                   ratio=ratio_inf, expected_deviation=expected)
    report.verdict("vanishes_at_zero", float(H(0.0)) == 0.0 and float(m.h(0.0)) == 0.0)
    return report


# --------------------------------------------------------------------------
# weights and nonlinearities
# --------------------------------------------------------------------------

WEIGHTS: dict = {
    "cosine": lambda x: 1.0 + np.cos(2 * np.pi * x),
    "constant": lambda x: np.ones_like(np.asarray(x, dtype=float)),
}


@dataclass(frozen=True, eq=False)
class Weight:
    """Nonnegative 1-periodic weight ``B``; separable product in 2-D."""

    name: str = "cosine"
    func: Optional[Callable] = field(default=None, repr=False)

    def __post_init__(self):
        if self.func is None and self.name not in WEIGHTS:
            raise ValueError(f"unknown weight {self.name!r}; known: {sorted(WEIGHTS)}")

    def __call__(self, *coords):
        fn = self.func or WEIGHTS[self.name]
        out = fn(np.mod(coords[0], 1.0))
        for c in coords[1:]:
            out = out * fn(np.mod(c, 1.0))
        return out


@dataclass(frozen=True, eq=False)
class Nonlinearity:
    """``f(x, u)`` with primitive ``F``; ``dfdu`` is optional (closed-form linearization).

    ``alpha`` is the superquadraticity exponent, ``beta`` the small-amplitude
    pinching exponent, ``p``/``c`` the growth bound ``|f| <= c(1 + |u|^(p-1))``.
    """

    alpha: float
    beta: float
    p: float
    c: float
    weight: Weight
    f: Callable
    F: Callable
    dfdu: Optional[Callable] = None
    family: str = "custom"
    dimension: int = 1
    pinching_radius: float = math.inf

    def weight_on(self, op: DiscreteOperator) -> np.ndarray:
        return self.weight(*op.coords)


def builtin_nonlinearity(tag: str, alpha: Optional[float] = None, beta: float = 4.0,
                         weight: Optional[Weight] = None, dimension: int = 1) -> Nonlinearity:
    """``pure_power``: ``F = B |u|^beta``; ``minorant``: ``F = B H(u)``."""
    weight = weight or Weight("cosine")
    two_star = critical_exponent(dimension)
    bmax = float(np.max(weight(np.linspace(0.0, 1.0, 1025)))) ** dimension
    if tag == "pure_power":
        a = beta if alpha is None else alpha
        if a != beta:
            raise ExponentError("pure_power has alpha == beta")
        _check_exponents(beta, beta)
        if beta >= two_star:
            raise ExponentError(f"beta={beta} not below the critical exponent {two_star}")

        def F(x, u, B=None):
            B = weight(*x) if B is None else B
            return B * np.abs(u) ** beta

        def f(x, u, B=None):
            B = weight(*x) if B is None else B
            return B * beta * np.sign(u) * np.abs(u) ** (beta - 1)

        def dfdu(x, u, B=None):
            B = weight(*x) if B is None else B
            return B * beta * (beta - 1) * np.abs(u) ** (beta - 2)

        return Nonlinearity(beta, beta, beta, beta * bmax, weight, f, F, dfdu, "pure_power", dimension)

    if tag == "minorant":
        a = 3.0 if alpha is None else alpha
        m = ConvexMinorant(a, beta)
        if beta >= two_star:
            raise ExponentError(f"beta={beta} not below the critical exponent {two_star}")

        def F(x, u, B=None):
            B = weight(*x) if B is None else B
            return B * m.H(u)

        def f(x, u, B=None):
            B = weight(*x) if B is None else B
            return B * m.h(u)

        def dfdu(x, u, B=None):
            B = weight(*x) if B is None else B
            return B * m.dh(u)

        # H(u) = |u|^beta only up to the breakpoint rho
        return Nonlinearity(a, beta, beta, beta * bmax, weight, f, F, dfdu, "minorant", dimension, m.rho)
    raise ValueError(f"unknown nonlinearity family {tag!r}")


def custom_nonlinearity(f, F, alpha, beta, p, c, weight=None, dfdu=None, dimension=1) -> Nonlinearity:
    """Wrap user callables ``f(coords, u, B=None)`` and ``F(coords, u, B=None)``."""
    return Nonlinearity(alpha, beta, p, c, weight or Weight("cosine"), f, F, dfdu, "custom", dimension)


# --------------------------------------------------------------------------
# assumption checks
# --------------------------------------------------------------------------

def sample_grid(n_x: int = 64, u_max: float = 1e3, n_u: int = 201):
    """``x`` on one cell; ``u`` log-spaced on both signs plus points near 0."""
    xs = np.arange(n_x) / n_x
    pos = np.logspace(-8, math.log10(u_max), n_u)
    us = np.concatenate([-pos[::-1], [0.0], pos])
    return xs, us


def check_assumptions(nl: Nonlinearity, grid=None, pinching_radius: Optional[float] = None,
                      quad_points: int = 40) -> Report:
    """Finite-window certification of the structural assumptions on ``f``.

    The asymptotic conditions (``f = o(u)`` at 0, positivity of ``F`` at
    infinity) are checked on the recorded sample windows only.
    """
    xs, us = grid if grid is not None else sample_grid()
    if pinching_radius is None:
        pinching_radius = nl.pinching_radius
    X, U = np.meshgrid(xs, us, indexing="ij")
    coords = (X,) if nl.dimension == 1 else (X, X)
    B = nl.weight(*coords)
    f = nl.f(coords, U, B)
    F = nl.F(coords, U, B)
    rep = Report("assumptions", anchor="structural assumptions on f",
                 params={"family": nl.family, "alpha": nl.alpha, "beta": nl.beta, "p": nl.p, "c": nl.c,
                         "u_window": [float(us.min()), float(us.max())], "pinching_radius": pinching_radius})

    # primitive: F(x,u) = int_0^u f(x,v) dv, Gauss-Legendre on a subsample
    nodes, weights = np.polynomial.legendre.leggauss(quad_points)
    sub_u = us[np.abs(us) <= 10.0][:: max(1, len(us) // 60)]
    worst = 0.0
    for x0 in xs[:: max(1, len(xs) // 8)]:
        c0 = (np.array(x0),) if nl.dimension == 1 else (np.array(x0), np.array(x0))
        for u0 in sub_u:
            if u0 == 0.0:
                continue
            # split at the minorant breakpoint so the rule sees smooth pieces
            cuts = [0.0, u0]
            if nl.family == "minorant":
                rho = ConvexMinorant(nl.alpha, nl.beta).rho
                if abs(u0) > rho:
                    cuts = [0.0, math.copysign(rho, u0), u0]
            total = 0.0
            for lo, hi in zip(cuts[:-1], cuts[1:]):
                v = 0.5 * (hi - lo) * nodes + 0.5 * (hi + lo)
                total += 0.5 * (hi - lo) * float(np.sum(weights * nl.f(c0, v)))
            ref = float(nl.F(c0, np.array(u0)))
            worst = max(worst, abs(total - ref) / max(1.0, abs(ref)))
    rep.verdict("primitive", worst <= 1e-8, max_rel_error=worst)

    bound = nl.c * (1.0 + np.abs(U) ** (nl.p - 1))
    excess = np.abs(f) - bound
    i = np.unravel_index(np.argmax(excess), excess.shape)
    rep.verdict("growth", bool(np.all(excess <= 1e-12 * bound)), worst_u=float(U[i]), worst_x=float(X[i]))

    # f = o(u) at 0: largest sampled window |u| <= delta on which |f|/|u| <= eps
    pos = np.abs(U) > 0
    ratio = np.where(pos, np.abs(f) / np.where(pos, np.abs(U), 1.0), 0.0).max(axis=0)
    mags = np.abs(us)
    keep = mags > 0
    order = np.argsort(mags[keep])
    sorted_mags = mags[keep][order]
    running = np.maximum.accumulate(ratio[keep][order])
    for eps in (1e-2, 1e-4):
        ok = running <= eps
        n_ok = len(ok) if ok.all() else int(np.argmin(ok))
        delta = float(sorted_mags[n_ok - 1]) if n_ok else 0.0
        rep.verdict(f"small_amplitude_eps_{eps:g}", delta > 0.0, delta=delta)

    lhs = nl.alpha * F
    rhs = f * U
    tol = 1e-12 * np.maximum(np.abs(lhs), np.abs(rhs))
    ar = (lhs >= -tol) & (lhs <= rhs + tol)
    i = np.unravel_index(np.argmin(ar), ar.shape)
    rep.verdict("ambrosetti_rabinowitz", bool(ar.all()), worst_u=float(U[i]), worst_x=float(X[i]),
                equality=bool(np.allclose(lhs, rhs, rtol=1e-12, atol=0)))

    U_far = us.max()
    far = [nl.F(coords, np.full_like(X, s * U_far), B) for s in (1.0, -1.0)]
    min_far = min(float(np.min(v)) for v in far)
    # a weight vanishing at isolated points makes the pointwise minimum zero
    support = B > 0
    min_on_support = min(float(np.min(v[support])) for v in far) if support.any() else 0.0
    rep.verdict("positive_at_infinity", min_far > 0.0, min_F=min_far, U=float(U_far),
                min_F_where_weight_positive=min_on_support,
                weight_zero_fraction=float(1.0 - support.mean()))

    radius = float(pinching_radius)
    near = np.abs(U) <= radius
    pin = F[near] >= B[near] * np.abs(U[near]) ** nl.beta * (1 - 1e-12)
    rep.verdict("pinching", bool(pin.all()) and float(np.max(B)) > 0.0 and float(np.min(B)) >= 0.0,
                radius=radius)
    return rep


def lower_bound_c1(nl: Nonlinearity, delta: float, grid=None) -> float:
    """Largest ``c1`` with ``F(x,u) >= c1 |u|^alpha - delta u^2`` on the sample grid."""
    if delta <= 0:
        raise ValueError("delta must be positive")
    xs, us = grid if grid is not None else sample_grid()
    us = us[us != 0.0]
    X, U = np.meshgrid(xs, us, indexing="ij")
    coords = (X,) if nl.dimension == 1 else (X, X)
    F = nl.F(coords, U)
    c1 = float(np.min((F + delta * U**2) / np.abs(U) ** nl.alpha))
    if not c1 > 0:
        raise ValueError(f"no positive c1 for delta={delta}: assumptions violated on the grid")
    return c1


# --------------------------------------------------------------------------
# energy functional
# --------------------------------------------------------------------------

class EnergyFunctional:
    """``E(u) = Q_lam(u)/2 - int F(x, u)`` on a fixed grid, weight precomputed."""

    def __init__(self, lam: float, op: DiscreteOperator, nl: Nonlinearity):
        self.lam = lam
        self.op = op
        self.nl = nl

    @cached_property
    def B(self):
        return self.nl.weight_on(self.op)

    @cached_property
    def shifted_matrix(self):
        import scipy.sparse as sp
        return (self.op.matrix - self.lam * sp.identity(self.op.size, format="csr")).tocsr()

    def f(self, u):
        return self.nl.f(self.op.coords, u, self.B)

    def F(self, u):
        return self.nl.F(self.op.coords, u, self.B)

    def dfdu(self, u, step: float = 1e-7):
        if self.nl.dfdu is not None:
            return self.nl.dfdu(self.op.coords, u, self.B)
        du = step * (1.0 + np.abs(u))
        return (self.f(u + du) - self.f(u)) / du

    def __call__(self, u) -> float:
        u = self.op.check_grid(u)
        return 0.5 * quadratic_form(u, self.lam, self.op) - self.op.integrate(self.F(u))

    def gradient(self, u) -> np.ndarray:
        """L^2 gradient: the residual ``(D - lam) u - f(x, u)``."""
        u = self.op.check_grid(u)
        return self.shifted_matrix @ u - self.f(u)


def energy(u, lam, op, nl) -> float:
    return EnergyFunctional(lam, op, nl)(u)


def energy_gradient(u, lam, op, nl) -> np.ndarray:
    return EnergyFunctional(lam, op, nl).gradient(u)
