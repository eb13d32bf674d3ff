"""Nontrivial critical points of the energy and an upper bound for its minimax level."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.optimize import brentq, minimize, minimize_scalar

from .nonlinearity import EnergyFunctional, Nonlinearity
from .spectral import DiscreteOperator, GapCoercivity, SpectralSplit, quadratic_form


class GeometryError(RuntimeError):
    """The energy restricted to the ray ``s * zeta`` has no positive maximum."""


class SolverError(RuntimeError):
    def __init__(self, kind: str, message: str, diagnostics: Optional[dict] = None):
        super().__init__(f"{kind}: {message}")
        self.kind = kind
        self.diagnostics = diagnostics or {}


class ConvergedToTrivial(SolverError):
    def __init__(self, norm: float, threshold: float, diagnostics=None):
        super().__init__("converged-to-trivial",
                         f"Newton reached |u| = {norm:.3e} below threshold {threshold:.3e}", diagnostics)


@dataclass
class SolverConfig:
    tol: float = 1e-9
    max_iter: int = 60
    damping: float = 1.0
    trivial_threshold: float = 1e-6
    min_step: float = 1.0 / 1024


# --------------------------------------------------------------------------
# fiber and linking
# --------------------------------------------------------------------------

def fiber_maximize(lam: float, zeta: np.ndarray, nl: Nonlinearity, op: DiscreteOperator,
                   xtol: float = 1e-12):
    """Maximize ``s -> E_lam(s zeta)`` over ``s >= 0``; returns ``(s*, E*)``."""
    E = EnergyFunctional(lam, op, nl)
    q = quadratic_form(zeta, lam, op)
    if q <= 0:
        raise GeometryError(f"Q_lambda(zeta) = {q:.3e} is not positive; the ray carries no positive energy")

    def phi(s):
        return E(s * zeta)

    def dphi(s):
        u = s * zeta
        return s * q - op.integrate(E.f(u) * zeta)

    s_hi = 1.0 / max(op.h1_norm(zeta), 1e-300)
    for _ in range(200):
        if phi(s_hi) < 0 and dphi(s_hi) < 0:
            break
        s_hi *= 2.0
    else:
        raise GeometryError("energy along the ray stays nonnegative; superlinear growth not detected")
    res = minimize_scalar(lambda s: -phi(s), bounds=(0.0, s_hi), method="bounded",
                          options={"xatol": xtol * s_hi})
    s = float(res.x)
    # polish on the stationarity condition when it brackets
    lo, hi = 0.5 * s, min(1.5 * s, s_hi)
    if dphi(lo) > 0 > dphi(hi):
        s = brentq(dphi, lo, hi, xtol=xtol * s, rtol=4 * np.finfo(float).eps)
    e = phi(s)
    if e <= 0:
        raise GeometryError(f"fiber maximum E* = {e:.3e} is not positive")
    return s, float(e)


def initial_guess(lam: float, zeta: np.ndarray, nl: Nonlinearity, op: DiscreteOperator) -> np.ndarray:
    s, _ = fiber_maximize(lam, zeta, nl, op)
    return s * zeta


@dataclass
class LinkingBound:
    value: float
    fiber_value: float
    s: float
    y_coefficients: np.ndarray = field(repr=False)
    converged: bool = True
    iterations: int = 0
    message: str = ""


def linking_upper_bound(lam: float, split: SpectralSplit, zeta: np.ndarray, nl: Nonlinearity,
                        ascent_iters: int = 200) -> LinkingBound:
    """Largest value of ``E_lam(y + s zeta)`` found over ``y in Y``, ``s >= 0``.

    Starts from the fiber maximizer (``y = 0``) and runs a bounded quasi-Newton
    ascent jointly in the ``Y`` coefficients and ``s``.
    """
    op = split.op
    E = EnergyFunctional(lam, op, nl)
    s0, e0 = fiber_maximize(lam, zeta, nl, op)
    zeta_norm = math.sqrt(op.inner(zeta, zeta))
    scale = s0 * zeta_norm  # natural amplitude for the Y coefficients

    def unpack(v):
        return v[:-1] * scale, v[-1] * s0

    def neg(v):
        c, s = unpack(v)
        u = split.from_coefficients(c) + s * zeta
        g = E.gradient(u)
        grad = np.concatenate([split.coefficients(g) * scale, [op.inner(g, zeta) * s0]])
        return -E(u), -grad

    v0 = np.zeros(split.dim_y + 1)
    v0[-1] = 1.0
    bounds = [(None, None)] * split.dim_y + [(0.0, None)]
    res = minimize(neg, v0, jac=True, method="L-BFGS-B", bounds=bounds,
                   options={"maxiter": ascent_iters, "ftol": 1e-15, "gtol": 1e-12})
    value = -float(res.fun)
    c, s = unpack(res.x)
    if not np.isfinite(value) or value < e0:
        return LinkingBound(e0, e0, s0, np.zeros(split.dim_y), False, int(res.nit), "ascent did not improve")
    return LinkingBound(value, e0, float(s), c, bool(res.success), int(res.nit), str(res.message))


@dataclass
class LinkingProblem:
    """The half-cylinder ``{y + s zeta : s >= 0, |y + s zeta| <= rho}``."""

    lam: float
    zeta: np.ndarray = field(repr=False)
    split: SpectralSplit = field(repr=False)
    rho: float = 0.0
    boundary_max: float = 0.0
    doublings: int = 0

    def describe(self) -> dict:
        return {"lambda": self.lam, "rho": self.rho, "boundary_max": self.boundary_max,
                "doublings": self.doublings, "dim_y": self.split.dim_y}


def _boundary_samples(split: SpectralSplit, zeta: np.ndarray, rho: float, n: int, rng) -> list:
    """Points on the lateral surface and on the flat face ``s = 0`` of the cylinder."""
    op = split.op
    zhat = zeta / op.h1_norm(zeta)
    out = []
    n_flat = n // 4
    for i in range(n):
        c = rng.standard_normal(split.dim_y)
        y = split.from_coefficients(c)
        ny = op.h1_norm(y)
        yhat = y / ny if ny > 0 else y
        if i < n_flat:
            # flat face: |y| in (0, rho], away from the origin where E = 0
            out.append(rho * (0.05 + 0.95 * rng.random()) * yhat)
        else:
            theta = 0.5 * math.pi * rng.random()
            u = math.cos(theta) * zhat + math.sin(theta) * yhat
            out.append(rho * u / op.h1_norm(u))
    return out


def linking_problem(lam: float, split: SpectralSplit, zeta: np.ndarray, nl: Nonlinearity,
                    boundary_samples: int = 200, rng=None, max_doublings: int = 30) -> LinkingProblem:
    """Pick ``rho`` so that every sampled boundary point has negative energy."""
    rng = np.random.default_rng(0) if rng is None else rng
    op = split.op
    E = EnergyFunctional(lam, op, nl)
    s0, _ = fiber_maximize(lam, zeta, nl, op)
    rho = 10.0 * s0 * op.h1_norm(zeta)
    for k in range(max_doublings):
        vals = [E(u) for u in _boundary_samples(split, zeta, rho, boundary_samples, rng)]
        top = max(vals)
        if top < 0:
            return LinkingProblem(lam, zeta, split, rho, top, k)
        rho *= 2.0
    raise GeometryError(f"boundary energy still nonnegative at rho = {rho:.3e}")


# --------------------------------------------------------------------------
# Newton solver
# --------------------------------------------------------------------------

@dataclass
class CriticalPoint:
    lam: float
    u: np.ndarray = field(repr=False)
    op: DiscreteOperator = field(repr=False)
    energy: float
    residual: float
    h1_norm: float
    y_norm: float = float("nan")
    z_norm: float = float("nan")
    iterations: int = 0
    history: list = field(default_factory=list, repr=False)
    shift_cells: int = 0
    seed_kind: str = "guess"

    def with_split(self, split: SpectralSplit) -> "CriticalPoint":
        y = split.P(self.u)
        self.y_norm = self.op.h1_norm(y)
        self.z_norm = self.op.h1_norm(self.u - y)
        return self


def trivial_threshold(lam: float, b: float, nl: Nonlinearity, base: float = 1e-6) -> float:
    """Nontriviality threshold, shrunk along the expected branch scaling near ``b``."""
    N = nl.dimension
    theta = 1.0 / (nl.beta - 2.0) - N / 4.0
    d = b - lam
    if d <= 0 or theta <= 0:
        return base
    return min(base, d ** theta / 10.0)


def recenter(u: np.ndarray, op: DiscreteOperator, tie_tol: float = 1e-10):
    """Roll by whole cells so the leftmost ``|u|`` maximum lies in the central cell."""
    if op.dimension != 1:
        return u, 0
    a = np.abs(u)
    i = int(np.flatnonzero(a >= a.max() - tie_tol)[0])
    m = op.points_per_cell
    shift = op.center_index // m - i // m
    return np.roll(u, shift * m), shift


def jacobian(u: np.ndarray, E: EnergyFunctional) -> sp.csc_matrix:
    return (E.shifted_matrix - sp.diags(E.dfdu(u))).tocsc()


def solve_critical_point(lam: float, guess: np.ndarray, op: DiscreteOperator, nl: Nonlinearity,
                         cfg: Optional[SolverConfig] = None, threshold: Optional[float] = None,
                         recentre: bool = True) -> CriticalPoint:
    """Damped Newton iteration on ``grad E_lam(u) = 0``."""
    cfg = cfg or SolverConfig()
    threshold = cfg.trivial_threshold if threshold is None else threshold
    E = EnergyFunctional(lam, op, nl)
    u = op.check_grid(np.array(guess, dtype=float))
    g = E.gradient(u)
    res = op.l2_norm(g)
    history = [res]
    for it in range(1, cfg.max_iter + 1):
        scale = max(op.l2_norm(u), 1e-300)
        if res <= cfg.tol * scale:
            break
        try:
            step = spla.splu(jacobian(u, E)).solve(-g)
        except RuntimeError as exc:
            raise SolverError("singular-jacobian", f"lambda={lam}: {exc}", {"iterations": it}) from exc
        if not np.all(np.isfinite(step)):
            raise SolverError("singular-jacobian", f"lambda={lam}: non-finite Newton step", {"iterations": it})
        t = cfg.damping
        while True:
            trial = u + t * step
            g_trial = E.gradient(trial)
            r_trial = op.l2_norm(g_trial)
            if r_trial < (1.0 - 1e-4 * t) * res or t <= cfg.min_step:
                break
            t *= 0.5
        u, g, res = trial, g_trial, r_trial
        history.append(res)
        if not np.isfinite(res):
            raise SolverError("diverged", f"lambda={lam}: residual not finite", {"history": history})
    else:
        if res > cfg.tol * max(op.l2_norm(u), 1e-300):
            raise SolverError("max-iterations", f"lambda={lam}: residual {res:.3e} after {cfg.max_iter} steps",
                              {"history": history})
    norm = op.h1_norm(u)
    if norm < threshold:
        raise ConvergedToTrivial(norm, threshold, {"history": history})
    shift = 0
    if recentre:
        u, shift = recenter(u, op)
        g = E.gradient(u)
        res = op.l2_norm(g)
    return CriticalPoint(lam, u, op, float(E(u)), float(res), float(norm), iterations=len(history) - 1,
                         history=history, shift_cells=shift)


def independent_residual(u: np.ndarray, lam: float, op: DiscreteOperator, nl: Nonlinearity) -> float:
    """``|(-Delta + V - lam) u - f(x,u)|_2 / |u|_2`` with a freshly assembled stencil."""
    if op.dimension != 1:
        raise ValueError("stencil residual implemented for 1-D grids")
    h = op.h
    x = -(op.cells // 2) + np.arange(op.size) * h
    lap = (2.0 * u - np.roll(u, 1) - np.roll(u, -1)) / h**2
    r = lap + (op.potential(x) + op.shift - lam) * u - nl.f((x,), u)
    return math.sqrt(h * np.sum(r * r)) / math.sqrt(h * np.sum(u * u))


def nonnegative_level(cp: CriticalPoint, nl: Nonlinearity) -> float:
    """``E(u) - <grad E(u), u>/2 = int (f u / 2 - F)``."""
    E = EnergyFunctional(cp.lam, cp.op, nl)
    u = cp.u
    return float(cp.op.integrate(0.5 * E.f(u) * u - E.F(u)))


def splitting_slack(cp: CriticalPoint, split: SpectralSplit, coer: GapCoercivity) -> float:
    """``Q(z) - Q(y) - beta|z|^2 - alpha|y|^2`` at the solution (nonnegative up to round-off)."""
    op = cp.op
    y = split.P(cp.u)
    z = cp.u - y
    lam = cp.lam
    return (quadratic_form(z, lam, op) - quadratic_form(y, lam, op)
            - coer.beta * op.h1_norm(z) ** 2 - coer.alpha * op.h1_norm(y) ** 2)


def verify_norm_estimate(cp: CriticalPoint, c_ub: float, coer: GapCoercivity) -> float:
    """``N_lam |u|^2 / c_ub``."""
    if c_ub <= 0:
        raise ValueError(f"linking upper bound must be positive, got {c_ub:.3e}")
    return coer.n_lambda * cp.h1_norm ** 2 / c_ub


def coercivity_for(lam: float, split: SpectralSplit, gap) -> GapCoercivity:
    from .spectral import coercivity

    return coercivity(lam, split, gap)
