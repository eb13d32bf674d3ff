"""Band-edge Bloch waves, cutoff packets and the gap direction.

The packet ``Psi_R(x) = R^(-N/2) eta(|x|/R) Psi(x)`` concentrates the edge
Bloch wave on a ball of radius ``2R``; its ``Z`` component with
``R = (b - lam)^(-1/2)`` is the direction along which the nontrivial branch
leaves the gap edge.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional, Sequence

import numpy as np

from .reporting import Report, bounded_ratio, loglog_slope
from .spectral import (BandStructure, DiscreteOperator, PeriodicPotential, SpectralGap,
                       SpectralSplit, build_split, cell_matrix, quadratic_form)


class DomainTooSmallError(ValueError):
    def __init__(self, cells: int, required: int, R: float):
        super().__init__(f"domain of {cells} cells cannot hold a packet of radius R={R:.4g}; "
                         f"resize to at least {required} cells")
        self.cells = cells
        self.required = required
        self.R = R


def required_cells(R: float) -> int:
    """``ceil(4R) + 2`` rounded up to even, so that k = pi is a box momentum."""
    cells = math.ceil(4.0 * R - 1e-12) + 2
    return cells + (cells % 2)


# --------------------------------------------------------------------------
# Bloch wave
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class BlochWave:
    """Cell samples of a band-edge Bloch wave, unit mean square over one cell."""

    potential: PeriodicPotential
    points_per_cell: int
    energy: float
    k: float
    cell: np.ndarray = field(repr=False)
    band: int = 0
    real_part_only: bool = False
    residual: float = 0.0

    def on(self, op: DiscreteOperator) -> np.ndarray:
        """Extend quasi-periodically over the operator's grid (1-D)."""
        if op.points_per_cell != self.points_per_cell:
            raise ValueError("Bloch wave and operator use different cell resolutions")
        m = self.points_per_cell
        idx = np.arange(op.size)
        cell_index = -(op.cells // 2) + idx // m
        vals = np.exp(1j * self.k * cell_index) * self.cell[idx % m]
        return vals.real.copy()


def bloch_wave(potential: PeriodicPotential, points_per_cell: int, band: int, k: float,
               shift: float = 0.0) -> BlochWave:
    """Eigenvector of the cell problem at quasi-momentum ``k``.

    At ``k`` in {0, pi} the cell matrix is real and the wave is real; otherwise
    only its real part is a meaningful real profile and ``real_part_only`` is set.
    """
    m = points_per_cell
    mat = cell_matrix(potential, m, k, shift)
    w, vecs = np.linalg.eigh(mat)
    p = vecs[:, band]
    real = np.isclose(np.cos(k) ** 2, 1.0, atol=1e-12)
    if real:
        p = p * np.exp(-1j * np.angle(p[np.argmax(np.abs(p))]))
        p = p.real.astype(float)
    p = p / math.sqrt(np.mean(np.abs(p) ** 2))
    if real and p[0] < 0:
        p = -p
    resid = np.linalg.norm(mat @ p - w[band] * p) / np.linalg.norm(p)
    return BlochWave(potential, m, float(w[band]), float(k), p, band, not real, float(resid))


def edge_bloch_wave(bands: BandStructure, gap: SpectralGap, tol: float = 1e-6) -> BlochWave:
    """Bloch wave at the upper gap edge ``b`` (bottom of ``gap.upper_band``)."""
    wave = bloch_wave(bands.potential, bands.points_per_cell, gap.upper_band, gap.k_b, bands.shift)
    if wave.residual > tol * max(1.0, abs(wave.energy)):
        raise RuntimeError(f"edge Bloch wave residual {wave.residual:.3e} above tolerance")
    return wave


def bloch_residual(wave: BlochWave, op: DiscreteOperator) -> float:
    """``|(-Delta_h + V - b) Psi|_2 / |Psi|_2`` on the operator's grid."""
    psi = wave.on(op)
    r = op.apply(psi) - wave.energy * psi
    return op.l2_norm(r) / op.l2_norm(psi)


# --------------------------------------------------------------------------
# cutoff and packets
# --------------------------------------------------------------------------

def _flat_exp(t):
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    pos = t > 0
    out[pos] = np.exp(-1.0 / t[pos])
    return out


@dataclass(frozen=True)
class Cutoff:
    """Smooth radial profile: 1 on [0, 1], 0 on [2, inf), C-infinity in between."""

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        up, down = _flat_exp(2.0 - r), _flat_exp(r - 1.0)
        return up / (up + down)


@dataclass(frozen=True)
class TestFunction:
    R: float
    values: np.ndarray = field(repr=False)
    op: DiscreteOperator = field(repr=False)


def make_psi_R(wave: BlochWave, eta: Cutoff, R: float, op: DiscreteOperator) -> TestFunction:
    need = required_cells(R)
    if op.cells < need:
        raise DomainTooSmallError(op.cells, need, R)
    N = op.dimension
    vals = R ** (-N / 2.0) * eta(op.radius / R) * wave.on(op)
    return TestFunction(R, vals, op)


def verify_bloch_properties(wave: BlochWave, eta: Cutoff, R_list: Sequence[float], weight,
                            gammas: Sequence[float] = (2.0, 4.0), op: Optional[DiscreteOperator] = None,
                            ratio_bound: float = 10.0, weighted_floor: float = 1e-3) -> Report:
    """Finite-scale behaviour of the packets ``Psi_R`` as ``R`` grows."""
    R_list = sorted(float(R) for R in R_list)
    if op is None:
        op = DiscreteOperator(wave.potential, required_cells(R_list[-1]), wave.points_per_cell)
    N = op.dimension
    b = wave.energy
    B = weight(*op.coords)
    rep = Report("bloch-packets", anchor="concentrating Bloch packets Psi_R: boundedness and scaling",
                 params={"R": R_list, "gammas": list(gammas), "cells": op.cells,
                         "points_per_cell": op.points_per_cell, "b": b, "k": wave.k,
                         "real_part_only": wave.real_part_only})
    for R in R_list:
        psi = make_psi_R(wave, eta, R, op).values
        resid = op.apply(psi) - b * psi
        row = {"R": R,
               "h1_norm": op.h1_norm(psi),
               "R2_Qb": R**2 * quadratic_form(psi, b, op),
               "R2_residual_sq": R**2 * op.inner(resid, resid),
               "sup_scaled": R ** (N / 2.0) * op.lp_norm(psi, np.inf)}
        for g in gammas:
            row[f"weighted_gamma_{g:g}"] = R ** ((g - 2.0) * N / 2.0) * op.integrate(B * np.abs(psi) ** g)
        rep.add_row(**row)
    cols = ["h1_norm", "R2_Qb", "R2_residual_sq", "sup_scaled"] + [f"weighted_gamma_{g:g}" for g in gammas]
    for c in cols:
        ratio = bounded_ratio(rep.column(c))
        rep.verdict(f"bounded_{c}", ratio < ratio_bound, max_over_min=ratio)
    for g in gammas:
        tail = rep.column(f"weighted_gamma_{g:g}")[-3:]
        rep.verdict(f"weighted_bounded_below_gamma_{g:g}", float(tail.min()) >= weighted_floor, min_value=float(tail.min()))
    sup = rep.column("sup_scaled") / np.array(R_list) ** (N / 2.0)
    doubling = [sup[i + 1] / sup[i] for i in range(len(R_list) - 1)
                if math.isclose(R_list[i + 1], 2 * R_list[i])]
    if doubling:
        target = 2.0 ** (-N / 2.0)
        rep.verdict("sup_halving_on_doubling", all(target / 1.5 <= d <= target * 1.5 for d in doubling),
                    ratios=doubling)
    return rep


# --------------------------------------------------------------------------
# gap direction
# --------------------------------------------------------------------------

@dataclass
class GapDirection:
    lam: float
    R: float
    zeta: np.ndarray = field(repr=False)
    psi_R: np.ndarray = field(repr=False)
    op: DiscreteOperator = field(repr=False)
    p_psi_norm: float = 0.0
    leakage: float = 0.0

    @property
    def h1_norm(self) -> float:
        return self.op.h1_norm(self.zeta)

    @property
    def sup_norm(self) -> float:
        return self.op.lp_norm(self.zeta, np.inf)

    def lp_norm(self, gamma: float) -> float:
        return self.op.lp_norm(self.zeta, gamma)


def gap_direction(lam: float, split: SpectralSplit, wave: BlochWave, eta: Cutoff, gap: SpectralGap,
                  leakage_tol: float = 1e-8) -> GapDirection:
    """``zeta = Q Psi_R`` with ``R = (b - lam)^(-1/2)``."""
    if not gap.contains(lam):
        raise ValueError(f"lambda={lam} not in gap ({gap.a}, {gap.b})")
    R = (gap.b - lam) ** -0.5
    op = split.op
    psi = make_psi_R(wave, eta, R, op).values
    p_psi = split.P(psi)
    zeta = psi - p_psi
    zn = op.h1_norm(zeta)
    leak = op.h1_norm(split.P(zeta)) / zn if zn > 0 else 0.0
    if leak > leakage_tol:
        raise RuntimeError(f"gap direction leaks into Y: {leak:.3e}")
    return GapDirection(lam, R, zeta, psi, op, op.h1_norm(p_psi), leak)


class GapContext:
    """A shifted gap problem with domain auto-sizing and cached splits.

    For each packet radius the box grows to :func:`required_cells` (times
    ``domain_factor``) so the packet never reaches the boundary; splits are
    cached per box size.
    """

    def __init__(self, potential: PeriodicPotential, gap: SpectralGap, wave: BlochWave,
                 points_per_cell: int = 32, eta: Optional[Cutoff] = None, domain_factor: float = 1.0,
                 min_cells: int = 8):
        if not gap.contains_zero:
            raise ValueError("gap must contain 0; shift the potential first")
        self.potential = potential
        self.gap = gap
        self.wave = wave
        self.points_per_cell = points_per_cell
        self.eta = eta or Cutoff()
        self.domain_factor = domain_factor
        self.min_cells = min_cells
        self._splits: dict = {}

    @classmethod
    def from_potential(cls, potential: PeriodicPotential, gap_index: int = 0, points_per_cell: int = 32,
                       shift: Optional[float] = None, n_k: int = 65, **kw) -> "GapContext":
        from .spectral import bloch_bands, find_gaps, shift_to_gap

        bands = bloch_bands(potential, gap_index + 3, n_k, points_per_cell)
        gaps = find_gaps(bands)
        if len(gaps) <= gap_index:
            raise ValueError(f"gap index {gap_index} not found ({len(gaps)} gaps resolved)")
        shifted, gap = shift_to_gap(potential, gaps[gap_index], shift)
        sbands = bloch_bands(shifted, gap_index + 3, n_k, points_per_cell)
        sgap = [g for g in find_gaps(sbands) if g.contains_zero][0]
        return cls(shifted, sgap, edge_bloch_wave(sbands, sgap), points_per_cell, **kw)

    def cells_for(self, R: float) -> int:
        cells = max(self.min_cells, required_cells(self.domain_factor * R))
        return cells + (cells % 2)

    def cells_for_lambda(self, lam: float) -> int:
        return self.cells_for((self.gap.b - lam) ** -0.5)

    def operator(self, cells: int) -> DiscreteOperator:
        return DiscreteOperator(self.potential, cells, self.points_per_cell)

    def split(self, cells: int) -> SpectralSplit:
        if cells not in self._splits:
            self._splits[cells] = build_split(self.operator(cells))
        return self._splits[cells]

    def direction(self, lam: float) -> GapDirection:
        if not self.gap.contains(lam):
            raise ValueError(f"lambda={lam} not in gap ({self.gap.a}, {self.gap.b})")
        return gap_direction(lam, self.split(self.cells_for_lambda(lam)), self.wave, self.eta, self.gap)


def verify_zeta_estimates(lams: Sequence[float], ctx: GapContext, weight,
                          gammas: Sequence[float] = (2.0, 4.0), ratio_bound: float = 10.0,
                          floor: float = 1e-3) -> Report:
    """Scaled gap-direction quantities as ``lam -> b``."""
    b = ctx.gap.b
    N = ctx.potential.dimension
    rep = Report("gap-direction", anchor="gap direction zeta_lambda: estimates as lambda -> b",
                 params={"b": b, "lambdas": list(lams), "gammas": list(gammas)})
    for lam in lams:
        d = b - lam
        zd = ctx.direction(lam)
        op = zd.op
        B = weight(*op.coords)
        row = {"lambda": lam, "d": d, "R": zd.R, "cells": op.cells,
               "zeta_h1": zd.h1_norm,
               "Q_over_d": quadratic_form(zd.zeta, lam, op) / d,
               "sup_scaled": zd.sup_norm * d ** (-N / 4.0),
               "P_psi_over_d": zd.p_psi_norm / d,
               "leakage": zd.leakage}
        for g in gammas:
            row[f"weighted_gamma_{g:g}"] = d ** (-(g - 2.0) * N / 4.0) * op.integrate(B * np.abs(zd.zeta) ** g)
        rep.add_row(**row)
    for c in ("zeta_h1", "Q_over_d", "sup_scaled", "P_psi_over_d"):
        ratio = bounded_ratio(rep.column(c))
        rep.verdict(f"bounded_{c}", ratio < ratio_bound, max_over_min=ratio)
    for g in gammas:
        tail = rep.column(f"weighted_gamma_{g:g}")[-3:]
        rep.verdict(f"bounded_below_gamma_{g:g}", float(tail.min()) >= floor, min_value=float(tail.min()))
    ds = rep.column("d")
    # observed power laws, recorded for the reader
    rep.params["fitted_slopes"] = {c: loglog_slope(ds, rep.column(c))
                                   for c in ("zeta_h1", "Q_over_d", "sup_scaled", "P_psi_over_d")}
    return rep


# --------------------------------------------------------------------------
# effective-mass envelope
# --------------------------------------------------------------------------

def edge_curvature(wave: BlochWave, shift: float = 0.0, dk: float = 1e-3) -> float:
    """Second derivative of the edge band in ``k`` at the wave's quasi-momentum."""
    def energy(k):
        return np.linalg.eigvalsh(cell_matrix(wave.potential, wave.points_per_cell, k, shift))[wave.band]

    return float((energy(wave.k + dk) - 2.0 * energy(wave.k) + energy(wave.k - dk)) / dk**2)


def envelope_profile(lam: float, gap: SpectralGap, wave: BlochWave, weight, beta: float,
                     op: DiscreteOperator, curvature: Optional[float] = None) -> np.ndarray:
    """Small-amplitude soliton ansatz ``A(x) Psi(x)`` near the upper edge (1-D).

    ``A`` solves ``-(E''/2) A'' + (b - lam) A = g |A|^(beta-2) A`` with the
    cell-averaged coupling ``g = beta <B |Psi|^beta>``.
    """
    if op.dimension != 1:
        raise ValueError("envelope ansatz implemented for 1-D grids")
    d = gap.b - lam
    if d <= 0:
        raise ValueError(f"lambda={lam} not below the edge b={gap.b}")
    c = 0.5 * (edge_curvature(wave) if curvature is None else curvature)
    xs = np.arange(wave.points_per_cell) / wave.points_per_cell
    g = beta * float(np.mean(weight(xs) * np.abs(wave.cell) ** beta))
    amp = (beta * d / (2.0 * g)) ** (1.0 / (beta - 2.0))
    kappa = 0.5 * (beta - 2.0) * math.sqrt(d / c)
    env = amp / np.cosh(kappa * op.x) ** (2.0 / (beta - 2.0))
    return env * wave.on(op)


def edge_fraction(u: np.ndarray, op: DiscreteOperator) -> float:
    """``max |u|`` over the two outermost cells relative to ``max |u|`` (1-D)."""
    m = op.points_per_cell
    a = np.abs(u)
    top = a.max()
    return float(max(a[:m].max(), a[-m:].max()) / top) if top > 0 else 0.0
