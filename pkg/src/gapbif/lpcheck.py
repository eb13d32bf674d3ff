"""L^p behaviour of the spectral projectors, with a contour-integral projector as oracle."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .blochtest import Cutoff, bloch_wave
from .reporting import Report
from .spectral import DiscreteOperator, PeriodicPotential, SpectralSplit, build_split

DEFAULT_EXPONENTS = (2.0, 3.0, 4.0, 6.0, math.inf)


def _p_label(p: float) -> str:
    return "inf" if math.isinf(p) else f"{p:g}"


# --------------------------------------------------------------------------
# probes
# --------------------------------------------------------------------------

@dataclass
class LpProbeSet:
    """Reproducible test functions defined as functions of ``x``.

    Families: random sums of Gaussian bumps, whole-cell translates of one bump,
    and cutoff Bloch packets of the upper edge band.  Because the probes are
    continuous functions, the same probe can be sampled on refined or enlarged
    grids.
    """

    seed: int = 0
    n_random: int = 12
    n_translates: int = 4
    packet_radii: tuple = (1.0, 2.0)
    exponents: tuple = DEFAULT_EXPONENTS
    packet_band: int = 1
    packet_k: float = math.pi
    _params: list = field(default_factory=list, repr=False)

    def __post_init__(self):
        rng = np.random.default_rng(self.seed)
        self._params = []
        for _ in range(self.n_random):
            n = int(rng.integers(1, 4))
            self._params.append(("random", rng.uniform(-2.0, 2.0, n), rng.uniform(0.15, 1.0, n),
                                 rng.uniform(-1.0, 1.0, n)))
        self._bump = (rng.uniform(-0.5, 0.5), rng.uniform(0.2, 0.6))
        if not self.exponents or any(p < 1 for p in self.exponents):
            raise ValueError("exponents must be >= 1")

    def random_bumps(self, op: DiscreteOperator) -> list:
        out = []
        for _, centers, widths, amps in self._params:
            u = sum(a * np.exp(-0.5 * ((op.x - c) / w) ** 2) for c, w, a in zip(centers, widths, amps))
            out.append(np.asarray(u, dtype=float))
        return out

    def translates(self, op: DiscreteOperator) -> list:
        c, w = self._bump
        base = np.exp(-0.5 * ((op.x - c) / w) ** 2)
        return [np.roll(base, j * op.points_per_cell) for j in range(self.n_translates)]

    def packets(self, op: DiscreteOperator) -> list:
        wave = bloch_wave(op.potential, op.points_per_cell, self.packet_band, self.packet_k, op.shift)
        eta = Cutoff()
        return [R ** -0.5 * eta(op.radius / R) * wave.on(op) for R in self.packet_radii]

    def all(self, op: DiscreteOperator) -> dict:
        probes = {}
        for i, u in enumerate(self.random_bumps(op)):
            probes[f"random_{i}"] = u
        for i, u in enumerate(self.translates(op)):
            probes[f"translate_{i}"] = u
        for R, u in zip(self.packet_radii, self.packets(op)):
            probes[f"packet_R{R:g}"] = u
        for name, u in probes.items():
            if not np.any(u):
                raise ValueError(f"probe {name} vanishes on this grid")
        return probes


def lp_projection_ratio(P, u: np.ndarray, p: float, op: DiscreteOperator) -> float:
    """``|P u|_p / |u|_p`` with discrete quadrature norms (``p = inf``: grid max)."""
    nu = op.lp_norm(u, p)
    if nu == 0:
        raise ValueError("zero input")
    return op.lp_norm(P(u), p) / nu


def lp_continuity_scan(potential: PeriodicPotential, cells: int, points_per_cell: int,
                       probes: LpProbeSet, growth_limit: float = 1.5,
                       translate_tol: float = 1e-6) -> Report:
    """Largest probe ratio per exponent at three resolutions: base, 2x points, 2x cells."""
    levels = {"base": (cells, points_per_cell), "refined": (cells, 2 * points_per_cell),
              "doubled": (2 * cells, points_per_cell)}
    rep = Report("lp-continuity", anchor="L^p continuity of the spectral projectors (probe maxima)",
                 params={"cells": cells, "points_per_cell": points_per_cell, "seed": probes.seed,
                         "exponents": [_p_label(p) for p in probes.exponents], "growth_limit": growth_limit})
    maxima = {}
    translate_dev = 0.0
    for level, (L, m) in levels.items():
        op = DiscreteOperator(potential, L, m)
        split = build_split(op)
        probe_vals = probes.all(op)
        for p in probes.exponents:
            ratios = {name: lp_projection_ratio(split.P, u, p, op) for name, u in probe_vals.items()}
            worst = max(ratios, key=ratios.get)
            maxima[(level, p)] = ratios[worst]
            rep.add_row(p=_p_label(p), level=level, cells=L, points_per_cell=m,
                        max_ratio=ratios[worst], argmax=worst)
            tr = [ratios[k] for k in ratios if k.startswith("translate_")]
            if tr:
                translate_dev = max(translate_dev, (max(tr) - min(tr)) / max(tr))
    p2 = [maxima[(lv, 2.0)] for lv in levels] if 2.0 in probes.exponents else []
    rep.verdict("p2_orthogonal", all(r <= 1.0 + 1e-10 for r in p2), maxima=p2)
    for p in probes.exponents:
        base = maxima[("base", p)]
        g_ref = maxima[("refined", p)] / base
        g_dom = maxima[("doubled", p)] / base
        rep.verdict(f"stable_p{_p_label(p)}", g_ref < growth_limit and g_dom < growth_limit,
                    refinement_growth=g_ref, domain_growth=g_dom)
    rep.verdict("translation_invariance", translate_dev <= translate_tol, max_relative_spread=translate_dev)
    return rep


# --------------------------------------------------------------------------
# contour projector
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Contour:
    """Rectangle ``[left, right] x [-half_height, half_height]`` traversed counterclockwise."""

    left: float
    right: float = 0.0
    half_height: float = 1.0
    nodes: int = 8
    rule: str = "gauss"
    panel_length: float = 1.0

    @classmethod
    def enclosing_negative(cls, eigenvalues: np.ndarray, nodes: int = 8, rule: str = "gauss",
                           margin: float = 1e-6) -> "Contour":
        contour = cls(float(np.min(eigenvalues)) - 1.0, 0.0, 1.0, nodes, rule)
        contour.validate(eigenvalues, margin)
        return contour

    def validate(self, eigenvalues: np.ndarray, margin: float = 1e-6) -> None:
        ev = np.asarray(eigenvalues)
        for crossing in (self.left, self.right):
            dist = float(np.min(np.abs(ev - crossing)))
            if dist < margin:
                raise ValueError(f"contour crosses the real axis at {crossing:g}, {dist:.2e} from the spectrum; "
                                 "move the edge or enlarge the gap margin")

    def corners(self) -> list:
        H = self.half_height
        return [complex(self.left, -H), complex(self.right, -H), complex(self.right, H), complex(self.left, H)]

    def quadrature(self):
        """Nodes ``z_j`` and weights ``w_j`` with ``sum w_j g(z_j) ~ contour integral of g dz``."""
        cs = self.corners()
        nodes, weights = [], []
        if self.rule == "gauss":
            t, wt = np.polynomial.legendre.leggauss(self.nodes)
            for a, b in zip(cs, cs[1:] + cs[:1]):
                panels = max(1, math.ceil(abs(b - a) / self.panel_length))
                for k in range(panels):
                    pa = a + (b - a) * k / panels
                    pb = a + (b - a) * (k + 1) / panels
                    nodes.append(0.5 * (pa + pb) + 0.5 * (pb - pa) * t)
                    weights.append(0.5 * (pb - pa) * wt)
        elif self.rule == "trapezoid":
            for a, b in zip(cs, cs[1:] + cs[:1]):
                n = max(2, self.nodes * max(1, math.ceil(abs(b - a) / self.panel_length)))
                s = np.linspace(0.0, 1.0, n + 1)
                w = np.full(n + 1, 1.0 / n)
                w[0] = w[-1] = 0.5 / n
                nodes.append(a + (b - a) * s)
                weights.append((b - a) * w)
        else:
            raise ValueError(f"unknown quadrature rule {self.rule!r}")
        return np.concatenate(nodes), np.concatenate(weights)


class RieszProjector:
    """``(1 / 2 pi i) \\oint (z - D)^{-1} dz`` applied to vectors, one sparse LU per node."""

    def __init__(self, matrix, contour: Contour):
        self.contour = contour
        self.matrix = sp.csc_matrix(matrix, dtype=complex)
        self.nodes, self.weights = contour.quadrature()
        n = self.matrix.shape[0]
        eye = sp.identity(n, dtype=complex, format="csc")
        self._lu = []
        for z in self.nodes:
            try:
                self._lu.append(spla.splu((z * eye - self.matrix).tocsc()))
            except RuntimeError as exc:
                raise RuntimeError(f"resolvent solve failed at z={z:.4g}; shift the contour edge") from exc

    def __call__(self, v: np.ndarray) -> np.ndarray:
        acc = np.zeros(v.shape, dtype=complex)
        for lu, w in zip(self._lu, self.weights):
            acc += w * lu.solve(v.astype(complex))
        return (acc / (2j * math.pi)).real


def riesz_projector(op: DiscreteOperator, contour: Contour) -> RieszProjector:
    return RieszProjector(op.matrix, contour)


def riesz_agreement(op: DiscreteOperator, split: SpectralSplit, node_counts: Sequence[int] = (4, 8, 16),
                    n_vectors: int = 20, rng=None, rule: str = "gauss", tol: float = 1e-8) -> Report:
    """Contour projector against the eigenvector projector on random vectors."""
    rng = np.random.default_rng(0) if rng is None else rng
    V = rng.standard_normal((n_vectors, op.size))
    ref = [split.P(v) for v in V]
    rep = Report("riesz-projector", anchor="contour-integral representation of the negative spectral projector",
                 params={"cells": op.cells, "points_per_cell": op.points_per_cell, "rule": rule,
                         "node_counts": list(node_counts), "vectors": n_vectors})
    errors = []
    for n in node_counts:
        contour = Contour.enclosing_negative(split.eigenvalues, n, rule)
        R = riesz_projector(op, contour)
        err = max(op.l2_norm(R(v) - r) / op.l2_norm(v) for v, r in zip(V, ref))
        idem = max(op.l2_norm(R(R(v)) - R(v)) / op.l2_norm(v) for v in V[:5])
        errors.append(err)
        rep.add_row(nodes_per_panel=n, total_nodes=len(R.nodes), max_error=err, idempotence=idem)
    rep.verdict("matches_eigenprojector", errors[-1] <= tol, max_error=errors[-1])
    decreasing = all(errors[i + 1] < errors[i] or errors[i + 1] <= 1e-13 for i in range(len(errors) - 1))
    rep.verdict("error_decreases_with_nodes", decreasing, errors=errors)
    idem = rep.column("idempotence")[-1]
    rep.verdict("idempotent", idem <= tol, value=idem)
    return rep


# --------------------------------------------------------------------------
# direct sum
# --------------------------------------------------------------------------

def _random_smooth(op: DiscreteOperator, rng, n_bumps: int = 3) -> np.ndarray:
    half = op.cells / 2.0
    c = rng.uniform(-0.6 * half, 0.6 * half, n_bumps)
    w = rng.uniform(0.2, 1.5, n_bumps)
    a = rng.standard_normal(n_bumps)
    return sum(ai * np.exp(-0.5 * ((op.x - ci) / wi) ** 2) for ci, wi, ai in zip(c, w, a))


def transversality_margin(split: SpectralSplit, p: float, n_pairs: int = 100, seed: int = 0) -> float:
    """``min |y - z|_p`` over random ``|y|_p = |z|_p = 1``, ``y in Y``, ``z in Z``."""
    op = split.op
    rng = np.random.default_rng(seed)
    best = math.inf
    for _ in range(n_pairs):
        y = split.P(_random_smooth(op, rng))
        z = split.Q(_random_smooth(op, rng))
        y = y / op.lp_norm(y, p)
        z = z / op.lp_norm(z, p)
        best = min(best, op.lp_norm(y - z, p))
    return best


def lp_direct_sum_check(potential: PeriodicPotential, cells: int, points_per_cell: int, probes: LpProbeSet,
                        exponents: Optional[Sequence[float]] = None, n_pairs: int = 100,
                        stability: float = 1.5) -> Report:
    """Reconstruction ``u = Pu + Qu`` in L^p and a transversality margin at two resolutions."""
    exponents = tuple(exponents or probes.exponents)
    rep = Report("lp-direct-sum", anchor="L^p direct-sum decomposition into closures of Y and Z",
                 params={"cells": cells, "points_per_cell": points_per_cell, "seed": probes.seed,
                         "pairs": n_pairs, "exponents": [_p_label(p) for p in exponents]})
    margins = {}
    worst_recon = 0.0
    for m in (points_per_cell, 2 * points_per_cell):
        op = DiscreteOperator(potential, cells, m)
        split = build_split(op)
        for name, u in probes.all(op).items():
            # Z-part assembled from positive eigenvectors, independently of P
            rest = u - split.P(u) - split.positive_part(u)
            for p in exponents:
                worst_recon = max(worst_recon, op.lp_norm(rest, p) / op.lp_norm(u, p))
        for p in exponents:
            margins[(m, p)] = transversality_margin(split, p, n_pairs, probes.seed)
            rep.add_row(p=_p_label(p), points_per_cell=m, margin=margins[(m, p)])
    rep.verdict("reconstruction", worst_recon <= 1e-10, max_relative_residual=worst_recon)
    if 2.0 in exponents:
        rep.verdict("p2_orthogonal_margin", all(abs(margins[(m, 2.0)] - math.sqrt(2.0)) <= 1e-10
                                                for m in (points_per_cell, 2 * points_per_cell)),
                    margins=[margins[(m, 2.0)] for m in (points_per_cell, 2 * points_per_cell)])
    for p in exponents:
        a, b = margins[(points_per_cell, p)], margins[(2 * points_per_cell, p)]
        rep.verdict(f"margin_p{_p_label(p)}", a > 0 and b > 0 and max(a, b) / min(a, b) < stability,
                    coarse=a, fine=b)
    return rep
