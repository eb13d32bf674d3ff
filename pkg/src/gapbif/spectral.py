"""Periodic Schrodinger operators on a finite-difference lattice.

The operator ``-d^2/dx^2 + V`` is discretized with second-order centered
differences on a periodic box of ``L`` whole unit cells, ``m`` points per
cell.  Because the box is an integer number of cells, the matrix commutes
with cell translations and block-diagonalizes over the discrete
quasi-momenta ``k_j = 2 pi j / L``; every routine that needs eigenpairs of
the full box can therefore work sector by sector on ``m x m`` cell
matrices.  The dense eigendecomposition of the full matrix is kept as an
independent route (``backend="dense"``) and works for any symmetric
matrix.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
from scipy.optimize import minimize_scalar


class GapMarginError(ValueError):
    """Raised when an eigenvalue of the discrete operator sits on 0."""


class GridMismatchError(ValueError):
    pass


# --------------------------------------------------------------------------
# potentials
# --------------------------------------------------------------------------

def _mathieu(q: float = 1.0) -> Callable[[np.ndarray], np.ndarray]:
    return lambda x: 2.0 * q * np.cos(2.0 * np.pi * x)


def _constant(c: float = 0.0) -> Callable[[np.ndarray], np.ndarray]:
    return lambda x: np.full_like(np.asarray(x, dtype=float), c)


def _two_cosine(q1: float = 1.0, q2: float = 0.5) -> Callable[[np.ndarray], np.ndarray]:
    return lambda x: 2.0 * q1 * np.cos(2 * np.pi * x) + 2.0 * q2 * np.cos(4 * np.pi * x)


POTENTIALS = {
    "mathieu": _mathieu,
    "constant": _constant,
    "zero": lambda: _constant(0.0),
    "two_cosine": _two_cosine,
}


@dataclass(frozen=True, eq=False)
class PeriodicPotential:
    """A bounded, 1-periodic potential ``V`` in ``dimension`` 1 or 2.

    In two dimensions the potential is separable, ``V(x, y) = V1(x) + V1(y)``.
    ``offset`` is added to the closed form; :func:`shift_to_gap` uses it to
    move a spectral gap around 0.
    """

    name: str
    params: tuple = ()
    dimension: int = 1
    offset: float = 0.0
    func: Optional[Callable[[np.ndarray], np.ndarray]] = field(default=None, repr=False)

    def __post_init__(self):
        if self.dimension not in (1, 2):
            raise ValueError(f"dimension must be 1 or 2, got {self.dimension}")
        if self.func is None and self.name not in POTENTIALS:
            raise ValueError(f"unknown potential {self.name!r}; known: {sorted(POTENTIALS)}")

    @classmethod
    def mathieu(cls, q: float = 1.0, dimension: int = 1) -> "PeriodicPotential":
        return cls("mathieu", (("q", float(q)),), dimension)

    @classmethod
    def constant(cls, c: float = 0.0, dimension: int = 1) -> "PeriodicPotential":
        return cls("constant", (("c", float(c)),), dimension)

    @classmethod
    def from_function(cls, func, name: str = "custom", dimension: int = 1) -> "PeriodicPotential":
        return cls(name, (), dimension, 0.0, func)

    @cached_property
    def _profile(self):
        if self.func is not None:
            return self.func
        return POTENTIALS[self.name](**dict(self.params))

    def profile(self, x) -> np.ndarray:
        """One-dimensional profile ``V1`` (offset included), wrapped to [0, 1)."""
        x = np.asarray(x, dtype=float)
        return self._profile(np.mod(x, 1.0)) + self.offset

    def __call__(self, *coords) -> np.ndarray:
        if len(coords) != self.dimension:
            raise ValueError(f"expected {self.dimension} coordinate arrays")
        if self.dimension == 1:
            return self.profile(coords[0])
        # separable: offset counted once
        return self.profile(coords[0]) + self.profile(coords[1]) - self.offset

    def cell_values(self, m: int) -> np.ndarray:
        """Profile on the uniform cell grid ``j / m``, ``j = 0..m-1``."""
        return self.profile(np.arange(m) / m)

    def sup_norm(self, m: int = 256) -> float:
        g = np.arange(m) / m
        if self.dimension == 1:
            return float(np.max(np.abs(self(g))))
        X, Y = np.meshgrid(g, g, indexing="ij")
        return float(np.max(np.abs(self(X, Y))))

    def shifted(self, delta: float) -> "PeriodicPotential":
        """Return ``V + delta``."""
        return PeriodicPotential(self.name, self.params, self.dimension, self.offset + delta, self.func)

    def describe(self) -> dict:
        return {"name": self.name, **dict(self.params), "dimension": self.dimension, "offset": self.offset}


# --------------------------------------------------------------------------
# discrete operator on a periodic box
# --------------------------------------------------------------------------

def periodic_laplacian_1d(n: int, h: float) -> sp.csr_matrix:
    """``-d^2/dx^2`` with periodic wraparound; symmetric positive semidefinite."""
    if n < 3:
        raise ValueError("need at least 3 grid points")
    main = np.full(n, 2.0)
    off = -np.ones(n - 1)
    mat = sp.diags([off, main, off], [-1, 0, 1], shape=(n, n), format="lil")
    mat[0, n - 1] = -1.0
    mat[n - 1, 0] = -1.0
    return (mat.tocsr() / h**2)


@dataclass(frozen=True, eq=False)
class DiscreteOperator:
    """``-Delta_h + V + shift`` on ``cells`` unit cells per axis (periodic).

    The grid is aligned with the lattice: along each axis
    ``x_i = -(cells // 2) + i h`` so that cell boundaries sit at integers and
    ``x = 0`` is a grid point.
    """

    potential: PeriodicPotential
    cells: int
    points_per_cell: int = 32
    shift: float = 0.0

    def __post_init__(self):
        if self.cells < 1 or self.points_per_cell < 3:
            raise ValueError("need cells >= 1 and points_per_cell >= 3")

    @property
    def dimension(self) -> int:
        return self.potential.dimension

    @property
    def h(self) -> float:
        return 1.0 / self.points_per_cell

    @property
    def n_axis(self) -> int:
        return self.cells * self.points_per_cell

    @property
    def size(self) -> int:
        return self.n_axis ** self.dimension

    @property
    def cell_volume(self) -> float:
        """Quadrature weight ``h^N``."""
        return self.h ** self.dimension

    @cached_property
    def x_axis(self) -> np.ndarray:
        return -(self.cells // 2) + np.arange(self.n_axis) * self.h

    @cached_property
    def coords(self) -> tuple:
        if self.dimension == 1:
            return (self.x_axis,)
        X, Y = np.meshgrid(self.x_axis, self.x_axis, indexing="ij")
        return (X.ravel(), Y.ravel())

    @property
    def x(self) -> np.ndarray:
        return self.coords[0]

    @cached_property
    def radius(self) -> np.ndarray:
        """Euclidean distance of each grid point from the origin."""
        return np.sqrt(sum(c**2 for c in self.coords))

    @cached_property
    def center_index(self) -> int:
        return int(np.argmin(self.radius))

    @cached_property
    def v(self) -> np.ndarray:
        return self.potential(*self.coords) + self.shift

    @cached_property
    def laplacian(self) -> sp.csr_matrix:
        lap = periodic_laplacian_1d(self.n_axis, self.h)
        if self.dimension == 1:
            return lap
        eye = sp.identity(self.n_axis, format="csr")
        return (sp.kron(lap, eye) + sp.kron(eye, lap)).tocsr()

    @cached_property
    def matrix(self) -> sp.csr_matrix:
        return (self.laplacian + sp.diags(self.v)).tocsr()

    def apply(self, u: np.ndarray) -> np.ndarray:
        return self.matrix @ u

    def check_grid(self, u: np.ndarray) -> np.ndarray:
        u = np.asarray(u)
        if u.shape != (self.size,):
            raise GridMismatchError(f"grid function has shape {u.shape}, operator grid needs ({self.size},)")
        return u

    # --- quadrature -------------------------------------------------------

    def inner(self, u, v) -> float:
        return float(np.dot(u, v) * self.cell_volume)

    def forward_differences(self, u: np.ndarray) -> list:
        u = self.check_grid(u)
        if self.dimension == 1:
            return [(np.roll(u, -1) - u) / self.h]
        U = u.reshape(self.n_axis, self.n_axis)
        return [((np.roll(U, -1, axis=ax) - U) / self.h).ravel() for ax in (0, 1)]

    def gradient_energy(self, u) -> float:
        return float(sum(np.sum(d**2) for d in self.forward_differences(u)) * self.cell_volume)

    def l2_norm(self, u) -> float:
        return math.sqrt(self.inner(u, u))

    def h1_norm(self, u) -> float:
        """Discrete ``H^1`` norm with the operator's own difference stencil."""
        return math.sqrt(self.gradient_energy(u) + self.inner(u, u))

    def lp_norm(self, u, p) -> float:
        u = np.abs(self.check_grid(u))
        if p == np.inf:
            return float(u.max())
        return float((np.sum(u**p) * self.cell_volume) ** (1.0 / p))

    def integrate(self, values) -> float:
        return float(np.sum(values) * self.cell_volume)

    def resized(self, cells: int) -> "DiscreteOperator":
        return DiscreteOperator(self.potential, cells, self.points_per_cell, self.shift)


def quadratic_form(u: np.ndarray, lam: float, op: DiscreteOperator) -> float:
    """``int |grad u|^2 + (V - lam) u^2`` by forward differences.

    Summation by parts makes this equal to ``<(D - lam) u, u>`` exactly.
    """
    u = op.check_grid(u)
    return op.gradient_energy(u) + op.integrate((op.v - lam) * u**2)


# --------------------------------------------------------------------------
# Floquet-Bloch cell problems
# --------------------------------------------------------------------------

def cell_laplacian(m: int, k: float) -> np.ndarray:
    """Twisted cell Laplacian for ``u(x + 1) = exp(i k) u(x)`` (grid step 1/m)."""
    h2 = (1.0 / m) ** 2
    phase = np.exp(1j * k)
    if abs(phase.imag) < 1e-14:
        phase = phase.real
    lap = np.zeros((m, m), dtype=complex if np.iscomplexobj(phase) else float)
    idx = np.arange(m)
    lap[idx, idx] = 2.0
    lap[idx[:-1], idx[1:]] = -1.0
    lap[idx[1:], idx[:-1]] = -1.0
    lap[m - 1, 0] += -phase
    lap[0, m - 1] += -np.conj(phase)
    return lap / h2


def cell_matrix(potential: PeriodicPotential, m: int, k: float, shift: float = 0.0) -> np.ndarray:
    """Floquet matrix of the 1-D lattice operator at quasi-momentum ``k``."""
    return cell_laplacian(m, k) + np.diag(potential.cell_values(m) + shift)


def _cell_eigh(potential, m, k, shift=0.0, n_bands=None):
    mat = cell_matrix(potential, m, k, shift)
    if n_bands is None:
        return np.linalg.eigh(mat)
    return sla.eigh(mat, subset_by_index=[0, n_bands - 1])


@dataclass(frozen=True)
class BandStructure:
    """Lowest ``n_bands`` Floquet eigenvalues on a uniform k-grid of [-pi, pi].

    For ``dimension == 2`` (separable potential) ``k`` has shape ``(n_k**2, 2)``.
    """

    potential: PeriodicPotential
    points_per_cell: int
    k: np.ndarray
    energies: np.ndarray
    shift: float = 0.0

    @property
    def n_bands(self) -> int:
        return self.energies.shape[1]

    def band(self, j: int) -> np.ndarray:
        return self.energies[:, j]

    def band_function(self, j: int) -> Callable[[float], float]:
        """Continuous-k evaluation of band ``j`` (1-D only)."""
        if self.potential.dimension != 1:
            raise NotImplementedError("continuous band evaluation is 1-D only")

        def energy(k):
            w = sla.eigh(cell_matrix(self.potential, self.points_per_cell, k, self.shift),
                         eigvals_only=True, subset_by_index=[0, j])
            return float(w[j])

        return energy


class BandComputationError(RuntimeError):
    pass


def bloch_bands(potential: PeriodicPotential, n_bands: int = 4, n_k: int = 65,
                points_per_cell: int = 32, shift: float = 0.0,
                residual_tol: float = 1e-8) -> BandStructure:
    """Band functions ``E_j(k)`` on ``n_k`` uniformly spaced ``k`` in [-pi, pi]."""
    if n_bands < 2 or n_k < 8:
        raise ValueError("need n_bands >= 2 and n_k >= 8")
    m = points_per_cell
    if n_bands > m:
        raise ValueError("n_bands cannot exceed points_per_cell")
    ks = np.linspace(-np.pi, np.pi, n_k)
    one_d = potential if potential.dimension == 1 else PeriodicPotential(
        potential.name, potential.params, 1, potential.offset, potential.func)
    energies = np.empty((n_k, n_bands))
    for i, k in enumerate(ks):
        try:
            w, vecs = _cell_eigh(one_d, m, k, 0.0, n_bands)
        except np.linalg.LinAlgError as exc:
            raise BandComputationError(f"cell eigensolve failed at k index {i} (k={k:.6g})") from exc
        mat = cell_matrix(one_d, m, k)
        resid = np.linalg.norm(mat @ vecs - vecs * w, axis=0)
        scale = np.maximum(np.abs(w), 1.0) * np.linalg.norm(vecs, axis=0)
        if np.any(resid / scale > residual_tol):
            raise BandComputationError(f"residual above {residual_tol:g} at k index {i}")
        energies[i] = w
    if potential.dimension == 1:
        return BandStructure(potential, m, ks, energies + shift, shift)
    # separable 2-D: every sum E_i(kx) + E_j(ky), lowest n_bands kept.
    # The 1-D profile carries the offset once per axis; remove the extra copy.
    kk, ee = [], []
    for ix, kx in enumerate(ks):
        for iy, ky in enumerate(ks):
            sums = np.sort((energies[ix][:, None] + energies[iy][None, :]).ravel())[:n_bands]
            kk.append((kx, ky))
            ee.append(sums - potential.offset + shift)
    return BandStructure(potential, m, np.array(kk), np.array(ee), shift)


@dataclass(frozen=True)
class SpectralGap:
    """Spectral gap ``(a, b)``; ``k_a``/``k_b`` are the edge quasi-momenta."""

    a: float
    b: float
    lower_band: int
    upper_band: int
    k_a: float = float("nan")
    k_b: float = float("nan")

    def __post_init__(self):
        if not self.a < self.b:
            raise ValueError(f"gap needs a < b, got ({self.a}, {self.b})")

    @property
    def width(self) -> float:
        return self.b - self.a

    @property
    def contains_zero(self) -> bool:
        return self.a < 0.0 < self.b

    def contains(self, lam: float) -> bool:
        return self.a < lam < self.b

    def shifted(self, delta: float) -> "SpectralGap":
        return SpectralGap(self.a + delta, self.b + delta, self.lower_band, self.upper_band,
                           self.k_a, self.k_b)

    def as_dict(self) -> dict:
        return {"a": self.a, "b": self.b, "width": self.width, "lower_band": self.lower_band,
                "upper_band": self.upper_band, "k_a": self.k_a, "k_b": self.k_b,
                "contains_zero": self.contains_zero}


def _refine_extremum(energy, k0, dk, sign):
    """Polish a grid extremum of ``sign * energy`` (sign=+1 max, -1 min)."""
    res = minimize_scalar(lambda k: -sign * energy(k), bounds=(k0 - dk, k0 + dk),
                          method="bounded", options={"xatol": 1e-12})
    k_best = float(res.x)
    e_best = energy(k_best)
    e0 = energy(k0)
    if sign * e0 >= sign * e_best:
        return k0, e0
    return k_best, e_best


def _fold(k):
    """Map a quasi-momentum to (-pi, pi]."""
    k = (k + np.pi) % (2 * np.pi) - np.pi
    return np.pi if np.isclose(k, -np.pi, atol=1e-12) else k


def find_gaps(bands: BandStructure, threshold: float = 1e-6, refine: bool = True) -> list:
    """Open gaps between consecutive computed bands, sorted by ``a``.

    In 1-D the grid extrema are polished by a bounded scalar search in ``k``
    so that the edges do not depend on the k-grid resolution.
    """
    gaps = []
    one_d = bands.potential.dimension == 1
    dk = 2 * np.pi / max(len(bands.k) - 1, 1) if one_d else 0.0
    for j in range(bands.n_bands - 1):
        lo, hi = bands.band(j), bands.band(j + 1)
        ia, ib = int(np.argmax(lo)), int(np.argmin(hi))
        a, b = float(lo[ia]), float(hi[ib])
        if one_d:
            k_a, k_b = float(bands.k[ia]), float(bands.k[ib])
            if refine and b - a > threshold:
                k_a, a = _refine_extremum(bands.band_function(j), k_a, dk, +1)
                k_b, b = _refine_extremum(bands.band_function(j + 1), k_b, dk, -1)
            k_a, k_b = _fold(k_a), _fold(k_b)
        else:
            k_a = k_b = float("nan")
        if b - a > threshold:
            gaps.append(SpectralGap(a, b, j, j + 1, k_a, k_b))
    return sorted(gaps, key=lambda g: g.a)


def shift_to_gap(potential: PeriodicPotential, gap: SpectralGap, shift: Optional[float] = None):
    """Subtract ``shift`` (default the gap midpoint) from ``V``.

    Returns the shifted potential and the gap in the new energy units.
    """
    s0 = 0.5 * (gap.a + gap.b) if shift is None else float(shift)
    new_gap = gap.shifted(-s0)
    if not new_gap.contains_zero:
        raise ValueError(f"shift {s0} does not put 0 inside the gap ({gap.a}, {gap.b})")
    return potential.shifted(-s0), new_gap


# --------------------------------------------------------------------------
# Y (+) Z splitting
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class GapCoercivity:
    lam: float
    alpha: float
    beta: float

    @property
    def n_lambda(self) -> float:
        return 0.5 * min(self.alpha, self.beta)


class SpectralSplit:
    """Negative (``Y``) / positive (``Z``) spectral subspaces of a discrete operator.

    Elements of ``Y`` are addressed through real coefficients in an
    L^2-orthonormal basis.  The dense backend stores that basis; the Bloch
    backend applies ``P`` and the coefficient maps sector by sector with FFTs
    over the cell index and only materializes ``y_basis`` on request.
    ``alpha0``/``beta0`` are the exact infima of ``-Q_0(y)/||y||^2`` over ``Y``
    and ``Q_0(z)/||z||^2`` over ``Z`` (generalized Rayleigh quotients).
    """

    def __init__(self, op: DiscreteOperator, eigenvalues: np.ndarray, backend: str,
                 y_basis: Optional[np.ndarray] = None, sectors=None, z_basis=None):
        self.op = op
        self.eigenvalues = eigenvalues
        self.backend = backend
        self._sectors = sectors
        self._z_basis = z_basis
        if y_basis is not None:
            y_basis.setflags(write=False)
            self.__dict__["y_basis"] = y_basis
        if sectors is not None:
            self._layout = _sector_layout(sectors, op.cells)

    @property
    def dim_y(self) -> int:
        if self.backend == "bloch":
            return len(self._layout[0])
        return self.y_basis.shape[1]

    @property
    def dim_z(self) -> int:
        return self.op.size - self.dim_y

    @property
    def margin(self) -> float:
        return float(np.min(np.abs(self.eigenvalues)))

    @cached_property
    def y_basis(self) -> np.ndarray:
        basis = np.column_stack([self.from_coefficients(e) for e in np.eye(self.dim_y)]) \
            if self.dim_y else np.zeros((self.op.size, 0))
        basis.setflags(write=False)
        return basis

    def coefficients(self, u: np.ndarray) -> np.ndarray:
        u = self.op.check_grid(u)
        if self.backend != "bloch":
            return self.y_basis.T @ u * self.op.cell_volume
        sector, column, kind = self._layout
        L, m, h = self.op.cells, self.op.points_per_cell, self.op.h
        U = L * np.fft.ifft(u.reshape(L, m), axis=0)
        a = np.einsum("ir,ir->i", U[sector], self._vectors) * (h / math.sqrt(h * L))
        return np.where(kind == 0, a.real, np.where(kind == 1, math.sqrt(2.0) * a.real, math.sqrt(2.0) * a.imag))

    def from_coefficients(self, c: np.ndarray) -> np.ndarray:
        c = np.asarray(c, dtype=float)
        if self.backend != "bloch":
            return self.y_basis @ c
        sector, column, kind = self._layout
        L, m, h = self.op.cells, self.op.points_per_cell, self.op.h
        amp = np.where(kind == 0, c, np.where(kind == 1, math.sqrt(2.0) * c, -1j * math.sqrt(2.0) * c))
        G = np.zeros((L, m), dtype=complex)
        np.add.at(G, sector, amp[:, None] * self._vectors)
        return (L * np.fft.ifft(G, axis=0)).real.ravel() / math.sqrt(h * L)

    def P(self, u: np.ndarray) -> np.ndarray:
        u = self.op.check_grid(u)
        if self.backend != "bloch":
            return self.y_basis @ self.coefficients(u)
        L, m = self.op.cells, self.op.points_per_cell
        U = np.fft.fft(u.reshape(L, m), axis=0)
        out = np.zeros_like(U)
        for j, k, w, vecs in self._sectors:
            V = vecs[:, w < 0]
            if V.shape[1]:
                out[j] = V @ (V.conj().T @ U[j])
        return np.fft.ifft(out, axis=0).real.ravel()

    def Q(self, u: np.ndarray) -> np.ndarray:
        return u - self.P(u)

    def positive_part(self, u: np.ndarray) -> np.ndarray:
        """Projection onto ``Z`` assembled from the positive eigenvectors (not ``1 - P``)."""
        u = self.op.check_grid(u)
        if self.backend != "bloch":
            return self._z_basis @ (self._z_basis.T @ u * self.op.cell_volume)
        L, m = self.op.cells, self.op.points_per_cell
        U = np.fft.fft(u.reshape(L, m), axis=0)
        out = np.zeros_like(U)
        for j, k, w, vecs in self._sectors:
            V = vecs[:, w > 0]
            out[j] = V @ (V.conj().T @ U[j])
        return np.fft.ifft(out, axis=0).real.ravel()

    @cached_property
    def _vectors(self) -> np.ndarray:
        sector, column, kind = self._layout
        return np.array([self._sectors[j][3][:, i] for j, i in zip(sector, column)]).reshape(len(sector), -1)

    @cached_property
    def _constants(self):
        if self.backend == "bloch":
            return _bloch_coercivity(self.op, self._sectors)
        return _dense_coercivity(self.op, self.y_basis, self._z_basis)

    @property
    def alpha0(self) -> float:
        return self._constants[0]

    @property
    def beta0(self) -> float:
        return self._constants[1]


def _sector_ks(cells: int) -> np.ndarray:
    return np.array([_fold(2 * np.pi * j / cells) for j in range(cells)])


def _bloch_sectors(op: DiscreteOperator):
    m, L = op.points_per_cell, op.cells
    sectors = []
    for j, k in enumerate(_sector_ks(L)):
        w, vecs = np.linalg.eigh(cell_matrix(op.potential, m, k, op.shift))
        if (2 * j) % L == 0:
            # k in {0, pi}: the cell matrix is real, pick real eigenvectors
            vecs = np.linalg.eigh(cell_matrix(op.potential, m, k, op.shift).real)[1].astype(complex)
        sectors.append((j, k, w, vecs))
    return sectors


def _sector_layout(sectors, cells: int):
    """Order of the real ``Y`` basis: (sector, column, kind) with kind 0 real, 1 cos, 2 sin.

    A self-conjugate sector (k in {0, pi}) contributes one real vector per
    negative eigenvalue; a conjugate pair (j, L - j) contributes sqrt(2) times
    the real and imaginary parts of the sector-j Bloch vector.
    """
    sector, column, kind = [], [], []
    for j, k, w, vecs in sectors:
        partner = (cells - j) % cells
        if partner < j:
            continue
        for idx in np.flatnonzero(w < 0):
            if partner == j:
                sector.append(j); column.append(idx); kind.append(0)
            else:
                sector += [j, j]; column += [idx, idx]; kind += [1, 2]
    return np.array(sector, dtype=int), np.array(column, dtype=int), np.array(kind, dtype=int)


def _bloch_coercivity(op: DiscreteOperator, sectors):
    m = op.points_per_cell
    alpha0, beta0 = np.inf, np.inf
    for j, k, w, vecs in sectors:
        gram_full = np.eye(m) + cell_laplacian(m, k)
        neg, pos = w < 0, w > 0
        if neg.any():
            V = vecs[:, neg]
            gram = V.conj().T @ gram_full @ V
            lo = sla.eigh(np.diag(-w[neg]), gram, eigvals_only=True, subset_by_index=[0, 0])[0]
            alpha0 = min(alpha0, float(lo))
        if pos.any():
            V = vecs[:, pos]
            gram = V.conj().T @ gram_full @ V
            lo = sla.eigh(np.diag(w[pos]), gram, eigvals_only=True, subset_by_index=[0, 0])[0]
            beta0 = min(beta0, float(lo))
    return alpha0, beta0


def _dense_coercivity(op: DiscreteOperator, y_basis, z_basis):
    hN = op.cell_volume
    D = op.matrix.toarray()
    gram_full = np.eye(op.size) + op.laplacian.toarray()
    out = []
    for basis, sign in ((y_basis, -1.0), (z_basis, 1.0)):
        if basis is None or basis.shape[1] == 0:
            out.append(np.inf)
            continue
        A = sign * (basis.T @ D @ basis) * hN
        B = (basis.T @ gram_full @ basis) * hN
        out.append(float(sla.eigh(A, B, eigvals_only=True, subset_by_index=[0, 0])[0]))
    return tuple(out)


def build_split(op: DiscreteOperator, backend: str = "auto", margin: float = 1e-8) -> SpectralSplit:
    """Split the grid space into the negative and positive spectral subspaces.

    ``backend="bloch"`` diagonalizes each quasi-momentum sector of the 1-D
    lattice operator; ``backend="dense"`` diagonalizes the full matrix.
    """
    if backend == "auto":
        backend = "bloch" if op.dimension == 1 else "dense"
    if backend == "bloch":
        if op.dimension != 1:
            raise ValueError("bloch backend supports 1-D operators only")
        sectors = _bloch_sectors(op)
        eigenvalues = np.sort(np.concatenate([s[2] for s in sectors]))
        _check_margin(eigenvalues, margin)
        return SpectralSplit(op, eigenvalues, "bloch", sectors=sectors)
    if backend == "dense":
        return split_from_matrix(op, op.matrix.toarray(), margin)
    raise ValueError(f"unknown backend {backend!r}")


def split_from_matrix(op: DiscreteOperator, matrix: np.ndarray, margin: float = 1e-8) -> SpectralSplit:
    """Dense split of an arbitrary symmetric matrix living on ``op``'s grid."""
    matrix = np.asarray(matrix)
    if not np.allclose(matrix, matrix.T, atol=1e-12 * max(1.0, np.abs(matrix).max())):
        raise ValueError("matrix is not symmetric")
    w, vecs = np.linalg.eigh(matrix)
    _check_margin(w, margin)
    vecs = vecs / math.sqrt(op.cell_volume)
    return SpectralSplit(op, w, "dense", y_basis=np.ascontiguousarray(vecs[:, w < 0]),
                         z_basis=np.ascontiguousarray(vecs[:, w > 0]))


def _check_margin(eigenvalues, margin):
    closest = float(np.min(np.abs(eigenvalues)))
    if closest < margin:
        raise GapMarginError(f"gap margin too small: eigenvalue {closest:.3e} within {margin:g} of 0")


def coercivity(lam: float, split: SpectralSplit, gap: SpectralGap) -> GapCoercivity:
    """Coercivity of ``Q_lam`` on ``Y`` and ``Z`` for ``lam`` in the gap."""
    if not gap.contains(lam):
        raise ValueError(f"lambda={lam} not in gap ({gap.a}, {gap.b})")
    return coercivity_from_constants(lam, split.alpha0, split.beta0, gap.a, gap.b)


def coercivity_from_constants(lam, alpha0, beta0, a, b) -> GapCoercivity:
    if not a < lam < b:
        raise ValueError(f"lambda={lam} not in gap ({a}, {b})")
    if lam <= 0:
        return GapCoercivity(lam, alpha0 * (1.0 - lam / a), beta0)
    return GapCoercivity(lam, alpha0, beta0 * (1.0 - lam / b))


def supercell_spectrum(potential: PeriodicPotential, cells: int, points_per_cell: int,
                       shift: float = 0.0) -> np.ndarray:
    """All eigenvalues of the full periodic box matrix (dense)."""
    op = DiscreteOperator(potential, cells, points_per_cell, shift)
    return np.linalg.eigvalsh(op.matrix.toarray())


def default_gap(potential: PeriodicPotential, index: int = 0, points_per_cell: int = 32,
                n_k: int = 65, n_bands: Optional[int] = None) -> SpectralGap:
    """The ``index``-th open gap of ``potential`` (counted from the bottom)."""
    nb = n_bands or index + 3
    gaps = find_gaps(bloch_bands(potential, nb, n_k, points_per_cell))
    if len(gaps) <= index:
        raise ValueError(f"potential has only {len(gaps)} resolved gaps below band {nb}")
    return gaps[index]


def random_vectors(rng: np.random.Generator, n: int, count: int) -> np.ndarray:
    return rng.standard_normal((n, count))


def lambda_grid(gap: SpectralGap, fractions: Sequence[float] = tuple(np.arange(1, 10) / 10)) -> np.ndarray:
    return np.array([gap.a + f * gap.width for f in fractions])
