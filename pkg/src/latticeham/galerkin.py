"""Separable Gaussian basis and block-structured Galerkin assembly.

Every basis function is a product of three 1D Gaussians, replicated over
the lattice by shifts of b0 = n0 * h.  All Galerkin matrices are computed
through 1D operations only:

- mass/stiffness blocks: products of 1D FEM tridiagonal forms applied to
  nodal samples, combined per mode via Hadamard products;
- nuclear-potential blocks: per-mode 1D inner products of basis pairs
  against the assembled canonical potential factors, summed over the
  separation-rank terms of the kernel.

Blocks beyond the overlap bandwidth L0 are exactly zero by construction
(zero-extension of the basis outside its enlarged cell window).
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product

import numpy as np
import scipy.sparse as sp

from .blocks import (
    BlockCoefficientTensor,
    BlockTag,
    circulant_from_band,
    toeplitz_from_band,
)
from .cp_tensor import CanonicalTensor3
from .lattice_potential import Boundary, LatticeConfig

# value below which a Gaussian tail is treated as numerically absent
_TAIL = 1e-18


@dataclass(frozen=True)
class GaussianPrimitive:
    """Separable Gaussian exp(-a * sum_l (x_l - c_l)^2)."""

    exponent: float
    center: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        if self.exponent <= 0.0:
            raise ValueError("Gaussian exponent must be positive")
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))

    @property
    def support_radius(self) -> float:
        return float(np.sqrt(-np.log(_TAIL) / self.exponent))


@dataclass(frozen=True)
class SeparableBasis:
    """The m0 generating functions of one unit cell."""

    primitives: tuple[GaussianPrimitive, ...]

    def __post_init__(self):
        object.__setattr__(self, "primitives", tuple(self.primitives))
        if not self.primitives:
            raise ValueError("basis needs at least one primitive")

    @property
    def m0(self) -> int:
        return len(self.primitives)

    def mode_values(self, x: np.ndarray, axis: int) -> np.ndarray:
        """1D factor values of all generators at points ``x`` (len(x), m0)."""
        x = np.asarray(x, dtype=np.float64)
        out = np.empty((x.size, self.m0))
        for col, prim in enumerate(self.primitives):
            out[:, col] = np.exp(
                -prim.exponent * (x - prim.center[axis]) ** 2
            )
        return out

    @property
    def max_support_radius(self) -> float:
        return max(p.support_radius for p in self.primitives)


def hydrogen_like_basis(m0: int = 4, alpha0: float = 0.5, ratio: float = 3.0) -> SeparableBasis:
    """m0 cell-centered primitives with geometrically spaced exponents."""
    return SeparableBasis(
        tuple(GaussianPrimitive(alpha0 * ratio ** k) for k in range(m0))
    )


# ---------------------------------------------------------------------------
# 1D FEM pieces


@dataclass(frozen=True)
class Fem1D:
    """1D piecewise-linear FEM stiffness/mass pair on a uniform grid."""

    size: int
    mesh: float
    boundary: Boundary = Boundary.BOX

    def stiffness_matrix(self) -> sp.csr_matrix:
        """(1/h) tridiag{-1, 2, -1}, wrapped cyclically in periodic mode."""
        n, h = self.size, self.mesh
        mat = sp.diags(
            [np.full(n - 1, -1.0), np.full(n, 2.0), np.full(n - 1, -1.0)],
            offsets=[-1, 0, 1],
            format="lil",
        )
        if self.boundary is Boundary.PERIODIC:
            mat[0, n - 1] += -1.0
            mat[n - 1, 0] += -1.0
        return (mat / h).tocsr()

    def mass_matrix(self) -> sp.csr_matrix:
        """(h/6) tridiag{1, 4, 1}, wrapped cyclically in periodic mode."""
        n, h = self.size, self.mesh
        mat = sp.diags(
            [np.ones(n - 1), np.full(n, 4.0), np.ones(n - 1)],
            offsets=[-1, 0, 1],
            format="lil",
        )
        if self.boundary is Boundary.PERIODIC:
            mat[0, n - 1] += 1.0
            mat[n - 1, 0] += 1.0
        return (mat * (h / 6.0)).tocsr()


def apply_mass_free(values: np.ndarray, mesh: float) -> np.ndarray:
    """Free-space tridiagonal mass action (h/6){1,4,1} on nodal columns.

    Valid whenever the sampled functions vanish at the window ends.
    """
    out = 4.0 * values.copy()
    out[1:] += values[:-1]
    out[:-1] += values[1:]
    return out * (mesh / 6.0)


def apply_stiffness_free(values: np.ndarray, mesh: float) -> np.ndarray:
    """Free-space tridiagonal stiffness action (1/h){-1,2,-1}."""
    out = 2.0 * values.copy()
    out[1:] -= values[:-1]
    out[:-1] -= values[1:]
    return out / mesh


# ---------------------------------------------------------------------------
# overlap constant


@dataclass(frozen=True)
class OverlapDetection:
    value: int
    decayed: bool  # False: no decay below threshold within the lattice


def detect_overlap_constant(
    basis: SeparableBasis, cfg: LatticeConfig, threshold: float
) -> OverlapDetection:
    """Smallest separation (in cells) past which all 1D factor products of
    generator pairs stay below ``threshold`` in max magnitude.

    Translated blocks at offsets of at least the returned value are
    treated as zero; if products never decay below the threshold within
    the lattice extent, the lattice size is returned with
    ``decayed=False``.
    """
    if threshold <= 0.0:
        raise ValueError("threshold must be positive")
    b0 = cfg.formation_edge
    h = cfg.mesh
    scan_limit = max(cfg.dims)
    for sep in range(1, scan_limit + 1):
        worst = 0.0
        for axis in range(3):
            for p in basis.primitives:
                for q in basis.primitives:
                    lo = min(p.center[axis], q.center[axis] + sep * b0)
                    hi = max(p.center[axis], q.center[axis] + sep * b0)
                    r = max(p.support_radius, q.support_radius)
                    x = np.arange(lo - r, hi + r + h, h)
                    prod = np.exp(
                        -p.exponent * (x - p.center[axis]) ** 2
                        - q.exponent * (x - q.center[axis] - sep * b0) ** 2
                    )
                    worst = max(worst, float(prod.max(initial=0.0)))
        if worst <= threshold:
            return OverlapDetection(sep, True)
    return OverlapDetection(scan_limit, False)


# ---------------------------------------------------------------------------
# mass / Laplacian blocks


def _fem_pair_matrices(
    basis: SeparableBasis, cfg: LatticeConfig, fem_step: float, axis: int, sep: int
):
    """1D mass and stiffness m0 x m0 products at cell separation ``sep``.

    Samples both generator sets on a shared node grid (aligned to integer
    multiples of the FEM step so lattice shifts are exact index shifts)
    and applies the free-space tridiagonal forms.
    """
    b0 = cfg.formation_edge
    r = basis.max_support_radius
    centers = [p.center[axis] for p in basis.primitives]
    lo = min(centers) - r
    hi = max(centers) + sep * b0 + r
    i0 = int(np.floor(lo / fem_step)) - 1
    i1 = int(np.ceil(hi / fem_step)) + 1
    x = np.arange(i0, i1 + 1) * fem_step
    u = basis.mode_values(x, axis)
    v = basis.mode_values(x - sep * b0, axis)
    mass = u.T @ apply_mass_free(v, fem_step)
    stiff = u.T @ apply_stiffness_free(v, fem_step)
    if sep == 0:  # diagonal products are symmetric; make that exact
        mass = 0.5 * (mass + mass.T)
        stiff = 0.5 * (stiff + stiff.T)
    return mass, stiff


def _band_mode_matrices(basis, cfg, fem_step):
    """Per-axis banded 1D FEM products M[axis][sep], K[axis][sep] for
    signed separations |sep| <= L0 (negative side filled by transpose)."""
    L0 = cfg.overlap_cells
    mass = [dict() for _ in range(3)]
    stiff = [dict() for _ in range(3)]
    for axis in range(3):
        for sep in range(L0 + 1):
            m, k = _fem_pair_matrices(basis, cfg, fem_step, axis, sep)
            mass[axis][sep] = m
            stiff[axis][sep] = k
            if sep:
                mass[axis][-sep] = m.T.copy()
                stiff[axis][-sep] = k.T.copy()
    return mass, stiff


def assemble_laplacian_mass_blocks(
    basis: SeparableBasis, cfg: LatticeConfig, fem_points: int | None = None
) -> tuple[BlockCoefficientTensor, BlockCoefficientTensor]:
    """Dirichlet-energy (A) and mass (S) block generators.

    Per lattice offset d the blocks factorize over modes:
      S_d = M1_{d1} . M2_{d2} . M3_{d3}     (Hadamard products)
      A_d = sum_p (product with mode p's mass factor replaced by stiffness).
    Tagged symmetric Toeplitz in box mode, circulant in periodic mode;
    cost O(m0^2 * nodes) per block.
    """
    fem_points = cfg.cell_points if fem_points is None else fem_points
    fem_step = cfg.formation_edge / fem_points
    mass, stiff = _band_mode_matrices(basis, cfg, fem_step)
    L0 = cfg.overlap_cells
    m0 = basis.m0

    # generator blocks live on the first block column: the block at
    # (row delta, col 0) is the mode product at separation -delta, since
    # mass[axis][s](a, b) integrates generator a against b shifted by +s
    def mass_block(delta):
        if any(abs(d) > L0 for d in delta):
            return np.zeros((m0, m0))
        return mass[0][-delta[0]] * mass[1][-delta[1]] * mass[2][-delta[2]]

    def laplace_block(delta):
        if any(abs(d) > L0 for d in delta):
            return np.zeros((m0, m0))
        out = np.zeros((m0, m0))
        for p in range(3):
            term = np.ones((m0, m0))
            for axis in range(3):
                factor = stiff if axis == p else mass
                term = term * factor[axis][-delta[axis]]
            out += term
        return out

    if cfg.boundary is Boundary.PERIODIC:
        build = circulant_from_band
    else:
        build = toeplitz_from_band
    A = build(cfg.dims, m0, L0, laplace_block)
    S = build(cfg.dims, m0, L0, mass_block)
    return A, S


def laplacian_mass_mode_factors(
    basis: SeparableBasis, cfg: LatticeConfig, fem_points: int | None = None
):
    """Separable per-mode circulant sequences of the A and S coefficients.

    Returns (laplacian_terms, mass_terms) usable by the factorized
    diagonalization path: the mass coefficients are a single separable
    term, the Dirichlet-energy coefficients are the three-term sum with
    one stiffness factor per term.  Periodic mode only.
    """
    if cfg.boundary is not Boundary.PERIODIC:
        raise ValueError("mode factors require periodic boundary mode")
    fem_points = cfg.cell_points if fem_points is None else fem_points
    fem_step = cfg.formation_edge / fem_points
    mass, stiff = _band_mode_matrices(basis, cfg, fem_step)
    L0 = cfg.overlap_cells
    m0 = basis.m0

    def mode_sequence(table, axis):
        # first-block-column convention: slot k collects separations -k
        L = cfg.dims[axis]
        seq = np.zeros((L, m0, m0))
        for sep in range(-L0, L0 + 1):
            if sep != 0 and L == 1:
                continue  # degenerate level stays open
            seq[(-sep) % L] += table[axis][sep]
        return seq

    mass_seq = [mode_sequence(mass, axis) for axis in range(3)]
    stiff_seq = [mode_sequence(stiff, axis) for axis in range(3)]
    mass_terms = [tuple(mass_seq)]
    laplacian_terms = [
        tuple(stiff_seq[axis] if axis == p else mass_seq[axis] for axis in range(3))
        for p in range(3)
    ]
    return laplacian_terms, mass_terms


# ---------------------------------------------------------------------------
# nuclear potential blocks


def _central_period_tiler(column: np.ndarray, n: int, n0: int):
    """Map the central b0-period of a unit-cell factor to arbitrary rows."""
    if (n - n0) % 2:
        raise ValueError(
            f"cell grid ({n}) and formation grid ({n0}) have mismatched "
            "parity; the central period is not cell-aligned"
        )
    base = (n - n0) // 2
    segment = column[base : base + n0]

    def tiled(rows: np.ndarray) -> np.ndarray:
        return segment[(rows - base) % n0]

    return tiled


def _cell_coordinates(rows: np.ndarray, n: int, h: float) -> np.ndarray:
    """Grid-row centers in the coordinate frame of cell 0."""
    return (rows + 0.5 - n / 2.0) * h


def _replicated_mode_matrices(
    basis: SeparableBasis, potential: CanonicalTensor3, cfg: LatticeConfig
):
    """1D product matrices against the b0-periodically replicated potential.

    Returns per-axis dicts sep -> (R, m0, m0); axes with a single lattice
    cell stay open (no periodic tiling, integration over the cell box).
    """
    n, n0, h = cfg.cell_points, cfg.formation_points, cfg.mesh
    L0 = cfg.overlap_cells
    m0 = basis.m0
    ext = L0 * n0  # enlarged-window extension (zero-extension beyond)
    R = potential.rank
    if potential.dims != (n, n, n):
        raise ValueError(
            f"replicated potential must live on the {n}^3 cell grid, got "
            f"{potential.dims}"
        )
    mode = [dict() for _ in range(3)]
    for axis in range(3):
        cols = potential.factors[axis]
        ring = cfg.dims[axis] > 1  # degenerate levels stay open
        tilers = [_central_period_tiler(cols[:, q], n, n0) for q in range(R)]
        for sep in range(L0 + 1):
            if sep and not ring:
                break
            if ring:
                rows = np.arange(sep * n0 - ext, n + ext)
                factor = lambda q: tilers[q](rows)
            else:
                rows = np.arange(0, n)
                factor = lambda q: cols[rows, q]
            x = _cell_coordinates(rows, n, h)
            u = basis.mode_values(x, axis)
            v = basis.mode_values(x - sep * cfg.formation_edge, axis)
            mats = np.empty((R, m0, m0))
            for q in range(R):
                mats[q] = u.T @ (factor(q)[:, None] * v)
            if sep == 0:
                mats = 0.5 * (mats + mats.transpose(0, 2, 1))
            mode[axis][sep] = mats
            if sep:
                mode[axis][-sep] = mats.transpose(0, 2, 1).copy()
    return mode


def assemble_nuclear_blocks(
    basis: SeparableBasis,
    potential: CanonicalTensor3,
    cfg: LatticeConfig,
    toeplitz_variant: bool = False,
) -> BlockCoefficientTensor:
    """Galerkin blocks of the nuclear potential via 1D reductions only.

    Every block entry is a sum over the potential's separation-rank terms
    of products of three 1D inner products; no 3D loop is formed.

    Periodic mode expects the central-cell n-grid potential and returns
    the circulant generator blocks (the potential is extended
    b0-periodically from its central period).  Box mode expects the full
    supercell-grid potential and returns the per-cell banded blocks.  With
    ``toeplitz_variant`` the box matrix is built in the shift-invariant
    Toeplitz form instead: the central-cell n-grid potential is replicated
    over the lattice exactly as in the periodic construction, removing the
    non-local asymmetry of the true box sum.
    """
    n, n0, h = cfg.cell_points, cfg.formation_points, cfg.mesh
    L0 = cfg.overlap_cells
    m0 = basis.m0
    ext = L0 * n0  # enlarged-window extension (zero-extension beyond)
    R = potential.rank
    weights = potential.weights

    if cfg.boundary is Boundary.PERIODIC or toeplitz_variant:
        mode = _replicated_mode_matrices(basis, potential, cfg)

        def band_block(delta):
            # first-block-column convention: row delta, column 0
            if any(abs(d) > L0 for d in delta):
                return np.zeros((m0, m0))
            return np.einsum(
                "q,qab,qab,qab->ab",
                weights,
                mode[0][-delta[0]],
                mode[1][-delta[1]],
                mode[2][-delta[2]],
            )

        if cfg.boundary is Boundary.PERIODIC:
            return circulant_from_band(cfg.dims, m0, L0, band_block)
        return toeplitz_from_band(cfg.dims, m0, L0, band_block)

    # box mode
    targets = cfg.supercell_points
    if potential.dims != targets:
        raise ValueError(
            f"box potential must live on the {targets} supercell grid, got "
            f"{potential.dims}"
        )
    # mode[axis][cell][sep] -> (R, m0, m0); negative separations mirrored
    mode = [dict() for _ in range(3)]
    for axis in range(3):
        N = targets[axis]
        cols = potential.factors[axis]
        for cell in range(cfg.dims[axis]):
            for sep in range(L0 + 1):
                other = cell + sep
                if other >= cfg.dims[axis]:
                    continue
                lo = max(other * n0 - ext, 0)
                hi = min(cell * n0 + n + ext, N)
                rows = np.arange(lo, hi)
                x = _cell_coordinates(rows - cell * n0, n, h)
                u = basis.mode_values(x, axis)
                v = basis.mode_values(x - sep * cfg.formation_edge, axis)
                mats = np.einsum("ra,rq,rb->qab", u, cols[rows, :], v)
                if sep == 0:
                    mats = 0.5 * (mats + mats.transpose(0, 2, 1))
                mode[axis].setdefault(cell, {})[sep] = mats
                if sep:
                    mode[axis].setdefault(other, {})[-sep] = mats.transpose(
                        0, 2, 1
                    ).copy()

    def pair_matrices(axis, cell, sep):
        return mode[axis][cell][sep]

    width = 2 * L0 + 1
    out = np.zeros((*cfg.dims, width, width, width, m0, m0))
    band = range(-L0, L0 + 1)
    for k in product(*(range(d) for d in cfg.dims)):
        for delta in product(band, band, band):
            other = tuple(ki + d for ki, d in zip(k, delta))
            if any(not 0 <= o < d for o, d in zip(other, cfg.dims)):
                continue
            mats = [pair_matrices(axis, k[axis], delta[axis]) for axis in range(3)]
            idx = (*k, *(d + L0 for d in delta))
            out[idx] = np.einsum("q,qab,qab,qab->ab", weights, *mats)
    return BlockCoefficientTensor(
        BlockTag.GENERAL_BANDED, cfg.dims, m0, L0, out
    )


def core_hamiltonian(
    A: BlockCoefficientTensor,
    V: BlockCoefficientTensor,
    kinetic_factor: float = 0.5,
) -> BlockCoefficientTensor:
    """H blocks = kinetic_factor * A blocks - V blocks.

    V stores the positive quantity int v_c g g dx; the attraction sign is
    applied here.  ``kinetic_factor=1`` reproduces the plain -Lapl + v
    convention.  Tags, dims and bandwidths must match (convert Toeplitz
    generators with ``to_general_banded`` to mix with banded V).
    """
    return A.combine(V, float(kinetic_factor), -1.0)
