"""Windowed and assembled canonical-tensor lattice sums of nuclear potentials.

Geometry conventions
--------------------
The lattice translation step per axis is the formation edge b0 = n0 * h;
consecutive unit cells overlap by b - b0 (their bounding boxes have edge
b = n * h > b0).  The box supercell grid has

    N_l = n0 * L_l + n - n0

cells per axis and is centered at the origin, so cell ``j`` of axis ``l``
occupies grid rows [j*n0, j*n0 + n) and its bounding-box center sits at
(j - (L_l - 1)/2) * b0.  Nucleus coordinates are given relative to their
cell's center and must lie on the h-grid (integer multiples of h), since
windows of the reference tensor are pure index shifts.

In periodic mode the potential is accumulated on the central n-grid cell
by summing the translates j - L//2 (j = 0..L-1) per axis and is then
understood as replicated with period b0; nucleus coordinates are
canonicalized modulo b0 into the central cell, which makes the result
exactly invariant under shifting all nuclei by a lattice vector.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .coulomb_kernel import GridSpec, SincQuadrature, build_quadrature, build_reference_tensor
from .cp_tensor import CanonicalTensor3


class Boundary(Enum):
    BOX = "box"
    PERIODIC = "periodic"


@dataclass(frozen=True)
class Nucleus:
    """Point charge at ``center`` (coordinates relative to the cell center)."""

    center: tuple[float, float, float]
    charge: float

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        if not self.charge > 0.0:
            raise ValueError("nuclear charge must be positive")


@dataclass(frozen=True)
class LatticeConfig:
    """Geometry of an L1 x L2 x L3 lattice of unit cells.

    Attributes
    ----------
    dims : (L1, L2, L3)
        Number of lattice cells per axis.
    cell_points : int
        n, grid cells per unit-cell edge (b = n * h).
    formation_points : int
        n0, grid cells per formation edge (b0 = n0 * h); also the window
        shift between neighboring lattice cells.
    mesh : float
        Mesh size h, common to all axes.
    nuclei : tuple of Nucleus
        The M0 nuclei of the generating cell.
    boundary : Boundary
        Box (Dirichlet) or periodic supercell.
    overlap_cells : int
        L0, the basis overlap constant (block bandwidth).
    """

    dims: tuple[int, int, int]
    cell_points: int
    formation_points: int
    mesh: float
    nuclei: tuple[Nucleus, ...]
    boundary: Boundary
    overlap_cells: int

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        if len(dims) != 3 or any(d < 1 for d in dims):
            raise ValueError("dims must be three positive integers")
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "nuclei", tuple(self.nuclei))
        if self.mesh <= 0.0:
            raise ValueError("mesh size must be positive")
        if self.cell_points < 2:
            raise ValueError("cell_points must be at least 2")
        if not (0 < self.formation_points <= self.cell_points):
            raise ValueError("need 0 < formation_points <= cell_points")
        if self.overlap_cells < 0:
            raise ValueError("overlap_cells must be non-negative")
        if not self.nuclei:
            raise ValueError("at least one nucleus is required")

    @property
    def cell_edge(self) -> float:
        return self.cell_points * self.mesh

    @property
    def formation_edge(self) -> float:
        return self.formation_points * self.mesh

    @property
    def supercell_points(self) -> tuple[int, int, int]:
        """Box-mode grid size N_l = n0 * L_l + n - n0 per axis."""
        n, n0 = self.cell_points, self.formation_points
        return tuple(n0 * L + n - n0 for L in self.dims)


@dataclass(frozen=True)
class WindowOp:
    """Restriction of a length-``source_points`` vector to a window."""

    offset: int
    length: int
    source_points: int

    def __post_init__(self):
        if self.length < 1:
            raise ValueError("window length must be positive")
        if self.offset < 0 or self.offset + self.length > self.source_points:
            raise ValueError(
                f"window [{self.offset}, {self.offset + self.length}) out of "
                f"bounds for source of {self.source_points} points"
            )


def window(source: np.ndarray, op: WindowOp) -> np.ndarray:
    """Contiguous slice of ``source`` selected by the window operator."""
    source = np.asarray(source)
    if source.shape[0] != op.source_points:
        raise ValueError(
            f"source has {source.shape[0]} points, window expects "
            f"{op.source_points}"
        )
    return source[op.offset : op.offset + op.length]


def nucleus_shift_units(cfg: LatticeConfig, center: tuple[float, float, float]) -> tuple[int, int, int]:
    """Nucleus coordinates in h units; raises if off-grid or outside the
    formation domain."""
    shifts = []
    half = cfg.formation_edge / 2.0
    for axis, a in enumerate(center):
        if not abs(a) < half - 1e-12 * max(1.0, half):
            raise ValueError(
                f"nucleus coordinate {a:g} on axis {axis} is not strictly "
                f"inside the formation domain (+-{half:g})"
            )
        s = a / cfg.mesh
        s_int = round(s)
        if abs(s - s_int) > 1e-9:
            raise ValueError(
                f"nucleus coordinate {a:g} on axis {axis} is not an integer "
                f"multiple of the mesh size {cfg.mesh:g}"
            )
        shifts.append(int(s_int))
    return tuple(shifts)


def _wrap_periodic(cfg: LatticeConfig, nucleus: Nucleus) -> Nucleus:
    b0 = cfg.formation_edge
    wrapped = tuple(a - b0 * np.floor(a / b0 + 0.5) for a in nucleus.center)
    return Nucleus(wrapped, nucleus.charge)


def _canonical_nuclei(cfg: LatticeConfig) -> tuple[Nucleus, ...]:
    if cfg.boundary is Boundary.PERIODIC:
        return tuple(_wrap_periodic(cfg, nuc) for nuc in cfg.nuclei)
    return cfg.nuclei


def _translate_offsets(cfg: LatticeConfig, axis: int) -> np.ndarray:
    """Integer lattice translate indices per axis, relative to the center."""
    L = cfg.dims[axis]
    if cfg.boundary is Boundary.PERIODIC:
        return np.arange(L) - L // 2
    return np.arange(L)  # box: absolute cell index; centering handled below


def required_reference_points(cfg: LatticeConfig) -> int:
    """Smallest reference-grid size (points per axis) such that every
    lattice-shifted window is a pure restriction, with matching parity."""
    n, n0 = cfg.cell_points, cfg.formation_points
    need = n + n0  # single-cell minimum
    for axis in range(3):
        for nuc in _canonical_nuclei(cfg):
            s = round(nuc.center[axis] / cfg.mesh)
            if cfg.boundary is Boundary.BOX:
                target = cfg.supercell_points[axis]
                for j in range(cfg.dims[axis]):
                    c = s + n0 * j
                    need = max(need, n + 2 * c, 2 * target - n - 2 * c)
            else:
                for j in _translate_offsets(cfg, axis):
                    c = s + n0 * int(j)
                    need = max(need, n + 2 * abs(c))
    if (need - n) % 2:
        need += 1
    return int(need)


def build_lattice_reference(
    cfg: LatticeConfig,
    kernel_tol: float,
    max_terms: int = 256,
    points: int | None = None,
) -> tuple[CanonicalTensor3, SincQuadrature]:
    """Quadrature + reference kernel tensor sized for ``cfg``'s windows."""
    ref_points = required_reference_points(cfg) if points is None else points
    grid = GridSpec.centered(ref_points, cfg.mesh)
    quad = build_quadrature(
        cfg.mesh, np.sqrt(3.0) * ref_points * cfg.mesh, kernel_tol, max_terms
    )
    return build_reference_tensor(grid, quad), quad


def _kernel_window(ref_points: int, n: int, length: int, c: int) -> WindowOp:
    """Window for a kernel centered ``c`` h-units off the target's center.

    Both the reference grid and the length-``length`` target grid are
    centered at the origin; the window offset is (ref - n)/2 - c, where n
    is the unit-cell grid size whose parity the reference grid matches.
    """
    if (ref_points - n) % 2:
        raise ValueError(
            f"reference grid ({ref_points}) and cell grid ({n}) have "
            "mismatched parity; windows would fall between cells"
        )
    offset = (ref_points - n) // 2 - c
    try:
        return WindowOp(offset, length, ref_points)
    except ValueError as exc:
        raise ValueError(f"reference grid too small: {exc}") from exc


def _assemble(
    cfg: LatticeConfig,
    ref: CanonicalTensor3,
    target: tuple[int, int, int],
    center_units,
) -> CanonicalTensor3:
    """Sum shifted windows inside each mode factor; rank stays M0 * R."""
    nuclei = _canonical_nuclei(cfg)
    rank = ref.rank
    n = cfg.cell_points
    weights_out = []
    factors_out = [[], [], []]
    for nuc in nuclei:
        s = nucleus_shift_units(cfg, nuc.center)
        weights_out.append(nuc.charge * ref.weights)
        for axis in range(3):
            ref_cols = ref.factors[axis]
            acc = np.zeros((target[axis], rank))
            for j in _translate_offsets(cfg, axis):
                op = _kernel_window(
                    ref.dims[axis], n, target[axis], center_units(s[axis], int(j))
                )
                acc += ref_cols[op.offset : op.offset + op.length, :]
            factors_out[axis].append(acc)
    return CanonicalTensor3.from_columns(
        np.concatenate(weights_out),
        tuple(np.hstack(cols) for cols in factors_out),
    )


def unit_cell_potential(cfg: LatticeConfig, ref: CanonicalTensor3) -> CanonicalTensor3:
    """Single-cell potential: sum of charge-weighted windows of the
    reference tensor on the n^3 unit-cell grid (rank <= M0 * R)."""
    n = cfg.cell_points
    weights_out = []
    factors_out = [[], [], []]
    for nuc in cfg.nuclei:
        s = nucleus_shift_units(cfg, nuc.center)
        weights_out.append(nuc.charge * ref.weights)
        for axis in range(3):
            op = _kernel_window(ref.dims[axis], n, n, s[axis])
            factors_out[axis].append(window(ref.factors[axis], op))
    return CanonicalTensor3.from_columns(
        np.concatenate(weights_out),
        tuple(np.hstack(cols) for cols in factors_out),
    )


def box_lattice_potential(cfg: LatticeConfig, ref: CanonicalTensor3) -> CanonicalTensor3:
    """Assembled potential of all lattice translates on the supercell grid.

    The translate sum happens inside each mode factor (never across the
    rank), so the output rank is bounded by M0 * R independently of L.
    """
    if cfg.boundary is not Boundary.BOX:
        raise ValueError("box_lattice_potential requires box boundary mode")
    n0 = cfg.formation_points
    return _assemble(
        cfg, ref, cfg.supercell_points, lambda s, j: s + n0 * j
    )


def periodic_cell_potential(cfg: LatticeConfig, ref: CanonicalTensor3) -> CanonicalTensor3:
    """Lattice-translate sum restricted to the central n^3 cell (periodic)."""
    if cfg.boundary is not Boundary.PERIODIC:
        raise ValueError("periodic_cell_potential requires periodic boundary mode")
    n0 = cfg.formation_points
    return _assemble(
        cfg, ref, (cfg.cell_points,) * 3, lambda s, j: s + n0 * j
    )


def translate_positions(cfg: LatticeConfig) -> tuple[np.ndarray, np.ndarray]:
    """All translated nucleus positions and charges for direct summation."""
    nuclei = _canonical_nuclei(cfg)
    b0 = cfg.formation_edge
    positions = []
    charges = []
    offs = []
    for axis in range(3):
        j = _translate_offsets(cfg, axis).astype(float)
        if cfg.boundary is Boundary.BOX:
            j = j - (cfg.dims[axis] - 1) / 2.0  # center the supercell
        offs.append(j * b0)
    for nuc in nuclei:
        a = np.asarray(nuc.center)
        for o1 in offs[0]:
            for o2 in offs[1]:
                for o3 in offs[2]:
                    positions.append(a + np.array([o1, o2, o3]))
                    charges.append(nuc.charge)
    return np.asarray(positions), np.asarray(charges)


def direct_sum_oracle(cfg: LatticeConfig, probe_points: np.ndarray) -> np.ndarray:
    """Literal O(M0 * |L|) evaluation of the translate sum at probe points.

    Test oracle only; cost grows with the full translate count.  Raises if
    a probe coincides with a nucleus translate.
    """
    probes = np.atleast_2d(np.asarray(probe_points, dtype=np.float64))
    positions, charges = translate_positions(cfg)
    diff = probes[:, None, :] - positions[None, :, :]
    dist = np.linalg.norm(diff, axis=2)
    if np.any(dist < 1e-10 * max(1.0, cfg.cell_edge)):
        raise ValueError("probe point coincides with a nucleus translate")
    return (charges / dist).sum(axis=1)


def box_grid_centers(cfg: LatticeConfig, axis: int) -> np.ndarray:
    """Cell centers of the box supercell grid (centered at the origin)."""
    N = cfg.supercell_points[axis]
    return (np.arange(N) + 0.5 - N / 2.0) * cfg.mesh


def cell_grid_centers(cfg: LatticeConfig, axis: int = 0) -> np.ndarray:
    """Cell centers of the unit-cell n-grid (centered at the origin)."""
    n = cfg.cell_points
    return (np.arange(n) + 0.5 - n / 2.0) * cfg.mesh
