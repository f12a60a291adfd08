"""Generalized symmetric eigensolvers: dense reference and Fourier-decoupled.

The dense path reduces H C = S C Lambda by the Cholesky factor of S and
hands the whitened matrix to a proven symmetric eigensolver.  The
Fourier path block-diagonalizes circulant H and S, then solves one small
Hermitian generalized problem per lattice multi-index j with a batched
cyclic Jacobi iteration (unconditionally convergent on Hermitian input);
the full spectrum is the sorted union over j.
"""

from __future__ import annotations

import csv
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .blocks import BlockCoefficientTensor
from .mlbc import FourierBlockDiagonal, block_diagonalize, eigvecs_from_fourier


class OverlapIndefiniteError(RuntimeError):
    """A Fourier block of the overlap matrix is not positive definite."""


class OverlapNotSPDError(RuntimeError):
    """The dense overlap matrix is not positive definite."""


def worker_count() -> int:
    """Worker cap from LATTICEHAM_THREADS (default 1, deterministic)."""
    raw = os.environ.get("LATTICEHAM_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


@dataclass(frozen=True)
class Spectrum:
    """Sorted eigenvalues with their provenance bookkeeping.

    ``j_indices`` carries the originating Fourier multi-index per
    eigenvalue (all -1 on the dense path); ``block_index`` the position
    within the m0 x m0 block solve (the dense path numbers eigenvalues
    straight through).
    """

    eigenvalues: np.ndarray
    provenance: str  # "dense" | "fourier"
    dims: tuple[int, int, int]
    m0: int
    j_indices: np.ndarray
    block_index: np.ndarray
    eigenvectors: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        vals = np.asarray(self.eigenvalues, dtype=np.float64)
        if np.any(np.diff(vals) < 0):
            raise ValueError("eigenvalues must be ascending")
        object.__setattr__(self, "eigenvalues", vals)

    @property
    def count(self) -> int:
        return self.eigenvalues.size


# ---------------------------------------------------------------------------
# dense reference path


def solve_dense_generalized(H: np.ndarray, S: np.ndarray) -> Spectrum:
    """Full spectrum and S-orthonormal eigenvectors of H C = S C Lambda.

    S is reduced by its Cholesky factor (failures report the offending
    pivot); the whitened symmetric matrix goes to LAPACK's symmetric
    eigensolver.
    """
    H = np.asarray(H, dtype=np.float64)
    S = np.asarray(S, dtype=np.float64)
    if H.shape != S.shape or H.ndim != 2 or H.shape[0] != H.shape[1]:
        raise ValueError("H and S must be square matrices of equal size")
    sym_defect = np.abs(H - H.T).max()
    if sym_defect > 1e-10 * max(1.0, np.abs(H).max()):
        raise ValueError("H is not symmetric")
    try:
        L = sla.cholesky(S, lower=True)
    except sla.LinAlgError as exc:
        raise OverlapNotSPDError(
            f"overlap matrix is not positive definite ({exc})"
        ) from exc
    Y = sla.solve_triangular(L, H, lower=True)
    M = sla.solve_triangular(L, Y.T, lower=True).T
    M = 0.5 * (M + M.T)
    vals, Q = np.linalg.eigh(M)
    C = sla.solve_triangular(L.T, Q, lower=False)
    n = vals.size
    return Spectrum(
        eigenvalues=vals,
        provenance="dense",
        dims=(1, 1, 1),
        m0=n,
        j_indices=np.full((n, 3), -1, dtype=np.int64),
        block_index=np.arange(n, dtype=np.int64),
        eigenvectors=C,
    )


# ---------------------------------------------------------------------------
# batched Hermitian Jacobi


def jacobi_eigh(
    matrices: np.ndarray,
    tol: float = 1e-14,
    max_sweeps: int = 60,
) -> tuple[np.ndarray, np.ndarray]:
    """Eigen-decomposition of a batch of Hermitian matrices by cyclic Jacobi.

    Each sweep visits every index pair (p, q) and applies the unitary
    plane rotation (vectorized across the batch)

        J[p,p] = e^{i phi} c,  J[p,q] = -e^{i phi} s,
        J[q,p] = s,            J[q,q] = c,

    where phi is the phase of A[p,q] and (c, s) the classical symmetric
    Jacobi pair, which annihilates A[p,q] in A <- J^H A J.  Convergence is
    unconditional on Hermitian input.

    Parameters
    ----------
    matrices : (m, m) or (batch, m, m) complex ndarray
        Hermitian matrices (validated up to roundoff).

    Returns
    -------
    Ascending eigenvalues (..., m) and unitary eigenvectors (..., m, m),
    columns matching the eigenvalue order.
    """
    A = np.array(matrices, dtype=np.complex128)
    single = A.ndim == 2
    if single:
        A = A[None]
    _, m, m2 = A.shape
    if m != m2:
        raise ValueError("matrices must be square")
    herm_defect = np.abs(A - np.conj(np.swapaxes(A, 1, 2))).max()
    if herm_defect > 1e-8 * max(1.0, np.abs(A).max()):
        raise ValueError(f"input is not Hermitian (defect {herm_defect:.2e})")
    A = 0.5 * (A + np.conj(np.swapaxes(A, 1, 2)))
    V = np.broadcast_to(np.eye(m, dtype=np.complex128), A.shape).copy()
    scale = max(float(np.abs(A).max()), 1e-300)
    eye = np.eye(m, dtype=bool)

    for _ in range(max_sweeps):
        if m == 1 or np.abs(A[:, ~eye]).max() <= tol * scale:
            break
        for p in range(m - 1):
            for q in range(p + 1, m):
                apq = A[:, p, q]
                r = np.abs(apq)
                active = r > 1e-2 * tol * scale
                if not np.any(active):
                    continue
                r_safe = np.where(active, r, 1.0)
                phase = np.where(active, apq / r_safe, 1.0)
                tau = (A[:, p, p].real - A[:, q, q].real) / (2.0 * r_safe)
                sign = np.where(tau >= 0.0, 1.0, -1.0)
                t = sign / (np.abs(tau) + np.sqrt(1.0 + tau * tau))
                c = np.where(active, 1.0 / np.sqrt(1.0 + t * t), 1.0)
                s = np.where(active, t / np.sqrt(1.0 + t * t), 0.0)
                cp = phase * c
                sp = phase * s
                colp = A[:, :, p].copy()
                colq = A[:, :, q].copy()
                A[:, :, p] = cp[:, None] * colp + s[:, None] * colq
                A[:, :, q] = -sp[:, None] * colp + c[:, None] * colq
                rowp = A[:, p, :].copy()
                rowq = A[:, q, :].copy()
                A[:, p, :] = np.conj(cp)[:, None] * rowp + s[:, None] * rowq
                A[:, q, :] = -np.conj(sp)[:, None] * rowp + c[:, None] * rowq
                vp = V[:, :, p].copy()
                vq = V[:, :, q].copy()
                V[:, :, p] = cp[:, None] * vp + s[:, None] * vq
                V[:, :, q] = -sp[:, None] * vp + c[:, None] * vq
    vals = np.einsum("bii->bi", A).real
    order = np.argsort(vals, axis=1, kind="stable")
    vals = np.take_along_axis(vals, order, axis=1)
    V = np.take_along_axis(V, order[:, None, :], axis=2)
    if single:
        return vals[0], V[0]
    return vals, V


# ---------------------------------------------------------------------------
# Fourier-decoupled path


def _solve_block_range(Hb, Sb, dims_flat_index, tol):
    """Generalized Hermitian solves for a contiguous range of blocks."""
    try:
        Lc = np.linalg.cholesky(Sb)
    except np.linalg.LinAlgError:
        mins = np.linalg.eigvalsh(Sb)[:, 0]
        bad = int(np.argmin(mins))
        raise OverlapIndefiniteError(
            f"overlap Fourier block j={dims_flat_index(bad)} is not positive "
            f"definite (smallest eigenvalue {mins[bad]:.3e}); the basis is "
            "near linearly dependent"
        ) from None
    T = np.linalg.solve(Lc, Hb)
    M = np.conj(
        np.swapaxes(np.linalg.solve(Lc, np.conj(np.swapaxes(T, 1, 2))), 1, 2)
    )
    vals, Q = jacobi_eigh(M, tol=tol)
    U = np.linalg.solve(np.conj(np.swapaxes(Lc, 1, 2)), Q)
    return vals, U


def solve_periodic_fft(
    Hblocks: BlockCoefficientTensor,
    Sblocks: BlockCoefficientTensor,
    jacobi_tol: float = 1e-14,
    workers: int | None = None,
    keep_block_vectors: bool = False,
):
    """Spectrum of the circulant pair (H, S) via per-block Fourier solves.

    For each multi-index j the m0 x m0 Hermitian problem
    Hbar_j u = lambda Sbar_j u is solved after a per-block Cholesky of
    Sbar_j; the spectrum is the sorted union over j with deterministic
    tie-breaking by j (lexicographic) and block position.

    Returns the :class:`Spectrum`; with ``keep_block_vectors`` also the
    pair of :class:`FourierBlockDiagonal` and the per-block S-orthonormal
    eigenvector array (sorted like the spectrum's bookkeeping).
    """
    if Hblocks.dims != Sblocks.dims or Hblocks.m0 != Sblocks.m0:
        raise ValueError("H and S block tensors must share lattice dims and m0")
    Hbar = block_diagonalize(Hblocks)
    Sbar = block_diagonalize(Sblocks)
    dims, m0 = Hblocks.dims, Hblocks.m0
    B = Hblocks.lattice_size
    Hb = Hbar.blocks.reshape(B, m0, m0)
    Sb = Sbar.blocks.reshape(B, m0, m0)
    for name, arr in (("H", Hb), ("S", Sb)):
        defect = np.abs(arr - np.conj(np.swapaxes(arr, 1, 2))).max()
        if defect > 1e-8 * max(1.0, np.abs(arr).max()):
            raise ValueError(
                f"Fourier blocks of {name} are not Hermitian "
                f"(defect {defect:.2e}); input coefficients are asymmetric"
            )
    Hb = 0.5 * (Hb + np.conj(np.swapaxes(Hb, 1, 2)))
    Sb = 0.5 * (Sb + np.conj(np.swapaxes(Sb, 1, 2)))

    def flat_to_j(flat):
        return tuple(int(v) for v in np.unravel_index(flat, dims))

    workers = worker_count() if workers is None else max(1, int(workers))
    if workers == 1 or B < 2 * workers:
        vals, U = _solve_block_range(Hb, Sb, flat_to_j, jacobi_tol)
    else:
        bounds = np.linspace(0, B, workers + 1, dtype=int)
        chunks = []
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = [
                pool.submit(
                    _solve_block_range,
                    Hb[a:b],
                    Sb[a:b],
                    (lambda off: (lambda i: flat_to_j(off + i)))(a),
                    jacobi_tol,
                )
                for a, b in zip(bounds[:-1], bounds[1:])
                if b > a
            ]
            chunks = [f.result() for f in futures]
        vals = np.concatenate([c[0] for c in chunks], axis=0)
        U = np.concatenate([c[1] for c in chunks], axis=0)

    j_multi = np.stack(np.unravel_index(np.arange(B), dims), axis=1)
    j_all = np.repeat(j_multi, m0, axis=0)
    block_pos = np.tile(np.arange(m0), B)
    flat_vals = vals.reshape(-1)
    order = np.lexsort(
        (block_pos, j_all[:, 2], j_all[:, 1], j_all[:, 0], flat_vals)
    )
    spectrum = Spectrum(
        eigenvalues=flat_vals[order],
        provenance="fourier",
        dims=dims,
        m0=m0,
        j_indices=j_all[order].astype(np.int64),
        block_index=block_pos[order].astype(np.int64),
    )
    if keep_block_vectors:
        return spectrum, (Hbar, Sbar), U
    return spectrum


def fourier_eigenvector(
    db: FourierBlockDiagonal, j: tuple[int, int, int], block_vector: np.ndarray
) -> np.ndarray:
    """Full-length eigenvector from a diagonal-block eigenvector (on demand)."""
    return eigvecs_from_fourier(db, j, block_vector)


# ---------------------------------------------------------------------------
# spectral post-processing


def average_energy_per_cell(s: Spectrum, n_occ: int, cells: int) -> float:
    """Mean of the n_occ smallest eigenvalues per lattice cell."""
    if not 0 <= n_occ <= s.count:
        raise ValueError(
            f"n_occ={n_occ} out of range for {s.count} eigenvalues"
        )
    if cells < 1:
        raise ValueError("cells must be positive")
    if n_occ == 0:
        return 0.0
    return float(s.eigenvalues[:n_occ].sum() / cells)


@dataclass(frozen=True)
class SpectralGaps:
    """Per-index |box - periodic| eigenvalue gaps with summary stats."""

    gaps: np.ndarray
    min_gap: float
    max_gap: float
    mean_gap: float


def spectral_comparison(box: Spectrum, periodic: Spectrum, k: int) -> SpectralGaps:
    """Absolute gaps between the k lowest eigenvalues of the two settings.

    No convergence to zero is asserted anywhere: the box/periodic
    discrepancy persists as the lattice grows.
    """
    if k < 1 or box.count < k or periodic.count < k:
        raise ValueError(
            f"need at least k={k} eigenvalues in both spectra "
            f"({box.count} and {periodic.count} available)"
        )
    gaps = np.abs(box.eigenvalues[:k] - periodic.eigenvalues[:k])
    return SpectralGaps(
        gaps=gaps,
        min_gap=float(gaps.min()),
        max_gap=float(gaps.max()),
        mean_gap=float(gaps.mean()),
    )


def write_spectrum_csv(path, s: Spectrum, comment: str | None = None) -> None:
    """Spectrum CSV: index, eigenvalue, j1, j2, j3, block_index."""
    with open(path, "w", newline="") as fh:
        if comment:
            fh.write(f"# {comment}\n")
        writer = csv.writer(fh)
        writer.writerow(["index", "eigenvalue", "j1", "j2", "j3", "block_index"])
        for i in range(s.count):
            writer.writerow(
                [
                    i,
                    repr(float(s.eigenvalues[i])),
                    s.j_indices[i, 0],
                    s.j_indices[i, 1],
                    s.j_indices[i, 2],
                    s.block_index[i],
                ]
            )
