"""Multilevel block circulant / symmetric block Toeplitz matrix algebra.

A d-level block circulant matrix A over lattice dims L = (L1, L2, L3) with
m0 x m0 coefficient blocks A_k is the Kronecker polynomial

    A = sum_k  pi_{L1}^{k1} (x) pi_{L2}^{k2} (x) pi_{L3}^{k3} (x) A_k,

where pi_L is the cyclic downward shift.  The d-dimensional unnormalized
forward DFT of the coefficient array block-diagonalizes it:

    Abar_j = sum_k omega^{j.k} A_k,     omega_l = exp(-2 pi i / L_l),

and with the unitary transform pair F, F* (F = unnormalized DFT / sqrt|L|)
the similarity  A = (F* (x) I) bdiag(Abar_j) (F (x) I)  holds exactly.
Symmetric block Toeplitz matrices get fast matvecs through the minimal
double-size circulant embedding per level.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from itertools import product

import numpy as np

from .blocks import BlockCoefficientTensor, BlockTag

#: Largest full matrix size `to_dense` will expand to.
DENSE_CAP = 4096


@dataclass(frozen=True)
class FourierBlockDiagonal:
    """Diagonal blocks Abar_j of a block-diagonalized MBC matrix."""

    dims: tuple[int, int, int]
    m0: int
    blocks: np.ndarray  # complex, shape (L1, L2, L3, m0, m0)

    def __post_init__(self):
        blocks = np.ascontiguousarray(self.blocks, dtype=np.complex128)
        if blocks.shape != (*self.dims, self.m0, self.m0):
            raise ValueError(
                f"blocks shape {blocks.shape} does not match "
                f"{(*self.dims, self.m0, self.m0)}"
            )
        blocks.setflags(write=False)
        object.__setattr__(self, "blocks", blocks)

    @property
    def lattice_size(self) -> int:
        d1, d2, d3 = self.dims
        return d1 * d2 * d3

    def block(self, j: tuple[int, int, int]) -> np.ndarray:
        return self.blocks[tuple(int(ji) % d for ji, d in zip(j, self.dims))]

    def max_hermitian_defect(self) -> float:
        """Largest || Abar_j - Abar_j^H ||_F over all blocks."""
        defect = self.blocks - np.conj(np.swapaxes(self.blocks, -1, -2))
        return float(np.sqrt((np.abs(defect) ** 2).sum(axis=(-1, -2))).max())


def _require_tag(t: BlockCoefficientTensor, tag: BlockTag, op: str) -> None:
    if t.tag is not tag:
        raise ValueError(f"{op} requires tag {tag.name}, got {t.tag.name}")


def is_symmetric_circulant(t: BlockCoefficientTensor, tol: float = 0.0) -> bool:
    """Check the MBC symmetry condition A_k^T = A_{L-k} (indices mod L)."""
    _require_tag(t, BlockTag.CIRCULANT, "is_symmetric_circulant")
    for k in product(*(range(d) for d in t.dims)):
        mirrored = t.circulant_block(tuple(-ki for ki in k))
        defect = np.abs(t.blocks[k].T - mirrored).max()
        if defect > tol:
            return False
    return True


def to_dense(t: BlockCoefficientTensor, cap: int = DENSE_CAP) -> np.ndarray:
    """Expand the generated matrix (oracle path, gated by ``cap``)."""
    N = t.full_size
    if N > cap:
        raise ValueError(f"dense expansion of size {N} exceeds cap {cap}")
    m0 = t.m0
    lattice = list(product(*(range(d) for d in t.dims)))
    out = np.zeros((N, N))
    for a, k in enumerate(lattice):
        for b, m in enumerate(lattice):
            out[a * m0 : (a + 1) * m0, b * m0 : (b + 1) * m0] = t.pair_block(k, m)
    return out


def block_diagonalize(t: BlockCoefficientTensor) -> FourierBlockDiagonal:
    """Diagonal blocks via the unnormalized forward DFT over the lattice
    index: Abar_j = sum_k omega^{j.k} A_k, at cost O(m0^2 |L| log |L|)."""
    _require_tag(t, BlockTag.CIRCULANT, "block_diagonalize")
    blocks = np.fft.fftn(t.blocks, axes=(0, 1, 2))
    return FourierBlockDiagonal(t.dims, t.m0, blocks)


def block_diagonalize_factorized(
    terms, dims: tuple[int, int, int], m0: int
) -> FourierBlockDiagonal:
    """Diagonalize a coefficient tensor given as a sum of separable terms.

    Each term is a triple of per-mode block sequences (A1, A2, A3) with
    A_l of shape (L_l, m0, m0); the represented coefficient tensor is
    sum_terms A1_{k1} . A2_{k2} . A3_{k3} (entrywise products across the
    block entries).  Only 1D DFTs of length L_l are used, so the cost is
    O(m0^2 sum_l L_l log L_l) per term instead of O(m0^2 |L| log |L|).
    """
    out = np.zeros((*dims, m0, m0), dtype=np.complex128)
    for term in terms:
        if len(term) != 3:
            raise ValueError("each term must supply three mode sequences")
        hats = []
        for axis, seq in enumerate(term):
            seq = np.asarray(seq, dtype=np.float64)
            if seq.shape != (dims[axis], m0, m0):
                raise ValueError(
                    f"mode {axis} sequence has shape {seq.shape}, expected "
                    f"{(dims[axis], m0, m0)}"
                )
            hats.append(np.fft.fft(seq, axis=0))
        out += np.einsum("aij,bij,cij->abcij", *hats)
    return FourierBlockDiagonal(dims, m0, out)


def expand_factorized(terms, dims: tuple[int, int, int], m0: int) -> BlockCoefficientTensor:
    """Materialize the separable coefficient tensor (oracle for the
    factorized diagonalization path)."""
    coeffs = np.zeros((*dims, m0, m0))
    for term in terms:
        a1, a2, a3 = (np.asarray(a, dtype=np.float64) for a in term)
        coeffs += np.einsum("aij,bij,cij->abcij", a1, a2, a3)
    return BlockCoefficientTensor(
        BlockTag.CIRCULANT, dims, m0, max(dims) - 1, coeffs
    )


def _lattice_reshape(t: BlockCoefficientTensor, x: np.ndarray) -> np.ndarray:
    if x.shape[0] != t.full_size:
        raise ValueError(
            f"vector length {x.shape[0]} does not match matrix size "
            f"{t.full_size}"
        )
    return x.reshape(*t.dims, t.m0)


def matvec_circulant(t: BlockCoefficientTensor, x: np.ndarray) -> np.ndarray:
    """y = A x via FFT: transform, multiply by Abar_j blockwise, transform
    back.  The unitary pair (F, F*) composes to the identity, so numpy's
    unnormalized fftn/ifftn pair is used directly."""
    _require_tag(t, BlockTag.CIRCULANT, "matvec_circulant")
    x = np.asarray(x)
    real_io = not np.iscomplexobj(x) and not np.iscomplexobj(t.blocks)
    xhat = np.fft.fftn(_lattice_reshape(t, x), axes=(0, 1, 2))
    db = block_diagonalize(t)
    yhat = np.einsum("abcij,abcj->abci", db.blocks, xhat)
    y = np.fft.ifftn(yhat, axes=(0, 1, 2)).reshape(-1)
    return y.real if real_io else y


def toeplitz_embedding(t: BlockCoefficientTensor) -> BlockCoefficientTensor:
    """Embed a symmetric block Toeplitz generator into the double-size
    (per level) block circulant, with one zero padding block per level."""
    _require_tag(t, BlockTag.SYMMETRIC_TOEPLITZ, "toeplitz_embedding")
    dims2 = tuple(2 * d for d in t.dims)
    coeffs = np.zeros((*dims2, t.m0, t.m0))
    for k in product(*(range(d) for d in dims2)):
        delta = []
        pad = False
        for ki, d in zip(k, t.dims):
            if ki < d:
                delta.append(ki)
            elif ki == d:
                pad = True  # the single zero slot per level
                break
            else:
                delta.append(ki - 2 * d)
        if pad:
            continue
        coeffs[k] = t.toeplitz_block(tuple(delta))
    return BlockCoefficientTensor(
        BlockTag.CIRCULANT, dims2, t.m0, t.bandwidth, coeffs
    )


def matvec_toeplitz(t: BlockCoefficientTensor, x: np.ndarray) -> np.ndarray:
    """y = A x for symmetric block Toeplitz A via circulant embedding."""
    _require_tag(t, BlockTag.SYMMETRIC_TOEPLITZ, "matvec_toeplitz")
    x = np.asarray(x)
    if x.shape[0] != t.full_size:
        raise ValueError(
            f"vector length {x.shape[0]} does not match matrix size "
            f"{t.full_size}"
        )
    circ = toeplitz_embedding(t)
    padded = np.zeros((*circ.dims, t.m0), dtype=x.dtype)
    lat = x.reshape(*t.dims, t.m0)
    padded[: t.dims[0], : t.dims[1], : t.dims[2], :] = lat
    y = matvec_circulant(circ, padded.reshape(-1))
    y = y.reshape(*circ.dims, t.m0)[: t.dims[0], : t.dims[1], : t.dims[2], :]
    return y.reshape(-1)


def fourier_mode_phases(dims: tuple[int, int, int], j: tuple[int, int, int]) -> np.ndarray:
    """Column j of the conjugate unitary DFT F*_{L1 (x) L2 (x) L3}, as a
    lattice-shaped complex array (the scalar circulant eigenvector)."""
    phases = 1.0
    for axis, (L, ji) in enumerate(zip(dims, j)):
        k = np.arange(L)
        axis_phase = np.exp(2j * np.pi * (ji % L) * k / L) / np.sqrt(L)
        shape = [1, 1, 1]
        shape[axis] = L
        phases = phases * axis_phase.reshape(shape)
    return phases


def eigvecs_from_fourier(
    db: FourierBlockDiagonal,
    j: tuple[int, int, int],
    block_vectors: np.ndarray,
    residual_warn: float = 1e-8,
) -> np.ndarray:
    """Lift eigenvectors of the diagonal block Abar_j to the full matrix.

    The full-length vector places the block eigenvector in Fourier slot j
    and applies (F* (x) I): U[k, :] = phases[k] * u.  Non-eigenvector
    inputs are detected through the block residual (Rayleigh quotient) and
    reported as a warning, not an error.

    Parameters
    ----------
    block_vectors : (m0,) or (m0, nvec) ndarray
        Eigenvector(s) of ``db.block(j)``.
    """
    u = np.atleast_2d(np.asarray(block_vectors, dtype=np.complex128).T).T
    if u.shape[0] != db.m0:
        raise ValueError(f"block vectors must have {db.m0} rows")
    blk = db.block(j)
    for col in range(u.shape[1]):
        v = u[:, col]
        scale = np.linalg.norm(v)
        if scale == 0.0:
            raise ValueError("zero block eigenvector")
        rayleigh = (v.conj() @ (blk @ v)) / (scale * scale)
        resid = np.linalg.norm(blk @ v - rayleigh * v) / (
            np.linalg.norm(blk) * scale
        )
        if resid > residual_warn:
            warnings.warn(
                f"block vector {col} at j={tuple(j)} has residual {resid:.2e};"
                " not an eigenvector of the diagonal block",
                stacklevel=2,
            )
    phases = fourier_mode_phases(db.dims, j).reshape(-1)
    full = phases[:, None, None] * u[None, :, :]
    full = full.reshape(db.lattice_size * db.m0, u.shape[1])
    return full if full.shape[1] > 1 else full[:, 0]


def symmetric_fourier_blocks(t: BlockCoefficientTensor) -> FourierBlockDiagonal:
    """One-level symmetric MBC diagonal blocks via the half-range formula

        Abar_j = A_0 + sum_{k<L/2} (omega^{kj} A_k + conj(omega)^{kj} A_k^T)
                 + (-1)^j A_{L/2},

    valid for even L only (odd L goes through `block_diagonalize`)."""
    _require_tag(t, BlockTag.CIRCULANT, "symmetric_fourier_blocks")
    L1, L2, L3 = t.dims
    if L2 != 1 or L3 != 1:
        raise ValueError("symmetric_fourier_blocks handles one-level matrices")
    if L1 % 2:
        raise ValueError(f"level size must be even, got {L1}")
    if not is_symmetric_circulant(t, tol=0.0):
        raise ValueError("coefficients violate the symmetry A_k^T = A_{L-k}")
    omega = np.exp(-2j * np.pi / L1)
    coeffs = t.blocks[:, 0, 0]
    out = np.empty((L1, 1, 1, t.m0, t.m0), dtype=np.complex128)
    for j in range(L1):
        acc = coeffs[0].astype(np.complex128)
        for k in range(1, L1 // 2):
            w = omega ** (k * j)
            acc = acc + w * coeffs[k] + np.conj(w) * coeffs[k].T
        acc = acc + (-1) ** j * coeffs[L1 // 2]
        out[j, 0, 0] = acc
    return FourierBlockDiagonal(t.dims, t.m0, out)
