"""Three-level block coefficient tensors generating structured matrices.

A d-level block matrix with m0 x m0 blocks over an L1 x L2 x L3 lattice is
stored through its generating coefficients only:

- ``CIRCULANT``: the first block column A_k, shape (L1, L2, L3, m0, m0);
  block (k, m) of the full matrix is A_{(k - m) mod L} per level.
- ``SYMMETRIC_TOEPLITZ``: generator blocks T_d on signed offsets
  d_l in [-(L_l - 1), L_l - 1], shape (2L1-1, 2L2-1, 2L3-1, m0, m0) with
  T_{-d} = T_d^T; block (k, m) is T_{k - m}.
- ``GENERAL_BANDED``: per-cell banded blocks B[k, d] = block(k, k + d) for
  |d_l| <= bandwidth, shape (L1, L2, L3, W, W, W, m0, m0) with
  W = 2 * bandwidth + 1.

Blocks beyond the bandwidth are exactly zero by construction.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from enum import Enum
from itertools import product

import numpy as np

_BCT_MAGIC = b"BCT1"


class BlockTag(Enum):
    CIRCULANT = 0
    SYMMETRIC_TOEPLITZ = 1
    GENERAL_BANDED = 2


def _offset_range(L: int) -> range:
    return range(-(L - 1), L)


@dataclass(frozen=True)
class BlockCoefficientTensor:
    """Generating blocks of a multilevel circulant/Toeplitz/banded matrix."""

    tag: BlockTag
    dims: tuple[int, int, int]
    m0: int
    bandwidth: int
    blocks: np.ndarray

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        if len(dims) != 3 or any(d < 1 for d in dims):
            raise ValueError("dims must be three positive integers")
        object.__setattr__(self, "dims", dims)
        blocks = np.ascontiguousarray(self.blocks, dtype=np.float64)
        expected = self._expected_shape(self.tag, dims, self.m0, self.bandwidth)
        if blocks.shape != expected:
            raise ValueError(
                f"blocks shape {blocks.shape} does not match {expected} for "
                f"tag {self.tag.name}"
            )
        blocks.setflags(write=False)
        object.__setattr__(self, "blocks", blocks)

    @staticmethod
    def _expected_shape(tag, dims, m0, bandwidth):
        if tag is BlockTag.CIRCULANT:
            return (*dims, m0, m0)
        if tag is BlockTag.SYMMETRIC_TOEPLITZ:
            return (*(2 * d - 1 for d in dims), m0, m0)
        width = 2 * bandwidth + 1
        return (*dims, width, width, width, m0, m0)

    @property
    def lattice_size(self) -> int:
        d1, d2, d3 = self.dims
        return d1 * d2 * d3

    @property
    def full_size(self) -> int:
        return self.lattice_size * self.m0

    # -- block accessors ---------------------------------------------------

    def circulant_block(self, k: tuple[int, int, int]) -> np.ndarray:
        if self.tag is not BlockTag.CIRCULANT:
            raise ValueError(f"not a circulant tensor (tag {self.tag.name})")
        k = tuple(int(ki) % d for ki, d in zip(k, self.dims))
        return self.blocks[k]

    def toeplitz_block(self, delta: tuple[int, int, int]) -> np.ndarray:
        if self.tag is not BlockTag.SYMMETRIC_TOEPLITZ:
            raise ValueError(
                f"not a symmetric Toeplitz tensor (tag {self.tag.name})"
            )
        idx = []
        for dlt, d in zip(delta, self.dims):
            if abs(dlt) >= d:
                raise IndexError(f"offset {dlt} out of range for {d} cells")
            idx.append(dlt + d - 1)
        return self.blocks[tuple(idx)]

    def banded_block(self, k: tuple[int, int, int], delta: tuple[int, int, int]) -> np.ndarray:
        if self.tag is not BlockTag.GENERAL_BANDED:
            raise ValueError(f"not a banded tensor (tag {self.tag.name})")
        m = tuple(ki + dl for ki, dl in zip(k, delta))
        if any(not 0 <= mi < d for mi, d in zip(m, self.dims)):
            return np.zeros((self.m0, self.m0))
        if any(abs(dl) > self.bandwidth for dl in delta):
            return np.zeros((self.m0, self.m0))
        idx = (*k, *(dl + self.bandwidth for dl in delta))
        return self.blocks[idx]

    def pair_block(self, k: tuple[int, int, int], m: tuple[int, int, int]) -> np.ndarray:
        """Block at block-row k, block-column m of the generated matrix."""
        if self.tag is BlockTag.CIRCULANT:
            return self.circulant_block(tuple(ki - mi for ki, mi in zip(k, m)))
        delta = tuple(ki - mi for ki, mi in zip(k, m))
        if self.tag is BlockTag.SYMMETRIC_TOEPLITZ:
            return self.toeplitz_block(delta)
        # banded stores block(k, k + d): here d = m - k
        return self.banded_block(k, tuple(-dl for dl in delta))

    # -- conversions and algebra -------------------------------------------

    def to_general_banded(self) -> "BlockCoefficientTensor":
        """Expand a symmetric Toeplitz generator into per-cell banded form.

        Circulant tensors are rejected: their wrap-around couplings have no
        place in the open-lattice banded layout.
        """
        if self.tag is BlockTag.GENERAL_BANDED:
            return self
        if self.tag is BlockTag.CIRCULANT:
            raise ValueError(
                "cannot flatten a circulant tensor to banded form; wrap-around"
                " couplings would be lost"
            )
        W = 2 * self.bandwidth + 1
        out = np.zeros((*self.dims, W, W, W, self.m0, self.m0))
        band = range(-self.bandwidth, self.bandwidth + 1)
        for k in product(*(range(d) for d in self.dims)):
            for delta in product(band, band, band):
                m = tuple(ki + dl for ki, dl in zip(k, delta))
                if any(not 0 <= mi < d for mi, d in zip(m, self.dims)):
                    continue
                blk = self.toeplitz_block(tuple(-dl for dl in delta))
                idx = (*k, *(dl + self.bandwidth for dl in delta))
                out[idx] = blk
        return BlockCoefficientTensor(
            BlockTag.GENERAL_BANDED, self.dims, self.m0, self.bandwidth, out
        )

    def combine(self, other: "BlockCoefficientTensor", alpha: float, beta: float) -> "BlockCoefficientTensor":
        """Blockwise linear combination alpha * self + beta * other."""
        if self.tag is not other.tag:
            raise ValueError(
                f"tag mismatch: {self.tag.name} vs {other.tag.name}"
            )
        if self.dims != other.dims or self.m0 != other.m0:
            raise ValueError("lattice dims or block size mismatch")
        if self.bandwidth != other.bandwidth:
            raise ValueError(
                f"bandwidth mismatch: {self.bandwidth} vs {other.bandwidth}"
            )
        return BlockCoefficientTensor(
            self.tag, self.dims, self.m0, self.bandwidth,
            alpha * self.blocks + beta * other.blocks,
        )


def circulant_from_band(
    dims: tuple[int, int, int],
    m0: int,
    bandwidth: int,
    band_block,
) -> BlockCoefficientTensor:
    """Place banded generators T_d (|d_l| <= bandwidth) into circulant slots.

    ``band_block(d)`` must return the block at block-row d, block-column 0
    of the generated matrix (first-block-column convention) and satisfy
    T_{-d} = T_d^T.  Offsets congruent modulo L land in the same slot and
    are summed, which keeps the construction exact for lattices smaller
    than the band; the mirror property then gives A_k^T = A_{L-k}
    identically.
    """
    coeffs = np.zeros((*dims, m0, m0))
    band = range(-bandwidth, bandwidth + 1)
    for delta in product(band, band, band):
        # degenerate levels (L = 1) stay open: no self-overlap through wrap
        if any(dl != 0 and d == 1 for dl, d in zip(delta, dims)):
            continue
        slot = tuple(dl % d for dl, d in zip(delta, dims))
        coeffs[slot] += band_block(delta)
    _symmetrize_mirror_slots(coeffs, dims)
    return BlockCoefficientTensor(BlockTag.CIRCULANT, dims, m0, bandwidth, coeffs)


def _symmetrize_mirror_slots(coeffs: np.ndarray, dims) -> None:
    """Enforce A_k^T = A_{-k} bitwise: averaging with the mirrored
    transpose commutes with the mirror (float addition is commutative), so
    the symmetry becomes exact while values move only at roundoff."""
    done = set()
    for k in product(*(range(d) for d in dims)):
        mirror = tuple((-ki) % d for ki, d in zip(k, dims))
        if mirror in done:
            continue
        done.add(k)
        avg = 0.5 * (coeffs[k] + coeffs[mirror].T)
        coeffs[k] = avg
        coeffs[mirror] = avg.T


def toeplitz_from_band(
    dims: tuple[int, int, int],
    m0: int,
    bandwidth: int,
    band_block,
) -> BlockCoefficientTensor:
    """Symmetric Toeplitz tensor from banded generators (zero outside band).

    ``band_block(d)`` must return the block at block-row d, block-column 0
    (first-block-column convention) with T_{-d} = T_d^T.
    """
    shape = tuple(2 * d - 1 for d in dims)
    coeffs = np.zeros((*shape, m0, m0))
    for delta in product(*(_offset_range(d) for d in dims)):
        if any(abs(dl) > bandwidth for dl in delta):
            continue
        idx = tuple(dl + d - 1 for dl, d in zip(delta, dims))
        coeffs[idx] = band_block(delta)
    # enforce T_{-d} = T_d^T bitwise (same commutativity argument as the
    # circulant mirror slots)
    for delta in product(*(_offset_range(d) for d in dims)):
        if delta < tuple(-dl for dl in delta):
            continue
        idx = tuple(dl + d - 1 for dl, d in zip(delta, dims))
        mir = tuple(-dl + d - 1 for dl, d in zip(delta, dims))
        avg = 0.5 * (coeffs[idx] + coeffs[mir].T)
        coeffs[idx] = avg
        coeffs[mir] = avg.T
    return BlockCoefficientTensor(
        BlockTag.SYMMETRIC_TOEPLITZ, dims, m0, bandwidth, coeffs
    )


def save_blocks(path, t: BlockCoefficientTensor) -> None:
    """Little-endian dump: magic "BCT1", u8 tag, u8 d, u64 L1 L2 L3, u64 m0,
    u64 bandwidth, then f64 blocks in lexicographic offset order,
    column-major within each m0 x m0 block."""
    d = sum(1 for L in t.dims if L > 1) or 1
    with open(path, "wb") as fh:
        fh.write(_BCT_MAGIC)
        fh.write(struct.pack("<BB", t.tag.value, d))
        fh.write(struct.pack("<5Q", *t.dims, t.m0, t.bandwidth))
        flat = t.blocks.reshape(-1, t.m0, t.m0)
        for blk in flat:
            fh.write(np.asfortranarray(blk, dtype="<f8").tobytes(order="F"))


def load_blocks(path) -> BlockCoefficientTensor:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != _BCT_MAGIC:
            raise ValueError(f"bad magic {magic!r}, expected {_BCT_MAGIC!r}")
        tag_value, _d = struct.unpack("<BB", fh.read(2))
        L1, L2, L3, m0, bandwidth = struct.unpack("<5Q", fh.read(40))
        tag = BlockTag(tag_value)
        shape = BlockCoefficientTensor._expected_shape(
            tag, (L1, L2, L3), m0, bandwidth
        )
        count = int(np.prod(shape))
        raw = np.frombuffer(fh.read(8 * count), dtype="<f8")
        blocks = (
            raw.reshape(-1, m0, m0)
            .transpose(0, 2, 1)  # undo column-major within blocks
            .reshape(shape)
        )
    return BlockCoefficientTensor(tag, (L1, L2, L3), int(m0), int(bandwidth), blocks)
