"""Order-3 canonical polyadic (CP) tensor arithmetic.

A rank-``R`` canonical tensor is stored as a weight vector and three factor
matrices with unit-norm columns,

    T[i1, i2, i3] = sum_q  c_q * u_q1[i1] * u_q2[i2] * u_q3[i3],

so the magnitude of every term lives in the weight ``c_q``.  This
normalization makes weight-threshold pruning meaningful.  All values are
float64; instances are immutable and safe to share between threads.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

#: Largest entry count `materialize` will expand to (64**3 by default).
MATERIALIZE_CAP = 64 ** 3

_CPT3_MAGIC = b"CPT3"
_CPT3_VERSION = 1


def _unit_columns(matrix: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Normalize columns to unit Euclidean norm, returning (matrix, norms).

    Columns with zero norm are left untouched and get norm 0, so the
    corresponding canonical term carries weight 0.
    """
    norms = np.linalg.norm(matrix, axis=0)
    safe = np.where(norms > 0.0, norms, 1.0)
    return matrix / safe, norms


def _frozen_array(a: np.ndarray) -> np.ndarray:
    out = np.array(a, dtype=np.float64)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class CanonicalTensor3:
    """Rank-``R`` canonical tensor with unit-normalized factor columns.

    Attributes
    ----------
    weights : (R,) ndarray
        Signed weight of each canonical term.
    factors : tuple of three ndarrays, shapes (n1, R), (n2, R), (n3, R)
        Factor matrices; every column has unit Euclidean norm (or is zero,
        which forces the matching weight to zero).
    """

    weights: np.ndarray
    factors: tuple[np.ndarray, np.ndarray, np.ndarray]

    def __post_init__(self):
        weights = _frozen_array(self.weights)
        if weights.ndim != 1:
            raise ValueError("weights must be a 1-D array")
        factors = tuple(_frozen_array(f) for f in self.factors)
        if len(factors) != 3:
            raise ValueError("exactly three factor matrices are required")
        for mode, f in enumerate(factors):
            if f.ndim != 2:
                raise ValueError(f"factor {mode} must be a matrix")
            if f.shape[1] != weights.size:
                raise ValueError(
                    f"factor {mode} has {f.shape[1]} columns, expected "
                    f"{weights.size}"
                )
        if not np.all(np.isfinite(weights)):
            raise ValueError("weights contain non-finite entries")
        for mode, f in enumerate(factors):
            if not np.all(np.isfinite(f)):
                raise ValueError(f"factor {mode} contains non-finite entries")
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "factors", factors)

    @property
    def rank(self) -> int:
        return self.weights.size

    @property
    def dims(self) -> tuple[int, int, int]:
        return tuple(f.shape[0] for f in self.factors)

    @classmethod
    def from_columns(cls, weights, factors) -> "CanonicalTensor3":
        """Build a tensor from arbitrary (not yet normalized) factor columns.

        Column norms are folded into the weights; zero columns zero out the
        corresponding weight.
        """
        weights = np.asarray(weights, dtype=np.float64).copy()
        normalized = []
        for f in factors:
            f, norms = _unit_columns(np.asarray(f, dtype=np.float64))
            weights = weights * norms
            normalized.append(f)
        return cls(weights, tuple(normalized))

    @classmethod
    def zero(cls, dims: tuple[int, int, int]) -> "CanonicalTensor3":
        """Rank-0 tensor of the given dimensions."""
        return cls(np.zeros(0), tuple(np.zeros((n, 0)) for n in dims))


@dataclass(frozen=True)
class RankOneTensor3:
    """Weighted outer product of three vectors (rank-1 special case)."""

    vectors: tuple[np.ndarray, np.ndarray, np.ndarray]
    weight: float = 1.0

    def __post_init__(self):
        vectors = tuple(_frozen_array(v) for v in self.vectors)
        if len(vectors) != 3 or any(v.ndim != 1 for v in vectors):
            raise ValueError("three 1-D vectors are required")
        object.__setattr__(self, "vectors", vectors)
        object.__setattr__(self, "weight", float(self.weight))

    @property
    def dims(self) -> tuple[int, int, int]:
        return tuple(v.size for v in self.vectors)

    def to_canonical(self) -> CanonicalTensor3:
        return CanonicalTensor3.from_columns(
            np.array([self.weight]), tuple(v[:, None] for v in self.vectors)
        )


def _check_dims(a, b) -> None:
    if a.dims != b.dims:
        raise ValueError(f"dimension mismatch: {a.dims} vs {b.dims}")


def hadamard_rank1(a: RankOneTensor3, b: RankOneTensor3) -> RankOneTensor3:
    """Entrywise product of two rank-1 tensors (again rank-1).

    The result's mode vectors are the entrywise products of the input mode
    vectors, renormalized with the norms carried into the weight.
    """
    _check_dims(a, b)
    vectors = []
    weight = a.weight * b.weight
    for u, v in zip(a.vectors, b.vectors):
        p = u * v
        norm = np.linalg.norm(p)
        if norm > 0.0:
            vectors.append(p / norm)
        else:
            vectors.append(p)
        weight *= norm
    return RankOneTensor3(tuple(vectors), weight)


def inner(a: CanonicalTensor3, b: CanonicalTensor3) -> float:
    """Euclidean inner product  <a, b> = sum_q sum_p c_q d_p prod_l <u_ql, v_pl>.

    Cost is O(R_a * R_b * (n1 + n2 + n3)); the tensors are never expanded.
    """
    _check_dims(a, b)
    if a.rank == 0 or b.rank == 0:
        return 0.0
    gram = a.factors[0].T @ b.factors[0]
    gram = gram * (a.factors[1].T @ b.factors[1])
    gram = gram * (a.factors[2].T @ b.factors[2])
    return float(a.weights @ gram @ b.weights)


def add(a: CanonicalTensor3, b: CanonicalTensor3) -> CanonicalTensor3:
    """Formal sum: rank(out) = rank(a) + rank(b), terms concatenated."""
    _check_dims(a, b)
    return CanonicalTensor3(
        np.concatenate([a.weights, b.weights]),
        tuple(np.hstack([fa, fb]) for fa, fb in zip(a.factors, b.factors)),
    )


def scale(a: CanonicalTensor3, alpha: float) -> CanonicalTensor3:
    """Scalar multiple; weights are scaled, factors shared."""
    return CanonicalTensor3(a.weights * float(alpha), a.factors)


def prune(a: CanonicalTensor3, tol: float) -> CanonicalTensor3:
    """Drop canonical terms with |weight| <= tol * max |weight|.

    ``tol = 0`` returns the input unchanged.  The materialized error is
    bounded by (dropped terms) * tol * max|weight| in the separable
    max-norm sense, since factor columns are unit-normalized.
    """
    if tol < 0.0:
        raise ValueError("tol must be non-negative")
    if tol == 0.0 or a.rank == 0:
        return a
    cutoff = tol * np.max(np.abs(a.weights))
    keep = np.abs(a.weights) > cutoff
    if np.all(keep):
        return a
    return CanonicalTensor3(
        a.weights[keep], tuple(f[:, keep] for f in a.factors)
    )


def materialize(a: CanonicalTensor3, cap: int = MATERIALIZE_CAP) -> np.ndarray:
    """Expand to a dense order-3 array (test oracle; gated by ``cap``)."""
    n1, n2, n3 = a.dims
    if n1 * n2 * n3 > cap:
        raise ValueError(
            f"materialization of {a.dims} exceeds cap of {cap} entries"
        )
    if a.rank == 0:
        return np.zeros(a.dims)
    return np.einsum(
        "q,iq,jq,kq->ijk", a.weights, a.factors[0], a.factors[1], a.factors[2]
    )


def values_at(a: CanonicalTensor3, indices: np.ndarray) -> np.ndarray:
    """Evaluate entries at an (m, 3) integer index array without expanding."""
    idx = np.asarray(indices, dtype=np.intp)
    if idx.ndim != 2 or idx.shape[1] != 3:
        raise ValueError("indices must have shape (m, 3)")
    if a.rank == 0:
        return np.zeros(idx.shape[0])
    prod = a.factors[0][idx[:, 0], :]
    prod = prod * a.factors[1][idx[:, 1], :]
    prod = prod * a.factors[2][idx[:, 2], :]
    return prod @ a.weights


def save_cpt3(path, a: CanonicalTensor3) -> None:
    """Write the little-endian CPT3 dump.

    Layout: magic ``b"CPT3"``, u32 version, u64 dims[3], u64 R, f64
    weights[R], then the three factor matrices mode by mode, each stored
    column-major.
    """
    n1, n2, n3 = a.dims
    with open(path, "wb") as fh:
        fh.write(_CPT3_MAGIC)
        fh.write(struct.pack("<I", _CPT3_VERSION))
        fh.write(struct.pack("<4Q", n1, n2, n3, a.rank))
        fh.write(a.weights.astype("<f8").tobytes())
        for f in a.factors:
            fh.write(np.asfortranarray(f, dtype="<f8").tobytes(order="F"))


def load_cpt3(path) -> CanonicalTensor3:
    """Read a tensor written by :func:`save_cpt3`."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != _CPT3_MAGIC:
            raise ValueError(f"bad magic {magic!r}, expected {_CPT3_MAGIC!r}")
        (version,) = struct.unpack("<I", fh.read(4))
        if version != _CPT3_VERSION:
            raise ValueError(f"unsupported CPT3 version {version}")
        n1, n2, n3, rank = struct.unpack("<4Q", fh.read(32))
        weights = np.frombuffer(fh.read(8 * rank), dtype="<f8").copy()
        factors = []
        for n in (n1, n2, n3):
            raw = np.frombuffer(fh.read(8 * n * rank), dtype="<f8")
            factors.append(raw.reshape((n, rank), order="F").copy())
    return CanonicalTensor3(weights, tuple(factors))
