"""Canonical tensor approximation of the Newton kernel 1/||x|| on a grid.

The kernel is written through the Laplace-Gauss transform

    1/z = (2/sqrt(pi)) * int_0^inf exp(-z^2 t^2) dt,   z > 0,

and the integral is discretized by a trapezoidal rule after the
substitution t = log(1 + exp(u)), which decays single-exponentially for
u -> -inf and like a Gaussian for u -> +inf.  The resulting exponential
sum  1/r ~= sum_q w_q exp(-t_q^2 r^2)  separates the three coordinates,
so projecting each Gaussian onto grid cells (exact 1D integrals via the
error function) yields a rank-R canonical tensor whose entries
approximate the cell integrals of 1/||x||.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import erf

from .cp_tensor import CanonicalTensor3


class QuadratureConvergenceError(RuntimeError):
    """Raised when no rule within the term budget meets the tolerance."""


@dataclass(frozen=True)
class GridSpec:
    """Uniform cell grid on one axis triple: n cells of size h per axis.

    Cell ``i`` on axis ``l`` covers ``[origin_l + i*h, origin_l + (i+1)*h]``
    and has center ``origin_l + (i + 0.5) * h``.
    """

    n: int
    h: float
    origin: tuple[float, float, float]

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("grid needs at least 2 points per axis")
        if self.h <= 0.0:
            raise ValueError("mesh size must be positive")
        object.__setattr__(self, "origin", tuple(float(o) for o in self.origin))

    @classmethod
    def centered(cls, n: int, h: float) -> "GridSpec":
        """Grid symmetric about the origin (box [-n*h/2, n*h/2]^3)."""
        half = n * h / 2.0
        return cls(n, h, (-half, -half, -half))

    def centers(self, axis: int = 0) -> np.ndarray:
        return self.origin[axis] + (np.arange(self.n) + 0.5) * self.h

    def edges(self, axis: int = 0) -> np.ndarray:
        return self.origin[axis] + np.arange(self.n + 1) * self.h

    @property
    def is_symmetric(self) -> bool:
        half = self.n * self.h / 2.0
        return all(abs(o + half) <= 1e-12 * max(1.0, half) for o in self.origin)


@dataclass(frozen=True)
class SincQuadrature:
    """Exponential-sum rule  1/r ~= sum_q weights[q] * exp(-nodes[q]^2 r^2).

    Valid on radii in [r_min, r_max] to relative accuracy
    ``target_rel_err`` (weights already absorb the 2/sqrt(pi) prefactor
    and the quadrature step).
    """

    nodes: np.ndarray
    weights: np.ndarray
    target_rel_err: float
    r_min: float
    r_max: float

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=np.float64)
        weights = np.asarray(self.weights, dtype=np.float64)
        if nodes.ndim != 1 or nodes.shape != weights.shape:
            raise ValueError("nodes and weights must be matching 1-D arrays")
        if nodes.size == 0:
            raise ValueError("empty quadrature rule")
        if np.any(nodes <= 0.0):
            raise ValueError("quadrature nodes must be strictly positive")
        if np.any(np.diff(nodes) <= 0.0):
            raise ValueError("quadrature nodes must be strictly increasing")
        if np.any(weights <= 0.0):
            raise ValueError("quadrature weights must be strictly positive")
        if not (0.0 < self.r_min <= self.r_max):
            raise ValueError("need 0 < r_min <= r_max")
        nodes.setflags(write=False)
        weights.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "weights", weights)

    @property
    def rank(self) -> int:
        return self.nodes.size


def _trapezoid_rule(rho: float, tol: float, n_nodes: int):
    """Rule for 1/r on the normalized interval [1, rho].

    The truncation points split the error budget: the lower cut bounds the
    missing [0, t_lo] mass relative to 1/rho, the upper cut bounds the
    missing Gaussian tail at r = 1.
    """
    t_lo = 0.5 * np.sqrt(np.pi) * 0.25 * tol / rho
    t_hi = np.sqrt(np.log(1.0 / (0.25 * tol)))
    u_a = np.log(np.expm1(t_lo)) if t_lo < 30.0 else t_lo
    u_b = np.log(np.expm1(t_hi)) if t_hi < 30.0 else t_hi
    u = np.linspace(u_a, u_b, n_nodes)
    step = u[1] - u[0]
    nodes = np.logaddexp(0.0, u)  # log(1 + e^u), overflow-safe
    weights = (2.0 / np.sqrt(np.pi)) * step / (1.0 + np.exp(-u))
    return nodes, weights


def _max_rel_err(nodes, weights, r_min, r_max, samples):
    if r_max > r_min:
        radii = np.geomspace(r_min, r_max, samples)
    else:
        radii = np.array([r_min])
    approx = np.exp(-np.outer(radii ** 2, nodes ** 2)) @ weights
    return float(np.max(np.abs(approx * radii - 1.0)))


def validate_quadrature(q: SincQuadrature, sample_count: int = 1000) -> float:
    """Max of r * |1/r - sum_q w_q exp(-t_q^2 r^2)| over log-spaced radii."""
    if sample_count < 2:
        raise ValueError("sample_count must be at least 2")
    return _max_rel_err(q.nodes, q.weights, q.r_min, q.r_max, sample_count)


def build_quadrature(
    r_min: float,
    r_max: float,
    target_rel_err: float,
    max_terms: int = 256,
) -> SincQuadrature:
    """Construct the smallest trapezoidal rule meeting ``target_rel_err``.

    The rule is built on the normalized interval [1, r_max/r_min] and
    rescaled, since the substitution t = log(1 + e^u) is not
    scale-invariant.  The node count is found by doubling followed by
    bisection; failure to converge within ``max_terms`` raises
    :class:`QuadratureConvergenceError`.
    """
    if not (0.0 < r_min <= r_max):
        raise ValueError("need 0 < r_min <= r_max")
    if not (0.0 < target_rel_err <= 1e-2):
        raise ValueError("target_rel_err must lie in (0, 1e-2]")
    rho = r_max / r_min
    samples = 1000

    def err_at(n_nodes):
        nodes, weights = _trapezoid_rule(rho, target_rel_err, n_nodes)
        return _max_rel_err(nodes, weights, 1.0, rho, samples)

    hi = 8
    while err_at(hi) > target_rel_err:
        hi *= 2
        if hi > max_terms:
            raise QuadratureConvergenceError(
                f"no rule with at most {max_terms} terms reaches "
                f"relative error {target_rel_err:g} on [{r_min:g}, {r_max:g}]"
            )
    lo = hi // 2
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if err_at(mid) <= target_rel_err:
            hi = mid
        else:
            lo = mid
    nodes, weights = _trapezoid_rule(rho, target_rel_err, hi)
    return SincQuadrature(
        nodes / r_min, weights / r_min, target_rel_err, r_min, r_max
    )


def gaussian_cell_integrals(t: float, edges: np.ndarray) -> np.ndarray:
    """Exact integrals of exp(-t^2 x^2) over the cells defined by ``edges``."""
    anti = erf(t * edges) * (np.sqrt(np.pi) / (2.0 * t))
    return np.diff(anti)


def build_reference_tensor(grid: GridSpec, q: SincQuadrature) -> CanonicalTensor3:
    """Rank-R canonical tensor of cell integrals of 1/||x|| on ``grid``.

    Factor entries are the exact 1D cell integrals of exp(-t_q^2 x^2), so
    the materialized entry at cell ``i`` approximates
    ``int_cell 1/||x|| dx`` with the quadrature's relative accuracy at the
    cell's distance from the origin.  Point values are recovered by
    dividing by the cell volume h^3.
    """
    if not grid.is_symmetric:
        raise ValueError("reference grid must be symmetric about the origin")
    diam = np.sqrt(3.0) * grid.n * grid.h
    if q.r_min > grid.h or q.r_max < diam:
        raise ValueError(
            f"quadrature validity [{q.r_min:g}, {q.r_max:g}] does not cover "
            f"the grid range [{grid.h:g}, {diam:g}]"
        )
    columns = np.empty((grid.n, q.rank))
    for idx, t in enumerate(q.nodes):
        columns[:, idx] = gaussian_cell_integrals(t, grid.edges())
    # identical geometry on all three axes; the weights absorb column norms
    return CanonicalTensor3.from_columns(
        q.weights.copy(), (columns, columns.copy(), columns.copy())
    )
