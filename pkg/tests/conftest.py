"""Shared fixtures and independent oracles for the test suite."""

import numpy as np
import pytest

from latticeham.blocks import BlockCoefficientTensor, BlockTag
from latticeham.galerkin import hydrogen_like_basis
from latticeham.lattice_potential import Boundary, LatticeConfig, Nucleus


# ---------------------------------------------------------------------------
# exact box integrals of 1/||x|| (independent oracle for the kernel tensor)


def _prism_primitive(x, y, z):
    """Integral of 1/||v|| over [0,x]x[0,y]x[0,z] for nonnegative corners
    (classic rectangular-prism Newton potential antiderivative)."""
    r = np.sqrt(x * x + y * y + z * z)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = (
            y * z * np.arcsinh(x / np.sqrt(y * y + z * z))
            + x * z * np.arcsinh(y / np.sqrt(x * x + z * z))
            + x * y * np.arcsinh(z / np.sqrt(x * x + y * y))
            - 0.5 * x * x * np.arctan2(y * z, x * r)
            - 0.5 * y * y * np.arctan2(x * z, y * r)
            - 0.5 * z * z * np.arctan2(x * y, z * r)
        )
    return np.nan_to_num(t, nan=0.0, posinf=0.0, neginf=0.0)


def _signed_primitive(x, y, z):
    # 1/||v|| is even in every coordinate, so the triple primitive is odd
    return (
        np.sign(x)
        * np.sign(y)
        * np.sign(z)
        * _prism_primitive(np.abs(x), np.abs(y), np.abs(z))
    )


def cell_integral_inv_r(x0, x1, y0, y1, z0, z1):
    """Exact integral of 1/||x|| over a box by 8-corner inclusion-exclusion."""
    total = 0.0
    for i, xs in enumerate((x0, x1)):
        for j, ys in enumerate((y0, y1)):
            for k, zs in enumerate((z0, z1)):
                total = total + (-1) ** (i + j + k + 3) * _signed_primitive(
                    xs, ys, zs
                )
    return total


def grid_cell_integrals_inv_r(edges: np.ndarray) -> np.ndarray:
    """Exact cell integrals of 1/||x|| on the cube grid with given edges."""
    n = edges.size - 1
    shape = (n, n, n)
    lo = [np.broadcast_to(edges[:-1].reshape([-1 if a == ax else 1 for a in range(3)]), shape) for ax in range(3)]
    hi = [np.broadcast_to(edges[1:].reshape([-1 if a == ax else 1 for a in range(3)]), shape) for ax in range(3)]
    return cell_integral_inv_r(lo[0], hi[0], lo[1], hi[1], lo[2], hi[2])


# ---------------------------------------------------------------------------
# random structured matrices


def random_symmetric_mbc(dims, m0, rng, bandwidth=None) -> BlockCoefficientTensor:
    """Random MBC coefficients satisfying A_k^T = A_{L-k} exactly."""
    raw = rng.standard_normal((*dims, m0, m0))
    sym = np.empty_like(raw)
    for k1 in range(dims[0]):
        for k2 in range(dims[1]):
            for k3 in range(dims[2]):
                mir = raw[(-k1) % dims[0], (-k2) % dims[1], (-k3) % dims[2]]
                sym[k1, k2, k3] = 0.5 * (raw[k1, k2, k3] + mir.T)
    for k1 in range(dims[0]):
        for k2 in range(dims[1]):
            for k3 in range(dims[2]):
                mir = sym[(-k1) % dims[0], (-k2) % dims[1], (-k3) % dims[2]]
                sym[k1, k2, k3] = mir.T  # bit-exact mirror
    bw = max(dims) - 1 if bandwidth is None else bandwidth
    return BlockCoefficientTensor(BlockTag.CIRCULANT, dims, m0, bw, sym)


def random_symmetric_mbt(dims, m0, rng, bandwidth=None) -> BlockCoefficientTensor:
    """Random symmetric multilevel block Toeplitz generator (T_{-d}=T_d^T)."""
    shape = tuple(2 * d - 1 for d in dims)
    raw = rng.standard_normal((*shape, m0, m0))
    bw = max(dims) - 1 if bandwidth is None else bandwidth
    out = np.zeros_like(raw)
    for d1 in range(-(dims[0] - 1), dims[0]):
        for d2 in range(-(dims[1] - 1), dims[1]):
            for d3 in range(-(dims[2] - 1), dims[2]):
                if any(abs(d) > bw for d in (d1, d2, d3)):
                    continue
                idx = tuple(d + L - 1 for d, L in zip((d1, d2, d3), dims))
                mir = tuple(-d + L - 1 for d, L in zip((d1, d2, d3), dims))
                avg = 0.5 * (raw[idx] + raw[mir].T)
                out[idx] = avg
                out[mir] = avg.T
    return BlockCoefficientTensor(BlockTag.SYMMETRIC_TOEPLITZ, dims, m0, bw, out)


# ---------------------------------------------------------------------------
# experiment geometry


def chain_config(L, boundary=Boundary.PERIODIC, overlap=3, n=32, n0=16, b0=3.0):
    """Single-nucleus chain cell: Z = 1 at the cell center, b = 2 * b0."""
    return LatticeConfig(
        dims=(L, 1, 1),
        cell_points=n,
        formation_points=n0,
        mesh=b0 / n0,
        nuclei=(Nucleus((0.0, 0.0, 0.0), 1.0),),
        boundary=boundary,
        overlap_cells=overlap,
    )


@pytest.fixture
def rng():
    return np.random.default_rng(20240811)


@pytest.fixture(scope="session")
def chain_basis():
    return hydrogen_like_basis(4)
