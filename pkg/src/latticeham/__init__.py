"""Block-structured Galerkin core Hamiltonians for 3D lattice systems.

Pipeline: a rank-R canonical tensor of the Newton kernel (`coulomb_kernel`)
is windowed and assembled into lattice potential sums (`lattice_potential`);
Galerkin blocks of the potential, Dirichlet energy, and mass are built by
1D reductions (`galerkin`) into block Toeplitz/circulant form (`blocks`),
which the FFT block-diagonalization machinery (`mlbc`) and the eigensolvers
(`eigensolve`) consume.  `cli` runs config-driven experiments.
"""

from . import blocks, cli, coulomb_kernel, cp_tensor, eigensolve, galerkin, lattice_potential, mlbc

__all__ = [
    "blocks",
    "cli",
    "coulomb_kernel",
    "cp_tensor",
    "eigensolve",
    "galerkin",
    "lattice_potential",
    "mlbc",
]

__version__ = "0.1.0"
