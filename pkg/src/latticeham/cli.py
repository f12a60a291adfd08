"""Config-driven experiment runner: spectra, sparsity, timing, energy.

Usage:
    latticeham <kernel|spectrum|bench|sparsity|energy> --config cfg.json
               [--out DIR] [--seed N]

Exit codes: 0 success, 2 config error, 3 numerical failure.  The worker
pool for the Fourier-decoupled eigensolver is capped by the environment
variable LATTICEHAM_THREADS (default 1).
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import sys
import time
from dataclasses import dataclass
from itertools import product
from pathlib import Path

import numpy as np
import jsonschema
from threadpoolctl import threadpool_limits

from . import mlbc
from .blocks import BlockTag
from .coulomb_kernel import QuadratureConvergenceError, validate_quadrature
from .cp_tensor import load_cpt3, prune, save_cpt3
from .eigensolve import (
    OverlapIndefiniteError,
    OverlapNotSPDError,
    Spectrum,
    average_energy_per_cell,
    solve_dense_generalized,
    solve_periodic_fft,
    spectral_comparison,
    write_spectrum_csv,
)
from .galerkin import (
    GaussianPrimitive,
    SeparableBasis,
    assemble_laplacian_mass_blocks,
    assemble_nuclear_blocks,
    core_hamiltonian,
    detect_overlap_constant,
)
from .lattice_potential import (
    Boundary,
    LatticeConfig,
    Nucleus,
    box_lattice_potential,
    build_lattice_reference,
    periodic_cell_potential,
    required_reference_points,
)

CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["lattice", "basis"],
    "additionalProperties": False,
    "properties": {
        "lattice": {
            "type": "object",
            "required": ["dims", "cell_points", "formation_points", "mesh", "nuclei"],
            "additionalProperties": False,
            "properties": {
                "dims": {
                    "type": "array",
                    "items": {"type": "integer", "minimum": 1},
                    "minItems": 3,
                    "maxItems": 3,
                },
                "cell_points": {"type": "integer", "minimum": 2},
                "formation_points": {"type": "integer", "minimum": 1},
                "mesh": {"type": "number", "exclusiveMinimum": 0},
                "nuclei": {
                    "type": "array",
                    "minItems": 1,
                    "items": {
                        "type": "object",
                        "required": ["center", "charge"],
                        "additionalProperties": False,
                        "properties": {
                            "center": {
                                "type": "array",
                                "items": {"type": "number"},
                                "minItems": 3,
                                "maxItems": 3,
                            },
                            "charge": {"type": "number", "exclusiveMinimum": 0},
                        },
                    },
                },
                "overlap_cells": {"type": "integer", "minimum": 0},
            },
        },
        "basis": {
            "type": "object",
            "required": ["m0"],
            "additionalProperties": False,
            "properties": {
                "m0": {"type": "integer", "minimum": 1},
                "exponents": {
                    "type": "array",
                    "items": {"type": "number", "exclusiveMinimum": 0},
                },
                "centers": {
                    "type": "array",
                    "items": {
                        "type": "array",
                        "items": {"type": "number"},
                        "minItems": 3,
                        "maxItems": 3,
                    },
                },
                "fem_points": {"type": "integer", "minimum": 2},
            },
        },
        "kinetic_factor": {"type": "number"},
        "tolerances": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "kernel_tol": {"type": "number", "exclusiveMinimum": 0},
                "prune_tol": {"type": "number", "minimum": 0},
                "overlap_threshold": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "mode": {"enum": ["box", "periodic", "both"]},
        "sweep": {
            "type": "array",
            "items": {"type": "integer", "minimum": 1},
        },
        "n_occ_per_cell": {"type": "integer", "minimum": 0},
        "potential_cells": {"type": ["integer", "null"], "minimum": 1},
        "gap_count": {"type": "integer", "minimum": 1},
        "dense_cap": {"type": "integer", "minimum": 1},
        "bench_reps": {"type": "integer", "minimum": 1},
        "output_dir": {"type": "string"},
        "seed": {"type": "integer", "minimum": 0},
    },
}

_DEFAULTS = {
    "kinetic_factor": 0.5,
    "tolerances": {"kernel_tol": 1e-5, "prune_tol": 0.0, "overlap_threshold": 1e-8},
    "mode": "both",
    "sweep": [],
    "n_occ_per_cell": 1,
    "potential_cells": None,
    "gap_count": 10,
    "dense_cap": 4096,
    "bench_reps": 5,
    "output_dir": "latticeham_out",
    "seed": 0,
}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    """Resolved experiment settings (see CONFIG_SCHEMA for the JSON form)."""

    raw: dict
    basis: SeparableBasis
    dims: tuple[int, int, int]
    cell_points: int
    formation_points: int
    mesh: float
    nuclei: tuple[Nucleus, ...]
    overlap_cells: int
    fem_points: int
    kinetic_factor: float
    kernel_tol: float
    prune_tol: float
    overlap_threshold: float
    modes: tuple[Boundary, ...]
    sweep: tuple[int, ...]
    n_occ_per_cell: int
    potential_cells: int | None
    gap_count: int
    dense_cap: int
    bench_reps: int
    output_dir: str
    seed: int
    config_hash: str

    def lattice(self, dims=None, boundary: Boundary = Boundary.PERIODIC) -> LatticeConfig:
        return LatticeConfig(
            dims=self.dims if dims is None else dims,
            cell_points=self.cell_points,
            formation_points=self.formation_points,
            mesh=self.mesh,
            nuclei=self.nuclei,
            boundary=boundary,
            overlap_cells=self.overlap_cells,
        )

    def sweep_dims(self) -> list[tuple[int, int, int]]:
        """Lattice dims per sweep entry (substituted into the first axis)."""
        if not self.sweep:
            return [self.dims]
        return [(L, self.dims[1], self.dims[2]) for L in self.sweep]


def _schema_error_path(err: jsonschema.ValidationError) -> str:
    return "/".join(str(p) for p in err.absolute_path) or "<root>"


def load_config(path, seed_override=None, out_override=None) -> ExperimentConfig:
    """Parse, schema-validate, and resolve a JSON experiment config."""
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    try:
        jsonschema.validate(raw, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        raise ConfigError(
            f"config error at {_schema_error_path(exc)}: {exc.message}"
        ) from exc

    merged = {**_DEFAULTS, **raw}
    merged["tolerances"] = {**_DEFAULTS["tolerances"], **raw.get("tolerances", {})}
    if seed_override is not None:
        merged["seed"] = int(seed_override)
    if out_override is not None:
        merged["output_dir"] = str(out_override)

    lat = merged["lattice"]
    bas = merged["basis"]
    m0 = bas["m0"]
    exponents = bas.get("exponents")
    if exponents is None:
        exponents = [0.5 * 3.0 ** k for k in range(m0)]
    if len(exponents) != m0:
        raise ConfigError(
            f"config error at basis/exponents: expected {m0} entries, got "
            f"{len(exponents)}"
        )
    centers = bas.get("centers", [[0.0, 0.0, 0.0]] * m0)
    if len(centers) != m0:
        raise ConfigError(
            f"config error at basis/centers: expected {m0} entries, got "
            f"{len(centers)}"
        )
    basis = SeparableBasis(
        tuple(
            GaussianPrimitive(exponent=a, center=tuple(c))
            for a, c in zip(exponents, centers)
        )
    )
    nuclei = tuple(
        Nucleus(tuple(n["center"]), n["charge"]) for n in lat["nuclei"]
    )
    dims = tuple(lat["dims"])
    tol = merged["tolerances"]

    overlap = lat.get("overlap_cells")
    if overlap is None:
        probe = LatticeConfig(
            dims=dims,
            cell_points=lat["cell_points"],
            formation_points=lat["formation_points"],
            mesh=lat["mesh"],
            nuclei=nuclei,
            boundary=Boundary.BOX,
            overlap_cells=0,
        )
        overlap = detect_overlap_constant(
            basis, probe, tol["overlap_threshold"]
        ).value

    mode = merged["mode"]
    modes = {
        "box": (Boundary.BOX,),
        "periodic": (Boundary.PERIODIC,),
        "both": (Boundary.BOX, Boundary.PERIODIC),
    }[mode]

    canon = dict(merged)
    canon["lattice"] = {**lat, "overlap_cells": overlap}
    digest = hashlib.sha256(
        json.dumps(canon, sort_keys=True, separators=(",", ":")).encode()
    ).hexdigest()[:16]

    cfg = ExperimentConfig(
        raw=merged,
        basis=basis,
        dims=dims,
        cell_points=lat["cell_points"],
        formation_points=lat["formation_points"],
        mesh=lat["mesh"],
        nuclei=nuclei,
        overlap_cells=int(overlap),
        fem_points=bas.get("fem_points", lat["cell_points"]),
        kinetic_factor=merged["kinetic_factor"],
        kernel_tol=tol["kernel_tol"],
        prune_tol=tol["prune_tol"],
        overlap_threshold=tol["overlap_threshold"],
        modes=modes,
        sweep=tuple(merged["sweep"]),
        n_occ_per_cell=merged["n_occ_per_cell"],
        potential_cells=merged["potential_cells"],
        gap_count=merged["gap_count"],
        dense_cap=merged["dense_cap"],
        bench_reps=merged["bench_reps"],
        output_dir=merged["output_dir"],
        seed=merged["seed"],
        config_hash=digest,
    )
    # construct one lattice to surface semantic errors early
    cfg.lattice(boundary=modes[0])
    return cfg


# ---------------------------------------------------------------------------
# pipelines


def cached_reference(cfg: ExperimentConfig, lattice: LatticeConfig):
    """Reference kernel tensor, cached as a CPT3 dump in the output dir.

    The cache key covers everything the tensor depends on (mesh, grid
    size, tolerance); loading is float-exact, so cached runs stay
    byte-deterministic.
    """
    points = required_reference_points(lattice)
    key = hashlib.sha256(
        json.dumps([lattice.mesh, points, cfg.kernel_tol]).encode()
    ).hexdigest()[:16]
    path = Path(cfg.output_dir) / "cache" / f"reference_{key}.cpt3"
    if path.exists():
        return load_cpt3(path)
    ref, _quad = build_lattice_reference(lattice, cfg.kernel_tol, points=points)
    path.parent.mkdir(parents=True, exist_ok=True)
    save_cpt3(path, ref)
    return ref


def assemble_system(cfg: ExperimentConfig, dims, boundary: Boundary):
    """Potential assembly + Galerkin blocks (H, S) for one lattice setting.

    With ``potential_cells`` set, the potential is the central-cell sum at
    that fixed translate cutoff, replicated over the lattice; box mode
    then uses the shift-invariant Toeplitz form of the potential matrix.
    Otherwise the potential is summed over the lattice's own cells (raw
    finite sum) and box mode assembles the true banded matrix.
    """
    lattice = cfg.lattice(dims, boundary)
    if cfg.potential_cells is not None:
        pot_dims = tuple(cfg.potential_cells if d > 1 else 1 for d in dims)
        pot_lattice = cfg.lattice(pot_dims, Boundary.PERIODIC)
        ref = cached_reference(cfg, pot_lattice)
        pot = prune(periodic_cell_potential(pot_lattice, ref), cfg.prune_tol)
        V = assemble_nuclear_blocks(
            cfg.basis, pot, lattice, toeplitz_variant=boundary is Boundary.BOX
        )
    else:
        ref = cached_reference(cfg, lattice)
        if boundary is Boundary.PERIODIC:
            pot = periodic_cell_potential(lattice, ref)
        else:
            pot = box_lattice_potential(lattice, ref)
        pot = prune(pot, cfg.prune_tol)
        V = assemble_nuclear_blocks(cfg.basis, pot, lattice)
    A, S = assemble_laplacian_mass_blocks(cfg.basis, lattice, cfg.fem_points)
    if boundary is Boundary.BOX:
        A = A.to_general_banded()
        V = V.to_general_banded()
    H = core_hamiltonian(A, V, cfg.kinetic_factor)
    return lattice, H, S


def solve_system(cfg: ExperimentConfig, dims, boundary: Boundary) -> Spectrum:
    lattice, H, S = assemble_system(cfg, dims, boundary)
    if boundary is Boundary.PERIODIC:
        return solve_periodic_fft(H, S)
    cap = max(cfg.dense_cap, H.full_size)
    return solve_dense_generalized(
        mlbc.to_dense(H, cap=cap), mlbc.to_dense(S, cap=cap)
    )


# ---------------------------------------------------------------------------
# commands


def _outdir(cfg: ExperimentConfig) -> Path:
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _comment(cfg: ExperimentConfig) -> str:
    return f"config_hash={cfg.config_hash} seed={cfg.seed}"


def _dims_label(dims) -> str:
    return f"{dims[0]}x{dims[1]}x{dims[2]}"


def cmd_kernel(cfg: ExperimentConfig) -> dict:
    """Build the kernel quadrature + reference tensor; report rank/error."""
    out = _outdir(cfg)
    lattice = cfg.lattice(boundary=cfg.modes[0])
    t0 = time.perf_counter()
    ref, quad = build_lattice_reference(lattice, cfg.kernel_tol)
    build_seconds = time.perf_counter() - t0
    # seed the reference cache for the other commands
    points = required_reference_points(lattice)
    key = hashlib.sha256(
        json.dumps([lattice.mesh, points, cfg.kernel_tol]).encode()
    ).hexdigest()[:16]
    cache_path = out / "cache" / f"reference_{key}.cpt3"
    cache_path.parent.mkdir(parents=True, exist_ok=True)
    save_cpt3(cache_path, ref)
    report = {
        "config_hash": cfg.config_hash,
        "rank": int(ref.rank),
        "reference_points": int(ref.dims[0]),
        "max_rel_err": validate_quadrature(quad),
        "target_rel_err": cfg.kernel_tol,
        "build_seconds": build_seconds,
        "cache_file": str(cache_path),
    }
    with open(out / "kernel_report.json", "w") as fh:
        json.dump(report, fh, indent=2)
    return report


def cmd_spectrum(cfg: ExperimentConfig) -> dict:
    """Full pipeline per mode and sweep entry; spectrum CSVs + gap tables."""
    out = _outdir(cfg)
    written = []
    for dims in cfg.sweep_dims():
        spectra = {}
        for boundary in cfg.modes:
            spec = solve_system(cfg, dims, boundary)
            name = f"spectrum_{boundary.value}_L{_dims_label(dims)}.csv"
            write_spectrum_csv(out / name, spec, comment=_comment(cfg))
            spectra[boundary] = spec
            written.append(name)
        if len(spectra) == 2:
            k = min(cfg.gap_count, min(s.count for s in spectra.values()))
            gaps = spectral_comparison(
                spectra[Boundary.BOX], spectra[Boundary.PERIODIC], k
            )
            name = f"gaps_L{_dims_label(dims)}.csv"
            with open(out / name, "w", newline="") as fh:
                fh.write(f"# {_comment(cfg)}\n")
                writer = csv.writer(fh)
                writer.writerow(["index", "box", "periodic", "abs_gap"])
                for i in range(k):
                    writer.writerow(
                        [
                            i,
                            repr(float(spectra[Boundary.BOX].eigenvalues[i])),
                            repr(float(spectra[Boundary.PERIODIC].eigenvalues[i])),
                            repr(float(gaps.gaps[i])),
                        ]
                    )
            written.append(name)
    return {"files": written}


def _median_time(fn, reps: int) -> float:
    fn()  # warm-up, discarded
    times = []
    for _ in range(reps):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return sorted(times)[len(times) // 2]


def fit_loglog_slope(sizes, times) -> float:
    sizes = np.asarray(sizes, dtype=float)
    times = np.asarray(times, dtype=float)
    return float(np.polyfit(np.log(sizes), np.log(times), 1)[0])


def cmd_bench(cfg: ExperimentConfig) -> dict:
    """Time the dense and FFT eigensolver paths over the sweep.

    BLAS threading is pinned to one thread during timing so the fitted
    log-log slopes reflect algorithmic scaling rather than thread-pool
    effects; dense entries above ``dense_cap`` are reported as "--".
    """
    if not cfg.sweep:
        raise ConfigError("bench requires a non-empty sweep")
    out = _outdir(cfg)
    rows = []
    fft_pts, dense_pts = [], []
    for dims in cfg.sweep_dims():
        lattice, H, S = assemble_system(cfg, dims, Boundary.PERIODIC)
        N_b = H.full_size
        with threadpool_limits(1):
            t_fft = _median_time(
                lambda: solve_periodic_fft(H, S, workers=1), cfg.bench_reps
            )
            if N_b <= cfg.dense_cap:
                Hd, Sd = mlbc.to_dense(H, cap=N_b), mlbc.to_dense(S, cap=N_b)
                t_dense = _median_time(
                    lambda: solve_dense_generalized(Hd, Sd), cfg.bench_reps
                )
            else:
                t_dense = None
        rows.append((dims[0], N_b, t_dense, t_fft))
        fft_pts.append((N_b, t_fft))
        if t_dense is not None:
            dense_pts.append((N_b, t_dense))
    with open(out / "bench.csv", "w", newline="") as fh:
        fh.write(f"# {_comment(cfg)}\n")
        writer = csv.writer(fh)
        writer.writerow(["L", "N_b", "t_dense", "t_fft"])
        for L, N_b, t_dense, t_fft in rows:
            writer.writerow(
                [L, N_b, "--" if t_dense is None else repr(t_dense), repr(t_fft)]
            )
    summary = {
        "config_hash": cfg.config_hash,
        "fft_slope": fit_loglog_slope(*zip(*fft_pts)) if len(fft_pts) > 1 else None,
        "dense_slope": (
            fit_loglog_slope(*zip(*dense_pts)) if len(dense_pts) > 1 else None
        ),
        "dense_measured": len(dense_pts),
    }
    with open(out / "bench_summary.json", "w") as fh:
        json.dump(summary, fh, indent=2)
    return summary


def cmd_sparsity(cfg: ExperimentConfig) -> dict:
    """Nonzero-block map of the nuclear potential matrix (plot-ready CSV)."""
    out = _outdir(cfg)
    boundary = cfg.modes[0]
    lattice = cfg.lattice(boundary=boundary)
    ref = cached_reference(cfg, lattice)
    if boundary is Boundary.PERIODIC:
        pot = periodic_cell_potential(lattice, ref)
    else:
        pot = box_lattice_potential(lattice, ref)
    V = assemble_nuclear_blocks(cfg.basis, prune(pot, cfg.prune_tol), lattice)
    L0 = lattice.overlap_cells
    d = sum(1 for L in lattice.dims if L > 1) or 1
    band_limit = (2 * L0 + 1) ** d
    rows = []
    worst = 0
    if V.tag is BlockTag.GENERAL_BANDED:
        for k in product(*(range(L) for L in lattice.dims)):
            count = 0
            for delta in product(*([range(-L0, L0 + 1)] * 3)):
                blk = V.banded_block(k, delta)
                fro = float(np.linalg.norm(blk))
                if fro > 0.0:
                    count += 1
                    rows.append((*k, *delta, fro))
            worst = max(worst, count)
    else:
        for k in product(*(range(L) for L in lattice.dims)):
            blk = V.circulant_block(k)
            fro = float(np.linalg.norm(blk))
            if fro > 0.0:
                worst += 1
                rows.append((*k, 0, 0, 0, fro))
    if worst > band_limit:
        raise RuntimeError(
            f"band bound violated: {worst} nonzero blocks per row exceeds "
            f"(2*{L0}+1)^{d} = {band_limit}"
        )
    with open(out / "sparsity.csv", "w", newline="") as fh:
        fh.write(f"# {_comment(cfg)}\n")
        writer = csv.writer(fh)
        writer.writerow(["k1", "k2", "k3", "d1", "d2", "d3", "frobenius"])
        for row in rows:
            writer.writerow([*row[:6], repr(row[6])])
    return {
        "nonzero_blocks": len(rows),
        "max_per_row": worst,
        "band_limit": band_limit,
    }


def cmd_energy(cfg: ExperimentConfig) -> dict:
    """Average energy per cell over the sweep; checks relaxation."""
    out = _outdir(cfg)
    table = {}
    for dims in cfg.sweep_dims():
        cells = dims[0] * dims[1] * dims[2]
        entry = {}
        for boundary in cfg.modes:
            spec = solve_system(cfg, dims, boundary)
            n_occ = cfg.n_occ_per_cell * cells
            entry[boundary.value] = average_energy_per_cell(spec, n_occ, cells)
        table[dims] = entry
    with open(out / "energy.csv", "w", newline="") as fh:
        fh.write(f"# {_comment(cfg)}\n")
        writer = csv.writer(fh)
        header = ["L"] + [b.value for b in cfg.modes]
        writer.writerow(header)
        for dims, entry in table.items():
            writer.writerow(
                [dims[0]] + [repr(entry[b.value]) for b in cfg.modes]
            )
    relaxed = {}
    for boundary in cfg.modes:
        series = [table[d][boundary.value] for d in table]
        diffs = [abs(b - a) for a, b in zip(series, series[1:])]
        relaxed[boundary.value] = all(
            d2 < d1 for d1, d2 in zip(diffs, diffs[1:])
        ) if len(diffs) > 1 else None
    return {"energies": {str(k): v for k, v in table.items()}, "relaxing": relaxed}


# ---------------------------------------------------------------------------
# entry point


_COMMANDS = {
    "kernel": cmd_kernel,
    "spectrum": cmd_spectrum,
    "bench": cmd_bench,
    "sparsity": cmd_sparsity,
    "energy": cmd_energy,
}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="latticeham",
        description="Lattice core-Hamiltonian experiments "
        "(structured assembly + FFT diagonalization)",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in _COMMANDS.items():
        p = sub.add_parser(name, help=fn.__doc__.splitlines()[0])
        p.add_argument("--config", required=True, help="JSON experiment config")
        p.add_argument("--out", default=None, help="output directory override")
        p.add_argument("--seed", type=int, default=None, help="seed override")
    args = parser.parse_args(argv)

    try:
        cfg = load_config(args.config, seed_override=args.seed, out_override=args.out)
    except (ConfigError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2

    try:
        report = _COMMANDS[args.command](cfg)
    except (
        QuadratureConvergenceError,
        OverlapIndefiniteError,
        OverlapNotSPDError,
        np.linalg.LinAlgError,
        RuntimeError,
    ) as exc:
        print(f"numerical failure ({type(exc).__name__}): {exc}", file=sys.stderr)
        return 3
    print(json.dumps(report, indent=2, default=str))
    return 0


if __name__ == "__main__":
    sys.exit(main())
