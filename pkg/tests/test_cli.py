"""CLI contract: config validation, file outputs, determinism, exit codes."""

import json

import pytest

from latticeham.cli import (
    ConfigError,
    cmd_bench,
    cmd_energy,
    cmd_kernel,
    cmd_sparsity,
    cmd_spectrum,
    load_config,
    main,
)


def base_config(out_dir, **overrides):
    cfg = {
        "lattice": {
            "dims": [4, 1, 1],
            "cell_points": 16,
            "formation_points": 8,
            "mesh": 0.375,
            "nuclei": [{"center": [0.0, 0.0, 0.0], "charge": 1.0}],
            "overlap_cells": 2,
        },
        "basis": {"m0": 2, "exponents": [0.6, 2.4]},
        "tolerances": {"kernel_tol": 1e-4},
        "mode": "both",
        "gap_count": 4,
        "output_dir": str(out_dir),
        "seed": 7,
    }
    cfg.update(overrides)
    return cfg


def write_config(tmp_path, cfg, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return path


class TestConfigLoading:
    def test_schema_error_reports_field_path(self, tmp_path):
        cfg = base_config(tmp_path)
        cfg["lattice"]["dims"] = [4, 1]
        path = write_config(tmp_path, cfg)
        with pytest.raises(ConfigError, match="lattice/dims"):
            load_config(path)

    def test_unknown_key_rejected(self, tmp_path):
        cfg = base_config(tmp_path)
        cfg["typo_key"] = 1
        path = write_config(tmp_path, cfg)
        with pytest.raises(ConfigError):
            load_config(path)

    def test_exponent_count_checked(self, tmp_path):
        cfg = base_config(tmp_path)
        cfg["basis"]["exponents"] = [1.0]
        path = write_config(tmp_path, cfg)
        with pytest.raises(ConfigError, match="exponents"):
            load_config(path)

    def test_overlap_detected_when_absent(self, tmp_path):
        cfg = base_config(tmp_path)
        del cfg["lattice"]["overlap_cells"]
        path = write_config(tmp_path, cfg)
        loaded = load_config(path)
        assert loaded.overlap_cells >= 1

    def test_seed_and_out_overrides(self, tmp_path):
        path = write_config(tmp_path, base_config(tmp_path))
        loaded = load_config(path, seed_override=99, out_override="elsewhere")
        assert loaded.seed == 99
        assert loaded.output_dir == "elsewhere"

    def test_hash_stable_under_key_order(self, tmp_path):
        cfg = base_config(tmp_path)
        a = load_config(write_config(tmp_path, cfg, "a.json"))
        swapped = dict(reversed(list(cfg.items())))
        b = load_config(write_config(tmp_path, swapped, "b.json"))
        assert a.config_hash == b.config_hash


class TestKernelCommand:
    def test_report_meets_tolerance(self, tmp_path):
        cfg = load_config(write_config(tmp_path, base_config(tmp_path / "out")))
        report = cmd_kernel(cfg)
        assert report["max_rel_err"] <= cfg.kernel_tol
        assert (tmp_path / "out" / "kernel_report.json").exists()

    def test_rank_decreases_with_looser_tolerance(self, tmp_path):
        loose_cfg = base_config(tmp_path / "a")
        loose_cfg["tolerances"]["kernel_tol"] = 1e-3
        tight_cfg = base_config(tmp_path / "b")
        tight_cfg["tolerances"]["kernel_tol"] = 1e-8
        loose = cmd_kernel(load_config(write_config(tmp_path, loose_cfg, "a.json")))
        tight = cmd_kernel(load_config(write_config(tmp_path, tight_cfg, "b.json")))
        assert loose["rank"] < tight["rank"]


class TestSpectrumCommand:
    def test_file_contract_and_determinism(self, tmp_path):
        path = write_config(tmp_path, base_config(tmp_path / "out"))
        cfg = load_config(path)
        report = cmd_spectrum(cfg)
        names = set(report["files"])
        assert "spectrum_box_L4x1x1.csv" in names
        assert "spectrum_periodic_L4x1x1.csv" in names
        assert "gaps_L4x1x1.csv" in names
        gaps = (tmp_path / "out" / "gaps_L4x1x1.csv").read_text().splitlines()
        assert len(gaps) == 2 + cfg.gap_count  # comment + header + k rows
        first = {
            n: (tmp_path / "out" / n).read_bytes() for n in report["files"]
        }
        cmd_spectrum(cfg)  # rerun into the same directory
        for n, payload in first.items():
            assert (tmp_path / "out" / n).read_bytes() == payload

    def test_fourier_path_used_for_periodic(self, tmp_path):
        cfg_dict = base_config(tmp_path / "out", mode="periodic")
        cfg = load_config(write_config(tmp_path, cfg_dict))
        cmd_spectrum(cfg)
        rows = (
            (tmp_path / "out" / "spectrum_periodic_L4x1x1.csv")
            .read_text()
            .splitlines()[2:]
        )
        j1 = {int(r.split(",")[2]) for r in rows}
        assert j1 == {0, 1, 2, 3}


class TestBenchCommand:
    def test_single_point_table_and_dense_cutoff(self, tmp_path):
        cfg_dict = base_config(tmp_path / "out", mode="periodic")
        cfg_dict["sweep"] = [2, 4]
        cfg_dict["dense_cap"] = 4  # N_b = 8 exceeds it at L=4
        cfg_dict["bench_reps"] = 1
        cfg = load_config(write_config(tmp_path, cfg_dict))
        cmd_bench(cfg)
        rows = (tmp_path / "out" / "bench.csv").read_text().splitlines()
        assert rows[1] == "L,N_b,t_dense,t_fft"
        cells = [r.split(",") for r in rows[2:]]
        assert float(cells[0][2]) > 0  # N_b = 4 within the dense cap
        assert cells[1][2] == "--"  # N_b = 8 beyond the cap
        assert float(cells[1][3]) > 0

    def test_requires_sweep(self, tmp_path):
        cfg = load_config(write_config(tmp_path, base_config(tmp_path / "out")))
        with pytest.raises(ConfigError, match="sweep"):
            cmd_bench(cfg)


class TestSparsityCommand:
    def test_band_bound_asserted_box(self, tmp_path):
        cfg_dict = base_config(tmp_path / "out", mode="box")
        cfg = load_config(write_config(tmp_path, cfg_dict))
        report = cmd_sparsity(cfg)
        assert report["max_per_row"] <= report["band_limit"]
        rows = (tmp_path / "out" / "sparsity.csv").read_text().splitlines()
        assert rows[1] == "k1,k2,k3,d1,d2,d3,frobenius"

    def test_zero_overlap_is_block_diagonal(self, tmp_path):
        cfg_dict = base_config(tmp_path / "out", mode="box")
        cfg_dict["lattice"]["overlap_cells"] = 0
        cfg = load_config(write_config(tmp_path, cfg_dict))
        report = cmd_sparsity(cfg)
        assert report["max_per_row"] == 1

    def test_periodic_wraparound_pattern(self, tmp_path):
        cfg_dict = base_config(tmp_path / "out", mode="periodic")
        cfg = load_config(write_config(tmp_path, cfg_dict))
        report = cmd_sparsity(cfg)
        # generator column occupancy: offsets 0, +-1, +-2 mod 4 -> all slots
        assert report["nonzero_blocks"] == 4


class TestEnergyCommand:
    def test_single_l_row(self, tmp_path):
        cfg_dict = base_config(tmp_path / "out")
        cfg = load_config(write_config(tmp_path, cfg_dict))
        report = cmd_energy(cfg)
        rows = (tmp_path / "out" / "energy.csv").read_text().splitlines()
        assert rows[1] == "L,box,periodic"
        assert len(rows) == 3
        assert all(v is None for v in report["relaxing"].values())

    def test_relaxation_with_fixed_potential_cutoff(self, tmp_path):
        cfg_dict = base_config(tmp_path / "out")
        cfg_dict["sweep"] = [2, 4, 8]
        cfg_dict["potential_cells"] = 32
        cfg = load_config(write_config(tmp_path, cfg_dict))
        report = cmd_energy(cfg)
        assert all(report["relaxing"].values())


class TestReferenceCache:
    def test_kernel_seeds_cache_and_reuse_is_exact(self, tmp_path):
        path = write_config(tmp_path, base_config(tmp_path / "out"))
        cfg = load_config(path)
        report = cmd_kernel(cfg)
        cache = tmp_path / "out" / "cache"
        assert any(cache.glob("reference_*.cpt3"))
        first = cmd_spectrum(cfg)  # consumes the cache
        payloads = {
            n: (tmp_path / "out" / n).read_bytes() for n in first["files"]
        }
        cmd_spectrum(cfg)
        for n, payload in payloads.items():
            assert (tmp_path / "out" / n).read_bytes() == payload


class TestMainEntry:
    def test_exit_zero(self, tmp_path, capsys):
        path = write_config(tmp_path, base_config(tmp_path / "out"))
        assert main(["kernel", "--config", str(path)]) == 0
        out = capsys.readouterr().out
        assert json.loads(out)["rank"] > 0

    def test_config_error_exit_two(self, tmp_path, capsys):
        cfg = base_config(tmp_path / "out")
        cfg["mode"] = "sideways"
        path = write_config(tmp_path, cfg)
        assert main(["spectrum", "--config", str(path)]) == 2
        assert "config error" in capsys.readouterr().err

    def test_missing_file_exit_two(self, tmp_path, capsys):
        assert main(["kernel", "--config", str(tmp_path / "nope.json")]) == 2

    def test_numerical_failure_exit_three(self, tmp_path, capsys):
        cfg = base_config(tmp_path / "out", mode="periodic")
        cfg["tolerances"]["kernel_tol"] = 1e-2
        # a basis so diffuse that lattice-translated copies are numerically
        # dependent: the overlap Fourier block goes indefinite
        cfg["basis"] = {"m0": 2, "exponents": [1e-4, 1.2e-4]}
        cfg["lattice"]["overlap_cells"] = 3
        path = write_config(tmp_path, cfg)
        code = main(["spectrum", "--config", str(path)])
        err = capsys.readouterr().err
        assert code == 3
        assert "numerical failure" in err
