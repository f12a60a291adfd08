"""Windowing and assembled lattice sums against direct summation."""

import numpy as np
import pytest
from numpy.testing import assert_allclose

from latticeham.cp_tensor import materialize, values_at
from latticeham.lattice_potential import (
    Boundary,
    LatticeConfig,
    Nucleus,
    WindowOp,
    box_grid_centers,
    box_lattice_potential,
    build_lattice_reference,
    cell_grid_centers,
    direct_sum_oracle,
    nucleus_shift_units,
    periodic_cell_potential,
    required_reference_points,
    translate_positions,
    unit_cell_potential,
    window,
)


def small_config(boundary, dims=(2, 2, 2), two_nuclei=True):
    nuclei = [Nucleus((0.0, 0.0, 0.0), 1.0)]
    if two_nuclei:
        nuclei.append(Nucleus((0.375, 0.0, -0.375), 2.0))
    return LatticeConfig(
        dims=dims,
        cell_points=8,
        formation_points=4,
        mesh=0.375,
        nuclei=tuple(nuclei),
        boundary=boundary,
        overlap_cells=2,
    )


class TestWindow:
    def test_identity(self):
        src = np.arange(10.0)
        out = window(src, WindowOp(0, 10, 10))
        assert np.array_equal(out, src)

    def test_slice_semantics(self):
        out = window(np.arange(10.0), WindowOp(3, 4, 10))
        assert np.array_equal(out, [3.0, 4.0, 5.0, 6.0])

    def test_out_of_bounds(self):
        with pytest.raises(ValueError, match="out of bounds"):
            WindowOp(8, 4, 10)
        with pytest.raises(ValueError, match="out of bounds"):
            WindowOp(-1, 4, 10)

    def test_adjacent_cells_differ_by_formation_points(self):
        # index arithmetic oracle: the two-cell assembly must equal the sum
        # of two reference windows whose offsets differ by exactly n0
        cfg = small_config(Boundary.BOX, dims=(2, 1, 1), two_nuclei=False)
        ref, _ = build_lattice_reference(cfg, 1e-4)
        pot = box_lattice_potential(cfg, ref)
        n, n0 = cfg.cell_points, cfg.formation_points
        N = cfg.supercell_points
        o0 = (ref.dims[0] - n) // 2  # cell-0 window of the centered nucleus
        cols = ref.factors[0]
        axis0 = cols[o0 : o0 + N[0], :] + cols[o0 - n0 : o0 - n0 + N[0], :]
        transverse = cols[o0 : o0 + n, :]
        manual = np.einsum(
            "q,iq,jq,kq->ijk", ref.weights, axis0, transverse, transverse
        )
        assert_allclose(materialize(pot, cap=int(1e6)), manual, rtol=1e-13)


class TestShiftValidation:
    def test_off_grid_nucleus_rejected(self):
        cfg = small_config(Boundary.BOX)
        with pytest.raises(ValueError, match="integer multiple"):
            nucleus_shift_units(cfg, (0.1, 0.0, 0.0))

    def test_outside_formation_domain_rejected(self):
        cfg = small_config(Boundary.BOX)
        with pytest.raises(ValueError, match="formation domain"):
            nucleus_shift_units(cfg, (0.75, 0.0, 0.0))


class TestUnitCell:
    def test_single_centered_nucleus_is_window(self, rng):
        cfg = small_config(Boundary.BOX, dims=(1, 1, 1), two_nuclei=False)
        ref, _ = build_lattice_reference(cfg, 1e-4)
        pot = unit_cell_potential(cfg, ref)
        n = cfg.cell_points
        off = (ref.dims[0] - n) // 2
        dense_ref = materialize(ref, cap=ref.dims[0] ** 3)
        expected = dense_ref[off : off + n, off : off + n, off : off + n]
        assert_allclose(materialize(pot), expected, rtol=1e-13)

    def test_mirrored_nuclei_symmetry(self):
        cfg = LatticeConfig(
            dims=(1, 1, 1),
            cell_points=8,
            formation_points=4,
            mesh=0.375,
            nuclei=(
                Nucleus((0.375, 0.0, 0.0), 1.0),
                Nucleus((-0.375, 0.0, 0.0), 1.0),
            ),
            boundary=Boundary.BOX,
            overlap_cells=2,
        )
        ref, _ = build_lattice_reference(cfg, 1e-4)
        dense = materialize(unit_cell_potential(cfg, ref))
        assert np.abs(dense - dense[::-1, :, :]).max() <= 1e-14 * dense.max()

    def test_two_nucleus_value_matches_direct_sum(self):
        cfg = small_config(Boundary.BOX, dims=(1, 1, 1))
        ref, _ = build_lattice_reference(cfg, 1e-5)
        pot = unit_cell_potential(cfg, ref)
        c = cell_grid_centers(cfg)
        probe_idx = np.array([[1, 1, 1]])
        probe = np.array([[c[1], c[1], c[1]]])
        val = values_at(pot, probe_idx)[0] / cfg.mesh ** 3
        expected = direct_sum_oracle(cfg, probe)[0]
        assert_allclose(val, expected, rtol=5e-5)


class TestBoxLattice:
    def test_degenerate_lattice_equals_unit_cell(self):
        cfg = small_config(Boundary.BOX, dims=(1, 1, 1))
        ref, _ = build_lattice_reference(cfg, 1e-4)
        a = materialize(box_lattice_potential(cfg, ref))
        b = materialize(unit_cell_potential(cfg, ref))
        assert np.array_equal(a, b)

    def test_two_cell_chain_matches_direct_sum(self):
        cfg = small_config(Boundary.BOX, dims=(2, 1, 1), two_nuclei=False)
        ref, _ = build_lattice_reference(cfg, 1e-5)
        pot = box_lattice_potential(cfg, ref)
        cx = [box_grid_centers(cfg, a) for a in range(3)]
        # probe cells at least 3h away from both nucleus translates
        idx = np.array([[1, 3, 6], [10, 1, 1], [5, 7, 7]])
        probes = np.stack([cx[a][idx[:, a]] for a in range(3)], axis=1)
        positions, _ = translate_positions(cfg)
        for p in probes:
            assert np.min(np.linalg.norm(positions - p, axis=1)) >= 3 * cfg.mesh
        vals = values_at(pot, idx) / cfg.mesh ** 3
        expected = direct_sum_oracle(cfg, probes)
        assert_allclose(vals, expected, rtol=1e-4)

    def test_rank_bound_independent_of_lattice(self):
        for L in (2, 4, 8):
            cfg = small_config(Boundary.BOX, dims=(L, 1, 1))
            ref, quad = build_lattice_reference(cfg, 1e-4)
            pot = box_lattice_potential(cfg, ref)
            assert pot.rank <= len(cfg.nuclei) * quad.rank

    def test_positivity(self):
        cfg = small_config(Boundary.BOX, dims=(2, 2, 1))
        ref, _ = build_lattice_reference(cfg, 1e-4)
        dense = materialize(
            box_lattice_potential(cfg, ref), cap=int(2e6)
        )
        assert np.all(dense > 0.0)

    def test_reference_too_small_raises(self):
        cfg = small_config(Boundary.BOX, dims=(4, 1, 1))
        ref, _ = build_lattice_reference(
            cfg, 1e-4, points=required_reference_points(cfg) - 8
        )
        with pytest.raises(ValueError, match="too small"):
            box_lattice_potential(cfg, ref)


class TestPeriodicCell:
    def test_degenerate_lattice_equals_unit_cell(self):
        cfg = small_config(Boundary.PERIODIC, dims=(1, 1, 1))
        ref, _ = build_lattice_reference(cfg, 1e-4)
        a = materialize(periodic_cell_potential(cfg, ref))
        b = materialize(unit_cell_potential(cfg, ref))
        assert np.array_equal(a, b)

    def test_three_cell_chain_matches_direct_sum(self):
        cfg = small_config(Boundary.PERIODIC, dims=(3, 1, 1), two_nuclei=False)
        ref, _ = build_lattice_reference(cfg, 1e-5)
        pot = periodic_cell_potential(cfg, ref)
        c = cell_grid_centers(cfg)
        idx = np.array([[0, 1, 6], [7, 6, 6], [3, 7, 0]])
        probes = np.stack([c[idx[:, a]] for a in range(3)], axis=1)
        positions, _ = translate_positions(cfg)
        for p in probes:
            assert np.min(np.linalg.norm(positions - p, axis=1)) >= 3 * cfg.mesh
        vals = values_at(pot, idx) / cfg.mesh ** 3
        assert_allclose(vals, direct_sum_oracle(cfg, probes), rtol=1e-4)

    def test_monotone_growth_with_lattice_size(self):
        values = []
        for L in (1, 2, 3, 4):
            cfg = small_config(Boundary.PERIODIC, dims=(L, L, L))
            ref, _ = build_lattice_reference(cfg, 1e-4)
            dense = materialize(periodic_cell_potential(cfg, ref))
            values.append(dense.min())
        assert all(b > a for a, b in zip(values, values[1:]))

    def test_translation_invariance(self):
        cfg = small_config(Boundary.PERIODIC, dims=(3, 2, 2))
        ref, _ = build_lattice_reference(cfg, 1e-4)
        base = materialize(periodic_cell_potential(cfg, ref))
        b0 = cfg.formation_edge
        shifted = LatticeConfig(
            dims=cfg.dims,
            cell_points=cfg.cell_points,
            formation_points=cfg.formation_points,
            mesh=cfg.mesh,
            nuclei=tuple(
                Nucleus(
                    (n.center[0] + b0, n.center[1] - b0, n.center[2]),
                    n.charge,
                )
                for n in cfg.nuclei
            ),
            boundary=Boundary.PERIODIC,
            overlap_cells=cfg.overlap_cells,
        )
        other = materialize(periodic_cell_potential(shifted, ref))
        assert np.abs(other - base).max() <= 1e-12 * base.max()


class TestDirectSumOracle:
    def test_unit_distance(self):
        cfg = LatticeConfig(
            dims=(1, 1, 1),
            cell_points=8,
            formation_points=4,
            mesh=0.375,
            nuclei=(Nucleus((0.0, 0.0, 0.0), 1.0),),
            boundary=Boundary.BOX,
            overlap_cells=1,
        )
        val = direct_sum_oracle(cfg, np.array([[1.0, 0.0, 0.0]]))
        assert_allclose(val, [1.0], rtol=1e-15)

    def test_linear_in_charge(self):
        base = small_config(Boundary.BOX, two_nuclei=False)
        doubled = LatticeConfig(
            dims=base.dims,
            cell_points=base.cell_points,
            formation_points=base.formation_points,
            mesh=base.mesh,
            nuclei=(Nucleus((0.0, 0.0, 0.0), 2.0),),
            boundary=Boundary.BOX,
            overlap_cells=base.overlap_cells,
        )
        probes = np.array([[1.3, 0.2, -0.4], [2.0, 2.0, 2.0]])
        assert_allclose(
            direct_sum_oracle(doubled, probes),
            2.0 * direct_sum_oracle(base, probes),
            rtol=1e-15,
        )

    def test_against_independent_double_loop(self):
        # second implementation: explicit python loops over nuclei and cells
        cfg = small_config(Boundary.BOX, dims=(2, 2, 2))
        probes = np.array([[0.9, -0.7, 0.3], [2.1, 1.2, -1.9]])
        expected = np.zeros(2)
        b0 = cfg.formation_edge
        for p, probe in enumerate(probes):
            acc = 0.0
            for nuc in cfg.nuclei:
                for j1 in range(2):
                    for j2 in range(2):
                        for j3 in range(2):
                            pos = np.array(nuc.center) + b0 * (
                                np.array([j1, j2, j3]) - 0.5
                            )
                            acc += nuc.charge / np.linalg.norm(probe - pos)
            expected[p] = acc
        assert_allclose(direct_sum_oracle(cfg, probes), expected, rtol=1e-14)

    def test_probe_at_singularity_rejected(self):
        cfg = small_config(Boundary.BOX, dims=(1, 1, 1), two_nuclei=False)
        with pytest.raises(ValueError, match="coincides"):
            direct_sum_oracle(cfg, np.array([[0.0, 0.0, 0.0]]))


def test_assembled_vs_direct_over_modes_and_sizes(rng):
    # both boundary modes, several lattice sizes, random far probe cells
    for boundary in (Boundary.BOX, Boundary.PERIODIC):
        for dims in [(2, 1, 1), (3, 2, 1), (2, 2, 2)]:
            cfg = small_config(boundary, dims=dims)
            ref, _ = build_lattice_reference(cfg, 1e-5)
            if boundary is Boundary.BOX:
                pot = box_lattice_potential(cfg, ref)
                centers = [box_grid_centers(cfg, a) for a in range(3)]
                sizes = cfg.supercell_points
            else:
                pot = periodic_cell_potential(cfg, ref)
                centers = [cell_grid_centers(cfg)] * 3
                sizes = (cfg.cell_points,) * 3
            positions, _ = translate_positions(cfg)
            picked = []
            while len(picked) < 25:
                i = tuple(int(rng.integers(0, s)) for s in sizes)
                point = np.array([centers[a][i[a]] for a in range(3)])
                if np.min(np.linalg.norm(positions - point, axis=1)) >= 3 * cfg.mesh:
                    picked.append(i)
            idx = np.array(picked)
            pts = np.stack([centers[a][idx[:, a]] for a in range(3)], axis=1)
            vals = values_at(pot, idx) / cfg.mesh ** 3
            assert_allclose(vals, direct_sum_oracle(cfg, pts), rtol=1e-4)
