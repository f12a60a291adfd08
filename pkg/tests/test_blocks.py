"""Block coefficient tensor layout, conversions, and serialization."""

import numpy as np
import pytest
from numpy.testing import assert_allclose

from conftest import random_symmetric_mbc, random_symmetric_mbt
from latticeham import mlbc
from latticeham.blocks import (
    BlockCoefficientTensor,
    BlockTag,
    load_blocks,
    save_blocks,
)


class TestAccessors:
    def test_circulant_block_wraps(self, rng):
        t = random_symmetric_mbc((4, 2, 1), 2, rng)
        assert np.array_equal(
            t.circulant_block((-1, 0, 0)), t.circulant_block((3, 0, 0))
        )

    def test_pair_block_consistency_with_dense(self, rng):
        for make in (random_symmetric_mbc, random_symmetric_mbt):
            t = make((3, 2, 2), 2, rng)
            dense = mlbc.to_dense(t)
            m0 = t.m0
            lattice = [
                (k1, k2, k3)
                for k1 in range(3)
                for k2 in range(2)
                for k3 in range(2)
            ]
            for a, k in enumerate(lattice):
                for b, m in enumerate(lattice):
                    assert np.array_equal(
                        dense[a * m0 : (a + 1) * m0, b * m0 : (b + 1) * m0],
                        t.pair_block(k, m),
                    )

    def test_banded_block_outside_band_is_zero(self, rng):
        t = random_symmetric_mbt((5, 1, 1), 2, rng, bandwidth=1)
        banded = t.to_general_banded()
        assert np.array_equal(
            banded.banded_block((0, 0, 0), (2, 0, 0)), np.zeros((2, 2))
        )

    def test_shape_validation(self):
        with pytest.raises(ValueError, match="shape"):
            BlockCoefficientTensor(
                BlockTag.CIRCULANT, (2, 1, 1), 2, 1, np.zeros((2, 1, 1, 2, 3))
            )


class TestConversion:
    def test_general_banded_preserves_dense(self, rng):
        t = random_symmetric_mbt((4, 2, 1), 2, rng, bandwidth=2)
        banded = t.to_general_banded()
        assert banded.tag is BlockTag.GENERAL_BANDED
        assert_allclose(mlbc.to_dense(banded), mlbc.to_dense(t), rtol=0)

    def test_circulant_refuses_banded_flattening(self, rng):
        t = random_symmetric_mbc((4, 2, 1), 2, rng, bandwidth=2)
        with pytest.raises(ValueError, match="wrap-around"):
            t.to_general_banded()

    def test_combine_tag_mismatch(self, rng):
        a = random_symmetric_mbc((3, 1, 1), 2, rng)
        b = random_symmetric_mbt((3, 1, 1), 2, rng)
        with pytest.raises(ValueError, match="tag mismatch"):
            a.combine(b, 1.0, 1.0)

    def test_combine_linear(self, rng):
        a = random_symmetric_mbc((3, 1, 1), 2, rng)
        b = random_symmetric_mbc((3, 1, 1), 2, rng)
        out = a.combine(b, 0.5, -1.0)
        assert_allclose(
            mlbc.to_dense(out),
            0.5 * mlbc.to_dense(a) - mlbc.to_dense(b),
            rtol=1e-15,
        )

    def test_combine_bandwidth_mismatch(self, rng):
        a = random_symmetric_mbc((3, 1, 1), 2, rng, bandwidth=1)
        b = random_symmetric_mbc((3, 1, 1), 2, rng, bandwidth=2)
        with pytest.raises(ValueError, match="bandwidth"):
            a.combine(b, 1.0, 1.0)


class TestSerialization:
    @pytest.mark.parametrize("tag_maker", ["circulant", "toeplitz", "banded"])
    def test_round_trip(self, rng, tmp_path, tag_maker):
        if tag_maker == "circulant":
            t = random_symmetric_mbc((4, 2, 1), 3, rng)
        elif tag_maker == "toeplitz":
            t = random_symmetric_mbt((3, 2, 2), 2, rng)
        else:
            t = random_symmetric_mbt((3, 2, 2), 2, rng, bandwidth=1).to_general_banded()
        path = tmp_path / "blocks.bct"
        save_blocks(path, t)
        back = load_blocks(path)
        assert back.tag is t.tag
        assert back.dims == t.dims
        assert back.m0 == t.m0
        assert back.bandwidth == t.bandwidth
        assert np.array_equal(back.blocks, t.blocks)

    def test_header_layout(self, rng, tmp_path):
        t = random_symmetric_mbc((2, 1, 1), 2, rng)
        path = tmp_path / "blocks.bct"
        save_blocks(path, t)
        raw = path.read_bytes()
        assert raw[:4] == b"BCT1"
        assert raw[4] == BlockTag.CIRCULANT.value
        dims = np.frombuffer(raw[6:30], dtype="<u8")
        assert tuple(dims) == (2, 1, 1)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.bct"
        path.write_bytes(b"XXXX" + b"\0" * 64)
        with pytest.raises(ValueError, match="magic"):
            load_blocks(path)
