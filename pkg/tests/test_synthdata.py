import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cropyield import synthdata as sd
from cropyield.errors import (
    ChecksumMismatchError,
    DomainError,
    MalformedHeaderError,
    TruncatedPayloadError,
)


@pytest.fixture(scope="module")
def small_ds():
    return sd.generate_dataset(sd.BandSpec("S2"), n_plots=12, t_steps=4, height=8, width=8, seed=7)


class TestGenerate:
    @pytest.mark.parametrize("source,c", [("S1", 2), ("S2", 12), ("L8", 8)])
    def test_band_counts_match_source(self, source, c):
        ds = sd.generate_dataset(sd.BandSpec(source), 10, 3, 8, 8, seed=1)
        assert ds.band_spec.channels == c
        assert all(s.x.shape[3] == c for s in ds.samples)

    def test_determinism(self, small_ds):
        again = sd.generate_dataset(sd.BandSpec("S2"), 12, 4, 8, 8, seed=7)
        for a, b in zip(small_ds.samples, again.samples):
            np.testing.assert_array_equal(a.x, b.x)
            assert a.y == b.y and a.season_tag == b.season_tag

    def test_values_in_unit_interval_and_positive_yield(self, small_ds):
        for s in small_ds.samples:
            assert s.x.min() >= 0.0 and s.x.max() <= 1.0
            assert s.y > 0.0

    def test_invalid_dims_rejected(self):
        with pytest.raises(DomainError):
            sd.generate_dataset(sd.BandSpec("S2"), 5, 4, 8, 8, seed=1)
        with pytest.raises(DomainError):
            sd.generate_dataset(sd.BandSpec("S2"), 10, 1, 8, 8, seed=1)
        with pytest.raises(DomainError):
            sd.generate_dataset(sd.BandSpec("S2"), 10, 4, 4, 8, seed=1)
        with pytest.raises(DomainError):
            sd.BandSpec("S3")

    def test_yield_correlates_with_fertility_signal(self):
        # the vegetation band late-season mean should predict yield well by design
        ds = sd.generate_dataset(sd.BandSpec("S2"), 40, 5, 8, 8, seed=3)
        veg = np.array([s.x[-2:, :, :, ds.band_spec.veg_band].mean() for s in ds.samples])
        y = np.array([s.y for s in ds.samples])
        r = np.corrcoef(veg, y)[0, 1]
        assert r > 0.8


class TestLaplacian:
    def test_constant_interior_unchanged(self):
        img = np.full((6, 6), 3.7)
        out = sd.laplacian_enhance(img)
        np.testing.assert_allclose(out[1:-1, 1:-1], img[1:-1, 1:-1])

    def test_unit_impulse(self):
        img = np.zeros((5, 5))
        img[2, 2] = 1.0
        out = sd.laplacian_enhance(img)
        assert out[2, 2] == 5.0
        for i, j in [(1, 2), (3, 2), (2, 1), (2, 3)]:
            assert out[i, j] == -1.0

    def test_linear_ramp_interior_unchanged(self):
        i, j = np.meshgrid(np.arange(7), np.arange(7), indexing="ij")
        img = 2.0 * i + 3.0 * j + 1.0
        out = sd.laplacian_enhance(img)
        np.testing.assert_allclose(out[1:-1, 1:-1], img[1:-1, 1:-1], atol=1e-12)

    @settings(deadline=None, max_examples=20)
    @given(seed=st.integers(0, 10**6), a=st.floats(-4, 4))
    def test_linearity(self, seed, a):
        img = np.random.default_rng(seed).normal(size=(5, 6))
        lhs = sd.laplacian_enhance(a * img)
        rhs = a * sd.laplacian_enhance(img)
        np.testing.assert_allclose(lhs, rhs, rtol=1e-12, atol=1e-12)

    def test_enhance_sample_matches_per_band(self, small_ds):
        x = small_ds.samples[0].x
        out = sd.enhance_sample(x)
        for t in (0, x.shape[0] - 1):
            for c in (0, x.shape[3] - 1):
                np.testing.assert_allclose(out[t, :, :, c], sd.laplacian_enhance(x[t, :, :, c]))

    def test_too_small_rejected(self):
        with pytest.raises(DomainError):
            sd.laplacian_enhance(np.ones((2, 5)))


class TestSplit:
    def test_100_gives_80_10_10(self):
        ds = sd.generate_dataset(sd.BandSpec("S1"), 100, 2, 8, 8, seed=2)
        out = sd.split_dataset(ds, seed=5)
        assert (len(out.split.train), len(out.split.val), len(out.split.test)) == (80, 10, 10)

    def test_10_gives_8_1_1(self, small_ds):
        ds = sd.generate_dataset(sd.BandSpec("S1"), 10, 2, 8, 8, seed=2)
        out = sd.split_dataset(ds, seed=5)
        assert (len(out.split.train), len(out.split.val), len(out.split.test)) == (8, 1, 1)

    def test_same_seed_identical(self, small_ds):
        a = sd.split_dataset(small_ds, seed=9)
        b = sd.split_dataset(small_ds, seed=9)
        assert a.split == b.split

    @settings(deadline=None, max_examples=20)
    @given(n=st.integers(10, 200), seed=st.integers(0, 10**6))
    def test_partition_property(self, n, seed):
        perm = sd.rng_for(seed, "split").permutation(n)
        ds = sd.Dataset.__new__(sd.Dataset)  # avoid generating big arrays
        ds.band_spec = sd.BandSpec("S1")
        ds.samples = [None] * n
        ds.split = None
        out = sd.split_dataset(ds, seed=seed)
        all_idx = out.split.train + out.split.val + out.split.test
        assert sorted(all_idx) == list(range(n))
        assert len(out.split.train) == (8 * n) // 10
        assert len(out.split.val) == n // 10
        del perm

    def test_too_few_rejected(self):
        ds = sd.Dataset.__new__(sd.Dataset)
        ds.band_spec = sd.BandSpec("S1")
        ds.samples = [None] * 9
        ds.split = None
        with pytest.raises(DomainError):
            sd.split_dataset(ds, seed=0)


class TestFileFormat:
    def test_round_trip_bit_exact(self, small_ds, tmp_path):
        p = tmp_path / "ds.mtms"
        sd.save_dataset(small_ds, p)
        back = sd.load_dataset(p)
        assert back.band_spec == small_ds.band_spec
        assert len(back.samples) == len(small_ds.samples)
        for a, b in zip(small_ds.samples, back.samples):
            assert (a.plot_id, a.season_tag, a.y) == (b.plot_id, b.season_tag, b.y)
            np.testing.assert_array_equal(a.x, b.x)

    def test_save_is_deterministic(self, small_ds, tmp_path):
        p1, p2 = tmp_path / "a.mtms", tmp_path / "b.mtms"
        sd.save_dataset(small_ds, p1)
        sd.save_dataset(small_ds, p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_wrong_magic(self, small_ds, tmp_path):
        p = tmp_path / "ds.mtms"
        sd.save_dataset(small_ds, p)
        raw = p.read_bytes()
        p.write_bytes(b"XXXXXX" + raw[6:])
        with pytest.raises(MalformedHeaderError):
            sd.load_dataset(p)

    def test_truncated_by_one_byte(self, small_ds, tmp_path):
        p = tmp_path / "ds.mtms"
        sd.save_dataset(small_ds, p)
        raw = p.read_bytes()
        p.write_bytes(raw[:-1])
        with pytest.raises(TruncatedPayloadError):
            sd.load_dataset(p)

    def test_corrupted_payload_byte(self, small_ds, tmp_path):
        p = tmp_path / "ds.mtms"
        sd.save_dataset(small_ds, p)
        raw = bytearray(p.read_bytes())
        raw[len(raw) // 2] ^= 0xFF
        p.write_bytes(bytes(raw))
        with pytest.raises(ChecksumMismatchError):
            sd.load_dataset(p)

    def test_fnv_reference_value(self):
        # published FNV-1a 64-bit test vector
        assert sd.fnv1a64(b"") == 0xCBF29CE484222325
        assert sd.fnv1a64(b"a") == 0xAF63DC4C8601EC8C
