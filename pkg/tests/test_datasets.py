"""Dataset pipeline: generation, on-disk format, loading, batch sampling."""

import hashlib
import json

import numpy as np
import pytest

from conftest import make_dataset
from fluxlab.datasets import (
    Dataset,
    DatasetManifest,
    draw_coefficients,
    generate_split,
    load_trajectory,
    sample_batch,
    split_family,
)
from fluxlab.exceptions import ConfigError, FormatError


def _file_hash(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


class TestManifest:
    def test_shape_and_bytes(self):
        m = DatasetManifest.create("cubic", "train", 2, 2, 100, 100, 0.005, 0)
        assert m.shape == (2, 2, 100, 100, 1)
        assert m.n_bytes == 4 * 2 * 2 * 100 * 100 * 1

    def test_shallow_water_two_channels(self):
        m = DatasetManifest.create("shallow_water", "train", 1, 1, 10, 32, 0.005, 0)
        assert m.n_q == 2
        assert m.ic_family == "lognormal+grf"

    def test_coeff_ranges_recorded(self):
        m = DatasetManifest.create("viscous_burgers", "train", 1, 1, 10, 32, 0.005, 0)
        assert m.coeff_names == ("a", "nu")
        assert m.coeff_ranges == ((0.5, 1.5), (0.005, 0.015))

    def test_json_roundtrip(self):
        m = DatasetManifest.create("cubic", "val", 3, 4, 50, 64, 0.005, 9)
        assert DatasetManifest.from_json(m.to_json()) == m

    def test_missing_field_is_format_error(self):
        doc = DatasetManifest.create("cubic", "val", 1, 1, 10, 32, 0.005, 0).to_json()
        del doc["n_x"]
        with pytest.raises(FormatError):
            DatasetManifest.from_json(doc)


class TestSplitFamilies:
    def test_ood_sine_uses_sine_flux_with_grf(self):
        assert split_family("cubic", "ood-sine") == ("sine", "grf")

    def test_ood_sine_shock_uses_steps(self):
        assert split_family("cubic", "ood-sine-shock") == ("sine", "steps")

    def test_ood_shock_keeps_flux_family(self):
        assert split_family("cubic", "ood-shock") == ("cubic", "steps")
        assert split_family("shallow_water", "ood-shock") == (
            "shallow_water", "steps+grf")

    def test_sine_ood_only_for_cubic(self):
        with pytest.raises(ConfigError):
            split_family("shallow_water", "ood-sine")

    def test_unknown_split_rejected(self):
        with pytest.raises(ConfigError):
            split_family("cubic", "ood-unknown")


class TestGeneration:
    def test_file_sizes_match_shape_arithmetic(self, tmp_path):
        ds = make_dataset(tmp_path / "d", n_coeffs=2, n_ics=2, n_t=30, n_x=32)
        assert (tmp_path / "d" / "data.f32").stat().st_size == 4 * 2 * 2 * 30 * 32
        assert ds.manifest.dx == 1.0 / 32

    def test_bit_identical_regeneration(self, tmp_path):
        make_dataset(tmp_path / "a", seed=7)
        make_dataset(tmp_path / "b", seed=7)
        assert _file_hash(tmp_path / "a" / "data.f32") == \
            _file_hash(tmp_path / "b" / "data.f32")
        assert _file_hash(tmp_path / "a" / "coeffs.f32") == \
            _file_hash(tmp_path / "b" / "coeffs.f32")

    def test_parallel_generation_matches_serial(self, tmp_path):
        make_dataset(tmp_path / "serial", seed=3, jobs=1)
        make_dataset(tmp_path / "parallel", seed=3, jobs=2)
        assert _file_hash(tmp_path / "serial" / "data.f32") == \
            _file_hash(tmp_path / "parallel" / "data.f32")

    @pytest.mark.filterwarnings("ignore:covariance circulant")
    def test_shallow_water_channel_order(self, tmp_path):
        ds = make_dataset(tmp_path / "sw", equation="shallow_water",
                          n_coeffs=1, n_ics=1, n_t=5, n_x=32)
        traj = ds.trajectory(0, 0)
        assert traj.shape == (5, 32, 2)
        assert traj[..., 0].min() > 0  # heights first, strictly positive

    def test_split_coefficients_disjoint(self):
        m_train = DatasetManifest.create("cubic", "train", 4, 1, 10, 32, 0.005, 0)
        m_val = DatasetManifest.create("cubic", "val", 4, 1, 10, 32, 0.005, 0)
        c_train = draw_coefficients(m_train)
        c_val = draw_coefficients(m_val)
        assert not np.allclose(c_train, c_val)

    def test_coefficients_within_ranges(self):
        m = DatasetManifest.create("shallow_water", "train", 50, 1, 10, 32, 0.005, 1)
        coeffs = draw_coefficients(m)
        for j, (lo, hi) in enumerate(m.coeff_ranges):
            assert coeffs[:, j].min() >= lo and coeffs[:, j].max() <= hi

    def test_conservation_recheck_from_disk(self, tmp_path):
        # float32 storage bounds the recheck tolerance at float32 epsilon scale
        ds = make_dataset(tmp_path / "d", n_coeffs=2, n_ics=1, n_t=20, n_x=64)
        for c in range(2):
            traj = ds.trajectory(c, 0)
            sums = traj.sum(axis=(1, 2))
            tol = 64 * np.abs(traj).max() * 2.0 ** -23 * 4
            assert np.abs(np.diff(sums)).max() <= tol


class TestLoading:
    def test_roundtrip_trajectory(self, tmp_path):
        ds = make_dataset(tmp_path / "d", n_coeffs=2, n_ics=2, n_t=10, n_x=32)
        traj = ds.trajectory(1, 1)
        assert traj.shape == (10, 32, 1)
        assert traj.dtype == np.float64
        again = load_trajectory(Dataset(tmp_path / "d"), 1, 1)
        assert np.array_equal(traj, again)

    def test_out_of_range_index(self, tmp_path):
        ds = make_dataset(tmp_path / "d", n_coeffs=1, n_ics=1, n_t=10, n_x=32)
        with pytest.raises(IndexError):
            ds.trajectory(0, 5)

    def test_truncated_data_is_format_error(self, tmp_path):
        make_dataset(tmp_path / "d", n_coeffs=1, n_ics=1, n_t=10, n_x=32)
        data = tmp_path / "d" / "data.f32"
        data.write_bytes(data.read_bytes()[:-8])
        with pytest.raises(FormatError):
            Dataset(tmp_path / "d")

    def test_manifest_mismatch_is_format_error(self, tmp_path):
        make_dataset(tmp_path / "d", n_coeffs=1, n_ics=1, n_t=10, n_x=32)
        mpath = tmp_path / "d" / "manifest.json"
        doc = json.loads(mpath.read_text())
        doc["n_x"] = 64
        mpath.write_text(json.dumps(doc))
        with pytest.raises(FormatError):
            Dataset(tmp_path / "d")


class TestBatchSampling:
    def test_window_indexing(self, tmp_path):
        ds = make_dataset(tmp_path / "d", n_coeffs=2, n_ics=2, n_t=30, n_x=32)
        k = 5
        rng = np.random.default_rng(0)
        windows = sample_batch(ds, 64, k, rng)
        assert len(windows) == 64
        for w in windows:
            assert w.u.shape == (k, 32, 1)
            assert w.target.shape == (32, 1)
            assert w.dt == ds.manifest.dt and w.dx == ds.manifest.dx

    def test_targets_are_next_snapshots(self, tmp_path):
        ds = make_dataset(tmp_path / "d", n_coeffs=1, n_ics=1, n_t=30, n_x=32)
        traj = ds.trajectory(0, 0)
        w = ds.window(0, 0, 7, 5)
        assert np.array_equal(w.u, traj[7:12])
        assert np.array_equal(w.target, traj[12])

    def test_start_index_range(self, tmp_path):
        ds = make_dataset(tmp_path / "d", n_coeffs=1, n_ics=1, n_t=30, n_x=32)
        with pytest.raises(IndexError):
            ds.window(0, 0, 25, 5)  # start + k == n_t has no target
        ds.window(0, 0, 24, 5)  # last valid start

    def test_deterministic_given_rng_state(self, tmp_path):
        ds = make_dataset(tmp_path / "d", n_coeffs=2, n_ics=2, n_t=30, n_x=32)
        b1 = sample_batch(ds, 8, 5, np.random.default_rng(11))
        b2 = sample_batch(ds, 8, 5, np.random.default_rng(11))
        for w1, w2 in zip(b1, b2):
            assert np.array_equal(w1.u, w2.u)
            assert np.array_equal(w1.target, w2.target)

    def test_context_too_long_rejected(self, tmp_path):
        ds = make_dataset(tmp_path / "d", n_coeffs=1, n_ics=1, n_t=10, n_x=32)
        with pytest.raises(ConfigError):
            sample_batch(ds, 4, 10, np.random.default_rng(0))
