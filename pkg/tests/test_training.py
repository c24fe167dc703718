"""Metrics identities, schedule, optimizer behavior, checkpoints, determinism."""

import numpy as np
import pytest
from numpy.testing import assert_allclose

import fluxlab.tensor as T
from conftest import make_dataset, tiny_model
from fluxlab.datasets import sample_batch
from fluxlab.exceptions import ConfigError, DomainError, ShapeError
from fluxlab.metrics import rel_metrics
from fluxlab.training import (
    AdamW,
    OptimizerConfig,
    load_checkpoint,
    lr_schedule,
    mse_loss,
    save_checkpoint,
    stack_windows,
    train,
    train_step,
)


class TestRelMetrics:
    def test_identity_is_zero(self, rng):
        u = rng.standard_normal((4, 10, 2))
        for agg in ("per_time_mean", "full_grid"):
            rep = rel_metrics(u, u, agg)
            assert rep.rel_l2 == 0.0 and rep.rel_linf == 0.0

    def test_double_is_one(self, rng):
        u = rng.standard_normal((4, 10))
        for agg in ("per_time_mean", "full_grid"):
            rep = rel_metrics(2 * u, u, agg)
            assert rep.rel_l2 == pytest.approx(1.0)
            assert rep.rel_linf == pytest.approx(1.0)

    def test_single_point_perturbation_linf(self, rng):
        u = rng.standard_normal((1, 20))
        bump = np.zeros((1, 20))
        bump[0, 7] = 0.35
        rep = rel_metrics(u + bump, u, "per_time_mean")
        assert rep.rel_linf == pytest.approx(0.35 / np.abs(u).max())

    def test_zero_norm_target_rejected(self):
        with pytest.raises(DomainError):
            rel_metrics(np.ones((1, 4)), np.zeros((1, 4)))

    def test_shape_mismatch_rejected(self, rng):
        with pytest.raises(ShapeError):
            rel_metrics(np.ones((2, 4)), np.ones((2, 5)))

    def test_per_time_curves(self, rng):
        u = rng.standard_normal((3, 8))
        t = rng.standard_normal((3, 8))
        rep = rel_metrics(u, t, "per_time_mean")
        assert rep.per_time_l2.shape == (3,)
        assert rep.rel_l2 == pytest.approx(rep.per_time_l2.mean())


class TestSchedule:
    def test_endpoints(self):
        assert lr_schedule(0, 10, 100, 1e-3, 1e-5) == 0.0
        assert lr_schedule(10, 10, 100, 1e-3, 1e-5) == pytest.approx(1e-3)
        assert lr_schedule(100, 10, 100, 1e-3, 1e-5) == pytest.approx(1e-5)

    def test_monotone_after_warmup(self):
        values = [lr_schedule(s, 10, 100, 1e-3, 1e-5) for s in range(10, 101)]
        assert all(a >= b for a, b in zip(values, values[1:]))

    def test_bad_ranges_rejected(self):
        with pytest.raises(ConfigError):
            lr_schedule(101, 10, 100, 1e-3, 1e-5)
        with pytest.raises(ConfigError):
            lr_schedule(5, 100, 100, 1e-3, 1e-5)


class TestAdamW:
    def test_zero_grads_zero_decay_leave_params(self, rng):
        model = tiny_model()
        opt = AdamW(list(model.named_parameters()), OptimizerConfig(weight_decay=0.0))
        before = {n: t.data.copy() for n, t in model.named_parameters()}
        opt.zero_grad()
        opt.step(1e-3)
        for n, t in model.named_parameters():
            assert np.array_equal(before[n], t.data)

    def test_decay_shrinks_params_without_grads(self, rng):
        model = tiny_model()
        opt = AdamW(list(model.named_parameters()), OptimizerConfig(weight_decay=0.1))
        name, t = next(iter(model.named_parameters()))
        before = t.data.copy()
        opt.zero_grad()
        opt.step(1e-2)
        assert_allclose(t.data, before * (1 - 1e-3), rtol=1e-12)

    def test_clip_bounds_global_norm(self, rng):
        model = tiny_model()
        opt = AdamW(list(model.named_parameters()), OptimizerConfig(clip_norm=1.0))
        for _, t in model.named_parameters():
            t.grad = rng.standard_normal(t.shape)
        opt.clip_gradients()
        total = sum(float((t.grad ** 2).sum()) for _, t in model.named_parameters())
        assert np.sqrt(total) <= 1.0 + 1e-9


class TestTrainStep:
    def test_initial_loss_is_identity_mse(self, tmp_path, rng):
        ds = make_dataset(tmp_path / "d", n_coeffs=2, n_ics=2, n_t=30, n_x=32)
        model = tiny_model(n_x=32)
        windows = sample_batch(ds, 8, 5, np.random.default_rng(0))
        u, target, dt, dx = stack_windows(windows)
        with T.Tape():
            loss = mse_loss(model, u, target, dt, dx)
        expected = np.mean((u[:, -1] - target) ** 2)
        assert loss.item() == pytest.approx(expected, rel=1e-12)

    def test_one_step_descends_on_repeated_batch(self, tmp_path, rng):
        ds = make_dataset(tmp_path / "d", n_coeffs=2, n_ics=2, n_t=30, n_x=32)
        model = tiny_model(n_x=32)
        opt = AdamW(list(model.named_parameters()), OptimizerConfig())
        windows = sample_batch(ds, 8, 5, np.random.default_rng(0))
        l0 = train_step(model, opt, windows, 1e-4)
        for _ in range(4):
            l1 = train_step(model, opt, windows, 1e-4)
        assert l1 < l0

    def test_training_deterministic_per_seed(self, tmp_path):
        ds = make_dataset(tmp_path / "d", n_coeffs=2, n_ics=2, n_t=30, n_x=32)
        histories = []
        for _ in range(2):
            model = tiny_model(n_x=32, seed=9)
            _, hist = train(model, ds, OptimizerConfig(), steps=5, batch_size=4,
                            k=5, rng=np.random.default_rng(77))
            histories.append([loss for _, _, loss in hist])
        assert histories[0] == histories[1]


class TestCheckpoints:
    def test_roundtrip_preserves_everything(self, tmp_path, rng):
        ds = make_dataset(tmp_path / "d", n_coeffs=2, n_ics=2, n_t=30, n_x=32)
        model = tiny_model(n_x=32)
        opt = AdamW(list(model.named_parameters()), OptimizerConfig())
        windows = sample_batch(ds, 4, 5, np.random.default_rng(0))
        train_step(model, opt, windows, 1e-3)
        save_checkpoint(tmp_path / "ckpt", model, opt, step=1,
                        data_meta={"k": 5, "dt": ds.manifest.dt,
                                   "dx": ds.manifest.dx})
        model2, opt2, doc = load_checkpoint(tmp_path / "ckpt")
        assert doc["step"] == 1
        for (n1, t1), (n2, t2) in zip(model.named_parameters(),
                                      model2.named_parameters()):
            assert n1 == n2
            assert np.array_equal(t1.data, t2.data)
            assert np.array_equal(opt.m[n1], opt2.m[n2])
            assert np.array_equal(opt.v[n1], opt2.v[n2])
        u, target, dt, dx = stack_windows(windows)
        p1 = model.predict_next(T.as_tensor(u), dt, dx).data
        p2 = model2.predict_next(T.as_tensor(u), dt, dx).data
        assert np.array_equal(p1, p2)

    def test_corrupt_params_detected(self, tmp_path, rng):
        model = tiny_model(n_x=32)
        opt = AdamW(list(model.named_parameters()), OptimizerConfig())
        save_checkpoint(tmp_path / "ckpt", model, opt, step=0)
        pfile = tmp_path / "ckpt" / "params.f64"
        pfile.write_bytes(pfile.read_bytes()[:-16])
        from fluxlab.exceptions import FormatError

        with pytest.raises(FormatError):
            load_checkpoint(tmp_path / "ckpt")
