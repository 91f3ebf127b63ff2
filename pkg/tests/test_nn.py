import math

import numpy as np
import pytest

from idasnet.nn import (
    Adam,
    BatchNorm2d,
    Conv2d,
    LeakyReLU,
    LrSchedule,
    ParamItem,
    ShapeError,
    Sigmoid,
    lr_at_epoch,
    lrelu,
    mse_loss,
    sigmoid,
)
from conftest import fd_gradient, rel_err


def make_conv(in_ch, out_ch, rng, dtype=np.float64):
    return Conv2d(in_ch, out_ch, rng=rng, dtype=dtype)


class TestConv2d:
    def test_all_ones_zero_padding(self, rng):
        conv = make_conv(1, 1, rng)
        conv.weight[...] = 1.0
        conv.bias[...] = 0.0
        x = np.ones((1, 1, 3, 3))
        y = conv.forward(x)
        assert y.shape == (1, 1, 3, 3)
        assert y[0, 0, 1, 1] == pytest.approx(9.0)
        for i, j in [(0, 0), (0, 2), (2, 0), (2, 2)]:
            assert y[0, 0, i, j] == pytest.approx(4.0)

    def test_identity_kernel(self, rng):
        conv = make_conv(1, 1, rng)
        conv.weight[...] = 0.0
        conv.weight[0, 0, 1, 1] = 1.0
        conv.bias[...] = 0.0
        x = rng.normal(size=(2, 1, 5, 7))
        assert np.allclose(conv.forward(x), x)

    def test_shape_preserved(self, rng):
        conv = make_conv(3, 5, rng)
        for h, w in [(1, 1), (4, 4), (7, 3)]:
            y = conv.forward(rng.normal(size=(2, 3, h, w)))
            assert y.shape == (2, 5, h, w)

    def test_channel_mismatch_raises(self, rng):
        conv = make_conv(3, 5, rng)
        with pytest.raises(ShapeError):
            conv.forward(rng.normal(size=(1, 2, 4, 4)))

    def test_gradients_match_finite_differences(self, rng):
        # Scalar loss = fixed random projection of the output.
        conv = make_conv(2, 3, rng)
        x = rng.normal(size=(1, 2, 4, 4))
        proj = rng.normal(size=(1, 3, 4, 4))

        def loss():
            return float((conv.forward(x, keep_cache=False) * proj).sum())

        conv.forward(x)
        gx = conv.backward(proj.copy())

        assert rel_err(gx, fd_gradient(loss, x)) < 1e-6
        assert rel_err(conv.gweight, fd_gradient(loss, conv.weight)) < 1e-6
        assert rel_err(conv.gbias, fd_gradient(loss, conv.bias)) < 1e-6


class TestActivations:
    def test_lrelu_values(self):
        assert lrelu(2.0) == pytest.approx(2.0)
        assert lrelu(-1.0) == pytest.approx(-0.3)

    def test_sigmoid_at_zero(self):
        assert sigmoid(0.0) == pytest.approx(0.5)

    def test_lrelu_gradient(self):
        act = LeakyReLU(0.3)
        x = np.array([[[[-2.0, 2.0]]]])
        act.forward(x)
        g = act.backward(np.ones_like(x))
        assert g[0, 0, 0, 0] == pytest.approx(0.3)
        assert g[0, 0, 0, 1] == pytest.approx(1.0)

    def test_lrelu_matches_finite_differences(self, rng):
        act = LeakyReLU(0.3)
        x = rng.normal(size=(2, 3, 4, 4))
        proj = rng.normal(size=x.shape)

        def loss():
            return float((act.forward(x) * proj).sum())

        act.forward(x)
        gx = act.backward(proj.copy())
        assert rel_err(gx, fd_gradient(loss, x)) < 1e-7

    def test_sigmoid_matches_finite_differences(self, rng):
        act = Sigmoid()
        x = rng.normal(size=(2, 1, 3, 3))
        proj = rng.normal(size=x.shape)

        def loss():
            return float((act.forward(x) * proj).sum())

        act.forward(x)
        gx = act.backward(proj.copy())
        assert rel_err(gx, fd_gradient(loss, x)) < 1e-7

    def test_shape_preserved(self, rng):
        x = rng.normal(size=(3, 2, 5, 5))
        assert LeakyReLU().forward(x).shape == x.shape
        assert Sigmoid().forward(x).shape == x.shape


class TestBatchNorm:
    def test_train_mode_normalizes(self, rng):
        bn = BatchNorm2d(3, dtype=np.float64)
        x = rng.normal(loc=2.0, scale=4.0, size=(4, 3, 5, 5))
        y = bn.forward(x, train=True)
        assert np.abs(y.mean(axis=(0, 2, 3))).max() < 1e-6
        assert np.abs(y.var(axis=(0, 2, 3)) - 1.0).max() < 1e-4

    def test_eval_identity(self, rng):
        bn = BatchNorm2d(2, eps=0.0, dtype=np.float64)
        x = rng.normal(size=(3, 2, 4, 4))
        assert np.allclose(bn.forward(x, train=False), x)

    def test_running_stats_updated(self, rng):
        bn = BatchNorm2d(2, momentum=0.1, dtype=np.float64)
        x = rng.normal(loc=5.0, size=(8, 2, 6, 6))
        bn.forward(x, train=True)
        expect = 0.9 * 0.0 + 0.1 * x.mean(axis=(0, 2, 3))
        assert np.allclose(bn.running_mean, expect)

    def test_single_value_per_channel_rejected(self, rng):
        bn = BatchNorm2d(2, dtype=np.float64)
        with pytest.raises(ShapeError):
            bn.forward(rng.normal(size=(1, 2, 1, 1)), train=True)

    def test_zero_variance_channel_guarded(self):
        bn = BatchNorm2d(1, dtype=np.float64)
        y = bn.forward(np.full((2, 1, 2, 2), 3.0), train=True)
        assert np.all(np.isfinite(y))

    def test_gradient_matches_finite_differences(self, rng):
        bn = BatchNorm2d(2, dtype=np.float64)
        bn.gamma[...] = rng.normal(size=2)
        bn.beta[...] = rng.normal(size=2)
        x = rng.normal(size=(3, 2, 4, 4))
        proj = rng.normal(size=x.shape)

        def loss():
            keep_m, keep_v = bn.running_mean.copy(), bn.running_var.copy()
            val = float((bn.forward(x, train=True) * proj).sum())
            bn.running_mean[...] = keep_m
            bn.running_var[...] = keep_v
            return val

        bn.forward(x, train=True)
        gx = bn.backward(proj.copy())
        assert rel_err(gx, fd_gradient(loss, x)) < 1e-5
        assert rel_err(bn.ggamma, fd_gradient(loss, bn.gamma)) < 1e-5
        assert rel_err(bn.gbeta, fd_gradient(loss, bn.beta)) < 1e-5


class TestMseLoss:
    def test_equal_inputs_give_zero(self, rng):
        x = rng.normal(size=(3, 2, 4, 4))
        loss, _ = mse_loss(x, x.copy())
        assert loss == 0.0

    def test_unit_difference_counts_elements(self):
        pred = np.ones((1, 2, 32, 32))
        target = np.zeros((1, 2, 32, 32))
        loss, _ = mse_loss(pred, target)
        assert loss == pytest.approx(2048.0)

    def test_matches_scalar_loop(self, rng):
        pred = rng.normal(size=(4, 2, 3, 3))
        target = rng.normal(size=(4, 2, 3, 3))
        loss, _ = mse_loss(pred, target)
        acc = 0.0
        for b in range(4):
            for c in range(2):
                for i in range(3):
                    for j in range(3):
                        acc += (pred[b, c, i, j] - target[b, c, i, j]) ** 2
        assert loss == pytest.approx(acc / 4, rel=1e-12)

    def test_gradient_matches_finite_differences(self, rng):
        pred = rng.normal(size=(2, 1, 3, 3))
        target = rng.normal(size=pred.shape)

        def loss():
            return mse_loss(pred, target)[0]

        _, g = mse_loss(pred, target)
        assert rel_err(g, fd_gradient(loss, pred)) < 1e-8

    def test_shape_mismatch_raises(self, rng):
        with pytest.raises(ShapeError):
            mse_loss(np.zeros((1, 2, 3, 3)), np.zeros((1, 2, 3, 4)))


class TestAdam:
    def test_zero_gradient_keeps_params(self):
        w = np.array([1.0, -2.0])
        g = np.zeros_like(w)
        item = ParamItem("w", w, g, True)
        opt = Adam()
        opt.step([item], lr=0.1)
        assert np.allclose(w, [1.0, -2.0])
        assert opt.step_count == 1

    def test_first_step_magnitude(self):
        w = np.array([0.0])
        g = np.array([0.37])
        opt = Adam()
        opt.step([ParamItem("w", w, g, True)], lr=0.01)
        # Bias correction makes the first step almost exactly -sign(g) * lr.
        assert w[0] == pytest.approx(-0.01, rel=1e-6)

    def test_quadratic_converges(self):
        w = np.array([1.0])
        opt = Adam()
        for _ in range(200):
            g = 2.0 * w
            opt.step([ParamItem("w", w, g, True)], lr=0.1)
        assert abs(w[0]) < 0.05

    def test_non_finite_gradient_rejected(self):
        w = np.array([1.0])
        g = np.array([np.nan])
        with pytest.raises(FloatingPointError):
            Adam().step([ParamItem("w", w, g, True)], lr=0.1)

    def test_non_trainable_item_skipped(self):
        w = np.array([1.0])
        g = np.array([5.0])
        Adam().step([ParamItem("w", w, g, False)], lr=0.1)
        assert w[0] == 1.0


class TestLrSchedule:
    def test_endpoints(self):
        s = LrSchedule(lr_min=1e-5, lr_max=1e-3, warmup_epochs=30, total_epochs=1400)
        assert lr_at_epoch(s, 30) == 1e-3
        assert lr_at_epoch(s, 1400) == 1e-5

    def test_midpoint(self):
        s = LrSchedule(lr_min=2e-5, lr_max=1e-3, warmup_epochs=10, total_epochs=110)
        assert lr_at_epoch(s, 60) == pytest.approx((2e-5 + 1e-3) / 2, rel=1e-12)

    def test_warmup_is_linear(self):
        s = LrSchedule(lr_min=0.0, lr_max=1.0, warmup_epochs=4, total_epochs=10)
        assert lr_at_epoch(s, 1) == pytest.approx(0.25)
        assert lr_at_epoch(s, 2) == pytest.approx(0.5)
        assert lr_at_epoch(s, 3) == pytest.approx(0.75)

    def test_continuous_at_warmup(self):
        s = LrSchedule(lr_min=1e-5, lr_max=1e-3, warmup_epochs=5, total_epochs=50)
        ramp_end = lr_at_epoch(s, 5)
        cos_start = 1e-5 + 0.5 * (1e-3 - 1e-5) * (1 + math.cos(0.0))
        assert abs(ramp_end - cos_start) < 1e-12

    def test_monotone_after_warmup(self):
        s = LrSchedule(lr_min=1e-5, lr_max=1e-3, warmup_epochs=5, total_epochs=80)
        vals = [lr_at_epoch(s, t) for t in range(5, 81)]
        assert all(b <= a for a, b in zip(vals, vals[1:]))

    def test_out_of_range_rejected(self):
        s = LrSchedule(lr_min=0.0, lr_max=1.0, warmup_epochs=2, total_epochs=5)
        with pytest.raises(ValueError):
            lr_at_epoch(s, 0)
        with pytest.raises(ValueError):
            lr_at_epoch(s, 6)

    def test_bad_config_rejected(self):
        with pytest.raises(ValueError):
            LrSchedule(lr_min=1.0, lr_max=0.5, warmup_epochs=1, total_epochs=2)
        with pytest.raises(ValueError):
            LrSchedule(lr_min=0.0, lr_max=1.0, warmup_epochs=5, total_epochs=5)
