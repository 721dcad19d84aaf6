"""Finite-difference checks for every registered op, graph semantics,
and the Adam update."""

import numpy as np
import pytest

from aeromamba import autodiff as ad
from aeromamba.dsp import StftConfig
from aeromamba.errors import ArgumentError, ContractError
from aeromamba.optim import OptimizerState, adam_step, clip_global_norm

EPS = 1e-5
TOL = 1e-4


def max_rel_err(a, b):
    return np.max(np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), 1e-8))


def check_gradients(build, arrays, seeds=3):
    """Compare analytic grads of scalar sum(w * build(*tensors)) against
    central finite differences for every input array."""
    rng = np.random.default_rng(0)
    for trial in range(seeds):
        vals = [rng.normal(size=shape) for shape in arrays]
        tensors = [ad.parameter(v.copy()) for v in vals]
        out = build(*tensors)
        weight = rng.normal(size=out.data.shape)

        loss = ad.sum_(ad.mul(out, ad.const(weight)))
        ad.backward(loss)
        analytic = [t.grad.copy() for t in tensors]

        def scalar(vs):
            o = build(*[ad.const(v) for v in vs])
            return float(np.sum(o.data * weight))

        for i, v in enumerate(vals):
            fd = np.zeros_like(v)
            it = np.nditer(v, flags=["multi_index"])
            while not it.finished:
                idx = it.multi_index
                orig = v[idx]
                v[idx] = orig + EPS
                up = scalar(vals)
                v[idx] = orig - EPS
                dn = scalar(vals)
                v[idx] = orig
                fd[idx] = (up - dn) / (2 * EPS)
                it.iternext()
            assert max_rel_err(analytic[i], fd) <= TOL, f"input {i}, trial {trial}"


class TestElementwiseGrads:
    def test_add(self):
        check_gradients(ad.add, [(3, 4), (3, 4)])

    def test_add_bias_broadcast(self):
        check_gradients(lambda a, b: ad.add(a, b), [(2, 5), (5,)])

    def test_sub(self):
        check_gradients(ad.sub, [(6,), (6,)])

    def test_mul(self):
        check_gradients(ad.mul, [(2, 3), (2, 3)])

    def test_scale(self):
        check_gradients(lambda a: ad.scale(a, -2.5), [(4, 4)])

    def test_sigmoid_silu_softplus(self):
        check_gradients(ad.sigmoid, [(10,)])
        check_gradients(ad.silu, [(10,)])
        check_gradients(ad.softplus, [(10,)])

    def test_relu_leaky(self):
        check_gradients(ad.relu, [(20,)])
        check_gradients(lambda a: ad.leaky_relu(a, 0.2), [(20,)])

    def test_log_sqrt(self):
        check_gradients(lambda a: ad.log(ad.mul(a, a), eps=1e-3), [(8,)])
        check_gradients(lambda a: ad.sqrt(ad.mul(a, a), eps=1e-3), [(8,)])

    def test_silu_and_sigmoid_values(self):
        assert ad.silu(ad.const([0.0])).data[0] == 0.0
        assert ad.sigmoid(ad.const([0.0])).data[0] == 0.5


class TestShapeOpGrads:
    def test_reshape_moveaxis(self):
        check_gradients(lambda a: ad.reshape(a, (6, 2)), [(3, 4)])
        check_gradients(lambda a: ad.moveaxis(a, 1, 2), [(2, 3, 4)])

    def test_concat_slice(self):
        check_gradients(lambda a, b: ad.concat([a, b], axis=1), [(2, 3), (2, 2)])
        check_gradients(lambda a: ad.slice_(a, (slice(None), slice(1, 3))), [(2, 5)])

    def test_pad_last(self):
        check_gradients(lambda a: ad.pad_last(a, 2, 3), [(2, 4)])

    def test_sum_mean(self):
        check_gradients(ad.sum_, [(3, 4)])
        check_gradients(ad.mean, [(3, 4)])
        check_gradients(lambda a: ad.sum_(a, axis=1), [(3, 4)])
        check_gradients(lambda a: ad.mean(a, axis=0), [(3, 4)])

    def test_l1(self):
        check_gradients(ad.l1, [(4, 5), (4, 5)])

    def test_glu(self):
        check_gradients(lambda a: ad.glu(a, axis=1), [(2, 6, 3)])

    def test_rms_norm(self):
        check_gradients(ad.rms_norm, [(3, 7), (7,)])


class TestLayerGrads:
    def test_linear(self):
        check_gradients(ad.linear, [(4, 5), (3, 5), (3,)])

    def test_conv1d_basic(self):
        check_gradients(lambda x, w, b: ad.conv1d(x, w, b, stride=1, padding=1),
                        [(2, 3, 8), (4, 3, 3), (4,)])

    def test_conv1d_strided_grouped(self):
        check_gradients(lambda x, w: ad.conv1d(x, w, stride=2, padding=2, groups=2),
                        [(2, 4, 10), (6, 2, 4)])

    def test_conv1d_identity_kernel(self):
        x = np.random.default_rng(1).normal(size=(1, 2, 6))
        w = np.zeros((2, 2, 1))
        w[0, 0, 0] = 1.0
        w[1, 1, 0] = 1.0
        out = ad.conv1d(ad.const(x), ad.const(w))
        np.testing.assert_array_equal(out.data, x)

    def test_conv_transpose1d(self):
        check_gradients(lambda x, w, b: ad.conv_transpose1d(x, w, b, stride=2),
                        [(2, 3, 5), (3, 4, 2), (4,)])

    def test_depthwise_causal(self):
        check_gradients(lambda x, w: ad.depthwise_causal_conv1d(x, w),
                        [(2, 3, 7), (3, 4)])

    def test_depthwise_causal_is_causal(self):
        rng = np.random.default_rng(2)
        x = rng.normal(size=(1, 2, 10))
        w = rng.normal(size=(2, 4))
        y1 = ad.depthwise_causal_conv1d(ad.const(x), ad.const(w)).data
        x2 = x.copy()
        x2[:, :, 6:] += 5.0  # future change must not affect past outputs
        y2 = ad.depthwise_causal_conv1d(ad.const(x2), ad.const(w)).data
        np.testing.assert_array_equal(y1[:, :, :6], y2[:, :, :6])

    def test_avg_pool(self):
        check_gradients(lambda x: ad.avg_pool1d(x, kernel=4, stride=2, padding=1),
                        [(2, 3, 9)])

    def test_shape_mismatch_names_op(self):
        with pytest.raises(ArgumentError, match="conv1d"):
            ad.conv1d(ad.const(np.zeros((1, 3, 5))), ad.const(np.zeros((2, 4, 3))))
        with pytest.raises(ArgumentError, match="linear"):
            ad.linear(ad.const(np.zeros((2, 3))), ad.const(np.zeros((4, 5))))


class TestSpectralGrads:
    CFG = StftConfig(32, 16)

    def test_stft_op(self):
        check_gradients(lambda x: ad.stft_op(x, self.CFG), [(2, 40)], seeds=2)

    def test_istft_op(self):
        cfg = self.CFG
        frames = cfg.num_frames(40)
        check_gradients(lambda s: ad.istft_op(s, cfg, 40),
                        [(1, 2, frames, cfg.bins)], seeds=2)

    def test_spectral_round_trip(self):
        rng = np.random.default_rng(4)
        x = rng.normal(size=(3, 100))
        cfg = StftConfig(32, 16)
        spec = ad.stft_op(ad.const(x), cfg)
        out = ad.istft_op(spec, cfg, 100)
        assert np.max(np.abs(out.data - x)) <= 1e-10

    def test_matches_dsp_stft(self):
        from aeromamba.dsp import stft_array
        rng = np.random.default_rng(5)
        x = rng.normal(size=200)
        cfg = StftConfig(32, 16)
        ref = stft_array(x, cfg)
        got = ad.stft_op(ad.const(x[None]), cfg).data
        np.testing.assert_allclose(got[0, 0], ref.real, atol=1e-12)
        np.testing.assert_allclose(got[0, 1], ref.imag, atol=1e-12)


class TestBackwardSemantics:
    def test_sum_gradient_is_ones(self):
        x = ad.parameter(np.random.default_rng(6).normal(size=(3, 3)))
        ad.backward(ad.sum_(x))
        np.testing.assert_array_equal(x.grad, np.ones((3, 3)))

    def test_l1_gradient_is_sign(self):
        vals = np.array([1.5, -2.0, 0.0, 3.0])
        x = ad.parameter(vals)
        ad.backward(ad.l1(x, ad.const(np.zeros(4))))
        np.testing.assert_array_equal(x.grad, np.sign(vals) / 4)

    def test_diamond_graph(self):
        # y = x*x + x -> dy/dx = 2x + 1
        v = np.array([2.0, -3.0])
        x = ad.parameter(v)
        y = ad.add(ad.mul(x, x), x)
        ad.backward(ad.sum_(y))
        np.testing.assert_allclose(x.grad, 2 * v + 1, atol=1e-12)

    def test_non_scalar_loss_rejected(self):
        x = ad.parameter(np.zeros(3))
        with pytest.raises(ArgumentError):
            ad.backward(ad.mul(x, x))

    def test_backward_deterministic(self):
        rng = np.random.default_rng(7)
        v = rng.normal(size=(4, 6))
        w = rng.normal(size=(3, 6))
        grads = []
        for _ in range(2):
            x = ad.parameter(v.copy())
            wt = ad.parameter(w.copy())
            loss = ad.mean(ad.silu(ad.linear(x, wt)))
            ad.backward(loss)
            grads.append((x.grad.copy(), wt.grad.copy()))
        np.testing.assert_array_equal(grads[0][0], grads[1][0])
        np.testing.assert_array_equal(grads[0][1], grads[1][1])

    def test_gradient_linearity(self):
        rng = np.random.default_rng(8)
        v = rng.normal(size=5)

        def grad_of(a, b):
            x = ad.parameter(v.copy())
            l1_ = ad.mean(ad.mul(x, x))
            l2_ = ad.mean(ad.silu(x))
            ad.backward(ad.add(ad.scale(l1_, a), ad.scale(l2_, b)))
            return x.grad

        g_combo = grad_of(2.0, 3.0)
        g1 = grad_of(1.0, 0.0)
        g2 = grad_of(0.0, 1.0)
        np.testing.assert_allclose(g_combo, 2 * g1 + 3 * g2, atol=1e-12)


class TestAdam:
    def test_first_step_delta(self):
        p = ad.parameter(np.zeros(4))
        p.grad = np.ones(4)
        state = OptimizerState(lr=3e-4)
        adam_step([p], state)
        np.testing.assert_allclose(p.data, -3e-4 / (1 + 1e-8), rtol=1e-12)
        assert p.grad is None

    def test_zero_grad_no_move(self):
        p = ad.parameter(np.full(3, 7.0))
        p.grad = np.zeros(3)
        adam_step([p], OptimizerState())
        np.testing.assert_array_equal(p.data, 7.0)

    def test_deterministic(self):
        def run():
            p = ad.parameter(np.array([1.0, 2.0]))
            state = OptimizerState(lr=1e-2)
            for t in range(2):
                p.grad = p.data * 0.5
                adam_step([p], state)
            return p.data.copy()

        np.testing.assert_array_equal(run(), run())

    def test_missing_grad_raises(self):
        with pytest.raises(ContractError):
            adam_step([ad.parameter(np.zeros(2))], OptimizerState())

    def test_clip_global_norm(self):
        p1 = ad.parameter(np.zeros(3))
        p2 = ad.parameter(np.zeros(4))
        p1.grad = np.full(3, 3.0)
        p2.grad = np.full(4, 4.0)
        norm = clip_global_norm([p1, p2], 1.0)
        assert norm == pytest.approx(np.sqrt(27 + 64))
        total = np.sum(p1.grad ** 2) + np.sum(p2.grad ** 2)
        assert np.sqrt(total) == pytest.approx(1.0)
