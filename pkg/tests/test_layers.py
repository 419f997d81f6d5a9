import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from liveness.errors import NumericError, ShapeError, StateError
from liveness.layers import (
    BatchNorm,
    Conv3x3,
    Dropout,
    Flatten,
    Linear,
    MaxPool2x2,
    ReLU,
    softmax,
    softmax_cross_entropy,
)
from liveness.optim import SGD, Adam

from oracles import conv3x3_reference


def rng_for(seed):
    return np.random.default_rng(seed)


class TestConv3x3:
    def test_zero_input_isolates_bias(self):
        conv = Conv3x3(3, 4, rng_for(0))
        conv.bias[:] = np.arange(4, dtype=np.float32) + 0.5
        out = conv.forward(np.zeros((1, 3, 4, 4), dtype=np.float32))
        for k in range(4):
            assert np.all(out[0, k] == conv.bias[k])

    def test_identity_kernel(self):
        conv = Conv3x3(1, 1, rng_for(0))
        conv.weight[:] = 0.0
        conv.weight[0, 0, 1, 1] = 1.0
        conv.bias[:] = 0.0
        x = rng_for(1).standard_normal((1, 1, 6, 6)).astype(np.float32)
        out = conv.forward(x)
        np.testing.assert_array_equal(out, x)

    def test_matches_triple_loop_reference(self):
        rng = rng_for(7)
        x = (rng.standard_normal((1, 2, 4, 4)) * 0.2).astype(np.float32)
        conv = Conv3x3(2, 3, rng)
        conv.weight[:] = (rng.standard_normal(conv.weight.shape) * 0.2).astype(np.float32)
        conv.bias[:] = (rng.standard_normal(3) * 0.2).astype(np.float32)
        got = conv.forward(x)
        want = conv3x3_reference(x, conv.weight, conv.bias)
        assert np.max(np.abs(got.astype(np.float64) - want)) < 1e-6

    def test_spatial_shape_preserved(self):
        conv = Conv3x3(3, 16, rng_for(0))
        out = conv.forward(np.zeros((2, 3, 32, 32), dtype=np.float32))
        assert out.shape == (2, 16, 32, 32)

    def test_channel_mismatch_raises(self):
        conv = Conv3x3(3, 4, rng_for(0))
        with pytest.raises(ShapeError):
            conv.forward(np.zeros((1, 2, 4, 4), dtype=np.float32))

    def test_nonfinite_output_raises(self):
        conv = Conv3x3(1, 1, rng_for(0))
        x = np.full((1, 1, 4, 4), np.inf, dtype=np.float32)
        with np.errstate(invalid="ignore"), pytest.raises(NumericError):
            conv.forward(x)

    def test_backward_before_forward_raises(self):
        conv = Conv3x3(1, 1, rng_for(0))
        with pytest.raises(StateError):
            conv.backward(np.zeros((1, 1, 4, 4), dtype=np.float32))

    def test_backward_zero_grad_gives_zero_grads(self):
        conv = Conv3x3(2, 3, rng_for(3))
        x = rng_for(4).standard_normal((2, 2, 4, 4)).astype(np.float32)
        conv.forward(x)
        grad_in = conv.backward(np.zeros((2, 3, 4, 4), dtype=np.float32))
        assert not grad_in.any()
        assert not conv.grad_weight.any()
        assert not conv.grad_bias.any()

    def test_grad_bias_is_per_channel_sum(self):
        conv = Conv3x3(2, 3, rng_for(5))
        x = rng_for(6).standard_normal((2, 2, 4, 4)).astype(np.float32)
        conv.forward(x)
        g = rng_for(7).standard_normal((2, 3, 4, 4)).astype(np.float32)
        conv.backward(g)
        np.testing.assert_allclose(conv.grad_bias, g.sum(axis=(0, 2, 3)), rtol=1e-5)


class TestBatchNorm:
    def test_train_normalizes_per_channel(self):
        bn = BatchNorm(3)
        x = (rng_for(0).standard_normal((4, 3, 5, 5)) * 3 + 2).astype(np.float32)
        out = bn.forward(x, mode="train")
        for c in range(3):
            assert abs(out[:, c].mean()) < 1e-5
            assert abs(out[:, c].var() - 1.0) < 1e-3

    def test_constant_channel_outputs_beta(self):
        bn = BatchNorm(2)
        bn.beta[:] = np.array([1.5, -0.5], dtype=np.float32)
        x = np.ones((4, 2, 3, 3), dtype=np.float32) * 7.0
        out = bn.forward(x, mode="train")
        np.testing.assert_allclose(out[:, 0], 1.5, atol=1e-4)
        np.testing.assert_allclose(out[:, 1], -0.5, atol=1e-4)

    def test_infer_is_bit_identical_across_calls(self):
        bn = BatchNorm(3)
        bn.forward(rng_for(1).standard_normal((4, 3, 4, 4)).astype(np.float32), mode="train")
        x = rng_for(2).standard_normal((2, 3, 4, 4)).astype(np.float32)
        a = bn.forward(x, mode="infer")
        b = bn.forward(x, mode="infer")
        np.testing.assert_array_equal(a, b)

    def test_infer_before_train_uses_identity_stats(self):
        bn = BatchNorm(2)
        x = rng_for(3).standard_normal((2, 2, 3, 3)).astype(np.float32)
        out = bn.forward(x, mode="infer")
        expected = x / np.sqrt(np.float32(1.0) + np.float32(bn.epsilon))
        np.testing.assert_allclose(out, expected, atol=1e-6)

    def test_supports_2d_features(self):
        bn = BatchNorm(8)
        x = (rng_for(4).standard_normal((16, 8)) * 2 + 1).astype(np.float32)
        out = bn.forward(x, mode="train")
        assert out.shape == x.shape
        assert np.all(np.abs(out.mean(axis=0)) < 1e-5)

    def test_single_sample_train_raises(self):
        bn = BatchNorm(2)
        with pytest.raises(ShapeError):
            bn.forward(np.zeros((1, 2), dtype=np.float32), mode="train")

    def test_backward_zero_grad(self):
        bn = BatchNorm(2)
        bn.forward(rng_for(5).standard_normal((3, 2, 2, 2)).astype(np.float32), mode="train")
        grad_in = bn.backward(np.zeros((3, 2, 2, 2), dtype=np.float32))
        assert not grad_in.any()
        assert not bn.grad_gamma.any()
        assert not bn.grad_beta.any()

    def test_grad_beta_is_per_channel_sum(self):
        bn = BatchNorm(3)
        bn.forward(rng_for(6).standard_normal((2, 3, 2, 2)).astype(np.float32), mode="train")
        g = rng_for(7).standard_normal((2, 3, 2, 2)).astype(np.float32)
        bn.backward(g)
        np.testing.assert_allclose(bn.grad_beta, g.sum(axis=(0, 2, 3)), rtol=1e-5)


class TestReLU:
    def test_forward_values(self):
        out = ReLU().forward(np.array([-1.0, 0.0, 2.0], dtype=np.float32)[None])
        np.testing.assert_array_equal(out, [[0.0, 0.0, 2.0]])

    def test_backward_gates_gradient(self):
        relu = ReLU()
        relu.forward(np.array([[-1.0, 0.0, 2.0]], dtype=np.float32))
        grad = relu.backward(np.array([[5.0, 5.0, 5.0]], dtype=np.float32))
        np.testing.assert_array_equal(grad, [[0.0, 0.0, 5.0]])

    @given(st.lists(st.floats(-10, 10), min_size=1, max_size=32))
    def test_idempotent(self, values):
        x = np.array(values, dtype=np.float32)[None]
        once = ReLU().forward(x)
        twice = ReLU().forward(once)
        np.testing.assert_array_equal(once, twice)


class TestMaxPool2x2:
    def test_window_max(self):
        x = np.array([[1.0, 2.0], [3.0, 4.0]], dtype=np.float32).reshape(1, 1, 2, 2)
        pool = MaxPool2x2()
        out = pool.forward(x)
        assert out.reshape(()) == 4.0

    def test_tie_breaks_to_first_row_major(self):
        x = np.full((1, 1, 2, 2), 7.0, dtype=np.float32)
        pool = MaxPool2x2()
        out = pool.forward(x)
        assert out.reshape(()) == 7.0
        assert pool.argmax_indices.reshape(()) == 0

    def test_output_shape(self):
        out = MaxPool2x2().forward(np.zeros((1, 1, 32, 32), dtype=np.float32))
        assert out.shape == (1, 1, 16, 16)

    def test_odd_dims_raise(self):
        with pytest.raises(ShapeError):
            MaxPool2x2().forward(np.zeros((1, 1, 5, 4), dtype=np.float32))

    def test_backward_routes_to_argmax(self):
        x = np.array([[1.0, 9.0], [3.0, 4.0]], dtype=np.float32).reshape(1, 1, 2, 2)
        pool = MaxPool2x2()
        pool.forward(x)
        grad = pool.backward(np.array([[[[2.5]]]], dtype=np.float32))
        np.testing.assert_array_equal(grad.reshape(2, 2), [[0.0, 2.5], [0.0, 0.0]])

    @given(st.integers(0, 2 ** 31 - 1))
    @settings(max_examples=25, deadline=None)
    def test_backward_conserves_gradient_mass(self, seed):
        rng = np.random.default_rng(seed)
        x = rng.standard_normal((2, 3, 4, 6)).astype(np.float32)
        pool = MaxPool2x2()
        pool.forward(x)
        g = rng.standard_normal((2, 3, 2, 3)).astype(np.float32)
        grad_in = pool.backward(g)
        assert grad_in.sum(dtype=np.float64) == pytest.approx(g.sum(dtype=np.float64), abs=1e-6)

    def test_backward_zero_grad(self):
        pool = MaxPool2x2()
        pool.forward(rng_for(1).standard_normal((1, 2, 4, 4)).astype(np.float32))
        assert not pool.backward(np.zeros((1, 2, 2, 2), dtype=np.float32)).any()


class TestDropout:
    def test_infer_is_identity(self):
        x = rng_for(0).standard_normal((4, 5)).astype(np.float32)
        out = Dropout(0.5).forward(x, mode="infer")
        assert out is x

    def test_rate_zero_train_is_identity(self):
        x = rng_for(1).standard_normal((4, 5)).astype(np.float32)
        out = Dropout(0.0).forward(x, mode="train", rng=rng_for(2))
        np.testing.assert_array_equal(out, x)

    def test_survivor_statistics(self):
        x = np.ones((1000, 1000), dtype=np.float32)
        out = Dropout(0.5).forward(x, mode="train", rng=rng_for(3))
        survivors = out != 0
        assert abs(survivors.mean() - 0.5) < 0.01
        np.testing.assert_allclose(out[survivors], 2.0)

    def test_backward_reuses_mask(self):
        drop = Dropout(0.5)
        x = np.ones((100, 100), dtype=np.float32)
        out = drop.forward(x, mode="train", rng=rng_for(4))
        grad = drop.backward(np.ones_like(x))
        np.testing.assert_array_equal(grad != 0, out != 0)

    def test_invalid_rate_raises(self):
        with pytest.raises(ShapeError):
            Dropout(1.0)

    def test_train_without_rng_raises(self):
        with pytest.raises(StateError):
            Dropout(0.5).forward(np.zeros((2, 2), dtype=np.float32), mode="train")


class TestLinear:
    def test_identity_weight(self):
        lin = Linear(4, 4, rng_for(0))
        lin.weight[:] = np.eye(4, dtype=np.float32)
        lin.bias[:] = 0.0
        x = rng_for(1).standard_normal((3, 4)).astype(np.float32)
        np.testing.assert_array_equal(lin.forward(x), x)

    def test_output_shape(self):
        lin = Linear(2048, 64, rng_for(0))
        out = lin.forward(np.zeros((1, 2048), dtype=np.float32))
        assert out.shape == (1, 64)

    def test_input_width_mismatch_raises(self):
        with pytest.raises(ShapeError):
            Linear(4, 2, rng_for(0)).forward(np.zeros((1, 5), dtype=np.float32))

    def test_backward_gradients(self):
        lin = Linear(3, 2, rng_for(2))
        x = rng_for(3).standard_normal((5, 3)).astype(np.float32)
        lin.forward(x)
        g = rng_for(4).standard_normal((5, 2)).astype(np.float32)
        grad_in = lin.backward(g)
        np.testing.assert_allclose(grad_in, g @ lin.weight, rtol=1e-5)
        np.testing.assert_allclose(lin.grad_weight, g.T @ x, rtol=1e-5)
        np.testing.assert_allclose(lin.grad_bias, g.sum(axis=0), rtol=1e-5)


class TestSoftmaxCrossEntropy:
    def test_symmetric_logits(self):
        loss, _ = softmax_cross_entropy(np.zeros((1, 2), dtype=np.float32), np.array([0]))
        assert loss == pytest.approx(np.log(2.0), abs=1e-6)
        np.testing.assert_allclose(softmax(np.zeros((1, 2))), [[0.5, 0.5]])

    def test_extreme_logits_do_not_overflow(self):
        logits = np.array([[1000.0, -1000.0]], dtype=np.float32)
        probs = softmax(logits)
        assert np.isfinite(probs).all()
        np.testing.assert_allclose(probs, [[1.0, 0.0]], atol=1e-12)
        loss, grad = softmax_cross_entropy(logits, np.array([0]))
        assert np.isfinite(loss)
        assert np.isfinite(grad).all()

    @given(st.integers(0, 2 ** 31 - 1))
    @settings(max_examples=25, deadline=None)
    def test_rows_sum_to_one(self, seed):
        logits = np.random.default_rng(seed).standard_normal((4, 2)).astype(np.float32) * 5
        probs = softmax(logits)
        np.testing.assert_allclose(probs.sum(axis=1), 1.0, atol=1e-6)
        assert np.all(probs >= 0.0) and np.all(probs <= 1.0)

    def test_bad_labels_raise(self):
        with pytest.raises(ShapeError):
            softmax_cross_entropy(np.zeros((2, 2), dtype=np.float32), np.array([0, 2]))


class TestFlatten:
    def test_roundtrip(self):
        flat = Flatten()
        x = rng_for(0).standard_normal((2, 3, 4, 4)).astype(np.float32)
        out = flat.forward(x)
        assert out.shape == (2, 48)
        np.testing.assert_array_equal(flat.backward(out), x)


class TestOptimizers:
    def test_sgd_definitional(self):
        p = np.array([1.0], dtype=np.float32)
        SGD(lr=0.1).step([("p", p, np.array([2.0], dtype=np.float32))])
        assert p[0] == pytest.approx(0.8)

    def test_zero_gradient_leaves_params(self):
        p_sgd = np.array([3.0], dtype=np.float32)
        p_adam = np.array([3.0], dtype=np.float32)
        zero = np.zeros(1, dtype=np.float32)
        SGD(lr=0.1, momentum=0.9).step([("p", p_sgd, zero)])
        Adam(lr=0.1).step([("p", p_adam, zero)])
        assert p_sgd[0] == 3.0
        assert p_adam[0] == 3.0

    def test_adam_first_step_magnitude_is_lr(self):
        # First bias-corrected update is g / (|g| + eps'), magnitude ~ lr for any g scale
        for scale in (1e-4, 1.0, 1e4):
            p = np.array([0.0], dtype=np.float32)
            g = np.array([scale], dtype=np.float32)
            adam = Adam(lr=1e-3)
            adam.step([("p", p, g)])
            assert abs(p[0]) == pytest.approx(1e-3, rel=1e-3)

    def test_step_counter_increases(self):
        adam = Adam()
        p = np.array([0.0], dtype=np.float32)
        for i in range(3):
            adam.step([("p", p, np.array([1.0], dtype=np.float32))])
            assert adam.step_count == i + 1

    def test_sgd_momentum_accumulates(self):
        p = np.array([0.0], dtype=np.float32)
        opt = SGD(lr=1.0, momentum=0.5)
        g = np.array([1.0], dtype=np.float32)
        opt.step([("p", p, g)])
        assert p[0] == pytest.approx(-1.0)   # v = 1
        opt.step([("p", p, g)])
        assert p[0] == pytest.approx(-2.5)   # v = 1.5
