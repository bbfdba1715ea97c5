import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from edgepress.exceptions import ParameterError, ShapeError
from edgepress.model import build_model, loss_and_gradients
from edgepress.tensor.ops import (
    ElasticNetCoeffs,
    attention_pool,
    bce_loss,
    conv2d_forward,
    elastic_net_penalty,
    lstm_forward,
    matmul,
    max_pool,
    sigmoid,
)
from edgepress.tensor.optim import OptimizerState, optimizer_step

from conftest import lstm_config, small_config


def triple_loop(a, b):
    m, k = a.shape
    n = b.shape[1]
    c = np.zeros((m, n))
    for i in range(m):
        for j in range(n):
            for l in range(k):
                c[i, j] += a[i, l] * b[l, j]
    return c


def direct_conv(x, k):
    """Valid cross-correlation by explicit window sums."""
    h, w, c = x.shape
    kh, kw, _, f = k.shape
    out = np.zeros((h - kh + 1, w - kw + 1, f))
    for i in range(out.shape[0]):
        for j in range(out.shape[1]):
            for o in range(f):
                out[i, j, o] = np.sum(x[i : i + kh, j : j + kw, :] * k[:, :, :, o])
    return out


class TestMatmul:
    def test_identity(self):
        b = np.arange(6.0).reshape(3, 2)
        np.testing.assert_array_equal(matmul(np.eye(3), b), b)

    def test_hand_values(self):
        np.testing.assert_array_equal(matmul([[1, 2], [3, 4]], [[5], [6]]), [[17], [39]])

    def test_zero_annihilates(self):
        assert not matmul(np.zeros((2, 3)), np.ones((3, 4))).any()

    def test_mismatch(self):
        with pytest.raises(ShapeError):
            matmul(np.ones((2, 3)), np.ones((2, 3)))

    @given(st.integers(1, 6), st.integers(1, 6), st.integers(1, 6), st.integers(0, 2**31 - 1))
    def test_matches_triple_loop(self, m, k, n, seed):
        rng = np.random.default_rng(seed)
        a, b = rng.standard_normal((m, k)), rng.standard_normal((k, n))
        np.testing.assert_allclose(matmul(a, b), triple_loop(a, b), atol=1e-12)


class TestConv2d:
    def test_identity_kernel(self):
        x = np.random.default_rng(0).standard_normal((4, 5, 1)).astype(np.float32)
        np.testing.assert_array_equal(conv2d_forward(x, np.ones((1, 1, 1, 1), np.float32)), x)

    def test_constant_field(self):
        out = conv2d_forward(np.full((5, 5, 1), 2.5), np.ones((3, 3, 1, 1)))
        np.testing.assert_allclose(out, 22.5)

    def test_hand_value(self):
        out = conv2d_forward(np.array([[1.0, 2], [3, 4]]), np.array([[1.0, 0], [0, 1]]).reshape(2, 2, 1, 1))
        np.testing.assert_array_equal(out, [[[5.0]]])

    def test_kernel_too_large(self):
        with pytest.raises(ShapeError):
            conv2d_forward(np.ones((2, 2, 1)), np.ones((3, 3, 1, 1)))

    @given(st.integers(3, 7), st.integers(3, 7), st.integers(1, 3), st.integers(1, 3), st.integers(0, 2**31 - 1))
    def test_matches_direct(self, h, w, c, f, seed):
        rng = np.random.default_rng(seed)
        x = rng.standard_normal((h, w, c))
        k = rng.standard_normal((2, 3, c, f))
        np.testing.assert_allclose(conv2d_forward(x, k), direct_conv(x, k), atol=1e-10)

    def test_same_padding_keeps_size(self):
        out = conv2d_forward(np.ones((15, 302, 1)), np.ones((3, 3, 1, 4)), padding="same")
        assert out.shape == (15, 302, 4)

    def test_stride(self):
        x = np.random.default_rng(1).standard_normal((6, 6, 1))
        k = np.random.default_rng(2).standard_normal((2, 2, 1, 1))
        np.testing.assert_allclose(conv2d_forward(x, k, stride=2), direct_conv(x, k)[::2, ::2], atol=1e-12)


class TestMaxPool:
    def test_constant(self):
        np.testing.assert_array_equal(max_pool(np.full((4, 4), 3.0), 2), np.full((2, 2), 3.0))

    def test_max_of_four(self):
        np.testing.assert_array_equal(max_pool(np.array([[1.0, 2], [3, 4]]), 2), [[4.0]])

    def test_ramp_windows(self):
        x = np.arange(16.0).reshape(4, 4)
        expected = np.array([[x[i : i + 2, j : j + 2].max() for j in (0, 2)] for i in (0, 2)])
        np.testing.assert_array_equal(max_pool(x, 2, 2), expected)

    def test_zero_window(self):
        with pytest.raises(ParameterError):
            max_pool(np.ones((4, 4)), 0)


class TestLstmAttention:
    def test_zero_everything(self):
        hs = lstm_forward(np.zeros((5, 3)), np.zeros((3, 8)), np.zeros((2, 8)), np.zeros(8))
        assert hs.shape == (5, 2) and not hs.any()

    def test_recurrence_oracle(self):
        rng = np.random.default_rng(0)
        T, d, u = 4, 3, 2
        seq, k, r, b = rng.standard_normal((T, d)), rng.standard_normal((d, 4 * u)), rng.standard_normal((u, 4 * u)), rng.standard_normal(4 * u)
        sig = lambda z: 1 / (1 + np.exp(-z))  # noqa: E731
        h, c, expect = np.zeros(u), np.zeros(u), []
        for t in range(T):
            z = seq[t] @ k + h @ r + b
            i, f, g, o = sig(z[:u]), sig(z[u : 2 * u]), np.tanh(z[2 * u : 3 * u]), sig(z[3 * u :])
            c = f * c + i * g
            h = o * np.tanh(c)
            expect.append(h)
        np.testing.assert_allclose(lstm_forward(seq, k, r, b), expect, atol=1e-12)

    def test_lstm_shape_error(self):
        with pytest.raises(ShapeError):
            lstm_forward(np.zeros((0, 3)), np.zeros((3, 8)), np.zeros((2, 8)), np.zeros(8))

    def test_attention_single_step(self):
        h = np.array([[0.3, -1.2]])
        np.testing.assert_allclose(attention_pool(h, np.ones((2, 3)), np.ones(3)), h[0])

    def test_attention_identical_states(self):
        h = np.tile([0.5, 2.0, -1.0], (6, 1))
        rng = np.random.default_rng(1)
        np.testing.assert_allclose(attention_pool(h, rng.standard_normal((3, 4)), rng.standard_normal(4)), h[0])

    def test_attention_convex_combination(self):
        rng = np.random.default_rng(2)
        h, W, v = rng.standard_normal((5, 3)), rng.standard_normal((3, 2)), rng.standard_normal(2)
        e = np.array([v @ np.tanh(h[t] @ W) for t in range(5)])
        a = np.exp(e) / np.exp(e).sum()
        expect = sum(a[t] * h[t] for t in range(5))
        out, weights = attention_pool(h, W, v, return_weights=True)
        np.testing.assert_allclose(out, expect, atol=1e-12)
        assert weights.sum() == pytest.approx(1.0)


class TestLosses:
    def test_bce_perfect(self):
        assert bce_loss(1.0, 1) <= 1.2e-7
        assert bce_loss(0.0, 0) <= 1.2e-7

    def test_bce_half(self):
        assert bce_loss(0.5, 0) == pytest.approx(np.log(2))
        assert bce_loss(0.5, 1) == pytest.approx(0.6931, abs=1e-4)

    def test_bce_value(self):
        assert bce_loss(0.9, 1) == pytest.approx(0.10536, abs=1e-5)

    def test_elastic_net(self):
        c = ElasticNetCoeffs(3e-4, 4e-3)
        assert elastic_net_penalty(np.zeros(3), c) == 0.0
        assert elastic_net_penalty(np.array([1.0, -1.0]), c) == pytest.approx(8.6e-3)
        assert elastic_net_penalty(np.array([1.0, -1.0]), ElasticNetCoeffs()) == 0.0

    def test_negative_coeff(self):
        with pytest.raises(ParameterError):
            ElasticNetCoeffs(-1.0)

    @given(st.floats(-500, 500))
    def test_sigmoid_stable(self, z):
        p = sigmoid(np.array([z]))[0]
        assert 0.0 <= p <= 1.0 and np.isfinite(p)


class TestGradients:
    def test_single_dense_closed_form(self):
        from edgepress.model import LayerSpec, ModelConfig

        cfg = ModelConfig([3], [LayerSpec.from_dict(dict(kind="dense", name="d", units=1)),
                                LayerSpec.from_dict(dict(kind="activation", name="o", function="sigmoid"))])
        m = build_model(cfg).astype(np.float64)
        x = np.array([[0.2, -0.4, 1.0]])
        p = 1 / (1 + np.exp(-(x @ m.params["d/kernel"] + m.params["d/bias"])))[0, 0]
        _, g = loss_and_gradients(m, x, [1.0])
        np.testing.assert_allclose(g["d/bias"], [p - 1], rtol=1e-10)
        np.testing.assert_allclose(g["d/kernel"][:, 0], (p - 1) * x[0], rtol=1e-10)

    @staticmethod
    def _check_fd(m, step, seed=0):
        rng = np.random.default_rng(seed)
        for k in m.params:
            m.params[k] = m.params[k] + rng.normal(0, 0.3, m.params[k].shape)
        X = rng.standard_normal((4,) + m.input_shape)
        y = np.array([0, 1, 1, 0.0])
        _, grads = loss_and_gradients(m, X, y)
        for key, p in m.params.items():
            num = np.zeros_like(p)
            for idx in np.ndindex(p.shape):
                old = p[idx]
                p[idx] = old + step
                lp, _ = loss_and_gradients(m, X, y)
                p[idx] = old - step
                lm, _ = loss_and_gradients(m, X, y)
                p[idx] = old
                num[idx] = (lp - lm) / (2 * step)
            err = np.abs(num - grads[key]).max() / max(np.abs(num).max(), 1e-8)
            assert err < 1e-3, key

    def test_finite_differences_two_layer(self):
        from edgepress.model import LayerSpec, ModelConfig

        layers = [dict(kind="dense", name="d1", units=5, regularization={"l1": 3e-4, "l2": 4e-3, "bias_l2": 3e-3}),
                  dict(kind="activation", name="a", function="tanh"),
                  dict(kind="dense", name="d2", units=1),
                  dict(kind="activation", name="o", function="sigmoid")]
        m = build_model(ModelConfig([7], [LayerSpec.from_dict(d) for d in layers], seed=5)).astype(np.float64)
        self._check_fd(m, 1e-3)

    # max pooling is piecewise linear; a small step keeps every window's argmax fixed
    @pytest.mark.parametrize("cfg", [small_config(activation="tanh"), lstm_config()], ids=["cnn", "cnn-lstm"])
    def test_finite_differences_full(self, cfg):
        self._check_fd(build_model(cfg).astype(np.float64), 1e-5)

    def test_perfect_prediction_zero_gradient(self):
        m = build_model(lstm_config()).astype(np.float64)  # no regularization
        for k in m.params:
            m.params[k][...] = 0
        m.params["d/bias"][...] = 40.0  # p clipped at 1
        _, g = loss_and_gradients(m, np.ones((2,) + m.input_shape), [1, 1])
        assert max(np.abs(v).max() for v in g.values()) < 1e-6


class TestOptimizer:
    def test_zero_gradient(self):
        params = {"w": np.array([1.0, -2.0])}
        st0 = OptimizerState("adam", 1e-3)
        new, st1 = optimizer_step(st0, params, {"w": np.zeros(2)})
        np.testing.assert_array_equal(new["w"], params["w"])
        assert st1.step_count == 1 and st0.step_count == 0

    @pytest.mark.parametrize("kind", ["adam", "adamax"])
    def test_first_step_is_signed_lr(self, kind):
        g = np.array([0.3, -2.0, 1e-2])
        new, _ = optimizer_step(OptimizerState(kind, 1e-3), {"w": np.zeros(3)}, {"w": g})
        np.testing.assert_allclose(new["w"], -1e-3 * np.sign(g), rtol=1e-4)

    def test_step_count(self):
        s = OptimizerState("adamax", 1e-3)
        p = {"w": np.ones(2)}
        for _ in range(3):
            p, s = optimizer_step(s, p, {"w": np.ones(2)})
        assert s.step_count == 3
        assert s.first_moment["w"].shape == (2,)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            optimizer_step(OptimizerState(), {"w": np.ones(2)}, {"w": np.ones(3)})

    def test_bad_kind(self):
        with pytest.raises(ParameterError):
            OptimizerState("sgd")
