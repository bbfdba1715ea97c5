import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from edgepress.exceptions import NumericError, ParameterError
from edgepress.model import build_model, make_optimizer, train
from edgepress.quantization import (
    dequantize,
    minmax_params,
    quantize,
    quantize_model,
    quantize_tensor,
)

from conftest import lstm_config, separable_set, small_config

finite = st.floats(-1e3, 1e3, allow_nan=False, width=32)


class TestParams:
    def test_symmetric_unit_range(self):
        scale, zp = minmax_params(np.array([-1.0, 1.0]), 8)
        assert scale == pytest.approx(2 / 255) and zp == 128

    def test_zero_tensor(self):
        assert minmax_params(np.zeros(5), 8) == (1.0, 0)
        assert minmax_params(np.zeros(5), 16) == (1.0, 0)

    def test_byte_range(self):
        assert minmax_params(np.array([0.0, 255.0]), 8) == (1.0, 0)

    @pytest.mark.parametrize("v,zp", [(3.0, 0), (-3.0, 255)])
    def test_constant_tensor(self, v, zp):
        scale, z = minmax_params(np.full(4, v), 8)
        assert scale == pytest.approx(3 / 255) and z == zp
        q = quantize(np.full(4, v), scale, z)
        np.testing.assert_allclose(dequantize(q), v, rtol=1e-6)

    def test_bad_bits(self):
        with pytest.raises(ParameterError):
            minmax_params(np.ones(3), 4)

    def test_nan(self):
        with pytest.raises(NumericError):
            minmax_params(np.array([1.0, np.nan]))


class TestRoundTrip:
    @pytest.mark.parametrize("bits", [8, 16])
    @given(v=arrays(np.float64, st.integers(1, 200), elements=finite))
    def test_bound(self, bits, v):
        q = quantize_tensor(v, bits)
        err = np.abs(v - dequantize(q, np.float64)).max()
        assert err <= q.scale / 2 + 1e-7 * max(1.0, np.abs(v).max())

    @pytest.mark.parametrize("bits", [8, 16])
    @given(v=arrays(np.float64, st.integers(1, 100), elements=finite))
    def test_zero_exact(self, bits, v):
        q = quantize_tensor(v, bits)
        z = quantize(np.zeros(1), q.scale, q.zero_point, bits)
        assert z.data[0] == q.zero_point and dequantize(z)[0] == 0.0

    @pytest.mark.parametrize("bits", [8, 16])
    @given(v=arrays(np.float32, st.integers(1, 100), elements=finite))
    def test_idempotent(self, bits, v):
        q1 = quantize_tensor(v, bits)
        q2 = quantize_tensor(dequantize(q1, np.float64), bits)
        np.testing.assert_array_equal(q1.data, q2.data)

    def test_storage_types(self):
        assert quantize_tensor(np.ones(3), 8).data.dtype == np.uint8
        assert quantize_tensor(np.ones(3), 16).data.dtype == np.uint16


class TestModel:
    @pytest.mark.parametrize("make", [small_config, lstm_config])
    @pytest.mark.parametrize("bits", [8, 16])
    def test_zero_input_zero_head(self, make, bits):
        m = build_model(make())
        for k in m.params:
            if "bias" in k:
                m.params[k][...] = 0
        x = np.zeros(m.input_shape, np.float32)
        # relu/tanh nets with zero biases map zero input to a zero logit
        assert m.forward(x) == 0.5
        assert quantize_model(m, bits).forward(x) == 0.5

    @pytest.mark.parametrize("bits,tol", [(8, 0.02), (16, 1e-3)])
    def test_close_to_float(self, bits, tol):
        X, y = separable_set(80, (6, 9, 2), seed=3)
        m, _ = train(build_model(small_config()), (X, y), None, make_optimizer("adam", 1e-3), 5, 16, seed=0)
        q = quantize_model(m, bits)
        assert np.abs(q.predict_proba(X) - m.predict_proba(X)).max() < tol

    def test_single_matches_batch(self, small_model):
        q = quantize_model(small_model, 8)
        X = np.random.default_rng(0).standard_normal((4,) + small_model.input_shape).astype(np.float32)
        np.testing.assert_array_equal(q.predict_proba(X), [q.forward(x) for x in X])

    def test_int8_matches_dequantized_float(self):
        # integer path vs float arithmetic on the same dequantized weights; differences come only
        # from activation quantization
        X, y = separable_set(40, (6, 9, 2), seed=4)
        m = build_model(small_config())
        q = quantize_model(m, 8)
        deq = q.dequantized_model()
        assert np.abs(q.predict_proba(X) - deq.predict_proba(X)).max() < 0.02

    def test_nan_weight(self, small_model):
        small_model.params["d1/kernel"][0, 0] = np.nan
        with pytest.raises(NumericError):
            quantize_model(small_model, 8)

    def test_pruned_zeros_survive(self, small_model):
        from edgepress.pruning import apply_masks, magnitude_mask

        masks = {k: magnitude_mask(small_model.params[k], 0.9) for k in small_model.masks}
        pruned = apply_masks(small_model, masks)
        q = quantize_model(pruned, 8)
        for k, mask in masks.items():
            assert not q.dequantized_model().params[k][~mask].any()

    def test_payload_smaller(self, small_model):
        q8, q16 = quantize_model(small_model, 8), quantize_model(small_model, 16)
        assert q8.payload_bytes() < q16.payload_bytes()
