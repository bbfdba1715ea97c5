"""Min-max affine post-training quantization and integer inference.

A tensor is stored as unsigned integers ``q`` with ``real = scale * (q - zp)``.
The 8-bit model runs conv and dense layers on integer payloads against
activations quantized per sample; the 16-bit model keeps the integer payload
as its weights and computes with float activations.
"""

from dataclasses import dataclass

import numpy as np

from .exceptions import NumericError, ParameterError, ShapeError
from .model import Model, prunable_keys
from .tensor import _kernels, ops

BITS = (8, 16)
STORAGE = {8: np.uint8, 16: np.uint16}


def _check_bits(bits):
    if bits not in BITS:
        raise ParameterError(f"bits must be 8 or 16, got {bits}")


def qmax(bits):
    return (1 << bits) - 1


@dataclass(frozen=True)
class QuantizedTensor:
    data: np.ndarray
    bits: int
    scale: float
    zero_point: int

    @property
    def shape(self):
        return self.data.shape

    @property
    def nbytes(self):
        return self.data.nbytes

    def dequantize(self, dtype=np.float32):
        return dequantize(self, dtype)

    def centred(self, dtype=np.int32):
        return self.data.astype(dtype) - dtype(self.zero_point)


def minmax_params(values, bits=8):
    """``(scale, zero_point)`` for the range of ``values`` extended to include 0.

    An all-zero tensor gives ``(1.0, 0)``.
    """
    _check_bits(bits)
    v = np.asarray(values, dtype=np.float64)
    if v.size and not np.all(np.isfinite(v)):
        raise NumericError("cannot quantize non-finite values")
    lo = min(float(v.min()), 0.0) if v.size else 0.0
    hi = max(float(v.max()), 0.0) if v.size else 0.0
    if hi == lo:
        return 1.0, 0
    levels = qmax(bits)
    scale = (hi - lo) / levels
    # -lo / scale written without the division by scale so [-1, 1] gives 127.5 exactly
    zp = int(np.clip(np.rint(-lo * levels / (hi - lo)), 0, levels))
    return scale, zp


def quantize(values, scale, zero_point, bits=8):
    _check_bits(bits)
    if not scale > 0:
        raise ParameterError(f"scale must be positive, got {scale}")
    v = np.asarray(values, dtype=np.float64)
    q = np.clip(np.rint(v / scale) + zero_point, 0, qmax(bits))
    return QuantizedTensor(q.astype(STORAGE[bits]), bits, float(scale), int(zero_point))


def quantize_tensor(values, bits=8):
    scale, zp = minmax_params(values, bits)
    return quantize(values, scale, zp, bits)


def dequantize(q, dtype=np.float32):
    return (q.scale * (q.data.astype(np.float64) - q.zero_point)).astype(dtype)


def _weight_keys(model):
    return [f"{layer.name}/{w}" for layer in model.layers for w in layer.weight_names]


class QuantizedModel:
    """Integer weight payloads plus float32 biases for a :class:`Model` topology."""

    def __init__(self, config, layers, qweights, fparams, bits):
        self.config = config
        self.layers = layers
        self.qweights = qweights
        self.fparams = fparams
        self.bits = bits
        self._prepare()

    @property
    def input_shape(self):
        return self.config.input_shape

    def _prepare(self):
        # derived execution tensors; the integer payloads stay the source of truth
        self._float = dict(self.fparams)
        self._int = {}
        for key, q in self.qweights.items():
            self._float[key] = q.dequantize(np.float32)
            layer_name, pname = key.split("/", 1)
            kind = self._layer(layer_name).kind
            if self.bits == 8 and kind == "conv2d":
                self._int[key] = np.ascontiguousarray(q.centred(np.int16).transpose(3, 2, 0, 1))
            elif self.bits == 8 and kind == "dense":
                self._int[key] = np.ascontiguousarray(q.centred(np.int16))

    def _layer(self, name):
        for layer in self.layers:
            if layer.name == name:
                return layer
        raise KeyError(name)

    def layer_params(self, layer):
        return {p: self._float[f"{layer.name}/{p}"] for p in layer.param_shapes()}

    def dequantized_model(self):
        """Float :class:`Model` holding the dequantized weights; masks mark the non-zeros."""
        params = {k: v.copy() for k, v in self._float.items()}
        masks = {k: params[k] != 0 for k in prunable_keys(self.layers)}
        return Model(self.config, self.layers, params, masks)

    def payload_bytes(self):
        return int(sum(q.nbytes for q in self.qweights.values()) + sum(v.nbytes for v in self.fparams.values()))

    def forward(self, x):
        x = np.asarray(x, dtype=np.float32)
        if x.shape != tuple(self.input_shape):
            raise ShapeError(f"expected input of shape {self.input_shape}, got {x.shape}")
        return quantized_forward(self, x)

    def predict_proba(self, X, batch_size=None):
        X = np.asarray(X, dtype=np.float32)
        if X.shape[1:] != tuple(self.input_shape):
            raise ShapeError(f"expected inputs of shape {self.input_shape}, got {X.shape[1:]}")
        return np.array([quantized_forward(self, x) for x in X], dtype=np.float64)

    def __repr__(self):
        return f"QuantizedModel(bits={self.bits}, input_shape={self.input_shape}, tensors={len(self.qweights)})"


def quantize_model(model, bits=8):
    """Per-tensor min-max quantization of every weight tensor; biases stay float32."""
    _check_bits(bits)
    qweights = {}
    for key in _weight_keys(model):
        w = model.params[key]
        if not np.all(np.isfinite(w)):
            raise NumericError(f"non-finite weight in {key}; cannot quantize")
        qweights[key] = quantize_tensor(w, bits)
    fparams = {k: v.astype(np.float32).copy() for k, v in model.params.items() if k not in qweights}
    return QuantizedModel(model.config, model.layers, qweights, fparams, bits)


def _quantize_activation(a):
    """Per-sample 8-bit min-max quantization, returned zero-point centred."""
    return _kernels.quantize_activation(np.ascontiguousarray(a, dtype=np.float32))


def _conv_int8(qm, layer, x_chw):
    kq = qm.qweights[f"{layer.name}/kernel"]
    wq = qm._int[f"{layer.name}/kernel"]
    bias = qm._float[f"{layer.name}/bias"]
    c, h, w = x_chw.shape
    kh, kw = layer.kernel_size
    sh, sw = layer.strides
    out_h = ops.conv_output_size(h, kh, sh, layer.padding)
    out_w = ops.conv_output_size(w, kw, sw, layer.padding)
    pads = (0, 0, 0, 0)
    if layer.padding == "same":
        # a centred zero is the real zero, so plain zero padding is exact
        pads = ops.same_padding(h, kh, sh) + ops.same_padding(w, kw, sw)
    xq, xs = _kernels.quantize_activation_padded(np.ascontiguousarray(x_chw, dtype=np.float32), *pads)
    acc = _kernels.conv_chw_int(xq, wq, out_h, out_w, sh, sw)
    return acc.astype(np.float32) * np.float32(xs * kq.scale) + bias[:, None, None]


def _dense_int8(qm, layer, a):
    kq = qm.qweights[f"{layer.name}/kernel"]
    aq, s = _quantize_activation(a)
    acc = _kernels.dense_int(aq, qm._int[f"{layer.name}/kernel"])
    return acc.astype(np.float32) * np.float32(s * kq.scale) + qm._float[f"{layer.name}/bias"]


def _to_hwc(h, chw):
    return h.transpose(1, 2, 0) if chw else h


def quantized_forward(qmodel, x):
    """Probability for one input.

    On the 8-bit model conv and dense layers accumulate integer products in
    int32 and rescale to float between layers; feature maps stay
    channel-first while they pass through conv, pool and activation layers.
    Other layers run on dequantized weights.
    """
    x = np.asarray(x, dtype=np.float32)
    if qmodel.bits != 8:
        h = x[None]
        for layer in qmodel.layers:
            h, _ = layer.forward(qmodel.layer_params(layer), h)
        return float(h.reshape(-1)[0])

    chw = False
    h = x
    for layer in qmodel.layers:
        kind = layer.kind
        if kind == "conv2d":
            if not chw:
                h = h[None] if h.ndim == 2 else h.transpose(2, 0, 1)
                chw = True
            h = _conv_int8(qmodel, layer, np.ascontiguousarray(h))
        elif kind == "maxpool" and chw:
            (ph, pw), (sh, sw) = layer.pool_size, layer.strides
            _, out_h, out_w = (layer.output_shape[2],) + layer.output_shape[:2]
            h = _kernels.max_pool_chw(h, ph, pw, sh, sw, out_h, out_w)
        elif kind == "activation" or kind == "dropout":
            h, _ = layer.forward(None if kind == "dropout" else {}, h)
        elif kind == "dense":
            h = _dense_int8(qmodel, layer, h.reshape(-1))
        elif kind == "flatten":
            h = np.ascontiguousarray(_to_hwc(h, chw)).reshape(-1)
            chw = False
        else:
            h = _to_hwc(h, chw)
            chw = False
            h, _ = layer.forward(qmodel.layer_params(layer), h[None])
            h = h[0]
    return float(np.asarray(h).reshape(-1)[0])
