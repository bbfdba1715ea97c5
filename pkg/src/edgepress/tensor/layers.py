"""Batched layers with forward and backward passes.

Every layer works on arrays with a leading batch axis. ``forward`` returns the
output and a cache; ``backward`` consumes the cache and returns the input
gradient plus a dict of parameter gradients keyed by local parameter name.
"""

import math

import numpy as np

from ..exceptions import ConfigError, ShapeError
from . import ops

ACTIVATIONS = ("relu", "sigmoid", "tanh", "linear")


def glorot_uniform(rng, shape, fan_in, fan_out, dtype=np.float32):
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


class Layer:
    kind = None
    #: parameter names eligible for magnitude pruning
    weight_names = ()

    def __init__(self, name, hyper, input_shape):
        self.name = name
        self.hyper = dict(hyper)
        self.input_shape = tuple(input_shape)
        self.output_shape = self._infer_output_shape()

    def _infer_output_shape(self):
        return self.input_shape

    def param_shapes(self):
        return {}

    def init_params(self, rng):
        return {}

    def forward(self, params, x, training=False, rng=None):
        raise NotImplementedError

    def backward(self, params, cache, dy, need_dx=True):
        raise NotImplementedError


class Conv2D(Layer):
    kind = "conv2d"
    weight_names = ("kernel",)

    def _infer_output_shape(self):
        if len(self.input_shape) not in (2, 3):
            raise ShapeError(f"conv2d needs an HxW or HxWxC input, got {self.input_shape}")
        h, w = self.input_shape[:2]
        self.channels = self.input_shape[2] if len(self.input_shape) == 3 else 1
        self.filters = int(self.hyper["filters"])
        self.kernel_size = ops._pair(self.hyper.get("kernel_size", 3), "kernel_size")
        self.strides = ops._pair(self.hyper.get("strides", 1), "strides")
        self.padding = self.hyper.get("padding", "valid")
        out_h = ops.conv_output_size(h, self.kernel_size[0], self.strides[0], self.padding)
        out_w = ops.conv_output_size(w, self.kernel_size[1], self.strides[1], self.padding)
        return (out_h, out_w, self.filters)

    def param_shapes(self):
        kh, kw = self.kernel_size
        return {"kernel": (kh, kw, self.channels, self.filters), "bias": (self.filters,)}

    def init_params(self, rng):
        kh, kw = self.kernel_size
        fan_in = kh * kw * self.channels
        fan_out = kh * kw * self.filters
        return {
            "kernel": glorot_uniform(rng, self.param_shapes()["kernel"], fan_in, fan_out),
            "bias": np.zeros(self.filters, dtype=np.float32),
        }

    def forward(self, params, x, training=False, rng=None):
        if x.ndim == 3:
            x = x[..., None]
        return ops._batch_conv2d(x, params["kernel"], params["bias"], self.strides, self.padding)

    def backward(self, params, cache, dy, need_dx=True):
        dx, dk, db = ops._batch_conv2d_backward(dy, params["kernel"], cache, self.strides, need_dx)
        if dx is not None and len(self.input_shape) == 2:
            dx = dx[..., 0]
        return dx, {"kernel": dk, "bias": db}


class MaxPool(Layer):
    kind = "maxpool"

    def _infer_output_shape(self):
        if len(self.input_shape) != 3:
            raise ShapeError(f"maxpool needs an HxWxC input, got {self.input_shape}")
        self.pool_size = ops._pair(self.hyper.get("pool_size", 2), "pool_size")
        self.strides = ops._pair(self.hyper.get("strides", self.pool_size), "strides")
        h, w, c = self.input_shape
        return (
            ops.pool_output_size(h, self.pool_size[0], self.strides[0]),
            ops.pool_output_size(w, self.pool_size[1], self.strides[1]),
            c,
        )

    def forward(self, params, x, training=False, rng=None):
        out, arg = ops._batch_max_pool(x, self.pool_size, self.strides)
        return out, (x.shape, arg)

    def backward(self, params, cache, dy, need_dx=True):
        x_shape, arg = cache
        return ops._batch_max_pool_backward(dy, arg, x_shape, self.pool_size, self.strides), {}


class Flatten(Layer):
    kind = "flatten"

    def _infer_output_shape(self):
        return (int(np.prod(self.input_shape)),)

    def forward(self, params, x, training=False, rng=None):
        return x.reshape(x.shape[0], -1), x.shape

    def backward(self, params, cache, dy, need_dx=True):
        return dy.reshape(cache), {}


class Dense(Layer):
    kind = "dense"
    weight_names = ("kernel",)

    def _infer_output_shape(self):
        if len(self.input_shape) != 1:
            raise ShapeError(f"dense needs a flat input, got {self.input_shape} (insert a flatten layer)")
        self.units = int(self.hyper["units"])
        return (self.units,)

    def param_shapes(self):
        return {"kernel": (self.input_shape[0], self.units), "bias": (self.units,)}

    def init_params(self, rng):
        d = self.input_shape[0]
        return {
            "kernel": glorot_uniform(rng, (d, self.units), d, self.units),
            "bias": np.zeros(self.units, dtype=np.float32),
        }

    def forward(self, params, x, training=False, rng=None):
        return x @ params["kernel"] + params["bias"], x

    def backward(self, params, cache, dy, need_dx=True):
        x = cache
        return dy @ params["kernel"].T, {"kernel": x.T @ dy, "bias": dy.sum(axis=0)}


class LSTM(Layer):
    """LSTM returning every hidden state.

    A 3-D ``H x W x C`` input (a conv feature map) is read with the width axis
    as time, giving ``W`` steps of ``H * C`` features.
    """

    kind = "lstm"
    weight_names = ("kernel", "recurrent")

    def _infer_output_shape(self):
        if len(self.input_shape) == 3:
            h, w, c = self.input_shape
            self.steps, self.features = w, h * c
        elif len(self.input_shape) == 2:
            self.steps, self.features = self.input_shape
        else:
            raise ShapeError(f"lstm needs a T x d or H x W x C input, got {self.input_shape}")
        self.units = int(self.hyper["units"])
        return (self.steps, self.units)

    def param_shapes(self):
        u = self.units
        return {"kernel": (self.features, 4 * u), "recurrent": (u, 4 * u), "bias": (4 * u,)}

    def init_params(self, rng):
        u = self.units
        return {
            "kernel": glorot_uniform(rng, (self.features, 4 * u), self.features, 4 * u),
            "recurrent": glorot_uniform(rng, (u, 4 * u), u, 4 * u),
            "bias": np.zeros(4 * u, dtype=np.float32),
        }

    def _to_sequence(self, x):
        if x.ndim == 4:
            n, h, w, c = x.shape
            return x.transpose(0, 2, 1, 3).reshape(n, w, h * c)
        return x

    def forward(self, params, x, training=False, rng=None):
        seq = self._to_sequence(x)
        hs, cache = ops._batch_lstm(seq, params["kernel"], params["recurrent"], params["bias"])
        return hs, (x.shape, cache)

    def backward(self, params, cache, dy, need_dx=True):
        x_shape, inner = cache
        dx, dk, dr, db = ops._batch_lstm_backward(dy, params["kernel"], params["recurrent"], inner)
        if len(x_shape) == 4:
            n, h, w, c = x_shape
            dx = dx.reshape(n, w, h, c).transpose(0, 2, 1, 3)
        return dx, {"kernel": dk, "recurrent": dr, "bias": db}


class Attention(Layer):
    kind = "attention"
    weight_names = ("score_matrix", "score_vector")

    def _infer_output_shape(self):
        if len(self.input_shape) != 2:
            raise ShapeError(f"attention needs a T x h input, got {self.input_shape}")
        self.width = self.input_shape[1]
        self.units = int(self.hyper.get("units", self.width))
        return (self.width,)

    def param_shapes(self):
        return {"score_matrix": (self.width, self.units), "score_vector": (self.units,)}

    def init_params(self, rng):
        return {
            "score_matrix": glorot_uniform(rng, (self.width, self.units), self.width, self.units),
            "score_vector": glorot_uniform(rng, (self.units,), self.units, 1),
        }

    def forward(self, params, x, training=False, rng=None):
        return ops._batch_attention(x, params["score_matrix"], params["score_vector"])

    def backward(self, params, cache, dy, need_dx=True):
        dx, dm, dv = ops._batch_attention_backward(dy, params["score_matrix"], params["score_vector"], cache)
        return dx, {"score_matrix": dm, "score_vector": dv}


class Dropout(Layer):
    """Inverted dropout; identity unless ``training`` is set."""

    kind = "dropout"

    def _infer_output_shape(self):
        self.rate = float(self.hyper.get("rate", 0.5))
        if not 0.0 <= self.rate < 1.0:
            raise ConfigError(f"{self.name}: dropout rate must lie in [0, 1), got {self.rate}")
        return self.input_shape

    def forward(self, params, x, training=False, rng=None):
        if not training or self.rate == 0.0:
            return x, None
        keep = (rng.random(x.shape) >= self.rate).astype(x.dtype) / (1.0 - self.rate)
        return x * keep, keep

    def backward(self, params, cache, dy, need_dx=True):
        return (dy if cache is None else dy * cache), {}


class Activation(Layer):
    kind = "activation"

    def _infer_output_shape(self):
        self.function = self.hyper.get("function", "relu")
        if self.function not in ACTIVATIONS:
            raise ConfigError(f"{self.name}: unknown activation {self.function!r}")
        return self.input_shape

    def forward(self, params, x, training=False, rng=None):
        if self.function == "relu":
            y = ops.relu(x)
        elif self.function == "sigmoid":
            y = ops.sigmoid(x)
        elif self.function == "tanh":
            y = np.tanh(x)
        else:
            y = x
        return y, (x, y)

    def backward(self, params, cache, dy, need_dx=True):
        x, y = cache
        if self.function == "relu":
            return dy * (x > 0), {}
        if self.function == "sigmoid":
            return dy * y * (1 - y), {}
        if self.function == "tanh":
            return dy * (1 - y**2), {}
        return dy, {}


LAYER_TYPES = {cls.kind: cls for cls in (Conv2D, MaxPool, Flatten, Dense, LSTM, Attention, Dropout, Activation)}
