"""Dense numerical kernels.

Public functions take a single sample (``H x W x C`` images, ``T x d``
sequences). The underscored ``_batch_*`` helpers operate on a leading batch
axis and also return whatever the matching backward pass needs.
"""

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..exceptions import ParameterError, ShapeError
from . import _kernels

BCE_EPSILON = 1e-7


def _pair(value, name):
    if np.isscalar(value):
        value = (int(value), int(value))
    value = tuple(int(v) for v in value)
    if len(value) != 2:
        raise ParameterError(f"{name} must be an int or a pair, got {value!r}")
    return value


def matmul(a, b):
    """Matrix product with an explicit shape check."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul expects 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"inner dimensions differ: {a.shape} x {b.shape}")
    return a @ b


def sigmoid(x):
    # split by sign so exp never overflows
    x = np.asarray(x)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def relu(x):
    return np.maximum(x, 0)


# --------------------------------------------------------------------------
# convolution


def same_padding(size, kernel, stride):
    """(before, after) padding for TF-style ``same`` convolution along one axis."""
    out = -(-size // stride)
    total = max((out - 1) * stride + kernel - size, 0)
    return total // 2, total - total // 2


def conv_output_size(size, kernel, stride, padding):
    if padding == "same":
        lo, hi = same_padding(size, kernel, stride)
        size = size + lo + hi
    elif padding != "valid":
        raise ParameterError(f"padding must be 'valid' or 'same', got {padding!r}")
    if kernel > size:
        raise ShapeError(f"kernel extent {kernel} exceeds padded input extent {size}")
    return (size - kernel) // stride + 1


def _pad_input(x, kh, kw, stride, padding):
    if padding == "valid":
        return x, (0, 0, 0, 0)
    top, bottom = same_padding(x.shape[1], kh, stride[0])
    left, right = same_padding(x.shape[2], kw, stride[1])
    if top or bottom or left or right:
        x = np.pad(x, ((0, 0), (top, bottom), (left, right), (0, 0)))
    return x, (top, bottom, left, right)


def _im2col(xp, kh, kw, stride, out_h, out_w):
    # rows are output positions, columns run over (kh, kw, C)
    win = sliding_window_view(xp, (kh, kw), axis=(1, 2))[:, : out_h * stride[0] : stride[0], : out_w * stride[1] : stride[1]]
    return win.transpose(0, 1, 2, 4, 5, 3).reshape(-1, kh * kw * xp.shape[3])


def _batch_conv2d(x, kernel, bias, stride, padding):
    n, h, w, c = x.shape
    kh, kw, kc, f = kernel.shape
    if kc != c:
        raise ShapeError(f"kernel expects {kc} input channels, input has {c}")
    out_h = conv_output_size(h, kh, stride[0], padding)
    out_w = conv_output_size(w, kw, stride[1], padding)
    xp, pads = _pad_input(x, kh, kw, stride, padding)
    cols = _im2col(xp, kh, kw, stride, out_h, out_w)
    y = cols @ kernel.reshape(kh * kw * c, f)
    if bias is not None:
        y += bias
    cache = (cols, xp.shape, pads, out_h, out_w)
    return y.reshape(n, out_h, out_w, f), cache


def _batch_conv2d_backward(dy, kernel, cache, stride, need_dx=True):
    cols, xp_shape, pads, out_h, out_w = cache
    kh, kw, c, f = kernel.shape
    dy2 = dy.reshape(-1, f)
    dkernel = (cols.T @ dy2).reshape(kernel.shape)
    dbias = dy2.sum(axis=0)
    if not need_dx:
        return None, dkernel, dbias
    if stride == (1, 1):
        # full correlation of dy with the rotated kernel
        dyp = np.pad(dy, ((0, 0), (kh - 1, kh - 1), (kw - 1, kw - 1), (0, 0)))
        rot = kernel[::-1, ::-1].transpose(0, 1, 3, 2).reshape(kh * kw * f, c)
        dxp = (_im2col(dyp, kh, kw, (1, 1), xp_shape[1], xp_shape[2]) @ rot).reshape(xp_shape)
    else:
        dcols = (dy2 @ kernel.reshape(-1, f).T).reshape(xp_shape[0], out_h, out_w, kh, kw, c)
        dxp = np.zeros(xp_shape, dtype=dy.dtype)
        sh, sw = stride
        for i in range(kh):
            for j in range(kw):
                dxp[:, i : i + sh * out_h : sh, j : j + sw * out_w : sw, :] += dcols[:, :, :, i, j, :]
    top, bottom, left, right = pads
    dx = dxp[:, top : xp_shape[1] - bottom, left : xp_shape[2] - right, :]
    return dx, dkernel, dbias


def conv2d_forward(x, kernels, stride=(1, 1), padding="valid", bias=None):
    """Cross-correlate one ``H x W x C`` input with ``kh x kw x C x F`` kernels."""
    x = np.asarray(x)
    kernels = np.asarray(kernels)
    if x.ndim == 2:
        x = x[:, :, None]
    if x.ndim != 3 or kernels.ndim != 4:
        raise ShapeError(f"conv2d expects HxWxC input and 4-D kernels, got {x.shape}, {kernels.shape}")
    y, _ = _batch_conv2d(x[None], kernels, bias, _pair(stride, "stride"), padding)
    return y[0]


# --------------------------------------------------------------------------
# pooling


def pool_output_size(size, window, stride):
    if window > size:
        raise ShapeError(f"pool window {window} exceeds input extent {size}")
    return (size - window) // stride + 1


def _batch_max_pool(x, window, stride):
    """Pooled output plus the in-window index of each (first) maximum."""
    n, h, w, c = x.shape
    ph, pw = window
    sh, sw = stride
    out_h = pool_output_size(h, ph, sh)
    out_w = pool_output_size(w, pw, sw)
    return _kernels.max_pool_forward(np.ascontiguousarray(x), ph, pw, sh, sw, out_h, out_w)


def _batch_max_pool_backward(dy, arg, x_shape, window, stride):
    return _kernels.max_pool_backward(np.ascontiguousarray(dy), arg, x_shape, window[1], stride[0], stride[1])


def max_pool(x, window, stride=None):
    """Max pooling of an ``H x W x F`` input (``valid`` windows)."""
    window = _pair(window, "window")
    stride = window if stride is None else _pair(stride, "stride")
    if min(window) < 1 or min(stride) < 1:
        raise ParameterError(f"pool window and stride must be positive, got {window}, {stride}")
    x = np.asarray(x)
    squeeze = x.ndim == 2
    if squeeze:
        x = x[:, :, None]
    out = _batch_max_pool(x[None], window, stride)[0][0]
    return out[:, :, 0] if squeeze else out


# --------------------------------------------------------------------------
# recurrent + attention


def _batch_lstm(x, kernel, recurrent, bias):
    """Run an LSTM over ``x`` of shape (N, T, d). Gate order is i, f, g, o."""
    n, t_len, d = x.shape
    if kernel.shape[0] != d:
        raise ShapeError(f"LSTM kernel expects input width {kernel.shape[0]}, got {d}")
    units = recurrent.shape[0]
    if kernel.shape[1] != 4 * units or recurrent.shape != (units, 4 * units) or bias.shape != (4 * units,):
        raise ShapeError(
            f"inconsistent LSTM parameters: kernel {kernel.shape}, recurrent {recurrent.shape}, bias {bias.shape}"
        )
    dtype = kernel.dtype
    xz = (x.reshape(n * t_len, d) @ kernel).reshape(n, t_len, 4 * units) + bias
    h = np.zeros((n, units), dtype=dtype)
    c = np.zeros((n, units), dtype=dtype)
    hs = np.empty((n, t_len, units), dtype=dtype)
    cs = np.empty((n, t_len, units), dtype=dtype)
    gates = np.empty((n, t_len, 4 * units), dtype=dtype)
    for t in range(t_len):
        z = xz[:, t] + h @ recurrent
        i = sigmoid(z[:, :units])
        f = sigmoid(z[:, units : 2 * units])
        g = np.tanh(z[:, 2 * units : 3 * units])
        o = sigmoid(z[:, 3 * units :])
        c = f * c + i * g
        h = o * np.tanh(c)
        gates[:, t] = np.concatenate([i, f, g, o], axis=1)
        hs[:, t] = h
        cs[:, t] = c
    return hs, (x, hs, cs, gates)


def _batch_lstm_backward(dhs, kernel, recurrent, cache):
    x, hs, cs, gates = cache
    n, t_len, d = x.shape
    units = recurrent.shape[0]
    dkernel = np.zeros_like(kernel)
    drecurrent = np.zeros_like(recurrent)
    dbias = np.zeros(4 * units, dtype=kernel.dtype)
    dx = np.empty_like(x)
    dh_next = np.zeros((n, units), dtype=kernel.dtype)
    dc_next = np.zeros((n, units), dtype=kernel.dtype)
    for t in reversed(range(t_len)):
        i = gates[:, t, :units]
        f = gates[:, t, units : 2 * units]
        g = gates[:, t, 2 * units : 3 * units]
        o = gates[:, t, 3 * units :]
        c = cs[:, t]
        c_prev = cs[:, t - 1] if t > 0 else np.zeros_like(c)
        h_prev = hs[:, t - 1] if t > 0 else np.zeros_like(c)
        tanh_c = np.tanh(c)
        dh = dhs[:, t] + dh_next
        dc = dc_next + dh * o * (1 - tanh_c**2)
        dz = np.concatenate(
            [
                dc * g * i * (1 - i),
                dc * c_prev * f * (1 - f),
                dc * i * (1 - g**2),
                dh * tanh_c * o * (1 - o),
            ],
            axis=1,
        )
        dkernel += x[:, t].T @ dz
        drecurrent += h_prev.T @ dz
        dbias += dz.sum(axis=0)
        dx[:, t] = dz @ kernel.T
        dh_next = dz @ recurrent.T
        dc_next = dc * f
    return dx, dkernel, drecurrent, dbias


def lstm_forward(seq, kernel, recurrent, bias):
    """All hidden states of an LSTM over a ``T x d`` sequence (zero initial state)."""
    seq = np.asarray(seq)
    if seq.ndim != 2 or seq.shape[0] < 1:
        raise ShapeError(f"lstm_forward expects a non-empty T x d sequence, got {seq.shape}")
    hs, _ = _batch_lstm(seq[None], np.asarray(kernel), np.asarray(recurrent), np.asarray(bias))
    return hs[0]


def _softmax(e, axis=-1):
    e = e - e.max(axis=axis, keepdims=True)
    w = np.exp(e)
    return w / w.sum(axis=axis, keepdims=True)


def _batch_attention(hidden, score_matrix, score_vector):
    u = np.tanh(hidden @ score_matrix)  # (N, T, a)
    e = u @ score_vector  # (N, T)
    alpha = _softmax(e, axis=1)
    out = np.einsum("nt,nth->nh", alpha, hidden)
    return out, (hidden, u, alpha)


def _batch_attention_backward(dout, score_matrix, score_vector, cache):
    hidden, u, alpha = cache
    dhidden = alpha[:, :, None] * dout[:, None, :]
    dalpha = np.einsum("nth,nh->nt", hidden, dout)
    de = alpha * (dalpha - (alpha * dalpha).sum(axis=1, keepdims=True))
    dscore_vector = np.einsum("nta,nt->a", u, de)
    dpre = de[:, :, None] * score_vector * (1 - u**2)
    dscore_matrix = np.einsum("nth,nta->ha", hidden, dpre)
    dhidden += dpre @ score_matrix.T
    return dhidden, dscore_matrix, dscore_vector


def attention_pool(hidden, score_matrix, score_vector, return_weights=False):
    """Additive attention pooling of ``T x h`` hidden states into one ``h`` vector.

    Scores are ``e_t = v . tanh(h_t W)``; the output is the softmax(e)-weighted
    sum of the hidden states.
    """
    hidden = np.asarray(hidden)
    if hidden.ndim != 2 or hidden.shape[0] < 1:
        raise ShapeError(f"attention_pool expects a non-empty T x h input, got {hidden.shape}")
    score_matrix = np.asarray(score_matrix)
    score_vector = np.asarray(score_vector)
    if score_matrix.shape[0] != hidden.shape[1] or score_vector.shape != (score_matrix.shape[1],):
        raise ShapeError(
            f"attention parameters {score_matrix.shape}/{score_vector.shape} do not fit hidden width {hidden.shape[1]}"
        )
    out, (_, _, alpha) = _batch_attention(hidden[None], score_matrix, score_vector)
    if return_weights:
        return out[0], alpha[0]
    return out[0]


# --------------------------------------------------------------------------
# losses and penalties


def bce_loss(p, y, eps=BCE_EPSILON):
    """Binary cross entropy with ``p`` clipped into ``[eps, 1 - eps]``.

    Works elementwise on arrays; returns a float for scalar inputs.
    """
    p = np.clip(np.asarray(p, dtype=np.float64), eps, 1.0 - eps)
    y = np.asarray(y, dtype=np.float64)
    loss = -(y * np.log(p) + (1.0 - y) * np.log1p(-p))
    return float(loss) if loss.ndim == 0 else loss


@dataclass(frozen=True)
class ElasticNetCoeffs:
    """L1 + L2 penalty on a kernel plus an L2 penalty on its bias."""

    lambda_l1_weight: float = 0.0
    lambda_l2_weight: float = 0.0
    lambda_l2_bias: float = 0.0

    def __post_init__(self):
        for name in ("lambda_l1_weight", "lambda_l2_weight", "lambda_l2_bias"):
            value = getattr(self, name)
            if not np.isfinite(value) or value < 0:
                raise ParameterError(f"{name} must be a non-negative real, got {value!r}")

    def to_dict(self):
        return {"l1": self.lambda_l1_weight, "l2": self.lambda_l2_weight, "bias_l2": self.lambda_l2_bias}

    @classmethod
    def from_dict(cls, d):
        return cls(float(d.get("l1", 0.0)), float(d.get("l2", 0.0)), float(d.get("bias_l2", 0.0)))


def elastic_net_penalty(w, coeffs, bias=None):
    """``l1 * sum|w| + l2 * sum w^2`` plus ``bias_l2 * sum b^2`` when a bias is given."""
    w = np.asarray(w, dtype=np.float64)
    total = coeffs.lambda_l1_weight * np.abs(w).sum() + coeffs.lambda_l2_weight * np.square(w).sum()
    if bias is not None:
        total += coeffs.lambda_l2_bias * np.square(np.asarray(bias, dtype=np.float64)).sum()
    return float(total)


def elastic_net_gradient(w, coeffs):
    return (coeffs.lambda_l1_weight * np.sign(w) + 2.0 * coeffs.lambda_l2_weight * w).astype(w.dtype)
