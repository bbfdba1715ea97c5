"""Compiled loops for operations that vectorise poorly in numpy."""

import numpy as np
from numba import njit


@njit(cache=True)
def max_pool_forward(x, ph, pw, sh, sw, out_h, out_w):
    n, _, _, c = x.shape
    out = np.empty((n, out_h, out_w, c), dtype=x.dtype)
    arg = np.empty((n, out_h, out_w, c), dtype=np.int32)
    for b in range(n):
        for i in range(out_h):
            for j in range(out_w):
                for k in range(c):
                    best = x[b, i * sh, j * sw, k]
                    where = 0
                    for di in range(ph):
                        for dj in range(pw):
                            v = x[b, i * sh + di, j * sw + dj, k]
                            if v > best:
                                best = v
                                where = di * pw + dj
                    out[b, i, j, k] = best
                    arg[b, i, j, k] = where
    return out, arg


@njit(cache=True)
def max_pool_backward(dy, arg, x_shape, pw, sh, sw):
    n, out_h, out_w, c = dy.shape
    dx = np.zeros(x_shape, dtype=dy.dtype)
    for b in range(n):
        for i in range(out_h):
            for j in range(out_w):
                for k in range(c):
                    a = arg[b, i, j, k]
                    dx[b, i * sh + a // pw, j * sw + a % pw, k] += dy[b, i, j, k]
    return dx


# integer kernels for the 8-bit inference path; operands are zero-point
# centred int16 values, products accumulate in int32


@njit(cache=True)
def _conv_chw_int_unit(xq, wq, out_h, out_w):
    # unit stride keeps the inner loop contiguous so it vectorises
    f, c, kh, kw = wq.shape
    acc = np.zeros((f, out_h, out_w), dtype=np.int32)
    for o in range(f):
        for k in range(c):
            for di in range(kh):
                for dj in range(kw):
                    wv = np.int32(wq[o, k, di, dj])
                    if wv == 0:
                        continue
                    for i in range(out_h):
                        for j in range(out_w):
                            acc[o, i, j] += wv * np.int32(xq[k, i + di, j + dj])
    return acc


@njit(cache=True)
def conv_chw_int(xq, wq, out_h, out_w, sh, sw):
    """``xq`` is (C, Hp, Wp) padded input, ``wq`` is (F, C, kh, kw)."""
    f, c, kh, kw = wq.shape
    if sh == 1 and sw == 1:
        return _conv_chw_int_unit(xq, wq, out_h, out_w)
    acc = np.zeros((f, out_h, out_w), dtype=np.int32)
    for o in range(f):
        for k in range(c):
            for di in range(kh):
                for dj in range(kw):
                    wv = np.int32(wq[o, k, di, dj])
                    if wv == 0:
                        continue
                    for i in range(out_h):
                        r = i * sh + di
                        for j in range(out_w):
                            acc[o, i, j] += wv * np.int32(xq[k, r, j * sw + dj])
    return acc


@njit(cache=True)
def dense_int(a, wq):
    """``a`` is (d,), ``wq`` is (d, u); zero activations are skipped."""
    d, u = wq.shape
    acc = np.zeros(u, dtype=np.int32)
    for k in range(d):
        av = np.int32(a[k])
        if av == 0:
            continue
        for o in range(u):
            acc[o] += av * np.int32(wq[k, o])
    return acc


@njit(cache=True)
def max_pool_chw(x, ph, pw, sh, sw, out_h, out_w):
    c = x.shape[0]
    out = np.empty((c, out_h, out_w), dtype=x.dtype)
    for k in range(c):
        for i in range(out_h):
            for j in range(out_w):
                best = x[k, i * sh, j * sw]
                for di in range(ph):
                    for dj in range(pw):
                        v = x[k, i * sh + di, j * sw + dj]
                        if v > best:
                            best = v
                out[k, i, j] = best
    return out


@njit(cache=True)
def csr_matvec(row_ptr, col_idx, values, x):
    rows = row_ptr.shape[0] - 1
    y = np.zeros(rows, dtype=np.float64)
    for r in range(rows):
        s = 0.0
        for p in range(row_ptr[r], row_ptr[r + 1]):
            s += values[p] * x[col_idx[p]]
        y[r] = s
    return y


@njit(cache=True)
def quantize_activation(a):
    """Per-tensor 8-bit min-max quantization of ``a`` (range widened to 0), centred on the zero point."""
    flat = a.reshape(-1)
    lo = 0.0
    hi = 0.0
    for v in flat:
        if v < lo:
            lo = v
        elif v > hi:
            hi = v
    out = np.zeros(flat.shape[0], dtype=np.int16)
    if hi == lo:
        return out.reshape(a.shape), 1.0
    scale = (hi - lo) / 255.0
    zp = np.rint(-lo * 255.0 / (hi - lo))
    inv = 1.0 / scale
    for i in range(flat.shape[0]):
        q = np.rint(flat[i] * inv)
        if q < -zp:
            q = -zp
        elif q > 255.0 - zp:
            q = 255.0 - zp
        out[i] = np.int16(q)
    return out.reshape(a.shape), scale


@njit(cache=True)
def quantize_activation_padded(a, top, bottom, left, right):
    """:func:`quantize_activation` for a (C, H, W) map, written into a zero-padded buffer."""
    c, h, w = a.shape
    q, scale = quantize_activation(a)
    out = np.zeros((c, h + top + bottom, w + left + right), dtype=np.int16)
    out[:, top : top + h, left : left + w] = q
    return out, scale
