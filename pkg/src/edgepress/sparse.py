"""CSR storage and sparse execution of pruned dense layers."""

from dataclasses import dataclass

import numpy as np

from .exceptions import ParameterError, ShapeError
from .tensor import _kernels

DENSITY_THRESHOLD = 0.4
INDEX_LIMIT = 2**32 - 1


@dataclass(frozen=True)
class CsrMatrix:
    rows: int
    cols: int
    row_ptr: np.ndarray
    col_idx: np.ndarray
    values: np.ndarray

    @property
    def shape(self):
        return (self.rows, self.cols)

    @property
    def nnz(self):
        return int(self.row_ptr[-1])

    @property
    def density(self):
        return self.nnz / (self.rows * self.cols) if self.rows * self.cols else 0.0

    def validate(self):
        # signed copies so a decreasing unsigned pointer cannot wrap around
        rp, ci = np.asarray(self.row_ptr, np.int64), np.asarray(self.col_idx, np.int64)
        if rp.shape != (self.rows + 1,) or rp[0] != 0 or rp[-1] != len(ci) or np.any(np.diff(rp) < 0):
            raise ShapeError("row_ptr must start at 0, end at nnz and be non-decreasing")
        if len(self.values) != len(ci):
            raise ShapeError(f"{len(ci)} column indices but {len(self.values)} values")
        if np.any(self.values == 0):
            raise ShapeError("CSR values must not store explicit zeros")
        for r in range(self.rows):
            seg = ci[rp[r] : rp[r + 1]]
            if len(seg) and (np.any(np.diff(seg) <= 0) or seg[0] < 0 or seg[-1] >= self.cols):
                raise ShapeError(f"row {r}: column indices must be strictly increasing within [0, {self.cols})")
        return self


def to_csr(dense):
    """Lossless CSR copy of a 2-D array (zeros are dropped)."""
    a = np.asarray(dense)
    if a.ndim != 2:
        raise ShapeError(f"to_csr needs a 2-D array, got shape {a.shape}")
    if a.size > INDEX_LIMIT:
        raise ShapeError(f"matrix of shape {a.shape} is too large for 32-bit CSR indices")
    rows, cols = np.nonzero(a)
    # unsigned indices spare numba the negative-index wraparound check in the matvec loop
    row_ptr = np.zeros(a.shape[0] + 1, dtype=np.uint32)
    np.cumsum(np.bincount(rows, minlength=a.shape[0]), out=row_ptr[1:])
    return CsrMatrix(a.shape[0], a.shape[1], row_ptr, cols.astype(np.uint32), a[rows, cols].copy())


def from_csr(m, dtype=None):
    out = np.zeros(m.shape, dtype=dtype or m.values.dtype)
    rows = np.repeat(np.arange(m.rows), np.diff(m.row_ptr))
    out[rows, m.col_idx] = m.values
    return out


def csr_matvec(a, x):
    """``a @ x`` with float64 accumulation."""
    x = np.asarray(x)
    if x.ndim != 1 or len(x) != a.cols:
        raise ShapeError(f"matrix has {a.cols} columns but the vector has shape {x.shape}")
    return _kernels.csr_matvec(a.row_ptr, a.col_idx, a.values, np.ascontiguousarray(x))


class SparseModel:
    """A :class:`Model` whose sufficiently sparse dense layers run through CSR.

    Each converted kernel is stored transposed (units x inputs) so a forward
    step is one CSR matrix-vector product per sample.
    """

    def __init__(self, model, csr, conversions, density_threshold):
        self.model = model
        self.csr = csr
        self.conversions = conversions
        self.density_threshold = density_threshold

    @property
    def input_shape(self):
        return self.model.input_shape

    @property
    def converted(self):
        return [c["layer"] for c in self.conversions if c["converted"]]

    def _dense_sparse(self, layer, h):
        m = self.csr[layer.name]
        bias = self.model.params[f"{layer.name}/bias"]
        out = np.empty((h.shape[0], m.rows), dtype=h.dtype)
        for i in range(h.shape[0]):
            out[i] = csr_matvec(m, h[i])
        return out + bias

    def predict_proba(self, X, batch_size=256):
        X = self.model._check_input(X)
        h = X
        for layer in self.model.layers:
            if layer.name in self.csr:
                h = self._dense_sparse(layer, h)
            else:
                h, _ = layer.forward(self.model.layer_params(layer), h)
        return h.reshape(len(X)).astype(np.float64)

    def forward(self, x):
        x = np.asarray(x)
        if x.shape != self.input_shape:
            raise ShapeError(f"expected input of shape {self.input_shape}, got {x.shape}")
        return float(self.predict_proba(x[None])[0])

    def __repr__(self):
        return f"SparseModel(converted={self.converted}, threshold={self.density_threshold})"


def sparsify_model(model, density_threshold=DENSITY_THRESHOLD):
    """Convert dense layers whose kernel density is at most ``density_threshold``.

    Conv kernels stay dense. The report in ``.conversions`` lists every dense
    layer with its density and whether it was converted.
    """
    if not 0.0 <= density_threshold <= 1.0:
        raise ParameterError(f"density_threshold must lie in [0, 1], got {density_threshold}")
    csr, conversions = {}, []
    for layer in model.layers:
        if layer.kind != "dense":
            continue
        w = model.params[f"{layer.name}/kernel"]
        density = np.count_nonzero(w) / w.size
        converted = density <= density_threshold
        if converted:
            csr[layer.name] = to_csr(np.ascontiguousarray(w.T))
        conversions.append({"layer": layer.name, "density": float(density), "converted": bool(converted)})
    return SparseModel(model, csr, conversions, density_threshold)
