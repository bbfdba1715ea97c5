"""scikit-learn transformers over the feature pipeline."""

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ..exceptions import DataError, ShapeError
from .config import FeatureConfig, MelspecConfig, MfccConfig
from .dataset import extract_features
from .wav import AudioSignal


def _as_signals(X, sample_rate):
    if isinstance(X, AudioSignal):
        return [X]
    out = []
    for x in X:
        out.append(x if isinstance(x, AudioSignal) else AudioSignal(np.asarray(x, dtype=np.float32), sample_rate))
    if not out:
        raise DataError("no signals to transform")
    return out


class _FeatureTransformer(TransformerMixin, BaseEstimator):
    mode = None

    def __init__(self, sample_rate=22050):
        self.sample_rate = sample_rate

    def _config(self):
        raise NotImplementedError

    def fit(self, X, y=None):
        self.config_ = self._config()
        return self

    def transform(self, X):
        check_is_fitted(self, "config_")
        return np.stack([extract_features(s, self.config_) for s in _as_signals(X, self.sample_rate)])


class MfccTransformer(_FeatureTransformer):
    """Waveforms to ``(n, n_mfcc, frames)`` MFCC stacks; stateless."""

    def __init__(self, n_mfcc=15, frame=2048, hop=512, target_len=154350, sample_rate=22050):
        super().__init__(sample_rate)
        self.n_mfcc = n_mfcc
        self.frame = frame
        self.hop = hop
        self.target_len = target_len

    def _config(self):
        return FeatureConfig("mfcc", mfcc=MfccConfig(self.n_mfcc, self.frame, self.hop, self.target_len))


class MelImageTransformer(_FeatureTransformer):
    """Waveforms to ``(n, out_h, out_w, channels)`` normalised mel images; stateless."""

    def __init__(self, n_mel=128, hop=128, n_fft=512, fmax=8000.0, target_len=156027, out_h=39, out_w=88,
                 channels=3, sample_rate=22050):
        super().__init__(sample_rate)
        self.n_mel = n_mel
        self.hop = hop
        self.n_fft = n_fft
        self.fmax = fmax
        self.target_len = target_len
        self.out_h = out_h
        self.out_w = out_w
        self.channels = channels

    def _config(self):
        cfg = MelspecConfig(n_mel=self.n_mel, hop=self.hop, fmax=self.fmax, n_fft=self.n_fft,
                            target_len=self.target_len, out_h=self.out_h, out_w=self.out_w, channels=self.channels)
        return FeatureConfig("melspec", melspec=cfg)


class FeatureStandardizer(TransformerMixin, BaseEstimator):
    """Zero-mean unit-variance scaling with statistics from the training split only.

    ``axis`` is the feature axis of each sample that keeps its own statistics
    (for MFCC stacks, axis 0 is the coefficient). ``None`` pools everything.
    """

    def __init__(self, axis=0, eps=1e-6):
        self.axis = axis
        self.eps = eps

    def _reduce_axes(self, X):
        if self.axis is None:
            return tuple(range(X.ndim))
        keep = self.axis % (X.ndim - 1) + 1
        return tuple(a for a in range(X.ndim) if a != keep)

    def fit(self, X, y=None):
        X = np.asarray(X, dtype=np.float64)
        if X.ndim < 2 or len(X) == 0:
            raise ShapeError(f"expected a non-empty batch of samples, got shape {X.shape}")
        axes = self._reduce_axes(X)
        self.mean_ = X.mean(axis=axes, keepdims=True)[0]
        self.scale_ = X.std(axis=axes, keepdims=True)[0] + self.eps
        self.sample_shape_ = X.shape[1:]
        return self

    def transform(self, X):
        check_is_fitted(self, "mean_")
        X = np.asarray(X)
        if X.shape[1:] != self.sample_shape_:
            raise ShapeError(f"fitted on samples of shape {self.sample_shape_}, got {X.shape[1:]}")
        return ((X - self.mean_) / self.scale_).astype(np.float32)

    def inverse_transform(self, X):
        check_is_fitted(self, "mean_")
        return (np.asarray(X) * self.scale_ + self.mean_).astype(np.float32)

    def state(self):
        """Fitted statistics as float32 arrays, for storage in a tensor container."""
        check_is_fitted(self, "mean_")
        return {
            "mean": self.mean_.astype(np.float32),
            "scale": self.scale_.astype(np.float32),
            "sample_shape": np.asarray(self.sample_shape_, dtype=np.float32),
        }

    @classmethod
    def from_state(cls, state, axis=0):
        obj = cls(axis=axis)
        obj.mean_ = np.asarray(state["mean"], dtype=np.float64)
        obj.scale_ = np.asarray(state["scale"], dtype=np.float64)
        obj.sample_shape_ = tuple(int(d) for d in np.asarray(state["sample_shape"]))
        return obj
