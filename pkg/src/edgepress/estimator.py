"""scikit-learn estimators wrapping training, pruning and quantization.

These are thin adapters over the functional core so the pipeline composes
with ``sklearn.pipeline.Pipeline``, ``clone`` and ``get_params``.
"""

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, clone
from sklearn.utils.validation import check_is_fitted

from .exceptions import DataError, ShapeError
from .metrics import auc_roc
from .model import build_model, load_config, make_optimizer, train
from .pruning import PruningSchedule, prune_fine_tune
from .quantization import quantize_model


def check_inputs(X, y=None, input_shape=None):
    """Validate a batch of fixed-shape samples and optional 0/1 labels."""
    X = np.asarray(X, dtype=np.float32)
    if X.ndim < 2:
        raise ShapeError(f"expected a batch of samples, got an array of shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise DataError("inputs contain NaN or infinite values")
    if input_shape is not None and X.shape[1:] != tuple(input_shape):
        raise ShapeError(f"expected samples of shape {tuple(input_shape)}, got {X.shape[1:]}")
    if y is None:
        return X
    y = np.asarray(y).reshape(-1)
    if len(y) != len(X):
        raise DataError(f"{len(X)} samples but {len(y)} labels")
    if not set(np.unique(y).tolist()) <= {0, 1}:
        raise DataError(f"labels must be 0/1, got {sorted(set(np.unique(y).tolist()))}")
    return X, y.astype(np.int64)


class _ProbaMixin(ClassifierMixin):
    def _positive_proba(self, X):
        raise NotImplementedError

    def predict_proba(self, X):
        p = self._positive_proba(X)
        return np.column_stack([1.0 - p, p])

    def decision_function(self, X):
        return self._positive_proba(X)

    def predict(self, X):
        return (self._positive_proba(X) >= 0.5).astype(np.int64)

    def auc(self, X, y):
        X, y = check_inputs(X, y)
        return auc_roc(self._positive_proba(X), y)


class CoughNetClassifier(_ProbaMixin, BaseEstimator):
    """Train a network from a model config; unset options come from the config."""

    def __init__(self, config="cnn_coswara", epochs=None, batch_size=None, optimizer=None, learning_rate=None,
                 seed=None):
        self.config = config
        self.epochs = epochs
        self.batch_size = batch_size
        self.optimizer = optimizer
        self.learning_rate = learning_rate
        self.seed = seed

    def _resolved(self):
        cfg = load_config(self.config)
        t = cfg.training
        if self.seed is not None:
            cfg.seed = int(self.seed)
        return cfg, {
            "epochs": int(self.epochs if self.epochs is not None else t.get("epochs", 10)),
            "batch_size": int(self.batch_size if self.batch_size is not None else t.get("batch_size", 32)),
            "optimizer": self.optimizer or t.get("optimizer", "adam"),
            "learning_rate": float(self.learning_rate if self.learning_rate is not None else t.get("learning_rate", 1e-3)),
        }

    def fit(self, X, y, eval_set=None):
        cfg, opts = self._resolved()
        X, y = check_inputs(X, y, cfg.input_shape)
        val = check_inputs(*eval_set, input_shape=cfg.input_shape) if eval_set is not None else None
        model = build_model(cfg)
        opt = make_optimizer(opts["optimizer"], opts["learning_rate"])
        self.model_, self.history_ = train(model, (X, y), val, opt, opts["epochs"], opts["batch_size"], cfg.seed)
        self.classes_ = np.array([0, 1])
        self.n_features_in_ = int(np.prod(cfg.input_shape))
        return self

    def _positive_proba(self, X):
        check_is_fitted(self, "model_")
        return self.model_.predict_proba(check_inputs(X, input_shape=self.model_.input_shape))


def _fitted_model(estimator):
    check_is_fitted(estimator, "model_")
    return estimator.model_


class PrunedClassifier(_ProbaMixin, BaseEstimator):
    """Magnitude-prune a trained network with mask-preserving fine-tuning.

    ``estimator`` is fitted first unless it already is.
    """

    def __init__(self, estimator=None, sparsity=0.9, schedule="polynomial", epochs=10, frequency=100,
                 exclusions=(), seed=None):
        self.estimator = estimator
        self.sparsity = sparsity
        self.schedule = schedule
        self.epochs = epochs
        self.frequency = frequency
        self.exclusions = exclusions
        self.seed = seed

    def fit(self, X, y, eval_set=None):
        base = self.estimator if self.estimator is not None else CoughNetClassifier()
        if not hasattr(base, "model_"):
            base = clone(base).fit(X, y)
        model = base.model_
        X, y = check_inputs(X, y, model.input_shape)
        val = check_inputs(*eval_set, input_shape=model.input_shape) if eval_set is not None else None
        sched = PruningSchedule(self.schedule, float(self.sparsity), frequency=int(self.frequency))
        self.model_, self.report_ = prune_fine_tune(model, (X, y), val, sched, int(self.epochs),
                                                    exclusions=tuple(self.exclusions), seed=self.seed)
        self.estimator_ = base
        self.classes_ = np.array([0, 1])
        return self

    def _positive_proba(self, X):
        model = _fitted_model(self)
        return model.predict_proba(check_inputs(X, input_shape=model.input_shape))


class QuantizedClassifier(_ProbaMixin, BaseEstimator):
    """Zero-shot min-max quantization of a fitted estimator's network.

    ``fit`` needs no data when ``estimator`` is already fitted; otherwise the
    estimator is fitted on ``X, y`` first.
    """

    def __init__(self, estimator=None, bits=8):
        self.estimator = estimator
        self.bits = bits

    def fit(self, X=None, y=None):
        base = self.estimator if self.estimator is not None else CoughNetClassifier()
        if not hasattr(base, "model_"):
            if X is None:
                raise DataError("the wrapped estimator is not fitted; pass X and y")
            base = clone(base).fit(X, y)
        self.model_ = quantize_model(base.model_, int(self.bits))
        self.estimator_ = base
        self.classes_ = np.array([0, 1])
        return self

    def _positive_proba(self, X):
        model = _fitted_model(self)
        return model.predict_proba(check_inputs(X, input_shape=model.input_shape))
