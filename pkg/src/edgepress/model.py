"""Model graphs: configuration, construction, inference and training."""

import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .exceptions import ConfigError, DataError, NumericError, ShapeError
from .metrics import auc_roc
from .tensor import ops
from .tensor.layers import LAYER_TYPES
from .tensor.ops import BCE_EPSILON, ElasticNetCoeffs
from .tensor.optim import OptimizerState, optimizer_step

REFERENCE_CONFIGS = ("cnn_coswara", "cnnlstm_coughvid")


@dataclass
class LayerSpec:
    kind: str
    name: str
    params: dict = field(default_factory=dict)
    regularization: ElasticNetCoeffs | None = None
    prunable: bool | None = None

    def __post_init__(self):
        if self.kind not in LAYER_TYPES:
            raise ConfigError(f"layer {self.name!r}: unknown kind {self.kind!r}")
        if self.prunable is None:
            self.prunable = self._default_prunable()

    def _default_prunable(self):
        # attention scores are left dense by default
        return bool(LAYER_TYPES[self.kind].weight_names) and self.kind != "attention"

    def to_dict(self):
        d = {"kind": self.kind, "name": self.name, **self.params}
        if self.regularization is not None:
            d["regularization"] = self.regularization.to_dict()
        if self.prunable != self._default_prunable():
            d["prunable"] = self.prunable
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        try:
            kind = d.pop("kind")
            name = d.pop("name")
        except KeyError as exc:
            raise ConfigError(f"layer entry missing field {exc}") from None
        reg = d.pop("regularization", None)
        prunable = d.pop("prunable", None)
        return cls(kind, name, d, ElasticNetCoeffs.from_dict(reg) if reg else None, prunable)


@dataclass
class ModelConfig:
    input_shape: tuple
    layers: list
    seed: int = 1234
    training: dict = field(default_factory=dict)
    description: str = ""

    def __post_init__(self):
        self.input_shape = tuple(int(d) for d in self.input_shape)
        if not self.input_shape or min(self.input_shape) < 1:
            raise ConfigError(f"input_shape must be a list of positive dimensions, got {self.input_shape}")
        names = [layer.name for layer in self.layers]
        dupes = sorted({n for n in names if names.count(n) > 1})
        if dupes:
            raise ConfigError(f"layer names must be unique; repeated: {dupes}")

    def to_dict(self, description=True):
        d = {"input_shape": list(self.input_shape), "seed": self.seed}
        if description and self.description:
            d["description"] = self.description
        if self.training:
            d["training"] = dict(self.training)
        d["layers"] = [layer.to_dict() for layer in self.layers]
        return d

    @classmethod
    def from_dict(cls, d):
        try:
            layers = [LayerSpec.from_dict(entry) for entry in d["layers"]]
            return cls(d["input_shape"], layers, int(d.get("seed", 1234)), dict(d.get("training", {})),
                       d.get("description", ""))
        except KeyError as exc:
            raise ConfigError(f"model config missing field {exc}") from None

    def to_json(self, **kwargs):
        return json.dumps(self.to_dict(), **kwargs)


def load_config(source):
    """Load a :class:`ModelConfig` from a dict, a JSON path, or a shipped config name."""
    if isinstance(source, ModelConfig):
        return source
    if isinstance(source, dict):
        return ModelConfig.from_dict(source)
    source = str(source)
    stem = source[:-5] if source.endswith(".json") else source
    if stem in REFERENCE_CONFIGS and not Path(source).exists():
        text = resources.files("edgepress").joinpath("configs").joinpath(f"{stem}.json").read_text()
    else:
        try:
            text = Path(source).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read model config {source!r}: {exc}") from None
    try:
        return ModelConfig.from_dict(json.loads(text))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"model config {source!r} is not valid JSON: {exc}") from None


class Model:
    """A built network: layer objects, named parameters and pruning masks.

    Parameters live in ``params`` under ``"<layer>/<param>"`` keys. ``masks``
    covers the prunable weights; the invariant is that a masked position holds
    exactly 0 in ``params`` (maintained by :meth:`apply_masks`).
    """

    def __init__(self, config, layers, params, masks):
        self.config = config
        self.layers = layers
        self.params = params
        self.masks = masks

    @property
    def input_shape(self):
        return self.config.input_shape

    @property
    def dtype(self):
        return next(iter(self.params.values())).dtype

    def parameter_count(self):
        return int(sum(p.size for p in self.params.values()))

    def prunable_weights(self):
        return list(self.masks)

    def layer_of(self, key):
        return key.split("/", 1)[0]

    def copy(self):
        return Model(self.config, self.layers, {k: v.copy() for k, v in self.params.items()},
                     {k: v.copy() for k, v in self.masks.items()})

    def astype(self, dtype):
        out = self.copy()
        out.params = {k: v.astype(dtype) for k, v in out.params.items()}
        return out

    def apply_masks(self):
        """Zero every masked weight in place and return ``self``."""
        for key, mask in self.masks.items():
            if mask.shape != self.params[key].shape:
                raise ShapeError(f"mask for {key} has shape {mask.shape}, weight has {self.params[key].shape}")
            self.params[key] = np.where(mask, self.params[key], self.params[key].dtype.type(0))
        return self

    def layer_params(self, layer):
        return {pname: self.params[f"{layer.name}/{pname}"] for pname in layer.param_shapes()}

    def _check_input(self, X):
        X = np.asarray(X, dtype=self.dtype)
        if X.shape[1:] != self.input_shape:
            raise ShapeError(f"expected inputs of shape {self.input_shape}, got {X.shape[1:]}")
        return X

    def predict_proba(self, X, batch_size=256):
        """Probabilities for a batch of inputs (dropout off)."""
        X = self._check_input(X)
        out = np.empty(len(X), dtype=np.float64)
        for start in range(0, len(X), batch_size):
            h = X[start : start + batch_size]
            for layer in self.layers:
                h, _ = layer.forward(self.layer_params(layer), h)
            out[start : start + batch_size] = h.reshape(len(h))
        return out

    def forward(self, x):
        x = np.asarray(x)
        if x.shape != self.input_shape:
            raise ShapeError(f"expected input of shape {self.input_shape}, got {x.shape}")
        return float(self.predict_proba(x[None])[0])

    def __repr__(self):
        kinds = ", ".join(f"{layer.name}:{layer.kind}" for layer in self.layers)
        return f"Model(input_shape={self.input_shape}, params={self.parameter_count()}, layers=[{kinds}])"


def prunable_keys(layers):
    """Parameter keys that carry pruning masks."""
    return [f"{layer.name}/{w}" for layer in layers if layer.spec.prunable for w in layer.weight_names]


def build_model(config):
    """Instantiate layers, check shape chaining and draw initial weights from ``config.seed``."""
    config = load_config(config)
    if not config.layers:
        raise ConfigError("model config has no layers")
    shape = config.input_shape
    layers = []
    for spec in config.layers:
        try:
            layer = LAYER_TYPES[spec.kind](spec.name, spec.params, shape)
        except (ShapeError, KeyError, ValueError) as exc:
            raise ConfigError(f"layer {spec.name!r} ({spec.kind}) cannot take input {shape}: {exc}") from None
        layer.spec = spec
        layers.append(layer)
        shape = layer.output_shape
    last = layers[-1]
    if not (last.kind == "activation" and last.function == "sigmoid" and tuple(shape) == (1,)):
        raise ConfigError(f"the final layer must be a sigmoid activation over one unit; got {last.kind} -> {shape}")

    rng = np.random.default_rng(config.seed)
    params, masks = {}, {}
    for layer in layers:
        for pname, value in layer.init_params(rng).items():
            key = f"{layer.name}/{pname}"
            params[key] = value
            if layer.spec.prunable and pname in layer.weight_names:
                masks[key] = np.ones(value.shape, dtype=bool)
    return Model(config, layers, params, masks)


def forward(model, x):
    """Probability for a single input."""
    return model.forward(x)


# --------------------------------------------------------------------------
# loss and gradients


def regularization_penalty(model):
    total = 0.0
    for layer in model.layers:
        reg = layer.spec.regularization
        if reg is None:
            continue
        p = model.layer_params(layer)
        total += ops.elastic_net_penalty(p["kernel"], reg, p.get("bias"))
    return total


def loss_and_gradients(model, X, y, training=False, rng=None):
    """Objective (mean BCE + elastic-net terms) and its gradient per parameter.

    The sigmoid head is differentiated jointly with the loss, so the logit
    gradient is ``(p - y) / n`` wherever ``p`` lies inside the clip interval.
    """
    X = model._check_input(X)
    y = np.asarray(y, dtype=model.dtype).reshape(-1)
    n = len(X)
    h = X
    caches = []
    for layer in model.layers[:-1]:
        h, cache = layer.forward(model.layer_params(layer), h, training=training, rng=rng)
        if not np.all(np.isfinite(h)):
            raise NumericError(f"non-finite activation produced by layer {layer.name!r}")
        caches.append(cache)
    logits = h.reshape(n)
    p = ops.sigmoid(logits)
    bce = ops.bce_loss(p, y)
    loss = float(np.mean(bce)) + regularization_penalty(model)

    inside = (p > BCE_EPSILON) & (p < 1 - BCE_EPSILON)
    dh = (np.where(inside, p - y, 0) / n).astype(model.dtype).reshape(h.shape)
    grads = {}
    for depth in reversed(range(len(caches))):
        layer = model.layers[depth]
        params = model.layer_params(layer)
        dh, lgrads = layer.backward(params, caches[depth], dh, need_dx=depth > 0)
        reg = layer.spec.regularization
        if reg is not None:
            lgrads["kernel"] = lgrads["kernel"] + ops.elastic_net_gradient(params["kernel"], reg)
            lgrads["bias"] = lgrads["bias"] + (2.0 * reg.lambda_l2_bias * params["bias"]).astype(model.dtype)
        for pname, g in lgrads.items():
            if not np.all(np.isfinite(g)):
                raise NumericError(f"non-finite gradient for {layer.name}/{pname}")
            grads[f"{layer.name}/{pname}"] = g.astype(model.dtype, copy=False)
    return loss, grads


backward = loss_and_gradients


# --------------------------------------------------------------------------
# training


def _check_training_set(X, y):
    X = np.asarray(X)
    y = np.asarray(y).reshape(-1)
    if len(X) == 0:
        raise DataError("training set is empty")
    if len(X) != len(y):
        raise DataError(f"{len(X)} inputs but {len(y)} labels")
    classes = set(np.unique(y).tolist())
    if not classes <= {0, 1}:
        raise DataError(f"labels must be 0/1, got {sorted(classes)}")
    if len(classes) < 2:
        raise DataError("training set contains a single class")
    return X, y


def evaluate(model, X, y):
    """``(mean BCE, AUC)`` on a labelled set; AUC is NaN for single-class sets."""
    p = model.predict_proba(X)
    loss = float(np.mean(ops.bce_loss(p, y)))
    y = np.asarray(y).reshape(-1)
    auc = auc_roc(p, y) if 0 < y.sum() < len(y) else float("nan")
    return loss, auc


def steps_per_epoch(n, batch_size):
    return math.ceil(n / batch_size)


def fit_loop(model, X, y, optimizer, epochs, batch_size, seed, before_step=None, val_set=None):
    """Mini-batch optimisation over a private copy of ``model``.

    ``before_step(step, model)`` runs ahead of every optimizer step and may
    replace masks; gradients of masked weights are dropped and masked weights
    re-zeroed after each update. Returns ``(model, optimizer, history)``.
    """
    X, y = _check_training_set(X, y)
    if epochs < 0 or batch_size < 1:
        raise ValueError(f"epochs must be >= 0 and batch_size >= 1, got {epochs}, {batch_size}")
    model = model.copy()
    order_rng = np.random.default_rng(seed)
    dropout_rng = np.random.default_rng([seed, 1])
    X = np.asarray(X, dtype=model.dtype)
    history = []
    step = 0
    for epoch in range(epochs):
        order = order_rng.permutation(len(X))
        total, count = 0.0, 0
        for start in range(0, len(X), batch_size):
            if before_step is not None:
                before_step(step, model)
            idx = order[start : start + batch_size]
            loss, grads = loss_and_gradients(model, X[idx], y[idx], training=True, rng=dropout_rng)
            for key, mask in model.masks.items():
                if key in grads and not mask.all():
                    grads[key] = np.where(mask, grads[key], 0).astype(model.dtype)
            model.params, optimizer = optimizer_step(optimizer, model.params, grads)
            model.apply_masks()
            total += loss * len(idx)
            count += len(idx)
            step += 1
        entry = {"epoch": epoch + 1, "loss": total / count}
        if val_set is not None and len(val_set[0]):
            entry["val_loss"], entry["val_auc"] = evaluate(model, *val_set)
        history.append(entry)
    return model, optimizer, history


def make_optimizer(kind="adam", learning_rate=1e-3):
    return OptimizerState(kind=kind, learning_rate=learning_rate)


def train(model, train_set, val_set=None, optimizer=None, epochs=10, batch_size=32, seed=None):
    """Train ``model`` and return ``(trained_model, history)``.

    The input model is not modified. Shuffling and dropout are driven by
    ``seed`` (default: the config seed), so identical calls give identical
    parameters.
    """
    X, y = train_set
    if optimizer is None:
        t = model.config.training
        optimizer = make_optimizer(t.get("optimizer", "adam"), t.get("learning_rate", 1e-3))
    seed = model.config.seed if seed is None else seed
    trained, _, history = fit_loop(model, X, y, optimizer, epochs, batch_size, seed, val_set=val_set)
    return trained, history
