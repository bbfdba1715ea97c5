"""Magnitude pruning with constant and polynomial sparsity schedules."""

import json
import math
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

from .exceptions import ConfigError, ShapeError
from .model import fit_loop, make_optimizer, steps_per_epoch

SCHEDULE_KINDS = ("constant", "polynomial")


class PruningWarning(UserWarning):
    pass


@dataclass(frozen=True)
class PruningSchedule:
    """Target sparsity over optimizer steps.

    ``end_step=None`` means "80% of the fine-tuning steps" and is resolved by
    :func:`prune_fine_tune`.
    """

    kind: str = "polynomial"
    final_sparsity: float = 0.5
    initial_sparsity: float = 0.0
    begin_step: int = 0
    end_step: int = None
    exponent: int = 3
    frequency: int = 100

    def __post_init__(self):
        if self.kind not in SCHEDULE_KINDS:
            raise ConfigError(f"schedule kind must be one of {SCHEDULE_KINDS}, got {self.kind!r}")
        if not 0.0 <= self.final_sparsity <= 1.0:
            raise ConfigError(f"final_sparsity must lie in [0, 1], got {self.final_sparsity}")
        if not 0.0 <= self.initial_sparsity < 1.0 and not self.initial_sparsity == self.final_sparsity == 1.0:
            raise ConfigError(f"initial_sparsity must lie in [0, 1), got {self.initial_sparsity}")
        if self.initial_sparsity > self.final_sparsity:
            raise ConfigError(f"initial_sparsity {self.initial_sparsity} exceeds final_sparsity {self.final_sparsity}")
        if self.begin_step < 0:
            raise ConfigError(f"begin_step must be >= 0, got {self.begin_step}")
        if self.end_step is not None and self.end_step < self.begin_step:
            raise ConfigError(f"end_step {self.end_step} precedes begin_step {self.begin_step}")
        if self.frequency < 1:
            raise ConfigError(f"frequency must be >= 1, got {self.frequency}")

    def resolved(self, total_steps):
        if self.end_step is not None:
            return self
        end = max(self.begin_step, int(0.8 * total_steps))
        return PruningSchedule(self.kind, self.final_sparsity, self.initial_sparsity, self.begin_step, end,
                               self.exponent, self.frequency)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(f"bad pruning schedule: {exc}") from None


def sparsity_at(schedule, step):
    """Scheduled sparsity at optimizer ``step`` (clamped outside the ramp)."""
    s_i, s_f = schedule.initial_sparsity, schedule.final_sparsity
    t0 = schedule.begin_step
    if schedule.kind == "constant":
        return s_f if step >= t0 else s_i
    te = schedule.end_step if schedule.end_step is not None else t0
    if step >= te:
        return s_f
    if step <= t0:
        return s_i
    frac = (step - t0) / (te - t0)
    # clamp so rounding never dips below s_i or overshoots s_f
    return min(s_f, max(s_i, s_f + (s_i - s_f) * (1.0 - frac) ** schedule.exponent))


def zero_count(sparsity, n):
    # round first so that e.g. 0.29 * 100 counts as 29, not 28
    return int(math.floor(round(sparsity * n, 9)))


def magnitude_mask(w, sparsity, previous=None):
    """Keep-mask with exactly ``floor(sparsity * n)`` zeros at the smallest ``|w|``.

    Ties go to the lowest flat index. With ``previous``, entries already
    masked rank first, so raising the sparsity never unmasks a weight.
    """
    if not 0.0 <= sparsity <= 1.0:
        raise ConfigError(f"sparsity must lie in [0, 1], got {sparsity}")
    w = np.asarray(w)
    flat = np.abs(w.reshape(-1)).astype(np.float64)
    n = flat.size
    k = zero_count(sparsity, n)
    keep = np.ones(n, dtype=bool)
    if k == 0:
        return keep.reshape(w.shape)
    keys = [np.arange(n), flat]
    if previous is not None:
        previous = np.asarray(previous, dtype=bool)
        if previous.shape != w.shape:
            raise ShapeError(f"previous mask shape {previous.shape} does not match weight shape {w.shape}")
        keys.append(previous.reshape(-1))
    order = np.lexsort(keys)
    keep[order[:k]] = False
    return keep.reshape(w.shape)


def apply_masks(model, masks=None):
    """Copy of ``model`` with ``masks`` (default: its own) installed and applied."""
    out = model.copy()
    if masks is not None:
        for key, mask in masks.items():
            if key not in out.params:
                raise ShapeError(f"mask for unknown parameter {key!r}")
            if np.shape(mask) != out.params[key].shape:
                raise ShapeError(f"mask for {key} has shape {np.shape(mask)}, weight has {out.params[key].shape}")
            out.masks[key] = np.asarray(mask, dtype=bool).copy()
    return out.apply_masks()


def _weight_keys(model):
    return [f"{layer.name}/{w}" for layer in model.layers for w in layer.weight_names]


def _is_excluded(key, exclusions):
    return key in exclusions or key.split("/", 1)[0] in exclusions


@dataclass
class LayerPruneStat:
    name: str
    target_sparsity: float
    achieved_zero_count: int
    total: int
    excluded: bool = False

    @property
    def density(self):
        return 1.0 - self.achieved_zero_count / self.total if self.total else 1.0


@dataclass
class PruneReport:
    layers: list
    steps: int
    mask_updates: list = field(default_factory=list)
    history: list = field(default_factory=list)
    schedule: dict = field(default_factory=dict)

    def layer(self, name):
        for stat in self.layers:
            if stat.name == name or stat.name.split("/", 1)[0] == name:
                return stat
        raise KeyError(name)

    def to_dict(self):
        return {
            "layers": [dict(asdict(s), density=s.density) for s in self.layers],
            "steps": self.steps,
            "mask_updates": self.mask_updates,
            "history": self.history,
            "schedule": self.schedule,
        }

    def to_json(self, indent=2):
        return json.dumps(self.to_dict(), indent=indent)

    @classmethod
    def from_dict(cls, d):
        layers = [LayerPruneStat(**{k: v for k, v in s.items() if k != "density"}) for s in d["layers"]]
        return cls(layers, d["steps"], d.get("mask_updates", []), d.get("history", []), d.get("schedule", {}))


def prune_report(model, target, exclusions=(), steps=0):
    stats = []
    for key in _weight_keys(model):
        w = model.params[key]
        excluded = key not in model.masks or _is_excluded(key, exclusions)
        zeros = int(w.size - np.count_nonzero(model.masks[key])) if key in model.masks else 0
        stats.append(LayerPruneStat(key, 0.0 if excluded else float(target), zeros, int(w.size), excluded))
    return PruneReport(stats, steps)


def prune_fine_tune(model, train_set, val_set=None, schedule=None, epochs=10, optimizer=None, exclusions=(),
                    batch_size=None, seed=None):
    """Fine-tune ``model`` while pruning it to ``schedule.final_sparsity``.

    Masks are recomputed every ``frequency`` steps inside ``[t0, te]`` and
    always at ``te``; a final update after training guarantees the target
    when ``te`` lies beyond the last step. The default optimizer is a fresh
    one of the model's training kind at a tenth of its learning rate.
    Returns ``(pruned_model, PruneReport)``.
    """
    schedule = schedule or PruningSchedule()
    X, y = train_set
    training = model.config.training
    batch_size = batch_size or int(training.get("batch_size", 32))
    seed = model.config.seed if seed is None else seed
    if optimizer is None:
        optimizer = make_optimizer(training.get("optimizer", "adam"), 0.1 * float(training.get("learning_rate", 1e-3)))
    total = epochs * steps_per_epoch(len(X), batch_size)
    schedule = schedule.resolved(total)
    exclusions = set(exclusions)
    targets = [k for k in model.masks if not _is_excluded(k, exclusions)]
    if schedule.final_sparsity >= 1.0 and targets:
        warnings.warn(
            f"final sparsity 1.0 zeroes every prunable weight ({', '.join(targets)}); the model output will collapse",
            PruningWarning,
            stacklevel=2,
        )

    model = model.copy()
    for key in model.masks:
        if key not in targets:
            model.masks[key] = np.ones_like(model.masks[key])
    updates = []

    def update(step, m):
        s = sparsity_at(schedule, step)
        for key in targets:
            m.masks[key] = magnitude_mask(m.params[key], s, previous=m.masks[key])
        m.apply_masks()
        updates.append({"step": step, "sparsity": s})

    def before_step(step, m):
        t0, te = schedule.begin_step, schedule.end_step
        if t0 <= step <= te and ((step - t0) % schedule.frequency == 0 or step == te):
            update(step, m)

    pruned, _, history = fit_loop(model, X, y, optimizer, epochs, batch_size, seed,
                                  before_step=before_step, val_set=val_set)
    if not updates or updates[-1]["sparsity"] < schedule.final_sparsity:
        update(total, pruned)
    report = prune_report(pruned, schedule.final_sparsity, exclusions, total)
    report.mask_updates = updates
    report.history = history
    report.schedule = schedule.to_dict()
    return pruned, report
