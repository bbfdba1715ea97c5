"""Pruning x quantization sweep over seeds, schedules and sparsities.

Per seed a baseline is trained once; every (schedule, sparsity) cell then
prunes and fine-tunes its own copy and is evaluated at every precision on
the held-out test split. Cells may run in a process pool; latency is always
measured afterwards, serially, on one BLAS thread.
"""

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from threadpoolctl import threadpool_limits

from ..exceptions import ConfigError
from ..features import AugmentPlan, FeatureConfig, FeatureStandardizer, build_dataset, generate_synthetic_dataset
from ..features.dataset import read_manifest
from ..metrics import auc_roc
from ..model import build_model, load_config, make_optimizer, train
from ..pruning import SCHEDULE_KINDS, PruningSchedule, prune_fine_tune
from ..quantization import quantize_model
from ..serialization import compressed_size, serialize
from .timing import WARMUP, time_single_inference

DEFAULT_SPARSITIES = (0.10, 0.20, 0.30, 0.40, 0.50, 0.55, 0.60, 0.65, 0.70, 0.75, 0.80, 0.85, 0.90, 0.95, 0.99, 0.999)
PRECISIONS = ("f32", "q8", "q16")
BASELINE = "baseline"
BASE_SEED = 1234


@dataclass(frozen=True)
class SweepConfig:
    schedules: tuple = SCHEDULE_KINDS
    sparsities: tuple = DEFAULT_SPARSITIES
    n_seeds: int = 3
    base_seed: int = BASE_SEED
    precisions: tuple = PRECISIONS
    epochs: int = 20
    fine_tune_epochs: int = 10
    batch_size: int = 32
    prune_frequency: int = 10
    model_config: str = "cnn_coswara"
    dataset: dict = field(default_factory=lambda: {"source": "synthetic", "n": 400, "seed": BASE_SEED})
    timing_samples: int = 30
    warmup: int = WARMUP

    def __post_init__(self):
        object.__setattr__(self, "schedules", tuple(self.schedules))
        object.__setattr__(self, "sparsities", tuple(float(s) for s in self.sparsities))
        object.__setattr__(self, "precisions", tuple(self.precisions))
        bad = [s for s in self.schedules if s not in SCHEDULE_KINDS]
        if bad or not self.schedules:
            raise ConfigError(f"schedules must be a non-empty subset of {SCHEDULE_KINDS}, got {self.schedules}")
        if not self.sparsities or any(not 0.0 <= s < 1.0 for s in self.sparsities):
            raise ConfigError(f"sparsities must be non-empty and lie in [0, 1), got {self.sparsities}")
        if len(set(self.sparsities)) != len(self.sparsities):
            raise ConfigError("sparsities must be distinct")
        if self.n_seeds < 1:
            raise ConfigError(f"need at least one seed, got n_seeds={self.n_seeds}")
        if "f32" not in self.precisions or any(p not in PRECISIONS for p in self.precisions):
            raise ConfigError(f"precisions must include f32 and be drawn from {PRECISIONS}, got {self.precisions}")
        for name in ("epochs", "fine_tune_epochs", "batch_size", "prune_frequency", "timing_samples"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")

    @property
    def seeds(self):
        return [self.base_seed + run for run in range(self.n_seeds)]

    @property
    def n_rows(self):
        return self.n_seeds * (1 + len(self.schedules) * len(self.sparsities))

    def to_dict(self):
        d = asdict(self)
        for k in ("schedules", "sparsities", "precisions"):
            d[k] = list(d[k])
        return d

    def to_json(self, indent=2):
        return json.dumps(self.to_dict(), indent=indent)

    @classmethod
    def from_dict(cls, d):
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(f"bad sweep config: {exc}") from None

    @classmethod
    def from_json(cls, path):
        with open(path) as fh:
            try:
                return cls.from_dict(json.load(fh))
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{path}: invalid JSON: {exc}") from None


@dataclass
class SweepRow:
    schedule: str
    sparsity: float
    seed: int
    auc: dict = field(default_factory=dict)
    size_bytes: dict = field(default_factory=dict)
    infer_mean_us: dict = field(default_factory=dict)
    infer_std_us: dict = field(default_factory=dict)
    infer_median_us: dict = field(default_factory=dict)
    error: str = None

    @property
    def ok(self):
        return self.error is None

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


@dataclass
class PreparedData:
    train: tuple
    val: tuple
    test: tuple
    feature_config: FeatureConfig
    standardizer: FeatureStandardizer
    provenance: dict


def _feature_mode(model_config, dataset):
    if "features" in dataset:
        return dataset["features"]
    shape = tuple(load_config(model_config).input_shape)
    if shape == FeatureConfig("melspec").output_shape:
        return "melspec"
    return "mfcc"


def prepare_data(config):
    """Build the dataset named by ``config.dataset`` and standardize it on train statistics."""
    spec = dict(config.dataset)
    mode = _feature_mode(config.model_config, spec)
    features = FeatureConfig(mode)
    ratios = tuple(spec.get("ratios", (0.7, 0.15, 0.15) if mode == "mfcc" else (0.6, 0.2, 0.2)))
    source = spec.get("source", "synthetic")
    if source == "synthetic":
        manifest, signals = generate_synthetic_dataset(int(spec.get("n", 400)), int(spec.get("seed", BASE_SEED)), ratios)
    elif source == "manifest":
        manifest = read_manifest(spec["path"], ratios, int(spec.get("seed", BASE_SEED)))
        signals = None
    else:
        raise ConfigError(f"dataset source must be 'synthetic' or 'manifest', got {source!r}")
    plan = spec.get("augment", "none")
    if plan == "default":
        plan = AugmentPlan.mfcc_default() if mode == "mfcc" else AugmentPlan.melspec_default()
    elif plan == "none":
        plan = AugmentPlan.none()
    else:
        plan = AugmentPlan.from_dict(plan)
    ds = build_dataset(manifest, features, plan, signals, n_jobs=int(spec.get("n_jobs", 1)))
    scaler = FeatureStandardizer(axis=0 if mode == "mfcc" else None).fit(ds.train.X)
    split = lambda d: (scaler.transform(d.X), d.y)  # noqa: E731
    return PreparedData(split(ds.train), split(ds.val), split(ds.test), features, scaler, ds.provenance)


def _model_for_seed(config, seed):
    mc = load_config(config.model_config)
    mc.seed = seed
    return build_model(mc)


def train_baseline(config, data, seed):
    model = _model_for_seed(config, seed)
    t = model.config.training
    opt = make_optimizer(t.get("optimizer", "adam"), float(t.get("learning_rate", 1e-3)))
    with threadpool_limits(limits=1):
        trained, history = train(model, data.train, data.val, opt, config.epochs, config.batch_size, seed)
    return trained, history


def variants(model, precisions):
    out = {}
    for p in precisions:
        out[p] = model if p == "f32" else quantize_model(model, 8 if p == "q8" else 16)
    return out


def evaluate_variants(model, test, precisions):
    """AUC and compressed size per precision, plus the variant objects."""
    X, y = test
    models = variants(model, precisions)
    auc, size = {}, {}
    with threadpool_limits(limits=1):
        for p, m in models.items():
            auc[p] = float(auc_roc(m.predict_proba(X), y))
            size[p] = compressed_size(serialize(m))
    return auc, size, models


def _run_cell(job):
    config, data, baseline, schedule, sparsity, seed = job
    row = SweepRow(schedule, sparsity, seed)
    try:
        sched = PruningSchedule(schedule, sparsity, frequency=config.prune_frequency)
        with threadpool_limits(limits=1):
            pruned, _ = prune_fine_tune(baseline, data.train, None, sched, config.fine_tune_epochs,
                                        batch_size=config.batch_size, seed=seed)
        row.auc, row.size_bytes, models = evaluate_variants(pruned, data.test, config.precisions)
        return row, pruned
    except Exception as exc:  # a failed cell must not stop the sweep
        row.error = f"{type(exc).__name__}: {exc}"
        return row, None


def _time_row(row, model, config, samples):
    for p, m in variants(model, config.precisions).items():
        t = time_single_inference(m, samples, warmup=config.warmup)
        row.infer_mean_us[p] = t.mean_us
        row.infer_std_us[p] = t.std_us
        row.infer_median_us[p] = t.median_us


def _fill_failed(row, precisions):
    for d in (row.auc, row.size_bytes, row.infer_mean_us, row.infer_std_us, row.infer_median_us):
        for p in precisions:
            d.setdefault(p, math.nan)


def sort_key(row, schedules=SCHEDULE_KINDS):
    order = {BASELINE: -1, **{s: i for i, s in enumerate(schedules)}}
    return (order.get(row.schedule, len(order)), row.sparsity, row.seed)


def run_sweep(config, data=None, n_jobs=1, timing=True, log=None):
    """Run every cell of ``config`` and return the rows sorted for emission."""
    log = log or (lambda msg: None)
    data = data if data is not None else prepare_data(config)
    rows, timed = [], []
    for seed in config.seeds:
        baseline, _ = train_baseline(config, data, seed)
        base_row = SweepRow(BASELINE, 0.0, seed)
        base_row.auc, base_row.size_bytes, _ = evaluate_variants(baseline, data.test, config.precisions)
        log(f"seed {seed}: baseline auc {base_row.auc['f32']:.4f}")
        rows.append(base_row)
        timed.append((base_row, baseline))
        jobs = [(config, data, baseline, s, sp, seed) for s in config.schedules for sp in config.sparsities]
        if n_jobs > 1:
            with ProcessPoolExecutor(max_workers=n_jobs) as pool:
                results = list(pool.map(_run_cell, jobs))
        else:
            results = [_run_cell(job) for job in jobs]
        for row, model in results:
            rows.append(row)
            if row.ok:
                timed.append((row, model))
                log(f"seed {seed}: {row.schedule} {row.sparsity:g} auc {row.auc['f32']:.4f}")
            else:
                log(f"seed {seed}: {row.schedule} {row.sparsity:g} FAILED {row.error}")
    if timing:
        samples = data.test[0][: config.timing_samples]
        for row, model in timed:
            _time_row(row, model, config, samples)
    for row in rows:
        _fill_failed(row, config.precisions)
    return sorted(rows, key=lambda r: sort_key(r, config.schedules))


METRICS = (("auc", "auc"), ("size", "size_bytes"), ("t_us", "infer_mean_us"))


def aggregate(rows, precisions=PRECISIONS):
    """Mean and standard deviation across seeds per (schedule, sparsity) cell."""
    cells = {}
    for row in rows:
        cells.setdefault((row.schedule, row.sparsity), []).append(row)
    out = []
    for (schedule, sparsity), group in cells.items():
        ok = [r for r in group if r.ok]
        entry = {"schedule": schedule, "sparsity": sparsity, "runs": len(ok), "failed": len(group) - len(ok)}
        for label, attr in METRICS:
            for p in precisions:
                vals = np.array([getattr(r, attr).get(p, math.nan) for r in ok], dtype=np.float64)
                vals = vals[np.isfinite(vals)]
                key = label if p == "f32" else label.replace("_us", "") + f"_{p}" + ("_us" if label == "t_us" else "")
                entry[key] = float(vals.mean()) if len(vals) else math.nan
                entry[key + "_std"] = float(vals.std()) if len(vals) else math.nan
        out.append(entry)
    return sorted(out, key=lambda e: (e["schedule"] != BASELINE, e["schedule"], e["sparsity"]))
