"""Manifest handling and leakage-safe dataset assembly.

Recordings are split by ``source_id`` first; augmentation runs afterwards,
per split, and every augmented sample keeps the ``source_id`` of the
recording it came from.
"""

import csv
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ..exceptions import ConfigError, DataError, LeakageError
from .augment import augment_waveform, pitch_shift, spec_augment
from .config import FeatureConfig
from .dsp import mel_spectrogram_db, mfcc, pad_or_trim, resample_linear, resize_normalize
from .wav import AudioSignal, read_wav

SPLITS = ("train", "val", "test")
MANIFEST_HEADER = ("path", "label", "source_id")
RMS_GATE = 1e-4


@dataclass(frozen=True)
class ManifestEntry:
    path: str
    label: int
    source_id: str
    split: str = None

    def __post_init__(self):
        if self.label not in (0, 1):
            raise DataError(f"label must be 0 or 1, got {self.label!r} for {self.path}")
        if self.split is not None and self.split not in SPLITS:
            raise DataError(f"split must be one of {SPLITS}, got {self.split!r} for {self.path}")


@dataclass
class DatasetManifest:
    entries: list
    ratios: tuple = (0.7, 0.15, 0.15)
    seed: int = 0

    def __post_init__(self):
        self.entries = list(self.entries)
        self.ratios = tuple(float(r) for r in self.ratios)
        if len(self.ratios) != 3 or any(r < 0 for r in self.ratios):
            raise ConfigError(f"ratios must be three non-negative numbers, got {self.ratios}")
        if abs(sum(self.ratios) - 1.0) > 1e-6:
            raise ConfigError(f"ratios must sum to 1, got {self.ratios} (sum {sum(self.ratios)})")

    def __len__(self):
        return len(self.entries)

    @property
    def labels(self):
        return np.array([e.label for e in self.entries], dtype=np.int64)


def read_manifest(path, ratios=(0.7, 0.15, 0.15), seed=0):
    """Load a ``path,label,source_id[,split]`` CSV. Relative paths resolve against the CSV."""
    base = os.path.dirname(os.path.abspath(path))
    entries = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        header = tuple(reader.fieldnames or ())
        if header[:3] != MANIFEST_HEADER:
            raise DataError(f"{path}: manifest header must start with {','.join(MANIFEST_HEADER)}, got {','.join(header)}")
        for lineno, row in enumerate(reader, start=2):
            try:
                label = int(row["label"])
            except (TypeError, ValueError):
                raise DataError(f"{path}:{lineno}: label {row['label']!r} is not an integer") from None
            p = row["path"]
            if not os.path.isabs(p):
                p = os.path.join(base, p)
            split = (row.get("split") or "").strip() or None
            try:
                entries.append(ManifestEntry(p, label, row["source_id"], split))
            except DataError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from None
    return DatasetManifest(entries, ratios, seed)


def write_manifest(path, manifest):
    with_split = any(e.split for e in manifest.entries)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(MANIFEST_HEADER + (("split",) if with_split else ()))
        for e in manifest.entries:
            w.writerow([e.path, e.label, e.source_id] + ([e.split or ""] if with_split else []))


@dataclass(frozen=True)
class AugmentPlan:
    """What to add to each split after it has been formed.

    ``waveform_configs`` lists one ``(ops, params)`` pair per extra positive
    copy. ``pitch_steps`` adds one pitch-shifted copy per positive.
    ``spec_copies`` is ``(negative, positive)`` SpecAugment copies per
    spectrogram, applied to originals and pitch-shifted copies alike.
    """

    waveform_configs: tuple = ()
    pitch_steps: int = None
    spec_copies: tuple = (0, 0)
    f_param: int = 30
    t_param: int = 30
    splits: tuple = SPLITS

    def __post_init__(self):
        bad = set(self.splits) - set(SPLITS)
        if bad:
            raise ConfigError(f"unknown splits in augment plan: {sorted(bad)}")

    @property
    def is_empty(self):
        return not self.waveform_configs and self.pitch_steps is None and not any(self.spec_copies)

    @classmethod
    def none(cls):
        return cls()

    @classmethod
    def mfcc_default(cls):
        """Two extra copies of every positive, each with its own waveform chain."""
        return cls(
            waveform_configs=(
                (("time_stretch", "shift", "gain"), {"time_stretch": (0.85, 1.15), "shift": (-2205, 2205), "gain": (-6.0, 6.0)}),
                (("trim", "shift", "gain"), {"trim": (30.0, 60.0), "shift": (-4410, 4410), "gain": (-9.0, 3.0)}),
            ),
        )

    @classmethod
    def melspec_default(cls):
        """Pitch shift positives down four steps, then SpecAugment twice per positive, once per negative."""
        return cls(pitch_steps=-4, spec_copies=(1, 2))

    def to_dict(self):
        return {
            "waveform_configs": [[list(ops), dict(params)] for ops, params in self.waveform_configs],
            "pitch_steps": self.pitch_steps,
            "spec_copies": list(self.spec_copies),
            "f_param": self.f_param,
            "t_param": self.t_param,
            "splits": list(self.splits),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            waveform_configs=tuple(
                (tuple(ops), {k: tuple(v) if isinstance(v, list) else v for k, v in params.items()})
                for ops, params in d.get("waveform_configs", ())
            ),
            pitch_steps=d.get("pitch_steps"),
            spec_copies=tuple(d.get("spec_copies", (0, 0))),
            f_param=int(d.get("f_param", 30)),
            t_param=int(d.get("t_param", 30)),
            splits=tuple(d.get("splits", SPLITS)),
        )


@dataclass
class SplitData:
    X: np.ndarray
    y: np.ndarray
    source_ids: list
    augmented: np.ndarray

    def __len__(self):
        return len(self.y)


@dataclass
class Dataset:
    train: SplitData
    val: SplitData
    test: SplitData
    provenance: dict = field(default_factory=dict)

    def __getitem__(self, name):
        if name not in SPLITS:
            raise KeyError(name)
        return getattr(self, name)

    def items(self):
        return [(s, self[s]) for s in SPLITS]


def check_leakage(split_source_ids):
    """Raise :class:`LeakageError` if any source id appears in more than one split.

    Accepts a :class:`Dataset` or a mapping of split name to source ids.
    """
    if isinstance(split_source_ids, Dataset):
        split_source_ids = {s: d.source_ids for s, d in split_source_ids.items()}
    owner = {}
    for split, ids in split_source_ids.items():
        for sid in ids:
            prev = owner.setdefault(sid, split)
            if prev != split:
                raise LeakageError(f"source id {sid!r} appears in both {prev!r} and {split!r}")


def _group_labels(manifest):
    groups = {}
    for idx, e in enumerate(manifest.entries):
        groups.setdefault(e.source_id, []).append(idx)
    labels = {}
    for sid, idxs in groups.items():
        ls = {manifest.entries[i].label for i in idxs}
        if len(ls) > 1:
            raise DataError(f"source id {sid!r} carries both labels")
        labels[sid] = ls.pop()
    return groups, labels


def split_manifest(manifest):
    """Assign entry indices to splits, grouped by source id and stratified by label.

    Explicit ``split`` values in the manifest win; the rest are shuffled per
    class, interleaved in proportion and cut at the cumulative ratios.
    """
    groups, labels = _group_labels(manifest)
    assigned = {s: [] for s in SPLITS}
    free = []
    for sid, idxs in groups.items():
        splits = {manifest.entries[i].split for i in idxs}
        fixed = splits - {None}
        if len(fixed) > 1:
            raise LeakageError(f"source id {sid!r} is assigned to several splits: {sorted(fixed)}")
        if fixed:
            assigned[fixed.pop()].extend(idxs)
        else:
            free.append(sid)
    if free:
        rng = np.random.default_rng(manifest.seed)
        keyed = []
        for label in (0, 1):
            sids = [s for s in free if labels[s] == label]
            order = rng.permutation(len(sids))
            for rank, j in enumerate(order):
                keyed.append(((rank + 0.5) / len(sids), label, sids[j]))
        keyed.sort(key=lambda k: (k[0], k[1]))
        total = sum(len(groups[k[2]]) for k in keyed)
        cuts = np.round(np.cumsum(manifest.ratios)[:2] * total).astype(int)
        seen = 0
        for _, _, sid in keyed:
            split = SPLITS[int(np.searchsorted(cuts, seen, side="right"))]
            assigned[split].extend(groups[sid])
            seen += len(groups[sid])
    for s in SPLITS:
        assigned[s].sort()
    return assigned


def load_signal(entry, signals=None, sample_rate=22050):
    if signals is not None and entry.path in signals:
        sig = signals[entry.path]
    else:
        try:
            sig = read_wav(entry.path)
        except FileNotFoundError:
            raise DataError(f"missing audio file {entry.path}") from None
    if sig.sample_rate != sample_rate:
        sig = resample_linear(sig, sample_rate)
    return sig


def rms(signal):
    x = signal.samples.astype(np.float64)
    return float(np.sqrt(np.mean(x**2))) if len(x) else 0.0


def extract_features(signal, config=None):
    """MFCC matrix or resized mel image for one recording."""
    config = config or FeatureConfig()
    cfg = config.active
    if signal.sample_rate != cfg.sample_rate:
        signal = resample_linear(signal, cfg.sample_rate)
    if config.mode == "mfcc":
        return mfcc(pad_or_trim(signal, cfg.target_len, "end"), cfg)
    mel = mel_spectrogram_db(pad_or_trim(signal, cfg.target_len, "center"), cfg)
    return resize_normalize(mel, cfg.out_h, cfg.out_w, cfg.channels)


def _melspec_variants(signal, label, config, plan, rng):
    cfg = config.melspec
    bases = [(signal, False)]
    if label == 1 and plan.pitch_steps is not None:
        bases.append((pitch_shift(signal, plan.pitch_steps), True))
    out = []
    copies = plan.spec_copies[label]
    for sig, shifted in bases:
        mel = mel_spectrogram_db(pad_or_trim(sig, cfg.target_len, "center"), cfg)
        out.append((resize_normalize(mel, cfg.out_h, cfg.out_w, cfg.channels), shifted))
        for _ in range(copies):
            masked = spec_augment(mel, plan.f_param, plan.t_param, rng)
            out.append((resize_normalize(masked, cfg.out_h, cfg.out_w, cfg.channels), True))
    return out


def _process(job):
    index, signal, label, split, config, plan, seed = job
    rng = np.random.default_rng([seed, index])
    if plan is None or plan.is_empty or split not in plan.splits:
        return [(extract_features(signal, config), False)]
    if config.mode == "melspec":
        return _melspec_variants(signal, label, config, plan, rng)
    out = [(extract_features(signal, config), False)]
    if label == 1:
        for ops, params in plan.waveform_configs:
            out.append((extract_features(augment_waveform(signal, ops, params, rng), config), True))
    return out


def _empty_split(shape):
    return SplitData(np.zeros((0,) + tuple(shape), np.float32), np.zeros(0, np.int64), [], np.zeros(0, bool))


def build_dataset(manifest, feature_config=None, augment_plan=None, signals=None, n_jobs=1, rms_gate=RMS_GATE):
    """Split ``manifest`` by source id, then extract and augment each split.

    ``signals`` optionally maps entry paths to in-memory :class:`AudioSignal`
    objects (the synthetic generator returns one). Recordings with RMS below
    ``rms_gate`` are dropped before splitting. Output order follows the
    manifest, so results do not depend on ``n_jobs``.
    """
    config = feature_config or FeatureConfig()
    if not len(manifest):
        raise DataError("manifest is empty")
    if len(set(manifest.labels.tolist())) < 2:
        raise DataError("manifest needs both classes")

    kept, silent = [], []
    loaded = {}
    for idx, e in enumerate(manifest.entries):
        sig = load_signal(e, signals, config.sample_rate)
        if rms(sig) < rms_gate:
            silent.append(e.source_id)
            continue
        kept.append(idx)
        loaded[idx] = sig
    filtered = DatasetManifest([manifest.entries[i] for i in kept], manifest.ratios, manifest.seed)
    if len(set(filtered.labels.tolist())) < 2:
        raise DataError("fewer than two classes remain after dropping silent recordings")
    parts = split_manifest(filtered)

    jobs = []
    for split in SPLITS:
        for j in parts[split]:
            idx = kept[j]
            e = manifest.entries[idx]
            jobs.append((idx, loaded[idx], e.label, split, config, augment_plan, manifest.seed))
    if n_jobs and n_jobs > 1:
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            results = list(pool.map(_process, jobs, chunksize=4))
    else:
        results = [_process(job) for job in jobs]

    collected = {s: ([], [], [], []) for s in SPLITS}
    for job, variants in zip(jobs, results):
        idx, _, label, split = job[:4]
        X, y, ids, aug = collected[split]
        for feat, is_aug in variants:
            X.append(feat)
            y.append(label)
            ids.append(manifest.entries[idx].source_id)
            aug.append(is_aug)
    out = {}
    for s in SPLITS:
        X, y, ids, aug = collected[s]
        if not X:
            out[s] = _empty_split(config.output_shape)
            continue
        out[s] = SplitData(np.stack(X).astype(np.float32), np.array(y, np.int64), ids, np.array(aug, bool))
    dataset = Dataset(
        out["train"],
        out["val"],
        out["test"],
        provenance={
            "feature_config": config.to_dict(),
            "augment_plan": (augment_plan or AugmentPlan()).to_dict(),
            "ratios": list(manifest.ratios),
            "seed": manifest.seed,
            "dropped_silent": silent,
            "recordings": {s: len(parts[s]) for s in SPLITS},
        },
    )
    check_leakage(dataset)
    return dataset
