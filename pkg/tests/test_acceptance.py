"""One test per acceptance criterion; verdicts are summarized at the end of the run."""

import csv
import os
import time
import xml.etree.ElementTree as ET
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from edgepress import pruning
from edgepress.exceptions import LeakageError
from edgepress.features import (
    AudioSignal,
    AugmentPlan,
    DatasetManifest,
    FeatureConfig,
    ManifestEntry,
    build_dataset,
    generate_synthetic_dataset,
    split_manifest,
)
from edgepress.features.augment import pitch_shift
from edgepress.features.dataset import extract_features
from edgepress.features.dsp import hann_window, mfcc, stft
from edgepress.harness import SweepConfig, auc_roc, emit_all, run_sweep
from edgepress.harness.report import CSV_COLUMNS
from edgepress.model import build_model, load_config
from edgepress.pruning import PruningSchedule, apply_masks, magnitude_mask, prune_fine_tune, sparsity_at
from edgepress.quantization import dequantize, quantize_model, quantize_tensor
from edgepress.serialization import serialize
from edgepress.sparse import csr_matvec, sparsify_model, to_csr

from conftest import record

SR = 22050


def closed_form(t, t0, te, si, sf):
    return sf + (si - sf) * (1 - (t - t0) / (te - t0)) ** 3


def pairwise_auc(scores, labels):
    """Count wins over every positive/negative pair; ties score half."""
    pos = scores[labels == 1]
    neg = scores[labels == 0]
    twice = 2 * int((pos[:, None] > neg[None, :]).sum()) + int((pos[:, None] == neg[None, :]).sum())
    return (twice / 2) / (len(pos) * len(neg))


def sine(freq, seconds, amp=0.5):
    t = np.arange(int(seconds * SR)) / SR
    return AudioSignal((amp * np.sin(2 * np.pi * freq * t)).astype(np.float32), SR)


def median_time(fn, reps=300):
    fn()
    t = []
    for _ in range(reps):
        s = time.perf_counter()
        fn()
        t.append(time.perf_counter() - s)
    return float(np.median(t))


@pytest.fixture(scope="module")
def reference():
    return build_model(load_config("cnn_coswara"))


@pytest.fixture(scope="module")
def sweeps(tmp_path_factory):
    """The default sweep, run twice from scratch (features included)."""
    config = SweepConfig()
    n_jobs = os.cpu_count() or 1
    first = run_sweep(config, n_jobs=n_jobs, timing=True)
    second = run_sweep(config, n_jobs=n_jobs, timing=False)
    out = tmp_path_factory.mktemp("sweep")
    paths = emit_all(first, out, config)
    return config, first, second, paths


def cell(rows, schedule, sparsity, seed):
    return next(r for r in rows if r.schedule == schedule and r.sparsity == sparsity and r.seed == seed)


class TestSchedule:
    def test_c01_closed_form(self):
        rng = np.random.default_rng(0)
        worst, endpoints_exact = 0.0, True
        for _ in range(100):
            t0 = int(rng.integers(0, 1000))
            te = t0 + int(rng.integers(2, 5000))
            si = float(rng.uniform(0, 0.5))
            sf = float(rng.uniform(si, 1.0))
            s = PruningSchedule("polynomial", sf, si, t0, te)
            endpoints_exact &= sparsity_at(s, t0) == si and sparsity_at(s, te) == sf
            t = int(rng.integers(t0 + 1, te))
            worst = max(worst, abs(sparsity_at(s, t) - closed_form(t, t0, te, si, sf)))
        ok = record(1, endpoints_exact and worst <= 1e-12,
                    f"endpoints exact={endpoints_exact}, max interior error {worst:.1e} (tol 1e-12)")
        assert ok

    @given(st.integers(0, 100), st.integers(1, 2000), st.floats(0, 0.99), st.floats(0, 1))
    def test_c01_monotone(self, t0, span, si, extra):
        sf = si + (1 - si) * extra
        s = PruningSchedule("polynomial", sf, si, t0, t0 + span)
        vals = np.array([sparsity_at(s, t) for t in range(t0 - 1, t0 + span + 2)])
        assert (np.diff(vals) >= 0).all()


class TestPruningExactness:
    def test_c02(self, reference, monkeypatch):
        rng = np.random.default_rng(0)
        X = rng.standard_normal((32,) + reference.input_shape).astype(np.float32)
        y = np.arange(32) % 2
        X[y == 1] += 0.5
        failures = []
        for sf in (0.5, 0.9, 0.95):
            calls = []
            real = pruning.magnitude_mask

            def spy(w, s, previous=None):
                keep = real(w, s, previous)
                calls.append((w.shape, frozenset(np.flatnonzero(~keep).tolist())))
                return keep

            monkeypatch.setattr(pruning, "magnitude_mask", spy)
            pruned, _ = prune_fine_tune(reference, (X, y), None, PruningSchedule("polynomial", sf, frequency=1),
                                        epochs=2, batch_size=8, seed=0)
            monkeypatch.setattr(pruning, "magnitude_mask", real)
            # one call per prunable tensor per update, in a fixed order
            k = len(pruned.masks)
            for i in range(k, len(calls)):
                (shape_a, a), (shape_b, b) = calls[i - k], calls[i]
                if shape_a != shape_b or not a <= b:
                    failures.append(f"revival at {sf} in update {i // k}")
            if len(calls) <= k:
                failures.append(f"only {len(calls)} mask updates at {sf}")
            for key, mask in pruned.masks.items():
                w = pruned.params[key]
                n = w.size
                want = int(np.floor(sf * n))
                zeros = set(np.flatnonzero(w == 0).tolist())
                masked = set(np.flatnonzero(~mask).tolist())
                if len(zeros) != want or masked != zeros:
                    failures.append(f"{key}@{sf}: {len(zeros)} zeros, want {want}")
        ok = record(2, not failures, "exact floor(s*n) zeros, no revivals" if not failures else "; ".join(failures[:3]))
        assert ok


@pytest.mark.slow
class TestSweep:
    def test_c03_retention(self, sweeps):
        config, rows, _, _ = sweeps
        lines, ok = [], True
        for seed in config.seeds:
            base = cell(rows, "baseline", 0.0, seed).auc["f32"]
            p90 = cell(rows, "polynomial", 0.9, seed).auc["f32"]
            p999 = cell(rows, "polynomial", 0.999, seed).auc["f32"]
            ok &= base >= 0.95 and base - p90 <= 0.03 and base - p999 >= 0.10
            lines.append(f"seed {seed}: base {base:.3f} drop@90% {base - p90:+.3f} drop@99.9% {base - p999:+.3f}")
        assert record(3, ok, "; ".join(lines))

    def test_c04_quantization_parity(self, sweeps):
        _, rows, _, _ = sweeps
        ok_rows = [r for r in rows if r.ok]
        d8 = max(abs(r.auc["f32"] - r.auc["q8"]) for r in ok_rows)
        d16 = max(abs(r.auc["f32"] - r.auc["q16"]) for r in ok_rows)
        ok = len(ok_rows) == len(rows) and d8 <= 0.01 and d16 <= 0.005
        assert record(4, ok, f"{len(ok_rows)}/{len(rows)} rows ok, max |f32-q8| {d8:.4f} (tol 0.01), "
                             f"max |f32-q16| {d16:.4f} (tol 0.005)")

    def test_c06_size_curve(self, sweeps):
        config, rows, _, _ = sweeps
        bumps, ratios = [], []
        for seed in config.seeds:
            base = cell(rows, "baseline", 0.0, seed).size_bytes["f32"]
            for sched in config.schedules:
                sizes = [cell(rows, sched, sp, seed).size_bytes["f32"] for sp in config.sparsities]
                bumps += [b / a - 1 for a, b in zip(sizes, sizes[1:])]
                ratios.append(base / cell(rows, sched, 0.95, seed).size_bytes["q8"])
        ok = max(bumps) <= 0.02 and min(ratios) >= 30
        assert record(6, ok, f"largest step increase {max(bumps):+.3%} (band 2%), "
                             f"baseline / (95% + q8) min {min(ratios):.1f}x (gate 30x)")

    def test_c09_quantized_latency(self, sweeps):
        config, rows, _, _ = sweeps
        bases = [cell(rows, "baseline", 0.0, s) for s in config.seeds]
        f32 = float(np.median([r.infer_median_us["f32"] for r in bases]))
        q8 = float(np.median([r.infer_median_us["q8"] for r in bases]))
        assert record(9, q8 <= f32, f"int8 median {q8:.0f} us vs float {f32:.0f} us")

    def test_c13_end_to_end(self, sweeps):
        config, first, second, paths = sweeps
        with open(paths["csv"]) as fh:
            table = list(csv.reader(fh))
        columns_ok = tuple(table[0]) == CSV_COLUMNS and all(len(r) == 12 for r in table)
        rows_ok = len(first) == config.n_rows == 99 and len(table) == 1 + len(first)
        svgs = 0
        for name in ("auc.svg", "size.svg", "time.svg"):
            root = ET.parse(Path(paths["csv"]).parent / name).getroot()
            svgs += root.tag.endswith("svg")
        same = [(r.auc, r.size_bytes) for r in first] == [(r.auc, r.size_bytes) for r in second]
        ok = columns_ok and rows_ok and svgs == 3 and same
        assert record(13, ok, f"{len(first)} rows, 12 columns={columns_ok}, {svgs} SVGs parsed, "
                              f"rerun AUC/size identical={same}")


class TestQuantization:
    def test_c05_round_trip(self):
        rng = np.random.default_rng(5)
        v = np.concatenate([rng.standard_normal(500_000) * 3, rng.uniform(-40, 7, 500_000)])
        worst = []
        for bits in (8, 16):
            q = quantize_tensor(v, bits)
            excess = np.abs(v - dequantize(q, np.float64)).max() - q.scale / 2
            worst.append(excess)
        ok = max(worst) <= 1e-7
        assert record(5, ok, f"max error minus scale/2: q8 {worst[0]:.1e}, q16 {worst[1]:.1e} (tol 1e-7), 1e6 values")

    def test_c07_storage(self, reference):
        ratio = len(serialize(quantize_model(reference, 8))) / len(serialize(reference))
        assert record(7, ratio <= 0.30, f"8-bit container / float container = {ratio:.4f} (gate 0.30)")


class TestSparse:
    def test_c08(self, reference):
        rng = np.random.default_rng(0)
        a = rng.standard_normal((2048, 512)).astype(np.float32)
        a[rng.random(a.shape) < 0.95] = 0
        x = rng.standard_normal(512).astype(np.float32)
        m = to_csr(a)
        speed = median_time(lambda: csr_matvec(m, x)) / median_time(lambda: a @ x)

        pruned = apply_masks(reference, {k: magnitude_mask(reference.params[k], 0.95) for k in reference.masks})
        sm = sparsify_model(pruned)
        X = rng.standard_normal((8,) + reference.input_shape).astype(np.float32)
        diff = max(abs(sm.forward(xi) - pruned.forward(xi)) for xi in X)
        ok = speed <= 0.5 and diff <= 1e-5 and sm.converted
        assert record(8, ok, f"CSR/dense median time {speed:.3f} (gate 0.5), forward max diff {diff:.1e} (tol 1e-5), "
                             f"converted {sm.converted}")


class TestDsp:
    def test_c10(self):
        rng = np.random.default_rng(1)
        clip = AudioSignal((0.1 * rng.standard_normal(7 * SR)).astype(np.float32), SR)
        mfcc_shape = mfcc(clip).shape
        mel_shape = extract_features(clip, FeatureConfig("melspec")).shape

        shifted = pitch_shift(sine(440, 2.0), -4).samples.astype(np.float64)
        n_fft = 4 * len(shifted)
        spec = np.abs(np.fft.rfft(shifted * np.hanning(len(shifted)), n=n_fft))
        peak = np.argmax(spec) * SR / n_fft
        bin_hz = SR / len(shifted)
        pitch_ok = abs(peak - 349.2) <= 2 * bin_hz

        x = rng.standard_normal(8192)
        power = np.abs(stft(x, 2048, 512, center=False)) ** 2
        full = power.sum(axis=0) * 2 - power[0] - power[-1]
        frames = np.stack([x[t * 512: t * 512 + 2048] for t in range(power.shape[1])]) * hann_window(2048)
        parseval = np.abs(full / 2048 / (frames ** 2).sum(axis=1) - 1).max()

        ok = mfcc_shape == (15, 302) and mel_shape == (39, 88, 3) and pitch_ok and parseval <= 1e-3
        assert record(10, ok, f"mfcc {mfcc_shape}, mel {mel_shape}, pitch peak {peak:.1f} Hz "
                              f"(349.2 +- {2 * bin_hz:.1f}), Parseval rel err {parseval:.1e}")


class TestAuc:
    def test_c11(self):
        rng = np.random.default_rng(11)
        mismatches = 0
        for _ in range(1000):
            n = int(rng.integers(2, 201))
            labels = rng.integers(0, 2, n)
            labels[:2] = [0, 1]
            # coarse grid forces plenty of ties
            scores = rng.integers(0, int(rng.integers(2, 50)), n) / 7
            mismatches += auc_roc(scores, labels) != pairwise_auc(scores, labels)
        assert record(11, mismatches == 0, f"{mismatches} mismatches in 1000 instances (exact equality)")


class TestLeakage:
    def test_c12(self):
        manifest, signals = generate_synthetic_dataset(24, seed=9)
        entries = list(manifest.entries)
        e0 = entries[0]
        entries[0] = ManifestEntry(e0.path, e0.label, e0.source_id, "train")
        entries.append(ManifestEntry(entries[2].path, e0.label, e0.source_id, "test"))
        try:
            build_dataset(DatasetManifest(entries, manifest.ratios, manifest.seed), FeatureConfig("mfcc"), None, signals)
            rejected = False
        except LeakageError:
            rejected = True

        ds = build_dataset(manifest, FeatureConfig("mfcc"), AugmentPlan.mfcc_default(), signals)
        parts = split_manifest(manifest)
        test_sources = {manifest.entries[i].source_id for i in parts["test"]}
        aug_sources = set(np.asarray(ds.test.source_ids)[ds.test.augmented].tolist())
        contained = bool(aug_sources) and aug_sources <= test_sources
        ok = rejected and contained
        assert record(12, ok, f"straddling id rejected={rejected}, {int(ds.test.augmented.sum())} augmented test rows "
                              f"all from test sources={contained}")
