"""Synthetic cough-like two-class corpus for desk-scale experiments."""

import numpy as np
import scipy.fft

from ..exceptions import ParameterError
from .dataset import DatasetManifest, ManifestEntry
from .wav import AudioSignal

SAMPLE_RATE = 22050


def _lowpass_noise(rng, n, cutoff, sr):
    spec = np.fft.rfft(rng.standard_normal(n))
    spec[np.fft.rfftfreq(n, 1.0 / sr) > cutoff] = 0.0
    y = np.fft.irfft(spec, n=n)
    return y / (np.std(y) + 1e-12)


def _burst(rng, sr):
    """Exponentially decaying band-limited transient with 1.5 to 3 kHz content."""
    dur = rng.uniform(0.15, 0.35)
    n = int(dur * sr)
    t = np.arange(n) / sr
    tau = rng.uniform(0.03, 0.08)
    tones = sum(
        rng.uniform(0.5, 1.0) * np.sin(2 * np.pi * rng.uniform(1500.0, 3000.0) * t + rng.uniform(0, 2 * np.pi))
        for _ in range(3)
    )
    return np.exp(-t / tau) * tones / 3.0


def synthesize_clip(rng, label, sr=SAMPLE_RATE, min_dur=2.0, max_dur=5.0):
    # a 5-smooth length keeps the FFT fast and the band limit exact
    n = scipy.fft.next_fast_len(int(rng.uniform(min_dur, max_dur) * sr), real=True)
    y = rng.uniform(0.02, 0.06) * _lowpass_noise(rng, n, 1000.0, sr)
    if label == 1:
        for _ in range(int(rng.integers(2, 5))):
            b = rng.uniform(0.15, 0.4) * _burst(rng, sr)
            start = int(rng.integers(0, n - len(b)))
            y[start : start + len(b)] += b
    return np.clip(y, -1.0, 1.0).astype(np.float32)


def generate_synthetic_dataset(n, seed=0, ratios=(0.7, 0.15, 0.15), sample_rate=SAMPLE_RATE):
    """Balanced synthetic corpus of ``n`` clips.

    Class 0 is noise band-limited to 1 kHz; class 1 adds 2 to 4 decaying
    bursts in the 1.5 to 3 kHz band. Returns ``(manifest, signals)`` where
    ``signals`` maps each entry path to its :class:`AudioSignal`.
    """
    if n < 8:
        raise ParameterError(f"need at least 8 clips, got {n}")
    rng = np.random.default_rng(seed)
    labels = rng.permutation(np.arange(n) % 2)
    entries = []
    signals = {}
    for i, label in enumerate(labels):
        clip_rng = np.random.default_rng([seed, i])
        sid = f"syn-{i:05d}"
        entries.append(ManifestEntry(path=sid, label=int(label), source_id=sid))
        signals[sid] = AudioSignal(synthesize_clip(clip_rng, int(label), sample_rate), sample_rate)
    return DatasetManifest(entries, ratios=tuple(ratios), seed=seed), signals
