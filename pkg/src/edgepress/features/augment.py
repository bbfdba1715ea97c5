"""Waveform and spectrogram augmentation.

All functions are deterministic given their inputs and the supplied
``numpy.random.Generator``.
"""

import numpy as np

from ..exceptions import ParameterError, ShapeError
from .dsp import istft, stft
from .wav import AudioSignal

VOCODER_FFT = 2048
VOCODER_HOP = 512

WAVEFORM_OPS = ("time_stretch", "shift", "gain", "trim")

# accepted ranges for each waveform op parameter
PARAM_RANGES = {
    "time_stretch": (0.5, 2.0),
    "shift": None,  # any integer smaller than the signal length
    "gain": (-24.0, 24.0),
    "trim": (10.0, 80.0),
}


def _vocoder_sizes(n):
    # short clips get a smaller frame so the vocoder still has several frames
    n_fft = VOCODER_FFT
    while n_fft > 64 and n < 2 * n_fft:
        n_fft //= 2
    return n_fft, n_fft // 4


def phase_vocoder(spec, rate, hop):
    """Time-scale a complex STFT by ``rate`` (>1 is faster, shorter)."""
    n_bins, n_frames = spec.shape
    steps = np.arange(0, n_frames, rate, dtype=np.float64)
    padded = np.pad(spec, ((0, 0), (0, 2)))
    left = steps.astype(np.int64)
    alpha = steps - left
    c0 = padded[:, left]
    c1 = padded[:, left + 1]
    mag = (1.0 - alpha) * np.abs(c0) + alpha * np.abs(c1)
    advance = np.linspace(0.0, np.pi * hop, n_bins)[:, None]
    dphase = np.angle(c1) - np.angle(c0) - advance
    dphase -= 2.0 * np.pi * np.round(dphase / (2.0 * np.pi))
    increments = advance + dphase
    phase = np.angle(spec[:, :1]) + np.concatenate([np.zeros((n_bins, 1)), np.cumsum(increments[:, :-1], axis=1)], axis=1)
    return mag * np.exp(1j * phase)


def time_stretch(signal, rate):
    """Change duration by ``1 / rate`` keeping pitch."""
    if rate <= 0:
        raise ParameterError(f"time-stretch rate must be positive, got {rate}")
    x = signal.samples
    if rate == 1.0:
        return AudioSignal(x.copy(), signal.sample_rate)
    n_fft, hop = _vocoder_sizes(len(x))
    spec = stft(x, n_fft, hop, center=True)
    out_len = int(round(len(x) / rate))
    y = istft(phase_vocoder(spec, rate, hop), hop, n_fft, length=out_len)
    return AudioSignal(np.clip(y, -1.0, 1.0).astype(np.float32), signal.sample_rate)


def _interp_to_length(x, n):
    if len(x) == n:
        return np.asarray(x, dtype=np.float64)
    pos = np.arange(n, dtype=np.float64) * (len(x) / n)
    return np.interp(pos, np.arange(len(x), dtype=np.float64), np.asarray(x, dtype=np.float64))


def pitch_shift(signal, n_steps=-4):
    """Shift pitch by ``n_steps`` semitones keeping the length.

    The signal is time-stretched by ``2 ** (-n_steps / 12)`` with a phase
    vocoder, then linearly resampled back to the original length.
    """
    if abs(n_steps) > 12:
        raise ParameterError(f"|n_steps| must be <= 12, got {n_steps}")
    x = signal.samples
    if n_steps == 0:
        return AudioSignal(x.copy(), signal.sample_rate)
    rate = 2.0 ** (-n_steps / 12.0)
    stretched = time_stretch(signal, rate).samples
    y = _interp_to_length(stretched, len(x))
    return AudioSignal(np.clip(y, -1.0, 1.0).astype(np.float32), signal.sample_rate)


def gain(signal, db):
    y = signal.samples.astype(np.float64) * 10.0 ** (db / 20.0)
    return AudioSignal(np.clip(y, -1.0, 1.0).astype(np.float32), signal.sample_rate)


def shift(signal, k):
    """Circular roll by ``k`` samples."""
    k = int(k)
    if abs(k) >= max(len(signal), 1):
        raise ParameterError(f"shift {k} must be smaller than the signal length {len(signal)}")
    return AudioSignal(np.roll(signal.samples, k), signal.sample_rate)


def trim(signal, top_db=60.0, frame=2048, hop=512):
    """Drop leading and trailing frames quieter than ``top_db`` below the peak frame."""
    x = signal.samples.astype(np.float64)
    if len(x) <= frame:
        return AudioSignal(signal.samples.copy(), signal.sample_rate)
    starts = np.arange(0, len(x) - frame + 1, hop)
    idx = starts[:, None] + np.arange(frame)[None, :]
    rms = np.sqrt(np.mean(x[idx] ** 2, axis=1))
    peak = rms.max()
    if peak <= 0:
        return AudioSignal(signal.samples.copy(), signal.sample_rate)
    db = 20.0 * np.log10(np.maximum(rms, 1e-10) / peak)
    loud = np.flatnonzero(db > -top_db)
    begin = starts[loud[0]]
    end = min(len(x), starts[loud[-1]] + frame)
    return AudioSignal(signal.samples[begin:end].copy(), signal.sample_rate)


def _resolve(name, value, rng):
    """Fixed values pass through, ``(low, high)`` pairs are sampled uniformly."""
    if isinstance(value, (tuple, list)):
        if len(value) != 2 or value[0] > value[1]:
            raise ParameterError(f"{name}: range must be (low, high), got {value}")
        lo, hi = value
        value = rng.integers(int(lo), int(hi) + 1) if name == "shift" else rng.uniform(lo, hi)
        return value, (lo, hi)
    return value, (value, value)


def augment_waveform(signal, ops, params=None, rng=None):
    """Apply the waveform ``ops`` in the order given.

    ``params`` maps op name to a fixed value or a ``(low, high)`` range:
    ``time_stretch`` rate, ``shift`` samples, ``gain`` dB, ``trim`` top_db.
    """
    params = dict(params or {})
    rng = rng if rng is not None else np.random.default_rng(0)
    defaults = {"time_stretch": 1.0, "shift": 0, "gain": 0.0, "trim": 60.0}
    out = signal
    for op in ops:
        if op not in WAVEFORM_OPS:
            raise ParameterError(f"unknown waveform op {op!r}; expected one of {WAVEFORM_OPS}")
        value, (lo, hi) = _resolve(op, params.get(op, defaults[op]), rng)
        bounds = PARAM_RANGES[op]
        if bounds is not None and not (bounds[0] <= lo and hi <= bounds[1]):
            raise ParameterError(f"{op}: value {params.get(op)} outside the allowed range {bounds}")
        if op == "time_stretch":
            out = time_stretch(out, float(value))
        elif op == "shift":
            out = shift(out, value)
        elif op == "gain":
            out = gain(out, float(value)) if value != 0 else out
        else:
            out = trim(out, float(value))
    if out is signal:
        out = AudioSignal(signal.samples.copy(), signal.sample_rate)
    return out


def spec_augment(mel_db, f_param=30, t_param=30, rng=None):
    """Mask one frequency band and one time band with the matrix mean.

    Band widths are drawn from U{0..F} and U{0..T}, start offsets uniformly
    over the positions where the band fits.
    """
    m = np.asarray(mel_db)
    if m.ndim != 2:
        raise ShapeError(f"spec_augment needs an (n_mels, frames) matrix, got {m.shape}")
    n_mels, frames = m.shape
    if not 0 <= f_param < n_mels:
        raise ParameterError(f"f_param must lie in [0, {n_mels}), got {f_param}")
    if not 0 <= t_param < frames:
        raise ParameterError(f"t_param must lie in [0, {frames}), got {t_param}")
    rng = rng if rng is not None else np.random.default_rng(0)
    out = m.copy()
    fill = m.mean(dtype=np.float64).astype(m.dtype)
    f = int(rng.integers(0, f_param + 1))
    f0 = int(rng.integers(0, n_mels - f + 1))
    t = int(rng.integers(0, t_param + 1))
    t0 = int(rng.integers(0, frames - t + 1))
    out[f0 : f0 + f, :] = fill
    out[:, t0 : t0 + t] = fill
    return out
