"""Spectral front end: STFT, Slaney mel filterbank, dB scaling, MFCC.

Conventions follow the common Python audio stack so values are comparable:
periodic Hann window, reflect padding for centred frames, Slaney mel scale
with area normalisation, orthonormal DCT-II for cepstra.
"""

import numpy as np
import scipy.fft

from ..exceptions import DataError, ParameterError, ShapeError
from .wav import AudioSignal

AMIN = 1e-10


def _samples(signal):
    if isinstance(signal, AudioSignal):
        return signal.samples
    return np.asarray(signal, dtype=np.float32).reshape(-1)


def _rate(signal, default):
    return signal.sample_rate if isinstance(signal, AudioSignal) else default


def hann_window(n):
    """Periodic Hann window of length ``n`` (the DFT-even variant)."""
    return (0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)).astype(np.float64)


def frame_count(length, hop, n_fft=None, center=True):
    if center:
        return 1 + length // hop
    return 1 + (length - n_fft) // hop


def resample_linear(signal, target_rate):
    """Linear-interpolation resampler; output length ``round(len * target / src)``."""
    if target_rate <= 0:
        raise ParameterError(f"target_rate must be positive, got {target_rate}")
    x = signal.samples
    src = signal.sample_rate
    if target_rate == src:
        return AudioSignal(x.copy(), src)
    n_out = int(round(len(x) * target_rate / src))
    pos = np.arange(n_out, dtype=np.float64) * (src / target_rate)
    y = np.interp(pos, np.arange(len(x), dtype=np.float64), x.astype(np.float64))
    return AudioSignal(y.astype(np.float32), int(target_rate))


def pad_or_trim(signal, target_len, mode="end"):
    """Fix the length of ``signal`` to ``target_len`` samples.

    ``mode="end"`` pads zeros after the signal and keeps the leading samples
    when trimming. ``mode="center"`` splits the padding between both ends
    (extra sample at the end) and keeps the leading samples when trimming.
    """
    if target_len <= 0:
        raise ParameterError(f"target_len must be positive, got {target_len}")
    if mode not in ("end", "center"):
        raise ParameterError(f"mode must be 'end' or 'center', got {mode!r}")
    x = _samples(signal)
    rate = _rate(signal, 22050)
    n = len(x)
    if n >= target_len:
        return AudioSignal(x[:target_len].copy(), rate)
    missing = target_len - n
    before = missing // 2 if mode == "center" else 0
    out = np.zeros(target_len, dtype=np.float32)
    out[before : before + n] = x
    return AudioSignal(out, rate)


def stft(signal, n_fft=2048, hop=512, center=True):
    """Complex STFT, shape ``(n_fft // 2 + 1, frames)``."""
    if hop <= 0 or n_fft <= 0:
        raise ParameterError(f"n_fft and hop must be positive, got {n_fft}, {hop}")
    if n_fft < hop:
        raise ParameterError(f"n_fft ({n_fft}) must be >= hop ({hop})")
    x = _samples(signal).astype(np.float64)
    if len(x) < 1:
        raise DataError("cannot take the STFT of an empty signal")
    if center:
        pad = n_fft // 2
        if len(x) > pad:
            x = np.pad(x, pad, mode="reflect")
        else:
            # reflect padding needs more samples than the pad width
            x = np.pad(x, pad, mode="constant")
    if len(x) < n_fft:
        raise DataError(f"signal of {len(x)} samples is shorter than n_fft={n_fft}")
    frames = 1 + (len(x) - n_fft) // hop
    idx = np.arange(n_fft)[None, :] + hop * np.arange(frames)[:, None]
    windowed = x[idx] * hann_window(n_fft)
    return np.fft.rfft(windowed, axis=1).T


def istft(spec, hop, n_fft, length=None):
    """Overlap-add inverse of :func:`stft` with ``center=True``."""
    window = hann_window(n_fft)
    frames = spec.shape[1]
    chunks = np.fft.irfft(spec.T, n=n_fft, axis=1) * window
    total = n_fft + hop * (frames - 1)
    y = np.zeros(total)
    norm = np.zeros(total)
    for t in range(frames):
        s = t * hop
        y[s : s + n_fft] += chunks[t]
        norm[s : s + n_fft] += window**2
    nz = norm > 1e-10
    y[nz] /= norm[nz]
    y = y[n_fft // 2 :]
    if length is not None:
        y = y[:length] if len(y) >= length else np.pad(y, (0, length - len(y)))
    return y


def hz_to_mel(freq):
    """Slaney mel scale: linear below 1 kHz, logarithmic above."""
    freq = np.asarray(freq, dtype=np.float64)
    f_sp = 200.0 / 3
    mels = freq / f_sp
    min_log_hz = 1000.0
    min_log_mel = min_log_hz / f_sp
    logstep = np.log(6.4) / 27.0
    return np.where(freq >= min_log_hz, min_log_mel + np.log(np.maximum(freq, 1e-12) / min_log_hz) / logstep, mels)


def mel_to_hz(mels):
    mels = np.asarray(mels, dtype=np.float64)
    f_sp = 200.0 / 3
    min_log_hz = 1000.0
    min_log_mel = min_log_hz / f_sp
    logstep = np.log(6.4) / 27.0
    return np.where(mels >= min_log_mel, min_log_hz * np.exp(logstep * (mels - min_log_mel)), f_sp * mels)


def mel_center_frequencies(n_mels, fmax, fmin=0.0):
    """Peak frequencies (Hz) of the ``n_mels`` triangular filters."""
    edges = mel_to_hz(np.linspace(hz_to_mel(fmin), hz_to_mel(fmax), n_mels + 2))
    return edges[1:-1]


def mel_filterbank(sample_rate, n_fft, n_mels=128, fmax=None, fmin=0.0):
    """Area-normalised triangular mel filters, shape ``(n_mels, n_fft // 2 + 1)``."""
    if n_mels < 1:
        raise ParameterError(f"n_mels must be >= 1, got {n_mels}")
    nyquist = sample_rate / 2.0
    if fmax is None:
        fmax = nyquist
    if fmax > nyquist:
        raise ParameterError(f"fmax {fmax} exceeds the Nyquist frequency {nyquist}")
    if not 0 <= fmin < fmax:
        raise ParameterError(f"need 0 <= fmin < fmax, got fmin={fmin}, fmax={fmax}")
    fft_freqs = np.linspace(0.0, nyquist, 1 + n_fft // 2)
    edges = mel_to_hz(np.linspace(hz_to_mel(fmin), hz_to_mel(fmax), n_mels + 2))
    widths = np.diff(edges)
    ramps = edges[:, None] - fft_freqs[None, :]
    lower = -ramps[:-2] / widths[:-1, None]
    upper = ramps[2:] / widths[1:, None]
    weights = np.maximum(0.0, np.minimum(lower, upper))
    weights *= (2.0 / (edges[2:] - edges[:-2]))[:, None]
    return weights.astype(np.float32)


def power_to_db(power, ref=None, amin=AMIN, top_db=80.0):
    """``10 log10(power / ref)`` with ``ref`` defaulting to the global maximum."""
    power = np.asarray(power, dtype=np.float64)
    if ref is None:
        ref = float(power.max()) if power.size else 1.0
    db = 10.0 * np.log10(np.maximum(amin, power)) - 10.0 * np.log10(max(amin, ref))
    if top_db is not None:
        db = np.maximum(db, db.max() - top_db)
    return db


def mel_power(signal, sample_rate, n_fft, hop, n_mels, fmax, center=True):
    spec = stft(signal, n_fft, hop, center)
    power = spec.real**2 + spec.imag**2
    return mel_filterbank(sample_rate, n_fft, n_mels, fmax).astype(np.float64) @ power


def mel_spectrogram_db(signal, config=None):
    """Mel power spectrogram in dB relative to its maximum, ``(n_mels, frames)``."""
    from .config import MelspecConfig

    cfg = config if config is not None else MelspecConfig()
    cfg = getattr(cfg, "melspec", cfg)
    rate = _rate(signal, cfg.sample_rate)
    mel = mel_power(signal, rate, cfg.n_fft, cfg.hop, cfg.n_mel, cfg.fmax, cfg.center)
    return power_to_db(mel, top_db=cfg.top_db).astype(np.float32)


def cepstrum(log_mel, n_coeffs):
    """First ``n_coeffs`` orthonormal DCT-II coefficients along axis 0."""
    return scipy.fft.dct(np.asarray(log_mel, dtype=np.float64), type=2, norm="ortho", axis=0)[:n_coeffs]


def mfcc(signal, config=None):
    """MFCC matrix ``(n_mfcc, frames)`` for a signal already fixed to ``target_len``."""
    from .config import MfccConfig

    cfg = config if config is not None else MfccConfig()
    cfg = getattr(cfg, "mfcc", cfg)
    x = _samples(signal)
    if len(x) != cfg.target_len:
        raise ShapeError(f"mfcc expects {cfg.target_len} samples, got {len(x)} (pad_or_trim first)")
    rate = _rate(signal, cfg.sample_rate)
    mel = mel_power(x, rate, cfg.frame, cfg.hop, cfg.n_mels, cfg.fmax or rate / 2.0)
    return cepstrum(power_to_db(mel, top_db=cfg.top_db), cfg.n_mfcc).astype(np.float32)


def resize_bilinear(image, out_h, out_w):
    """Bilinear resize with half-pixel centres and edge clamping."""
    img = np.asarray(image, dtype=np.float64)
    in_h, in_w = img.shape

    def axis_weights(n_in, n_out):
        pos = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
        pos = np.clip(pos, 0.0, n_in - 1)
        lo = np.floor(pos).astype(np.int64)
        hi = np.minimum(lo + 1, n_in - 1)
        return lo, hi, pos - lo

    r0, r1, fr = axis_weights(in_h, out_h)
    c0, c1, fc = axis_weights(in_w, out_w)
    rows = img[r0] * (1 - fr)[:, None] + img[r1] * fr[:, None]
    return rows[:, c0] * (1 - fc) + rows[:, c1] * fc


def resize_normalize(mel_db, out_h=39, out_w=88, channels=3):
    """Min-max normalise to [0, 1], resize and replicate into ``(out_h, out_w, channels)``.

    A constant input has no range and maps to 0.5 everywhere.
    """
    m = np.asarray(mel_db, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] < 2 or m.shape[1] < 2:
        raise ShapeError(f"resize_normalize needs a matrix of at least 2x2, got {m.shape}")
    lo, hi = m.min(), m.max()
    norm = np.full_like(m, 0.5) if hi - lo <= 0 else (m - lo) / (hi - lo)
    img = resize_bilinear(norm, out_h, out_w)
    return np.repeat(img[:, :, None], channels, axis=2).astype(np.float32)
