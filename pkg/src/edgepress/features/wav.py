"""RIFF/WAVE PCM16 reading and writing."""

import io
import struct
import wave
from dataclasses import dataclass

import numpy as np

from ..exceptions import ParseError

CANONICAL_RATE = 22050

_PCM = 0x0001
_IEEE_FLOAT = 0x0003
_EXTENSIBLE = 0xFFFE


@dataclass
class AudioSignal:
    samples: np.ndarray
    sample_rate: int = CANONICAL_RATE

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float32).reshape(-1)
        if self.sample_rate <= 0:
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")

    def __len__(self):
        return len(self.samples)

    @property
    def duration(self):
        return len(self.samples) / self.sample_rate


def parse_wav(data):
    """Decode a PCM16 WAV byte string into a mono :class:`AudioSignal`.

    Samples are scaled by 1/32768 and multi-channel audio is averaged.
    """
    data = bytes(data)
    if len(data) < 12:
        raise ParseError("file too short for a RIFF header", 0)
    if data[0:4] != b"RIFF":
        raise ParseError(f"bad RIFF magic {data[0:4]!r}", 0)
    if data[8:12] != b"WAVE":
        raise ParseError(f"bad WAVE form type {data[8:12]!r}", 8)

    fmt = None
    pcm = None
    pos = 12
    while pos + 8 <= len(data):
        chunk_id = data[pos : pos + 4]
        (size,) = struct.unpack_from("<I", data, pos + 4)
        body = pos + 8
        if body + size > len(data):
            raise ParseError(f"chunk {chunk_id!r} declares {size} bytes but only {len(data) - body} remain", pos)
        if chunk_id == b"fmt ":
            if size < 16:
                raise ParseError(f"fmt chunk too small ({size} bytes)", pos)
            tag, channels, rate, _, block_align, bits = struct.unpack_from("<HHIIHH", data, body)
            if tag == _EXTENSIBLE and size >= 40:
                (tag,) = struct.unpack_from("<H", data, body + 24)
            fmt = (tag, channels, rate, block_align, bits, pos)
        elif chunk_id == b"data":
            pcm = (body, size)
        pos = body + size + (size & 1)
    if fmt is None:
        raise ParseError("no fmt chunk", pos)
    if pcm is None:
        raise ParseError("no data chunk", pos)

    tag, channels, rate, block_align, bits, fmt_pos = fmt
    if tag == _IEEE_FLOAT:
        raise ParseError("unsupported codec: IEEE float (only PCM16 is accepted)", fmt_pos + 8)
    if tag != _PCM:
        raise ParseError(f"unsupported codec tag {tag:#06x} (only PCM16 is accepted)", fmt_pos + 8)
    if bits != 16:
        raise ParseError(f"unsupported bit depth {bits} (only 16-bit PCM is accepted)", fmt_pos + 22)
    if channels < 1 or rate < 1:
        raise ParseError(f"invalid channel count {channels} or sample rate {rate}", fmt_pos + 10)
    start, size = pcm
    frame_bytes = 2 * channels
    if size % frame_bytes:
        raise ParseError(f"data chunk of {size} bytes is not a whole number of {frame_bytes}-byte frames", start)
    ints = np.frombuffer(data, dtype="<i2", count=size // 2, offset=start)
    samples = ints.astype(np.float32).reshape(-1, channels) / np.float32(32768.0)
    return AudioSignal(samples.mean(axis=1), rate)


def read_wav(path):
    with open(path, "rb") as fh:
        return parse_wav(fh.read())


def encode_wav(signal):
    """PCM16 mono bytes for ``signal`` (values clipped to the int16 range)."""
    ints = np.clip(np.round(np.asarray(signal.samples, dtype=np.float64) * 32768.0), -32768, 32767).astype("<i2")
    buf = io.BytesIO()
    with wave.open(buf, "wb") as w:
        w.setnchannels(1)
        w.setsampwidth(2)
        w.setframerate(int(signal.sample_rate))
        w.writeframes(ints.tobytes())
    return buf.getvalue()


def write_wav(path, signal):
    with open(path, "wb") as fh:
        fh.write(encode_wav(signal))
