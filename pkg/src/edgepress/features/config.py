"""Feature extraction settings."""

from dataclasses import asdict, dataclass, field, fields

from ..exceptions import ConfigError

SAMPLE_RATE = 22050


def _check_positive(obj):
    for f in fields(obj):
        value = getattr(obj, f.name)
        if isinstance(value, bool) or value is None:
            continue
        if isinstance(value, (int, float)) and value <= 0:
            raise ConfigError(f"{type(obj).__name__}.{f.name} must be positive, got {value}")


@dataclass(frozen=True)
class MfccConfig:
    n_mfcc: int = 15
    frame: int = 2048
    hop: int = 512
    target_len: int = 154350
    n_mels: int = 128
    fmax: float = None
    top_db: float = 80.0
    sample_rate: int = SAMPLE_RATE

    def __post_init__(self):
        _check_positive(self)
        if self.fmax is not None and self.fmax > self.sample_rate / 2:
            raise ConfigError(f"fmax {self.fmax} exceeds the Nyquist frequency {self.sample_rate / 2}")
        if self.n_mfcc > self.n_mels:
            raise ConfigError(f"n_mfcc ({self.n_mfcc}) cannot exceed n_mels ({self.n_mels})")

    @property
    def frames(self):
        return 1 + self.target_len // self.hop

    @property
    def output_shape(self):
        return (self.n_mfcc, self.frames)


@dataclass(frozen=True)
class MelspecConfig:
    n_mel: int = 128
    hop: int = 128
    fmax: float = 8000.0
    n_fft: int = 512
    center: bool = True
    top_db: float = 80.0
    target_len: int = 156027
    out_h: int = 39
    out_w: int = 88
    channels: int = 3
    sample_rate: int = SAMPLE_RATE

    def __post_init__(self):
        _check_positive(self)
        if self.fmax > self.sample_rate / 2:
            raise ConfigError(f"fmax {self.fmax} exceeds the Nyquist frequency {self.sample_rate / 2}")
        if self.n_fft < self.hop:
            raise ConfigError(f"n_fft ({self.n_fft}) must be >= hop ({self.hop})")

    @property
    def frames(self):
        return 1 + self.target_len // self.hop

    @property
    def output_shape(self):
        return (self.out_h, self.out_w, self.channels)


@dataclass(frozen=True)
class FeatureConfig:
    mode: str = "mfcc"
    mfcc: MfccConfig = field(default_factory=MfccConfig)
    melspec: MelspecConfig = field(default_factory=MelspecConfig)

    def __post_init__(self):
        if self.mode not in ("mfcc", "melspec"):
            raise ConfigError(f"feature mode must be 'mfcc' or 'melspec', got {self.mode!r}")

    @property
    def active(self):
        return self.mfcc if self.mode == "mfcc" else self.melspec

    @property
    def output_shape(self):
        return self.active.output_shape

    @property
    def sample_rate(self):
        return self.active.sample_rate

    def to_dict(self):
        return {"mode": self.mode, "mfcc": asdict(self.mfcc), "melspec": asdict(self.melspec)}

    @classmethod
    def from_dict(cls, d):
        try:
            return cls(
                mode=d.get("mode", "mfcc"),
                mfcc=MfccConfig(**d.get("mfcc", {})),
                melspec=MelspecConfig(**d.get("melspec", {})),
            )
        except TypeError as exc:
            raise ConfigError(f"bad feature config: {exc}") from None
