"""Audio ingestion, spectral features, augmentation and dataset assembly."""

from .augment import augment_waveform, pitch_shift, spec_augment, time_stretch
from .config import FeatureConfig, MelspecConfig, MfccConfig
from .dataset import (
    AugmentPlan,
    Dataset,
    DatasetManifest,
    ManifestEntry,
    SplitData,
    build_dataset,
    check_leakage,
    extract_features,
    read_manifest,
    split_manifest,
    write_manifest,
)
from .dsp import (
    mel_filterbank,
    mel_spectrogram_db,
    mfcc,
    pad_or_trim,
    power_to_db,
    resample_linear,
    resize_normalize,
    stft,
)
from .synth import generate_synthetic_dataset
from .wav import AudioSignal, encode_wav, parse_wav, read_wav, write_wav

__all__ = [
    "AudioSignal",
    "AugmentPlan",
    "Dataset",
    "DatasetManifest",
    "FeatureConfig",
    "ManifestEntry",
    "MelspecConfig",
    "MfccConfig",
    "SplitData",
    "augment_waveform",
    "build_dataset",
    "check_leakage",
    "encode_wav",
    "extract_features",
    "generate_synthetic_dataset",
    "mel_filterbank",
    "mel_spectrogram_db",
    "mfcc",
    "pad_or_trim",
    "parse_wav",
    "pitch_shift",
    "power_to_db",
    "read_manifest",
    "read_wav",
    "resample_linear",
    "resize_normalize",
    "spec_augment",
    "split_manifest",
    "stft",
    "time_stretch",
    "write_manifest",
    "write_wav",
]

from .transformers import FeatureStandardizer, MelImageTransformer, MfccTransformer  # noqa: E402

__all__ += ["FeatureStandardizer", "MelImageTransformer", "MfccTransformer"]
