"""Ultrasound articulatory-sensing toolkit.

End-to-end signal chain for near-ultrasonic speech sensing: multi-tone CW
synthesis, Doppler reflection simulation, receiver-side filtering and
feature extraction, contrastive and dual-MSE training objectives with
verified gradients, the dataset-construction protocol, and objective
evaluation metrics (STOI, LSD, SSIM, SNR).
"""

from .sensing import (
    SOUND_SPEED,
    MotionProfile,
    SampleBuffer,
    ToneConfig,
    doppler_shift,
    mix_at_snr,
    simulate_reflection,
    synth_multitone,
)
from .dsp import (
    ComplexSpectrogram,
    FilterCascade,
    MelFeature,
    design_elliptic,
    filter_apply,
    frequency_response,
    mel_filterbank,
    mel_spectrogram,
    resample_3to1,
    resample_rational,
    stft,
)
from .features import (
    DOPPLER_OFFSETS,
    AlignedPair,
    UltrasoundFeature,
    align,
    extract_mel_feature,
    extract_ultrasound_feature,
    load_feature,
    save_feature,
    temporal_diff,
    ultrasound_feature_from_capture,
)
from .losses import (
    LossValue,
    contrastive_loss,
    cosine_sim,
    dual_mse,
    grad_check,
    semantic_infonce,
    temporal_infonce,
)
from .metrics import MetricReport, lsd, measure_snr, ssim, stoi
from .dataset import (
    Manifest,
    ManifestEntry,
    MixSpec,
    build_mixtures,
    load_wav,
    save_wav,
    temporal_split,
)
from .config import PipelineConfig

__version__ = "0.1.0"
