"""callfinder: few-shot bird call detectors from 1-3 labeled recordings."""

__version__ = "0.1.0"

from .audio_io import AudioClip, load_recording, normalize_amplitude, resample
from .classify import (
    EvalMetrics,
    SpeciesProfile,
    build_profile,
    classify,
    cosine_similarity,
    evaluate,
    load_profile,
    median_centroid,
    save_profile,
    score_call,
    select_threshold,
)
from .cluster_eval import (
    ClusterReport,
    RankedReport,
    davies_bouldin,
    dunn,
    normalize_and_rank,
    silhouette,
)
from .embed import (
    EmbeddingVector,
    PcaModel,
    baseline_embed,
    external_embed,
    fit_pca,
    project,
)
from .event_detect import (
    DetectionEvent,
    FeatureSeries,
    cwt_features,
    detect_events,
    significant_band,
    smooth,
)
from .preprocess import (
    CallSegment,
    DenoiseConfig,
    MelSpectrogram,
    bandpass,
    denoise,
    mel_spectrogram,
    segment_call,
)
from .spectro_analysis import (
    SpeciesCallStats,
    average_spectrogram,
    estimate_call_duration,
    estimate_freq_range,
    suggest_clip_length,
)

__all__ = [
    "AudioClip",
    "CallSegment",
    "ClusterReport",
    "DenoiseConfig",
    "DetectionEvent",
    "EmbeddingVector",
    "EvalMetrics",
    "FeatureSeries",
    "MelSpectrogram",
    "PcaModel",
    "RankedReport",
    "SpeciesCallStats",
    "SpeciesProfile",
    "average_spectrogram",
    "bandpass",
    "baseline_embed",
    "build_profile",
    "classify",
    "cosine_similarity",
    "cwt_features",
    "davies_bouldin",
    "denoise",
    "detect_events",
    "dunn",
    "estimate_call_duration",
    "estimate_freq_range",
    "evaluate",
    "external_embed",
    "fit_pca",
    "load_profile",
    "load_recording",
    "median_centroid",
    "mel_spectrogram",
    "normalize_amplitude",
    "normalize_and_rank",
    "project",
    "resample",
    "save_profile",
    "score_call",
    "segment_call",
    "select_threshold",
    "significant_band",
    "silhouette",
    "smooth",
    "suggest_clip_length",
]
