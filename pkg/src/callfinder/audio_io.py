"""Loading field recordings and converting them to the canonical mono form.

All operations are out-of-place: they return new AudioClip objects and never
mutate their inputs, so they are safe to call concurrently across recordings.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

import numpy as np
from scipy.io import wavfile
from scipy.signal import resample_poly

from .errors import (
    AudioReadError,
    EmptyAudioError,
    ParameterError,
    SilentSegmentError,
    UnsupportedAudioError,
)

PIPELINE_RATE = 22050
DEFAULT_NORM_DB = -20.0

# Integer PCM is mapped onto [-1, 1] by the full-scale value of its dtype.
# scipy stores 24-bit samples left-justified in int32, so one int32 rule covers
# both 24- and 32-bit files.
_PCM_SCALE = {
    np.dtype(np.int16): 2.0**15,
    np.dtype(np.int32): 2.0**31,
}


@dataclass(eq=False)
class AudioClip:
    """Mono waveform at a known sample rate.

    samples are float64 in [-1, 1]; source_id is an opaque recording
    identifier carried through the pipeline for provenance.
    """

    samples: np.ndarray
    sample_rate: int
    source_id: str = ""

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1:
            raise ParameterError("AudioClip samples must be one-dimensional")
        if self.samples.size == 0:
            raise ParameterError("AudioClip samples must be non-empty")
        self.sample_rate = int(self.sample_rate)
        if self.sample_rate <= 0:
            raise ParameterError("AudioClip sample_rate must be positive")

    @property
    def duration_s(self) -> float:
        return self.samples.size / self.sample_rate

    def replace_samples(self, samples: np.ndarray) -> "AudioClip":
        return AudioClip(samples, self.sample_rate, self.source_id)


def load_recording(path) -> AudioClip:
    """Read a PCM WAV file as a mono AudioClip scaled to [-1, 1].

    Supports 16/24/32-bit integer and 32/64-bit float encodings.
    Multi-channel files are mean-mixed to mono.
    """
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            rate, data = wavfile.read(fh)
    except OSError as exc:
        raise AudioReadError(path, exc.strerror or str(exc)) from exc
    except ValueError as exc:
        raise UnsupportedAudioError(path, str(exc)) from exc

    if data.size == 0:
        raise EmptyAudioError(path)

    if data.dtype in _PCM_SCALE:
        samples = data.astype(np.float64) / _PCM_SCALE[data.dtype]
    elif data.dtype == np.uint8:
        samples = (data.astype(np.float64) - 128.0) / 128.0
    elif data.dtype in (np.dtype(np.float32), np.dtype(np.float64)):
        samples = data.astype(np.float64)
    else:
        raise UnsupportedAudioError(path, f"sample dtype {data.dtype}")

    if samples.ndim == 2:
        samples = samples.mean(axis=1)

    return AudioClip(samples, int(rate), source_id=path.stem)


def resample(clip: AudioClip, target_rate: int = PIPELINE_RATE) -> AudioClip:
    """Band-limited resampling to target_rate.

    Uses polyphase filtering on the exact rational rate ratio, so no imaging
    appears above the new Nyquist. A clip already at target_rate is returned
    unchanged.
    """
    if target_rate <= 0:
        raise ParameterError("target_rate must be positive")
    if clip.sample_rate == target_rate:
        return clip
    ratio = Fraction(int(target_rate), int(clip.sample_rate))
    out = resample_poly(clip.samples, ratio.numerator, ratio.denominator)
    return AudioClip(out, target_rate, clip.source_id)


def normalize_amplitude(
    clip: AudioClip, target_db: float = DEFAULT_NORM_DB, mode: str = "rms"
) -> AudioClip:
    """Scale the clip so its RMS (or peak) sits at target_db dBFS.

    mode "rms" matches perceptual loudness across call shapes and is robust
    to single-sample clicks; "peak" scales the maximum absolute sample.
    """
    if mode not in ("rms", "peak"):
        raise ParameterError(f"unknown normalization mode {mode!r}")
    target = 10.0 ** (target_db / 20.0)
    if mode == "rms":
        level = float(np.sqrt(np.mean(clip.samples**2)))
    else:
        level = float(np.max(np.abs(clip.samples)))
    if level <= 0.0:
        raise SilentSegmentError(
            f"silent segment (source {clip.source_id or '<unknown>'}): "
            "cannot be normalized"
        )
    return clip.replace_samples(clip.samples * (target / level))


def write_wav(path, clip: AudioClip) -> None:
    """Write a clip as 32-bit float WAV (used for segment exchange files)."""
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    wavfile.write(path, clip.sample_rate, clip.samples.astype(np.float32))
