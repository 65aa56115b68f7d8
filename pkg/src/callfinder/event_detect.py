"""Wavelet-based event detection for continuous field recordings.

A recording's significant frequency band is found with an STFT, Morlet
wavelet coefficients are summed over log-spaced scales inside that band,
smoothed with a moving average, and thresholded relative to their mean.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import signal

from .audio_io import AudioClip
from .errors import ParameterError

MORLET_OMEGA0 = 6.0
DEFAULT_N_SCALES = 20
DEFAULT_SMOOTH_WINDOW_S = 0.15
DEFAULT_THRESHOLD_FRAC = 0.10
DEFAULT_MIN_DURATION_S = 0.5
DEFAULT_MERGE_GAP_S = 0.1
BAND_FLOOR_HZ = 20.0
BAND_CEIL_HZ = 8000.0

# threshold = (1 + frac) * mean. The alternative reading frac * mean sits
# below the mean and fires constantly on stationary features; it is kept
# selectable for comparison runs.
THRESHOLD_MODES = ("above_mean", "fraction_of_mean")


@dataclass(frozen=True)
class DetectionEvent:
    start_s: float
    end_s: float
    peak_feature: float

    @property
    def duration_s(self) -> float:
        return self.end_s - self.start_s


@dataclass(eq=False)
class FeatureSeries:
    """Per-sample nonnegative detection features."""

    values: np.ndarray
    sample_rate: int

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 1:
            raise ParameterError("feature values must be one-dimensional")
        if self.sample_rate <= 0:
            raise ParameterError("sample_rate must be positive")


def significant_band(
    clip: AudioClip,
    floor_hz: float = BAND_FLOOR_HZ,
    ceil_hz: float = BAND_CEIL_HZ,
    n_fft: int = 2048,
    hop: int = 512,
) -> tuple[float, float]:
    """Lowest and highest STFT bins whose time-averaged magnitude exceeds
    10% of the peak bin, clamped to [floor_hz, ceil_hz].

    Falls back to (floor_hz, ceil_hz) when nothing stands out (silence).
    """
    if clip.samples.size < n_fft:
        raise ParameterError(
            f"clip of {clip.samples.size} samples is shorter than the "
            f"STFT window ({n_fft})"
        )
    freqs, _, stft = signal.stft(
        clip.samples, fs=clip.sample_rate, window="hann",
        nperseg=n_fft, noverlap=n_fft - hop, boundary="zeros", padded=True,
    )
    avg = np.abs(stft).mean(axis=1)
    peak = avg.max()
    if peak <= 0.0:
        return floor_hz, ceil_hz
    sig = np.where(avg > 0.10 * peak)[0]
    if sig.size == 0:
        return floor_hz, ceil_hz
    lo_idx, hi_idx = sig[0], sig[-1]
    if lo_idx == hi_idx:  # single bin: widen so the band is non-degenerate
        lo_idx = max(lo_idx - 1, 0)
        hi_idx = min(hi_idx + 1, freqs.size - 1)
    fmin = float(np.clip(freqs[lo_idx], floor_hz, ceil_hz))
    fmax = float(np.clip(freqs[hi_idx], floor_hz, ceil_hz))
    if fmin >= fmax:
        return floor_hz, ceil_hz
    return fmin, fmax


def _morlet_kernel(scale: float, omega0: float = MORLET_OMEGA0) -> np.ndarray:
    """L2-normalized complex Morlet wavelet sampled at unit steps."""
    half = int(np.ceil(4.0 * scale))
    t = np.arange(-half, half + 1, dtype=np.float64)
    u = t / scale
    return (np.pi ** -0.25 / np.sqrt(scale)) * np.exp(1j * omega0 * u - u * u / 2.0)


def morlet_center_frequency(omega0: float = MORLET_OMEGA0) -> float:
    return omega0 / (2.0 * np.pi)


def cwt_features(
    clip: AudioClip,
    fmin: float,
    fmax: float,
    n_scales: int = DEFAULT_N_SCALES,
    omega0: float = MORLET_OMEGA0,
) -> FeatureSeries:
    """Sum of absolute Morlet coefficients over n_scales log-spaced scales.

    Scale centers run from fmax down to fmin; scale = fc * sample_rate / f
    with fc the wavelet's center frequency.
    """
    nyquist = clip.sample_rate / 2.0
    if not (0.0 < fmin < fmax <= nyquist):
        raise ParameterError(
            f"band ({fmin}, {fmax}) Hz must satisfy 0 < fmin < fmax <= Nyquist"
        )
    if n_scales < 1:
        raise ParameterError("n_scales must be >= 1")
    freqs = np.geomspace(fmax, fmin, n_scales)
    fc = morlet_center_frequency(omega0)
    total = np.zeros(clip.samples.size)
    for f in freqs:
        kernel = _morlet_kernel(fc * clip.sample_rate / f, omega0)
        coef = signal.fftconvolve(clip.samples, kernel, mode="same")
        total += np.abs(coef)
    return FeatureSeries(total, clip.sample_rate)


def smooth(features: FeatureSeries,
           window_s: float = DEFAULT_SMOOTH_WINDOW_S) -> FeatureSeries:
    """Centered moving average; shrinking windows at the edges.

    The window length is forced odd so the average stays symmetric around
    each sample (an even window would shift every interior sample by half a
    step).
    """
    if window_s <= 0:
        raise ParameterError("window_s must be positive")
    v = features.values
    n = v.size
    w = max(int(round(window_s * features.sample_rate)), 1)
    if w % 2 == 0:
        w += 1
    half = w // 2
    csum = np.concatenate([[0.0], np.cumsum(v)])
    idx = np.arange(n)
    lo = np.maximum(idx - half, 0)
    hi = np.minimum(idx + half + 1, n)
    out = (csum[hi] - csum[lo]) / (hi - lo)
    return FeatureSeries(out, features.sample_rate)


def detect_events(
    features: FeatureSeries,
    threshold_frac: float = DEFAULT_THRESHOLD_FRAC,
    min_duration_s: float = DEFAULT_MIN_DURATION_S,
    merge_gap_s: float = DEFAULT_MERGE_GAP_S,
    threshold_mode: str = "above_mean",
) -> list[DetectionEvent]:
    """Threshold the feature series into sorted, non-overlapping events.

    Runs above the threshold are merged across gaps shorter than
    merge_gap_s first, then events shorter than min_duration_s are dropped.
    """
    if threshold_mode not in THRESHOLD_MODES:
        raise ParameterError(f"unknown threshold mode {threshold_mode!r}")
    v = features.values
    sr = features.sample_rate
    mean = v.mean() if v.size else 0.0
    if threshold_mode == "above_mean":
        thresh = (1.0 + threshold_frac) * mean
    else:
        thresh = threshold_frac * mean

    active = v > thresh
    if not active.any():
        return []
    padded = np.concatenate([[False], active, [False]])
    trans = np.flatnonzero(np.diff(padded.astype(np.int8)))
    starts = trans[0::2]
    ends = trans[1::2]

    merge_gap = merge_gap_s * sr
    merged: list[list[int]] = []
    for s, e in zip(starts, ends):
        if merged and s - merged[-1][1] < merge_gap:
            merged[-1][1] = e
        else:
            merged.append([int(s), int(e)])

    min_len = min_duration_s * sr
    events = [
        DetectionEvent(
            start_s=s / sr,
            end_s=e / sr,
            peak_feature=float(v[s:e].max()),
        )
        for s, e in merged
        if (e - s) >= min_len
    ]
    return events
