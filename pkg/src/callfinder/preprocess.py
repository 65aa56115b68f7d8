"""Bandpass filtering, spectral-gating denoise, call segmentation, and the
fixed-size log-mel front end.

The mel grid is 227 bands x 227 frames. The hop length is derived from the
segment length so the frame count always lands on exactly 227, and the dB
grid is referenced to its own maximum with a -40 dB floor, which makes the
representation invariant to input gain.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import ndimage, signal

from .audio_io import AudioClip, DEFAULT_NORM_DB, normalize_amplitude
from .errors import ParameterError, SilentSegmentError

MEL_BANDS = 227
MEL_FRAMES = 227
MEL_FLOOR_DB = -40.0
DEFAULT_CLIP_LEN_S = 2.0

# Analysis FFT is zero-padded to at least this size; with 227 bands spanning
# 0..Nyquist the low-frequency filters are narrower than the raw bin spacing
# of the short analysis window, and padding keeps every filter non-empty.
_MIN_ANALYSIS_FFT = 2048


@dataclass(frozen=True)
class DenoiseConfig:
    """Stationary spectral-gating parameters.

    The per-frequency noise threshold is mean + threshold_stds * std of the
    STFT magnitude over time; bins below it are fully attenuated and the
    binary mask is then smoothed over a small time-frequency neighbourhood.
    """

    n_fft: int = 2048
    hop: int = 512
    threshold_stds: float = 1.5
    smooth_freq: int = 3
    smooth_time: int = 3

    def validate(self):
        if self.n_fft < 16 or self.hop <= 0 or self.hop > self.n_fft:
            raise ParameterError("invalid denoise STFT geometry")
        if self.threshold_stds < 0:
            raise ParameterError("threshold_stds must be non-negative")
        if self.smooth_freq < 1 or self.smooth_time < 1:
            raise ParameterError("mask smoothing extents must be >= 1")


@dataclass(eq=False)
class CallSegment:
    """A fixed-duration, normalized call excerpt with provenance.

    clip holds exactly clip_len seconds; start_s/end_s are the original call
    bounds inside the source recording (before padding or truncation).
    """

    clip: AudioClip
    source_id: str
    start_s: float
    end_s: float
    label: Optional[str] = None


@dataclass(eq=False)
class MelSpectrogram:
    """dB-scaled mel grid: values[band, frame], max 0 dB, floored at floor_db."""

    values: np.ndarray
    freq_axis: np.ndarray
    time_axis: np.ndarray
    floor_db: float = MEL_FLOOR_DB

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        self.freq_axis = np.asarray(self.freq_axis, dtype=np.float64)
        self.time_axis = np.asarray(self.time_axis, dtype=np.float64)
        if self.values.ndim != 2:
            raise ParameterError("MelSpectrogram values must be 2-D")
        if self.values.shape[0] != self.freq_axis.size:
            raise ParameterError("freq_axis length must match band count")
        if self.values.shape[1] != self.time_axis.size:
            raise ParameterError("time_axis length must match frame count")


def bandpass(clip: AudioClip, low_hz: float, high_hz: float, order: int = 4) -> AudioClip:
    """Zero-phase Butterworth bandpass between low_hz and high_hz.

    Applied forward-backward, so the passband stays flat and event timing is
    preserved for the detector downstream.
    """
    nyquist = clip.sample_rate / 2.0
    if not (0.0 < low_hz < high_hz < nyquist):
        raise ParameterError(
            f"band ({low_hz}, {high_hz}) Hz must satisfy 0 < low < high < "
            f"Nyquist ({nyquist} Hz)"
        )
    sos = signal.butter(order, [low_hz, high_hz], btype="bandpass",
                        fs=clip.sample_rate, output="sos")
    default_pad = 3 * (2 * sos.shape[0] + 1)
    padlen = min(default_pad, clip.samples.size - 1)
    out = signal.sosfiltfilt(sos, clip.samples, padlen=padlen)
    return clip.replace_samples(out)


def denoise(clip: AudioClip, cfg: DenoiseConfig | None = None) -> AudioClip:
    """Stationary spectral gating driven by the clip's own STFT statistics."""
    cfg = cfg or DenoiseConfig()
    cfg.validate()
    if clip.samples.size < cfg.n_fft:
        raise ParameterError(
            f"clip of {clip.samples.size} samples is shorter than the "
            f"STFT window ({cfg.n_fft})"
        )
    noverlap = cfg.n_fft - cfg.hop
    _, _, stft = signal.stft(
        clip.samples, fs=clip.sample_rate, window="hann",
        nperseg=cfg.n_fft, noverlap=noverlap, boundary="zeros", padded=True,
    )
    mag = np.abs(stft)
    thresh = mag.mean(axis=1) + cfg.threshold_stds * mag.std(axis=1)
    mask = (mag > thresh[:, None]).astype(np.float64)
    kernel = np.ones((cfg.smooth_freq, cfg.smooth_time))
    kernel /= kernel.sum()
    mask = ndimage.convolve(mask, kernel, mode="constant", cval=0.0)
    _, out = signal.istft(
        stft * mask, fs=clip.sample_rate, window="hann",
        nperseg=cfg.n_fft, noverlap=noverlap, boundary=True,
    )
    n = clip.samples.size
    if out.size < n:
        out = np.pad(out, (0, n - out.size))
    return clip.replace_samples(out[:n])


def segment_call(
    clip: AudioClip,
    start_s: float,
    end_s: float,
    clip_len_s: float = DEFAULT_CLIP_LEN_S,
    label: Optional[str] = None,
    target_db: float = DEFAULT_NORM_DB,
    norm_mode: str = "rms",
) -> CallSegment:
    """Cut one annotated call into a fixed-length, amplitude-normalized segment.

    Calls shorter than clip_len_s are centered with equal zero padding on each
    side; longer calls are truncated to a clip_len_s window centered on the
    call midpoint.
    """
    if not (0.0 <= start_s < end_s <= clip.duration_s + 1e-9):
        raise ParameterError(
            f"call interval [{start_s}, {end_s}] s is invalid for a "
            f"{clip.duration_s:.3f} s recording"
        )
    sr = clip.sample_rate
    i0 = int(round(start_s * sr))
    i1 = min(int(round(end_s * sr)), clip.samples.size)
    call = clip.samples[i0:i1]
    target_n = int(round(clip_len_s * sr))
    if target_n <= 0:
        raise ParameterError("clip_len_s must be positive")

    if call.size < target_n:
        pad = target_n - call.size
        left = pad // 2
        out = np.concatenate(
            [np.zeros(left), call, np.zeros(pad - left)]
        )
    elif call.size > target_n:
        off = (call.size - target_n) // 2
        out = call[off : off + target_n]
    else:
        out = call.copy()

    seg_clip = normalize_amplitude(
        AudioClip(out, sr, clip.source_id), target_db=target_db, mode=norm_mode
    )
    return CallSegment(
        clip=seg_clip,
        source_id=clip.source_id,
        start_s=float(start_s),
        end_s=float(end_s),
        label=label,
    )


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(n_mels: int, n_fft: int, sample_rate: int,
                   fmin: float = 0.0, fmax: float | None = None):
    """Triangular mel filters on the rfft grid.

    Returns (filterbank [n_mels, n_bins], band edges in Hz [n_mels + 2]).
    """
    if fmax is None:
        fmax = sample_rate / 2.0
    mel_pts = np.linspace(hz_to_mel(fmin), hz_to_mel(fmax), n_mels + 2)
    hz_pts = mel_to_hz(mel_pts)
    bins = np.fft.rfftfreq(n_fft, d=1.0 / sample_rate)
    lo = hz_pts[:-2, None]
    center = hz_pts[1:-1, None]
    hi = hz_pts[2:, None]
    up = (bins[None, :] - lo) / np.maximum(center - lo, 1e-12)
    down = (hi - bins[None, :]) / np.maximum(hi - center, 1e-12)
    fb = np.maximum(0.0, np.minimum(up, down))
    return fb, hz_pts


def _next_pow2(n: int) -> int:
    return 1 << (int(n) - 1).bit_length()


def mel_spectrogram(
    segment: CallSegment,
    n_mels: int = MEL_BANDS,
    n_frames: int = MEL_FRAMES,
    floor_db: float = MEL_FLOOR_DB,
    fmin: float = 0.0,
    fmax: float | None = None,
) -> MelSpectrogram:
    """Fixed-size log-mel grid of one segment.

    hop = floor(n_samples / n_frames) and the analysis window is twice the
    hop rounded up to a power of two; the signal is end-padded so exactly
    n_frames frames exist. Power is converted to dB referenced to the grid
    maximum and floored at floor_db, so the result is independent of input
    gain by construction.
    """
    x = segment.clip.samples
    sr = segment.clip.sample_rate
    if x.size < n_frames:
        raise ParameterError("segment too short for the requested frame count")

    hop = x.size // n_frames
    win = _next_pow2(2 * hop)
    n_fft = max(win, _MIN_ANALYSIS_FFT)
    needed = (n_frames - 1) * hop + win
    if x.size < needed:
        x = np.pad(x, (0, needed - x.size))

    window = signal.get_window("hann", win, fftbins=True)
    starts = np.arange(n_frames) * hop
    frames = np.lib.stride_tricks.sliding_window_view(x, win)[starts]
    spectrum = np.fft.rfft(frames * window, n=n_fft, axis=1)
    power = np.abs(spectrum) ** 2

    fb, hz_pts = mel_filterbank(n_mels, n_fft, sr, fmin=fmin, fmax=fmax)
    mel_power = power @ fb.T  # [frame, band]

    ref = mel_power.max()
    if ref <= 0.0:
        raise SilentSegmentError(
            f"silent segment (source {segment.source_id or '<unknown>'}): "
            "no peak reference for the dB scale"
        )
    db = 10.0 * np.log10(np.maximum(mel_power, np.finfo(np.float64).tiny) / ref)
    db = np.maximum(db, floor_db)

    centers = hz_pts[1:-1]
    times = (starts + win / 2.0) / sr
    return MelSpectrogram(
        values=db.T, freq_axis=centers, time_axis=times, floor_db=floor_db
    )


def mel_band_edges(n_mels: int = MEL_BANDS, sample_rate: int = 22050,
                   fmin: float = 0.0, fmax: float | None = None) -> np.ndarray:
    """Hz edge points of the mel bands ([n_mels + 2] array)."""
    if fmax is None:
        fmax = sample_rate / 2.0
    return mel_to_hz(np.linspace(hz_to_mel(fmin), hz_to_mel(fmax), n_mels + 2))
