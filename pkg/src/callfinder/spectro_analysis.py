"""Species call statistics from average spectrograms: frequency range and
typical call duration, plus the clip-length suggestion derived from them."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DataError, ParameterError
from .preprocess import MelSpectrogram

DEFAULT_ACTIVITY_FRAC = 0.2
DEFAULT_EXPAND = 0.5
DEFAULT_DURATION_BUFFER = 0.5
CLIP_LEN_GRID_S = 0.5
MIN_BAND_HZ = 20.0


@dataclass(frozen=True)
class SpeciesCallStats:
    species: str
    low_hz: float
    high_hz: float
    mean_duration_s: float
    n_calls: int

    def __post_init__(self):
        if not (0.0 < self.low_hz < self.high_hz):
            raise ParameterError("frequency range must satisfy 0 < low < high")
        if self.mean_duration_s <= 0:
            raise ParameterError("mean_duration_s must be positive")


def average_spectrogram(specs: list[MelSpectrogram]) -> MelSpectrogram:
    """Element-wise mean of dB grids; axes are copied from the inputs."""
    if not specs:
        raise ParameterError("need at least one spectrogram to average")
    first = specs[0]
    for s in specs[1:]:
        if s.values.shape != first.values.shape:
            raise ParameterError("spectrogram shapes do not match")
        if not (np.array_equal(s.freq_axis, first.freq_axis)
                and np.array_equal(s.time_axis, first.time_axis)):
            raise ParameterError("spectrogram axes do not match")
    mean = np.mean([s.values for s in specs], axis=0)
    return MelSpectrogram(
        values=mean,
        freq_axis=first.freq_axis.copy(),
        time_axis=first.time_axis.copy(),
        floor_db=first.floor_db,
    )


def expand_band(low_hz: float, high_hz: float,
                expand: float = DEFAULT_EXPAND) -> tuple[float, float]:
    """Widen a band by expand * width / 2 on each side."""
    margin = expand * (high_hz - low_hz) / 2.0
    return low_hz - margin, high_hz + margin


def estimate_freq_range(
    avg: MelSpectrogram,
    activity_frac: float = DEFAULT_ACTIVITY_FRAC,
    expand: float = DEFAULT_EXPAND,
    min_hz: float = MIN_BAND_HZ,
    nyquist_hz: float = 11025.0,
) -> tuple[float, float]:
    """Frequency band of the active region of an average spectrogram.

    Cells within activity_frac of the dynamic range below the grid maximum
    count as active; the band spanned by the lowest and highest active mel
    bands is widened by 50% (default) and clamped to (min_hz, nyquist_hz).
    """
    if not (0.0 < activity_frac <= 1.0):
        raise ParameterError("activity_frac must be in (0, 1]")
    v = avg.values
    vmax = v.max()
    vmin = v.min()
    if vmax <= vmin:
        raise DataError("no signal detected: average spectrogram is flat")
    thresh = vmax - activity_frac * (vmax - vmin)
    active = np.where((v >= thresh).any(axis=1))[0]
    f_lo = float(avg.freq_axis[active[0]])
    f_hi = float(avg.freq_axis[active[-1]])
    lo, hi = expand_band(f_lo, f_hi, expand)
    return max(lo, min_hz), min(hi, nyquist_hz)


def estimate_call_duration(calls, buffer: float = DEFAULT_DURATION_BUFFER) -> float:
    """Mean raw call duration with a buffer fraction applied to each end.

    Accepts anything carrying start_s/end_s raw bounds (annotations or call
    segments).
    """
    durations = [c.end_s - c.start_s for c in calls]
    if not durations:
        raise ParameterError("need at least one annotated call")
    return float(np.mean(durations)) * (1.0 + 2.0 * buffer)


def suggest_clip_length(stats: list[SpeciesCallStats],
                        grid_s: float = CLIP_LEN_GRID_S) -> float:
    """Longest buffered duration across species, ceiled to the grid."""
    if not stats:
        raise ParameterError("need at least one species entry")
    longest = max(s.mean_duration_s for s in stats)
    # Guard the ceil against durations that are already exact grid multiples.
    return math.ceil(round(longest / grid_s, 9)) * grid_s
