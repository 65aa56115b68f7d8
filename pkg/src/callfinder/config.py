"""Pipeline configuration: one JSON document with explicit defaults.

Unknown keys are rejected outright; a silently ignored typo in a scientific
config is worse than a hard failure.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional

from .audio_io import PIPELINE_RATE
from .errors import ParameterError
from .preprocess import DenoiseConfig


@dataclass(frozen=True)
class EventConfig:
    threshold_frac: float = 0.10
    min_duration_s: float = 0.5
    merge_gap_s: float = 0.1
    window_s: float = 0.15
    threshold_mode: str = "above_mean"
    n_scales: int = 20
    band_floor_hz: float = 20.0
    band_ceil_hz: float = 8000.0

    def validate(self):
        if self.threshold_frac < 0:
            raise ParameterError("event.threshold_frac must be >= 0")
        if self.min_duration_s <= 0 or self.window_s <= 0:
            raise ParameterError("event durations must be positive")
        if self.merge_gap_s < 0:
            raise ParameterError("event.merge_gap_s must be >= 0")
        if self.threshold_mode not in ("above_mean", "fraction_of_mean"):
            raise ParameterError(
                f"unknown event.threshold_mode {self.threshold_mode!r}"
            )
        if self.n_scales < 1:
            raise ParameterError("event.n_scales must be >= 1")
        if not (0 < self.band_floor_hz < self.band_ceil_hz):
            raise ParameterError("event band clamp must satisfy 0 < floor < ceil")


@dataclass(frozen=True)
class PipelineConfig:
    data_root: str = "."
    sample_rate: int = PIPELINE_RATE
    clip_len_s: float = 2.0
    band: Optional[tuple[float, float]] = None
    denoise: DenoiseConfig = field(default_factory=DenoiseConfig)
    event: EventConfig = field(default_factory=EventConfig)
    provider: str = "baseline"
    variance_target: float = 0.95
    target_recall: float = 0.9
    score_space: str = "softmax_probability"
    amp_norm_db: float = -20.0
    amp_norm_mode: str = "rms"
    bridge_cmd: Optional[tuple[str, ...]] = None
    workers: int = 1

    def validate(self):
        if self.sample_rate <= 0:
            raise ParameterError("sample_rate must be positive")
        if self.clip_len_s <= 0:
            raise ParameterError("clip_len_s must be positive")
        nyquist = self.sample_rate / 2
        if self.band is not None:
            low, high = self.band
            if not (0 < low < high < nyquist):
                raise ParameterError(
                    f"band must satisfy 0 < low < high < Nyquist ({nyquist})"
                )
        if not (0.0 < self.variance_target <= 1.0):
            raise ParameterError("variance_target must be in (0, 1]")
        if not (0.0 < self.target_recall <= 1.0):
            raise ParameterError("target_recall must be in (0, 1]")
        if self.score_space not in ("softmax_probability", "raw_cosine"):
            raise ParameterError(f"unknown score_space {self.score_space!r}")
        if self.amp_norm_mode not in ("rms", "peak"):
            raise ParameterError(f"unknown amp_norm_mode {self.amp_norm_mode!r}")
        if self.workers < 1:
            raise ParameterError("workers must be >= 1")
        self.denoise.validate()
        self.event.validate()


def _from_section(cls, data: dict, section: str):
    allowed = {f.name for f in fields(cls)}
    unknown = set(data) - allowed
    if unknown:
        raise ParameterError(
            f"unknown key(s) in {section}: {', '.join(sorted(unknown))}"
        )
    return cls(**data)


def config_from_dict(data: dict) -> PipelineConfig:
    if not isinstance(data, dict):
        raise ParameterError("config must be a JSON object")
    data = dict(data)
    allowed = {f.name for f in fields(PipelineConfig)}
    unknown = set(data) - allowed
    if unknown:
        raise ParameterError(
            f"unknown config key(s): {', '.join(sorted(unknown))}"
        )
    if "denoise" in data:
        data["denoise"] = _from_section(DenoiseConfig, data["denoise"], "denoise")
    if "event" in data:
        data["event"] = _from_section(EventConfig, data["event"], "event")
    if data.get("band") is not None:
        band = data["band"]
        if not (isinstance(band, (list, tuple)) and len(band) == 2):
            raise ParameterError("band must be a [low_hz, high_hz] pair or null")
        data["band"] = (float(band[0]), float(band[1]))
    if data.get("bridge_cmd") is not None:
        cmd = data["bridge_cmd"]
        if not (isinstance(cmd, (list, tuple)) and all(isinstance(c, str) for c in cmd)):
            raise ParameterError("bridge_cmd must be a list of strings or null")
        data["bridge_cmd"] = tuple(cmd)
    try:
        cfg = PipelineConfig(**data)
    except TypeError as exc:
        raise ParameterError(f"invalid config: {exc}") from exc
    cfg.validate()
    return cfg


def config_to_dict(cfg: PipelineConfig) -> dict:
    out = asdict(cfg)
    out["band"] = list(cfg.band) if cfg.band is not None else None
    out["bridge_cmd"] = list(cfg.bridge_cmd) if cfg.bridge_cmd is not None else None
    return out


def serialize_config(cfg: PipelineConfig) -> str:
    return json.dumps(config_to_dict(cfg), indent=2, sort_keys=True) + "\n"


def load_config(path) -> PipelineConfig:
    try:
        data = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ParameterError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ParameterError(f"config {path} is not valid JSON: {exc}") from exc
    return config_from_dict(data)


def default_config() -> PipelineConfig:
    return PipelineConfig()
