"""End-to-end flows shared by the CLI: training a species profile and
scanning field recordings with it.

Training-time calls are never bandpassed; the band is applied only on the
field/test path, matching how the profile's parameters were estimated.
"""

from __future__ import annotations

import logging
import tempfile
from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import audio_io, classify as classify_mod, event_detect, preprocess
from .annotations import Annotation
from .config import PipelineConfig
from .embed import (
    BASELINE_PROVIDER_ID,
    EmbeddingVector,
    baseline_embed,
    external_embed,
)
from .errors import BridgeError, DataError, SilentSegmentError
from .preprocess import CallSegment, DenoiseConfig

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class DetectionRow:
    recording: str
    start_s: float
    end_s: float
    score: float
    positive: bool


def load_canonical(path, cfg: PipelineConfig) -> audio_io.AudioClip:
    clip = audio_io.load_recording(path)
    return audio_io.resample(clip, cfg.sample_rate)


def _denoise_if_possible(clip, dn_cfg: DenoiseConfig):
    # Short clips (below one STFT window) pass through unchanged.
    if clip.samples.size < dn_cfg.n_fft:
        return clip
    return preprocess.denoise(clip, dn_cfg)


def prepare_training_segments(
    annotations: Sequence[Annotation], cfg: PipelineConfig
) -> list[CallSegment]:
    """Resample, denoise, and cut every annotated call (no bandpass)."""
    by_recording: dict[str, list[Annotation]] = defaultdict(list)
    for ann in annotations:
        by_recording[ann.recording].append(ann)

    segments: list[CallSegment] = []
    for recording in sorted(by_recording):
        clip = load_canonical(Path(cfg.data_root) / recording, cfg)
        clip = _denoise_if_possible(clip, cfg.denoise)
        for ann in sorted(by_recording[recording],
                          key=lambda a: (a.start_s, a.end_s, a.label)):
            try:
                seg = preprocess.segment_call(
                    clip, ann.start_s, ann.end_s,
                    clip_len_s=cfg.clip_len_s, label=ann.label,
                    target_db=cfg.amp_norm_db, norm_mode=cfg.amp_norm_mode,
                )
            except SilentSegmentError as exc:
                raise DataError(
                    f"{recording} [{ann.start_s}, {ann.end_s}]: {exc}"
                ) from exc
            segments.append(seg)
    return segments


def segment_ref(seg: CallSegment) -> str:
    return f"{seg.source_id}:{seg.start_s:.4f}-{seg.end_s:.4f}"


def embed_segments(
    segments: Sequence[CallSegment], cfg: PipelineConfig
) -> list[EmbeddingVector]:
    """Embed segments with the configured provider.

    The baseline provider consumes mel grids directly; external providers go
    through the bridge with segment WAVs materialized into a temp directory.
    """
    if cfg.provider == BASELINE_PROVIDER_ID:
        vectors = []
        for seg in segments:
            mel = preprocess.mel_spectrogram(seg)
            vectors.append(baseline_embed(mel, segment_ref=segment_ref(seg)))
        return vectors

    if not cfg.bridge_cmd:
        raise BridgeError(
            f"provider {cfg.provider!r} needs bridge_cmd in the config"
        )
    with tempfile.TemporaryDirectory(prefix="callfinder-segments-") as tmp:
        entries = []
        for i, seg in enumerate(segments):
            wav = Path(tmp) / f"segment-{i:05d}.wav"
            audio_io.write_wav(wav, seg.clip)
            entries.append((segment_ref(seg), str(wav)))
        return external_embed(entries, cfg.provider, cfg.bridge_cmd)


def train_profile(
    annotations: Sequence[Annotation],
    target_species: str,
    cfg: PipelineConfig,
) -> classify_mod.SpeciesProfile:
    segments = prepare_training_segments(annotations, cfg)
    vectors = embed_segments(segments, cfg)
    by_species: dict[str, list[EmbeddingVector]] = defaultdict(list)
    for seg, vec in zip(segments, vectors):
        by_species[seg.label].append(vec)
    preprocessing = {
        "sample_rate": cfg.sample_rate,
        "clip_len_s": cfg.clip_len_s,
        "band": list(cfg.band) if cfg.band else None,
        "denoise": {
            "n_fft": cfg.denoise.n_fft,
            "hop": cfg.denoise.hop,
            "threshold_stds": cfg.denoise.threshold_stds,
            "smooth_freq": cfg.denoise.smooth_freq,
            "smooth_time": cfg.denoise.smooth_time,
        },
        "event": {
            "threshold_frac": cfg.event.threshold_frac,
            "min_duration_s": cfg.event.min_duration_s,
            "merge_gap_s": cfg.event.merge_gap_s,
            "window_s": cfg.event.window_s,
            "threshold_mode": cfg.event.threshold_mode,
            "n_scales": cfg.event.n_scales,
            "band_floor_hz": cfg.event.band_floor_hz,
            "band_ceil_hz": cfg.event.band_ceil_hz,
        },
        "amp_norm_db": cfg.amp_norm_db,
        "amp_norm_mode": cfg.amp_norm_mode,
    }
    return classify_mod.build_profile(
        dict(by_species),
        target_species=target_species,
        variance_target=cfg.variance_target,
        score_space=cfg.score_space,
        target_recall=cfg.target_recall,
        provider_id=cfg.provider,
        preprocessing=preprocessing,
    )


def field_config(profile: classify_mod.SpeciesProfile,
                 cfg: PipelineConfig) -> PipelineConfig:
    """Override config preprocessing with the profile's stored snapshot, so
    field inference cannot silently diverge from training conditions."""
    p = profile.preprocessing
    if not p:
        return cfg
    from .config import config_from_dict, config_to_dict

    data = config_to_dict(cfg)
    data["sample_rate"] = p.get("sample_rate", cfg.sample_rate)
    data["clip_len_s"] = p.get("clip_len_s", cfg.clip_len_s)
    data["band"] = p.get("band", data["band"])
    data["amp_norm_db"] = p.get("amp_norm_db", cfg.amp_norm_db)
    data["amp_norm_mode"] = p.get("amp_norm_mode", cfg.amp_norm_mode)
    if "denoise" in p:
        data["denoise"] = dict(p["denoise"])
    if "event" in p:
        data["event"] = dict(p["event"])
    data["provider"] = profile.provider_id or cfg.provider
    return config_from_dict(data)


def detect_in_recording(
    path, profile: classify_mod.SpeciesProfile, cfg: PipelineConfig
) -> list[DetectionRow]:
    """Field path for one recording: bandpass + denoise, event detection,
    segmentation, embedding, classification."""
    clip = load_canonical(path, cfg)
    if cfg.band is not None:
        clip = preprocess.bandpass(clip, cfg.band[0], cfg.band[1])
    clip = _denoise_if_possible(clip, cfg.denoise)

    if clip.samples.size < 2048:
        return []
    fmin, fmax = event_detect.significant_band(
        clip, floor_hz=cfg.event.band_floor_hz, ceil_hz=cfg.event.band_ceil_hz
    )
    features = event_detect.cwt_features(clip, fmin, fmax,
                                         n_scales=cfg.event.n_scales)
    features = event_detect.smooth(features, window_s=cfg.event.window_s)
    events = event_detect.detect_events(
        features,
        threshold_frac=cfg.event.threshold_frac,
        min_duration_s=cfg.event.min_duration_s,
        merge_gap_s=cfg.event.merge_gap_s,
        threshold_mode=cfg.event.threshold_mode,
    )

    rows: list[DetectionRow] = []
    for ev in events:
        try:
            seg = preprocess.segment_call(
                clip, ev.start_s, min(ev.end_s, clip.duration_s),
                clip_len_s=cfg.clip_len_s,
                target_db=cfg.amp_norm_db, norm_mode=cfg.amp_norm_mode,
            )
        except SilentSegmentError:
            continue
        vec = embed_segments([seg], cfg)[0]
        positive, score = classify_mod.classify(vec, profile)
        rows.append(DetectionRow(
            recording=str(path), start_s=ev.start_s, end_s=ev.end_s,
            score=score, positive=positive,
        ))
    return rows


def detect_many(
    paths: Sequence, profile: classify_mod.SpeciesProfile, cfg: PipelineConfig
) -> tuple[list[DetectionRow], list[tuple[str, str]]]:
    """Run detection over recordings (optionally in parallel) and gather
    rows in a deterministic order. Per-recording failures are collected, not
    fatal, unless every recording fails."""
    failures: list[tuple[str, str]] = []
    rows: list[DetectionRow] = []

    def run(path):
        return detect_in_recording(path, profile, cfg)

    if cfg.workers > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(lambda p: _safe(run, p), paths))
    else:
        results = [_safe(run, p) for p in paths]

    for path, (res, err) in zip(paths, results):
        if err is not None:
            log.warning("skipping %s: %s", path, err)
            failures.append((str(path), err))
        else:
            rows.extend(res)
    rows.sort(key=lambda r: (r.recording, r.start_s, r.end_s))
    return rows, failures


def _safe(fn, arg):
    try:
        return fn(arg), None
    except Exception as exc:  # noqa: BLE001 - per-recording isolation
        return None, str(exc)


def match_detections(
    detections: Sequence[DetectionRow],
    truth: Sequence[Annotation],
    min_overlap_frac: float = 0.5,
) -> list[tuple[bool, str]]:
    """Assemble (decision, true label) pairs by interval overlap.

    A truth call counts as positively classified when any positive detection
    covers at least min_overlap_frac of it. Positive detections matching no
    truth call at all are counted as false positives against a background
    label.
    """
    by_recording: dict[str, list[DetectionRow]] = defaultdict(list)
    for det in detections:
        by_recording[Path(det.recording).name].append(det)

    used: set[int] = set()
    decisions: list[tuple[bool, str]] = []
    for ann in truth:
        dets = by_recording.get(Path(ann.recording).name, [])
        positive = False
        for det in dets:
            overlap = min(det.end_s, ann.end_s) - max(det.start_s, ann.start_s)
            if overlap >= min_overlap_frac * (ann.end_s - ann.start_s):
                used.add(id(det))
                if det.positive:
                    positive = True
        decisions.append((positive, ann.label))

    for dets in by_recording.values():
        for det in dets:
            if det.positive and id(det) not in used:
                decisions.append((True, "__background__"))
    return decisions
