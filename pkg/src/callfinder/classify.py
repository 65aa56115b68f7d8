"""Target-species classification: median centroids in the reduced embedding
space, cosine scoring with softmax, a recall-targeted decision threshold,
and binary evaluation metrics."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .embed import EmbeddingVector, PcaModel, fit_pca, project
from .errors import DataError, ParameterError

log = logging.getLogger(__name__)

PROFILE_FORMAT = "species-profile/1"
SCORE_SPACES = ("softmax_probability", "raw_cosine")
DEFAULT_TARGET_RECALL = 0.9
SMALL_CLASS_WARNING = 5


def cosine_similarity(a, b) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ParameterError(f"dimension mismatch: {a.shape} vs {b.shape}")
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na <= 0 or nb <= 0:
        raise ParameterError("cosine similarity of a zero vector is undefined")
    return float(np.clip(a @ b / (na * nb), -1.0, 1.0))


def median_centroid(vectors: Sequence[np.ndarray]) -> np.ndarray:
    """Coordinate-wise median, re-normalized to unit L2 norm."""
    if len(vectors) == 0:
        raise ParameterError("need at least one vector for a centroid")
    med = np.median(np.stack([np.asarray(v, dtype=np.float64) for v in vectors]),
                    axis=0)
    norm = np.linalg.norm(med)
    if norm <= 0:
        raise ParameterError("median vector is zero: cannot be normalized")
    return med / norm


def score_call(values: np.ndarray, centroids: dict[str, np.ndarray]) -> dict[str, float]:
    """Softmax (temperature 1) over cosine similarities to each centroid."""
    if len(centroids) < 2:
        raise ParameterError("need at least 2 centroids for softmax scoring")
    names = list(centroids)
    sims = np.array([cosine_similarity(values, centroids[n]) for n in names])
    z = np.exp(sims - sims.max())
    probs = z / z.sum()
    return dict(zip(names, probs.tolist()))


def select_threshold(target_scores: Sequence[float],
                     target_recall: float = DEFAULT_TARGET_RECALL) -> float:
    """Largest observed score t with (count of scores >= t) / n >= target_recall.

    Classifying score >= t as positive on the training scores then reaches the
    recall target with the fewest positives.
    """
    if not (0.0 < target_recall <= 1.0):
        raise ParameterError("target_recall must be in (0, 1]")
    scores = sorted(float(s) for s in target_scores)
    n = len(scores)
    if n == 0:
        raise ParameterError("need at least one training score")
    # Epsilon guards float products like 0.9 * 10 landing just above an integer.
    need = min(max(math.ceil(target_recall * n - 1e-9), 1), n)
    return scores[n - need]


@dataclass(eq=False)
class SpeciesProfile:
    """The persisted trained artifact for one target species."""

    target_species: str
    centroids: dict[str, np.ndarray]
    pca: PcaModel
    threshold: float
    score_space: str
    target_recall: float
    achieved_training_recall: float
    provider_id: str
    preprocessing: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.score_space not in SCORE_SPACES:
            raise ParameterError(f"unknown score space {self.score_space!r}")
        if self.target_species not in self.centroids:
            raise ParameterError(
                f"no centroid for target species {self.target_species!r}"
            )
        for name, c in self.centroids.items():
            c = np.asarray(c, dtype=np.float64)
            if abs(np.linalg.norm(c) - 1.0) > 1e-6:
                raise ParameterError(f"centroid for {name!r} is not unit norm")
            self.centroids[name] = c


def score_vector(values: np.ndarray, profile: SpeciesProfile) -> float:
    """Target-class score of an already-reduced vector in the profile's space."""
    if profile.score_space == "softmax_probability":
        return score_call(values, profile.centroids)[profile.target_species]
    return cosine_similarity(values, profile.centroids[profile.target_species])


def classify(vec: EmbeddingVector, profile: SpeciesProfile) -> tuple[bool, float]:
    """Reduce a raw embedding with the profile's PCA and threshold its score.

    The boundary is inclusive: score == threshold is positive, matching the
    counting rule in select_threshold.
    """
    reduced = project(profile.pca, vec)
    score = score_vector(reduced.values, profile)
    return score >= profile.threshold, score


def build_profile(
    embeddings_by_species: dict[str, list[EmbeddingVector]],
    target_species: str,
    variance_target: float = 0.95,
    score_space: str = "softmax_probability",
    target_recall: float = DEFAULT_TARGET_RECALL,
    provider_id: str = "",
    preprocessing: Optional[dict] = None,
) -> SpeciesProfile:
    """Fit PCA on all training calls, build per-species median centroids, and
    pick the recall-targeted threshold from the target class's own scores."""
    if target_species not in embeddings_by_species:
        available = ", ".join(sorted(embeddings_by_species))
        raise DataError(
            f"target species {target_species!r} not in training data "
            f"(available: {available})"
        )
    if len(embeddings_by_species) < 2:
        raise DataError("training data must contain at least 2 species")
    for name, vecs in embeddings_by_species.items():
        if not vecs:
            raise DataError(f"species {name!r} has no training calls")
        if len(vecs) < SMALL_CLASS_WARNING:
            log.warning("species %r has only %d training calls", name, len(vecs))

    all_vecs = [v for vecs in embeddings_by_species.values() for v in vecs]
    pca = fit_pca(all_vecs, variance_target=variance_target)
    reduced = {
        name: [project(pca, v).values for v in vecs]
        for name, vecs in embeddings_by_species.items()
    }
    centroids = {name: median_centroid(vs) for name, vs in reduced.items()}

    profile = SpeciesProfile(
        target_species=target_species,
        centroids=centroids,
        pca=pca,
        threshold=0.0,
        score_space=score_space,
        target_recall=target_recall,
        achieved_training_recall=1.0,
        provider_id=provider_id,
        preprocessing=dict(preprocessing or {}),
    )
    target_scores = [score_vector(v, profile) for v in reduced[target_species]]
    threshold = select_threshold(target_scores, target_recall)
    achieved = sum(s >= threshold for s in target_scores) / len(target_scores)
    profile.threshold = float(threshold)
    profile.achieved_training_recall = float(achieved)
    return profile


@dataclass(frozen=True)
class EvalMetrics:
    tp: int
    fp: int
    fn: int
    tn: int
    accuracy: float
    precision: Optional[float]
    recall: Optional[float]
    f1: Optional[float]


def evaluate(decisions: Sequence[tuple[bool, str]], target: str) -> EvalMetrics:
    """Binary confusion counts of (decision, true label) pairs against
    target-vs-rest, with undefined ratios reported as absent rather than 0."""
    if not decisions:
        raise ParameterError("need at least one decision to evaluate")
    tp = fp = fn = tn = 0
    for positive, label in decisions:
        is_target = label == target
        if positive and is_target:
            tp += 1
        elif positive:
            fp += 1
        elif is_target:
            fn += 1
        else:
            tn += 1
    total = tp + fp + fn + tn
    accuracy = (tp + tn) / total
    precision = tp / (tp + fp) if (tp + fp) > 0 else None
    recall = tp / (tp + fn) if (tp + fn) > 0 else None
    if precision is not None and recall is not None and (precision + recall) > 0:
        f1 = 2 * precision * recall / (precision + recall)
    else:
        f1 = None
    return EvalMetrics(tp=tp, fp=fp, fn=fn, tn=tn, accuracy=accuracy,
                       precision=precision, recall=recall, f1=f1)


# --- profile persistence ----------------------------------------------------


def profile_to_dict(profile: SpeciesProfile) -> dict:
    return {
        "format": PROFILE_FORMAT,
        "target_species": profile.target_species,
        "score_space": profile.score_space,
        "target_recall": profile.target_recall,
        "achieved_training_recall": profile.achieved_training_recall,
        "threshold": profile.threshold,
        "provider": profile.provider_id,
        "centroids": {k: v.tolist() for k, v in sorted(profile.centroids.items())},
        "pca": {
            "mean": profile.pca.mean.tolist(),
            "components": profile.pca.components.tolist(),
            "explained_variance_ratio":
                profile.pca.explained_variance_ratio.tolist(),
        },
        "preprocessing": profile.preprocessing,
    }


def save_profile(profile: SpeciesProfile, path) -> None:
    text = json.dumps(profile_to_dict(profile), indent=2, sort_keys=True)
    Path(path).write_text(text + "\n")


def load_profile(path) -> SpeciesProfile:
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot load profile {path}: {exc}") from exc
    if data.get("format") != PROFILE_FORMAT:
        raise DataError(
            f"profile {path}: unsupported format tag {data.get('format')!r}"
        )
    pca = PcaModel(
        mean=np.array(data["pca"]["mean"]),
        components=np.array(data["pca"]["components"]),
        explained_variance_ratio=np.array(
            data["pca"]["explained_variance_ratio"]
        ),
    )
    return SpeciesProfile(
        target_species=data["target_species"],
        centroids={k: np.array(v) for k, v in data["centroids"].items()},
        pca=pca,
        threshold=float(data["threshold"]),
        score_space=data["score_space"],
        target_recall=float(data["target_recall"]),
        achieved_training_recall=float(data["achieved_training_recall"]),
        provider_id=data.get("provider", ""),
        preprocessing=data.get("preprocessing", {}),
    )
