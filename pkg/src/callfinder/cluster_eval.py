"""Clustering quality of candidate embedding spaces: Silhouette,
Davies-Bouldin, and Dunn, plus cross-provider normalization and ranking.

Distances are Euclidean; on the L2-normalized PCA embeddings this ranks
identically to cosine distance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.spatial.distance import pdist, squareform

from .errors import DataError, ParameterError

ZERO_SPREAD_SCORE = 0.5
DUNN_CAP_FACTOR = 10.0


@dataclass(frozen=True)
class ClusterReport:
    provider_id: str
    silhouette: float
    davies_bouldin: float
    dunn: float
    n_components: Optional[int] = None


@dataclass(frozen=True)
class RankedEntry:
    provider_id: str
    silhouette: float
    davies_bouldin: float
    dunn: float
    n_components: Optional[int]
    silhouette_norm: float
    davies_bouldin_norm: float
    dunn_norm: float
    overall_score: float
    dunn_capped: bool = False


@dataclass(frozen=True)
class RankedReport:
    entries: tuple[RankedEntry, ...]

    def best(self) -> RankedEntry:
        return self.entries[0]


def _check_points(points, labels):
    X = np.asarray(points, dtype=np.float64)
    labels = np.asarray(labels)
    if X.ndim != 2 or X.shape[0] != labels.size:
        raise ParameterError("points must be an (n, d) array matching labels")
    if X.shape[0] < 3:
        raise ParameterError("need at least 3 points")
    classes = np.unique(labels)
    if classes.size < 2:
        raise ParameterError("need at least 2 classes")
    return X, labels, classes


def silhouette(points, labels) -> float:
    """Mean of (b - a) / max(a, b); singleton clusters contribute 0, and the
    0/0 case (all relevant distances zero) also counts as 0."""
    X, labels, classes = _check_points(points, labels)
    dist = squareform(pdist(X))
    members = {c: np.where(labels == c)[0] for c in classes}
    scores = np.zeros(X.shape[0])
    for c, idx in members.items():
        for i in idx:
            if idx.size == 1:
                continue
            a = dist[i, idx].sum() / (idx.size - 1)
            b = min(dist[i, members[o]].mean() for o in classes if o != c)
            denom = max(a, b)
            if denom > 0:
                scores[i] = (b - a) / denom
    return float(scores.mean())


def davies_bouldin(points, labels) -> float:
    """Mean over clusters of the worst (s_i + s_j) / d(c_i, c_j) ratio."""
    X, labels, classes = _check_points(points, labels)
    centroids = np.stack([X[labels == c].mean(axis=0) for c in classes])
    scatter = np.array([
        np.linalg.norm(X[labels == c] - centroids[k], axis=1).mean()
        for k, c in enumerate(classes)
    ])
    k = classes.size
    worst = np.zeros(k)
    for i in range(k):
        for j in range(k):
            if i == j:
                continue
            sep = np.linalg.norm(centroids[i] - centroids[j])
            if sep <= 0:
                raise DataError(
                    f"indistinguishable clusters: {classes[i]!r} and "
                    f"{classes[j]!r} share a centroid"
                )
            worst[i] = max(worst[i], (scatter[i] + scatter[j]) / sep)
    return float(worst.mean())


def dunn(points, labels) -> float:
    """Minimum inter-cluster distance over maximum cluster diameter.

    When every cluster has zero diameter the ratio is unbounded; +inf is
    returned and normalize_and_rank caps it against the other providers, so
    a division error never propagates.
    """
    X, labels, classes = _check_points(points, labels)
    dist = squareform(pdist(X))
    members = [np.where(labels == c)[0] for c in classes]
    min_inter = math.inf
    for i in range(len(members)):
        for j in range(i + 1, len(members)):
            min_inter = min(min_inter, dist[np.ix_(members[i], members[j])].min())
    max_diam = 0.0
    for idx in members:
        if idx.size > 1:
            max_diam = max(max_diam, dist[np.ix_(idx, idx)].max())
    if max_diam <= 0.0:
        return math.inf
    return float(min_inter / max_diam)


def evaluate_space(provider_id: str, points, labels,
                   n_components: Optional[int] = None) -> ClusterReport:
    return ClusterReport(
        provider_id=provider_id,
        silhouette=silhouette(points, labels),
        davies_bouldin=davies_bouldin(points, labels),
        dunn=dunn(points, labels),
        n_components=n_components,
    )


def _minmax(raw: np.ndarray, invert: bool = False) -> np.ndarray:
    lo, hi = raw.min(), raw.max()
    if hi <= lo:
        return np.full(raw.size, ZERO_SPREAD_SCORE)
    norm = (raw - lo) / (hi - lo)
    return 1.0 - norm if invert else norm


def normalize_and_rank(reports: Sequence[ClusterReport]) -> RankedReport:
    """Min-max normalize each metric across providers (Davies-Bouldin
    inverted so higher is better everywhere), average into an overall score,
    and sort descending.

    A metric with zero spread contributes 0.5 for every provider. Non-finite
    Dunn values (degenerate zero-diameter clusterings) are capped at the
    largest finite Dunn among the providers times 10 and flagged.
    """
    reports = list(reports)
    if len(reports) < 2:
        raise ParameterError("need at least 2 providers to rank")

    dunn_raw = np.array([r.dunn for r in reports], dtype=np.float64)
    capped = ~np.isfinite(dunn_raw)
    if capped.any():
        finite = dunn_raw[~capped]
        cap = finite.max() * DUNN_CAP_FACTOR if finite.size else 1.0
        dunn_raw[capped] = cap

    sil_norm = _minmax(np.array([r.silhouette for r in reports]))
    db_norm = _minmax(np.array([r.davies_bouldin for r in reports]), invert=True)
    dunn_norm = _minmax(dunn_raw)
    overall = (sil_norm + db_norm + dunn_norm) / 3.0

    entries = [
        RankedEntry(
            provider_id=r.provider_id,
            silhouette=r.silhouette,
            davies_bouldin=r.davies_bouldin,
            dunn=float(dunn_raw[i]),
            n_components=r.n_components,
            silhouette_norm=float(sil_norm[i]),
            davies_bouldin_norm=float(db_norm[i]),
            dunn_norm=float(dunn_norm[i]),
            overall_score=float(overall[i]),
            dunn_capped=bool(capped[i]),
        )
        for i, r in enumerate(reports)
    ]
    entries.sort(key=lambda e: (-e.overall_score, e.provider_id))
    return RankedReport(entries=tuple(entries))
