"""Call embeddings: the built-in tile-pooling provider, the external-bridge
exchange protocol, and PCA reduction to a variance target with L2
normalization."""

from __future__ import annotations

import subprocess
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import BridgeError, ParameterError
from .preprocess import MelSpectrogram

DEFAULT_VARIANCE_TARGET = 0.95
BASELINE_PROVIDER_ID = "baseline"
BASELINE_GRID = 16


@dataclass(eq=False)
class EmbeddingVector:
    values: np.ndarray
    provider_id: str
    segment_ref: str = ""

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 1:
            raise ParameterError("embedding values must be one-dimensional")
        if not np.isfinite(self.values).all():
            raise ParameterError(
                f"non-finite embedding for segment {self.segment_ref!r}"
            )


@dataclass(eq=False)
class PcaModel:
    """Fitted PCA transform: centering mean, orthonormal components ordered
    by decreasing explained variance, and their variance ratios."""

    mean: np.ndarray
    components: np.ndarray
    explained_variance_ratio: np.ndarray

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=np.float64)
        self.components = np.asarray(self.components, dtype=np.float64)
        self.explained_variance_ratio = np.asarray(
            self.explained_variance_ratio, dtype=np.float64
        )

    @property
    def n_components(self) -> int:
        return self.components.shape[0]

    @property
    def input_dimension(self) -> int:
        return self.components.shape[1]


def baseline_embed(mel: MelSpectrogram, segment_ref: str = "",
                   grid: int = BASELINE_GRID) -> EmbeddingVector:
    """Deterministic stand-in embedding: grid x grid mean-pooled tiles of the
    mel grid, standardized within the vector.

    Intentionally crude; it exercises the pipeline without any external
    model. The last tile in each direction absorbs the remainder rows/cols.
    """
    v = mel.values
    if v.shape != (227, 227):
        raise ParameterError(f"expected a 227x227 grid, got {v.shape}")
    step = v.shape[0] // grid
    pooled = np.empty((grid, grid))
    for i in range(grid):
        r0 = i * step
        r1 = (i + 1) * step if i < grid - 1 else v.shape[0]
        for j in range(grid):
            c0 = j * step
            c1 = (j + 1) * step if j < grid - 1 else v.shape[1]
            pooled[i, j] = v[r0:r1, c0:c1].mean()
    flat = pooled.ravel()
    std = flat.std()
    if std > 0:
        flat = (flat - flat.mean()) / std
    else:
        flat = np.zeros_like(flat)
    return EmbeddingVector(flat, BASELINE_PROVIDER_ID, segment_ref)


# --- external bridge exchange protocol ------------------------------------
#
# Request manifest: one line per segment, "{segment_id}\t{absolute wav path}".
# Response: one line per segment, "{segment_id}\t{dim}\t{comma-separated
# floats}" with at least 9 significant digits per float.
# Invocation: bridge-cmd --manifest PATH --out PATH --model PROVIDER_ID.


def write_manifest(entries: Sequence[tuple[str, str]], path) -> None:
    lines = []
    for segment_id, wav_path in entries:
        if "\t" in segment_id or "\n" in segment_id:
            raise ParameterError(f"segment id {segment_id!r} contains separators")
        lines.append(f"{segment_id}\t{Path(wav_path).absolute()}")
    Path(path).write_text("".join(line + "\n" for line in lines))


def format_embedding_line(segment_id: str, values: np.ndarray) -> str:
    txt = ",".join(f"{float(v):.9g}" for v in values)
    return f"{segment_id}\t{len(values)}\t{txt}"


def write_embeddings_file(vectors: Sequence[EmbeddingVector], path) -> None:
    """Persist embeddings in the exchange format (one record per line)."""
    with open(path, "w") as fh:
        for vec in vectors:
            fh.write(format_embedding_line(vec.segment_ref, vec.values) + "\n")


def parse_embeddings_text(text: str, provider_id: str) -> dict[str, EmbeddingVector]:
    """Parse exchange-format records into a dict keyed by segment id."""
    out: dict[str, EmbeddingVector] = {}
    dim_seen: Optional[int] = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise BridgeError(f"malformed response line {lineno}: {line!r}")
        segment_id, dim_s, values_s = parts
        try:
            dim = int(dim_s)
            values = np.array([float(tok) for tok in values_s.split(",")])
        except ValueError as exc:
            raise BridgeError(f"malformed response line {lineno}: {exc}") from exc
        if values.size != dim:
            raise BridgeError(
                f"line {lineno}: declared dimension {dim} but "
                f"{values.size} values for segment {segment_id!r}"
            )
        if dim_seen is None:
            dim_seen = dim
        elif dim != dim_seen:
            raise BridgeError(
                f"dimension drift: segment {segment_id!r} has {dim}, "
                f"expected {dim_seen}"
            )
        if segment_id in out:
            raise BridgeError(f"duplicate response for segment {segment_id!r}")
        out[segment_id] = EmbeddingVector(values, provider_id, segment_id)
    return out


def read_embeddings_file(path, provider_id: str) -> list[EmbeddingVector]:
    return list(parse_embeddings_text(Path(path).read_text(), provider_id).values())


def external_embed(
    entries: Sequence[tuple[str, str]],
    provider_id: str,
    bridge_cmd: Sequence[str],
    work_dir=None,
) -> list[EmbeddingVector]:
    """Embed segments through the external bridge process.

    entries are (segment_id, wav path) pairs; the result preserves entry
    order and is validated against the manifest (one vector per segment,
    uniform dimension).
    """
    import tempfile

    if not bridge_cmd:
        raise BridgeError("no bridge command configured for external providers")
    entries = list(entries)
    if not entries:
        return []
    with tempfile.TemporaryDirectory(dir=work_dir) as tmp:
        manifest = Path(tmp) / "manifest.tsv"
        out_path = Path(tmp) / "embeddings.tsv"
        write_manifest(entries, manifest)
        cmd = list(bridge_cmd) + [
            "--manifest", str(manifest), "--out", str(out_path),
            "--model", provider_id,
        ]
        try:
            proc = subprocess.run(cmd, capture_output=True, text=True)
        except OSError as exc:
            raise BridgeError(f"cannot launch bridge {cmd[0]!r}: {exc}") from exc
        if proc.returncode != 0:
            detail = proc.stderr.strip() or proc.stdout.strip()
            raise BridgeError(
                f"bridge exited with status {proc.returncode}: {detail}"
            )
        if not out_path.is_file():
            raise BridgeError("bridge exited 0 but wrote no response file")
        by_id = parse_embeddings_text(out_path.read_text(), provider_id)

    wanted = [segment_id for segment_id, _ in entries]
    missing = [s for s in wanted if s not in by_id]
    if missing:
        raise BridgeError(f"incomplete response: missing segment {missing[0]!r}")
    extra = set(by_id) - set(wanted)
    if extra:
        raise BridgeError(f"unexpected segment {sorted(extra)[0]!r} in response")
    return [by_id[s] for s in wanted]


# --- PCA -------------------------------------------------------------------


def fit_pca(embeddings: Sequence[EmbeddingVector],
            variance_target: float = DEFAULT_VARIANCE_TARGET) -> PcaModel:
    """Fit PCA by SVD of the centered data matrix and keep the smallest
    component count whose cumulative explained variance meets the target.

    With s samples at most s - 1 components exist; the cumulative ratio always
    reaches 1.0 there, so the target is always attainable.
    """
    if not (0.0 < variance_target <= 1.0):
        raise ParameterError("variance_target must be in (0, 1]")
    if len(embeddings) < 2:
        raise ParameterError("need at least 2 embeddings to fit PCA")
    dims = {e.values.size for e in embeddings}
    if len(dims) != 1:
        raise ParameterError(f"mixed embedding dimensions: {sorted(dims)}")

    X = np.stack([e.values for e in embeddings])
    mean = X.mean(axis=0)
    Xc = X - mean
    _, s, vt = np.linalg.svd(Xc, full_matrices=False)
    var = s**2
    total = var.sum()
    if total <= 0.0:
        raise ParameterError("zero total variance: all embeddings identical")

    max_rank = min(len(embeddings) - 1, X.shape[1])
    ratio = var[:max_rank] / total
    cumulative = np.cumsum(ratio)
    # Tolerance guards the target==1.0 case against rounding at the last ratio.
    k = int(np.searchsorted(cumulative, variance_target - 1e-12) + 1)
    k = min(k, max_rank)

    components = vt[:k]
    # Canonical sign: the largest-magnitude coordinate of each component is
    # positive, so fits are reproducible across runs and platforms.
    for row in components:
        pivot = np.argmax(np.abs(row))
        if row[pivot] < 0:
            row *= -1.0
    return PcaModel(mean=mean, components=components,
                    explained_variance_ratio=ratio[:k])


def project_raw(pca: PcaModel, values: np.ndarray) -> np.ndarray:
    """Centered projection onto the retained components, no normalization."""
    values = np.asarray(values, dtype=np.float64)
    if values.shape != (pca.input_dimension,):
        raise ParameterError(
            f"vector dimension {values.shape} does not match PCA input "
            f"dimension {pca.input_dimension}"
        )
    return pca.components @ (values - pca.mean)


def project(pca: PcaModel, vec: EmbeddingVector) -> EmbeddingVector:
    """Project onto the retained components and scale to unit L2 norm."""
    y = project_raw(pca, vec.values)
    norm = float(np.linalg.norm(y))
    if norm <= 0.0:
        raise ParameterError(
            f"degenerate projection for segment {vec.segment_ref!r}: "
            "zero vector cannot be normalized"
        )
    return EmbeddingVector(y / norm, vec.provider_id, vec.segment_ref)
