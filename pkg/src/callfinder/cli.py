"""Command-line workflow: analyze calls, rank embedding providers, train a
species profile, and run detection + evaluation over field recordings.

Exit codes: 0 success, 1 usage error, 2 data error, 3 bridge error.
"""

from __future__ import annotations

import csv
import json
import logging
import sys
from collections import defaultdict
from pathlib import Path

import click

from . import __version__
from .annotations import Annotation, missing_recordings, read_annotations
from .classify import evaluate, load_profile, save_profile
from .cluster_eval import ClusterReport, normalize_and_rank
from .config import (
    PipelineConfig,
    default_config,
    load_config,
    serialize_config,
)
from .embed import fit_pca, project, read_embeddings_file
from .errors import BridgeError, DataError, ParameterError
from .pipeline import (
    detect_many,
    field_config,
    match_detections,
    prepare_training_segments,
    train_profile,
)
from .preprocess import mel_spectrogram
from .spectro_analysis import (
    SpeciesCallStats,
    average_spectrogram,
    estimate_call_duration,
    estimate_freq_range,
    suggest_clip_length,
)

log = logging.getLogger("callfinder")

EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_BRIDGE = 3


def _load_cfg(config_path) -> PipelineConfig:
    if config_path is None:
        return default_config()
    return load_config(config_path)


@click.group()
@click.version_option(__version__)
def cli():
    """Build one-shot bird call detectors from a handful of recordings."""


@cli.group("config")
def config_group():
    """Configuration helpers."""


@config_group.command("init")
@click.option("--out", type=click.Path(dir_okay=False), default=None,
              help="Write the default config here instead of stdout.")
def config_init(out):
    """Print a config file with every default spelled out."""
    text = serialize_config(default_config())
    if out:
        Path(out).write_text(text)
        click.echo(f"wrote {out}")
    else:
        click.echo(text, nl=False)


@cli.command()
@click.option("--annotations", "annotations_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--out", type=click.Path(dir_okay=False), default=None)
@click.option("--images", is_flag=True, help="Render average spectrogram PNGs.")
def analyze(annotations_path, config_path, out, images):
    """Per-species frequency range, call duration, and clip-length suggestion."""
    cfg = _load_cfg(config_path)
    annotations = read_annotations(annotations_path)
    if not annotations:
        raise ParameterError(f"{annotations_path}: no annotation rows")
    missing = missing_recordings(annotations, cfg.data_root)
    if missing:
        raise DataError(
            "missing recordings: " + ", ".join(missing)
        )

    segments = prepare_training_segments(annotations, cfg)
    by_species = defaultdict(list)
    for seg in segments:
        by_species[seg.label].append(seg)

    stats = []
    averages = {}
    for species in sorted(by_species):
        segs = by_species[species]
        mels = [mel_spectrogram(s) for s in segs]
        avg = average_spectrogram(mels)
        averages[species] = avg
        low, high = estimate_freq_range(
            avg, nyquist_hz=cfg.sample_rate / 2.0
        )
        duration = estimate_call_duration(segs)
        stats.append(SpeciesCallStats(
            species=species, low_hz=low, high_hz=high,
            mean_duration_s=duration, n_calls=len(segs),
        ))

    report = {
        "species": [
            {
                "species": s.species,
                "low_hz": round(s.low_hz, 1),
                "high_hz": round(s.high_hz, 1),
                "buffered_duration_s": round(s.mean_duration_s, 3),
                "n_calls": s.n_calls,
            }
            for s in stats
        ],
        "suggested_clip_len_s": suggest_clip_length(stats),
    }
    text = json.dumps(report, indent=2, sort_keys=True)
    if out:
        Path(out).write_text(text + "\n")
    click.echo(text)

    if images:
        out_dir = Path(out).parent if out else Path(".")
        for species, avg in averages.items():
            png = out_dir / f"average-spectrogram-{species}.png"
            _render_spectrogram(avg, png, title=species)
            click.echo(f"wrote {png}")


def _render_spectrogram(mel, path, title="", events=None):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6, 4))
    extent = [mel.time_axis[0], mel.time_axis[-1],
              mel.freq_axis[0], mel.freq_axis[-1]]
    ax.imshow(mel.values, origin="lower", aspect="auto", extent=extent,
              cmap="magma")
    for start_s, end_s in events or []:
        ax.axvspan(start_s, end_s, color="red", alpha=0.3)
    ax.set_xlabel("time (s)")
    ax.set_ylabel("frequency (Hz)")
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


@cli.command()
@click.option("--metrics", "metrics_path", type=click.Path(exists=True, dir_okay=False),
              help="CSV of raw metric values: provider,silhouette,davies_bouldin,dunn[,n_components].")
@click.option("--embeddings", "embedding_paths", multiple=True,
              type=click.Path(exists=True, dir_okay=False),
              help="Exchange-format embedding file, named PROVIDER.tsv (repeatable).")
@click.option("--labels", "labels_path", type=click.Path(exists=True, dir_okay=False),
              help="CSV segment_id,label (required with --embeddings).")
@click.option("--variance-target", type=float, default=0.95, show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), default=None)
def rank(metrics_path, embedding_paths, labels_path, variance_target, out):
    """Rank embedding providers by normalized clustering quality."""
    if metrics_path and embedding_paths:
        raise ParameterError("pass either --metrics or --embeddings, not both")
    if metrics_path:
        reports = _reports_from_metrics_csv(metrics_path)
    elif embedding_paths:
        if not labels_path:
            raise ParameterError("--embeddings requires --labels")
        reports = _reports_from_embeddings(embedding_paths, labels_path,
                                           variance_target)
    else:
        raise ParameterError("pass --metrics or at least one --embeddings")
    if len(reports) < 2:
        raise ParameterError("need at least 2 providers to rank")

    ranked = normalize_and_rank(reports)
    payload = [
        {
            "provider": e.provider_id,
            "overall_score": round(e.overall_score, 4),
            "silhouette": e.silhouette,
            "davies_bouldin": e.davies_bouldin,
            "dunn": e.dunn,
            "n_components": e.n_components,
            "dunn_capped": e.dunn_capped,
        }
        for e in ranked.entries
    ]
    text = json.dumps(payload, indent=2, sort_keys=True)
    if out:
        Path(out).write_text(text + "\n")
    header = f"{'provider':<24}{'overall':>8}{'silh':>8}{'db':>8}{'dunn':>8}"
    click.echo(header)
    for e in ranked.entries:
        click.echo(
            f"{e.provider_id:<24}{e.overall_score:>8.3f}"
            f"{e.silhouette:>8.3f}{e.davies_bouldin:>8.3f}{e.dunn:>8.3f}"
        )


def _reports_from_metrics_csv(path) -> list[ClusterReport]:
    reports = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        required = {"provider", "silhouette", "davies_bouldin", "dunn"}
        if reader.fieldnames is None or not required <= set(reader.fieldnames):
            raise DataError(
                f"{path}: need columns provider,silhouette,davies_bouldin,dunn"
            )
        for lineno, row in enumerate(reader, start=2):
            try:
                n_comp = row.get("n_components")
                reports.append(ClusterReport(
                    provider_id=row["provider"].strip(),
                    silhouette=float(row["silhouette"]),
                    davies_bouldin=float(row["davies_bouldin"]),
                    dunn=float(row["dunn"]),
                    n_components=int(n_comp) if n_comp else None,
                ))
            except (ValueError, KeyError) as exc:
                raise DataError(f"{path} line {lineno}: {exc}") from exc
    return reports


def _reports_from_embeddings(paths, labels_path, variance_target):
    import numpy as np

    from .cluster_eval import evaluate_space

    labels_by_id = {}
    with open(labels_path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"segment_id", "label"} <= set(reader.fieldnames):
            raise DataError(f"{labels_path}: need columns segment_id,label")
        for row in reader:
            labels_by_id[row["segment_id"].strip()] = row["label"].strip()

    reports = []
    for path in paths:
        provider = Path(path).stem
        vectors = read_embeddings_file(path, provider)
        unlabeled = [v.segment_ref for v in vectors if v.segment_ref not in labels_by_id]
        if unlabeled:
            raise DataError(
                f"{path}: no label for segment {unlabeled[0]!r}"
            )
        pca = fit_pca(vectors, variance_target=variance_target)
        reduced = np.stack([project(pca, v).values for v in vectors])
        labels = [labels_by_id[v.segment_ref] for v in vectors]
        reports.append(evaluate_space(provider, reduced, labels,
                                      n_components=pca.n_components))
    return reports


@cli.command()
@click.option("--annotations", "annotations_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--target", required=True, help="Target species label.")
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--out", required=True, type=click.Path(dir_okay=False))
def train(annotations_path, target, config_path, out):
    """Train a species profile from annotated calls (no bandpass here)."""
    cfg = _load_cfg(config_path)
    annotations = read_annotations(annotations_path)
    if not annotations:
        raise ParameterError(f"{annotations_path}: no annotation rows")
    missing = missing_recordings(annotations, cfg.data_root)
    if missing:
        raise DataError("missing recordings: " + ", ".join(missing))

    profile = train_profile(annotations, target, cfg)
    save_profile(profile, out)

    counts = defaultdict(int)
    for ann in annotations:
        counts[ann.label] += 1
    click.echo(f"profile written to {out}")
    for species in sorted(counts):
        marker = " (target)" if species == target else ""
        click.echo(f"  {species}: {counts[species]} calls{marker}")
    click.echo(f"  threshold: {profile.threshold:.6f} ({profile.score_space})")
    click.echo(f"  training recall: {profile.achieved_training_recall:.3f} "
               f"(target {profile.target_recall})")


@cli.command()
@click.argument("recordings", nargs=-1, required=True,
                type=click.Path(exists=True, dir_okay=False))
@click.option("--profile", "profile_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--out", required=True, type=click.Path(dir_okay=False))
@click.option("--workers", type=int, default=None,
              help="Concurrent recordings (default from config).")
@click.option("--images", is_flag=True, help="Render annotated spectrograms.")
def detect(recordings, profile_path, config_path, out, workers, images):
    """Scan field recordings with a trained profile; emit one CSV row per event."""
    cfg = _load_cfg(config_path)
    profile = load_profile(profile_path)
    cfg = field_config(profile, cfg)
    if workers is not None:
        from dataclasses import replace

        if workers < 1:
            raise ParameterError("--workers must be >= 1")
        cfg = replace(cfg, workers=workers)

    rows, failures = detect_many(list(recordings), profile, cfg)
    if failures and len(failures) == len(recordings):
        raise DataError(
            "all recordings failed: " +
            "; ".join(f"{p}: {msg}" for p, msg in failures)
        )

    with open(out, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["recording", "start_s", "end_s", "score", "decision"])
        for row in rows:
            writer.writerow([
                Path(row.recording).name,
                repr(row.start_s), repr(row.end_s), repr(row.score),
                "positive" if row.positive else "negative",
            ])
    click.echo(f"{len(rows)} events -> {out}")
    for path, msg in failures:
        click.echo(f"skipped {path}: {msg}", err=True)

    if images:
        from .preprocess import segment_call

        out_dir = Path(out).parent
        by_rec = defaultdict(list)
        for row in rows:
            by_rec[row.recording].append(row)
        # Images are rendered from the canonical clip with event spans shaded.
        from .pipeline import load_canonical

        for rec, rec_rows in by_rec.items():
            clip = load_canonical(rec, cfg)
            seg = segment_call(clip, 0.0, clip.duration_s,
                               clip_len_s=clip.duration_s)
            mel = mel_spectrogram(seg)
            png = out_dir / f"detections-{Path(rec).stem}.png"
            _render_spectrogram(
                mel, png, title=Path(rec).name,
                events=[(r.start_s, r.end_s) for r in rec_rows],
            )
            click.echo(f"wrote {png}")


@cli.command("evaluate")
@click.option("--detections", "detections_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--truth", "truth_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--target", required=True, help="Target species label.")
@click.option("--min-overlap", type=float, default=0.5, show_default=True,
              help="Fraction of a truth interval a detection must cover.")
@click.option("--out", type=click.Path(dir_okay=False), default=None)
def evaluate_cmd(detections_path, truth_path, target, min_overlap, out):
    """Score a detections CSV against truth annotations."""
    truth = read_annotations(truth_path)
    if not truth:
        raise DataError(f"{truth_path}: empty truth annotations")
    detections = _read_detections(detections_path)
    decisions = match_detections(detections, truth, min_overlap_frac=min_overlap)
    metrics = evaluate(decisions, target)

    def fmt(x):
        return "n/a" if x is None else f"{x:.3f}"

    payload = {
        "tp": metrics.tp, "fp": metrics.fp,
        "fn": metrics.fn, "tn": metrics.tn,
        "accuracy": metrics.accuracy,
        "precision": metrics.precision,
        "recall": metrics.recall,
        "f1": metrics.f1,
    }
    if out:
        Path(out).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    click.echo(f"tp={metrics.tp} fp={metrics.fp} fn={metrics.fn} tn={metrics.tn}")
    click.echo(f"accuracy={fmt(metrics.accuracy)} precision={fmt(metrics.precision)} "
               f"recall={fmt(metrics.recall)} f1={fmt(metrics.f1)}")


def _read_detections(path):
    from .pipeline import DetectionRow

    rows = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        required = {"recording", "start_s", "end_s", "score", "decision"}
        if reader.fieldnames is None or not required <= set(reader.fieldnames):
            raise DataError(f"{path}: need columns {','.join(sorted(required))}")
        for lineno, row in enumerate(reader, start=2):
            try:
                rows.append(DetectionRow(
                    recording=row["recording"].strip(),
                    start_s=float(row["start_s"]),
                    end_s=float(row["end_s"]),
                    score=float(row["score"]),
                    positive=row["decision"].strip().lower() == "positive",
                ))
            except ValueError as exc:
                raise DataError(f"{path} line {lineno}: {exc}") from exc
    return rows


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    try:
        cli.main(args=argv, standalone_mode=False)
        return 0
    except click.exceptions.Exit as exc:
        return int(exc.exit_code)
    except click.UsageError as exc:
        exc.show()
        return EXIT_USAGE
    except click.ClickException as exc:
        exc.show()
        return EXIT_USAGE
    except ParameterError as exc:
        click.echo(f"error: {exc}", err=True)
        return EXIT_USAGE
    except BridgeError as exc:
        click.echo(f"bridge error: {exc}", err=True)
        return EXIT_BRIDGE
    except DataError as exc:
        click.echo(f"data error: {exc}", err=True)
        return EXIT_DATA
    except click.Abort:
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
