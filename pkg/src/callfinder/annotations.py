"""Annotation CSV ingestion.

Format: header ``recording,start_s,end_s,label``, one row per labeled call,
recording paths relative to a declared data root.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from .errors import AnnotationError

log = logging.getLogger(__name__)

HEADER = ["recording", "start_s", "end_s", "label"]


@dataclass(frozen=True)
class Annotation:
    recording: str
    start_s: float
    end_s: float
    label: str

    @property
    def duration_s(self) -> float:
        return self.end_s - self.start_s

    def resolve(self, data_root) -> Path:
        return Path(data_root) / self.recording


def read_annotations(path, dedupe: bool = True) -> list[Annotation]:
    """Parse an annotation CSV, validating every row.

    Row-level failures are reported with their line number. Exact duplicate
    rows are dropped with a warning so re-ingestion stays idempotent.
    """
    path = Path(path)
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise AnnotationError(f"cannot read annotations {path}: {exc}") from exc

    rows: list[Annotation] = []
    problems: list[str] = []
    seen = set()
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise AnnotationError(f"{path}: empty annotations file")
        if [h.strip() for h in header] != HEADER:
            raise AnnotationError(
                f"{path}: expected header {','.join(HEADER)!r}, "
                f"got {','.join(header)!r}"
            )
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(HEADER):
                problems.append(f"line {lineno}: expected {len(HEADER)} fields")
                continue
            recording, start_s, end_s, label = (c.strip() for c in row)
            try:
                start = float(start_s)
                end = float(end_s)
            except ValueError:
                problems.append(f"line {lineno}: non-numeric time bounds")
                continue
            if not recording:
                problems.append(f"line {lineno}: empty recording path")
                continue
            if not label:
                problems.append(f"line {lineno}: empty label")
                continue
            if start < 0 or end <= start:
                problems.append(
                    f"line {lineno}: invalid interval [{start}, {end}]"
                )
                continue
            key = (recording, start, end, label)
            if key in seen:
                if dedupe:
                    log.warning("%s line %d: duplicate annotation dropped", path, lineno)
                    continue
            seen.add(key)
            rows.append(Annotation(recording, start, end, label))

    if problems:
        raise AnnotationError(f"{path}: " + "; ".join(problems))
    return rows


def missing_recordings(annotations, data_root) -> list[str]:
    """All referenced recordings that do not exist (exhaustive, not first-failure)."""
    missing = []
    for rec in sorted({a.recording for a in annotations}):
        if not (Path(data_root) / rec).is_file():
            missing.append(rec)
    return missing
