"""Sliding-window segmentation of RR series and feature-matrix construction."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from . import hrv
from .errors import FitnessDegenerateError, InsufficientDataError, ValidationError
from .ingest import AnnotationSpan, StressLabel
from .hrv import RrSeries

logger = logging.getLogger(__name__)

MIN_USABLE_WINDOWS = 20
LABEL_COVERAGE_MIN = 0.5


class FeatureSet(Enum):
    STATISTICAL = "statistical"
    NONLINEAR = "nonlinear"
    FREQUENCY = "frequency"

    @property
    def schema(self) -> tuple[str, ...]:
        return {
            FeatureSet.STATISTICAL: hrv.StatFeatures.SCHEMA,
            FeatureSet.NONLINEAR: hrv.PoincareFeatures.SCHEMA,
            FeatureSet.FREQUENCY: hrv.FreqFeatures.SCHEMA,
        }[self]


@dataclass
class WindowParams:
    window_size_s: int
    overlap_pct: int

    def __post_init__(self):
        self.window_size_s = int(self.window_size_s)
        self.overlap_pct = int(self.overlap_pct)
        if self.window_size_s < 1:
            raise ValidationError(f"window size must be >= 1 s, got {self.window_size_s}")
        if not 0 <= self.overlap_pct <= 95:
            raise ValidationError(f"overlap must be in [0, 95] %, got {self.overlap_pct}")

    @property
    def step_s(self) -> int:
        # integer arithmetic avoids float fuzz in e.g. 30 * 0.9;
        # floored to whole seconds with a minimum of 1
        return max(1, (self.window_size_s * (100 - self.overlap_pct)) // 100)


@dataclass
class FeatureMatrix:
    feature_set: FeatureSet | None
    schema: tuple[str, ...]
    X: np.ndarray
    y: np.ndarray
    dropped_count: int = 0
    spans: list[tuple[float, float]] = field(default_factory=list)

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float)
        self.y = np.asarray(self.y, dtype=int)
        if self.X.ndim != 2 or self.X.shape[1] != len(self.schema):
            raise ValidationError(
                f"matrix width {self.X.shape} does not match schema of {len(self.schema)}"
            )
        if len(self.X) != len(self.y):
            raise ValidationError("X and y row counts differ")
        if len(self.X) and not np.all(np.isfinite(self.X)):
            raise ValidationError("feature matrix contains non-finite values")

    @property
    def n_rows(self) -> int:
        return len(self.X)

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(list(self.schema) + ["label"])
            for row, label in zip(self.X, self.y):
                writer.writerow([repr(float(v)) for v in row] + [int(label)])


def segment(record_duration_s: float, params: WindowParams) -> list[tuple[float, float]]:
    """Window spans [k*step, k*step + window] with end <= duration.

    Returns an empty list (with a warning) when the window exceeds the record.
    """
    w = params.window_size_s
    step = params.step_s
    if w > record_duration_s:
        logger.warning(
            "window of %d s exceeds record duration %.1f s; no windows produced",
            w, record_duration_s,
        )
        return []
    count = int(np.floor((record_duration_s - w) / step)) + 1
    return [(float(k * step), float(k * step + w)) for k in range(count)]


def label_window(
    span: tuple[float, float], annotations: list[AnnotationSpan]
) -> StressLabel | None:
    """Majority-overlap label with ties toward higher stress.

    Returns None (window dropped) when annotations cover less than half of
    the span.
    """
    start, end = span
    overlap_by_label: dict[StressLabel, float] = {}
    for a in annotations:
        overlap = min(end, a.end_s) - max(start, a.start_s)
        if overlap > 0:
            overlap_by_label[a.label] = overlap_by_label.get(a.label, 0.0) + overlap
    covered = sum(overlap_by_label.values())
    if covered < LABEL_COVERAGE_MIN * (end - start):
        return None
    best = max(overlap_by_label.values())
    winners = [label for label, v in overlap_by_label.items() if v == best]
    return max(winners)


def _window_rows(
    rr: RrSeries,
    annotations: list[AnnotationSpan],
    params: WindowParams,
    feature_set: FeatureSet,
    duration_s: float,
) -> tuple[list[np.ndarray], list[int], list[tuple[float, float]], int]:
    """Per-window feature vectors for one record; returns (rows, labels, spans, dropped)."""
    spans = segment(duration_s, params)
    beat_times = rr.beat_times_s
    rows: list[np.ndarray] = []
    labels: list[int] = []
    kept_spans: list[tuple[float, float]] = []
    dropped = 0
    for start, end in spans:
        label = label_window((start, end), annotations)
        if label is None:
            dropped += 1
            continue
        lo = int(np.searchsorted(beat_times, start, side="left"))
        hi = int(np.searchsorted(beat_times, end, side="left"))
        rr_slice = rr.rr_ms[lo : max(lo, hi - 1)]
        try:
            if feature_set is FeatureSet.STATISTICAL:
                vec = hrv.stat_features(rr_slice).as_vector()
            elif feature_set is FeatureSet.NONLINEAR:
                vec = hrv.poincare_features(rr_slice).as_vector()
            else:
                vec = hrv.freq_features(rr_slice, beat_times[lo + 1 : hi]).as_vector()
        except InsufficientDataError:
            dropped += 1
            continue
        if not np.all(np.isfinite(vec)):
            dropped += 1
            continue
        rows.append(vec)
        labels.append(int(label))
        kept_spans.append((start, end))
    return rows, labels, kept_spans, dropped


def _assemble(
    rows: list[np.ndarray],
    labels: list[int],
    spans: list[tuple[float, float]],
    dropped: int,
    feature_set: FeatureSet,
) -> FeatureMatrix:
    if len(rows) < MIN_USABLE_WINDOWS or len(set(labels)) < 2:
        raise FitnessDegenerateError(
            f"degenerate matrix: {len(rows)} usable windows "
            f"({len(set(labels))} distinct labels, {dropped} dropped)"
        )
    return FeatureMatrix(
        feature_set=feature_set,
        schema=feature_set.schema,
        X=np.vstack(rows),
        y=np.array(labels),
        dropped_count=dropped,
        spans=spans,
    )


def build_matrix(
    rr: RrSeries,
    annotations: list[AnnotationSpan],
    params: WindowParams,
    feature_set: FeatureSet,
    duration_s: float | None = None,
) -> FeatureMatrix:
    """Segment one record, label windows, and compute the selected feature set.

    Windows with insufficient data or without a majority label are dropped and
    counted.  Raises FitnessDegenerateError when fewer than 20 usable windows
    remain or fewer than 2 labels are represented.
    """
    if len(rr) == 0:
        raise FitnessDegenerateError("empty RR series")
    if duration_s is None:
        duration_s = float(rr.beat_times_s[-1])
    rows, labels, spans, dropped = _window_rows(rr, annotations, params, feature_set, duration_s)
    return _assemble(rows, labels, spans, dropped, feature_set)


@dataclass
class RecordRr:
    """Preprocessed record: RR series plus its annotations and duration."""

    record_id: str
    duration_s: float
    rr: RrSeries
    annotations: list[AnnotationSpan]


def build_matrix_pooled(
    dataset: list[RecordRr], params: WindowParams, feature_set: FeatureSet
) -> FeatureMatrix:
    """Pool windows from all records into one matrix (degeneracy checked pooled)."""
    if not dataset:
        raise ValidationError("dataset is empty")
    all_rows: list[np.ndarray] = []
    all_labels: list[int] = []
    all_spans: list[tuple[float, float]] = []
    dropped = 0
    for rec in dataset:
        rows, labels, spans, d = _window_rows(
            rec.rr, rec.annotations, params, feature_set, rec.duration_s
        )
        all_rows.extend(rows)
        all_labels.extend(labels)
        all_spans.extend(spans)
        dropped += d
    return _assemble(all_rows, all_labels, all_spans, dropped, feature_set)
