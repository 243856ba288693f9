"""Loading of ECG recordings with stress annotations, plus synthetic ECG generation.

File formats:
  * ECG CSV: header ``time_s,ecg_mv``, rows in strictly increasing time.
  * Sidecar JSON next to the ECG file (same name, ``.json`` suffix):
    ``{"record_id": ..., "sampling_rate_hz": ...}``.
  * Annotation CSV: header ``start_s,end_s,label`` with label in {1,2,3}
    (1 = low, 2 = medium, 3 = high stress).
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field
from enum import IntEnum
from pathlib import Path

import numpy as np

from .errors import ParseError, ValidationError


class StressLabel(IntEnum):
    LOW = 0
    MEDIUM = 1
    HIGH = 2

    @classmethod
    def from_csv_value(cls, value: int) -> "StressLabel":
        if value not in (1, 2, 3):
            raise ValueError(f"annotation label must be 1, 2 or 3, got {value}")
        return cls(value - 1)

    def to_csv_value(self) -> int:
        return int(self) + 1


@dataclass
class AnnotationSpan:
    start_s: float
    end_s: float
    label: StressLabel

    def __post_init__(self):
        if not self.start_s < self.end_s:
            raise ValidationError(
                f"annotation span must have start < end, got [{self.start_s}, {self.end_s}]"
            )

    def duration(self) -> float:
        return self.end_s - self.start_s


@dataclass
class EcgRecord:
    record_id: str
    sampling_rate_hz: float
    samples: np.ndarray
    annotations: list[AnnotationSpan] = field(default_factory=list)

    def __post_init__(self):
        if self.sampling_rate_hz <= 0:
            raise ValidationError(f"sampling_rate_hz must be > 0, got {self.sampling_rate_hz}")
        self.samples = np.asarray(self.samples, dtype=float)

    @property
    def duration_s(self) -> float:
        return len(self.samples) / self.sampling_rate_hz

    def validate_annotations(self) -> None:
        """Check spans are non-overlapping; spans past the end only warn."""
        spans = sorted(self.annotations, key=lambda a: a.start_s)
        for a in spans:
            if a.start_s < 0 or a.end_s > self.duration_s + 1e-9:
                logging.getLogger(__name__).warning(
                    "%s: span [%g, %g] extends past record duration %.3f s",
                    self.record_id, a.start_s, a.end_s, self.duration_s,
                )
        for prev, cur in zip(spans, spans[1:]):
            if cur.start_s < prev.end_s - 1e-12:
                raise ValidationError(
                    f"{self.record_id}: spans [{prev.start_s}, {prev.end_s}] and "
                    f"[{cur.start_s}, {cur.end_s}] overlap"
                )


@dataclass
class SynthEcgConfig:
    duration_s: float
    sampling_rate_hz: float
    beat_times_s: np.ndarray
    noise_amplitude_mv: float = 0.0
    seed: int = 0

    def __post_init__(self):
        self.beat_times_s = np.asarray(self.beat_times_s, dtype=float)
        if self.noise_amplitude_mv < 0:
            raise ValidationError("noise_amplitude_mv must be >= 0")
        if len(self.beat_times_s) > 1 and not np.all(np.diff(self.beat_times_s) > 0):
            raise ValidationError("beat_times_s must be strictly increasing")
        if len(self.beat_times_s) and (
            self.beat_times_s[0] < 0 or self.beat_times_s[-1] > self.duration_s
        ):
            raise ValidationError("beat times must lie within [0, duration_s]")


# QRS-like pulse: raised cosine, 80 ms wide and 1 mV tall.  The band energy of
# this shape sits inside the 5-15 Hz passband used downstream.
PULSE_WIDTH_S = 0.08
PULSE_AMPLITUDE_MV = 1.0
MIN_BEAT_SPACING_S = 0.25


def _sidecar_path(ecg_path: Path) -> Path:
    return ecg_path.with_suffix(".json")


def load_record(ecg_path: str | Path, annotation_path: str | Path) -> EcgRecord:
    """Load an ECG CSV plus its sidecar manifest and annotation CSV.

    Raises ParseError (with file and line number) on malformed rows and
    ValidationError on overlapping spans or an empty sample set.
    """
    ecg_path = Path(ecg_path)
    annotation_path = Path(annotation_path)

    sidecar = _sidecar_path(ecg_path)
    try:
        meta = json.loads(sidecar.read_text())
    except FileNotFoundError:
        raise ParseError(f"{sidecar}: sidecar manifest not found") from None
    except json.JSONDecodeError as e:
        raise ParseError(f"{sidecar}: invalid JSON ({e})") from None
    try:
        record_id = str(meta["record_id"])
        rate = float(meta["sampling_rate_hz"])
    except (KeyError, TypeError, ValueError) as e:
        raise ParseError(f"{sidecar}: missing or invalid manifest field ({e})") from None

    samples = []
    prev_time = None
    with open(ecg_path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["time_s", "ecg_mv"]:
            raise ParseError(f"{ecg_path}:1: expected header 'time_s,ecg_mv', got {header}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 2:
                raise ParseError(f"{ecg_path}:{lineno}: expected 2 columns, got {len(row)}")
            try:
                t = float(row[0])
                v = float(row[1])
            except ValueError:
                raise ParseError(f"{ecg_path}:{lineno}: non-numeric value in {row}") from None
            if prev_time is not None and t <= prev_time:
                raise ParseError(f"{ecg_path}:{lineno}: time not strictly increasing")
            prev_time = t
            samples.append(v)
    if not samples:
        raise ValidationError(f"{ecg_path}: no samples")

    annotations = _load_annotations(annotation_path)
    record = EcgRecord(record_id, rate, np.array(samples), annotations)
    record.validate_annotations()
    return record


def _load_annotations(path: Path) -> list[AnnotationSpan]:
    spans = []
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["start_s", "end_s", "label"]:
            raise ParseError(f"{path}:1: expected header 'start_s,end_s,label', got {header}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 3:
                raise ParseError(f"{path}:{lineno}: expected 3 columns, got {len(row)}")
            try:
                start = float(row[0])
                end = float(row[1])
                raw_label = int(row[2])
            except ValueError:
                raise ParseError(f"{path}:{lineno}: non-numeric value in {row}") from None
            try:
                label = StressLabel.from_csv_value(raw_label)
            except ValueError as e:
                raise ParseError(f"{path}:{lineno}: {e}") from None
            try:
                spans.append(AnnotationSpan(start, end, label))
            except ValidationError as e:
                raise ParseError(f"{path}:{lineno}: {e}") from None
    return spans


def save_record(record: EcgRecord, ecg_path: str | Path, annotation_path: str | Path | None = None) -> None:
    """Write a record back to the CSV/sidecar format (exact float round-trip)."""
    ecg_path = Path(ecg_path)
    with open(ecg_path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["time_s", "ecg_mv"])
        rate = record.sampling_rate_hz
        for i, v in enumerate(record.samples):
            writer.writerow([repr(i / rate), repr(float(v))])
    _sidecar_path(ecg_path).write_text(
        json.dumps(
            {"record_id": record.record_id, "sampling_rate_hz": record.sampling_rate_hz},
            indent=2,
            sort_keys=True,
        )
        + "\n"
    )
    if annotation_path is not None:
        with open(annotation_path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["start_s", "end_s", "label"])
            for a in record.annotations:
                writer.writerow([repr(a.start_s), repr(a.end_s), a.label.to_csv_value()])


def synth_ecg(config: SynthEcgConfig) -> EcgRecord:
    """Generate an ECG-like waveform with one raised-cosine pulse per beat time.

    The same seed yields bit-identical output.  Raises ValidationError when
    successive beats are closer than 0.25 s (breaks detector assumptions).
    """
    beats = config.beat_times_s
    if len(beats) > 1 and np.min(np.diff(beats)) < MIN_BEAT_SPACING_S:
        raise ValidationError(
            f"beat spacing below {MIN_BEAT_SPACING_S} s is physiologically implausible"
        )
    rate = config.sampling_rate_hz
    n = int(round(config.duration_s * rate))
    samples = np.zeros(n)
    half = PULSE_WIDTH_S / 2
    for tb in beats:
        lo = max(0, int(np.ceil((tb - half) * rate)))
        hi = min(n - 1, int(np.floor((tb + half) * rate)))
        if hi < lo:
            continue
        t = np.arange(lo, hi + 1) / rate
        samples[lo : hi + 1] += (
            PULSE_AMPLITUDE_MV * 0.5 * (1.0 + np.cos(2 * np.pi * (t - tb) / PULSE_WIDTH_S))
        )
    if config.noise_amplitude_mv > 0:
        rng = np.random.default_rng(config.seed)
        samples = samples + rng.normal(0.0, config.noise_amplitude_mv, n)
    return EcgRecord(
        record_id=f"synth-{config.seed}",
        sampling_rate_hz=rate,
        samples=samples,
        annotations=[],
    )


@dataclass
class CorpusSpec:
    """Parameters for the labelled synthetic stress corpus.

    Each record is split into one contiguous block per stress class (order
    shuffled per record).  Class controls both the mean RR interval and the
    amplitude of a slow 0.1 Hz modulation of the RR series, so both time- and
    frequency-domain features carry signal.  A label-independent slow wander
    is added on top so that short windows face genuine class ambiguity and
    longer windows (which average the wander out) classify better.
    """

    n_records: int = 3
    duration_s: float = 600.0
    sampling_rate_hz: float = 200.0
    noise_amplitude_mv: float = 0.05
    rr_mean_ms: tuple[float, float, float] = (1000.0, 850.0, 700.0)  # low, medium, high
    rr_lf_amp_ms: tuple[float, float, float] = (20.0, 40.0, 60.0)
    rr_wander_amp_ms: tuple[float, float] = (90.0, 60.0)  # two slow drift tones
    rr_wander_period_s: tuple[float, float] = (83.0, 37.0)
    rr_jitter_ms: float = 12.0
    seed: int = 0


def make_stress_corpus(spec: CorpusSpec) -> list[EcgRecord]:
    """Build labelled synthetic records; deterministic in spec.seed."""
    records = []
    for i in range(spec.n_records):
        rng = np.random.default_rng([spec.seed, i])
        order = rng.permutation(3)
        block = spec.duration_s / 3.0
        phases = rng.uniform(0, 2 * np.pi, size=2)
        (a1, a2) = spec.rr_wander_amp_ms
        (p1, p2) = spec.rr_wander_period_s

        def wander(t: float) -> float:
            return a1 * np.sin(2 * np.pi * t / p1 + phases[0]) + a2 * np.sin(
                2 * np.pi * t / p2 + phases[1]
            )

        annotations = []
        beat_times = []
        t = 0.3  # small lead-in so the first pulse is fully inside the record
        for slot, cls in enumerate(order):
            start = slot * block
            end = start + block
            annotations.append(AnnotationSpan(start, end, StressLabel(int(cls))))
            base = spec.rr_mean_ms[cls]
            lf_amp = spec.rr_lf_amp_ms[cls]
            t = max(t, start + 0.3)
            while t < end - 0.3:
                beat_times.append(t)
                rr_ms = (
                    base
                    + wander(t)
                    + lf_amp * np.sin(2 * np.pi * 0.1 * t)
                    + rng.normal(0, spec.rr_jitter_ms)
                )
                t += max(rr_ms, 300.0) / 1000.0
        cfg = SynthEcgConfig(
            duration_s=spec.duration_s,
            sampling_rate_hz=spec.sampling_rate_hz,
            beat_times_s=np.array(beat_times),
            noise_amplitude_mv=spec.noise_amplitude_mv,
            seed=spec.seed * 1000 + i,
        )
        record = synth_ecg(cfg)
        record.record_id = f"stress-{spec.seed}-{i:02d}"
        record.annotations = annotations
        record.validate_annotations()
        records.append(record)
    return records


def write_corpus(records: list[EcgRecord], out_dir: str | Path) -> list[Path]:
    """Write records as ``<id>.ecg.csv`` + ``<id>.ecg.json`` + ``<id>.ann.csv``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for record in records:
        ecg_path = out_dir / f"{record.record_id}.ecg.csv"
        ann_path = out_dir / f"{record.record_id}.ann.csv"
        save_record(record, ecg_path, ann_path)
        paths.append(ecg_path)
    return paths
