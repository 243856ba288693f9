"""Command-line front end: reproducible preprocess / optimize / evaluate runs.

Every command resolves its configuration (JSON file plus flag overrides),
writes the result artifacts into --out, and drops a manifest.json capturing
the fully resolved config; re-running a command with --config manifest.json
reproduces the outputs byte-for-byte.  HRVOPT_THREADS caps parallelism.
"""

from __future__ import annotations

import argparse
import functools
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .dsp import FilterSpec, bandpass, resample
from .errors import FitnessDegenerateError, HrvOptError, ValidationError
from .forest import ForestParams, cv_accuracy
from .hrv import RrSeries, derive_rr
from .ingest import AnnotationSpan, CorpusSpec, StressLabel, load_record, make_stress_corpus, write_corpus
from .optimize import (
    BinSpec,
    DRIVEDB_BOUNDS,
    SIMULATOR_BOUNDS,
    FitnessCache,
    SearchTrace,
    SwarmConfig,
    evaluate_fitness,
    pso_search,
    random_search,
    region_report,
)
from .qrs import detect_r_peaks
from .report import render_region_heatmap, write_region_csv
from .windowing import FeatureSet, RecordRr, WindowParams, build_matrix_pooled

logger = logging.getLogger("hrvopt")

PRESET_BOUNDS = {"drivedb": DRIVEDB_BOUNDS, "simulator": SIMULATOR_BOUNDS}


@dataclass
class SwarmSettings:
    n_particles: int = 5
    max_iterations: int = 30
    c1: float = 2.05
    c2: float = 2.05
    inertia_start: float = 1.0
    damping: float = 0.9
    v_max: list[float] | None = None
    early_stop_accuracy: float = 1.0


@dataclass
class ForestSettings:
    n_trees: int = 100
    max_depth: int | None = None
    min_leaf: int = 1
    features_per_split: int | None = None


@dataclass
class FilterSettings:
    low_cut_hz: float = 5.0
    high_cut_hz: float = 15.0
    order: int = 4


@dataclass
class RunConfig:
    data_dir: str | None = None
    rr_dir: str | None = None
    out_dir: str = "out"
    working_rate_hz: float = 200.0
    filter: FilterSettings = field(default_factory=FilterSettings)
    feature_set: str = "statistical"
    preset: str = "drivedb"
    optimizer: str = "pso"
    swarm: SwarmSettings = field(default_factory=SwarmSettings)
    budget: int = 150
    forest: ForestSettings = field(default_factory=ForestSettings)
    seed: int = 0

    def __post_init__(self):
        if self.preset not in PRESET_BOUNDS:
            raise ValidationError(f"unknown preset {self.preset!r}")
        if self.optimizer not in ("pso", "random"):
            raise ValidationError(f"unknown optimizer {self.optimizer!r}")
        try:
            FeatureSet(self.feature_set)
        except ValueError:
            raise ValidationError(f"unknown feature set {self.feature_set!r}") from None

    @property
    def bounds(self):
        return PRESET_BOUNDS[self.preset]

    def swarm_config(self) -> SwarmConfig:
        s = self.swarm
        return SwarmConfig(
            n_particles=s.n_particles,
            max_iterations=s.max_iterations,
            c1=s.c1,
            c2=s.c2,
            inertia_start=s.inertia_start,
            damping=s.damping,
            bounds=self.bounds,
            v_max=tuple(s.v_max) if s.v_max else None,
            seed=self.seed,
            early_stop_accuracy=s.early_stop_accuracy,
        )

    def forest_params(self) -> ForestParams:
        f = self.forest
        return ForestParams(
            n_trees=f.n_trees,
            max_depth=f.max_depth,
            min_leaf=f.min_leaf,
            features_per_split=f.features_per_split,
            seed=self.seed,
        )

    def filter_spec(self) -> FilterSpec:
        return FilterSpec(
            low_cut_hz=self.filter.low_cut_hz,
            high_cut_hz=self.filter.high_cut_hz,
            order=self.filter.order,
            target_rate_hz=self.working_rate_hz,
        )


def load_config(path: str | Path) -> RunConfig:
    """Read a config JSON; a manifest (with a "config" key) is unwrapped."""
    data = json.loads(Path(path).read_text())
    if "config" in data and isinstance(data["config"], dict):
        data = data["config"]
    return config_from_dict(data)


def config_from_dict(data: dict) -> RunConfig:
    kwargs = dict(data)
    if "filter" in kwargs and isinstance(kwargs["filter"], dict):
        kwargs["filter"] = FilterSettings(**kwargs["filter"])
    if "swarm" in kwargs and isinstance(kwargs["swarm"], dict):
        kwargs["swarm"] = SwarmSettings(**kwargs["swarm"])
    if "forest" in kwargs and isinstance(kwargs["forest"], dict):
        kwargs["forest"] = ForestSettings(**kwargs["forest"])
    return RunConfig(**kwargs)


def n_threads() -> int:
    try:
        return max(1, int(os.environ.get("HRVOPT_THREADS", "1")))
    except ValueError:
        return 1


def _write_manifest(out_dir: Path, command: str, config: RunConfig) -> None:
    manifest = {
        "command": command,
        "config": asdict(config),
        "tool": "hrvopt",
        "version": __version__,
    }
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _resolve_config(args: argparse.Namespace) -> RunConfig:
    config = load_config(args.config) if args.config else RunConfig()
    overrides = {}
    for flag in ("seed", "feature_set", "optimizer", "preset", "budget"):
        value = getattr(args, flag, None)
        if value is not None:
            overrides[flag] = value
    if getattr(args, "data", None):
        overrides["data_dir"] = str(Path(args.data).resolve())
    if getattr(args, "rr", None):
        overrides["rr_dir"] = str(Path(args.rr).resolve())
    if getattr(args, "out", None):
        overrides["out_dir"] = str(Path(args.out).resolve())
    if overrides:
        data = asdict(config)
        data.update(overrides)
        config = config_from_dict(data)
    return config


# --- preprocess -----------------------------------------------------------


def _rr_to_dict(record_id: str, duration_s: float, rate_hz: float, rr: RrSeries,
                annotations: list[AnnotationSpan]) -> dict:
    return {
        "record_id": record_id,
        "duration_s": duration_s,
        "working_rate_hz": rate_hz,
        "beat_times_s": [float(t) for t in rr.beat_times_s],
        "rr_ms": [float(v) for v in rr.rr_ms],
        "rejected_count": rr.rejected_count,
        "annotations": [
            {"start_s": a.start_s, "end_s": a.end_s, "label": a.label.to_csv_value()}
            for a in annotations
        ],
    }


def load_rr_file(path: str | Path) -> RecordRr:
    d = json.loads(Path(path).read_text())
    rr = RrSeries(
        beat_times_s=np.array(d["beat_times_s"]),
        rr_ms=np.array(d["rr_ms"]),
        rejected_count=d.get("rejected_count", 0),
    )
    annotations = [
        AnnotationSpan(a["start_s"], a["end_s"], StressLabel.from_csv_value(a["label"]))
        for a in d["annotations"]
    ]
    return RecordRr(
        record_id=d["record_id"],
        duration_s=d["duration_s"],
        rr=rr,
        annotations=annotations,
    )


def load_rr_dir(rr_dir: str | Path) -> list[RecordRr]:
    paths = sorted(Path(rr_dir).glob("*.rr.json"))
    if not paths:
        raise ValidationError(f"no *.rr.json files in {rr_dir}")
    return [load_rr_file(p) for p in paths]


def _preprocess_one(ecg_path: Path, config: RunConfig, out_dir: Path) -> dict:
    ann_path = ecg_path.parent / (ecg_path.name.replace(".ecg.csv", ".ann.csv"))
    record = load_record(ecg_path, ann_path)
    record = resample(record, config.working_rate_hz)
    record = bandpass(record, config.filter_spec())
    beats = detect_r_peaks(record)
    rr = derive_rr(beats)
    payload = _rr_to_dict(record.record_id, record.duration_s, record.sampling_rate_hz,
                          rr, record.annotations)
    rr_path = out_dir / f"{record.record_id}.rr.json"
    rr_path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    return {
        "record_id": record.record_id,
        "beats_detected": len(beats),
        "intervals_rejected": rr.rejected_count,
        "rr_file": rr_path.name,
    }


def cmd_preprocess(args: argparse.Namespace) -> int:
    config = _resolve_config(args)
    if not config.data_dir:
        logger.error("preprocess requires --data (or data_dir in the config)")
        return 2
    data_dir = Path(config.data_dir)
    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    ecg_paths = sorted(data_dir.glob("*.ecg.csv"))
    if not ecg_paths:
        logger.error("no *.ecg.csv records found in %s", data_dir)
        return 2

    worker = functools.partial(_preprocess_one, config=config, out_dir=out_dir)
    log_entries = []
    failures = 0
    threads = n_threads()
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = pool.map(_safe_preprocess, ecg_paths, [worker] * len(ecg_paths))
            results = list(results)
    else:
        results = [_safe_preprocess(p, worker) for p in ecg_paths]
    for entry in results:
        if entry.get("error"):
            failures += 1
        log_entries.append(entry)

    (out_dir / "preprocess_log.json").write_text(
        json.dumps(log_entries, indent=2, sort_keys=True) + "\n"
    )
    _write_manifest(out_dir, "preprocess", config)
    if failures == len(ecg_paths):
        logger.error("all %d records failed preprocessing", failures)
        return 1
    logger.info("preprocessed %d records (%d failed)", len(ecg_paths) - failures, failures)
    return 0


def _safe_preprocess(path: Path, worker) -> dict:
    try:
        return worker(path)
    except (HrvOptError, OSError) as e:
        logger.warning("skipping %s: %s", path.name, e)
        return {"record_id": path.name, "error": str(e)}


# --- optimize / evaluate ---------------------------------------------------


def _load_dataset(config: RunConfig) -> list[RecordRr]:
    if not config.rr_dir:
        raise ValidationError("missing --rr (or rr_dir in the config)")
    return load_rr_dir(config.rr_dir)


def _dataset_labels(dataset: list[RecordRr]) -> set[int]:
    labels = set()
    for rec in dataset:
        labels.update(int(a.label) for a in rec.annotations)
    return labels


def cmd_optimize(args: argparse.Namespace) -> int:
    config = _resolve_config(args)
    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    try:
        dataset = _load_dataset(config)
    except ValidationError as e:
        logger.error("%s", e)
        return 2
    if len(_dataset_labels(dataset)) < 2:
        logger.error("dataset is degenerate: a single stress label across all records")
        return 1

    feature_set = FeatureSet(config.feature_set)
    forest_params = config.forest_params()
    cache = FitnessCache()
    fitness = functools.partial(
        evaluate_fitness,
        dataset=dataset,
        feature_set=feature_set,
        forest_params=forest_params,
        cache=cache,
    )
    threads = n_threads()
    if config.optimizer == "pso":
        best, best_fitness, trace = pso_search(config.swarm_config(), fitness, n_threads=threads)
    else:
        best, best_fitness, trace = random_search(
            config.budget, config.bounds, fitness, seed=config.seed, n_threads=threads
        )

    best_result = cache.get((best.window_size_s, best.overlap_pct))
    if best_result is None:
        logger.error("every evaluated point was fitness-degenerate; nothing to report")
        return 1

    (w_lo, w_hi), (o_lo, o_hi) = config.bounds
    best_payload = {
        "window_size_s": best.window_size_s,
        "overlap_pct": best.overlap_pct,
        "accuracy": best_fitness,
        "fold_accuracies": best_result.fold_accuracies,
        "confusion": [[int(v) for v in row] for row in best_result.confusion],
        "n_rows": best_result.n_rows,
        "dropped_windows": best_result.dropped_windows,
        "n_evaluations": len(trace),
        "cache_misses": cache.misses,
        "grid_points": int((w_hi - w_lo + 1) * (o_hi - o_lo + 1)),
        "optimizer": config.optimizer,
    }
    (out_dir / "best.json").write_text(json.dumps(best_payload, indent=2, sort_keys=True) + "\n")
    trace.to_jsonl(out_dir / "trace.jsonl")

    bins = BinSpec.for_bounds(config.bounds)
    rows = region_report(trace, bins)
    write_region_csv(rows, out_dir / "regions.csv")
    render_region_heatmap(
        rows, bins, out_dir / "regions.png",
        title=f"Mean accuracy by region ({config.feature_set}, {config.optimizer})",
    )
    _write_manifest(out_dir, "optimize", config)
    logger.info(
        "best window=%d s overlap=%d%% accuracy=%.4f (%d evaluations, %d CV runs)",
        best.window_size_s, best.overlap_pct, best_fitness, len(trace), cache.misses,
    )
    return 0


def cmd_evaluate(args: argparse.Namespace) -> int:
    config = _resolve_config(args)
    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    try:
        dataset = _load_dataset(config)
    except ValidationError as e:
        logger.error("%s", e)
        return 2
    feature_set = FeatureSet(config.feature_set)
    params = WindowParams(args.window, args.overlap)
    try:
        matrix = build_matrix_pooled(dataset, params, feature_set)
        result = cv_accuracy(matrix, config.forest_params())
        result.dropped_windows = matrix.dropped_count
    except (FitnessDegenerateError, ValidationError) as e:
        logger.error("fitness-degenerate at window=%d overlap=%d: %s",
                     params.window_size_s, params.overlap_pct, e)
        return 1
    payload = {
        "window_size_s": params.window_size_s,
        "overlap_pct": params.overlap_pct,
        **result.to_dict(),
    }
    (out_dir / "eval.json").write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    _write_manifest(out_dir, "evaluate", config)
    logger.info("accuracy %.4f on %d rows", result.accuracy, result.n_rows)
    return 0


# --- synth / report --------------------------------------------------------


def cmd_synth(args: argparse.Namespace) -> int:
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    base: dict = {}
    if args.config:
        base = json.loads(Path(args.config).read_text())
        if "config" in base and isinstance(base["config"], dict):
            base = base["config"]
        base = {k: v for k, v in base.items() if k in CorpusSpec.__dataclass_fields__}
        for key in ("rr_mean_ms", "rr_lf_amp_ms", "rr_wander_amp_ms", "rr_wander_period_s"):
            if key in base:
                base[key] = tuple(base[key])
    for flag, field_name in (("records", "n_records"), ("duration", "duration_s"),
                             ("noise", "noise_amplitude_mv"), ("seed", "seed")):
        value = getattr(args, flag)
        if value is not None:
            base[field_name] = value
    spec = CorpusSpec(**base)
    records = make_stress_corpus(spec)
    write_corpus(records, out_dir)
    manifest = {
        "command": "synth",
        "config": asdict(spec),
        "tool": "hrvopt",
        "version": __version__,
    }
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    logger.info("wrote %d synthetic records to %s", len(records), out_dir)
    return 0


def cmd_report(args: argparse.Namespace) -> int:
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    trace_path = args.trace
    preset = args.preset
    if args.config:
        base = json.loads(Path(args.config).read_text())
        if "config" in base and isinstance(base["config"], dict):
            base = base["config"]
        trace_path = trace_path or base.get("trace")
        preset = preset or base.get("preset")
    if not trace_path:
        logger.error("report requires --trace (or a manifest with one)")
        return 2
    preset = preset or "drivedb"
    trace = SearchTrace.from_jsonl(trace_path)
    bins = BinSpec.for_bounds(PRESET_BOUNDS[preset])
    rows = region_report(trace, bins)
    write_region_csv(rows, out_dir / "regions.csv")
    render_region_heatmap(rows, bins, out_dir / "regions.png")
    manifest = {
        "command": "report",
        "config": {"trace": str(Path(trace_path).resolve()), "preset": preset},
        "tool": "hrvopt",
        "version": __version__,
    }
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    logger.info("re-binned %d evaluations into %d regions", len(trace), len(rows))
    return 0


# --- entry point ------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hrvopt",
        description="ECG stress classification with PSO-optimized windowing",
    )
    parser.add_argument("--version", action="version", version=f"hrvopt {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", help="JSON config or a manifest.json from a previous run")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", help="output directory")

    p = sub.add_parser("synth", help="emit a labelled synthetic ECG corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--config", help="corpus spec JSON or a synth manifest.json")
    p.add_argument("--records", type=int, default=None)
    p.add_argument("--duration", type=float, default=None)
    p.add_argument("--noise", type=float, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("preprocess", help="ECG -> RR series files")
    add_common(p)
    p.add_argument("--data", help="directory of *.ecg.csv records")
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("optimize", help="search windowing hyperparameters")
    add_common(p)
    p.add_argument("--rr", help="directory of *.rr.json files")
    p.add_argument("--feature-set", dest="feature_set",
                   choices=["statistical", "nonlinear", "frequency"], default=None)
    p.add_argument("--optimizer", choices=["pso", "random"], default=None)
    p.add_argument("--preset", choices=["drivedb", "simulator"], default=None)
    p.add_argument("--budget", type=int, default=None, help="random-search evaluations")
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("evaluate", help="cross-validate one (window, overlap) point")
    add_common(p)
    p.add_argument("--rr", help="directory of *.rr.json files")
    p.add_argument("--feature-set", dest="feature_set",
                   choices=["statistical", "nonlinear", "frequency"], default=None)
    p.add_argument("--preset", choices=["drivedb", "simulator"], default=None)
    p.add_argument("--window", type=int, required=True)
    p.add_argument("--overlap", type=int, required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("report", help="re-bin a persisted trace into a region report")
    p.add_argument("--trace", default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--config", help="a report manifest.json from a previous run")
    p.add_argument("--preset", choices=["drivedb", "simulator"], default=None)
    p.set_defaults(func=cmd_report)

    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except HrvOptError as e:
        logger.error("%s", e)
        return 1


if __name__ == "__main__":
    sys.exit(main())
