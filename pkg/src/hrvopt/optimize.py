"""Search over (window size, overlap) with PSO and a uniform random baseline.

Particles move in a continuous 2-D box; fitness is always evaluated at the
rounded integer grid point, and a cache keyed by that point avoids repeated
cross-validation runs.  The coordinator owns the RNG and consumes draws in a
fixed serial order, so parallel fitness evaluation cannot perturb a run.
"""

from __future__ import annotations

import json
import math
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .errors import FitnessDegenerateError, ValidationError
from .forest import FitnessResult, ForestParams, cv_accuracy
from .windowing import FeatureSet, RecordRr, WindowParams, build_matrix_pooled

Bounds = tuple[tuple[float, float], tuple[float, float]]

DRIVEDB_BOUNDS: Bounds = ((5.0, 520.0), (0.0, 95.0))
SIMULATOR_BOUNDS: Bounds = ((5.0, 60.0), (0.0, 95.0))


def discretize(position: Sequence[float]) -> tuple[int, int]:
    """Round-half-up to the integer (window_size_s, overlap_pct) grid point."""
    return (
        int(math.floor(position[0] + 0.5)),
        int(math.floor(position[1] + 0.5)),
    )


@dataclass
class SwarmConfig:
    n_particles: int = 5
    max_iterations: int = 30
    c1: float = 2.05
    c2: float = 2.05
    inertia_start: float = 1.0
    damping: float = 0.9
    bounds: Bounds = DRIVEDB_BOUNDS
    v_max: tuple[float, float] | None = None  # None => 20% of range per dim
    seed: int = 0
    early_stop_accuracy: float = 1.0

    def __post_init__(self):
        if self.n_particles < 2:
            raise ValidationError(f"n_particles must be >= 2, got {self.n_particles}")
        if not 0 < self.damping <= 1:
            raise ValidationError(f"damping must be in (0, 1], got {self.damping}")
        for lo, hi in self.bounds:
            if not lo < hi:
                raise ValidationError(f"bounds need lower < upper, got [{lo}, {hi}]")

    def resolved_v_max(self) -> np.ndarray:
        if self.v_max is not None:
            return np.asarray(self.v_max, dtype=float)
        return np.array([0.2 * (hi - lo) for lo, hi in self.bounds])


@dataclass
class Particle:
    position: np.ndarray
    velocity: np.ndarray
    pbest_position: np.ndarray
    pbest_fitness: float


@dataclass
class SwarmState:
    particles: list[Particle]
    gbest_position: np.ndarray
    gbest_fitness: float
    iteration: int
    omega: float


@dataclass
class TraceEntry:
    iteration: int
    index: int
    window_size_s: int
    overlap_pct: int
    fitness: float
    gbest_fitness: float
    wall_time_s: float  # in-memory only; excluded from the persisted trace


class SearchTrace:
    """Per-evaluation log.  gbest is non-decreasing along the trace."""

    def __init__(self):
        self.entries: list[TraceEntry] = []

    def append(self, entry: TraceEntry) -> None:
        self.entries.append(entry)

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def to_jsonl(self, path: str | Path) -> None:
        # wall time is intentionally not persisted: rerunning a manifest must
        # reproduce this file byte-for-byte
        with open(path, "w") as f:
            for e in self.entries:
                f.write(
                    json.dumps(
                        {
                            "iteration": e.iteration,
                            "index": e.index,
                            "window_size_s": e.window_size_s,
                            "overlap_pct": e.overlap_pct,
                            "fitness": e.fitness,
                            "gbest": e.gbest_fitness,
                        },
                        sort_keys=True,
                    )
                    + "\n"
                )

    @classmethod
    def from_jsonl(cls, path: str | Path) -> "SearchTrace":
        trace = cls()
        with open(path) as f:
            for line in f:
                line = line.strip()
                if not line:
                    continue
                d = json.loads(line)
                trace.append(
                    TraceEntry(
                        iteration=d["iteration"],
                        index=d["index"],
                        window_size_s=d["window_size_s"],
                        overlap_pct=d["overlap_pct"],
                        fitness=d["fitness"],
                        gbest_fitness=d["gbest"],
                        wall_time_s=0.0,
                    )
                )
        return trace


class FitnessCache:
    """Thread-safe map from discrete (window, overlap) keys to results.

    Concurrent evaluations of the same key are deduplicated by an in-flight
    guard; `misses` counts actual computations.
    """

    def __init__(self):
        self._store: dict[tuple[int, int], FitnessResult | None] = {}
        self._lock = threading.Lock()
        self._inflight: dict[tuple[int, int], threading.Event] = {}
        self.hits = 0
        self.misses = 0

    def __contains__(self, key: tuple[int, int]) -> bool:
        with self._lock:
            return key in self._store

    def get(self, key: tuple[int, int]) -> FitnessResult | None:
        with self._lock:
            return self._store.get(key)

    def get_or_compute(
        self, key: tuple[int, int], compute: Callable[[], FitnessResult | None]
    ) -> FitnessResult | None:
        while True:
            with self._lock:
                if key in self._store:
                    self.hits += 1
                    return self._store[key]
                event = self._inflight.get(key)
                if event is None:
                    event = threading.Event()
                    self._inflight[key] = event
                    owner = True
                else:
                    owner = False
            if owner:
                try:
                    result = compute()
                except BaseException:
                    with self._lock:
                        del self._inflight[key]
                        event.set()
                    raise
                with self._lock:
                    self._store[key] = result
                    self.misses += 1
                    del self._inflight[key]
                    event.set()
                return result
            event.wait()


def evaluate_fitness(
    position: Sequence[float],
    dataset: list[RecordRr],
    feature_set: FeatureSet,
    forest_params: ForestParams,
    cache: FitnessCache | None = None,
) -> float:
    """Cross-validated accuracy at the discretized position; 0 when degenerate."""
    if not dataset:
        raise ValidationError("dataset is empty")
    key = discretize(position)

    def compute() -> FitnessResult | None:
        try:
            matrix = build_matrix_pooled(dataset, WindowParams(*key), feature_set)
            result = cv_accuracy(matrix, forest_params)
            result.dropped_windows = matrix.dropped_count
            return result
        except (FitnessDegenerateError, ValidationError):
            return None

    if cache is None:
        result = compute()
    else:
        result = cache.get_or_compute(key, compute)
    return result.accuracy if result is not None else 0.0


def step_velocity_position(
    p: Particle,
    gbest_position: np.ndarray,
    config: SwarmConfig,
    omega: float,
    r1: np.ndarray,
    r2: np.ndarray,
) -> Particle:
    """One velocity/position update with velocity cap and bound clamping.

    v' = omega*v + c1*r1*(pbest - x) + c2*r2*(gbest - x), componentwise;
    a position clamped at a bound gets that velocity component zeroed.
    """
    v_max = config.resolved_v_max()
    v = (
        omega * p.velocity
        + config.c1 * r1 * (p.pbest_position - p.position)
        + config.c2 * r2 * (gbest_position - p.position)
    )
    v = np.clip(v, -v_max, v_max)
    x = p.position + v
    for d, (lo, hi) in enumerate(config.bounds):
        if x[d] < lo:
            x[d] = lo
            v[d] = 0.0
        elif x[d] > hi:
            x[d] = hi
            v[d] = 0.0
    return replace(p, position=x, velocity=v)


FitnessFn = Callable[[np.ndarray], float]


def _evaluate_round(
    positions: list[np.ndarray], fitness: FitnessFn, n_threads: int
) -> list[float]:
    if n_threads > 1 and len(positions) > 1:
        with ThreadPoolExecutor(max_workers=n_threads) as pool:
            return list(pool.map(fitness, positions))
    return [fitness(x) for x in positions]


def pso_search(
    config: SwarmConfig, fitness: FitnessFn, n_threads: int = 1
) -> tuple[WindowParams, float, SearchTrace]:
    """Particle swarm search over the windowing box.

    Initial positions are uniform over the bounds and velocities uniform over
    +/- v_max; iteration 0 is the initial evaluation round.  Terminates after
    max_iterations update rounds or as soon as gbest reaches
    early_stop_accuracy.
    """
    rng = np.random.default_rng(config.seed)
    lo = np.array([b[0] for b in config.bounds])
    hi = np.array([b[1] for b in config.bounds])
    v_max = config.resolved_v_max()

    particles = []
    for _ in range(config.n_particles):
        pos = rng.uniform(lo, hi)
        vel = rng.uniform(-v_max, v_max)
        particles.append(Particle(pos, vel, pos.copy(), -np.inf))

    state = SwarmState(
        particles=particles,
        gbest_position=particles[0].position.copy(),
        gbest_fitness=-np.inf,
        iteration=0,
        omega=config.inertia_start,
    )
    trace = SearchTrace()
    t_start = time.perf_counter()

    def evaluate_all() -> None:
        positions = [p.position.copy() for p in state.particles]
        values = [float(v) for v in _evaluate_round(positions, fitness, n_threads)]
        for i, (p, value) in enumerate(zip(state.particles, values)):
            if value > p.pbest_fitness:
                p.pbest_fitness = value
                p.pbest_position = p.position.copy()
            if value > state.gbest_fitness:
                state.gbest_fitness = value
                state.gbest_position = p.position.copy()
            key = discretize(p.position)
            trace.append(
                TraceEntry(
                    iteration=state.iteration,
                    index=i,
                    window_size_s=key[0],
                    overlap_pct=key[1],
                    fitness=value,
                    gbest_fitness=state.gbest_fitness,
                    wall_time_s=time.perf_counter() - t_start,
                )
            )

    evaluate_all()
    while (
        state.iteration < config.max_iterations
        and state.gbest_fitness < config.early_stop_accuracy
    ):
        for i, p in enumerate(state.particles):
            r1 = rng.uniform(size=2)
            r2 = rng.uniform(size=2)
            state.particles[i] = step_velocity_position(
                p, state.gbest_position, config, state.omega, r1, r2
            )
        state.omega *= config.damping
        state.iteration += 1
        evaluate_all()

    best_key = discretize(state.gbest_position)
    return WindowParams(*best_key), state.gbest_fitness, trace


def random_search(
    budget: int,
    bounds: Bounds,
    fitness: FitnessFn,
    seed: int = 0,
    n_threads: int = 1,
) -> tuple[WindowParams, float, SearchTrace]:
    """Seeded uniform independent draws over the integer grid (with replacement)."""
    if budget < 1:
        raise ValidationError(f"budget must be >= 1, got {budget}")
    rng = np.random.default_rng(seed)
    (w_lo, w_hi), (o_lo, o_hi) = bounds
    positions = []
    for _ in range(budget):
        w = int(rng.integers(int(w_lo), int(w_hi) + 1))
        o = int(rng.integers(int(o_lo), int(o_hi) + 1))
        positions.append(np.array([w, o], dtype=float))

    t_start = time.perf_counter()
    values = [float(v) for v in _evaluate_round(positions, fitness, n_threads)]
    trace = SearchTrace()
    best_fitness = -np.inf
    best_key = discretize(positions[0])
    for i, (pos, value) in enumerate(zip(positions, values)):
        key = discretize(pos)
        if value > best_fitness:
            best_fitness = value
            best_key = key
        trace.append(
            TraceEntry(
                iteration=i,
                index=i,
                window_size_s=key[0],
                overlap_pct=key[1],
                fitness=value,
                gbest_fitness=best_fitness,
                wall_time_s=time.perf_counter() - t_start,
            )
        )
    return WindowParams(*best_key), best_fitness, trace


OVERLAP_BIN_EDGES = (5, 30, 60, 95)  # low / medium / high overlap regions


@dataclass
class BinSpec:
    window_edges: tuple[int, ...]
    overlap_edges: tuple[int, ...] = OVERLAP_BIN_EDGES

    @classmethod
    def for_bounds(cls, bounds: Bounds, window_step: int = 30) -> "BinSpec":
        w_lo, w_hi = int(bounds[0][0]), int(bounds[0][1])
        interior = [e for e in range(window_step, w_hi, window_step) if e > w_lo]
        return cls(window_edges=tuple([w_lo] + interior + [w_hi]))


@dataclass
class RegionRow:
    win_bin_lo: int
    win_bin_hi: int
    ov_bin_lo: int
    ov_bin_hi: int
    mean_acc: float | None
    n_evals: int


def _bin_index(value: float, edges: tuple[int, ...]) -> int | None:
    # half-open bins [lo, hi), last bin closed
    for i in range(len(edges) - 1):
        if edges[i] <= value < edges[i + 1]:
            return i
    if value == edges[-1]:
        return len(edges) - 2
    return None


def region_report(
    traces: SearchTrace | list[SearchTrace], bins: BinSpec
) -> list[RegionRow]:
    """Mean evaluated fitness per (window bin x overlap bin); empty bins are null."""
    if isinstance(traces, SearchTrace):
        traces = [traces]
    entries = [e for t in traces for e in t]
    if not entries:
        raise ValidationError("cannot build region report from an empty trace")
    we, oe = bins.window_edges, bins.overlap_edges
    sums = np.zeros((len(we) - 1, len(oe) - 1))
    counts = np.zeros((len(we) - 1, len(oe) - 1), dtype=int)
    for e in entries:
        wi = _bin_index(e.window_size_s, we)
        oi = _bin_index(e.overlap_pct, oe)
        if wi is None or oi is None:
            continue
        sums[wi, oi] += e.fitness
        counts[wi, oi] += 1
    rows = []
    for wi in range(len(we) - 1):
        for oi in range(len(oe) - 1):
            n = int(counts[wi, oi])
            rows.append(
                RegionRow(
                    win_bin_lo=we[wi],
                    win_bin_hi=we[wi + 1],
                    ov_bin_lo=oe[oi],
                    ov_bin_hi=oe[oi + 1],
                    mean_acc=float(sums[wi, oi] / n) if n else None,
                    n_evals=n,
                )
            )
    return rows
