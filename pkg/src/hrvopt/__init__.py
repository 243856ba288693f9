"""ECG-based driver stress classification with PSO-optimized windowing."""

__version__ = "0.1.0"

from .dsp import FilterSpec, bandpass, resample
from .forest import FitnessResult, ForestModel, ForestParams, cv_accuracy, train
from .hrv import (
    FreqFeatures,
    PoincareFeatures,
    RrSeries,
    StatFeatures,
    derive_rr,
    freq_features,
    poincare_features,
    stat_features,
)
from .ingest import (
    AnnotationSpan,
    CorpusSpec,
    EcgRecord,
    StressLabel,
    SynthEcgConfig,
    load_record,
    make_stress_corpus,
    save_record,
    synth_ecg,
)
from .optimize import (
    BinSpec,
    FitnessCache,
    SearchTrace,
    SwarmConfig,
    discretize,
    evaluate_fitness,
    pso_search,
    random_search,
    region_report,
)
from .qrs import BeatTimes, detect_r_peaks
from .windowing import (
    FeatureMatrix,
    FeatureSet,
    RecordRr,
    WindowParams,
    build_matrix,
    build_matrix_pooled,
    label_window,
    segment,
)
