import numpy as np
import pytest

from hrvopt import CorpusSpec, bandpass, derive_rr, detect_r_peaks, make_stress_corpus
from hrvopt.dsp import FilterSpec
from hrvopt.windowing import RecordRr

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def make_beat_times(rr_pattern_s, duration_s, start_s=0.5):
    """Beat times cycling through rr_pattern_s until duration_s is reached."""
    times = []
    t = start_s
    i = 0
    while t < duration_s - 0.5:
        times.append(t)
        t += rr_pattern_s[i % len(rr_pattern_s)]
        i += 1
    return np.array(times)


def preprocess_records(records):
    dataset = []
    for rec in records:
        filtered = bandpass(rec, FilterSpec(target_rate_hz=rec.sampling_rate_hz))
        rr = derive_rr(detect_r_peaks(filtered))
        dataset.append(RecordRr(rec.record_id, rec.duration_s, rr, rec.annotations))
    return dataset


@pytest.fixture(scope="session")
def stress_dataset():
    """Preprocessed 3-record labelled corpus shared across tests."""
    records = make_stress_corpus(CorpusSpec(n_records=3, duration_s=600.0, seed=11))
    return preprocess_records(records)
