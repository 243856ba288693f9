"""R-peak detection on band-pass filtered ECG via the Pan-Tompkins procedure.

The input is expected to be already band-passed at the working rate, so the
detector runs the remaining stages: five-point derivative, squaring, 150 ms
moving-window integration, dual adaptive thresholding with signal/noise
running estimates on both the integrated and the filtered signal, a 200 ms
refractory period, and a search-back pass at 1.66x the running RR average.
All thresholds are relative, so the detected peak times are invariant to
positive rescaling of the input.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import find_peaks

from .errors import InsufficientDataError
from .ingest import EcgRecord

REFRACTORY_S = 0.2
INTEGRATION_WINDOW_S = 0.15
LEARNING_S = 2.0
SEARCHBACK_FACTOR = 1.66
LOCALIZE_HALF_WINDOW_S = 0.075


@dataclass
class BeatTimes:
    times_s: np.ndarray

    def __post_init__(self):
        self.times_s = np.asarray(self.times_s, dtype=float)

    def __len__(self) -> int:
        return len(self.times_s)


class _Thresholds:
    """Running signal/noise estimates and the derived decision levels."""

    def __init__(self, seed_signal: float, seed_noise: float):
        self.spk = seed_signal
        self.npk = seed_noise

    @property
    def t1(self) -> float:
        return self.npk + 0.25 * (self.spk - self.npk)

    @property
    def t2(self) -> float:
        return 0.5 * self.t1

    def update_signal(self, peak: float, searchback: bool = False) -> None:
        w = 0.25 if searchback else 0.125
        self.spk = w * peak + (1 - w) * self.spk

    def update_noise(self, peak: float) -> None:
        self.npk = 0.125 * peak + 0.875 * self.npk


def detect_r_peaks(record: EcgRecord) -> BeatTimes:
    """Return R-peak times (seconds) for a band-pass filtered record.

    Raises InsufficientDataError for records shorter than 2 s (the threshold
    learning phase cannot initialize); a zero-variance signal yields an empty
    result.
    """
    fs = record.sampling_rate_hz
    x = record.samples
    if len(x) / fs < LEARNING_S:
        raise InsufficientDataError(
            f"record of {len(x) / fs:.2f} s is too short for threshold learning"
        )
    if np.ptp(x) == 0:
        return BeatTimes(np.array([]))

    deriv = np.convolve(x, np.array([2.0, 1.0, 0.0, -1.0, -2.0]) * (fs / 8.0), mode="same")
    squared = deriv * deriv
    win = 2 * int(round(INTEGRATION_WINDOW_S * fs / 2)) + 1  # odd => zero group delay
    integrated = np.convolve(squared, np.ones(win) / win, mode="same")

    refractory = int(REFRACTORY_S * fs)
    # one candidate per refractory span: ripple sub-peaks of the same QRS
    # otherwise fire early and drag the localization window off the R-peak
    candidates, _ = find_peaks(integrated, distance=refractory)
    if len(candidates) == 0:
        return BeatTimes(np.array([]))

    learn_n = int(LEARNING_S * fs)
    thr_i = _Thresholds(float(np.max(integrated[:learn_n])), float(np.mean(integrated[:learn_n])))
    thr_f = _Thresholds(float(np.max(x[:learn_n])), float(np.mean(x[:learn_n])))

    half_loc = int(LOCALIZE_HALF_WINDOW_S * fs)

    def filtered_peak(idx: int) -> tuple[int, float]:
        lo = max(0, idx - half_loc)
        hi = min(len(x), idx + half_loc + 1)
        k = lo + int(np.argmax(x[lo:hi]))
        return k, float(x[k])

    peak_indices: list[int] = []  # localized on the filtered signal
    rr_history: list[float] = []  # last accepted RR intervals, in samples
    last_qrs_i: int | None = None  # integrated-signal index of last QRS
    rejected: list[int] = []  # candidate indices rejected since last QRS

    def accept(cand_i: int, searchback: bool = False) -> None:
        nonlocal last_qrs_i
        loc, fval = filtered_peak(cand_i)
        thr_i.update_signal(float(integrated[cand_i]), searchback)
        thr_f.update_signal(fval, searchback)
        if last_qrs_i is not None:
            rr_history.append(float(cand_i - last_qrs_i))
            if len(rr_history) > 8:
                rr_history.pop(0)
        last_qrs_i = cand_i
        if peak_indices and loc <= peak_indices[-1]:
            return  # localization collided with the previous beat
        peak_indices.append(loc)

    for cand in candidates:
        cand = int(cand)
        if last_qrs_i is not None and cand - last_qrs_i < refractory:
            continue

        # search-back: a long silence means a beat was likely missed between
        # the last QRS and this candidate; revisit rejected peaks at the
        # lower thresholds
        if last_qrs_i is not None and rr_history:
            rr_avg = float(np.mean(rr_history))
            if cand - last_qrs_i > SEARCHBACK_FACTOR * rr_avg and rejected:
                viable = [
                    r
                    for r in rejected
                    if r - last_qrs_i >= refractory
                    and cand - r >= refractory
                    and integrated[r] > thr_i.t2
                    and filtered_peak(r)[1] > thr_f.t2
                ]
                if viable:
                    best = max(viable, key=lambda r: integrated[r])
                    accept(best, searchback=True)
                    rejected = [r for r in rejected if r > best]
                    if cand - last_qrs_i < refractory:
                        continue

        pk_i = float(integrated[cand])
        _, pk_f = filtered_peak(cand)
        if pk_i > thr_i.t1 and pk_f > thr_f.t1:
            accept(cand)
            rejected = []
        else:
            thr_i.update_noise(pk_i)
            thr_f.update_noise(pk_f)
            rejected.append(cand)

    # enforce the refractory invariant on the localized sample indices
    kept: list[int] = []
    for idx in peak_indices:
        if not kept or idx - kept[-1] >= refractory:
            kept.append(idx)
    return BeatTimes(np.array(kept, dtype=float) / fs)
