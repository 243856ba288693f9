"""RR-interval series and the three feature sets computed on RR slices.

Feature sets:
  * statistical: mean RR, std RR, mean absolute successive difference,
    SDNN, RMSSD, NN20, NN50, pNN50
  * nonlinear (lag-1 scatter): SD1, SD2, SD1/SD2
  * frequency: LF power (0.05-0.2 Hz), HF power (0.2-0.4 Hz), LF/HF

All standard deviations use the n-1 (sample) divisor.  NN20/NN50 count
successive differences strictly greater than 20/50 ms in absolute value.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.integrate import trapezoid
from scipy.interpolate import CubicSpline
from scipy.signal import welch

from .errors import InsufficientDataError
from .qrs import BeatTimes

logger = logging.getLogger(__name__)

RR_MIN_MS = 300.0
RR_MAX_MS = 2000.0

TACHOGRAM_RATE_HZ = 4.0
WELCH_SEGMENT = 64  # samples = 16 s at 4 Hz
WELCH_NFFT = 1024  # zero-padded grid so band integrals are well resolved
LF_BAND_HZ = (0.05, 0.2)
HF_BAND_HZ = (0.2, 0.4)
FREQ_MIN_SPAN_S = 20.0
FREQ_MIN_INTERVALS = 8


@dataclass
class RrSeries:
    beat_times_s: np.ndarray
    rr_ms: np.ndarray
    rejected_count: int = 0

    def __post_init__(self):
        self.beat_times_s = np.asarray(self.beat_times_s, dtype=float)
        self.rr_ms = np.asarray(self.rr_ms, dtype=float)

    def __len__(self) -> int:
        return len(self.rr_ms)


@dataclass
class StatFeatures:
    mean_rr_ms: float
    std_rr_ms: float
    mean_abs_diff_ms: float
    sdnn_ms: float
    rmssd_ms: float
    nn20_count: int
    nn50_count: int
    pnn50_pct: float

    SCHEMA = (
        "mean_rr_ms",
        "std_rr_ms",
        "mean_abs_diff_ms",
        "sdnn_ms",
        "rmssd_ms",
        "nn20_count",
        "nn50_count",
        "pnn50_pct",
    )

    def as_vector(self) -> np.ndarray:
        return np.array([getattr(self, name) for name in self.SCHEMA], dtype=float)


@dataclass
class PoincareFeatures:
    sd1_ms: float
    sd2_ms: float
    sd_ratio: float

    SCHEMA = ("sd1_ms", "sd2_ms", "sd_ratio")

    def as_vector(self) -> np.ndarray:
        return np.array([self.sd1_ms, self.sd2_ms, self.sd_ratio])


@dataclass
class FreqFeatures:
    lf_power_ms2: float
    hf_power_ms2: float
    lf_hf_ratio: float

    SCHEMA = ("lf_power_ms2", "hf_power_ms2", "lf_hf_ratio")

    def as_vector(self) -> np.ndarray:
        return np.array([self.lf_power_ms2, self.hf_power_ms2, self.lf_hf_ratio])


def derive_rr(beats: BeatTimes) -> RrSeries:
    """Convert beat times to RR intervals with artifact rejection.

    A beat is kept only when its gap from the last kept beat lies in
    [300, 2000] ms; rejected beats are counted and logged.  Fewer than two
    beats yields an empty series.
    """
    times = beats.times_s
    if len(times) < 2:
        return RrSeries(times.copy(), np.array([]))
    kept = [times[0]]
    rejected = 0
    for t in times[1:]:
        gap_ms = (t - kept[-1]) * 1000.0
        if RR_MIN_MS <= gap_ms <= RR_MAX_MS:
            kept.append(t)
        else:
            rejected += 1
    if rejected:
        logger.info("derive_rr: rejected %d of %d intervals outside [%g, %g] ms",
                    rejected, len(times) - 1, RR_MIN_MS, RR_MAX_MS)
    kept_arr = np.array(kept)
    return RrSeries(kept_arr, np.diff(kept_arr) * 1000.0, rejected_count=rejected)


def stat_features(rr: np.ndarray) -> StatFeatures:
    rr = np.asarray(rr, dtype=float)
    if len(rr) < 2:
        raise InsufficientDataError(f"statistical features need >= 2 intervals, got {len(rr)}")
    d = np.diff(rr)
    std = float(np.std(rr, ddof=1))
    nn20 = int(np.sum(np.abs(d) > 20.0))
    nn50 = int(np.sum(np.abs(d) > 50.0))
    return StatFeatures(
        mean_rr_ms=float(np.mean(rr)),
        std_rr_ms=std,
        mean_abs_diff_ms=float(np.mean(np.abs(d))),
        sdnn_ms=std,
        rmssd_ms=float(np.sqrt(np.mean(d * d))),
        nn20_count=nn20,
        nn50_count=nn50,
        pnn50_pct=100.0 * nn50 / len(d),
    )


def poincare_features(rr: np.ndarray) -> PoincareFeatures:
    rr = np.asarray(rr, dtype=float)
    if len(rr) < 3:
        raise InsufficientDataError(f"Poincare features need >= 3 intervals, got {len(rr)}")
    a, b = rr[:-1], rr[1:]
    sd1 = float(np.std((b - a) / np.sqrt(2.0), ddof=1))
    sd2 = float(np.std((b + a) / np.sqrt(2.0), ddof=1))
    return PoincareFeatures(sd1, sd2, sd1 / sd2 if sd2 > 0 else 0.0)


def band_power(freqs: np.ndarray, psd: np.ndarray, lo: float, hi: float) -> float:
    """Integrate a PSD over [lo, hi] with interpolated band-edge endpoints."""
    inside = (freqs > lo) & (freqs < hi)
    f = np.concatenate(([lo], freqs[inside], [hi]))
    p = np.concatenate(
        ([np.interp(lo, freqs, psd)], psd[inside], [np.interp(hi, freqs, psd)])
    )
    return float(trapezoid(p, f))


def freq_features(rr: np.ndarray, times_s: np.ndarray) -> FreqFeatures:
    """Band powers of the RR tachogram (rr value at its beat time).

    The unevenly sampled tachogram is cubic-interpolated to a uniform 4 Hz
    grid, mean-removed, and fed to Welch's method (16 s Hann segments, 50%
    overlap).  Requires at least 8 intervals spanning at least 20 s.
    """
    rr = np.asarray(rr, dtype=float)
    times_s = np.asarray(times_s, dtype=float)
    if len(rr) != len(times_s):
        raise ValueError("rr and times_s must be aligned")
    if len(rr) < FREQ_MIN_INTERVALS:
        raise InsufficientDataError(
            f"frequency features need >= {FREQ_MIN_INTERVALS} intervals, got {len(rr)}"
        )
    span = times_s[-1] - times_s[0]
    if span < FREQ_MIN_SPAN_S:
        raise InsufficientDataError(
            f"frequency features need >= {FREQ_MIN_SPAN_S} s of beats, got {span:.1f} s"
        )
    spline = CubicSpline(times_s, rr)
    n_grid = int(np.floor(span * TACHOGRAM_RATE_HZ)) + 1
    grid = times_s[0] + np.arange(n_grid) / TACHOGRAM_RATE_HZ
    tach = spline(grid)
    tach = tach - np.mean(tach)
    freqs, psd = welch(
        tach,
        fs=TACHOGRAM_RATE_HZ,
        window="hann",
        nperseg=WELCH_SEGMENT,
        noverlap=WELCH_SEGMENT // 2,
        nfft=WELCH_NFFT,
        detrend=False,
        scaling="density",
    )
    lf = band_power(freqs, psd, *LF_BAND_HZ)
    hf = band_power(freqs, psd, *HF_BAND_HZ)
    return FreqFeatures(lf, hf, lf / hf if hf > 0 else 0.0)
