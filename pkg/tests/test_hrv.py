import math

import numpy as np
import pytest

from hrvopt import (
    BeatTimes,
    derive_rr,
    freq_features,
    poincare_features,
    stat_features,
)
from hrvopt.errors import InsufficientDataError

from oracles import poincare_oracle, stat_oracle, welch_band_powers_oracle


def assert_close(a, b, rel=1e-9):
    assert math.isclose(a, b, rel_tol=rel, abs_tol=1e-12), (a, b)


class TestDeriveRr:
    def test_definition(self):
        rr = derive_rr(BeatTimes(np.array([0.0, 0.8, 1.6])))
        assert rr.rr_ms.tolist() == [800.0, 800.0]

    def test_single_beat_empty(self):
        rr = derive_rr(BeatTimes(np.array([3.2])))
        assert len(rr) == 0

    def test_artifact_rejection(self):
        rr = derive_rr(BeatTimes(np.array([0.0, 0.8, 1.85, 2.05])))
        assert np.allclose(rr.rr_ms, [800.0, 1050.0])
        assert rr.rejected_count == 1
        assert np.allclose(rr.beat_times_s, [0.0, 0.8, 1.85])

    def test_invariant_rr_equals_diffs(self):
        rng = np.random.default_rng(0)
        times = np.cumsum(rng.uniform(0.4, 1.5, size=50))
        rr = derive_rr(BeatTimes(times))
        assert np.allclose(rr.rr_ms, np.diff(rr.beat_times_s) * 1000.0)
        assert np.all(rr.rr_ms >= 300.0) and np.all(rr.rr_ms <= 2000.0)


class TestStatFeatures:
    def test_constant_series(self):
        f = stat_features(np.full(10, 800.0))
        assert f.mean_rr_ms == 800.0
        assert f.sdnn_ms == 0.0
        assert f.rmssd_ms == 0.0
        assert f.nn20_count == 0
        assert f.nn50_count == 0
        assert f.pnn50_pct == 0.0

    def test_alternating_10ms(self):
        f = stat_features(np.array([800.0, 810.0, 800.0, 810.0, 800.0]))
        assert f.rmssd_ms == pytest.approx(10.0)
        assert f.mean_abs_diff_ms == pytest.approx(10.0)
        assert f.nn20_count == 0
        assert f.nn50_count == 0

    def test_nn50_and_pnn50(self):
        f = stat_features(np.array([700.0, 760.0, 700.0]))
        assert f.nn50_count == 2
        assert f.pnn50_pct == pytest.approx(100.0)

    def test_too_short(self):
        with pytest.raises(InsufficientDataError):
            stat_features(np.array([800.0]))

    def test_matches_oracle_on_random_slices(self):
        rng = np.random.default_rng(7)
        for _ in range(200):
            rr = rng.uniform(600.0, 1200.0, size=rng.integers(2, 80))
            f = stat_features(rr)
            o = stat_oracle(rr)
            for name in f.SCHEMA:
                assert_close(getattr(f, name), o[name])


class TestPoincareFeatures:
    def test_constant_series(self):
        f = poincare_features(np.full(6, 800.0))
        assert f.sd1_ms == 0.0
        assert f.sd2_ms == 0.0
        assert f.sd_ratio == 0.0

    def test_alternating_20ms_against_oracle(self):
        rr = np.array([800.0, 820.0, 800.0, 820.0, 800.0, 820.0])
        f = poincare_features(rr)
        o = poincare_oracle(rr)
        assert_close(f.sd1_ms, o["sd1_ms"])
        assert_close(f.sd2_ms, o["sd2_ms"])
        # sd1 equals SDSD / sqrt(2)
        sdsd = np.std(np.diff(rr), ddof=1)
        assert_close(f.sd1_ms, sdsd / np.sqrt(2.0))

    def test_too_short(self):
        with pytest.raises(InsufficientDataError):
            poincare_features(np.array([800.0, 810.0]))

    def test_matches_oracle_on_random_slices(self):
        rng = np.random.default_rng(8)
        for _ in range(200):
            rr = rng.uniform(600.0, 1200.0, size=rng.integers(3, 80))
            f = poincare_features(rr)
            o = poincare_oracle(rr)
            assert_close(f.sd1_ms, o["sd1_ms"])
            assert_close(f.sd2_ms, o["sd2_ms"])
            assert_close(f.sd_ratio, o["sd_ratio"])

    def test_axis_variance_identity(self):
        rng = np.random.default_rng(9)
        rr = rng.uniform(700.0, 1100.0, size=60)
        f = poincare_features(rr)
        a, b = rr[:-1], rr[1:]
        total = np.var(a, ddof=1) + np.var(b, ddof=1) + 0.0
        # rotation preserves the trace of the covariance matrix
        assert f.sd1_ms**2 + f.sd2_ms**2 == pytest.approx(total, rel=1e-9)


def modulated_tachogram(freq_hz, duration_s=120.0, base_ms=800.0, amp_ms=50.0):
    times = [0.0]
    while times[-1] < duration_s:
        rr = base_ms + amp_ms * np.sin(2 * np.pi * freq_hz * times[-1])
        times.append(times[-1] + rr / 1000.0)
    times = np.array(times)
    rr = np.diff(times) * 1000.0
    return rr, times[1:]


class TestFreqFeatures:
    def test_constant_tachogram(self):
        rr = np.full(100, 800.0)
        times = np.cumsum(rr) / 1000.0
        f = freq_features(rr, times)
        rr_mod, t_mod = modulated_tachogram(0.1)
        ref = freq_features(rr_mod, t_mod)
        assert f.lf_power_ms2 < 1e-6 * ref.lf_power_ms2
        assert f.hf_power_ms2 < 1e-6 * ref.hf_power_ms2
        assert f.lf_hf_ratio == 0.0

    def test_lf_modulation_dominates(self):
        rr, times = modulated_tachogram(0.1)
        f = freq_features(rr, times)
        assert f.lf_hf_ratio > 5.0

    def test_hf_modulation_dominates(self):
        rr, times = modulated_tachogram(0.3)
        f = freq_features(rr, times)
        assert f.hf_power_ms2 > 5.0 * f.lf_power_ms2

    def test_short_span_rejected(self):
        rr = np.full(10, 800.0)
        times = np.cumsum(rr) / 1000.0  # 8 s
        with pytest.raises(InsufficientDataError):
            freq_features(rr, times)

    def test_few_beats_rejected(self):
        rr = np.full(5, 5000.0)
        times = np.cumsum(rr) / 1000.0
        with pytest.raises(InsufficientDataError):
            freq_features(rr, times)

    def test_matches_dense_oracle(self):
        rng = np.random.default_rng(10)
        for _ in range(25):
            n = int(rng.integers(40, 150))
            rr = rng.uniform(600.0, 1200.0, size=n)
            times = np.cumsum(rr) / 1000.0
            f = freq_features(rr, times)
            lf, hf = welch_band_powers_oracle(rr, times, [(0.05, 0.2), (0.2, 0.4)])
            assert f.lf_power_ms2 == pytest.approx(lf, rel=0.01)
            assert f.hf_power_ms2 == pytest.approx(hf, rel=0.01)


class TestSharedProperties:
    def test_time_shift_invariance(self):
        rng = np.random.default_rng(11)
        rr = rng.uniform(600.0, 1200.0, size=60)
        times = np.cumsum(rr) / 1000.0
        f1 = freq_features(rr, times)
        f2 = freq_features(rr, times + 1234.5)
        assert f1.lf_power_ms2 == pytest.approx(f2.lf_power_ms2, rel=1e-9)
        assert f1.hf_power_ms2 == pytest.approx(f2.hf_power_ms2, rel=1e-9)
        # stat/poincare take no times at all: shift-invariant by construction

    def test_scaling_behaviour(self):
        rng = np.random.default_rng(12)
        rr = rng.uniform(700.0, 900.0, size=50)
        k = 1.7
        f1 = stat_features(rr)
        f2 = stat_features(rr * k)
        for name in ("mean_rr_ms", "std_rr_ms", "sdnn_ms", "rmssd_ms", "mean_abs_diff_ms"):
            assert getattr(f2, name) == pytest.approx(k * getattr(f1, name), rel=1e-9)
        p1 = poincare_features(rr)
        p2 = poincare_features(rr * k)
        assert p2.sd1_ms == pytest.approx(k * p1.sd1_ms, rel=1e-9)
        assert p2.sd2_ms == pytest.approx(k * p1.sd2_ms, rel=1e-9)
        # counts follow their absolute thresholds (definition, not invariance)
        d = np.abs(np.diff(rr * k))
        assert f2.nn20_count == int(np.sum(d > 20.0))
        assert f2.nn50_count == int(np.sum(d > 50.0))

    def test_recomputation_is_bit_identical(self):
        rng = np.random.default_rng(13)
        rr = rng.uniform(600.0, 1200.0, size=70)
        times = np.cumsum(rr) / 1000.0
        assert stat_features(rr).as_vector().tobytes() == stat_features(rr).as_vector().tobytes()
        assert (
            poincare_features(rr).as_vector().tobytes()
            == poincare_features(rr).as_vector().tobytes()
        )
        assert (
            freq_features(rr, times).as_vector().tobytes()
            == freq_features(rr, times).as_vector().tobytes()
        )
