import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from osctrig.calibration import apply_correction
from osctrig.core import ConfigError
from osctrig.estimator import ZeroCrossingEstimator
from osctrig.trigger import (
    MODE_DELAY_FALLING,
    MODE_DELAY_RISING,
    MODE_PHASE,
    TriggerEngine,
    TriggerSpec,
)


def sine(freq, rate, n, amp=4000.0):
    t = np.arange(n)
    return np.round(amp * np.sin(2 * np.pi * freq * t / rate)).astype(np.int64)


def drive(x, spec, detected=None, table=None):
    """Run estimator + trigger over a signal; returns pulses and crossings."""
    est = ZeroCrossingEstimator()
    eng = TriggerEngine(spec)
    pulses = []
    crossings = []
    for n, v in enumerate(x.tolist()):
        e = est.tick(int(v), n)
        if e.crossing:
            crossings.append((n, e.crossing))
        det = True if detected is None else bool(detected[n])
        corr = apply_correction(e, table)
        p = eng.tick(e, corr, det, n)
        if p:
            pulses.append(p)
    return pulses, crossings


class TestSpecValidation:
    def test_bad_mode(self):
        with pytest.raises(ConfigError):
            TriggerSpec("t", "b", "sideways", 0)

    def test_phase_target_range(self):
        with pytest.raises(ConfigError):
            TriggerSpec("t", "b", MODE_PHASE, 360_000)

    def test_quota_positive(self):
        with pytest.raises(ConfigError):
            TriggerSpec("t", "b", MODE_PHASE, 0, max_pulses=0)


class TestDelayMode:
    def test_no_detection_no_pulses(self):
        x = sine(10, 500, 2000)
        spec = TriggerSpec("t", "b", MODE_DELAY_RISING, 10, max_pulses=100)
        pulses, _ = drive(x, spec, detected=np.zeros(len(x), dtype=bool))
        assert pulses == []

    def test_pulses_exactly_target_after_each_rising_zc(self):
        # 10 Hz sine, target 20 ms = 10 samples at 500 sps
        x = sine(10, 500, 3000)
        spec = TriggerSpec("t", "b", MODE_DELAY_RISING, 10, max_pulses=1000)
        pulses, crossings = drive(x, spec)
        rising = [n for n, k in crossings if k > 0]
        assert len(pulses) >= len(rising) - 2
        for p in pulses:
            gaps = [p.fire_sample - n for n in rising if n <= p.fire_sample]
            assert min(gaps) == 10

    def test_falling_mode_uses_falling_zcs(self):
        x = sine(10, 500, 2000)
        spec = TriggerSpec("t", "b", MODE_DELAY_FALLING, 7, max_pulses=1000)
        pulses, crossings = drive(x, spec)
        falling = [n for n, k in crossings if k < 0]
        assert pulses
        for p in pulses:
            gaps = [p.fire_sample - n for n in falling if n <= p.fire_sample]
            assert min(gaps) == 7

    def test_zero_delay_reschedules_to_next_period(self):
        # paper behaviour: a delay of zero lands one period later, which is
        # zero samples after the *next* crossing of the same kind
        x = sine(10, 500, 2000)
        spec = TriggerSpec("t", "b", MODE_DELAY_RISING, 0, max_pulses=1000)
        pulses, crossings = drive(x, spec)
        rising = [n for n, k in crossings if k > 0]
        assert pulses
        for p in pulses:
            assert p.rescheduled
            assert min(abs(p.fire_sample - n) for n in rising) <= 1

    def test_delay_longer_than_period_not_reanchored(self):
        x = sine(10, 500, 3000)
        # 75 samples = 1.5 periods
        spec = TriggerSpec("t", "b", MODE_DELAY_RISING, 75, max_pulses=1000)
        pulses, crossings = drive(x, spec)
        rising = [n for n, k in crossings if k > 0]
        assert pulses
        for p in pulses:
            assert any(p.fire_sample - n == 75 for n in rising)


class TestPhaseMode:
    def test_pulse_near_each_target_crossing(self):
        x = sine(10, 500, 3000)
        spec = TriggerSpec("t", "b", MODE_PHASE, 90_000, max_pulses=1000)
        pulses, _ = drive(x, spec)
        # one pulse per period after bootstrap
        assert len(pulses) >= 50
        for p in pulses[2:]:
            err = (p.achieved_phase_millideg - 90_000) % 360_000
            # overshoot at most one sample's phase increment (7.2 deg)
            assert err <= 7_300

    def test_no_fire_without_detection(self):
        x = sine(10, 500, 1000)
        spec = TriggerSpec("t", "b", MODE_PHASE, 90_000, max_pulses=100)
        det = np.zeros(1000, dtype=bool)
        det[:300] = True
        pulses, _ = drive(x, spec, detected=det)
        assert all(p.fire_sample < 300 for p in pulses)

    def test_phase_jump_counts_as_crossing(self):
        # a committed period change that hops phase across the target fires
        # immediately and is flagged
        from osctrig.estimator import FeatureEstimate
        from osctrig.calibration import apply_correction
        eng = TriggerEngine(TriggerSpec("t", "b", MODE_PHASE, 180_000,
                                        max_pulses=10))
        e1 = FeatureEstimate(magnitude=10, period_samples=50,
                             phase_millideg=100_000, valid=True)
        c1 = apply_correction(e1, None)
        assert eng.tick(e1, c1, True, 0) is None
        e2 = FeatureEstimate(magnitude=10, period_samples=30,
                             phase_millideg=200_000, valid=True,
                             period_changed=True)
        c2 = apply_correction(e2, None)
        p = eng.tick(e2, c2, True, 1)
        assert p is not None
        assert p.via_period_jump


class TestQuotaWindow:
    def test_max_pulses_one_fires_once_ever(self):
        x = sine(10, 500, 5000)
        spec = TriggerSpec("t", "b", MODE_PHASE, 90_000, max_pulses=1)
        pulses, _ = drive(x, spec)
        assert len(pulses) == 1

    def test_window_zero_never_fires(self):
        x = sine(10, 500, 2000)
        spec = TriggerSpec("t", "b", MODE_PHASE, 90_000, max_pulses=10,
                          window_samples=0)
        pulses, _ = drive(x, spec)
        assert pulses == []

    def test_three_bursts_quota_two(self):
        x = sine(10, 500, 3000)
        det = np.zeros(3000, dtype=bool)
        det[200:500] = det[1200:1500] = det[2200:2500] = True
        spec = TriggerSpec("t", "b", MODE_PHASE, 90_000, max_pulses=2,
                          window_samples=3000)
        eng_pulses = []
        est = ZeroCrossingEstimator()
        eng = TriggerEngine(spec)
        per_burst = {0: 0, 1: 0, 2: 0}
        for n, v in enumerate(x.tolist()):
            e = est.tick(int(v), n)
            p = eng.tick(e, apply_correction(e, None), bool(det[n]), n)
            if p:
                eng_pulses.append(p)
        assert len(eng_pulses) == 2

    def test_rearm_restores_quota(self):
        x = sine(10, 500, 4000)
        spec = TriggerSpec("t", "b", MODE_PHASE, 90_000, max_pulses=1)
        est = ZeroCrossingEstimator()
        eng = TriggerEngine(spec)
        pulses = []
        for n, v in enumerate(x.tolist()):
            e = est.tick(int(v), n)
            p = eng.tick(e, apply_correction(e, None), True, n)
            if p:
                pulses.append(p)
            if n == 2000:
                eng.rearm(2000)
        assert len(pulses) == 2

    def test_window_expiry_disarms(self):
        spec = TriggerSpec("t", "b", MODE_PHASE, 90_000, max_pulses=100,
                          window_samples=500)
        x = sine(10, 500, 2000)
        pulses, _ = drive(x, spec)
        assert all(p.fire_sample < 500 for p in pulses)

    @given(
        quota=st.integers(min_value=1, max_value=5),
        window=st.integers(min_value=0, max_value=1500),
        arm=st.integers(min_value=0, max_value=500),
        seed=st.integers(min_value=0, max_value=99),
    )
    @settings(max_examples=40, deadline=None)
    def test_safety_invariants(self, quota, window, arm, seed):
        rng = np.random.default_rng(seed)
        x = (sine(10, 500, 2000, amp=3000)
             + rng.integers(-500, 500, 2000)).astype(np.int64)
        det = rng.random(2000) < 0.7
        spec = TriggerSpec("t", "b", MODE_PHASE, 123_000, max_pulses=quota,
                          window_samples=window, arm_sample=arm)
        pulses, _ = drive(x, spec, detected=det)
        assert len(pulses) <= quota
        for p in pulses:
            assert arm <= p.fire_sample < arm + window
            assert det[p.fire_sample]
