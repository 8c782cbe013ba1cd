"""Stimulation trigger generation: phase-crossing or delay-after-crossing
pulses, gated by detection, pulse quota, and time window.

A pulse is one sample wide at the DSP rate.  Quota is per arming; the gate
never re-arms without an explicit re-arm command.
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass, field

from .calibration import DELAY_DENOM, CorrectedEstimate
from .core import ConfigError
from .estimator import MILLIDEG_FULL, FeatureEstimate

MODE_PHASE = "phase"
MODE_DELAY_RISING = "delay-rising"
MODE_DELAY_FALLING = "delay-falling"


@dataclass(frozen=True)
class TriggerSpec:
    spec_id: str
    band_id: str
    mode: str
    target: int                  # millidegrees (phase) or samples (delay)
    max_pulses: int = 1
    window_samples: int = 1 << 40
    arm_sample: int = 0
    use_corrected: bool = False  # schedule on delay-corrected estimates

    def __post_init__(self):
        if self.mode not in (MODE_PHASE, MODE_DELAY_RISING, MODE_DELAY_FALLING):
            raise ConfigError(f"unknown trigger mode {self.mode!r}")
        if self.mode == MODE_PHASE and not 0 <= self.target < MILLIDEG_FULL:
            raise ConfigError("phase target must be in [0, 360000) millideg")
        if self.mode != MODE_PHASE and self.target < 0:
            raise ConfigError("delay target must be >= 0 samples")
        if self.max_pulses < 1:
            raise ConfigError("max_pulses must be positive")


@dataclass
class TriggerEvent:
    fire_sample: int
    band_id: str
    spec_id: str
    achieved_phase_millideg: int
    achieved_phase_corrected_millideg: int
    via_period_jump: bool = False
    rescheduled: bool = False


def _round_sixteenths(v: int) -> int:
    # round-half-up to whole samples; v may be negative after correction
    if v >= 0:
        return (v + DELAY_DENOM // 2) // DELAY_DENOM
    return -((-v + DELAY_DENOM // 2) // DELAY_DENOM)


class TriggerEngine:
    """One trigger spec driven by one band's per-sample estimates."""

    def __init__(self, spec: TriggerSpec):
        self.spec = spec
        self.mac_count = 0
        self.macs_per_tick = 0  # comparisons and adds only
        self.reset()

    def reset(self) -> None:
        self.pulses_used = 0
        self.arm_sample = self.spec.arm_sample
        self.prev_phase = None
        self.pending = []  # (fire_sample, rescheduled), kept sorted

    def rearm(self, arm_sample: int) -> None:
        """Explicit re-arm: restores quota and opens a new window."""
        self.pulses_used = 0
        self.arm_sample = arm_sample
        self.prev_phase = None
        self.pending = []

    def armed(self, n: int) -> bool:
        """Quota/window gate; monotone within one arming."""
        return (
            self.pulses_used < self.spec.max_pulses
            and self.arm_sample <= n < self.arm_sample + self.spec.window_samples
        )

    def tick(self, est: FeatureEstimate, corrected: CorrectedEstimate,
             detected: bool, n: int) -> TriggerEvent | None:
        spec = self.spec
        use_corr = spec.use_corrected
        phase = corrected.phase_millideg if use_corr else est.phase_millideg
        valid = corrected.valid if use_corr else est.valid

        fired = None
        if spec.mode == MODE_PHASE:
            if detected and valid and self.prev_phase is not None:
                advance = (phase - self.prev_phase) % MILLIDEG_FULL
                offset = (spec.target - self.prev_phase) % MILLIDEG_FULL
                if 0 < offset <= advance and self.armed(n):
                    fired = TriggerEvent(
                        fire_sample=n,
                        band_id=spec.band_id,
                        spec_id=spec.spec_id,
                        achieved_phase_millideg=est.phase_millideg,
                        achieved_phase_corrected_millideg=corrected.phase_millideg,
                        via_period_jump=est.period_changed,
                    )
            self.prev_phase = phase if (detected and valid) else None
        else:
            want = 1 if spec.mode == MODE_DELAY_RISING else -1
            if est.crossing == want and valid and detected:
                if use_corr:
                    zc16 = corrected.zc_corrected_sixteenths
                else:
                    zc16 = n * DELAY_DENOM
                fire = _round_sixteenths(zc16 + spec.target * DELAY_DENOM)
                resched = False
                period = max(est.period_samples, 1)
                while fire <= n:
                    # intended instant already past: next period
                    fire += period
                    resched = True
                bisect.insort(self.pending, (fire, resched))
            while self.pending and self.pending[0][0] < n:
                self.pending.pop(0)  # stale (superseded by an equal-time fire)
            if self.pending and self.pending[0][0] == n:
                _, resched = self.pending.pop(0)
                if detected and self.armed(n):
                    fired = TriggerEvent(
                        fire_sample=n,
                        band_id=spec.band_id,
                        spec_id=spec.spec_id,
                        achieved_phase_millideg=est.phase_millideg,
                        achieved_phase_corrected_millideg=corrected.phase_millideg,
                        rescheduled=resched,
                    )
        if fired is not None:
            self.pulses_used += 1
        return fired


def write_pulses_csv(path, pulses) -> None:
    """Pulse trace: (fire_sample, band_id, spec_id, achieved_phase_millideg)."""
    with open(path, "w", newline="") as fh:
        fh.write(
            "fire_sample,band_id,spec_id,achieved_phase_millideg,"
            "achieved_phase_corrected_millideg,via_period_jump,rescheduled\n"
        )
        for p in pulses:
            fh.write(
                f"{p.fire_sample},{p.band_id},{p.spec_id},"
                f"{p.achieved_phase_millideg},"
                f"{p.achieved_phase_corrected_millideg},"
                f"{int(p.via_period_jump)},{int(p.rescheduled)}\n"
            )
