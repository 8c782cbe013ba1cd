"""Two-threshold hysteresis detection of transient oscillation events.

The comparator arms after the magnitude holds above the on-threshold for
the on-dwell, asserts the detection flag `activation_delay` samples later
(letting the period estimate stabilize), and drops after the off-dwell with
no symmetric delay.  Event timestamps are retroactively dated to the first
over/under-threshold sample of the confirming run.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import ConfigError


@dataclass
class DetectorConfig:
    on_threshold: int = 0          # fixed mode; ignored when adaptive
    off_threshold: int = 0
    on_dwell: int = 0              # consecutive samples required to arm
    off_dwell: int = 0
    activation_delay: int = 0      # samples between arming and flag assert
    adaptive: bool = True
    on_mult: int = 3               # adaptive: on = on_mult * baseline
    off_mult: int = 2
    baseline_shift: int = 12       # EMA time constant = 2**shift samples
    warmup_samples: int = 0        # adaptive cold start: no detections until
                                   # this many samples have been seen

    def __post_init__(self):
        if self.adaptive:
            if self.off_mult >= self.on_mult:
                raise ConfigError("off multiplier must be below on multiplier")
        elif self.off_threshold >= self.on_threshold:
            raise ConfigError("off threshold must be below on threshold")


@dataclass
class OscillationEvent:
    band_id: str
    onset_sample: int
    offset_sample: int | None
    peak_magnitude: int
    flag_assert_sample: int = -1
    onset_threshold: int = 0


def baseline_shift_for(time_constant_s: float, rate_sps: int) -> int:
    """Nearest power-of-two EMA length for a wall-clock time constant."""
    return max(1, int(round(np.log2(max(time_constant_s * rate_sps, 2.0)))))


class ThresholdDetector:
    """Per-band hysteresis detector over the estimator magnitude stream.

    Adaptive mode keeps an integer leaky-EMA baseline A (baseline =
    A >> shift) that freezes while the detection flag is asserted so
    oscillations do not inflate it.  Threshold comparisons avoid division:
    mag >= k * baseline  is evaluated as  mag << shift >= k * A.
    """

    IDLE, PENDING, ACTIVE = 0, 1, 2

    def __init__(self, config: DetectorConfig, band_id: str = ""):
        self.cfg = config
        self.band_id = band_id
        self.mac_count = 0
        # two baseline-comparison products per tick in adaptive mode
        self.macs_per_tick = 2 if config.adaptive else 0
        self.reset()

    def reset(self) -> None:
        self.state = self.IDLE
        self.flag = False
        self.baseline_acc = 0
        self.seen = 0
        self.over_run = 0
        self.under_run = 0
        self.run_start = -1
        self.under_start = -1
        self.delay_left = 0
        self.event = None
        self.events = []

    def thresholds(self) -> tuple:
        """Current (on, off) thresholds in magnitude units."""
        if not self.cfg.adaptive:
            return self.cfg.on_threshold, self.cfg.off_threshold
        base = self.baseline_acc >> self.cfg.baseline_shift
        return self.cfg.on_mult * base, self.cfg.off_mult * base

    def _compare(self, mag: int) -> tuple:
        cfg = self.cfg
        if cfg.adaptive:
            scaled = mag << cfg.baseline_shift
            over = mag > 0 and scaled >= cfg.on_mult * self.baseline_acc
            under = scaled < cfg.off_mult * self.baseline_acc
        else:
            over = mag > 0 and mag >= cfg.on_threshold
            under = mag < cfg.off_threshold
        return over, under

    def tick(self, mag: int, n: int) -> bool:
        """Feed one magnitude sample; returns the detection flag."""
        cfg = self.cfg
        over, under = self._compare(mag)
        if cfg.adaptive:
            if self.seen < cfg.warmup_samples:
                over = False  # baseline not trustworthy yet
            if not self.flag:
                if self.baseline_acc == 0 and mag > 0:
                    # jump-start the EMA at the first live magnitude
                    self.baseline_acc = mag << cfg.baseline_shift
                else:
                    self.baseline_acc += (
                        mag - (self.baseline_acc >> cfg.baseline_shift)
                    )
        self.seen += 1
        self.mac_count += self.macs_per_tick

        if over:
            if self.over_run == 0:
                self.run_start = n
            self.over_run += 1
        else:
            self.over_run = 0
        if under:
            if self.under_run == 0:
                self.under_start = n
            self.under_run += 1
        else:
            self.under_run = 0

        if self.state == self.IDLE:
            if self.over_run >= max(1, cfg.on_dwell):
                self.state = self.PENDING
                self.delay_left = cfg.activation_delay
                self.event = OscillationEvent(
                    band_id=self.band_id,
                    onset_sample=self.run_start,
                    offset_sample=None,
                    peak_magnitude=mag,
                    onset_threshold=self.thresholds()[0],
                )
        if self.state == self.PENDING:
            self.event.peak_magnitude = max(self.event.peak_magnitude, mag)
            if self.under_run >= max(1, cfg.off_dwell):
                # excursion ended before the delay elapsed; no flag, no event
                self.state = self.IDLE
                self.event = None
            elif self.delay_left == 0:
                self.state = self.ACTIVE
                self.flag = True
                self.event.flag_assert_sample = n
            else:
                self.delay_left -= 1
        elif self.state == self.ACTIVE:
            self.event.peak_magnitude = max(self.event.peak_magnitude, mag)
            if self.under_run >= max(1, cfg.off_dwell):
                self.flag = False
                self.state = self.IDLE
                self.event.offset_sample = self.under_start
                self.events.append(self.event)
                self.event = None
        return self.flag

    def process(self, mags, n0: int = 0) -> np.ndarray:
        flags = np.zeros(len(mags), dtype=bool)
        for i, m in enumerate(np.asarray(mags, dtype=np.int64).tolist()):
            flags[i] = self.tick(m, n0 + i)
        return flags

    def finish(self, n_end: int) -> list:
        """Close an event still open at end of stream."""
        if self.state == self.ACTIVE and self.event is not None:
            self.event.offset_sample = n_end
            self.events.append(self.event)
            self.event = None
            self.state = self.IDLE
            self.flag = False
        return self.events


def write_events_csv(path, events) -> None:
    """Event list export: (band_id, onset, offset, peak_magnitude)."""
    with open(path, "w", newline="") as fh:
        fh.write("band_id,onset,offset,peak_magnitude\n")
        for e in events:
            off = e.offset_sample if e.offset_sample is not None else ""
            fh.write(f"{e.band_id},{e.onset_sample},{off},{e.peak_magnitude}\n")
