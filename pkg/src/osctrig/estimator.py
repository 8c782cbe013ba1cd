"""Running magnitude, period, and phase estimation from zero-crossings of a
band-pass output, plus winner-take-all selection for dense filter banks.

Phase convention: 0 degrees at a rising zero-crossing, 90 at the peak (the
phase of a sine).  Phase is held in integer millidegrees; between crossings
it extrapolates linearly at 360 degrees per period from the last crossing's
anchor.  All state updates are integer arithmetic.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

MILLIDEG_FULL = 360_000
RISING_ANCHOR = 0
FALLING_ANCHOR = 180_000


@dataclass
class FeatureEstimate:
    """Snapshot of the tracker after one input sample.

    `magnitude` is the absolute extremum of the most recently completed
    half-wave; `period_samples` is twice the latest half-period.  Both are
    stale by up to half a period by construction.  `crossing` is +1 on the
    sample where a rising crossing committed, -1 for falling, else 0;
    `period_changed` marks ticks where a new period estimate was committed.
    """

    magnitude: int = 0
    period_samples: int = 0
    phase_millideg: int = 0
    last_rising_zc: int = -1
    last_falling_zc: int = -1
    valid: bool = False
    crossing: int = 0
    period_changed: bool = False


class ZeroCrossingEstimator:
    """Peak/trough/zero-crossing feature tracker for one band.

    Crossings are located at the first sample of the new sign (no
    sub-sample interpolation).  Samples equal to zero adopt the previous
    nonzero sign.  Crossings closer than `min_spacing` samples to the last
    accepted one are ignored as glitches; the crossing is then accepted at
    the first sample of the persisting new sign that clears the guard.
    """

    def __init__(self, min_spacing: int = 2):
        self.min_spacing = min_spacing
        self.mac_count = 0
        self.macs_per_tick = 2  # phase extrapolation multiply + divide
        self.reset()

    def reset(self) -> None:
        self.sign = 0
        self.last_cross_n = -1
        self.anchor = 0
        self.period = 0
        self.magnitude = 0
        self.extremum = 0
        self.crossings_seen = 0
        self.last_rising = -1
        self.last_falling = -1

    def tick(self, x: int, n: int) -> FeatureEstimate:
        s = 1 if x > 0 else (-1 if x < 0 else self.sign)
        crossing = 0
        period_changed = False

        if self.sign == 0:
            self.sign = s
        elif s != 0 and s != self.sign:
            if self.last_cross_n < 0 or n - self.last_cross_n >= self.min_spacing:
                crossing = s
                if self.last_cross_n >= 0:
                    half = n - self.last_cross_n
                    new_period = 2 * half
                    period_changed = new_period != self.period
                    self.period = new_period
                    self.magnitude = self.extremum
                    self.crossings_seen += 1
                self.crossings_seen = max(self.crossings_seen, 1)
                self.last_cross_n = n
                self.anchor = RISING_ANCHOR if s > 0 else FALLING_ANCHOR
                if s > 0:
                    self.last_rising = n
                else:
                    self.last_falling = n
                self.sign = s
                self.extremum = abs(x)
        if not crossing:
            ax = abs(x)
            if ax > self.extremum:
                self.extremum = ax

        valid = self.period > 0
        if valid:
            phase = (
                self.anchor
                + (MILLIDEG_FULL * (n - self.last_cross_n)) // self.period
            ) % MILLIDEG_FULL
        else:
            phase = 0
        self.mac_count += self.macs_per_tick
        return FeatureEstimate(
            magnitude=self.magnitude,
            period_samples=self.period,
            phase_millideg=phase,
            last_rising_zc=self.last_rising,
            last_falling_zc=self.last_falling,
            valid=valid,
            crossing=crossing,
            period_changed=period_changed,
        )

    def process(self, xs, n0: int = 0):
        """Batch tick; returns parallel arrays plus the crossing list.

        Bit-exact with tick-by-tick execution (same recurrence, loop-local
        state).
        """
        xs = np.asarray(xs, dtype=np.int64).tolist()
        count = len(xs)
        mag = np.zeros(count, dtype=np.int64)
        per = np.zeros(count, dtype=np.int64)
        ph = np.zeros(count, dtype=np.int64)
        valid = np.zeros(count, dtype=bool)
        changed = np.zeros(count, dtype=bool)
        crossings = []

        sign = self.sign
        last_cross = self.last_cross_n
        anchor = self.anchor
        period = self.period
        magnitude = self.magnitude
        extremum = self.extremum
        seen = self.crossings_seen
        last_rising = self.last_rising
        last_falling = self.last_falling
        guard = self.min_spacing

        for i in range(count):
            x = xs[i]
            n = n0 + i
            s = 1 if x > 0 else (-1 if x < 0 else sign)
            if sign == 0:
                sign = s
            elif s != 0 and s != sign:
                if last_cross < 0 or n - last_cross >= guard:
                    if last_cross >= 0:
                        period_new = 2 * (n - last_cross)
                        if period_new != period:
                            changed[i] = True
                        period = period_new
                        magnitude = extremum
                        seen += 1
                    else:
                        seen = max(seen, 1)
                    last_cross = n
                    anchor = RISING_ANCHOR if s > 0 else FALLING_ANCHOR
                    if s > 0:
                        last_rising = n
                    else:
                        last_falling = n
                    sign = s
                    extremum = abs(x)
                    crossings.append((n, s))
                    mag[i] = magnitude
                    per[i] = period
                    if period > 0:
                        valid[i] = True
                        ph[i] = anchor % MILLIDEG_FULL
                    continue
            ax = abs(x)
            if ax > extremum:
                extremum = ax
            mag[i] = magnitude
            per[i] = period
            if period > 0:
                valid[i] = True
                ph[i] = (
                    anchor + (MILLIDEG_FULL * (n - last_cross)) // period
                ) % MILLIDEG_FULL

        self.sign = sign
        self.last_cross_n = last_cross
        self.anchor = anchor
        self.period = period
        self.magnitude = magnitude
        self.extremum = extremum
        self.crossings_seen = seen
        self.last_rising = last_rising
        self.last_falling = last_falling
        self.mac_count += self.macs_per_tick * count
        return EstimatorTrace(mag, per, ph, valid, changed, crossings)


@dataclass
class EstimatorTrace:
    """Per-sample estimator outputs over a processed batch."""

    magnitude: np.ndarray
    period: np.ndarray
    phase_millideg: np.ndarray
    valid: np.ndarray
    period_changed: np.ndarray
    crossings: list  # (sample, +1 rising | -1 falling)

    def freq_hz(self, rate_sps: int) -> np.ndarray:
        out = np.zeros(len(self.period))
        nz = self.period > 0
        out[nz] = rate_sps / self.period[nz]
        return out


def write_estimator_csv(path, trace: EstimatorTrace, n0: int = 0) -> None:
    """Trace export: (n, magnitude, period, phase_millideg, valid)."""
    with open(path, "w", newline="") as fh:
        fh.write("n,magnitude,period,phase_millideg,valid\n")
        for i in range(len(trace.magnitude)):
            fh.write(
                f"{n0 + i},{trace.magnitude[i]},{trace.period[i]},"
                f"{trace.phase_millideg[i]},{int(trace.valid[i])}\n"
            )


class WinnerTakeAll:
    """Strongest-band selection over exponentially smoothed magnitudes.

    Smoothing uses fixed integer weights w_j = round(2^20 * a*(1-a)^j) over
    a finite horizon (a = 1/time_constant), so the smoothed scores are an
    exactly linear function of the magnitudes: scaling every input by a
    common positive integer provably cannot change the winner.  Ties go to
    the lowest band index.
    """

    def __init__(self, band_ids, time_constant_samples: int,
                 weight_bits: int = 20):
        if time_constant_samples < 1:
            raise ValueError("time constant must be >= 1 sample")
        self.band_ids = list(band_ids)
        alpha = 1.0 / time_constant_samples
        horizon = min(int(np.ceil(8 * time_constant_samples)), 1 << 14)
        w = alpha * (1.0 - alpha) ** np.arange(horizon)
        self.weights = np.round(w * (1 << weight_bits)).astype(np.int64)
        self.weights = self.weights[self.weights > 0]
        if len(self.weights) == 0:
            self.weights = np.array([1 << weight_bits], dtype=np.int64)
        self.mac_count = 0
        self.macs_per_tick = len(self.band_ids) * len(self.weights)
        self.reset()

    def reset(self) -> None:
        self.hist = np.zeros((len(self.band_ids), len(self.weights)),
                             dtype=np.int64)
        self.pos = 0

    def tick(self, magnitudes) -> int:
        """Feed one magnitude per band; returns the winning band index."""
        mags = np.asarray(magnitudes, dtype=np.int64)
        if mags.shape != (len(self.band_ids),):
            raise ValueError("one magnitude per band required")
        self.pos = (self.pos + 1) % self.hist.shape[1]
        self.hist[:, self.pos] = mags
        idx = (self.pos - np.arange(len(self.weights))) % self.hist.shape[1]
        scores = self.hist[:, idx] @ self.weights
        self.mac_count += self.macs_per_tick
        return int(np.argmax(scores))

    def smoothed(self) -> np.ndarray:
        idx = (self.pos - np.arange(len(self.weights))) % self.hist.shape[1]
        return self.hist[:, idx] @ self.weights


def dense_bank_centers(low_hz: float, high_hz: float,
                       step_octaves: float = 0.25) -> list:
    """Logarithmic center ladder for a dense bank, quarter-octave spacing."""
    centers = []
    c = low_hz
    while c <= high_hz * 1.0001:
        centers.append(round(c, 6))
        c = c * (2.0 ** step_octaves)
    return centers


def dense_band_edges(center_hz: float, width_octaves: float = 0.5):
    half = 2.0 ** (width_octaves / 2.0)
    return center_hz / half, center_hz * half
