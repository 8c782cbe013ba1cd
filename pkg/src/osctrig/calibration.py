"""Period-indexed phase-delay corrections for filter-chain delay, and the
non-causal zero-shift reference used to validate them.

Delays are stored in sixteenths of a sample (phase correction needs
sub-sample precision; trigger scheduling rounds to whole samples at the
last step).  Tables may be built analytically from quantized coefficients
or from a measured transfer estimate.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import ConfigError
from .estimator import MILLIDEG_FULL, FeatureEstimate

DELAY_DENOM = 16


@dataclass
class CorrectedEstimate:
    """Estimator snapshot with the filter-chain delay compensated."""

    phase_millideg: int
    correction_millideg: int
    delay_sixteenths: int
    zc_corrected_sixteenths: int  # latest crossing time minus the delay
    clamped: bool
    valid: bool


class DelayCalibrationTable:
    """Lookup of chain phase delay, indexed by estimator period.

    Bins sit at every even period (the estimator always commits twice an
    integer half-period) from half the band's low corner to twice its high
    corner.  Out-of-range periods clamp to the nearest bin and are flagged,
    never rejected: an estimator glitch must not halt the pipeline.
    """

    def __init__(self, band_id: str, periods, delays_sixteenths, source: str):
        periods = [int(p) for p in periods]
        if periods != sorted(periods) or len(periods) == 0:
            raise ConfigError("period bins must be ascending and non-empty")
        self.band_id = band_id
        self.periods = periods
        self.delays = [int(d) for d in delays_sixteenths]
        self.source = source
        self._index = {p: d for p, d in zip(self.periods, self.delays)}

    def lookup(self, period: int) -> tuple:
        """(delay_sixteenths, clamped) for an estimator period."""
        d = self._index.get(period)
        if d is not None:
            return d, False
        if period <= self.periods[0]:
            return self.delays[0], True
        if period >= self.periods[-1]:
            return self.delays[-1], True
        # period inside range but off-grid (odd): nearest bin
        pos = int(np.searchsorted(self.periods, period))
        before = self.periods[pos - 1]
        after = self.periods[pos]
        pick = pos - 1 if period - before <= after - period else pos
        return self.delays[pick], False

    def delay_samples(self, period: int) -> float:
        return self.lookup(period)[0] / DELAY_DENOM


def _round_div(num: int, den: int) -> int:
    # round-half-up for possibly negative numerators
    if num >= 0:
        return (num + den // 2) // den
    return -((-num + den // 2) // den)


def period_bins_for_band(low_hz: float, high_hz: float, rate_sps: int):
    """Even periods covering half the low corner to twice the high corner."""
    f_max = min(2.0 * high_hz, rate_sps / 2.0 * 0.98)
    f_min = low_hz / 2.0
    half_min = max(1, int(np.floor(rate_sps / (2.0 * f_max))))
    half_max = int(np.ceil(rate_sps / (2.0 * f_min)))
    return [2 * h for h in range(half_min, half_max + 1)]


def build_table_analytic(band_id: str, chain, low_hz: float,
                         high_hz: float, rate_sps: int) -> DelayCalibrationTable:
    """Table from the analytic phase delay of a filter chain.

    The chain phase is unwrapped on a dense ascending grid (principal
    values alone mis-measure delays once the chain exceeds +-180 degrees)
    and interpolated at each bin's center frequency.  Stored delays are the
    phase delay shifted up by one period: band-pass chains have phase LEAD
    (negative tau) below band center, and adding a full period keeps the
    table non-negative and monotone while leaving the mod-360 phase
    correction untouched.
    """
    periods = period_bins_for_band(low_hz, high_hz, rate_sps)
    bin_freqs = np.array([rate_sps / p for p in periods])
    grid = np.linspace(bin_freqs.min() * 0.5, bin_freqs.max() * 1.02, 8192)
    tau_grid = chain.phase_delay_samples(grid)
    tau = np.interp(bin_freqs, grid, tau_grid) + np.asarray(periods)
    delays = [max(0, _round_div(int(round(t * DELAY_DENOM * 4096)), 4096))
              for t in tau]
    return DelayCalibrationTable(band_id, periods, delays, "iir-analytic")


def build_table_iir(band_id: str, transfer, low_hz: float, high_hz: float,
                    rate_sps: int) -> DelayCalibrationTable:
    """Table from a measured TransferEstimate (validation-harness route).

    Same one-period shift convention as the analytic builder.
    """
    periods = period_bins_for_band(low_hz, high_hz, rate_sps)
    freqs = np.array([rate_sps / p for p in periods])
    tau = np.interp(freqs, transfer.freq_hz, transfer.phase_delay_samples)
    tau = tau + np.asarray(periods)
    delays = [max(0, _round_div(int(round(t * DELAY_DENOM * 4096)), 4096))
              for t in tau]
    return DelayCalibrationTable(band_id, periods, delays, "iir-measured")


def build_table_fir(band_id: str, group_delay_samples: float,
                    rate_sps: int) -> DelayCalibrationTable:
    """Constant-delay table: a FIR chain has a single entry."""
    d = _round_div(int(round(group_delay_samples * DELAY_DENOM * 4096)), 4096)
    return DelayCalibrationTable(band_id, [2], [max(0, d)], "fir-constant")


class ChainDelayModel:
    """Analytic phase of an anti-alias + band-pass chain on one timeline.

    The anti-alias cascade runs at the full rate; its phase at frequency f
    is the same number of seconds regardless of rate, so delays are simply
    re-expressed in DSP-rate samples.
    """

    def __init__(self, band_cascade, aa_cascade=None):
        self.band = band_cascade
        self.aa = aa_cascade

    def phase_delay_samples(self, freq_hz) -> np.ndarray:
        """Exact chain phase delay in DSP-rate samples (dense grids)."""
        freq_hz = np.asarray(freq_hz, dtype=float)
        phase = np.unwrap(np.angle(self.band.response(freq_hz)))
        if self.aa is not None:
            phase = phase + np.unwrap(np.angle(self.aa.response(freq_hz)))
        w = 2.0 * np.pi * freq_hz / self.band.rate_sps
        return -phase / w

    def calibration_delay_samples(self, freq_hz) -> np.ndarray:
        """Phase delay in the table's convention: shifted up one period."""
        freq_hz = np.asarray(freq_hz, dtype=float)
        return self.phase_delay_samples(freq_hz) + self.band.rate_sps / freq_hz

    def gain(self, freq_hz) -> np.ndarray:
        g = np.abs(self.band.response(freq_hz))
        if self.aa is not None:
            g = g * np.abs(self.aa.response(freq_hz))
        return g

    def build_table(self, band_id: str, low_hz: float, high_hz: float):
        return build_table_analytic(
            band_id, self, low_hz, high_hz, self.band.rate_sps
        )


def correction_millideg(delay_sixteenths: int, period: int) -> int:
    """Phase advance for a chain delay at a given period, rounded to md."""
    return _round_div(MILLIDEG_FULL * delay_sixteenths, DELAY_DENOM * period)


def apply_correction(est: FeatureEstimate, table: DelayCalibrationTable | None,
                     ) -> CorrectedEstimate:
    """corrected phase = raw + 360 * delay/period; corrected ZC = raw - delay.

    The correction is exact at 1/16-sample resolution, so applying and then
    subtracting it restores the raw phase bit-exactly.
    """
    if table is None:
        zc = max(est.last_rising_zc, est.last_falling_zc) * DELAY_DENOM
        return CorrectedEstimate(est.phase_millideg, 0, 0, zc, False, est.valid)
    if not est.valid:
        return CorrectedEstimate(est.phase_millideg, 0, 0, 0, False, False)
    delay, clamped = table.lookup(est.period_samples)
    corr = correction_millideg(delay, est.period_samples)
    phase = (est.phase_millideg + corr) % MILLIDEG_FULL
    zc = max(est.last_rising_zc, est.last_falling_zc) * DELAY_DENOM - delay
    return CorrectedEstimate(phase, corr, delay, zc, clamped, True)


def zero_shift_filter(x, gain_fn, rate_sps: int) -> np.ndarray:
    """Non-causal magnitude-only filter: irfft(G(f) * rfft(x)).

    `gain_fn` maps frequency in Hz to real gain; the result has identically
    zero phase shift at every frequency.  Offline only; returns float64.
    """
    x = np.asarray(x, dtype=float)
    spec = np.fft.rfft(x)
    freqs = np.fft.rfftfreq(len(x), 1.0 / rate_sps)
    g = np.asarray(gain_fn(freqs), dtype=float)
    return np.fft.irfft(spec * g, n=len(x))


@dataclass
class ZeroShiftReference:
    """Sampled gain curve of a chain, applied as a zero-phase filter."""

    freq_hz: np.ndarray
    gain: np.ndarray

    @classmethod
    def from_chain(cls, chain: ChainDelayModel, rate_sps: int, n_grid: int = 4096):
        freqs = np.linspace(0.0, rate_sps / 2.0, n_grid)
        return cls(freqs, chain.gain(freqs))

    def apply(self, x, rate_sps: int) -> np.ndarray:
        return zero_shift_filter(
            x, lambda f: np.interp(f, self.freq_hz, self.gain), rate_sps
        )


def save_table(path, table: DelayCalibrationTable) -> None:
    """Text lines `period_samples delay_sixteenths`."""
    with open(path, "w") as fh:
        fh.write(f"# band {table.band_id} source {table.source}\n")
        for p, d in zip(table.periods, table.delays):
            fh.write(f"{p} {d}\n")


def load_table(path) -> DelayCalibrationTable:
    band_id = ""
    source = "iir-analytic"
    periods = []
    delays = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                parts = line[1:].split()
                if len(parts) >= 4 and parts[0] == "band":
                    band_id = parts[1]
                    source = parts[3]
                continue
            p, d = line.split()
            periods.append(int(p))
            delays.append(int(d))
    return DelayCalibrationTable(band_id, periods, delays, source)
