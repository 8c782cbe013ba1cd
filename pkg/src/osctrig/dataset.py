"""Synthetic validation dataset: 1/f^2 noise with amplitude-calibrated,
weakly chirped tone bursts and ground-truth annotations.

Everything is a pure function of (spec, seed); the RNG is numpy's PCG64,
which together with the seed is part of the golden-file contract.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace

import numpy as np

from .core import ConfigError, FULL_SCALE, TimeSeries

# Noise measurement bands for tone SNR calibration (band name, low, high Hz).
TONE_BANDS = (
    ("theta", 4.0, 7.0),
    ("alpha", 7.0, 12.0),
    ("beta", 12.0, 21.0),
    ("gamma1", 21.0, 36.0),
    ("gamma2", 36.0, 63.0),
    ("gamma3", 63.0, 108.0),
)

# Tukey taper fraction per flank; flank midpoints define annotated onset and
# offset, so the full window is midpoint_span / (1 - taper).
TAPER_FRACTION = 0.25


@dataclass(frozen=True)
class DatasetSpec:
    duration_s: float = 300.0
    rate_sps: int = 2500
    noise_low_hz: float = 2.0
    noise_high_hz: float = 200.0
    # Full scale / 12: leaves room for the strongest (theta) tones plus
    # noise excursions inside the 14-bit range at 20 dB SNR.
    noise_rms: float = FULL_SCALE / 12.0
    snr_db: float = 20.0
    tone_periods_min: float = 3.0
    tone_periods_max: float = 5.0
    chirp_frac: float = 0.05
    ramp_frac: float = 0.10
    gap_mean_s: float = 3.0
    gap_min_s: float = 1.0
    first_tone_s: float = 3.0       # keep clear of detector warmup
    seed: int = 12345
    overlap_pairs_per_minute: int = 0  # degraded profile: forced overlaps

    def __post_init__(self):
        if not 0 < self.chirp_frac <= 0.10 and self.chirp_frac != 0:
            raise ConfigError("chirp fraction out of range (0, 0.10]")
        if not 0 <= self.ramp_frac <= 0.10:
            raise ConfigError("ramp fraction out of range [0, 0.10]")
        if not 3.0 <= self.tone_periods_min <= self.tone_periods_max <= 5.0:
            raise ConfigError("tone durations must lie in [3, 5] periods")


def degraded_spec(seed: int = 12345) -> DatasetSpec:
    """Harsher stand-in profile: 10 dB SNR, 10% chirp, forced cross-band
    tone overlaps once per minute."""
    return DatasetSpec(snr_db=10.0, chirp_frac=0.10, seed=seed,
                       overlap_pairs_per_minute=1)


@dataclass
class ToneAnnotation:
    """Ground truth for one tone burst.

    onset/offset are the flank midpoints in samples; win_start/win_len give
    the full Tukey extent so the exact integer tone component can be
    re-synthesized from the annotation alone.
    """

    band: str
    f0_hz: float
    chirp_frac: float        # signed total fractional frequency sweep
    onset_sample: int
    offset_sample: int
    amplitude: float
    phase_rad: float
    ramp_frac: float         # signed total fractional amplitude ramp
    win_start: int
    win_len: int

    def period_samples(self, rate_sps: int) -> float:
        return rate_sps / self.f0_hz


def _tukey(n: int, alpha: float) -> np.ndarray:
    # cosine roll-off over alpha/2 of the window at each flank
    if n <= 1:
        return np.ones(max(n, 1))
    t = np.linspace(0.0, 1.0, n)
    w = np.ones(n)
    edge = alpha / 2.0
    lo = t < edge
    hi = t > 1.0 - edge
    w[lo] = 0.5 * (1.0 + np.cos(np.pi * (t[lo] / edge - 1.0)))
    w[hi] = 0.5 * (1.0 + np.cos(np.pi * ((t[hi] - 1.0 + edge) / edge)))
    return w


def synth_tone(ann: ToneAnnotation, rate_sps: int) -> np.ndarray:
    """Exact integer tone component over [win_start, win_start + win_len)."""
    n = ann.win_len
    t = np.arange(n) / rate_sps
    dur = n / rate_sps
    # linear chirp: instantaneous f = f0 * (1 + chirp * (t/dur - 1/2))
    inst = ann.f0_hz * (1.0 + ann.chirp_frac * (t / dur - 0.5))
    phase = ann.phase_rad + 2.0 * np.pi * np.cumsum(inst) / rate_sps
    envelope = _tukey(n, 2.0 * TAPER_FRACTION)
    ramp = 1.0 + ann.ramp_frac * (t / dur - 0.5)
    wave = ann.amplitude * envelope * ramp * np.sin(phase)
    return np.rint(wave).astype(np.int64)


def gen_red_noise(spec: DatasetSpec, rng: np.random.Generator) -> np.ndarray:
    """1/f^2-power noise via frequency-domain synthesis.

    Amplitude proportional to 1/f inside [noise_low, noise_high], zero
    outside, uniform random phases, scaled to spec.noise_rms.
    """
    n = int(round(spec.duration_s * spec.rate_sps))
    freqs = np.fft.rfftfreq(n, 1.0 / spec.rate_sps)
    amp = np.zeros(len(freqs))
    band = (freqs >= spec.noise_low_hz) & (freqs <= spec.noise_high_hz)
    amp[band] = 1.0 / freqs[band]
    phases = rng.uniform(0.0, 2.0 * np.pi, len(freqs))
    spectrum = amp * np.exp(1j * phases)
    spectrum[0] = 0.0  # no DC
    x = np.fft.irfft(spectrum, n=n)
    x = x * (spec.noise_rms / np.sqrt(np.mean(x * x)))
    return np.rint(x).astype(np.int64)


def band_noise_power(noise: np.ndarray, low_hz: float, high_hz: float,
                     rate_sps: int) -> float:
    """Mean noise power inside a band (Parseval over the rfft slice)."""
    n = len(noise)
    spec = np.fft.rfft(noise.astype(float))
    freqs = np.fft.rfftfreq(n, 1.0 / rate_sps)
    sel = (freqs >= low_hz) & (freqs < high_hz)
    power = np.abs(spec[sel]) ** 2
    # rfft one-sided scaling: interior bins count twice
    interior = sel & (freqs > 0) & (freqs < rate_sps / 2.0)
    scale = np.where(interior[sel], 2.0, 1.0)
    return float((power * scale).sum()) / (n * n)


def _draw_tone(rng, spec, band, lo, hi, start_sample, target_power, rate):
    f0 = rng.uniform(lo, hi)
    periods = rng.uniform(spec.tone_periods_min, spec.tone_periods_max)
    chirp = rng.uniform(0.0, spec.chirp_frac) * rng.choice([-1.0, 1.0])
    ramp = rng.uniform(0.0, spec.ramp_frac) * rng.choice([-1.0, 1.0])
    phase = rng.uniform(0.0, 2.0 * np.pi)
    mid_len = periods * rate / f0
    win_len = int(round(mid_len / (1.0 - 2.0 * TAPER_FRACTION / 2.0)))
    win_len = int(round(mid_len / 0.75))
    flank = int(round(win_len * TAPER_FRACTION / 2.0))
    ann = ToneAnnotation(
        band=band, f0_hz=f0, chirp_frac=chirp,
        onset_sample=start_sample + flank,
        offset_sample=start_sample + win_len - flank,
        amplitude=1.0, phase_rad=phase, ramp_frac=ramp,
        win_start=start_sample, win_len=win_len,
    )
    # calibrate amplitude so the mean square between flank midpoints hits
    # the target power exactly
    unit = synth_tone(replace(ann, amplitude=10000.0), rate).astype(float) / 10000.0
    a = ann.onset_sample - ann.win_start
    b = ann.offset_sample - ann.win_start
    p_unit = float(np.mean(unit[a:b] ** 2))
    ann.amplitude = float(np.sqrt(target_power / p_unit))
    return ann


def place_tones(noise: np.ndarray, spec: DatasetSpec,
                rng: np.random.Generator):
    """Overlay tone bursts per band; returns (composite, annotations).

    Tone power is snr_db above the in-band noise power of the generated
    record.  Tones within one band are separated by at least gap_min_s;
    a tone whose addition would leave the 14-bit range is re-drawn, then
    shifted later as a last resort.
    """
    rate = spec.rate_sps
    n = len(noise)
    composite = noise.copy()
    annotations = []

    def try_place(ann) -> bool:
        tone = synth_tone(ann, rate)
        s, e = ann.win_start, ann.win_start + ann.win_len
        if e > n:
            return False
        seg = composite[s:e] + tone
        if np.abs(seg).max() > FULL_SCALE:
            return False
        composite[s:e] = seg
        annotations.append(ann)
        return True

    forced = _forced_overlap_pairs(noise, spec, rng, try_place)
    for band, lo, hi in TONE_BANDS:
        target = band_noise_power(noise, lo, hi, rate) * 10.0 ** (spec.snr_db / 10.0)
        cursor = int(spec.first_tone_s * rate)
        while True:
            gap = spec.gap_min_s + rng.exponential(spec.gap_mean_s - spec.gap_min_s)
            start = cursor + int(round(gap * rate))
            placed = False
            for attempt in range(8):
                ann = _draw_tone(rng, spec, band, lo, hi, start, target, rate)
                if ann.win_start + ann.win_len > n:
                    break
                if try_place(ann):
                    placed = True
                    break
                start += int(0.5 * rate)  # shift past the collision
            if start + rate > n or (not placed and start + 2 * rate > n):
                break
            if placed:
                cursor = annotations[-1].win_start + annotations[-1].win_len
            else:
                cursor = start
    annotations.sort(key=lambda a: a.win_start)
    return composite, annotations


def _forced_overlap_pairs(noise, spec, rng, try_place):
    """Degraded profile: one overlapping cross-band tone pair per minute."""
    if spec.overlap_pairs_per_minute <= 0:
        return 0
    rate = spec.rate_sps
    n = len(noise)
    minutes = int(spec.duration_s // 60)
    placed = 0
    band_list = list(TONE_BANDS)
    for m in range(minutes):
        for _ in range(spec.overlap_pairs_per_minute):
            i = int(rng.integers(0, len(band_list)))
            j = (i + 1 + int(rng.integers(0, len(band_list) - 1))) % len(band_list)
            base = int((m * 60 + 20 + rng.uniform(0, 20)) * rate)
            pair = []
            for band, lo, hi in (band_list[i], band_list[j]):
                target = band_noise_power(noise, lo, hi, rate) \
                    * 10.0 ** (spec.snr_db / 10.0)
                ann = _draw_tone(rng, spec, band, lo, hi, base, target, rate)
                pair.append(ann)
            if all(a.win_start + a.win_len <= n for a in pair):
                ok = all(try_place(a) for a in pair)
                placed += int(ok)
    return placed


def make_dataset(spec: DatasetSpec):
    """Generate the full dataset; pure function of the spec (incl. seed)."""
    rng = np.random.default_rng(np.random.PCG64(spec.seed))
    noise = gen_red_noise(spec, rng)
    composite, annotations = place_tones(noise, spec, rng)
    series = TimeSeries(spec.rate_sps, composite)
    return series, annotations, noise


def measure_tone_snr(composite: np.ndarray, noise: np.ndarray,
                     ann: ToneAnnotation, rate_sps: int) -> float:
    """Oracle: measured tone power over [onset, offset) against the
    record-wide in-band noise power, in dB."""
    tone = (composite - noise)[ann.win_start : ann.win_start + ann.win_len]
    a = ann.onset_sample - ann.win_start
    b = ann.offset_sample - ann.win_start
    p_tone = float(np.mean(tone[a:b].astype(float) ** 2))
    for band, lo, hi in TONE_BANDS:
        if band == ann.band:
            p_noise = band_noise_power(noise, lo, hi, rate_sps)
            return 10.0 * np.log10(p_tone / p_noise)
    raise ConfigError(f"unknown band {ann.band}")


ANNOTATION_FIELDS = [
    "band", "f0_hz", "onset_sample", "offset_sample", "amplitude",
    "chirp_frac", "phase_rad", "ramp_frac", "win_start", "win_len",
]


def write_annotations_csv(path, annotations) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(ANNOTATION_FIELDS)
        for a in annotations:
            w.writerow([
                a.band, repr(a.f0_hz), a.onset_sample, a.offset_sample,
                repr(a.amplitude), repr(a.chirp_frac), repr(a.phase_rad),
                repr(a.ramp_frac), a.win_start, a.win_len,
            ])


def read_annotations_csv(path) -> list:
    out = []
    with open(path, newline="") as fh:
        r = csv.DictReader(fh)
        for row in r:
            out.append(ToneAnnotation(
                band=row["band"],
                f0_hz=float(row["f0_hz"]),
                chirp_frac=float(row["chirp_frac"]),
                onset_sample=int(row["onset_sample"]),
                offset_sample=int(row["offset_sample"]),
                amplitude=float(row["amplitude"]),
                phase_rad=float(row["phase_rad"]),
                ramp_frac=float(row["ramp_frac"]),
                win_start=int(row["win_start"]),
                win_len=int(row["win_len"]),
            ))
    return out
