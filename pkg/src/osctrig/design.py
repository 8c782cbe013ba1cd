"""Offline filter design and quantization to the integer runtime format.

Design runs in double precision (Butterworth via bilinear transform with
pre-warped corners, windowed-sinc FIR); quantization produces biquad
cascades whose denominator a0 is an exact power of two so the runtime can
divide with an arithmetic shift.
"""

from __future__ import annotations

import functools
import itertools
from dataclasses import dataclass, field

import numpy as np
import scipy.signal

from .core import FULL_SCALE, INT32_MAX, DesignError

# Default band plan at the 500 sps DSP rate.  Octave-wide bands; config
# defaults, not constants of the architecture.
DEFAULT_BANDS = {
    "theta": (3.0, 8.0),
    "alpha": (6.0, 16.0),
    "beta": (12.0, 32.0),
    "gamma_lo": (24.0, 64.0),
    "gamma_mid": (48.0, 128.0),
}
DEFAULT_DSP_RATE = 500
DEFAULT_FULL_RATE = 2500
DEFAULT_AA_CORNER_HZ = 100.0

MAX_COEFF_MAGNITUDE = 1 << 17  # Butterworth biquads at shift<=15 stay inside
# Required headroom below 2^31 in the accumulator proof; covers the truncated
# impulse-response tail in the L1 bounds (relative size ~e^-40).
ACC_SAFETY_MARGIN = 1 << 20


@dataclass(frozen=True)
class FilterSpec:
    """Declarative description of one filter to design."""

    kind: str                      # "low-pass" | "band-pass"
    family: str                    # "iir-butterworth" | "fir-windowed"
    corners_hz: tuple              # 1 corner for low-pass, 2 for band-pass
    stages_or_taps: int            # biquad stages (IIR) or taps (FIR)
    rate_sps: int

    def __post_init__(self):
        if self.kind not in ("low-pass", "band-pass"):
            raise DesignError(f"unknown filter kind {self.kind!r}")
        if self.family not in ("iir-butterworth", "fir-windowed"):
            raise DesignError(f"unknown filter family {self.family!r}")
        nyq = self.rate_sps / 2.0
        corners = tuple(float(c) for c in self.corners_hz)
        if any(c <= 0.0 or c >= nyq for c in corners):
            raise DesignError(f"corners {corners} outside (0, {nyq})")
        if self.kind == "band-pass":
            if len(corners) != 2 or corners[0] >= corners[1]:
                raise DesignError(f"degenerate band {corners}")
        elif len(corners) != 1:
            raise DesignError("low-pass takes exactly one corner")
        if self.stages_or_taps <= 0:
            raise DesignError("stages_or_taps must be positive")


@dataclass
class BiquadCoeffs:
    """One real-valued biquad section, a0 normalized to 1."""

    b: np.ndarray
    a: np.ndarray  # (1, a1, a2)

    def response(self, freq_hz, rate_sps) -> np.ndarray:
        w = 2.0 * np.pi * np.asarray(freq_hz, dtype=float) / rate_sps
        z = np.exp(-1j * w)
        num = self.b[0] + self.b[1] * z + self.b[2] * z * z
        den = self.a[0] + self.a[1] * z + self.a[2] * z * z
        return num / den


@dataclass
class RealBiquadCascade:
    """Floating-point design result: ordered biquad sections plus metadata."""

    stages: list
    rate_sps: int
    spec: FilterSpec | None = None

    def response(self, freq_hz) -> np.ndarray:
        freq_hz = np.asarray(freq_hz, dtype=float)
        h = np.ones(freq_hz.shape, dtype=complex)
        for s in self.stages:
            h = h * s.response(freq_hz, self.rate_sps)
        return h

    def passband_grid(self, n: int = 512) -> np.ndarray:
        lo, hi = _analysis_band(self.spec, self.rate_sps)
        return np.linspace(lo, hi, n)


@dataclass
class QuantizedBiquadStage:
    """Integer DF1 section; runtime divides by 2**a0_shift with a bit shift."""

    b0: int
    b1: int
    b2: int
    a0_shift: int
    a1: int
    a2: int

    def coeffs(self):
        return (self.b0, self.b1, self.b2, self.a1, self.a2)

    def response(self, freq_hz, rate_sps) -> np.ndarray:
        den = float(1 << self.a0_shift)
        sec = BiquadCoeffs(
            np.array([self.b0, self.b1, self.b2], dtype=float) / den,
            np.array([1.0, self.a1 / den, self.a2 / den]),
        )
        return sec.response(freq_hz, rate_sps)

    def poles(self) -> np.ndarray:
        den = float(1 << self.a0_shift)
        return np.roots([1.0, self.a1 / den, self.a2 / den])


@dataclass
class QuantizedBiquadCascade:
    """Integer cascade plus the real-valued design it was rounded from.

    `headroom_bits` scales the signal up at cascade entry and back down at
    exit; it buys quantization-noise floor at the cost of internal dynamic
    range, and the 32-bit feasibility of the chosen value is proven by
    `worst_case_acc` at quantization time.
    """

    stages: list
    rate_sps: int
    design_reference: RealBiquadCascade
    headroom_bits: int = 0
    max_passband_dev_db: float = 0.0
    noise_rms_lsb: float = 0.0
    worst_case_acc: int = 0

    def response(self, freq_hz) -> np.ndarray:
        freq_hz = np.asarray(freq_hz, dtype=float)
        h = np.ones(freq_hz.shape, dtype=complex)
        for s in self.stages:
            h = h * s.response(freq_hz, self.rate_sps)
        return h

    def phase_delay_samples(self, freq_hz) -> np.ndarray:
        """-arg(H)/omega in samples at this cascade's own rate."""
        freq_hz = np.asarray(freq_hz, dtype=float)
        phase = np.unwrap(np.angle(self.response(freq_hz)))
        w = 2.0 * np.pi * freq_hz / self.rate_sps
        return -phase / w

    def group_delay_samples(self, freq_hz) -> np.ndarray:
        freq_hz = np.asarray(freq_hz, dtype=float)
        phase = np.unwrap(np.angle(self.response(freq_hz)))
        w = 2.0 * np.pi * freq_hz / self.rate_sps
        return -np.gradient(phase, w)


@dataclass
class FirTaps:
    """Integer symmetric FIR; output is shifted right by gain_shift."""

    taps: np.ndarray
    gain_shift: int
    rate_sps: int
    design_reference: np.ndarray | None = None

    def __post_init__(self):
        self.taps = np.asarray(self.taps, dtype=np.int64)

    def response(self, freq_hz) -> np.ndarray:
        freq_hz = np.asarray(freq_hz, dtype=float)
        w = 2.0 * np.pi * freq_hz / self.rate_sps
        n = np.arange(len(self.taps))
        z = np.exp(-1j * np.outer(w, n))
        return z @ (self.taps / float(1 << self.gain_shift))

    def group_delay_samples(self) -> float:
        return (len(self.taps) - 1) / 2.0


def _analysis_band(spec: FilterSpec | None, rate_sps: int):
    """Frequency range used for balancing/deviation analysis."""
    nyq = rate_sps / 2.0
    if spec is None:
        return 0.5, nyq * 0.98
    if spec.kind == "band-pass":
        lo, hi = spec.corners_hz
        return max(lo * 0.5, 0.25), min(hi * 2.0, nyq * 0.98)
    return 0.1, min(spec.corners_hz[0] * 2.0, nyq * 0.98)


def _passband(spec: FilterSpec):
    if spec.kind == "band-pass":
        return spec.corners_hz
    return (spec.corners_hz[0] * 0.02, spec.corners_hz[0])


def design_butterworth(spec: FilterSpec) -> RealBiquadCascade:
    """Butterworth cascade via bilinear transform with pre-warped corners.

    Band-pass with N stages has N-th order roll-off per edge; low-pass with
    N stages has 2N-th order roll-off.  Section gains are balanced so every
    stage has the same peak magnitude, which keeps all quantized
    coefficients well away from the rounding floor.
    """
    if spec.family != "iir-butterworth":
        raise DesignError("design_butterworth requires family=iir-butterworth")
    if spec.kind == "band-pass":
        order = spec.stages_or_taps
        sos = scipy.signal.butter(
            order, list(spec.corners_hz), btype="bandpass",
            fs=spec.rate_sps, output="sos",
        )
    else:
        order = 2 * spec.stages_or_taps
        sos = scipy.signal.butter(
            order, spec.corners_hz[0], btype="lowpass",
            fs=spec.rate_sps, output="sos",
        )
    stages = [
        BiquadCoeffs(row[:3].copy(), row[3:].copy()) for row in sos
    ]
    cascade = RealBiquadCascade(stages, spec.rate_sps, spec)
    _balance_sections(cascade)
    return cascade


def _balance_sections(cascade: RealBiquadCascade) -> None:
    lo, hi = _analysis_band(cascade.spec, cascade.rate_sps)
    grid = np.linspace(lo, hi, 4096)
    peaks = np.array(
        [np.abs(s.response(grid, cascade.rate_sps)).max() for s in cascade.stages]
    )
    target = float(np.prod(peaks)) ** (1.0 / len(peaks))
    for s, p in zip(cascade.stages, peaks):
        s.b = s.b * (target / p)


def design_fir(spec: FilterSpec) -> np.ndarray:
    """Windowed-sinc (Hamming) taps with exact linear phase.

    Tap count must be odd so the (taps-1)/2 group delay is an integer
    number of samples.  The windowed-sinc cutoff is the half-amplitude
    point, so the design iterates the cutoffs until the measured -3 dB
    corners land on the requested ones (matching the Butterworth corner
    convention used elsewhere).
    """
    if spec.family != "fir-windowed":
        raise DesignError("design_fir requires family=fir-windowed")
    n = spec.stages_or_taps
    if n % 2 == 0:
        raise DesignError(f"tap count must be odd, got {n}")
    if n == 1:
        return np.array([1.0])
    pass_zero = spec.kind == "low-pass"
    nyq = spec.rate_sps / 2.0
    targets = np.array(spec.corners_hz, dtype=float)
    cut = targets.copy()

    def build(c):
        return scipy.signal.firwin(
            n, list(c), window="hamming",
            pass_zero=pass_zero, fs=spec.rate_sps, scale=True,
        )

    taps = build(cut)
    for _ in range(12):
        measured = _fir_corners_3db(taps, spec.rate_sps, targets)
        if measured is None:
            break
        err = measured / targets
        if np.abs(err - 1.0).max() < 0.002:
            break
        cut = np.clip(cut / err, 0.05, nyq * 0.995)
        if spec.kind == "band-pass" and cut[0] >= cut[1]:
            break
        taps = build(cut)
    return taps


def _fir_corners_3db(taps, rate_sps, targets):
    """Half-power crossings of the tap DTFT nearest each target corner."""
    freqs = np.linspace(0.05, rate_sps / 2.0 * 0.999, 4096)
    w = 2.0 * np.pi * freqs / rate_sps
    mag = np.abs(np.exp(-1j * np.outer(w, np.arange(len(taps)))) @ taps)
    ref = mag.max() / np.sqrt(2.0)
    above = mag >= ref
    edges = np.flatnonzero(above[1:] != above[:-1])
    if len(edges) == 0:
        return None
    crossings = []
    for e in edges:
        f0, f1 = freqs[e], freqs[e + 1]
        m0, m1 = mag[e], mag[e + 1]
        crossings.append(f0 + (ref - m0) * (f1 - f0) / (m1 - m0))
    crossings = np.array(crossings)
    out = []
    for t in targets:
        out.append(crossings[np.abs(crossings - t).argmin()])
    return np.array(out)


def default_fir_taps(low_hz: float, high_hz: float, rate_sps: int) -> int:
    """Default tap count: about two band-center periods, rounded to odd."""
    center = np.sqrt(low_hz * high_hz)
    n = int(round(2.0 * rate_sps / center))
    return n if n % 2 else n + 1


def _round_half_away(v: float) -> int:
    return int(np.floor(v + 0.5)) if v >= 0 else -int(np.floor(-v + 0.5))


def _quantize_stage(section: BiquadCoeffs, shift: int) -> QuantizedBiquadStage:
    # Butterworth sections have numerators k*(1, +-2, 1) etc.; rounding the
    # gain once and reusing the integer pattern keeps the zeros exactly on
    # the unit circle instead of smearing them with independent rounding.
    den = 1 << shift
    b = section.b
    nonzero = b[np.abs(b) > 1e-14]
    if len(nonzero):
        k = nonzero[0]
        pattern = b / k
        pat_int = np.round(pattern)
        if np.allclose(pattern, pat_int, atol=1e-9):
            kq = _round_half_away(k * den)
            bq = [int(kq * p) for p in pat_int]
        else:
            bq = [_round_half_away(v * den) for v in b]
    else:
        bq = [0, 0, 0]
    a1 = _round_half_away(section.a[1] * den)
    a2 = _round_half_away(section.a[2] * den)
    return QuantizedBiquadStage(bq[0], bq[1], bq[2], shift, a1, a2)


def _stage_float(st: QuantizedBiquadStage):
    den = float(1 << st.a0_shift)
    return (
        np.array([st.b0, st.b1, st.b2]) / den,
        np.array([1.0, st.a1 / den, st.a2 / den]),
    )


def _impulse_through(stages, n: int) -> np.ndarray:
    h = np.zeros(n)
    h[0] = 1.0
    for st in stages:
        b, a = _stage_float(st)
        h = scipy.signal.lfilter(b, a, h)
    return h


def _impulse_len(stages) -> int:
    # long enough that the slowest pole's tail is negligible in the L1 sum
    r2 = max((abs(st.a2) / (1 << st.a0_shift) for st in stages), default=0.0)
    r = min(np.sqrt(max(r2, 1e-12)), 0.99995)
    return int(max(4096, np.ceil(40.0 / max(1.0 - r, 1e-5))))


def prove_no_overflow(stages, headroom_bits: int, input_limit: int = FULL_SCALE) -> int:
    """Worst-case |accumulator| bound over all inputs within +-input_limit.

    Stage input/output peaks are bounded by L1 norms of the cumulative
    impulse responses (the exact worst case for bounded inputs).  Raises
    when the bound does not fit a 32-bit accumulator with safety margin.
    """
    n = _impulse_len(stages)
    x0 = input_limit << headroom_bits
    worst = 0
    bound_in = float(x0)
    for i, st in enumerate(stages):
        bound_out = float(x0) * np.abs(_impulse_through(stages[: i + 1], n)).sum()
        acc = (abs(st.b0) + abs(st.b1) + abs(st.b2)) * int(np.ceil(bound_in)) + (
            abs(st.a1) + abs(st.a2)
        ) * int(np.ceil(bound_out))
        worst = max(worst, acc)
        bound_in = bound_out
    if worst > INT32_MAX - ACC_SAFETY_MARGIN:
        raise DesignError(
            f"32-bit accumulator bound violated: worst case {worst} "
            f"(2^{np.log2(worst):.2f}) at stage inputs +-{input_limit}"
        )
    return worst


def _noise_rms(stages, n: int) -> float:
    """Output RMS of the per-stage output rounding noise.

    Each stage injects a uniform(-1/2, 1/2] LSB error at its output which
    recirculates through its own denominator and then passes through the
    remaining stages.
    """
    total = 0.0
    for i, st in enumerate(stages):
        b, a = _stage_float(st)
        h = np.zeros(n)
        h[0] = 1.0
        h = scipy.signal.lfilter([1.0], a, h)
        for st2 in stages[i + 1 :]:
            b2, a2 = _stage_float(st2)
            h = scipy.signal.lfilter(b2, a2, h)
        total += (h * h).sum() / 12.0
    return float(np.sqrt(total))


def _max_passband_dev_db(stages, reference: RealBiquadCascade) -> float:
    grid = reference.passband_grid()
    hq = np.ones(len(grid), dtype=complex)
    for st in stages:
        hq = hq * st.response(grid, reference.rate_sps)
    hr = reference.response(grid)
    return float(np.abs(20.0 * np.log10(np.abs(hq) / np.abs(hr))).max())


def quantize_iir(
    cascade: RealBiquadCascade,
    coeff_shift: int = 12,
    headroom_bits: int = 0,
    input_limit: int = FULL_SCALE,
) -> QuantizedBiquadCascade:
    """Round a real cascade to integers at a fixed a0 shift.

    Every quantized stage is re-checked for stability and the whole cascade
    for 32-bit accumulator safety; either failure raises DesignError naming
    the stage.
    """
    stages = [_quantize_stage(s, coeff_shift) for s in cascade.stages]
    for i, st in enumerate(stages):
        if max(abs(c) for c in st.coeffs()) > MAX_COEFF_MAGNITUDE:
            raise DesignError(f"stage {i}: coefficient exceeds +-2^17")
        if np.abs(st.poles()).max() >= 1.0:
            raise DesignError(f"stage {i}: quantized poles not inside unit circle")
    worst = prove_no_overflow(stages, headroom_bits, input_limit)
    n = _impulse_len(stages)
    out = QuantizedBiquadCascade(
        stages=stages,
        rate_sps=cascade.rate_sps,
        design_reference=cascade,
        headroom_bits=headroom_bits,
        max_passband_dev_db=_max_passband_dev_db(stages, cascade),
        noise_rms_lsb=_noise_rms(stages, n) / (1 << headroom_bits),
        worst_case_acc=worst,
    )
    return out


def tune_quantization(
    cascade: RealBiquadCascade,
    max_dev_db: float = 0.2,
    input_limit: int = FULL_SCALE,
    shifts=(12, 13, 14, 15),
    headrooms=(0, 1, 2, 3),
) -> QuantizedBiquadCascade:
    """Pick per-stage shifts, stage order, gain split and headroom.

    Feasible candidates must round within `max_dev_db` of the design in the
    passband and prove 32-bit accumulator safety; among those the lowest
    rounding-noise floor wins (narrow low bands resonate their own rounding
    noise through their denominators, so the default order/shift is rarely
    optimal).  Deterministic: ties fall back to smaller shifts, then
    smaller headroom.
    """
    base = cascade.stages
    nstages = len(base)
    orders = [list(p) for p in itertools.permutations(range(nstages))]
    if len(orders) > 6:
        orders = orders[:6]
    if nstages <= 2:
        shift_combos = list(itertools.product(shifts, repeat=nstages))
    else:
        shift_combos = [(s,) * nstages for s in shifts]
    candidates = []
    for order in orders:
        for ratio in (0.5, 0.707, 1.0, 1.414, 2.0):
            stages = [
                BiquadCoeffs(base[j].b.copy(), base[j].a.copy()) for j in order
            ]
            stages[0].b = stages[0].b * ratio
            stages[-1].b = stages[-1].b / ratio
            for combo in shift_combos:
                qst = [_quantize_stage(s, sh) for s, sh in zip(stages, combo)]
                if any(
                    max(abs(c) for c in st.coeffs()) > MAX_COEFF_MAGNITUDE
                    or np.abs(st.poles()).max() >= 1.0
                    for st in qst
                ):
                    continue
                dev = _max_passband_dev_db(qst, cascade)
                if dev > max_dev_db:
                    continue
                n = _impulse_len(qst)
                noise = _noise_rms(qst, n)
                for headroom in headrooms:
                    try:
                        worst = prove_no_overflow(qst, headroom, input_limit)
                    except DesignError:
                        break
                    candidates.append((
                        noise / (1 << headroom),
                        sum(combo),
                        headroom,
                        QuantizedBiquadCascade(
                            stages=qst,
                            rate_sps=cascade.rate_sps,
                            design_reference=cascade,
                            headroom_bits=headroom,
                            max_passband_dev_db=dev,
                            noise_rms_lsb=noise / (1 << headroom),
                            worst_case_acc=worst,
                        ),
                    ))
    if not candidates:
        raise DesignError(
            f"no quantization meets {max_dev_db} dB within 32-bit bounds"
        )
    candidates.sort(key=lambda c: (round(c[0], 6), c[1], c[2]))
    return candidates[0][3]


def quantize_fir(taps: np.ndarray, gain_shift: int = 14,
                 rate_sps: int = DEFAULT_DSP_RATE,
                 input_limit: int = FULL_SCALE) -> FirTaps:
    """Scale symmetric taps by 2**gain_shift, rounding once per mirror pair."""
    taps = np.asarray(taps, dtype=float)
    n = len(taps)
    if not np.allclose(taps, taps[::-1], atol=1e-12):
        raise DesignError("FIR taps must be symmetric")
    q = np.zeros(n, dtype=np.int64)
    for k in range((n + 1) // 2):
        v = _round_half_away(taps[k] * (1 << gain_shift))
        q[k] = v
        q[n - 1 - k] = v
    worst = int(np.abs(q).sum()) * input_limit
    if worst > INT32_MAX - ACC_SAFETY_MARGIN:
        raise DesignError(
            f"FIR accumulator bound {worst} exceeds 32 bits at +-{input_limit}"
        )
    return FirTaps(q, gain_shift, rate_sps, design_reference=taps)


# --- coefficient file I/O ---------------------------------------------------
#
# IIR: one line per stage, "b0 b1 b2 a0_shift a1 a2" (integers), stages in
# processing order.  FIR: first line "gain_shift", then one tap per line.
# Lines starting with '#' are comments.

def save_iir_coeffs(path, cascade: QuantizedBiquadCascade) -> None:
    with open(path, "w") as fh:
        fh.write(f"# rate_sps {cascade.rate_sps}\n")
        fh.write(f"# headroom_bits {cascade.headroom_bits}\n")
        for st in cascade.stages:
            fh.write(f"{st.b0} {st.b1} {st.b2} {st.a0_shift} {st.a1} {st.a2}\n")


def load_iir_coeffs(path) -> QuantizedBiquadCascade:
    stages = []
    rate = DEFAULT_DSP_RATE
    headroom = 0
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                parts = line[1:].split()
                if parts[:1] == ["rate_sps"]:
                    rate = int(parts[1])
                elif parts[:1] == ["headroom_bits"]:
                    headroom = int(parts[1])
                continue
            b0, b1, b2, shift, a1, a2 = (int(v) for v in line.split())
            stages.append(QuantizedBiquadStage(b0, b1, b2, shift, a1, a2))
    ref = RealBiquadCascade(
        [BiquadCoeffs(*_stage_float(st)) for st in stages], rate, None
    )
    return QuantizedBiquadCascade(stages, rate, ref, headroom_bits=headroom)


def save_fir_coeffs(path, fir: FirTaps) -> None:
    with open(path, "w") as fh:
        fh.write(f"# rate_sps {fir.rate_sps}\n")
        fh.write(f"{fir.gain_shift}\n")
        fh.writelines(f"{t}\n" for t in fir.taps.tolist())


def load_fir_coeffs(path) -> FirTaps:
    rate = DEFAULT_DSP_RATE
    gain_shift = None
    taps = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                parts = line[1:].split()
                if parts[:1] == ["rate_sps"]:
                    rate = int(parts[1])
                continue
            if gain_shift is None:
                gain_shift = int(line)
            else:
                taps.append(int(line))
    return FirTaps(np.array(taps, dtype=np.int64), gain_shift, rate)


@functools.lru_cache(maxsize=64)
def design_band_cascade(name: str, low_hz: float, high_hz: float,
                        rate_sps: int = DEFAULT_DSP_RATE,
                        stages: int = 2) -> QuantizedBiquadCascade:
    spec = FilterSpec("band-pass", "iir-butterworth", (low_hz, high_hz),
                      stages, rate_sps)
    return tune_quantization(design_butterworth(spec))


@functools.lru_cache(maxsize=16)
def design_antialias_cascade(corner_hz: float = DEFAULT_AA_CORNER_HZ,
                             rate_sps: int = DEFAULT_FULL_RATE,
                             stages: int = 2) -> QuantizedBiquadCascade:
    spec = FilterSpec("low-pass", "iir-butterworth", (corner_hz,),
                      stages, rate_sps)
    return tune_quantization(design_butterworth(spec))
