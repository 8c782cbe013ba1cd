"""Integer streaming filter execution: biquad cascades, FIR, decimation,
and the band-pass filter bank.

Every block offers `tick` (one sample in, output or None) and a `process`
batch path that is bit-exact with tick-by-tick execution.  All arithmetic
is plain Python integers, so values are exact; 32-bit feasibility is proven
at design time and optionally re-asserted per sample in checked mode.
"""

from __future__ import annotations

import numpy as np

from .core import INT32_MAX, INT32_MIN, StreamBlock
from .design import FirTaps, QuantizedBiquadCascade


def _shift_round(acc: int, shift: int) -> int:
    # round-half-up via pre-shift bias; arithmetic shift handles negatives
    if shift == 0:
        return acc
    return (acc + (1 << (shift - 1))) >> shift


class BiquadCascadeBlock(StreamBlock):
    """Direct Form I biquad cascade on integers.

    Per stage: y = (b0*x + b1*x1 + b2*x2 - a1*y1 - a2*y2 + bias) >> a0_shift
    with the rounded output fed back as history.  `checked` asserts the
    32-bit accumulator bound actually holds while running.
    """

    def __init__(self, cascade: QuantizedBiquadCascade, checked: bool = False):
        self.cascade = cascade
        self.rate_sps = cascade.rate_sps
        self.checked = checked
        self.headroom = cascade.headroom_bits
        self.mac_count = 0
        self.macs_per_tick = 5 * len(cascade.stages)
        self.reset()

    def reset(self) -> None:
        self.state = [[0, 0, 0, 0] for _ in self.cascade.stages]

    def tick(self, x: int) -> int:
        v = x << self.headroom
        for st, hist in zip(self.cascade.stages, self.state):
            x1, x2, y1, y2 = hist
            acc = st.b0 * v + st.b1 * x1 + st.b2 * x2 - st.a1 * y1 - st.a2 * y2
            if self.checked and not (INT32_MIN <= acc <= INT32_MAX):
                raise OverflowError(f"32-bit accumulator overflow: {acc}")
            y = _shift_round(acc, st.a0_shift)
            hist[0], hist[1], hist[2], hist[3] = v, x1, y, y1
            v = y
        self.mac_count += self.macs_per_tick
        return _shift_round(v, self.headroom)

    def process(self, xs) -> np.ndarray:
        if self.checked:
            return np.fromiter(
                (self.tick(int(x)) for x in xs), dtype=np.int64, count=len(xs)
            )
        # same recurrence, loop-local state for speed
        out = list(np.asarray(xs, dtype=np.int64).tolist())
        g = self.headroom
        if g:
            out = [v << g for v in out]
        for st, hist in zip(self.cascade.stages, self.state):
            b0, b1, b2, a1, a2 = st.b0, st.b1, st.b2, st.a1, st.a2
            shift = st.a0_shift
            bias = 1 << (shift - 1) if shift else 0
            x1, x2, y1, y2 = hist
            res = []
            ap = res.append
            for v in out:
                y = (b0 * v + b1 * x1 + b2 * x2 - a1 * y1 - a2 * y2 + bias) >> shift
                x2 = x1
                x1 = v
                y2 = y1
                y1 = y
                ap(y)
            hist[0], hist[1], hist[2], hist[3] = x1, x2, y1, y2
            out = res
        if g:
            gb = 1 << (g - 1)
            out = [(v + gb) >> g for v in out]
        self.mac_count += self.macs_per_tick * len(out)
        return np.array(out, dtype=np.int64)


class FirBlock(StreamBlock):
    """Integer FIR over a ring buffer: y = (sum taps[k]*x[n-k] + bias) >> shift."""

    def __init__(self, fir: FirTaps, checked: bool = False):
        self.fir = fir
        self.taps = [int(t) for t in fir.taps]
        self.rate_sps = fir.rate_sps
        self.checked = checked
        self.mac_count = 0
        self.macs_per_tick = len(self.taps)
        self.reset()

    def reset(self) -> None:
        self.hist = [0] * len(self.taps)
        self.pos = 0

    def tick(self, x: int) -> int:
        hist = self.hist
        n = len(hist)
        self.pos = (self.pos + 1) % n
        hist[self.pos] = x
        acc = 0
        p = self.pos
        for t in self.taps:
            acc += t * hist[p]
            p = p - 1 if p else n - 1
        if self.checked and not (INT32_MIN <= acc <= INT32_MAX):
            raise OverflowError(f"32-bit accumulator overflow: {acc}")
        self.mac_count += self.macs_per_tick
        return _shift_round(acc, self.fir.gain_shift)

    def process(self, xs) -> np.ndarray:
        if self.checked or len(xs) < 4 * len(self.taps):
            return np.fromiter(
                (self.tick(int(x)) for x in xs), dtype=np.int64, count=len(xs)
            )
        # exact int64 convolution against warmed-up history
        xs = np.asarray(xs, dtype=np.int64)
        n = len(self.taps)
        hist = np.array(
            [self.hist[(self.pos - k) % n] for k in range(n - 1, 0, -1)],
            dtype=np.int64,
        )
        ext = np.concatenate([hist, xs])
        taps = np.asarray(self.taps, dtype=np.int64)
        acc = np.convolve(ext, taps[::-1], mode="valid")
        shift = self.fir.gain_shift
        bias = 1 << (shift - 1) if shift else 0
        out = (acc + bias) >> shift
        # restore streaming state as if ticked sample by sample
        for v in ext[-(n - 1):].tolist() if n > 1 else []:
            self.pos = (self.pos + 1) % n
            self.hist[self.pos] = int(v)
        self.mac_count += self.macs_per_tick * len(xs)
        return out.astype(np.int64)


class DecimatorBlock(StreamBlock):
    """Keep one sample in `factor`; emits on counter 0 (the first of each
    group), so output k corresponds exactly to input k*factor."""

    def __init__(self, factor: int, rate_sps: int | None = None):
        if factor < 1:
            raise ValueError("decimation factor must be >= 1")
        self.factor = factor
        self.rate_sps = rate_sps
        self.mac_count = 0
        self.reset()

    def reset(self) -> None:
        self.counter = 0

    def tick(self, x: int):
        emit = self.counter == 0
        self.counter = (self.counter + 1) % self.factor
        return x if emit else None

    def process(self, xs) -> np.ndarray:
        xs = np.asarray(xs, dtype=np.int64)
        start = (-self.counter) % self.factor
        out = xs[start :: self.factor].copy()
        self.counter = (self.counter + len(xs)) % self.factor
        return out


class FilterBankBlock(StreamBlock):
    """Applies each band's filter to the same input sample.

    Output vector is ordered by band position; band ids must be unique and
    all bands share the input rate.
    """

    def __init__(self, bands):
        self.bands = list(bands)
        ids = [bid for bid, _ in self.bands]
        if len(set(ids)) != len(ids):
            raise ValueError(f"duplicate band ids: {ids}")
        rates = {blk.rate_sps for _, blk in self.bands if blk.rate_sps}
        if len(rates) > 1:
            raise ValueError(f"bands disagree on rate: {rates}")
        self.rate_sps = rates.pop() if rates else None
        self.band_ids = ids

    @property
    def mac_count(self) -> int:
        return sum(blk.mac_count for _, blk in self.bands)

    @mac_count.setter
    def mac_count(self, v):
        pass

    def tick(self, x: int):
        return [blk.tick(x) for _, blk in self.bands]

    def process(self, xs) -> np.ndarray:
        return np.stack([blk.process(xs) for _, blk in self.bands])

    def reset(self) -> None:
        for _, blk in self.bands:
            blk.reset()
