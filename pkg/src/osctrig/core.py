"""Core signal types and streaming-block contracts.

All runtime signals are signed integers with a nominal 14-bit full scale
(+-8191), carried in 64-bit containers so that Python/numpy arithmetic can
never overflow silently; the 32-bit constraint of the target hardware is
enforced by design-time bounds checks and optional checked execution.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

FULL_SCALE = 8191          # nominal 14-bit signal range
INT32_MIN = -(1 << 31)
INT32_MAX = (1 << 31) - 1


class ConfigError(ValueError):
    """Invalid or inconsistent configuration (rates, references, ranges)."""


class SignalRangeError(ValueError):
    """Input sample outside the nominal +-8191 range at ingest."""


class DesignError(ValueError):
    """Filter design or quantization constraint violated."""


@dataclass
class TimeSeries:
    """Integer sample stream at a fixed rate.

    `t0` is the start offset in samples at this stream's own rate; sample k
    of the series sits at absolute index t0 + k.
    """

    rate_sps: int
    samples: np.ndarray
    t0: int = 0

    def __post_init__(self):
        if self.rate_sps <= 0:
            raise ConfigError(f"rate_sps must be positive, got {self.rate_sps}")
        self.samples = np.asarray(self.samples, dtype=np.int64)

    def __len__(self) -> int:
        return len(self.samples)

    def check_range(self, limit: int = FULL_SCALE) -> "TimeSeries":
        """Reject (not clamp) out-of-range samples at ingest."""
        if len(self.samples):
            lo = int(self.samples.min())
            hi = int(self.samples.max())
            if lo < -limit or hi > limit:
                raise SignalRangeError(
                    f"samples outside +-{limit}: min {lo}, max {hi}"
                )
        return self


class StreamBlock:
    """Base contract for sample-by-sample pipeline stages.

    Blocks are deterministic and causal: identical state plus identical
    input always yields identical output, and output at tick n depends only
    on inputs up to n.  Instances are single-threaded while processing.
    """

    rate_sps: int | None = None
    mac_count: int = 0

    def tick(self, x: int):
        raise NotImplementedError

    def reset(self) -> None:
        raise NotImplementedError


def run_series(block: StreamBlock, x: TimeSeries) -> TimeSeries:
    """Fold `block.tick` over a series.

    Uses the block's batch path (`process`) when it has one; batch paths are
    required to be bit-exact with tick-by-tick execution.  Output keeps the
    input rate except for decimating blocks, which carry their own factor.
    """
    if block.rate_sps is not None and block.rate_sps != x.rate_sps:
        raise ConfigError(
            f"block expects {block.rate_sps} sps, series is {x.rate_sps} sps"
        )
    factor = getattr(block, "factor", 1)
    if hasattr(block, "process"):
        out = block.process(x.samples)
    else:
        out = [y for y in (block.tick(int(v)) for v in x.samples) if y is not None]
    out = np.asarray(out, dtype=np.int64)
    if factor == 1:
        return TimeSeries(x.rate_sps, out, x.t0)
    if x.t0 % factor:
        raise ConfigError(f"t0 {x.t0} not aligned to decimation factor {factor}")
    return TimeSeries(x.rate_sps // factor, out, x.t0 // factor)


@dataclass
class IdentityBlock(StreamBlock):
    """Pass-through stage, mostly for tests and pipeline stubs."""

    rate_sps: int | None = None

    def tick(self, x: int) -> int:
        return x

    def process(self, xs: np.ndarray) -> np.ndarray:
        return np.asarray(xs, dtype=np.int64)

    def reset(self) -> None:
        pass


def read_raw_i16(path, rate_sps: int, limit: int = FULL_SCALE) -> TimeSeries:
    """Read a header-less little-endian int16 signal file.

    The sample rate is supplied out of band.  Samples outside the nominal
    range are rejected rather than clamped.
    """
    data = np.fromfile(path, dtype="<i2").astype(np.int64)
    return TimeSeries(rate_sps, data).check_range(limit)


def write_raw_i16(path, series: TimeSeries) -> None:
    series.check_range(32767)
    series.samples.astype("<i2").tofile(path)


def write_signal_csv(path, series: TimeSeries) -> None:
    """CSV export with columns (sample_index, value)."""
    with open(path, "w", newline="") as fh:
        fh.write("sample_index,value\n")
        t0 = series.t0
        fh.writelines(
            f"{t0 + k},{v}\n" for k, v in enumerate(series.samples.tolist())
        )


def read_signal_csv(path, rate_sps: int) -> TimeSeries:
    idx = []
    vals = []
    with open(path) as fh:
        header = fh.readline()
        if not header.startswith("sample_index"):
            raise ConfigError(f"unexpected signal CSV header: {header!r}")
        for line in fh:
            i, v = line.split(",")
            idx.append(int(i))
            vals.append(int(v))
    t0 = idx[0] if idx else 0
    return TimeSeries(rate_sps, np.array(vals, dtype=np.int64), t0)
