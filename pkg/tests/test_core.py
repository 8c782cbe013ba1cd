import numpy as np
import pytest

from osctrig.core import (
    ConfigError,
    IdentityBlock,
    SignalRangeError,
    TimeSeries,
    read_raw_i16,
    read_signal_csv,
    run_series,
    write_raw_i16,
    write_signal_csv,
)
from osctrig.design import design_band_cascade
from osctrig.runtime import BiquadCascadeBlock, DecimatorBlock


def test_identity_block_roundtrip():
    x = TimeSeries(500, np.arange(-50, 50))
    y = run_series(IdentityBlock(), x)
    assert np.array_equal(y.samples, x.samples)
    assert y.rate_sps == 500


def test_rate_mismatch_rejected():
    blk = IdentityBlock(rate_sps=500)
    with pytest.raises(ConfigError):
        run_series(blk, TimeSeries(2500, np.zeros(4)))


def test_range_check_rejects_out_of_range():
    with pytest.raises(SignalRangeError):
        TimeSeries(500, np.array([0, 8192])).check_range()
    TimeSeries(500, np.array([8191, -8191])).check_range()


def test_reset_restores_fresh_behaviour():
    casc = design_band_cascade("beta", 12, 32)
    blk = BiquadCascadeBlock(casc)
    impulse = np.zeros(200, dtype=np.int64)
    impulse[0] = 4096
    fresh = blk.process(impulse.copy())
    blk.process(np.full(300, 1000, dtype=np.int64))  # dirty the state
    blk.reset()
    again = blk.process(impulse.copy())
    assert np.array_equal(fresh, again)


def test_two_identical_pipelines_bit_identical():
    rng = np.random.default_rng(42)
    noise = rng.integers(-4000, 4000, 1000)
    casc = design_band_cascade("beta", 12, 32)
    a = BiquadCascadeBlock(casc)
    b = BiquadCascadeBlock(casc)
    ya = a.process(noise.copy())
    yb = np.array([b.tick(int(v)) for v in noise], dtype=np.int64)
    assert np.array_equal(ya, yb)


def test_concatenation_property():
    # run(a ++ b) == run(a) ++ run-with-carried-state(b)
    rng = np.random.default_rng(3)
    x = rng.integers(-2000, 2000, 400)
    casc = design_band_cascade("alpha", 6, 16)
    whole = BiquadCascadeBlock(casc).process(x.copy())
    blk = BiquadCascadeBlock(casc)
    part = np.concatenate([blk.process(x[:123].copy()), blk.process(x[123:].copy())])
    assert np.array_equal(whole, part)


def test_causality_changing_future_sample():
    rng = np.random.default_rng(9)
    x = rng.integers(-2000, 2000, 300)
    casc = design_band_cascade("beta", 12, 32)
    y1 = BiquadCascadeBlock(casc).process(x.copy())
    x2 = x.copy()
    x2[200] += 500
    y2 = BiquadCascadeBlock(casc).process(x2)
    assert np.array_equal(y1[:200], y2[:200])
    assert not np.array_equal(y1[200:], y2[200:])


def test_decimator_rate_and_t0_mapping():
    x = TimeSeries(2500, np.arange(100), t0=0)
    y = run_series(DecimatorBlock(5, rate_sps=2500), x)
    assert y.rate_sps == 500
    assert np.array_equal(y.samples, np.arange(0, 100, 5))


def test_raw_i16_roundtrip(tmp_path):
    path = tmp_path / "sig.i16"
    x = TimeSeries(2500, np.array([0, 1, -1, 8191, -8191]))
    write_raw_i16(path, x)
    y = read_raw_i16(path, 2500)
    assert np.array_equal(x.samples, y.samples)
    assert y.rate_sps == 2500


def test_raw_i16_ingest_rejects_out_of_range(tmp_path):
    path = tmp_path / "bad.i16"
    np.array([0, 9000], dtype="<i2").tofile(path)
    with pytest.raises(SignalRangeError):
        read_raw_i16(path, 2500)


def test_signal_csv_roundtrip(tmp_path):
    path = tmp_path / "sig.csv"
    x = TimeSeries(500, np.array([5, -3, 0]), t0=7)
    write_signal_csv(path, x)
    y = read_signal_csv(path, 500)
    assert np.array_equal(x.samples, y.samples)
    assert y.t0 == 7
