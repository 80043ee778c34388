import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats

from sessmarl.timeseries import (
    CaseRange,
    DataError,
    PriceAverageState,
    SYNTH_PROFILES,
    SynthProfile,
    load_csv,
    sample_window,
    synth_curves,
    synth_series,
    update_price_average,
    write_csv,
)

finite = st.floats(-1e4, 1e4, allow_nan=False)


def _write(tmp_path, text, name="data.csv"):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return p


def test_load_well_formed(tmp_path):
    p = _write(tmp_path, "time,price actual,temp\n"
                         "2017-01-01 00:00:00+01:00,50.5,3.0\n"
                         "2017-01-01 01:00:00+01:00,48.0,2.5\n"
                         "2017-01-01 02:00:00+01:00,47.25,2.0\n"
                         "2017-01-01 03:00:00+01:00,46.0,-1.5\n")
    s = load_csv(p)
    assert len(s) == 4
    np.testing.assert_array_equal(s.prices, [50.5, 48.0, 47.25, 46.0])
    np.testing.assert_array_equal(s.outdoor_temps, [3.0, 2.5, 2.0, -1.5])
    # +01:00 offsets are converted to naive UTC
    assert s.timestamps[0] == np.datetime64("2016-12-31T23", "h")


def test_nan_row_leaves_gap(tmp_path):
    p = _write(tmp_path, "time,price actual,temp\n"
                         "2017-01-01T00:00,50,3\n"
                         "2017-01-01T01:00,51,3\n"
                         "2017-01-01T02:00,nan,3\n"
                         "2017-01-01T03:00,52,3\n"
                         "2017-01-01T04:00,53,3\n")
    with pytest.raises(DataError, match="non-uniform spacing"):
        load_csv(p)


def test_trailing_missing_row_is_dropped(tmp_path):
    p = _write(tmp_path, "time,price actual,temp\n"
                         "2017-01-01T00:00,50,3\n"
                         "2017-01-01T01:00,51,\n")
    assert len(load_csv(p)) == 1


def test_column_map(tmp_path):
    p = _write(tmp_path, "dt_iso,price day ahead,price actual,t2m\n"
                         "2018-04-01T00:00,1,61.25,287.15\n"
                         "2018-04-01T01:00,2,59.5,286.15\n")
    s = load_csv(p, {"timestamp": "dt_iso", "price": "price actual", "temperature": "t2m"}, temperature_kelvin=True)
    assert s.prices.tolist() == [61.25, 59.5]
    np.testing.assert_allclose(s.outdoor_temps, [14.0, 13.0], atol=1e-12)


def test_malformed_row_reports_line(tmp_path):
    p = _write(tmp_path, "time,price actual,temp\n"
                         "2017-01-01T00:00,50,3\n"
                         "2017-01-01T01:00,abc,3\n")
    with pytest.raises(DataError, match="line 3"):
        load_csv(p)


def test_missing_file_and_columns(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_csv(tmp_path / "nope.csv")
    p = _write(tmp_path, "time,price\n2017-01-01T00:00,1\n")
    with pytest.raises(DataError, match="missing columns"):
        load_csv(p)


def test_csv_round_trip(tmp_path):
    s = synth_series("spring", length=100, seed=3)
    write_csv(s, tmp_path / "s.csv")
    back = load_csv(tmp_path / "s.csv")
    np.testing.assert_array_equal(back.timestamps, s.timestamps)
    np.testing.assert_array_equal(back.prices, s.prices)
    np.testing.assert_array_equal(back.outdoor_temps, s.outdoor_temps)


def test_series_is_immutable():
    s = synth_series("winter", length=96)
    with pytest.raises(ValueError):
        s.prices[0] = 1.0


# -- moving-average price ----------------------------------------------------

def test_price_average_hand_value():
    assert update_price_average(PriceAverageState(50.0, 0.2), 60.0).p_bar == pytest.approx(52.0, abs=1e-12)


@given(x=finite, eta=st.floats(0.01, 1.0))
def test_price_average_fixed_point(x, eta):
    assert update_price_average(PriceAverageState(x, eta), x).p_bar == pytest.approx(x, rel=1e-12, abs=1e-12)


@given(p_bar=finite, p=finite, eta=st.floats(0.01, 1.0))
def test_price_average_is_convex_combination(p_bar, p, eta):
    out = update_price_average(PriceAverageState(p_bar, eta), p).p_bar
    tol = 1e-9 * max(1.0, abs(p_bar), abs(p))
    assert min(p_bar, p) - tol <= out <= max(p_bar, p) + tol


def test_price_average_converges_monotonically():
    state = PriceAverageState(0.0, 0.2)
    values = []
    for _ in range(100):
        state = update_price_average(state, 30.0)
        values.append(state.p_bar)
    assert all(b > a for a, b in zip(values, values[1:]))
    # geometric series: 30 * (1 - 0.8^n)
    assert values[9] == pytest.approx(30 * (1 - 0.8 ** 10), abs=1e-12)
    assert values[-1] == pytest.approx(30.0, abs=1e-6)


def test_price_average_rejects_bad_eta():
    with pytest.raises(ValueError):
        PriceAverageState(1.0, 0.0)
    with pytest.raises(ValueError):
        update_price_average(PriceAverageState(1.0, 0.5), math.nan)


# -- synthesis ---------------------------------------------------------------

def test_synth_is_seeded():
    a = synth_series("summer", length=200, seed=5)
    b = synth_series("summer", length=200, seed=5)
    c = synth_series("summer", length=200, seed=6)
    np.testing.assert_array_equal(a.prices, b.prices)
    assert not np.array_equal(a.prices, c.prices)


def test_synth_winter_below_ceiling():
    s = synth_series("winter", length=24 * 60, seed=1)
    assert np.all(s.outdoor_temps < SYNTH_PROFILES["winter"].temp_ceiling)


def test_synth_zero_noise_is_exact_sinusoid():
    prof = SynthProfile(temp_mean=10, temp_amplitude=5, price_mean=40, price_amplitude=10, temp_noise=0, price_noise=0)
    s = synth_series("spring", length=120, seed=0, start="2017-04-01T00", profile=prof)
    h = np.arange(120)
    np.testing.assert_allclose(s.prices, 40 - 10 * np.cos(2 * np.pi * (h - 4) / 24), atol=1e-12)
    np.testing.assert_allclose(s.outdoor_temps, 10 + 5 * np.cos(2 * np.pi * (h - 15) / 24), atol=1e-12)
    # the helper used by the generator agrees with the closed form
    np.testing.assert_allclose(synth_curves(prof, h.astype(float))[0], s.prices, atol=1e-12)


def test_synth_rejects_short_length():
    with pytest.raises(ValueError):
        synth_series("spring", length=95)


# -- windows -----------------------------------------------------------------

RANGES = {"spring": CaseRange("2017-04-01T00", "2017-04-30T23", "2017-04-10T00")}


def test_eval_window_is_fixed():
    s = synth_series("spring", length=30 * 24)
    a = sample_window(s, "spring", "eval", case_ranges=RANGES)
    b = sample_window(s, "spring", "eval", case_ranges=RANGES)
    assert a.start_timestamp == np.datetime64("2017-04-10T00", "h")
    assert a.prices.tobytes() == b.prices.tobytes()
    assert a.outdoor_temps.tobytes() == b.outdoor_temps.tobytes()


def test_train_window_seeded_and_sliced():
    s = synth_series("spring", length=30 * 24)
    a = sample_window(s, "spring", "train", np.random.default_rng(4), RANGES)
    b = sample_window(s, "spring", "train", np.random.default_rng(4), RANGES)
    assert a.start_timestamp == b.start_timestamp
    i = s.index_of(a.start_timestamp)
    np.testing.assert_array_equal(a.prices, s.prices[i:i + 96])
    np.testing.assert_array_equal(a.outdoor_temps, s.outdoor_temps[i:i + 96])
    assert len(a) == 96


def test_train_starts_uniform_inside_range():
    s = synth_series("spring", length=30 * 24)
    rng = np.random.default_rng(0)
    starts = np.array([s.index_of(sample_window(s, "spring", "train", rng, RANGES).start_timestamp) for _ in range(1000)])
    n_starts = 30 * 24 - 96 + 1
    assert starts.min() >= 0 and starts.max() <= n_starts - 1
    counts, _ = np.histogram(starts, bins=10, range=(0, n_starts))
    assert stats.chisquare(counts).pvalue > 1e-3


def test_range_shorter_than_episode():
    s = synth_series("spring", length=30 * 24)
    short = {"spring": CaseRange("2017-04-01T00", "2017-04-03T00", "2017-04-01T00")}
    with pytest.raises(DataError, match="shorter"):
        sample_window(s, "spring", "train", np.random.default_rng(0), short)


def test_unknown_mode():
    s = synth_series("spring", length=30 * 24)
    with pytest.raises(ValueError):
        sample_window(s, "spring", "test", case_ranges=RANGES)
