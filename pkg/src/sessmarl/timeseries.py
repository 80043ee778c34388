"""Hourly price / outdoor-temperature data: loading, synthesis and episode windows."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Mapping

import numpy as np

logger = logging.getLogger(__name__)

CASES = ("winter", "spring", "summer")
EPISODE_LENGTH = 96
HOUR = np.timedelta64(1, "h")

DEFAULT_COLUMNS = {"timestamp": "time", "price": "price actual", "temperature": "temp"}


class DataError(ValueError):
    """Raised when an input series violates the hourly-series contract."""


def _readonly(a) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class PriceTemperatureSeries:
    """Uniform hourly series of price (currency/MWh) and outdoor temperature (degC).

    Timestamps are naive UTC ``datetime64[h]``.
    """

    timestamps: np.ndarray
    prices: np.ndarray
    outdoor_temps: np.ndarray

    def __post_init__(self):
        ts = np.asarray(self.timestamps).astype("datetime64[h]")
        prices = np.asarray(self.prices, dtype=float)
        temps = np.asarray(self.outdoor_temps, dtype=float)
        if not (ts.shape == prices.shape == temps.shape) or ts.ndim != 1:
            raise DataError("timestamps, prices and temperatures must be 1-D and equally long")
        if len(ts) == 0:
            raise DataError("empty series")
        if not (np.all(np.isfinite(prices)) and np.all(np.isfinite(temps))):
            raise DataError("non-finite price or temperature value")
        if len(ts) > 1 and np.any(np.diff(ts) != HOUR):
            bad = int(np.flatnonzero(np.diff(ts) != HOUR)[0])
            raise DataError(f"non-uniform spacing between {ts[bad]} and {ts[bad + 1]}")
        object.__setattr__(self, "timestamps", _readonly(ts))
        object.__setattr__(self, "prices", _readonly(prices))
        object.__setattr__(self, "outdoor_temps", _readonly(temps))

    def __len__(self) -> int:
        return len(self.timestamps)

    def index_of(self, when) -> int:
        when = np.datetime64(when, "h")
        offset = int((when - self.timestamps[0]) // HOUR)
        if not 0 <= offset < len(self):
            raise DataError(f"{when} lies outside the series")
        return offset


@dataclass(frozen=True)
class EpisodeWindow:
    prices: np.ndarray
    outdoor_temps: np.ndarray
    case_label: str
    start_timestamp: np.datetime64

    def __post_init__(self):
        object.__setattr__(self, "prices", _readonly(np.asarray(self.prices, dtype=float)))
        object.__setattr__(self, "outdoor_temps", _readonly(np.asarray(self.outdoor_temps, dtype=float)))
        if self.prices.shape != self.outdoor_temps.shape or self.prices.ndim != 1:
            raise DataError("window prices and temperatures must be equally long 1-D arrays")

    def __len__(self) -> int:
        return len(self.prices)

    def head(self, k: int) -> "EpisodeWindow":
        """The first ``k`` steps as a shorter window (used for tiny oracle instances)."""
        return EpisodeWindow(self.prices[:k], self.outdoor_temps[:k], self.case_label, self.start_timestamp)


@dataclass(frozen=True)
class CaseRange:
    """Date range used for training windows and the canonical evaluation window start."""

    start: str
    end: str
    eval_start: str

    def bounds(self) -> tuple[np.datetime64, np.datetime64, np.datetime64]:
        return (np.datetime64(self.start, "h"), np.datetime64(self.end, "h"), np.datetime64(self.eval_start, "h"))


DEFAULT_CASE_RANGES = {
    "winter": CaseRange("2017-01-01T00", "2017-02-28T23", "2017-01-23T00"),
    "spring": CaseRange("2017-04-01T00", "2017-05-31T23", "2017-04-23T00"),
    "summer": CaseRange("2017-07-01T00", "2017-08-31T23", "2017-07-23T00"),
}


@dataclass(frozen=True)
class PriceAverageState:
    p_bar: float
    eta: float

    def __post_init__(self):
        if not math.isfinite(self.p_bar):
            raise ValueError("p_bar must be finite")
        if not 0.0 < self.eta <= 1.0:
            raise ValueError(f"eta must lie in (0, 1], got {self.eta}")


def update_price_average(state: PriceAverageState, p: float) -> PriceAverageState:
    """Exponential moving average step: ``p_bar' = (1 - eta) p_bar + eta p``."""
    if not math.isfinite(p):
        raise ValueError("price must be finite")
    return PriceAverageState((1.0 - state.eta) * state.p_bar + state.eta * p, state.eta)


def _parse_timestamp(text: str) -> np.datetime64:
    dt = datetime.fromisoformat(text.strip())
    if dt.tzinfo is not None:
        dt = dt.astimezone(timezone.utc).replace(tzinfo=None)
    return np.datetime64(dt, "h")


def _parse_value(text: str) -> float:
    text = text.strip()
    if text == "" or text.lower() in ("nan", "na", "null", "none"):
        return math.nan
    return float(text)


def load_csv(
    path,
    column_map: Mapping[str, str] | None = None,
    temperature_kelvin: bool = False,
) -> PriceTemperatureSeries:
    """Load an hourly price/temperature CSV.

    ``column_map`` maps the logical names ``timestamp``, ``price`` and
    ``temperature`` to header names in the file. Rows with a missing price or
    temperature are dropped; the remaining rows must be spaced exactly one
    hour apart.
    """
    columns = {**DEFAULT_COLUMNS, **(column_map or {})}
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such data file: {path}")

    stamps, prices, temps = [], [], []
    dropped = 0
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = [c for c in columns.values() if c not in (reader.fieldnames or [])]
        if missing:
            raise DataError(f"{path}: missing columns {missing}")
        for row in reader:
            line = reader.line_num
            try:
                ts = _parse_timestamp(row[columns["timestamp"]])
                price = _parse_value(row[columns["price"]])
                temp = _parse_value(row[columns["temperature"]])
            except (TypeError, ValueError) as exc:
                raise DataError(f"{path}: malformed row at line {line}: {exc}") from None
            if not (math.isfinite(price) and math.isfinite(temp)):
                dropped += 1
                continue
            stamps.append(ts)
            prices.append(price)
            temps.append(temp - 273.15 if temperature_kelvin else temp)
    if dropped:
        logger.info("dropped %d rows with missing values from %s", dropped, path)
    return PriceTemperatureSeries(np.array(stamps, dtype="datetime64[h]"), prices, temps)


def write_csv(series: PriceTemperatureSeries, path, column_map: Mapping[str, str] | None = None) -> None:
    columns = {**DEFAULT_COLUMNS, **(column_map or {})}
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow([columns["timestamp"], columns["price"], columns["temperature"]])
        for ts, p, t in zip(series.timestamps, series.prices, series.outdoor_temps):
            w.writerow([str(ts.astype("datetime64[s]")).replace("T", " ") + "+00:00", repr(float(p)), repr(float(t))])


@dataclass(frozen=True)
class SynthProfile:
    """Daily sinusoid parameters for one season of synthetic data."""

    temp_mean: float
    temp_amplitude: float
    price_mean: float
    price_amplitude: float
    temp_noise: float = 1.0
    price_noise: float = 4.0
    temp_ceiling: float = math.inf


# The price trough sits in the early morning, the temperature peak mid-afternoon.
PRICE_PHASE_HOUR = 4.0
TEMP_PHASE_HOUR = 15.0

SYNTH_PROFILES = {
    "winter": SynthProfile(temp_mean=2.0, temp_amplitude=4.0, price_mean=55.0, price_amplitude=15.0, temp_ceiling=10.0),
    "spring": SynthProfile(temp_mean=17.0, temp_amplitude=6.0, price_mean=45.0, price_amplitude=12.0, temp_ceiling=30.0),
    "summer": SynthProfile(temp_mean=29.0, temp_amplitude=5.0, price_mean=60.0, price_amplitude=14.0, temp_ceiling=40.0),
}


def synth_curves(profile: SynthProfile, hours: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Noise-free price and temperature sinusoids at hour-of-day ``hours``."""
    w = 2.0 * np.pi / 24.0
    price = profile.price_mean + profile.price_amplitude * np.cos(w * (hours - PRICE_PHASE_HOUR) + np.pi)
    temp = profile.temp_mean + profile.temp_amplitude * np.cos(w * (hours - TEMP_PHASE_HOUR))
    return price, temp


def synth_series(
    case_label: str,
    length: int = 59 * 24,
    seed: int = 0,
    start: str | None = None,
    profile: SynthProfile | None = None,
) -> PriceTemperatureSeries:
    """Seeded synthetic series for offline use when no dataset file is available.

    Noise is Gaussian, clipped to three standard deviations, and temperatures
    are capped at the profile ceiling.
    """
    if case_label not in CASES:
        raise ValueError(f"unknown case {case_label!r}")
    if length < EPISODE_LENGTH:
        raise ValueError(f"length must be at least {EPISODE_LENGTH} hours")
    profile = profile or SYNTH_PROFILES[case_label]
    start_ts = np.datetime64(start or DEFAULT_CASE_RANGES[case_label].start, "h")
    stamps = start_ts + np.arange(length) * HOUR
    hours = np.arange(length, dtype=float) + float((start_ts - start_ts.astype("datetime64[D]")) // HOUR)
    price, temp = synth_curves(profile, hours)

    rng = np.random.default_rng(seed)
    price = price + profile.price_noise * np.clip(rng.standard_normal(length), -3, 3)
    temp = temp + profile.temp_noise * np.clip(rng.standard_normal(length), -3, 3)
    temp = np.minimum(temp, profile.temp_ceiling - 1e-9) if math.isfinite(profile.temp_ceiling) else temp
    return PriceTemperatureSeries(stamps, price, temp)


def sample_window(
    series: PriceTemperatureSeries,
    case_label: str,
    mode: str,
    rng: np.random.Generator | None = None,
    case_ranges: Mapping[str, CaseRange] | None = None,
    length: int = EPISODE_LENGTH,
) -> EpisodeWindow:
    """Cut an episode window out of ``series``.

    ``train`` draws a start uniformly among all windows lying entirely inside
    the case's date range; ``eval`` returns the window at the case's fixed
    evaluation start.
    """
    ranges = case_ranges or DEFAULT_CASE_RANGES
    if case_label not in ranges:
        raise ValueError(f"no date range configured for case {case_label!r}")
    lo, hi, eval_start = ranges[case_label].bounds()
    if mode == "eval":
        start = series.index_of(eval_start)
    elif mode == "train":
        if rng is None:
            raise ValueError("train mode needs a random generator")
        first = series.index_of(max(lo, series.timestamps[0]))
        last = series.index_of(min(hi, series.timestamps[-1]))
        n_starts = last - first + 1 - length + 1
        if n_starts < 1:
            raise DataError(f"case {case_label!r} range is shorter than {length} hours")
        start = first + int(rng.integers(n_starts))
    else:
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    if start + length > len(series):
        raise DataError(f"window at {series.timestamps[start]} runs past the end of the series")
    sl = slice(start, start + length)
    return EpisodeWindow(series.prices[sl], series.outdoor_temps[sl], case_label, series.timestamps[start])
