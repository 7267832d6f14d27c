"""Rate series ingestion, rolling-window episodes and per-step agent states."""

from __future__ import annotations

import csv
import datetime as dt
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

logger = logging.getLogger(__name__)

SPLITS = ("train", "validation", "test")


class DataError(ValueError):
    """Raised for unreadable or malformed rate files and bad episode setups."""


def _frozen(values, dtype=float) -> np.ndarray:
    arr = np.array(values, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class RateSeries:
    """Daily FX closes for one pair (home currency per unit of foreign currency)."""

    pair_name: str
    dates: tuple
    rates: np.ndarray
    dropped: int = 0

    def __post_init__(self):
        object.__setattr__(self, "dates", tuple(self.dates))
        object.__setattr__(self, "rates", _frozen(self.rates))
        if len(self.dates) != len(self.rates):
            raise DataError("dates and rates differ in length")
        if any(b <= a for a, b in zip(self.dates, self.dates[1:])):
            raise DataError("dates must be strictly increasing")
        if not np.all(np.isfinite(self.rates)) or np.any(self.rates <= 0):
            raise DataError("rates must be positive and finite")

    def __len__(self) -> int:
        return len(self.rates)


@dataclass(frozen=True, eq=False)
class Episode:
    """One horizon-long window of a rate series, normalized by its first rate."""

    id: int
    start_date: dt.date
    raw_rates: np.ndarray
    split_tag: str = "train"
    end_date: dt.date | None = None
    pair: str = ""
    start_index: int = 0
    norm_rates: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        raw = _frozen(self.raw_rates)
        if raw.ndim != 1 or raw.size == 0:
            raise DataError("episode needs a non-empty 1-d rate vector")
        if not np.all(np.isfinite(raw)) or np.any(raw <= 0):
            raise DataError("episode rates must be positive and finite")
        if self.split_tag not in SPLITS:
            raise DataError(f"unknown split tag {self.split_tag!r}")
        object.__setattr__(self, "raw_rates", raw)
        norm = raw / raw[0]
        norm[0] = 1.0
        norm.setflags(write=False)
        object.__setattr__(self, "norm_rates", norm)
        if self.end_date is None:
            object.__setattr__(self, "end_date", self.start_date)

    @property
    def horizon(self) -> int:
        return len(self.raw_rates)

    def with_split(self, split_tag: str) -> "Episode":
        return Episode(self.id, self.start_date, self.raw_rates, split_tag,
                       self.end_date, self.pair, self.start_index)


@dataclass(frozen=True, eq=False)
class State:
    window: np.ndarray
    time_index: int
    current_rate: float
    future_actuals: np.ndarray | None = None


def _parse_date(text: str, lineno: int) -> dt.date:
    try:
        return dt.date.fromisoformat(text.strip())
    except ValueError:
        raise DataError(f"line {lineno}: bad date {text!r}") from None


def load_rate_series(path, pair: str, min_length: int = 1) -> RateSeries:
    """Read a ``date,rate`` CSV (header optional) into a sorted :class:`RateSeries`.

    Rows with an empty, non-numeric-but-blank or non-positive rate are dropped and
    counted in ``RateSeries.dropped``. Any other malformed row raises
    :class:`DataError` naming the offending line.
    """
    path = Path(path)
    try:
        handle = path.open(newline="")
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc

    rows = {}
    dropped = 0
    with handle:
        for lineno, row in enumerate(csv.reader(handle), start=1):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) < 2 and lineno > 1:
                raise DataError(f"line {lineno}: expected 'date,rate', got {row!r}")
            head = row[0].strip().lower()
            if lineno == 1 and head in ("date", "day", "timestamp"):
                continue
            date = _parse_date(row[0], lineno)
            text = row[1].strip() if len(row) > 1 else ""
            if text == "" or text.lower() in ("nan", "null", "na"):
                dropped += 1
                continue
            try:
                rate = float(text)
            except ValueError:
                raise DataError(f"line {lineno}: bad rate {text!r}") from None
            if not math.isfinite(rate) or rate <= 0:
                dropped += 1
                continue
            if date in rows:
                raise DataError(f"line {lineno}: duplicate date {date}")
            rows[date] = rate

    if len(rows) < min_length:
        raise DataError(f"{path}: {len(rows)} valid rows, need at least {min_length}")
    if dropped:
        logger.info("%s: dropped %d rows with missing or non-positive rates", path, dropped)
    dates = sorted(rows)
    return RateSeries(pair, dates, [rows[d] for d in dates], dropped)


def write_rate_series(series: RateSeries, path) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["date", "rate"])
        for d, r in zip(series.dates, series.rates):
            writer.writerow([d.isoformat(), repr(float(r))])


def build_episodes(series: RateSeries, horizon: int = 58, shift: int = 5) -> list[Episode]:
    """Cut ``series`` into rolling windows of ``horizon`` steps every ``shift`` steps."""
    if horizon < 2 or shift < 1:
        raise DataError("need horizon >= 2 and shift >= 1")
    if len(series) < horizon:
        raise DataError(f"series of length {len(series)} is shorter than horizon {horizon}")
    count = (len(series) - horizon) // shift + 1
    episodes = []
    for k in range(count):
        lo = k * shift
        episodes.append(Episode(
            id=k,
            start_date=series.dates[lo],
            raw_rates=series.rates[lo:lo + horizon],
            end_date=series.dates[lo + horizon - 1],
            pair=series.pair_name,
            start_index=lo,
        ))
    return episodes


def split_chronological(episodes: Sequence[Episode], boundaries) -> tuple[list, list, list]:
    """Assign episodes to train/validation/test by start date.

    ``boundaries`` is ``(validation_start, test_start)``; an episode whose start
    date falls before ``validation_start`` is training data, and so on.
    """
    val_start, test_start = boundaries
    if not val_start < test_start:
        raise DataError("split boundaries must be increasing")
    out = {name: [] for name in SPLITS}
    for ep in sorted(episodes, key=lambda e: e.start_date):
        if ep.start_date < val_start:
            tag = "train"
        elif ep.start_date < test_start:
            tag = "validation"
        else:
            tag = "test"
        out[tag].append(ep.with_split(tag))
    for name in SPLITS:
        if not out[name]:
            raise DataError(f"empty {name} split; check boundaries {val_start}, {test_start}")
    return out["train"], out["validation"], out["test"]


def count_unique(episodes: Sequence[Episode]) -> int:
    """Number of episodes kept by a greedy pass that skips overlapping windows."""
    count = 0
    next_free = None
    for ep in sorted(episodes, key=lambda e: e.start_index):
        if next_free is None or ep.start_index >= next_free:
            count += 1
            next_free = ep.start_index + ep.horizon
    return count


def make_state(episode: Episode, t: int, n: int = 10, augment_m: int = 0) -> State:
    T = episode.horizon
    if not 0 <= t < T:
        raise IndexError(f"t={t} outside [0, {T})")
    if n < 1 or augment_m < 0:
        raise ValueError("need n >= 1 and augment_m >= 0")
    rates = episode.norm_rates
    past = rates[max(0, t - n + 1):t + 1]
    window = np.concatenate([np.ones(n - past.size), past])
    future = None
    if augment_m > 0:
        ahead = rates[t + 1:min(T, t + 1 + augment_m)]
        future = np.concatenate([ahead, np.zeros(augment_m - ahead.size)])
    return State(window, t, float(rates[t]), future)


def rate_matrix(episodes: Sequence[Episode]) -> np.ndarray:
    """Stack normalized rates into an ``(E, T)`` array; episodes must share a horizon."""
    return np.stack([ep.norm_rates for ep in episodes])


def state_features(rates: np.ndarray, n: int, augment_m: int = 0) -> np.ndarray:
    """All states of every episode at once, shape ``(E, T, n + augment_m)``.

    Row ``[e, t]`` equals ``make_state(...)``'s window followed by its
    future_actuals, with the same padding rules.
    """
    rates = np.atleast_2d(np.asarray(rates, dtype=float))
    E, T = rates.shape
    padded = np.concatenate([np.ones((E, n - 1)), rates], axis=1)
    idx = np.arange(T)[:, None] + np.arange(n)[None, :]
    feats = padded[:, idx]
    if augment_m > 0:
        tail = np.concatenate([rates, np.zeros((E, augment_m))], axis=1)
        fidx = np.arange(T)[:, None] + 1 + np.arange(augment_m)[None, :]
        feats = np.concatenate([feats, tail[:, fidx]], axis=2)
    return feats


def write_episode_store(episodes: Iterable[Episode], path) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["episode_id", "start_date", "split", "t", "raw_rate", "norm_rate"])
        for ep in episodes:
            for t, (raw, norm) in enumerate(zip(ep.raw_rates, ep.norm_rates)):
                writer.writerow([ep.id, ep.start_date.isoformat(), ep.split_tag, t,
                                 repr(float(raw)), repr(float(norm))])


def business_days(start: dt.date, count: int) -> list[dt.date]:
    days = []
    day = start
    while len(days) < count:
        if day.weekday() < 5:
            days.append(day)
        day += dt.timedelta(days=1)
    return days


def simulate_rate_series(pair: str = "SYNTH", n_days: int = 2780, seed: int = 0,
                         start: dt.date = dt.date(2011, 1, 3), level: float = 1.3,
                         volatility: float = 0.005, regime_length: int = 0,
                         drift: float = 0.0) -> RateSeries:
    """Geometric random walk on business days, for demos and tests.

    With ``regime_length > 0`` the daily drift flips sign every
    ``regime_length`` days, giving a non-stationary series.
    """
    rng = np.random.default_rng(seed)
    steps = rng.normal(0.0, volatility, size=n_days)
    if regime_length > 0:
        sign = np.where((np.arange(n_days) // regime_length) % 2 == 0, 1.0, -1.0)
        steps = steps + sign * drift
    else:
        steps = steps + drift
    steps[0] = 0.0
    rates = level * np.exp(np.cumsum(steps))
    return RateSeries(pair, business_days(start, n_days), rates)
