"""Per-episode decision thresholds calibrated on trailing completed episodes."""

from __future__ import annotations

import bisect
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator

from .backtest import simulate_batch


@dataclass(frozen=True)
class ThresholdRule:
    """``signal`` mode sells when ``d - delta < 0``; ``rate`` mode when ``rate > delta``."""

    mode: str = "signal"
    delta: float = 0.0

    def __post_init__(self):
        if self.mode not in ("signal", "rate"):
            raise ValueError(f"unknown threshold mode {self.mode!r}")
        if not np.isfinite(self.delta):
            raise ValueError("threshold must be finite")

    def sell_mask(self, values) -> np.ndarray:
        values = np.asarray(values, dtype=float)
        if self.mode == "signal":
            return values - self.delta < 0.0
        return values > self.delta


def threshold_decide(rule: ThresholdRule, d: float, current_rate: float) -> bool:
    """True means Sell."""
    if rule.mode == "signal":
        return bool(d - rule.delta < 0.0)
    return bool(current_rate > rule.delta)


def candidate_grid(values, n_candidates: int = 21) -> np.ndarray:
    """Evenly spaced empirical quantiles of the finite ``values``, plus 0, deduplicated."""
    if n_candidates < 2:
        raise ValueError("need at least two candidates")
    values = np.asarray(values, dtype=float).ravel()
    values = values[np.isfinite(values)]
    if values.size == 0:
        raise ValueError("no finite values to build candidates from")
    qs = np.quantile(values, np.linspace(0.0, 1.0, n_candidates))
    return np.unique(np.append(qs, 0.0))


def _preference(delta: float):
    return (abs(delta), delta)


def best_threshold(values, rates, candidates, mode: str = "signal",
                   revenue="per-step", raw: bool = False):
    """Exhaustive search: ``(delta, payoff)`` with the highest mean payoff.

    Ties go to the smaller ``|delta|``, then to the smaller ``delta``.
    """
    candidates = [float(c) for c in candidates]
    if not candidates:
        raise ValueError("no candidates")
    values = np.asarray(values, dtype=float)
    rates = np.asarray(rates, dtype=float)
    H, T = rates.shape
    grid = np.array(candidates)[:, None, None]
    masks = (values[None] - grid < 0.0) if mode == "signal" else (values[None] > grid)
    rewards = simulate_batch(masks.reshape(-1, T), np.tile(rates, (len(candidates), 1)),
                             revenue, raw)
    # row means reduce each candidate's episodes in the same order as acr()
    payoffs = rewards.reshape(len(candidates), H).mean(axis=1)
    best = None
    for delta, payoff in zip(candidates, payoffs.tolist()):
        key = (-payoff, *_preference(delta))
        if best is None or key < best[0]:
            best = (key, float(delta), payoff)
    return best[1], best[2]


class AdaptiveThreshold(BaseEstimator):
    """Chooses a threshold per target episode from the episodes that ended before it began.

    Parameters
    ----------
    window : int
        Number of trailing completed episodes used for calibration.
    n_candidates : int
        Quantile count for the candidate grid (0 is always added).
    mode : {"signal", "rate"}
        Compare decision values or raw normalized rates against the threshold.
    """

    def __init__(self, window: int = 50, n_candidates: int = 21, mode: str = "signal",
                 revenue="per-step", raw: bool = False):
        self.window = window
        self.n_candidates = n_candidates
        self.mode = mode
        self.revenue = revenue
        self.raw = raw

    def history(self, universe, target) -> list:
        """The last ``window`` episodes of ``universe`` that finished before ``target`` started."""
        if self.window < 1:
            raise ValueError("window must be >= 1")
        done = [ep for ep in universe if ep.end_date < target.start_date]
        done.sort(key=lambda ep: (ep.end_date, ep.id))
        return done[-self.window:]

    def history_sorted(self, by_end, end_dates, target) -> list:
        """:meth:`history` over a universe pre-sorted by ``(end_date, id)``."""
        if self.window < 1:
            raise ValueError("window must be >= 1")
        stop = bisect.bisect_left(end_dates, target.start_date)
        return by_end[max(0, stop - self.window):stop]

    def calibrate(self, values, rates):
        """Return ``(ThresholdRule, payoff)`` for history values/rates of shape ``(H, T)``."""
        values = np.asarray(values, dtype=float)
        if values.size == 0:
            return ThresholdRule(self.mode, 0.0), float("nan")
        grid = candidate_grid(values, self.n_candidates)
        delta, payoff = best_threshold(values, rates, grid, self.mode, self.revenue, self.raw)
        return ThresholdRule(self.mode, delta), payoff


class ThresholdPolicy:
    """Turns decision values into actions, with a fixed or adaptive threshold.

    ``estimator`` is a fitted learner exposing ``decision_function``; pass
    ``None`` for rate mode, where normalized rates themselves are compared
    (the Sell-AT baseline). ``universe`` is every episode of the pair in
    chronological order; only episodes that ended before a target episode
    began are read when calibrating for it.
    """

    def __init__(self, estimator=None, adaptive: AdaptiveThreshold | None = None,
                 universe=(), delta: float = 0.0, name: str = "policy"):
        self.estimator = estimator
        self.adaptive = adaptive
        self.universe = sorted(universe, key=lambda ep: (ep.start_date, ep.id))
        self._by_end = sorted(self.universe, key=lambda ep: (ep.end_date, ep.id))
        self._end_dates = [ep.end_date for ep in self._by_end]
        self.mode = adaptive.mode if adaptive is not None else (
            "signal" if estimator is not None else "rate")
        self.delta = delta
        self.name = name
        self._values = {}
        self._rules = {}

    def _key(self, ep):
        return (ep.pair, ep.id, ep.start_date)

    def values(self, episodes) -> np.ndarray:
        episodes = list(episodes)
        todo = [ep for ep in episodes if self._key(ep) not in self._values]
        if todo:
            if self.estimator is None:
                fresh = np.stack([ep.norm_rates for ep in todo])
            else:
                fresh = self.estimator.decision_function(todo)
            for ep, row in zip(todo, fresh):
                self._values[self._key(ep)] = row
        return np.stack([self._values[self._key(ep)] for ep in episodes])

    def rule_for(self, episode) -> ThresholdRule:
        if self.adaptive is None:
            return ThresholdRule(self.mode, self.delta)
        key = self._key(episode)
        if key not in self._rules:
            hist = self.adaptive.history_sorted(self._by_end, self._end_dates, episode)
            if hist:
                rates = np.stack([ep.norm_rates for ep in hist])
                rule, _ = self.adaptive.calibrate(self.values(hist), rates)
            else:
                rule = ThresholdRule(self.mode, 0.0)
            self._rules[key] = rule
        return self._rules[key]

    def threshold_for(self, episode) -> float:
        return self.rule_for(episode).delta

    def actions(self, episode) -> np.ndarray:
        rule = self.rule_for(episode)
        return rule.sell_mask(self.values([episode])[0])
