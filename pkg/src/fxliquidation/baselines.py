"""Non-learning policies: naive liquidation rules and EMA/MACD crossovers."""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum

import numpy as np


class Action(IntEnum):
    HOLD = 0
    SELL = 1


def ema(series, period: int) -> np.ndarray:
    """Exponential moving average with alpha = 2/(period+1), seeded at series[0]."""
    series = np.asarray(series, dtype=float)
    if series.size == 0:
        raise ValueError("empty series")
    if period < 1:
        raise ValueError("period must be >= 1")
    if period == 1:
        return series.copy()
    alpha = 2.0 / (period + 1.0)
    out = np.empty_like(series)
    out[0] = series[0]
    # increment form keeps a constant series exactly constant
    for t in range(1, series.size):
        out[t] = out[t - 1] + alpha * (series[t] - out[t - 1])
    return out


def macd(series, fast: int = 12, slow: int = 26, signal: int = 9):
    """Return ``(macd, signal)`` where macd = EMA(fast) - EMA(slow)."""
    line = ema(series, fast) - ema(series, slow)
    return line, ema(line, signal)


NAIVE_STRATEGIES = ("sell_at_end", "sell_immediately", "sell_greedily")


def naive_action(strategy: str, episode, t: int) -> Action:
    T = episode.horizon
    if not 0 <= t < T:
        raise IndexError(f"t={t} outside [0, {T})")
    if strategy == "sell_at_end":
        return Action(t == T - 1)
    if strategy == "sell_immediately":
        return Action.SELL
    if strategy == "sell_greedily":
        return Action(bool(episode.norm_rates[t] > 1.0))
    raise ValueError(f"unknown naive strategy {strategy!r}")


@dataclass(frozen=True)
class IndicatorSpec:
    kind: str
    x: int = 0
    y: int = 0

    def __post_init__(self):
        if self.kind == "ema_cross":
            if not 1 <= self.x < self.y:
                raise ValueError("ema_cross needs 1 <= x < y")
        elif self.kind == "rate_vs_ema":
            if self.x < 1:
                raise ValueError("rate_vs_ema needs a period >= 1")
        elif self.kind not in ("macd_signal", "macd_signal_positive"):
            raise ValueError(f"unknown indicator {self.kind!r}")

    @property
    def token(self) -> str:
        if self.kind == "ema_cross":
            return f"ema-cross:{self.x},{self.y}"
        if self.kind == "rate_vs_ema":
            return f"rate-vs-ema:{self.x}"
        return "macd-signal" if self.kind == "macd_signal" else "macd-signal-pos"


def parse_indicator(token: str) -> IndicatorSpec:
    name, _, arg = token.partition(":")
    if name == "ema-cross":
        x, y = (int(v) for v in arg.split(","))
        return IndicatorSpec("ema_cross", x, y)
    if name == "rate-vs-ema":
        return IndicatorSpec("rate_vs_ema", int(arg))
    if name == "macd-signal" and not arg:
        return IndicatorSpec("macd_signal")
    if name == "macd-signal-pos" and not arg:
        return IndicatorSpec("macd_signal_positive")
    raise ValueError(f"unknown indicator token {token!r}")


def indicator_sell_mask(spec: IndicatorSpec, rates) -> np.ndarray:
    """Sell mask over a whole rate path; entry t depends only on rates[:t+1]."""
    rates = np.asarray(rates, dtype=float)
    if spec.kind == "ema_cross":
        return ema(rates, spec.x) < ema(rates, spec.y)
    if spec.kind == "rate_vs_ema":
        return rates < ema(rates, spec.x)
    line, sig = macd(rates)
    if spec.kind == "macd_signal":
        return line < sig
    return (line < sig) & (line > 0.0)


def indicator_action(spec: IndicatorSpec, episode, t: int) -> Action:
    past = episode.norm_rates[:t + 1]
    return Action(bool(indicator_sell_mask(spec, past)[-1]))


class NaivePolicy:
    def __init__(self, strategy: str):
        if strategy not in NAIVE_STRATEGIES:
            raise ValueError(f"unknown naive strategy {strategy!r}")
        self.strategy = strategy
        self.name = strategy.replace("_", "-")

    def actions(self, episode) -> np.ndarray:
        rates = episode.norm_rates
        if self.strategy == "sell_at_end":
            mask = np.zeros(rates.size, dtype=bool)
            mask[-1] = True
            return mask
        if self.strategy == "sell_immediately":
            return np.ones(rates.size, dtype=bool)
        return rates > 1.0


class IndicatorPolicy:
    def __init__(self, spec: IndicatorSpec):
        self.spec = spec
        self.name = spec.token

    def actions(self, episode) -> np.ndarray:
        return indicator_sell_mask(self.spec, episode.norm_rates)
