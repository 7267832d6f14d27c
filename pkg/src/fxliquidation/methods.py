"""Method tokens -> policies, shared by the CLI and the comparison harness."""

from __future__ import annotations

from .backtest import OraclePolicy
from .baselines import IndicatorPolicy, NaivePolicy, parse_indicator
from .rl import DQNAgent, ImitationClassifier
from .stopping import BackwardRecursionRegressor, QStoppingRegressor, StoppingValueRegressor
from .threshold import AdaptiveThreshold, ThresholdPolicy
from .topk import TopKForecaster

NAIVE_TOKENS = {
    "sell-at-end": "sell_at_end",
    "sell-immediately": "sell_immediately",
    "sell-greedily": "sell_greedily",
}

INDICATOR_TOKENS = ("ema-cross:10,20", "rate-vs-ema:10", "rate-vs-ema:100",
                    "ema-cross:50,100", "macd-signal", "macd-signal-pos")

LEARNED = {
    "brr": (BackwardRecursionRegressor, {}),
    "dqn": (DQNAgent, {"reward": "vanilla"}),
    "dqn-rank": (DQNAgent, {"reward": "ranking"}),
    "dqn-binary": (DQNAgent, {"reward": "binary"}),
    "il": (ImitationClassifier, {"variant": "vanilla"}),
    "il-down": (ImitationClassifier, {"variant": "downsample"}),
    "il-focal": (ImitationClassifier, {"variant": "focal"}),
    "dp-finite": (StoppingValueRegressor, {"horizon": "finite"}),
    "dp-infinite": (StoppingValueRegressor, {"horizon": "infinite"}),
    "q-stopping": (QStoppingRegressor, {}),
    "topk": (TopKForecaster, {}),
}

ALL_METHODS = (list(NAIVE_TOKENS) + ["sell-at"] + list(INDICATOR_TOKENS)
               + ["brr", "dqn", "dqn-rank", "dqn-binary", "il", "il-down", "il-focal",
                  "dp-finite", "dp-infinite", "q-stopping", "topk"])


def is_learned(token: str) -> bool:
    return token in LEARNED


def is_oracle(token: str) -> bool:
    return token == "oracle" or token.startswith("oracle-")


def validate_token(token: str) -> str:
    try:
        if token in NAIVE_TOKENS or token == "sell-at" or token in LEARNED:
            return token
        if is_oracle(token):
            if token != "oracle" and int(token.split("-", 1)[1]) < 1:
                raise ValueError
            return token
        parse_indicator(token)
    except ValueError:
        raise ValueError(f"unknown method token {token!r}") from None
    return token


def expand_methods(spec: str) -> list:
    tokens = []
    for tok in spec.replace(";", " ").split():
        tokens.extend(ALL_METHODS if tok == "all" else [tok])
    for tok in tokens:
        validate_token(tok)
    return tokens


def make_estimator(token: str, cfg):
    """Unfitted learner for ``token`` configured from a :class:`RunConfig`."""
    cls, fixed = LEARNED[token]
    params = dict(fixed)
    params.update(n_lags=cfg.n, hidden=tuple(cfg.hidden), learning_rate=cfg.learning_rate,
                  batch_size=cfg.batch_size, augment=cfg.augment, seed=cfg.seed)
    if cls is DQNAgent:
        params["passes"] = cfg.dqn_passes
    else:
        params["epochs"] = cfg.epochs
    if cls is TopKForecaster:
        params["k"] = cfg.k
    if cls is ImitationClassifier and token == "il-focal":
        params["gamma"] = cfg.gamma
    return cls(**params)


def adaptive_for(cfg, mode="signal"):
    if cfg.no_at:
        return None
    return AdaptiveThreshold(window=cfg.at_window, n_candidates=cfg.at_candidates, mode=mode,
                             revenue=cfg.revenue, raw=cfg.raw_acr)


def make_policy(token: str, cfg, universe, estimator=None):
    """Policy ready for the backtester.

    Learned tokens need a fitted ``estimator``; they decide through a
    signal-mode threshold (adaptive unless ``cfg.no_at``).
    """
    if token in NAIVE_TOKENS:
        return NaivePolicy(NAIVE_TOKENS[token])
    if token == "sell-at":
        at = adaptive_for(cfg, mode="rate")
        return ThresholdPolicy(None, at, universe, delta=1.0, name=token)
    if is_oracle(token):
        n = None if token == "oracle" else int(token.split("-", 1)[1])
        return OraclePolicy(n)
    if token in LEARNED:
        if estimator is None:
            raise ValueError(f"{token} needs a fitted estimator")
        return ThresholdPolicy(estimator, adaptive_for(cfg), universe, name=token)
    return IndicatorPolicy(parse_indicator(token))
