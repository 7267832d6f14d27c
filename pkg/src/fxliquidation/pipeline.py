"""Train / evaluate / grid-search / compare over chronologically split pairs."""

from __future__ import annotations

import dataclasses
import itertools
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import methods
from .backtest import acr, compare, evaluate, is_collapsed, oracle_sell_mask
from .data import build_episodes, load_rate_series, rate_matrix, split_chronological
from .threshold import ThresholdPolicy, best_threshold, candidate_grid

logger = logging.getLogger(__name__)


@dataclass
class PairData:
    pair: str
    train: list
    validation: list
    test: list

    @property
    def universe(self) -> list:
        return self.train + self.validation + self.test

    def split(self, name: str) -> list:
        return {"train": self.train, "validation": self.validation, "test": self.test}[name]


def load_pair(cfg, pair: str, data_dir) -> PairData:
    series = load_rate_series(Path(data_dir) / f"{pair}.csv", pair, min_length=cfg.horizon)
    episodes = build_episodes(series, cfg.horizon, cfg.shift)
    train, val, test = split_chronological(episodes, (cfg.val_start, cfg.test_start))
    return PairData(pair, train, val, test)


def fit_method(token: str, cfg, train):
    """Fitted estimator for learned tokens, ``None`` for rule-based ones."""
    if not methods.is_learned(token):
        return None
    est = methods.make_estimator(token, cfg)
    logger.info("fitting %s on %d episodes", token, len(train))
    return est.fit(train)


def evaluate_method(token: str, cfg, data: PairData, estimator=None, split: str | None = None):
    split = split or cfg.split
    policy = methods.make_policy(token, cfg, data.universe, estimator)
    return evaluate(policy, data.split(split), cfg.revenue, cfg.raw_acr, method=token)


def grid_search(token: str, cfg, train, validation, universe):
    """Pick ``n`` (and ``k`` for top-K) by validation ACR.

    Only ``train`` (fitting) and ``validation`` (scoring) rewards are read;
    threshold calibration for a validation episode sees only episodes that
    finished before it. Returns ``(best_overrides, {overrides: acr})``.
    """
    grid = {"n": list(cfg.n_grid)}
    if token == "topk":
        grid["k"] = list(cfg.k_grid)
    data = PairData("", list(train), list(validation), [])
    scores = {}
    best = None
    for combo in itertools.product(*grid.values()):
        overrides = dict(zip(grid.keys(), combo))
        trial = dataclasses.replace(cfg, **overrides)
        est = fit_method(token, trial, train)
        policy = methods.make_policy(token, trial, universe, est)
        score = acr(evaluate(policy, validation, trial.revenue, trial.raw_acr))
        key = tuple(sorted(overrides.items()))
        scores[key] = score
        if best is None or score > best[0]:
            best = (score, overrides)
    return best[1], scores


@dataclass
class Comparison:
    table: object
    results: list
    collapsed: dict


def compare_methods(tokens, cfg, data_by_pair: dict, estimators: dict | None = None) -> Comparison:
    """Evaluate every method on every pair's ``cfg.split`` and rank them."""
    estimators = {} if estimators is None else estimators
    acrs = {}
    all_results = []
    collapsed = {}
    for pair, data in data_by_pair.items():
        for token in tokens:
            est = estimators.get((token, pair))
            if est is None and methods.is_learned(token):
                est = fit_method(token, cfg, data.train)
                estimators[(token, pair)] = est
            results = evaluate_method(token, cfg, data, est)
            for r in results:
                r.pair, r.split = pair, cfg.split
            acrs[(token, pair)] = acr(results)
            collapsed[(token, pair)] = is_collapsed(results)
            all_results.extend(results)
    return Comparison(compare(acrs), all_results, collapsed)


def fixed_vs_adaptive(estimator, cfg, data: PairData, split: str = "validation"):
    """ACR with one global threshold fitted on the training split vs adaptive thresholds."""
    train_rates = rate_matrix(data.train)
    values = estimator.decision_function(data.train)
    delta, _ = best_threshold(values, train_rates, candidate_grid(values, cfg.at_candidates),
                              "signal", cfg.revenue, cfg.raw_acr)
    fixed = ThresholdPolicy(estimator, None, data.universe, delta=delta, name="fixed")
    adaptive = ThresholdPolicy(estimator, methods.adaptive_for(cfg), data.universe, name="at")
    episodes = data.split(split)
    return (acr(evaluate(fixed, episodes, cfg.revenue, cfg.raw_acr)),
            acr(evaluate(adaptive, episodes, cfg.revenue, cfg.raw_acr)), float(delta))


def sell_fraction(episodes) -> float:
    return float(np.mean(oracle_sell_mask(rate_matrix(episodes))))
