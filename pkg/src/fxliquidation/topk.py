"""Multi-task regression of the K largest future rates."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.utils.validation import check_is_fitted

from . import nn
from .base import DecisionSignal, EpisodeLearner, as_rates, check_episodes
from .backtest import suffix_max_after
from .data import rate_matrix


@dataclass(frozen=True)
class TopKTargets:
    values: np.ndarray
    J: int

    @property
    def mean(self) -> float:
        return float(np.mean(self.values))


def topk_targets(episode, t: int, k: int) -> TopKTargets:
    """The ``min(k, T-1-t)`` largest rates after step ``t``, largest first."""
    rates = episode.norm_rates if hasattr(episode, "norm_rates") else np.asarray(episode, float)
    T = rates.size
    if k < 1:
        raise ValueError("k must be >= 1")
    if not 0 <= t < T - 1:
        raise ValueError(f"no future rates after t={t} (horizon {T}); the step must sell")
    future = np.sort(rates[t + 1:])[::-1]
    J = min(k, T - 1 - t)
    return TopKTargets(future[:J].copy(), J)


def topk_target_matrix(rates, k: int):
    """Targets and rank mask for every step before the last.

    Returns ``(targets, mask)`` of shape ``(E, T-1, k)``; ranks beyond the
    remaining future have mask 0 and target 0.
    """
    rates = np.atleast_2d(np.asarray(rates, dtype=float))
    E, T = rates.shape
    targets = np.zeros((E, T - 1, k))
    mask = np.zeros((E, T - 1, k))
    for t in range(T - 1):
        future = -np.sort(-rates[:, t + 1:], axis=1)[:, :k]
        J = future.shape[1]
        targets[:, t, :J] = future
        mask[:, t, :J] = 1.0
    return targets, mask


class _FutureRateRegressor(EpisodeLearner):
    def _training_set(self, rates):
        raise NotImplementedError

    def _loss(self):
        raise NotImplementedError

    def fit(self, episodes):
        T = check_episodes(episodes, min_horizon=2)
        rates = rate_matrix(episodes)
        feats = self._features(rates)[:, :-1]
        n_in = feats.shape[2]
        X = feats.reshape(-1, n_in)
        Y, M = self._training_set(rates)
        net = nn.MLP(self._layer_dims(n_in, Y.shape[1]), seed=self.seed)
        self.loss_history_ = nn.fit_supervised(
            net, X, Y, self._loss(), M, epochs=self.epochs, batch_size=self.batch_size,
            learning_rate=self.learning_rate, seed=self.seed, step=self._train_step)
        self.network_ = net
        self.horizon_ = T
        return self

    @staticmethod
    def _train_step(*args):
        return nn.train_step(*args)

    def heads(self, episodes) -> np.ndarray:
        """Raw network outputs per step, shape ``(E, T, outputs)``."""
        rates = as_rates(episodes)
        self._check_horizon(rates)
        feats = self._features(rates)
        E, T, n_in = feats.shape
        return self.network_.forward(feats.reshape(-1, n_in)).reshape(E, T, -1)

    def continuation_values(self, episodes) -> np.ndarray:
        return self.heads(episodes).mean(axis=2)

    def _decision(self, rates):
        return self.heads(rates).mean(axis=2) - rates

    def decide(self, state) -> DecisionSignal:
        check_is_fitted(self)
        if state.time_index >= self.horizon_ - 1:
            return DecisionSignal(-np.inf, self.source)
        x = np.asarray(state.window, dtype=float) - 1.0
        if self.augment:
            x = np.concatenate([x, state.future_actuals])
        w = float(np.mean(self.network_.forward(x)))
        return DecisionSignal(w - state.current_rate, self.source)

    def _networks(self):
        return [self.network_]

    def _set_networks(self, nets):
        (self.network_,) = nets


class TopKForecaster(_FutureRateRegressor):
    """Forecasts the K largest future rates; the decision uses their mean.

    Head ``k`` is trained only against the rank-``k`` future rate with weight
    ``1/k``. Near the end of the episode, ranks that do not exist are masked
    out. Targets are observed rates, never model outputs.
    """

    source = "topk"

    def __init__(self, k: int = 3, n_lags: int = 10, hidden=nn.DEFAULT_HIDDEN,
                 learning_rate: float = 0.003, batch_size: int = 128, epochs: int = 30,
                 augment: int = 0, seed: int = 0):
        self.k = k
        self.n_lags = n_lags
        self.hidden = hidden
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.epochs = epochs
        self.augment = augment
        self.seed = seed

    def _training_set(self, rates):
        targets, mask = topk_target_matrix(rates, self.k)
        return targets.reshape(-1, self.k), mask.reshape(-1, self.k)

    def _loss(self):
        return nn.Loss.weighted_topk(self.k)


class MaxRateRegressor(_FutureRateRegressor):
    """Single-output regression onto the maximum future rate."""

    source = "max"

    def __init__(self, n_lags: int = 10, hidden=nn.DEFAULT_HIDDEN, learning_rate: float = 0.003,
                 batch_size: int = 128, epochs: int = 30, augment: int = 0, seed: int = 0):
        self.n_lags = n_lags
        self.hidden = hidden
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.epochs = epochs
        self.augment = augment
        self.seed = seed

    def _training_set(self, rates):
        best = suffix_max_after(rates)[:, :-1]
        return best.reshape(-1, 1), None

    def _loss(self):
        return nn.Loss.mse()
