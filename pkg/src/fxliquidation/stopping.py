"""Optimal-stopping estimators of the decision value.

* :class:`BackwardRecursionRegressor` -- one network per step, fitted from
  the last step backwards onto ``max(rate, next network's estimate)``.
* :class:`StoppingValueRegressor` -- one bootstrapped value network, either
  time-aware (finite horizon) or stationary (infinite horizon).
* :class:`QStoppingRegressor` -- Q-learning for stopping; only the hold
  action is learned since selling is worth the current rate by definition.
"""

from __future__ import annotations

import numpy as np
from sklearn.utils.validation import check_is_fitted

from . import nn
from .base import DecisionSignal, EpisodeLearner, as_rates, check_episodes
from .data import rate_matrix


def snell_envelope(rates) -> np.ndarray:
    """Exact backward recursion ``Y[T-1] = X[T-1]``, ``Y[t] = max(X[t], Y[t+1])``.

    For a known (deterministic) path this is the reference every learned
    value is checked against.
    """
    rates = np.asarray(rates, dtype=float)
    Y = np.empty_like(rates)
    Y[..., -1] = rates[..., -1]
    for t in range(rates.shape[-1] - 2, -1, -1):
        Y[..., t] = np.maximum(rates[..., t], Y[..., t + 1])
    return Y


def suffix_max(rates) -> np.ndarray:
    """Right-to-left running maximum (no recursion, no sorting)."""
    rates = np.asarray(rates, dtype=float)
    return np.maximum.accumulate(rates[..., ::-1], axis=-1)[..., ::-1]


class BackwardRecursionRegressor(EpisodeLearner):
    """Regression-based backward recursion (Longstaff-Schwartz style, neural).

    Network ``t`` (for ``t = 1 .. T-1``) maps the state at ``t-1`` to an
    estimate of the stopping value at ``t``. The last network regresses the
    terminal rate; earlier ones regress ``max(X_t, net_{t+1}(f_t))``.
    """

    source = "brr"

    def __init__(self, n_lags: int = 10, hidden=nn.DEFAULT_HIDDEN, learning_rate: float = 0.003,
                 batch_size: int = 128, epochs: int = 30, augment: int = 0, seed: int = 0):
        self.n_lags = n_lags
        self.hidden = hidden
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.epochs = epochs
        self.augment = augment
        self.seed = seed

    def fit(self, episodes):
        T = check_episodes(episodes, min_horizon=2)
        rates = rate_matrix(episodes)
        feats = self._features(rates)
        n_in = feats.shape[2]
        nets = [None] * T  # nets[t] for t in 1..T-1
        for t in range(T - 1, 0, -1):
            X = feats[:, t - 1]
            if t == T - 1:
                y = rates[:, t]
            else:
                y = np.maximum(rates[:, t], nets[t + 1].forward(feats[:, t])[:, 0])
            net = nn.MLP(self._layer_dims(n_in, 1), seed=self.seed * 1000 + t)
            nn.fit_supervised(net, X, y[:, None], nn.Loss.mse(), epochs=self.epochs,
                              batch_size=self.batch_size, learning_rate=self.learning_rate,
                              seed=self.seed * 1000 + t)
            nets[t] = net
        self.networks_ = nets[1:]
        self.horizon_ = T
        return self

    def stopping_values(self, episodes) -> np.ndarray:
        """``Yhat[e, t] = net_t(f_{t-1})`` for ``t >= 1``; column 0 is NaN."""
        rates = as_rates(episodes)
        self._check_horizon(rates)
        feats = self._features(rates)
        out = np.full(rates.shape, np.nan)
        for t in range(1, self.horizon_):
            out[:, t] = self.networks_[t - 1].forward(feats[:, t - 1])[:, 0]
        return out

    def _decision(self, rates):
        feats = self._features(rates)
        d = np.full(rates.shape, -np.inf)
        for t in range(self.horizon_ - 1):
            d[:, t] = self.networks_[t].forward(feats[:, t])[:, 0] - rates[:, t]
        return d

    def decide(self, state) -> DecisionSignal:
        check_is_fitted(self)
        t = state.time_index
        if t >= self.horizon_ - 1:
            return DecisionSignal(-np.inf, self.source)
        x = self._state_vector(state)
        return DecisionSignal(float(self.networks_[t].forward(x)[0]) - state.current_rate,
                              self.source)

    def _state_vector(self, state):
        x = np.asarray(state.window, dtype=float) - 1.0
        if self.augment:
            x = np.concatenate([x, state.future_actuals])
        return x

    def _networks(self):
        return self.networks_

    def _set_networks(self, nets):
        self.networks_ = list(nets)


class _BootstrappedStopping(EpisodeLearner):
    """Shared fitting loop for the single-network bootstrapped learners.

    Targets are ``max(h(s'), Vhat_target(s'))``; transitions into the last
    step bootstrap with ``h(s')`` only. The target network is re-synced
    every ``target_sync`` gradient steps.
    """

    time_input = False

    def _inputs(self, rates):
        feats = self._features(rates)
        if self.time_input:
            T = rates.shape[1]
            tcol = np.broadcast_to(np.arange(T) / T, rates.shape)[..., None]
            feats = np.concatenate([feats, tcol], axis=2)
        return feats

    def fit(self, episodes):
        T = check_episodes(episodes, min_horizon=2)
        rates = rate_matrix(episodes)
        feats = self._inputs(rates)
        E, _, n_in = feats.shape
        S = feats[:, :-1].reshape(-1, n_in)
        S_next = feats[:, 1:].reshape(-1, n_in)
        h_next = rates[:, 1:].reshape(-1)
        terminal = np.broadcast_to(np.arange(1, T) == T - 1, (E, T - 1)).reshape(-1)

        net = nn.MLP(self._layer_dims(n_in, 1), seed=self.seed)
        target = nn.TargetNetwork(net)
        opt = nn.Adam(net, self.learning_rate)
        rng = np.random.default_rng(self.seed)
        self.loss_history_ = []
        for _ in range(self.epochs):
            losses = []
            for idx in nn.minibatches(len(S), self.batch_size, rng):
                boot = target.forward(S_next[idx])[:, 0]
                y = np.where(terminal[idx], h_next[idx], np.maximum(h_next[idx], boot))
                losses.append(nn.train_step(net, opt, S[idx], y[:, None], nn.Loss.mse()))
                target.tick()
                if target.staleness >= self.target_sync:
                    target.sync(net)
            self.loss_history_.append(float(np.mean(losses)))
        self.network_ = net
        self.horizon_ = T
        return self

    def continuation_values(self, episodes) -> np.ndarray:
        """Estimated value of holding at every step, shape ``(E, T)``."""
        rates = as_rates(episodes)
        self._check_horizon(rates)
        feats = self._inputs(rates)
        E, T, n_in = feats.shape
        return self.network_.forward(feats.reshape(-1, n_in))[:, 0].reshape(E, T)

    def _decision(self, rates):
        feats = self._inputs(rates)
        E, T, n_in = feats.shape
        hold = self.network_.forward(feats.reshape(-1, n_in))[:, 0].reshape(E, T)
        return hold - rates

    def _state_vector(self, state):
        x = np.asarray(state.window, dtype=float) - 1.0
        if self.augment:
            x = np.concatenate([x, state.future_actuals])
        if self.time_input:
            x = np.append(x, state.time_index / self.horizon_)
        return x

    def decide(self, state) -> DecisionSignal:
        check_is_fitted(self)
        if state.time_index >= self.horizon_ - 1:
            return DecisionSignal(-np.inf, self.source)
        hold = float(self.network_.forward(self._state_vector(state))[0])
        return DecisionSignal(hold - state.current_rate, self.source)

    def _networks(self):
        return [self.network_]

    def _set_networks(self, nets):
        (self.network_,) = nets


class StoppingValueRegressor(_BootstrappedStopping):
    """Value-function approximation for stopping.

    ``horizon="finite"`` appends ``t/T`` to the state so one network covers
    every step; ``horizon="infinite"`` treats the chain as stationary and
    ignores time.
    """

    def __init__(self, horizon: str = "finite", n_lags: int = 10, hidden=nn.DEFAULT_HIDDEN,
                 learning_rate: float = 0.003, batch_size: int = 128, epochs: int = 30,
                 target_sync: int = 200, augment: int = 0, seed: int = 0):
        self.horizon = horizon
        self.n_lags = n_lags
        self.hidden = hidden
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.epochs = epochs
        self.target_sync = target_sync
        self.augment = augment
        self.seed = seed

    @property
    def time_input(self):
        if self.horizon not in ("finite", "infinite"):
            raise ValueError(f"horizon must be 'finite' or 'infinite', got {self.horizon!r}")
        return self.horizon == "finite"

    @property
    def source(self):
        return f"dp-{self.horizon}"


class QStoppingRegressor(_BootstrappedStopping):
    """Q-learning for optimal stopping with a learned hold head only."""

    source = "q-stopping"

    def __init__(self, n_lags: int = 10, hidden=nn.DEFAULT_HIDDEN, learning_rate: float = 0.003,
                 batch_size: int = 128, epochs: int = 30, target_sync: int = 200,
                 augment: int = 0, seed: int = 0):
        self.n_lags = n_lags
        self.hidden = hidden
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.epochs = epochs
        self.target_sync = target_sync
        self.augment = augment
        self.seed = seed

    def q_values(self, episodes) -> np.ndarray:
        """``(E, T, 2)``: learned ``Q(s, hold)`` and ``Q(s, sell) = h(s)``."""
        rates = as_rates(episodes)
        return np.stack([self.continuation_values(rates), rates], axis=2)
