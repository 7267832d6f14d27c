"""Double-DQN agents under three reward definitions, and oracle imitation."""

from __future__ import annotations

import numpy as np
from scipy.stats import rankdata
from sklearn.utils.validation import check_is_fitted

from . import nn
from .backtest import oracle_sell_mask
from .base import DecisionSignal, EpisodeLearner, as_rates, check_episodes
from .baselines import Action
from .data import rate_matrix

REWARD_KINDS = ("vanilla", "ranking", "binary")


def oracle_actions(episode) -> list:
    rates = episode.norm_rates if hasattr(episode, "norm_rates") else np.asarray(episode, float)
    return [Action(bool(s)) for s in oracle_sell_mask(rates)]


def reverse_ranks(rates) -> np.ndarray:
    """Rank of each rate within its episode, the largest getting rank T."""
    return rankdata(np.asarray(rates, dtype=float), method="average", axis=-1)


def compute_reward(kind: str, episode, t: int, action) -> float:
    rates = episode.norm_rates
    if not 0 <= t < rates.size:
        raise IndexError(f"t={t} outside the episode")
    a = int(action)
    if kind == "vanilla":
        return a * float(rates[t])
    if kind == "ranking":
        return a * float(reverse_ranks(rates)[t])
    if kind == "binary":
        return float(a == int(oracle_sell_mask(rates)[t]))
    raise ValueError(f"unknown reward kind {kind!r}")


def _reward_tables(kind, rates):
    """Reward for (hold, sell) at every step, shape ``(E, T, 2)``."""
    zeros = np.zeros_like(rates)
    if kind == "vanilla":
        return np.stack([zeros, rates], axis=2)
    if kind == "ranking":
        return np.stack([zeros, reverse_ranks(rates)], axis=2)
    if kind == "binary":
        oracle = oracle_sell_mask(rates).astype(float)
        return np.stack([1.0 - oracle, oracle], axis=2)
    raise ValueError(f"unknown reward kind {kind!r}")


class DQNAgent(EpisodeLearner):
    """Double DQN with replay over historical episodes (undiscounted).

    The state path of an episode does not depend on the agent, so each
    episode's greedy actions come from one forward pass at its start. By
    default a Sell does not end the episode: revenue keeps arriving and can
    be sold again. ``absorb_on_sell=True`` instead treats a Sell as terminal.
    ``delta_weighted`` scales rewards by the FC balance held at the step.
    """

    HOLD, SELL = 0, 1

    def __init__(self, reward: str = "vanilla", n_lags: int = 10, hidden=nn.DEFAULT_HIDDEN,
                 learning_rate: float = 0.003, batch_size: int = 128, passes: int = 5,
                 buffer_size: int = 50_000, train_every: int = 4, target_sync: int = 200,
                 eps_start: float = 1.0, eps_end: float = 0.05, absorb_on_sell: bool = False,
                 delta_weighted: bool = False, augment: int = 0, seed: int = 0):
        self.reward = reward
        self.n_lags = n_lags
        self.hidden = hidden
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.passes = passes
        self.buffer_size = buffer_size
        self.train_every = train_every
        self.target_sync = target_sync
        self.eps_start = eps_start
        self.eps_end = eps_end
        self.absorb_on_sell = absorb_on_sell
        self.delta_weighted = delta_weighted
        self.augment = augment
        self.seed = seed

    @property
    def source(self):
        return "dqn" if self.reward == "vanilla" else f"dqn-{self.reward}"

    def _epsilon(self, step, total):
        frac = min(1.0, step / max(1.0, total / 2.0))
        return self.eps_start + frac * (self.eps_end - self.eps_start)

    def fit(self, episodes):
        T = check_episodes(episodes)
        if self.reward not in REWARD_KINDS:
            raise ValueError(f"unknown reward kind {self.reward!r}")
        rates = rate_matrix(episodes)
        feats = self._features(rates)
        rewards = _reward_tables(self.reward, rates)
        E, _, n_in = feats.shape
        rng = np.random.default_rng(self.seed)
        net = nn.MLP(self._layer_dims(n_in, 2), seed=self.seed)
        target = nn.TargetNetwork(net)
        opt = nn.Adam(net, self.learning_rate)
        loss = nn.Loss.mse()

        cap = self.buffer_size
        buf_s = np.zeros((cap, n_in))
        buf_s2 = np.zeros((cap, n_in))
        buf_a = np.zeros(cap, dtype=int)
        buf_r = np.zeros(cap)
        buf_done = np.zeros(cap, dtype=bool)
        size = 0
        head = 0

        total = self.passes * E * T
        step = 0
        since_train = 0
        self.loss_history_ = []
        for _ in range(self.passes):
            for e in rng.permutation(E):
                greedy = np.argmax(net.forward(feats[e]), axis=1)
                balance = 0.0
                for t in range(T):
                    eps = self._epsilon(step, total)
                    a = int(rng.integers(2)) if rng.random() < eps else int(greedy[t])
                    balance += 1.0
                    r = rewards[e, t, a]
                    if self.delta_weighted:
                        r *= balance
                    if a == self.SELL:
                        balance = 0.0
                    done = t == T - 1 or (self.absorb_on_sell and a == self.SELL)
                    buf_s[head] = feats[e, t]
                    buf_s2[head] = feats[e, min(t + 1, T - 1)]
                    buf_a[head] = a
                    buf_r[head] = r
                    buf_done[head] = done
                    head = (head + 1) % cap
                    size = min(size + 1, cap)
                    step += 1
                    since_train += 1
                    if size >= self.batch_size and since_train >= self.train_every:
                        since_train = 0
                        idx = rng.integers(size, size=self.batch_size)
                        self.loss_history_.append(
                            self._learn(net, target, opt, loss, buf_s[idx], buf_a[idx],
                                        buf_r[idx], buf_s2[idx], buf_done[idx]))
                    if done:
                        break
        self.network_ = net
        self.horizon_ = T
        return self

    def _learn(self, net, target, opt, loss, s, a, r, s2, done):
        best_next = np.argmax(net.forward(s2), axis=1)
        boot = target.forward(s2)[np.arange(len(a)), best_next]
        y_taken = r + np.where(done, 0.0, boot)
        Y = np.zeros((len(a), 2))
        Y[np.arange(len(a)), a] = y_taken
        mask = np.zeros((len(a), 2))
        mask[np.arange(len(a)), a] = 1.0
        value = nn.train_step(net, opt, s, Y, loss, mask)
        target.tick()
        if target.staleness >= self.target_sync:
            target.sync(net)
        return value

    def q_values(self, episodes) -> np.ndarray:
        """``(E, T, 2)`` array of ``[Q(s, hold), Q(s, sell)]``."""
        rates = as_rates(episodes)
        self._check_horizon(rates)
        feats = self._features(rates)
        E, T, n_in = feats.shape
        return self.network_.forward(feats.reshape(-1, n_in)).reshape(E, T, 2)

    def _decision(self, rates):
        q = self.q_values(rates)
        return q[..., 0] - q[..., 1]

    def decide(self, state) -> DecisionSignal:
        check_is_fitted(self)
        x = np.asarray(state.window, dtype=float) - 1.0
        if self.augment:
            x = np.concatenate([x, state.future_actuals])
        q = self.network_.forward(x)
        return DecisionSignal(float(q[0] - q[1]), self.source)

    def _networks(self):
        return [self.network_]

    def _set_networks(self, nets):
        (self.network_,) = nets


IL_VARIANTS = ("vanilla", "downsample", "focal")


class ImitationClassifier(EpisodeLearner):
    """Logistic classifier of the oracle's Sell label from the current state.

    Sell labels are rare, so ``variant="downsample"`` rebalances each epoch
    to equal class counts and ``variant="focal"`` swaps cross-entropy for a
    focal loss with exponent ``gamma``.
    """

    def __init__(self, variant: str = "vanilla", gamma: float = 2.0, n_lags: int = 10,
                 hidden=nn.DEFAULT_HIDDEN, learning_rate: float = 0.003, batch_size: int = 128,
                 epochs: int = 30, augment: int = 0, seed: int = 0):
        self.variant = variant
        self.gamma = gamma
        self.n_lags = n_lags
        self.hidden = hidden
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.epochs = epochs
        self.augment = augment
        self.seed = seed

    @property
    def source(self):
        return {"vanilla": "il", "downsample": "il-down", "focal": "il-focal"}[self.variant]

    def _loss(self):
        if self.variant == "focal":
            return nn.Loss.focal(self.gamma)
        return nn.Loss.cross_entropy()

    def epoch_indices(self, y, rng) -> np.ndarray:
        """Sample indices for one epoch; balanced by majority downsampling when requested."""
        if self.variant != "downsample":
            return rng.permutation(len(y))
        pos = np.flatnonzero(y > 0.5)
        neg = np.flatnonzero(y <= 0.5)
        if len(pos) < len(neg):
            neg = rng.choice(neg, size=len(pos), replace=False)
        else:
            pos = rng.choice(pos, size=len(neg), replace=False)
        return rng.permutation(np.concatenate([pos, neg]))

    def fit(self, episodes):
        T = check_episodes(episodes)
        rates = rate_matrix(episodes)
        feats = self._features(rates)
        X = feats.reshape(-1, feats.shape[2])
        y = oracle_sell_mask(rates).astype(float).reshape(-1)
        self.fit_states(X, y)
        self.horizon_ = T
        return self

    def fit_states(self, X, y):
        """Train on explicit ``(state features, 0/1 label)`` pairs."""
        if self.variant not in IL_VARIANTS:
            raise ValueError(f"unknown imitation variant {self.variant!r}")
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float)
        if len(np.unique(y)) < 2:
            raise ValueError("degenerate labels: every training label is the same class")
        net = nn.MLP(self._layer_dims(X.shape[1], 1), seed=self.seed)
        opt = nn.Adam(net, self.learning_rate)
        rng = np.random.default_rng(self.seed)
        loss = self._loss()
        self.loss_history_ = []
        for _ in range(self.epochs):
            order = self.epoch_indices(y, rng)
            losses = []
            for lo in range(0, len(order), self.batch_size):
                idx = order[lo:lo + self.batch_size]
                losses.append(nn.train_step(net, opt, X[idx], y[idx, None], loss))
            self.loss_history_.append(float(np.mean(losses)))
        self.network_ = net
        return self

    def predict_proba_states(self, X) -> np.ndarray:
        check_is_fitted(self, "network_")
        return nn.sigmoid(self.network_.forward(np.atleast_2d(X))[:, 0])

    def sell_probability(self, episodes) -> np.ndarray:
        rates = as_rates(episodes)
        self._check_horizon(rates)
        feats = self._features(rates)
        E, T, n_in = feats.shape
        return self.predict_proba_states(feats.reshape(-1, n_in)).reshape(E, T)

    def _decision(self, rates):
        return 0.5 - self.sell_probability(rates)

    def decide(self, state) -> DecisionSignal:
        x = np.asarray(state.window, dtype=float) - 1.0
        if self.augment:
            x = np.concatenate([x, state.future_actuals])
        return DecisionSignal(0.5 - float(self.predict_proba_states(x)[0]), self.source)

    def _networks(self):
        return [self.network_]

    def _set_networks(self, nets):
        (self.network_,) = nets
