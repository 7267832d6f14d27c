"""Estimator plumbing shared by the learners.

Learners follow the scikit-learn contract: hyperparameters are plain
``__init__`` arguments (so ``get_params``/``set_params``/``clone`` work),
``fit`` returns ``self`` and learned state lives in trailing-underscore
attributes. The samples are :class:`~fxliquidation.data.Episode` objects
rather than a feature matrix; ``decision_function`` returns one decision
value per step, shape ``(n_episodes, horizon)``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from . import nn
from .data import Episode, rate_matrix, state_features

FORCED_SELL = -np.inf


@dataclass(frozen=True)
class DecisionSignal:
    """Estimated best future rate minus current rate; negative favours selling."""

    d: float
    source: str = ""


def check_episodes(episodes, min_horizon: int = 1) -> int:
    """Validate a collection of episodes and return their common horizon."""
    if isinstance(episodes, Episode):
        raise TypeError("expected a sequence of episodes, got a single Episode")
    episodes = list(episodes)
    if not episodes:
        raise ValueError("empty episode set")
    horizons = {ep.horizon for ep in episodes}
    if len(horizons) != 1:
        raise ValueError(f"episodes have mixed horizons {sorted(horizons)}")
    T = horizons.pop()
    if T < min_horizon:
        raise ValueError(f"horizon {T} below minimum {min_horizon}")
    return T


def as_rates(episodes) -> np.ndarray:
    """Normalized rates as an ``(E, T)`` array from episodes or an array."""
    if isinstance(episodes, np.ndarray):
        return np.atleast_2d(episodes).astype(float)
    check_episodes(episodes)
    return rate_matrix(episodes)


class EpisodeLearner(BaseEstimator):
    """Base class: subclasses implement ``fit`` and ``_decision(rates)``."""

    source = ""

    def _features(self, rates):
        feats = state_features(rates, self.n_lags, self.augment)
        n = self.n_lags
        feats[..., :n] -= 1.0  # center rate inputs at 0
        return feats

    def _layer_dims(self, n_in, n_out):
        return (n_in, *tuple(self.hidden), n_out)

    def _check_horizon(self, rates):
        check_is_fitted(self)
        if rates.shape[1] != self.horizon_:
            raise ValueError(f"fitted on horizon {self.horizon_}, got {rates.shape[1]}")

    def decision_function(self, episodes) -> np.ndarray:
        """Decision values ``d[e, t]``; the last step always carries a forced-sell sentinel."""
        rates = as_rates(episodes)
        self._check_horizon(rates)
        d = self._decision(rates)
        d[:, -1] = FORCED_SELL
        return d

    def predict(self, episodes, threshold: float = 0.0) -> np.ndarray:
        """Sell mask: ``d - threshold < 0``."""
        return self.decision_function(episodes) - threshold < 0.0

    def decide(self, state) -> DecisionSignal:
        """Decision for a single :class:`~fxliquidation.data.State`."""
        raise NotImplementedError

    # -- persistence --

    def _networks(self) -> list:
        raise NotImplementedError

    def _set_networks(self, nets) -> None:
        raise NotImplementedError

    def save(self, path) -> None:
        check_is_fitted(self)
        path = Path(path)
        nn.save_models(self._networks(), path)
        meta = {"class": type(self).__name__, "params": self.get_params(),
                "horizon": self.horizon_}
        path.with_suffix(".json").write_text(json.dumps(meta, sort_keys=True, indent=1))

    @classmethod
    def load(cls, path):
        path = Path(path)
        meta = json.loads(path.with_suffix(".json").read_text())
        if meta["class"] != cls.__name__:
            raise ValueError(f"checkpoint holds a {meta['class']}, not {cls.__name__}")
        params = meta["params"]
        if "hidden" in params:
            params["hidden"] = tuple(params["hidden"])
        est = cls(**params)
        est.horizon_ = meta["horizon"]
        est._set_networks(nn.load_models(path))
        return est
