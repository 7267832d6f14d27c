import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fxliquidation.backtest import acr, run_episode
from fxliquidation.data import Episode
from fxliquidation.threshold import (
    AdaptiveThreshold, ThresholdPolicy, ThresholdRule, best_threshold, candidate_grid,
    threshold_decide,
)
from synth import make_episodes, random_walk_rates


class FixedSignal:
    """Stand-in estimator returning pre-baked decision values per episode id."""

    def __init__(self, table):
        self.table = table
        self.calls = []

    def decision_function(self, episodes):
        self.calls.append([ep.id for ep in episodes])
        return np.stack([self.table[ep.id] for ep in episodes])


def test_rule_examples():
    assert not threshold_decide(ThresholdRule("signal", 0.0), 0.05, 1.0)
    assert threshold_decide(ThresholdRule("signal", 0.0), -0.01, 1.0)
    assert threshold_decide(ThresholdRule("rate", 1.01), 0.0, 1.02)
    with pytest.raises(ValueError):
        ThresholdRule("signal", float("nan"))
    with pytest.raises(ValueError):
        ThresholdRule("price", 0.0)


def test_grid_degenerate():
    np.testing.assert_array_equal(candidate_grid(np.full((3, 4), 0.07)), [0.0, 0.07])
    np.testing.assert_array_equal(candidate_grid(np.ones((5, 6))), [0.0, 1.0])


def test_grid_quantiles_and_infinities():
    values = np.linspace(-0.1, 0.1, 1001)
    grid = candidate_grid(np.append(values, -np.inf), 3)
    np.testing.assert_allclose(grid, [-0.1, 0.0, 0.1], atol=1e-15)
    with pytest.raises(ValueError):
        candidate_grid([-np.inf])
    with pytest.raises(ValueError):
        candidate_grid([1.0], 1)


def test_single_candidate_returned():
    rates = random_walk_rates(4, 6, seed=1)
    rates = rates / rates[:, :1]
    delta, _ = best_threshold(rates - 1.0, rates, [0.02])
    assert delta == 0.02


def test_dominating_candidate_wins():
    rates = np.array([[1.0, 1.2, 0.9], [1.0, 1.1, 0.95]])
    values = np.array([[0.1, -0.1, -np.inf], [0.1, -0.1, -np.inf]])
    # delta 0 sells at t=1 (the peak); delta 0.2 sells immediately
    delta, payoff = best_threshold(values, rates, [0.2, 0.0])
    assert delta == 0.0
    assert payoff == pytest.approx(np.mean([0.4 - 0.1, 0.2 - 0.05]))


def test_ties_prefer_small_magnitude():
    rates = np.ones((2, 4))
    values = np.zeros((2, 4))
    delta, _ = best_threshold(values, rates, [-0.5, 0.3, 0.0, -0.3])
    assert delta == 0.0
    delta, _ = best_threshold(values, rates, [0.3, -0.3])
    assert delta == -0.3


@settings(max_examples=25, deadline=None)
@given(st.integers(2, 12), st.integers(3, 15), st.sampled_from(["signal", "rate"]),
       st.integers(0, 10**6))
def test_calibration_is_exhaustive(H, T, mode, seed):
    rng = np.random.default_rng(seed)
    rates = random_walk_rates(H, T, seed=seed)
    rates = rates / rates[:, :1]
    values = rates.copy() if mode == "rate" else rng.normal(0, 0.02, (H, T))
    at = AdaptiveThreshold(window=H, n_candidates=7, mode=mode)
    rule, payoff = at.calibrate(values, rates)
    eps = make_episodes(rates)
    # independent re-evaluation through the step-by-step backtester
    brute = {}
    for c in candidate_grid(values, 7):
        r = ThresholdRule(mode, float(c))
        brute[float(c)] = acr([run_episode(lambda e, t, r=r: bool(
            r.sell_mask(values[e.id])[t]), ep) for ep in eps])
    assert payoff == max(brute.values())
    assert brute[rule.delta] == payoff


def test_empty_history_falls_back():
    at = AdaptiveThreshold(mode="rate")
    rule, payoff = at.calibrate(np.zeros((0, 5)), np.zeros((0, 5)))
    assert rule == ThresholdRule("rate", 0.0) and np.isnan(payoff)


def test_history_window_is_causal():
    eps = make_episodes(random_walk_rates(30, 5, seed=2), shift=1)
    at = AdaptiveThreshold(window=4)
    target = eps[20]
    hist = at.history(eps, target)
    assert len(hist) == 4
    assert all(ep.end_date < target.start_date for ep in hist)
    # the four most recent finished episodes
    assert [ep.id for ep in hist] == [12, 13, 14, 15]


def test_policy_reads_no_future_episodes():
    rates = random_walk_rates(60, 6, seed=3)
    eps = make_episodes(rates, shift=2)
    rng = np.random.default_rng(0)
    table = {ep.id: rng.normal(0, 0.02, 6) for ep in eps}
    est = FixedSignal(table)
    policy = ThresholdPolicy(est, AdaptiveThreshold(window=10), eps)
    target = eps[40]
    policy.actions(target)
    seen = {i for call in est.calls for i in call}
    assert seen <= {ep.id for ep in eps if ep.end_date < target.start_date} | {target.id}


def test_sell_at_fixed_rate_mode():
    ep = Episode(0, make_episodes(np.ones((1, 3)))[0].start_date, [1.0, 0.99, 1.02])
    policy = ThresholdPolicy(None, None, [ep], delta=1.0)
    assert list(policy.actions(ep)) == [False, False, True]
    assert policy.threshold_for(ep) == 1.0


def test_sorted_history_matches_scan():
    eps = make_episodes(random_walk_rates(40, 6, seed=5), shift=2)
    at = AdaptiveThreshold(window=7)
    by_end = sorted(eps, key=lambda ep: (ep.end_date, ep.id))
    ends = [ep.end_date for ep in by_end]
    for target in eps:
        assert at.history_sorted(by_end, ends, target) == at.history(eps, target)
