import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fxliquidation import nn
from fxliquidation.data import make_state
from fxliquidation.topk import MaxRateRegressor, TopKForecaster, topk_target_matrix, topk_targets
from synth import make_episodes, random_walk_rates

SMALL = dict(hidden=(32, 16), n_lags=3)


def test_target_examples():
    rates = [1.0, 1.1, 1.05, 1.2, 0.9]
    tk = topk_targets(rates, 0, 3)
    np.testing.assert_array_equal(tk.values, [1.2, 1.1, 1.05])
    assert tk.mean == pytest.approx(1.116667, abs=1e-6)
    end = topk_targets(rates, 3, 3)
    assert end.J == 1 and list(end.values) == [0.9]
    np.testing.assert_array_equal(topk_targets(np.ones(6), 1, 3).values, [1.0, 1.0, 1.0])
    with pytest.raises(ValueError):
        topk_targets(rates, 4, 3)
    with pytest.raises(ValueError):
        topk_targets(rates, 0, 0)


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 20), st.integers(1, 6), st.integers(0, 10**6))
def test_target_matrix_matches_per_step(T, k, seed):
    rates = np.random.default_rng(seed).uniform(0.9, 1.1, (3, T))
    targets, mask = topk_target_matrix(rates, k)
    for e in range(3):
        for t in range(T - 1):
            tk = topk_targets(rates[e], t, k)
            np.testing.assert_array_equal(targets[e, t, :tk.J], tk.values)
            assert mask[e, t].sum() == tk.J == min(k, T - 1 - t)
            assert np.all(targets[e, t, tk.J:] == 0.0)


@settings(max_examples=60, deadline=None)
@given(st.integers(3, 20), st.integers(0, 10**6))
def test_rank_one_envelope(T, seed):
    rates = np.random.default_rng(seed).uniform(0.9, 1.1, T)
    for t in range(T - 2):
        a = topk_targets(rates, t, 1).values[0]
        b = topk_targets(rates, t + 1, 1).values[0]
        assert a == max(rates[t + 1], b)


def test_constant_data_heads():
    eps = make_episodes(np.ones((16, 6)))
    m = TopKForecaster(k=3, epochs=200, batch_size=32, **SMALL).fit(eps)
    assert m.network_.output_dim == 3
    np.testing.assert_allclose(m.heads(eps)[:, :-1], 1.0, atol=1e-2)


def test_deterministic_heads_track_ranks():
    path = np.array([1.0, 1.03, 0.98, 1.06, 1.01, 0.97, 1.04, 0.99])
    eps = make_episodes(np.tile(path, (16, 1)))
    m = TopKForecaster(k=3, epochs=800, batch_size=32, hidden=(32, 16), n_lags=10).fit(eps)
    heads = m.heads(eps[:1])[0]
    targets, mask = topk_target_matrix(path, 3)
    on = mask[0] > 0
    np.testing.assert_allclose(heads[:-1][on], targets[0][on], atol=2e-2)


def test_decision_arithmetic():
    eps = make_episodes(random_walk_rates(6, 5, seed=0))
    m = TopKForecaster(k=3, epochs=1, **SMALL).fit(eps)
    net = m.network_
    for p in net.params:
        p[...] = 0.0
    net.params[-1][...] = [1.2, 1.1, 1.0]
    state = make_state(eps[0], 0, 3)
    assert m.decide(state).d == pytest.approx(1.1 - 1.0)
    d0 = m.decision_function(eps)
    net.params[-1][...] += 0.07
    d1 = m.decision_function(eps)
    np.testing.assert_allclose(d1[:, :-1] - d0[:, :-1], 0.07, atol=1e-12)
    net.params[-1][...] = 1.0
    rates = np.stack([ep.norm_rates for ep in eps])
    np.testing.assert_allclose(m.decision_function(eps)[:, :-1], (1.0 - rates)[:, :-1])
    assert m.decide(make_state(eps[0], 4, 3)).d == -np.inf


def test_k1_bit_matches_max_regression():
    eps = make_episodes(random_walk_rates(30, 8, seed=5))
    a = TopKForecaster(k=1, epochs=4, batch_size=16, seed=3, **SMALL).fit(eps)
    b = MaxRateRegressor(epochs=4, batch_size=16, seed=3, **SMALL).fit(eps)
    assert a.loss_history_ == b.loss_history_
    for p, q in zip(a.network_.params, b.network_.params):
        np.testing.assert_array_equal(p, q)


def test_targets_never_read_model_outputs(monkeypatch):
    """Every training target must equal the precomputed observed-rate targets."""
    eps = make_episodes(random_walk_rates(20, 7, seed=1))
    expected, _ = topk_target_matrix(np.stack([ep.norm_rates for ep in eps]), 2)
    allowed = {float(v) for v in expected.ravel()}
    seen = []

    def spy(model, opt, X, Y, loss, mask=None):
        seen.append(Y.copy())
        return nn.train_step(model, opt, X, Y, loss, mask)

    monkeypatch.setattr(TopKForecaster, "_train_step", staticmethod(spy))
    TopKForecaster(k=2, epochs=3, batch_size=8, **SMALL).fit(eps)
    assert seen
    assert all(set(map(float, Y.ravel())) <= allowed for Y in seen)


def test_save_load(tmp_path):
    eps = make_episodes(random_walk_rates(10, 5, seed=2))
    m = TopKForecaster(k=2, epochs=1, **SMALL).fit(eps)
    m.save(tmp_path / "t.ckpt")
    back = TopKForecaster.load(tmp_path / "t.ckpt")
    assert back.get_params() == m.get_params()
    np.testing.assert_array_equal(back.decision_function(eps), m.decision_function(eps))
