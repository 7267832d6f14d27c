"""Episode simulation with sell-all accounting, oracle references and rankings."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.stats import rankdata

from .baselines import Action


class AccountingError(RuntimeError):
    pass


@dataclass
class AccountingState:
    fc_balance: float = 0.0
    hc_earned: float = 0.0
    t: int = 0
    received: float = 0.0
    sold: float = 0.0


@dataclass
class EpisodeResult:
    episode_id: int
    method: str
    cumulative_reward: float
    sell_times: list = field(default_factory=list)
    threshold_used: float = float("nan")
    total_revenue: float = 0.0
    total_sold: float = 0.0
    horizon: int = 0
    pair: str = ""
    split: str = ""


def revenue_schedule(kind, horizon: int) -> np.ndarray:
    """FC arrivals per step: ``per-step`` (one unit each step) or ``at-start``."""
    if isinstance(kind, np.ndarray):
        if kind.shape != (horizon,) or np.any(kind < 0):
            raise ValueError("revenue array must be non-negative with one entry per step")
        return kind.astype(float)
    if kind == "per-step":
        return np.ones(horizon)
    if kind == "at-start":
        rev = np.zeros(horizon)
        rev[0] = 1.0
        return rev
    raise ValueError(f"unknown revenue model {kind!r}")


def _policy_actions(policy, episode) -> np.ndarray:
    if hasattr(policy, "actions"):
        raw = np.asarray(policy.actions(episode))
    else:
        raw = np.array([policy(episode, t) for t in range(episode.horizon)])
    if raw.shape != (episode.horizon,):
        raise AccountingError(f"policy returned {raw.shape[0] if raw.ndim else 0} actions "
                              f"for a {episode.horizon}-step episode")
    if raw.dtype != bool:
        if not np.all((raw == 0) | (raw == 1)):
            raise AccountingError("policy emitted a non-binary action")
        raw = raw.astype(bool)
    return raw


def run_episode(policy, episode, revenue="per-step", raw: bool = False,
                method: str | None = None, threshold: float = float("nan")) -> EpisodeResult:
    """Simulate one episode step by step.

    Revenue arrives first at each step; a Sell (or the last step, which always
    liquidates) converts the whole balance. Each unit sold earns
    ``norm_rate - 1`` home currency, or ``norm_rate`` when ``raw`` is set.
    """
    sells = _policy_actions(policy, episode)
    rates = episode.norm_rates
    T = episode.horizon
    rev = revenue_schedule(revenue, T)
    acct = AccountingState()
    sell_times = []
    for t in range(T):
        acct.t = t
        acct.fc_balance = acct.fc_balance + rev[t]
        acct.received += rev[t]
        if sells[t] or t == T - 1:
            gain = rates[t] if raw else rates[t] - 1.0
            acct.hc_earned = acct.hc_earned + acct.fc_balance * gain
            acct.sold += acct.fc_balance
            if acct.fc_balance > 0:
                sell_times.append(t)
            acct.fc_balance = 0.0
        if acct.fc_balance < 0 or acct.sold > acct.received:
            raise AccountingError(f"short sale at t={t} in episode {episode.id}")
    return EpisodeResult(episode.id, method or getattr(policy, "name", "policy"),
                         acct.hc_earned, sell_times, threshold, acct.received,
                         acct.sold, T, episode.pair, episode.split_tag)


def simulate_batch(sells, rates, revenue="per-step", raw: bool = False) -> np.ndarray:
    """Vectorized twin of :func:`run_episode` over ``(E, T)`` sell masks.

    The per-episode arithmetic follows the same order as ``run_episode`` so
    results agree bit for bit.
    """
    sells = np.asarray(sells, dtype=bool)
    rates = np.asarray(rates, dtype=float)
    E, T = rates.shape
    rev = revenue_schedule(revenue, T)
    gains = np.ascontiguousarray(rates.T if raw else rates.T - 1.0)
    keep = np.ascontiguousarray(~sells.T)
    balance = np.zeros(E)
    earned = np.zeros(E)
    for t in range(T - 1):
        balance += rev[t]
        # adding -0.0 or 0.0 for holders leaves their running total unchanged
        earned += np.where(keep[t], 0.0, balance * gains[t])
        balance *= keep[t]
    balance += rev[T - 1]
    earned += balance * gains[T - 1]
    return earned


def acr(results) -> float:
    """Average cumulative reward, summed in episode-id order."""
    results = list(results)
    if not results:
        raise ValueError("no results to average")
    if isinstance(results[0], EpisodeResult):
        results = sorted(results, key=lambda r: r.episode_id)
        values = np.array([r.cumulative_reward for r in results])
    else:
        values = np.asarray(results, dtype=float)
    return float(np.mean(values))


def sell_rate(results) -> float:
    steps = sum(r.horizon for r in results)
    return sum(len(r.sell_times) for r in results) / steps if steps else 0.0


def is_collapsed(results) -> bool:
    """True when the policy sold at every single step (always-sell collapse)."""
    return bool(results) and all(len(r.sell_times) == r.horizon for r in results)


# -- oracles ----------------------------------------------------------------

def suffix_max_after(rates) -> np.ndarray:
    """``out[t] = max(rates[t+1:])``, ``-inf`` at the last step."""
    rates = np.asarray(rates, dtype=float)
    out = np.full(rates.shape, -np.inf)
    if rates.shape[-1] > 1:
        out[..., :-1] = np.maximum.accumulate(rates[..., :0:-1], axis=-1)[..., ::-1]
    return out


def oracle_sell_mask(rates, n: int | None = None) -> np.ndarray:
    """Sell iff the current rate is at least every later rate (the next ``n`` only if given)."""
    rates = np.asarray(rates, dtype=float)
    if n is None:
        return rates >= suffix_max_after(rates)
    T = rates.shape[-1]
    ahead = np.full(rates.shape, -np.inf)
    for lag in range(1, min(n, T - 1) + 1):
        ahead[..., :-lag] = np.maximum(ahead[..., :-lag], rates[..., lag:])
    return rates >= ahead


def oracle_policy(episode, t: int) -> Action:
    future = episode.norm_rates[t + 1:]
    return Action(future.size == 0 or bool(episode.norm_rates[t] >= future.max()))


def oracle_n_policy(episode, t: int, n: int) -> Action:
    future = episode.norm_rates[t + 1:t + 1 + n]
    return Action(future.size == 0 or bool(episode.norm_rates[t] >= future.max()))


class OraclePolicy:
    """Full-lookahead oracle, or oracle-n when ``n`` is given (evaluation reference only)."""

    def __init__(self, n: int | None = None):
        self.n = n
        self.name = "oracle" if n is None else f"oracle-{n}"

    def actions(self, episode) -> np.ndarray:
        return oracle_sell_mask(episode.norm_rates, self.n)


def evaluate(policy, episodes, revenue="per-step", raw: bool = False, method=None) -> list:
    out = []
    thresholds = getattr(policy, "threshold_for", None)
    for ep in episodes:
        th = thresholds(ep) if thresholds else float("nan")
        out.append(run_episode(policy, ep, revenue, raw, method, th))
    return out


# -- ranking ----------------------------------------------------------------

@dataclass
class RankingTable:
    acr: dict          # (method, pair) -> ACR
    ranks: dict        # (method, pair) -> rank within pair
    overall: dict      # method -> mean rank across pairs
    methods: list      # sorted by overall rank
    pairs: list

    def render(self, digits: int = 3, references: dict | None = None) -> str:
        """Plain-text table; ``references`` rows (e.g. the oracle) are listed unranked."""
        references = references or {}
        width = max([len("Method")] + [len(m) for m in [*self.methods, *references]])
        head = ["Method".ljust(width)] + [p.rjust(8) for p in self.pairs] + ["Rank".rjust(8)]
        lines = [" | ".join(head), "-" * (len(" | ".join(head)))]
        for m in self.methods:
            cells = [m.ljust(width)]
            cells += [f"{self.acr[(m, p)]:8.{digits}f}" for p in self.pairs]
            cells.append(f"{self.overall[m]:8.3f}")
            lines.append(" | ".join(cells))
        for name, by_pair in references.items():
            cells = [name.ljust(width)]
            cells += [f"{by_pair[p]:8.{digits}f}" for p in self.pairs]
            cells.append("--".rjust(8))
            lines.append(" | ".join(cells))
        return "\n".join(lines)


def compare(acr_by_method_pair: dict) -> RankingTable:
    """Rank methods within each pair by ACR (ties averaged), then average across pairs."""
    methods = sorted({m for m, _ in acr_by_method_pair})
    pairs = sorted({p for _, p in acr_by_method_pair})
    missing = [(m, p) for m in methods for p in pairs if (m, p) not in acr_by_method_pair]
    if missing:
        raise ValueError(f"inconsistent evaluation grid, missing {missing[:3]}")
    ranks = {}
    for p in pairs:
        values = np.array([acr_by_method_pair[(m, p)] for m in methods])
        for m, r in zip(methods, rankdata(-values, method="average")):
            ranks[(m, p)] = float(r)
    overall = {m: float(np.mean([ranks[(m, p)] for p in pairs])) for m in methods}
    order = sorted(methods, key=lambda m: (overall[m], m))
    return RankingTable(dict(acr_by_method_pair), ranks, overall, order, pairs)


def write_results_csv(results, path, append: bool = False) -> None:
    path = Path(path)
    new = not (append and path.exists())
    with path.open("a" if append else "w", newline="") as fh:
        writer = csv.writer(fh)
        if new:
            writer.writerow(["method", "pair", "split", "episode_id", "cumulative_reward",
                             "threshold"])
        for r in sorted(results, key=lambda r: (r.method, r.pair, r.episode_id)):
            writer.writerow([r.method, r.pair, r.split, r.episode_id,
                             repr(float(r.cumulative_reward)), repr(float(r.threshold_used))])


def write_summary_csv(table: RankingTable, path) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["method", "pair", "acr"])
        for m in table.methods:
            for p in table.pairs:
                writer.writerow([m, p, repr(table.acr[(m, p)])])
        writer.writerow([])
        writer.writerow(["method", "overall_rank"])
        for m in table.methods:
            writer.writerow([m, repr(table.overall[m])])
