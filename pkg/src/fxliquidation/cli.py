"""Command-line entry point: ``fxliq <subcommand> ...``.

Outputs go under ``--out`` (or ``$FXLIQ_OUTPUT``, default ``./fxliq-out``)::

    data/<PAIR>.csv                 cleaned rate series (ingest)
    episodes/<PAIR>.csv             episode store (episodes)
    models/<PAIR>/<method>.ckpt     checkpoints + .json metadata + .cfg echo (train)
    results/<PAIR>/<method>-<split>.csv
    results/oracle.csv
    compare/results.csv, summary.csv, table.txt, config.cfg
    grid/<PAIR>/<method>.cfg        selected hyperparameters as a config file
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import logging
import os
import sys
from pathlib import Path

from . import config as config_mod
from . import methods, pipeline
from .backtest import acr, evaluate, write_results_csv, write_summary_csv
from .data import (DataError, build_episodes, count_unique, load_rate_series,
                   simulate_rate_series, split_chronological, write_episode_store,
                   write_rate_series)

logger = logging.getLogger("fxliquidation")

# CLI flag -> RunConfig field
_FLAG_FIELDS = ("pairs", "data_dir", "horizon", "shift", "val_start", "test_start", "n", "k",
                "gamma", "hidden", "learning_rate", "batch_size", "epochs", "dqn_passes",
                "augment", "at_window", "at_candidates", "no_at", "revenue", "raw_acr", "seed",
                "split", "n_grid", "k_grid")


class CliError(Exception):
    pass


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key = value run configuration file")
    p.add_argument("--out", help="output root (default $FXLIQ_OUTPUT or ./fxliq-out)")
    p.add_argument("--pair", "--pairs", dest="pairs", help="comma-separated currency pairs")
    p.add_argument("--data-dir", dest="data_dir")
    p.add_argument("--horizon", type=int)
    p.add_argument("--shift", type=int)
    p.add_argument("--val-start", dest="val_start")
    p.add_argument("--test-start", dest="test_start")
    p.add_argument("--n", type=int, help="past rates in the state")
    p.add_argument("--k", type=int, help="top-K heads")
    p.add_argument("--gamma", type=float, help="focal-loss exponent")
    p.add_argument("--hidden", help="hidden layer widths, e.g. 256,128")
    p.add_argument("--learning-rate", dest="learning_rate", type=float)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--dqn-passes", dest="dqn_passes", type=int)
    p.add_argument("--augment", type=int, help="append this many true future rates to states")
    p.add_argument("--at-window", dest="at_window", type=int)
    p.add_argument("--at-candidates", dest="at_candidates", type=int)
    p.add_argument("--no-at", dest="no_at", action="store_const", const=True,
                   help="fixed threshold 0 instead of adaptive thresholds")
    p.add_argument("--revenue", choices=["per-step", "at-start"])
    p.add_argument("--raw-acr", dest="raw_acr", action="store_const", const=True,
                   help="score sales at the normalized rate instead of its excess over 1")
    p.add_argument("--seed", type=int)
    p.add_argument("--split", choices=["train", "validation", "test"])
    p.add_argument("--n-grid", dest="n_grid")
    p.add_argument("--k-grid", dest="k_grid")
    p.add_argument("--reuse", action="store_true", help="load existing checkpoints")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fxliq", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="load a date,rate CSV (or simulate one) into the data dir")
    _add_common(p)
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--csv", help="input CSV with date,rate rows")
    src.add_argument("--synthetic", action="store_true", help="write a simulated series")
    p.add_argument("--days", type=int, default=2780, help="length of a synthetic series")
    p.add_argument("--volatility", type=float, default=0.005)

    p = sub.add_parser("episodes", help="build episodes and write the episode store")
    _add_common(p)

    for name, text in (("train", "fit a learned method on the training split"),
                       ("backtest", "evaluate one method on a split"),
                       ("grid-search", "select n (and k) on validation ACR")):
        p = sub.add_parser(name, help=text)
        p.add_argument("method")
        _add_common(p)

    p = sub.add_parser("oracle", help="ACR of the oracle (or oracle-n) reference")
    _add_common(p)
    p.add_argument("--lookahead", type=int, help="oracle-n lookahead")

    p = sub.add_parser("compare", help="rank methods across pairs")
    _add_common(p)
    p.add_argument("--methods", default="all", help="method tokens, or 'all'")
    return parser


def _resolve(args) -> config_mod.RunConfig:
    overrides = {f: getattr(args, f, None) for f in _FLAG_FIELDS}
    return config_mod.resolve(args.config, overrides)


def _out_root(args) -> Path:
    return Path(args.out or os.environ.get("FXLIQ_OUTPUT") or "fxliq-out")


def _data_dir(cfg, out: Path) -> Path:
    return Path(cfg.data_dir) if cfg.data_dir else out / "data"


def _checkpoint(out: Path, pair: str, token: str) -> Path:
    return out / "models" / pair / f"{token}.ckpt"


def _load_or_fit(token, cfg, data, out, reuse):
    if not methods.is_learned(token):
        return None
    path = _checkpoint(out, data.pair, token)
    if reuse and path.exists():
        logger.info("reusing %s", path)
        return methods.LEARNED[token][0].load(path)
    est = pipeline.fit_method(token, cfg, data.train)
    path.parent.mkdir(parents=True, exist_ok=True)
    est.save(path)
    config_mod.echo_config(cfg, path.with_suffix(".cfg"))
    return est


def cmd_ingest(args, cfg, out):
    target = _data_dir(cfg, out)
    target.mkdir(parents=True, exist_ok=True)
    for pair in cfg.pairs:
        if args.synthetic:
            series = simulate_rate_series(pair, n_days=args.days, seed=cfg.seed,
                                          volatility=args.volatility)
        else:
            series = load_rate_series(args.csv, pair, min_length=cfg.horizon)
        write_rate_series(series, target / f"{pair}.csv")
        print(f"{pair}: {len(series)} rows, {series.dropped} dropped -> {target / (pair + '.csv')}")


def cmd_episodes(args, cfg, out):
    store = out / "episodes"
    store.mkdir(parents=True, exist_ok=True)
    for pair in cfg.pairs:
        series = load_rate_series(_data_dir(cfg, out) / f"{pair}.csv", pair,
                                  min_length=cfg.horizon)
        episodes = build_episodes(series, cfg.horizon, cfg.shift)
        splits = split_chronological(episodes, (cfg.val_start, cfg.test_start))
        write_episode_store([ep for part in splits for ep in part], store / f"{pair}.csv")
        counts = ", ".join(f"{name} {len(part)} ({count_unique(part)} unique)"
                           for name, part in zip(("train", "validation", "test"), splits))
        print(f"{pair}: {counts}")
    config_mod.echo_config(cfg, store / "config.cfg")


def cmd_train(args, cfg, out):
    token = methods.validate_token(args.method)
    if not methods.is_learned(token):
        raise CliError(f"{token} is rule-based; nothing to train")
    for pair in cfg.pairs:
        data = pipeline.load_pair(cfg, pair, _data_dir(cfg, out))
        _load_or_fit(token, cfg, data, out, args.reuse)
        print(f"{pair}: wrote {_checkpoint(out, pair, token)}")


def cmd_backtest(args, cfg, out):
    token = methods.validate_token(args.method)
    for pair in cfg.pairs:
        data = pipeline.load_pair(cfg, pair, _data_dir(cfg, out))
        est = _load_or_fit(token, cfg, data, out, args.reuse)
        results = pipeline.evaluate_method(token, cfg, data, est)
        for r in results:
            r.pair, r.split = pair, cfg.split
        target = out / "results" / pair / f"{token}-{cfg.split}.csv"
        target.parent.mkdir(parents=True, exist_ok=True)
        write_results_csv(results, target)
        config_mod.echo_config(cfg, target.with_suffix(".cfg"))
        print(f"{pair} {token} {cfg.split}: ACR {acr(results):.6f}")


def cmd_oracle(args, cfg, out):
    token = "oracle" if args.lookahead is None else f"oracle-{args.lookahead}"
    target = out / "results" / "oracle.csv"
    target.parent.mkdir(parents=True, exist_ok=True)
    rows = []
    if target.exists():
        with target.open(newline="") as fh:
            rows = [r for r in csv.DictReader(fh)]
    for pair in cfg.pairs:
        data = pipeline.load_pair(cfg, pair, _data_dir(cfg, out))
        policy = methods.make_policy(token, cfg, data.universe)
        value = acr(evaluate(policy, data.split(cfg.split), cfg.revenue, cfg.raw_acr))
        rows = [r for r in rows if (r["method"], r["pair"], r["split"]) != (token, pair, cfg.split)]
        rows.append({"method": token, "pair": pair, "split": cfg.split, "acr": repr(value)})
        print(f"{pair} {token} {cfg.split}: ACR {value:.6f}")
    rows.sort(key=lambda r: (r["method"], r["pair"], r["split"]))
    with target.open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=["method", "pair", "split", "acr"])
        writer.writeheader()
        writer.writerows(rows)


def cmd_grid_search(args, cfg, out):
    token = methods.validate_token(args.method)
    if not methods.is_learned(token):
        raise CliError(f"{token} has no hyperparameters to search")
    for pair in cfg.pairs:
        data = pipeline.load_pair(cfg, pair, _data_dir(cfg, out))
        best, scores = pipeline.grid_search(token, cfg, data.train, data.validation,
                                            data.train + data.validation)
        for key, score in sorted(scores.items()):
            print(f"{pair} {token} {dict(key)}: validation ACR {score:.6f}")
        chosen = dataclasses.replace(cfg, pairs=[pair], **best)
        target = out / "grid" / pair / f"{token}.cfg"
        config_mod.echo_config(chosen, target)
        print(f"{pair} {token}: selected {best} -> {target}")


def cmd_compare(args, cfg, out):
    tokens = methods.expand_methods(args.methods)
    data_by_pair = {p: pipeline.load_pair(cfg, p, _data_dir(cfg, out)) for p in cfg.pairs}
    estimators = {}
    for pair, data in data_by_pair.items():
        for token in tokens:
            est = _load_or_fit(token, cfg, data, out, args.reuse)
            if est is not None:
                estimators[(token, pair)] = est
    result = pipeline.compare_methods(tokens, cfg, data_by_pair, estimators)
    oracle = {}
    for pair, data in data_by_pair.items():
        policy = methods.make_policy("oracle", cfg, data.universe)
        oracle[pair] = acr(evaluate(policy, data.split(cfg.split), cfg.revenue, cfg.raw_acr))

    target = out / "compare"
    target.mkdir(parents=True, exist_ok=True)
    write_results_csv(result.results, target / "results.csv")
    write_summary_csv(result.table, target / "summary.csv")
    text = result.table.render(references={"oracle": oracle})
    collapsed = sorted({m for (m, _), flag in result.collapsed.items() if flag})
    if collapsed:
        text += "\n\npolicy collapse (sells at every step): " + ", ".join(collapsed)
    (target / "table.txt").write_text(text + "\n")
    config_mod.echo_config(cfg, target / "config.cfg")
    print(text)


COMMANDS = {
    "ingest": cmd_ingest,
    "episodes": cmd_episodes,
    "train": cmd_train,
    "backtest": cmd_backtest,
    "oracle": cmd_oracle,
    "grid-search": cmd_grid_search,
    "compare": cmd_compare,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _resolve(args)
        COMMANDS[args.command](args, cfg, _out_root(args))
    except (CliError, DataError, ValueError, OSError, FloatingPointError) as exc:
        print(f"fxliq {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
