"""Run configuration: defaults, ``key = value`` files and echoing."""

from __future__ import annotations

import dataclasses
import datetime as dt
from dataclasses import dataclass, field
from pathlib import Path


@dataclass
class RunConfig:
    pairs: list = field(default_factory=lambda: ["EURUSD"])
    data_dir: str = ""
    horizon: int = 58
    shift: int = 5
    val_start: dt.date = dt.date(2017, 1, 10)
    test_start: dt.date = dt.date(2019, 4, 25)
    n: int = 10
    k: int = 3
    gamma: float = 2.0
    hidden: list = field(default_factory=lambda: [256, 128])
    learning_rate: float = 0.003
    batch_size: int = 128
    epochs: int = 30
    dqn_passes: int = 5
    augment: int = 0
    at_window: int = 50
    at_candidates: int = 21
    no_at: bool = False
    revenue: str = "per-step"
    raw_acr: bool = False
    seed: int = 0
    split: str = "test"
    n_grid: list = field(default_factory=lambda: [5, 10, 20])
    k_grid: list = field(default_factory=lambda: [1, 2, 3, 4, 5])

    def validate(self) -> "RunConfig":
        if self.horizon < 2 or self.shift < 1:
            raise ValueError("horizon must be >= 2 and shift >= 1")
        if not self.val_start < self.test_start:
            raise ValueError("val_start must precede test_start")
        if self.n < 1 or self.k < 1 or self.batch_size < 1 or self.epochs < 0:
            raise ValueError("n, k and batch_size must be positive")
        if self.at_window < 1 or self.at_candidates < 2:
            raise ValueError("at_window must be >= 1 and at_candidates >= 2")
        if self.revenue not in ("per-step", "at-start"):
            raise ValueError(f"unknown revenue model {self.revenue!r}")
        if self.split not in ("train", "validation", "test"):
            raise ValueError(f"unknown split {self.split!r}")
        if not self.pairs:
            raise ValueError("no currency pairs configured")
        return self


_FIELDS = {f.name: f for f in dataclasses.fields(RunConfig)}


def _coerce(name: str, text):
    default = _FIELDS[name].default
    if default is dataclasses.MISSING:
        default = _FIELDS[name].default_factory()
    if not isinstance(text, str):
        return text
    text = text.strip()
    if isinstance(default, bool):
        if text.lower() in ("1", "true", "yes", "on"):
            return True
        if text.lower() in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"{name}: expected a boolean, got {text!r}")
    if isinstance(default, int):
        return int(text)
    if isinstance(default, float):
        return float(text)
    if isinstance(default, dt.date):
        return dt.date.fromisoformat(text)
    if isinstance(default, list):
        items = [t.strip() for t in text.split(",") if t.strip()]
        if default and isinstance(default[0], int):
            return [int(t) for t in items]
        return items
    return text


def parse_config_text(text: str) -> dict:
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip().replace("-", "_")
        if not sep or key not in _FIELDS:
            raise ValueError(f"config line {lineno}: cannot parse {line!r}")
        values[key] = _coerce(key, value)
    return values


def resolve(config_path=None, overrides: dict | None = None) -> RunConfig:
    """Defaults, then the config file, then explicit overrides (``None`` values skipped)."""
    values = {}
    if config_path:
        values.update(parse_config_text(Path(config_path).read_text()))
    for key, value in (overrides or {}).items():
        if value is not None and key in _FIELDS:
            values[key] = _coerce(key, value)
    return RunConfig(**values).validate()


def format_config(cfg: RunConfig) -> str:
    lines = []
    for name in _FIELDS:
        value = getattr(cfg, name)
        if isinstance(value, list):
            value = ",".join(str(v) for v in value)
        elif isinstance(value, dt.date):
            value = value.isoformat()
        elif isinstance(value, float):
            value = repr(value)
        lines.append(f"{name} = {value}")
    return "\n".join(lines) + "\n"


def echo_config(cfg: RunConfig, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(format_config(cfg))
