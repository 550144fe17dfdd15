"""Experiment configuration: a flat ``key = value`` file with unit-suffixed keys.

Lists are comma separated; ``#`` starts a comment.  Example::

    seed = 7
    capacity_price_usd_per_kw_mo = 0.01, 0.1, 1, 10, 50
    wind_capacity_kw = 100
    cost_rsd = 0.3
"""

from __future__ import annotations

import dataclasses
import typing
from dataclasses import dataclass
from pathlib import Path

POLICIES = ("opt", "seq", "pred", "lin", "lin-plus")
DEFAULT_RHO_GRID = tuple(round(0.05 * k, 2) for k in range(20, -1, -1))


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int = 2017
    trace_csv: str = ""  # empty: synthetic traces
    synthetic_homes: int = 3
    days: int = 56
    train_fraction: float = 0.5
    customers_per_base: int = 100
    slot_seconds: int = 300
    capacity_price_usd_per_kw_mo: tuple[float, ...] = (10.0,)
    lse_penalty_usd_per_kw2: float = 0.1 / 144
    cost_coeff_min_usd_per_kw2: float = 1.0 / 144
    cost_coeff_max_usd_per_kw2: float = 10.0 / 144
    cost_rsd: tuple[float, ...] = (0.3,)
    wind_capacity_kw: tuple[float, ...] = (100.0,)
    rho_grid: tuple[float, ...] = DEFAULT_RHO_GRID
    flex_mode: str = "clairvoyant"
    audit_tolerance: float = 1.1
    policies: tuple[str, ...] = POLICIES
    lin_solver: str = "centralized"
    opt_capacity: str = "train"  # or "test": capacity fitted on the test set
    negotiate_zeta: float = 1.0
    negotiate_eps: float = 1e-4
    negotiate_max_iter: int = 5000
    out_dir: str = "results"
    workers: int = 1

    def __post_init__(self):
        for name in ("capacity_price_usd_per_kw_mo", "cost_rsd", "wind_capacity_kw", "rho_grid", "policies"):
            if len(getattr(self, name)) == 0:
                raise ConfigError(f"{name} must not be empty")
        bad = set(self.policies) - set(POLICIES)
        if bad:
            raise ConfigError(f"unknown policies {sorted(bad)}; expected a subset of {POLICIES}")
        if any(c < 0 for c in self.capacity_price_usd_per_kw_mo):
            raise ConfigError("capacity prices must be >= 0")
        if any(r < 0 for r in self.cost_rsd):
            raise ConfigError("cost_rsd must be >= 0")
        if any(w < 0 for w in self.wind_capacity_kw):
            raise ConfigError("wind_capacity_kw must be >= 0")
        if any(not 0 <= r <= 1 for r in self.rho_grid) or 1.0 not in self.rho_grid:
            raise ConfigError("rho_grid values must lie in [0, 1] and include 1")
        if not 0 < self.train_fraction < 1:
            raise ConfigError("train_fraction must lie in (0, 1)")
        if not 0 < self.cost_coeff_min_usd_per_kw2 < self.cost_coeff_max_usd_per_kw2:
            raise ConfigError("need 0 < cost_coeff_min_usd_per_kw2 < cost_coeff_max_usd_per_kw2")
        if self.lse_penalty_usd_per_kw2 <= 0:
            raise ConfigError("lse_penalty_usd_per_kw2 must be > 0")
        if self.slot_seconds <= 0 or 86400 % self.slot_seconds:
            raise ConfigError("slot_seconds must be a positive divisor of 86400")
        if self.days < 2 or self.synthetic_homes < 1 or self.customers_per_base < 1:
            raise ConfigError("days >= 2, synthetic_homes >= 1 and customers_per_base >= 1 required")
        if self.lin_solver not in ("centralized", "distributed"):
            raise ConfigError("lin_solver must be 'centralized' or 'distributed'")
        if self.opt_capacity not in ("train", "test"):
            raise ConfigError("opt_capacity must be 'train' or 'test'")
        if self.flex_mode not in ("clairvoyant", "quantile"):
            raise ConfigError("flex_mode must be 'clairvoyant' or 'quantile'")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")

    @property
    def slots_per_month(self) -> float:
        return 30 * 86400 / self.slot_seconds

    def replace(self, **changes) -> ExperimentConfig:
        return dataclasses.replace(self, **changes)

    def to_text(self) -> str:
        lines = []
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            lines.append(f"{f.name} = {', '.join(map(str, v)) if isinstance(v, tuple) else v}")
        return "\n".join(lines) + "\n"


def _convert(kind, raw: str):
    if kind is str:
        return raw
    if kind is bool:
        if raw.lower() not in ("true", "false"):
            raise ValueError(f"expected true/false, got {raw!r}")
        return raw.lower() == "true"
    return kind(raw)


def parse_config(text: str, source: str = "<config>") -> ExperimentConfig:
    hints = typing.get_type_hints(ExperimentConfig)
    values: dict = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        key, raw = (p.strip() for p in line.split("=", 1))
        if key not in hints:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        kind = hints[key]
        try:
            if typing.get_origin(kind) is tuple:
                item = typing.get_args(kind)[0]
                values[key] = tuple(_convert(item, p.strip()) for p in raw.split(",") if p.strip())
            else:
                values[key] = _convert(kind, raw)
        except ValueError as exc:
            raise ConfigError(f"{source}:{lineno}: bad value for {key!r}: {exc}") from None
    try:
        return ExperimentConfig(**values)
    except ConfigError as exc:
        raise ConfigError(f"{source}: {exc}") from None


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(text, str(path))


def dumps_default() -> str:
    return ExperimentConfig().to_text()


__all__ = [
    "ConfigError",
    "DEFAULT_RHO_GRID",
    "ExperimentConfig",
    "POLICIES",
    "load_config",
    "parse_config",
    "dumps_default",
]
