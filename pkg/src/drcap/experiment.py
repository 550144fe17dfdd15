"""Experiment pipeline: build train/test scenario sets, fit every policy on the
training set, play it on the test set and report metrics."""

from __future__ import annotations

import csv
import itertools
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np

from .config import ExperimentConfig
from .flex import FlexParams, leftover_norm, simulate_lin_plus
from .lin import NegotiationResult, negotiate, simulate_lin, solve_lin_centralized
from .model import LseCost, capped_leftover
from .outcome import Simulation, play
from .planner import solve_opt
from .pred import seq_rule, simulate_pred, solve_pred
from .scenarios import (
    DataError,
    ScenarioSet,
    Trace,
    assemble_scenarios,
    bootstrap_customers,
    build_prediction_errors,
    read_trace_csv,
    sample_cost_coeffs,
    split_days,
    synthetic_load_traces,
    synthetic_wind_trace,
)

log = logging.getLogger(__name__)

SECONDS_PER_YEAR = 31_557_600  # Julian year

RESULT_HEADER = [
    "policy",
    "c_usd_per_kw_mo",
    "wind_kw",
    "rsd",
    "rho",
    "social_cost_usd_yr",
    "kappa_kw",
    "dr_norm",
    "leftover_norm",
    "exceedance_rate",
]


class NonConvergenceError(RuntimeError):
    pass


def annualize(cost_per_slot: float, slot_seconds: float) -> float:
    if slot_seconds <= 0:
        raise ValueError("slot_seconds must be > 0")
    return cost_per_slot * (SECONDS_PER_YEAR / slot_seconds)


def capacity_price_per_slot(c_usd_per_kw_mo: float, config: ExperimentConfig) -> float:
    """Amortise a monthly capacity price over 30 days of slots."""
    return c_usd_per_kw_mo / config.slots_per_month


# Data.


def _seeds(seed: int) -> dict[str, int]:
    names = ("loads", "wind", "split", "boot_train", "boot_test", "costs")
    kids = np.random.SeedSequence(seed).spawn(len(names))
    return {n: int(k.generate_state(1)[0]) for n, k in zip(names, kids)}


def base_traces(config: ExperimentConfig, seed: int) -> tuple[list[Trace], Trace]:
    """Household load traces and a normalised wind trace.

    A trace file must hold one or more load sources plus a source named
    ``wind`` (normalised output, 0..1); without a file both are synthetic.
    """
    s = _seeds(seed)
    if not config.trace_csv:
        loads = synthetic_load_traces(config.synthetic_homes, config.days, s["loads"], config.slot_seconds)
        return loads, synthetic_wind_trace(config.days, s["wind"], config.slot_seconds)
    traces = read_trace_csv(config.trace_csv)
    wind = [t for t in traces if t.source_id == "wind"]
    loads = [t for t in traces if t.source_id != "wind"]
    if not wind or not loads:
        raise DataError(f"{config.trace_csv}: need load sources and a 'wind' source")
    for t in traces:
        if t.resolution != config.slot_seconds:
            raise DataError(
                f"{config.trace_csv}: source {t.source_id!r} has {t.resolution} s slots, "
                f"config says {config.slot_seconds}"
            )
    return loads, wind[0]


def _day_split(n_days: int, fraction: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    order = np.random.default_rng(seed).permutation(n_days)
    k = min(max(1, int(round(fraction * n_days))), n_days - 1)
    return np.sort(order[:k]), np.sort(order[k:])


def build_error_sets(config: ExperimentConfig, seed: int):
    """Customer and normalised wind prediction errors for train and test.

    Days are split at random; each base home is bootstrapped into
    ``customers_per_base`` customers separately within each split; the
    slot-of-day predictors are fitted on training days only.
    """
    loads, wind = base_traces(config, seed)
    s = _seeds(seed)
    n_days = min(len(t) for t in [*loads, wind]) // (86400 // config.slot_seconds)
    if n_days < 2:
        raise DataError("need at least two full days of data")
    train_days, test_days = _day_split(n_days, config.train_fraction, s["split"])
    tr_loads, te_loads = zip(*(split_days(t, train_days, test_days) for t in loads))
    boot_tr = bootstrap_customers(tr_loads, config.customers_per_base, s["boot_train"])
    boot_te = bootstrap_customers(te_loads, config.customers_per_base, s["boot_test"])
    per_base = config.customers_per_base
    base_of = [k // per_base for k in range(len(boot_tr))]
    err_tr = np.column_stack(
        [build_prediction_errors(t, reference=tr_loads[b]).delta for t, b in zip(boot_tr, base_of)]
    )
    err_te = np.column_stack(
        [build_prediction_errors(t, reference=tr_loads[b]).delta for t, b in zip(boot_te, base_of)]
    )
    w_tr, w_te = split_days(wind, train_days, test_days)
    wind_tr = build_prediction_errors(w_tr).delta
    wind_te = build_prediction_errors(w_te, reference=w_tr).delta
    return err_tr, wind_tr, err_te, wind_te


@lru_cache(maxsize=8)
def _cached_errors(config: ExperimentConfig, seed: int):
    return build_error_sets(config, seed)


def build_scenarios(
    config: ExperimentConfig, wind_kw: float, rsd: float, seed: int | None = None
) -> tuple[ScenarioSet, ScenarioSet]:
    """Training and test scenario sets for one (wind, rsd) point.

    Cost draws share their seed across rsd values, so sweeps over rsd use
    common random numbers.
    """
    seed = config.seed if seed is None else seed
    err_tr, wind_tr, err_te, wind_te = _cached_errors(config, seed)
    n = err_tr.shape[1]
    draws = sample_cost_coeffs(
        n,
        (config.cost_coeff_min_usd_per_kw2, config.cost_coeff_max_usd_per_kw2),
        rsd,
        err_tr.shape[0],
        _seeds(seed)["costs"],
        test_size=err_te.shape[0],
    )
    # negative renewable error (less wind than forecast) raises the mismatch
    train = assemble_scenarios(err_tr, wind_tr, draws.train, wind_kw, draws.a_hat, draws.a_tilde)
    test = assemble_scenarios(err_te, wind_te, draws.test, wind_kw, draws.a_hat, draws.a_tilde)
    return train, test


# Policies.


@dataclass(frozen=True)
class MetricRow:
    policy: str
    c_usd_per_kw_mo: float
    wind_kw: float
    rsd: float
    rho: float | None
    social_cost_usd_yr: float
    kappa_kw: float
    dr_norm: float
    leftover_norm: float
    exceedance_rate: float

    @property
    def sort_key(self):
        return (self.policy, self.c_usd_per_kw_mo, self.wind_kw, self.rsd, -1.0 if self.rho is None else self.rho)


def simulate_opt(plan_set: ScenarioSet, test: ScenarioSet, cost: LseCost) -> Simulation:
    """Capacity planned on ``plan_set``; every test slot is then dispatched
    optimally with its realised coefficients."""
    kappa = solve_opt(plan_set, cost).plan.kappa
    left = capped_leftover(test.D, test.H, cost.A, kappa)
    x = (test.D - left)[:, None] / (test.a * test.H[:, None])
    return play(x, test.a, test.D, cost.A, kappa, cost.c)


def metrics(sim: Simulation, policy: str, c_mo: float, wind: float, rsd: float, rho, slot_seconds) -> MetricRow:
    scale = float(np.abs(sim.D).mean())
    dr = float(np.abs(sim.total_dr).mean()) / scale if scale > 0 else 0.0
    return MetricRow(
        policy,
        c_mo,
        wind,
        rsd,
        rho,
        annualize(sim.social_cost, slot_seconds),
        sim.kappa,
        dr,
        leftover_norm(sim),
        sim.exceedance_rate,
    )


@dataclass(frozen=True)
class PointResult:
    rows: list[MetricRow]
    negotiation: NegotiationResult | None = None


def run_point(config: ExperimentConfig, c_mo: float, wind: float, rsd: float) -> PointResult:
    """Fit on the training set and simulate on the test set for one sweep point."""
    train, test = build_scenarios(config, wind, rsd)
    cost = LseCost(config.lse_penalty_usd_per_kw2, capacity_price_per_slot(c_mo, config))
    rows: list[MetricRow] = []
    neg = None

    def emit(sim, policy, rho=None):
        rows.append(metrics(sim, policy, c_mo, wind, rsd, rho, config.slot_seconds))

    pol = set(config.policies)
    if "opt" in pol:
        emit(simulate_opt(test if config.opt_capacity == "test" else train, test, cost), "opt")
    if "seq" in pol:
        emit(simulate_pred(seq_rule(train, cost), test, cost), "seq")
    if "pred" in pol:
        emit(simulate_pred(solve_pred(train, cost).rule, test, cost), "pred")
    if pol & {"lin", "lin-plus"}:
        if config.lin_solver == "distributed":
            neg = negotiate(
                train,
                cost,
                zeta=config.negotiate_zeta,
                eps=config.negotiate_eps,
                max_iter=config.negotiate_max_iter,
            )
            contract = neg.contract
        else:
            contract = solve_lin_centralized(train, cost).contract
        if "lin" in pol:
            emit(simulate_lin(contract, test, cost), "lin")
        if "lin-plus" in pol:
            for rho in config.rho_grid:
                params = FlexParams(rho, config.audit_tolerance, config.flex_mode)
                out = simulate_lin_plus(contract, params, test, cost, train_a=train.a)
                emit(out.simulation, "lin-plus", rho)
    return PointResult(rows, neg)


def sweep_points(config: ExperimentConfig):
    return list(
        itertools.product(config.capacity_price_usd_per_kw_mo, config.wind_capacity_kw, config.cost_rsd)
    )


def _run_point_args(args):
    return run_point(*args)


def run_experiment(config: ExperimentConfig, workers: int | None = None) -> list[PointResult]:
    """Run every sweep point; results come back in sweep order whatever the
    completion order."""
    points = sweep_points(config)
    workers = config.workers if workers is None else workers
    jobs = [(config, *p) for p in points]
    if workers <= 1 or len(points) == 1:
        return [run_point(*j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_point_args, jobs))


def collect_rows(results: list[PointResult]) -> list[MetricRow]:
    return sorted((r for res in results for r in res.rows), key=lambda r: r.sort_key)


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, str):
        return v
    return f"{float(v):.9g}"


def emit_results(rows, path: str | Path):
    """Write the results table, sorted by policy then sweep coordinates."""
    path = Path(path)
    rows = sorted(rows, key=lambda r: r.sort_key)
    try:
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(RESULT_HEADER)
            for r in rows:
                w.writerow([_fmt(getattr(r, h)) for h in RESULT_HEADER])
    except OSError as exc:
        raise OSError(f"cannot write results to {path}: {exc.strerror}") from exc


def read_results(path: str | Path) -> list[MetricRow]:
    path = Path(path)
    try:
        fh = path.open(newline="")
    except OSError as exc:
        raise DataError(f"{path}: cannot open ({exc.strerror})") from exc
    out = []
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != RESULT_HEADER:
            raise DataError(f"{path}:1: expected header {','.join(RESULT_HEADER)}")
        for lineno, row in enumerate(reader, 2):
            if len(row) != len(RESULT_HEADER):
                raise DataError(f"{path}:{lineno}: expected {len(RESULT_HEADER)} fields")
            try:
                vals = [float(v) if v != "" else None for v in row[1:]]
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from None
            out.append(MetricRow(row[0], *vals))
    return out


COMPARE_POLICIES = ("opt", "seq", "pred", "lin", "lin-plus")


def compare_table(rows: list[MetricRow]) -> tuple[list[str], list[list[str]]]:
    """One row per sweep point with each policy's annual cost and its ratio to
    OPT.  LIN+ contributes its best rho."""
    table: dict[tuple, dict[str, MetricRow]] = {}
    for r in rows:
        key = (r.c_usd_per_kw_mo, r.wind_kw, r.rsd)
        cell = table.setdefault(key, {})
        prev = cell.get(r.policy)
        if prev is None or r.social_cost_usd_yr < prev.social_cost_usd_yr:
            cell[r.policy] = r
    present = [p for p in COMPARE_POLICIES if any(p in c for c in table.values())]
    header = ["c_usd_per_kw_mo", "wind_kw", "rsd"]
    header += [f"{p}_social_cost_usd_yr" for p in present]
    header += [f"{p}_over_opt" for p in present if p != "opt" and "opt" in present]
    header += ["lin-plus_rho_star"] if "lin-plus" in present else []
    lines = []
    for key in sorted(table):
        cell = table[key]
        line = [_fmt(k) for k in key]
        line += [_fmt(cell[p].social_cost_usd_yr) if p in cell else "" for p in present]
        if "opt" in present:
            base = cell.get("opt")
            for p in present:
                if p == "opt":
                    continue
                ok = base is not None and p in cell and base.social_cost_usd_yr > 0
                line.append(_fmt(cell[p].social_cost_usd_yr / base.social_cost_usd_yr) if ok else "")
        if "lin-plus" in present:
            line.append(_fmt(cell["lin-plus"].rho) if "lin-plus" in cell else "")
        lines.append(line)
    return header, lines


def write_compare(rows: list[MetricRow], path: str | Path):
    header, lines = compare_table(rows)
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(lines)
