"""Command-line entry point: ``drcap {gen,run,sweep,compare}``.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 a fitted
policy did not converge.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .config import POLICIES, ConfigError, ExperimentConfig, load_config
from .experiment import (
    collect_rows,
    emit_results,
    read_results,
    run_experiment,
    write_compare,
)
from .flex import sweep_rho, write_rho_sweep_csv
from .lin import solve_lin_centralized, write_contract_csv
from .model import LseCost
from .scenarios import DataError, write_scenarios_csv

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NONCONVERGED = 0, 2, 3, 4

log = logging.getLogger("drcap")


def _policies(text: str) -> tuple[str, ...]:
    items = tuple(p.strip() for p in text.split(",") if p.strip())
    bad = [p for p in items if p not in POLICIES]
    if bad or not items:
        raise argparse.ArgumentTypeError(f"policies must be a subset of {','.join(POLICIES)}")
    return items


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key = value experiment file")
    common.add_argument("--seed", type=int, help="override the config seed")
    common.add_argument("--out", help="output directory (overrides out_dir)")
    common.add_argument("--policies", type=_policies, help="comma list of " + ",".join(POLICIES))
    common.add_argument("--workers", type=int, help="parallel sweep points")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="drcap", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("gen", parents=[common], help="write training and test scenario sets")
    sub.add_parser("run", parents=[common], help="single experiment (one sweep point)")
    sub.add_parser("sweep", parents=[common], help="every point of the configured grids")
    cmp_ = sub.add_parser("compare", parents=[common], help="join results files into one table")
    cmp_.add_argument("results", nargs="+", help="results CSV files")
    return p


def resolve_config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.out is not None:
        changes["out_dir"] = args.out
    if args.policies is not None:
        changes["policies"] = args.policies
    if args.workers is not None:
        changes["workers"] = args.workers
    return cfg.replace(**changes) if changes else cfg


def _single_point(cfg: ExperimentConfig):
    multi = [
        k
        for k in ("capacity_price_usd_per_kw_mo", "wind_capacity_kw", "cost_rsd")
        if len(getattr(cfg, k)) > 1
    ]
    if multi:
        raise ConfigError(f"'run' needs single values; {', '.join(multi)} list several (use 'sweep')")


def cmd_gen(cfg: ExperimentConfig, out: Path) -> int:
    from .experiment import build_scenarios

    _single_point(cfg)
    train, test = build_scenarios(cfg, cfg.wind_capacity_kw[0], cfg.cost_rsd[0])
    write_scenarios_csv(train, out / "train_scenarios.csv")
    write_scenarios_csv(test, out / "test_scenarios.csv")
    log.info("wrote %d training and %d test slots to %s", train.n_slots, test.n_slots, out)
    return EXIT_OK


def _write_run_outputs(cfg, results, out: Path):
    emit_results(collect_rows(results), out / "results.csv")
    (out / "config.txt").write_text(cfg.to_text())
    converged = True
    for res in results:
        if res.negotiation is not None:
            write_contract_csv(res.negotiation, out / "contract.csv")
            converged &= res.negotiation.converged
    return converged


def cmd_run(cfg: ExperimentConfig, out: Path) -> int:
    from .experiment import build_scenarios, capacity_price_per_slot

    _single_point(cfg)
    results = run_experiment(cfg, workers=1)
    converged = _write_run_outputs(cfg, results, out)
    if "lin-plus" in cfg.policies:
        train, test = build_scenarios(cfg, cfg.wind_capacity_kw[0], cfg.cost_rsd[0])
        cost = LseCost(cfg.lse_penalty_usd_per_kw2, capacity_price_per_slot(cfg.capacity_price_usd_per_kw_mo[0], cfg))
        contract = (
            results[0].negotiation.contract
            if results[0].negotiation is not None
            else solve_lin_centralized(train, cost).contract
        )
        sweep = sweep_rho(contract, test, cost, cfg.rho_grid, cfg.flex_mode, cfg.audit_tolerance, train.a)
        write_rho_sweep_csv(sweep, out / "flex.csv")
    return EXIT_OK if converged else EXIT_NONCONVERGED


def cmd_sweep(cfg: ExperimentConfig, out: Path) -> int:
    results = run_experiment(cfg)
    converged = all(r.negotiation is None or r.negotiation.converged for r in results)
    emit_results(collect_rows(results), out / "results.csv")
    (out / "config.txt").write_text(cfg.to_text())
    return EXIT_OK if converged else EXIT_NONCONVERGED


def cmd_compare(paths, out: Path) -> int:
    rows = []
    for p in paths:
        rows.extend(read_results(p))
    write_compare(rows, out / "compare.csv")
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        cfg = resolve_config(args)
        out = Path(cfg.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        if args.command == "compare":
            code = cmd_compare(args.results, out)
        else:
            code = {"gen": cmd_gen, "run": cmd_run, "sweep": cmd_sweep}[args.command](cfg, out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_DATA
    if code == EXIT_NONCONVERGED:
        print("warning: price negotiation did not converge; see contract.csv", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
