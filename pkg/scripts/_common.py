"""Shared argument handling for the experiment scripts."""

import argparse
from pathlib import Path

from drcap.config import ExperimentConfig, load_config


def parser(description: str) -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(description=description)
    p.add_argument("--config", help="base config file; defaults otherwise")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", default="results", help="output directory")
    p.add_argument("--workers", type=int, default=1)
    return p


def base_config(args, **overrides) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    if args.seed is not None:
        overrides["seed"] = args.seed
    return cfg.replace(workers=args.workers, out_dir=args.out, **overrides)


def out_dir(args) -> Path:
    p = Path(args.out)
    p.mkdir(parents=True, exist_ok=True)
    return p
