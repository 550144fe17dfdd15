"""LIN+ (flexible commitment): each customer may ignore its contract in up to a
``1 - rho`` fraction of slots, chosen by its realised cost coefficient."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .lin import LinearContract
from .model import LseCost
from .outcome import Simulation, play
from .scenarios import ScenarioSet

MODES = ("clairvoyant", "quantile")


@dataclass(frozen=True)
class FlexParams:
    rho: float = 1.0
    audit_tolerance: float = 1.1
    mode: str = "clairvoyant"

    def __post_init__(self):
        if not 0.0 <= self.rho <= 1.0:
            raise ValueError(f"rho must lie in [0, 1], got {self.rho}")
        if self.audit_tolerance < 1.0:
            raise ValueError("audit_tolerance must be >= 1")
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}; expected one of {MODES}")


def violation_budget(n_slots: int, rho: float) -> int:
    # the epsilon keeps e.g. (1 - 0.8) * 10 from flooring to 1
    return int(math.floor((1.0 - rho) * n_slots + 1e-9))


def select_violations(a_series, rho: float) -> np.ndarray:
    """Indices (0-based, ascending) of the ``floor((1 - rho) T)`` slots with the
    highest realised coefficient; ties go to the earlier slot."""
    if not 0.0 <= rho <= 1.0:
        raise ValueError(f"rho must lie in [0, 1], got {rho}")
    a = np.asarray(a_series, dtype=float).reshape(-1)
    m = violation_budget(a.size, rho)
    order = np.argsort(-a, kind="stable")
    return np.sort(order[:m])


def violation_mask(a: np.ndarray, params: FlexParams, train_a: np.ndarray | None = None) -> np.ndarray:
    """Boolean (T, N) mask of slots each customer skips.

    ``quantile`` mode is online: customer ``i`` skips a slot when ``a_i(t)``
    exceeds the ``rho``-quantile of its training coefficients, up to its
    budget in slot order.
    """
    a = np.atleast_2d(np.asarray(a, dtype=float))
    T, N = a.shape
    mask = np.zeros((T, N), dtype=bool)
    if params.rho == 1.0:
        return mask
    m = violation_budget(T, params.rho)
    if params.mode == "clairvoyant":
        order = np.argsort(-a, axis=0, kind="stable")[:m]
        mask[order, np.arange(N)] = True
        return mask
    if train_a is None:
        raise ValueError("quantile mode needs training coefficients")
    threshold = np.quantile(np.atleast_2d(train_a), params.rho, axis=0)
    over = a > threshold
    # cap at the budget, keeping the earliest exceedances
    return over & (np.cumsum(over, axis=0) <= m)


@dataclass(frozen=True)
class AuditReport:
    mean_D: float
    conditional_mean: np.ndarray  # E[D | i violates], nan without violations
    ratio: np.ndarray
    flagged: np.ndarray

    @property
    def n_flagged(self) -> int:
        return int(self.flagged.sum())


def audit(D: np.ndarray, mask: np.ndarray, tolerance: float) -> AuditReport:
    """Compare ``E[D | i violates]`` with ``E[D]`` for every customer.

    A customer is flagged when its conditional mean exceeds the overall mean
    by more than ``(tolerance - 1) E|D|``; this equals the multiplicative
    test when ``D`` is positive and stays meaningful when ``E[D]`` is near zero.
    """
    D = np.asarray(D, dtype=float)
    count = mask.sum(axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        cond = (D @ mask) / count
        mean = float(D.mean())
        ratio = cond / mean
    excess = cond - mean
    flagged = (count > 0) & (excess > (tolerance - 1.0) * float(np.abs(D).mean()))
    return AuditReport(mean, cond, ratio, flagged)


@dataclass(frozen=True)
class FlexOutcome:
    simulation: Simulation
    mask: np.ndarray
    audit: AuditReport

    @property
    def violation_rate(self) -> float:
        return float(self.mask.mean())


def simulate_lin_plus(
    contract: LinearContract,
    params: FlexParams,
    test: ScenarioSet,
    cost: LseCost,
    train_a: np.ndarray | None = None,
) -> FlexOutcome:
    """Play the contract with skipped slots contributing no response."""
    mask = violation_mask(test.a, params, train_a)
    x = np.where(mask, 0.0, contract.response(test.D, test.delta))
    sim = play(x, test.a, test.D, cost.A, contract.kappa, cost.c)
    return FlexOutcome(sim, mask, audit(test.D, mask, params.audit_tolerance))


def leftover_norm(sim: Simulation) -> float:
    scale = float(np.abs(sim.D).mean())
    return float(sim.excess.mean()) / scale if scale > 0 else 0.0


@dataclass(frozen=True)
class RhoSweep:
    rho: np.ndarray
    social_cost: np.ndarray
    leftover_norm: np.ndarray
    violation_rate: np.ndarray
    audit_flags: np.ndarray

    @property
    def best(self) -> int:
        return int(np.argmin(self.social_cost))

    @property
    def rho_star(self) -> float:
        return float(self.rho[self.best])

    def cost_at(self, rho: float) -> float:
        k = int(np.flatnonzero(np.isclose(self.rho, rho))[0])
        return float(self.social_cost[k])


def sweep_rho(
    contract: LinearContract,
    test: ScenarioSet,
    cost: LseCost,
    rho_grid,
    mode: str = "clairvoyant",
    audit_tolerance: float = 1.1,
    train_a: np.ndarray | None = None,
) -> RhoSweep:
    """Social cost (per slot) and leftover beyond capacity across ``rho``."""
    grid = np.asarray(sorted(set(float(r) for r in rho_grid), reverse=True))
    if grid.size == 0 or not np.any(grid == 1.0):
        raise ValueError("rho grid must be nonempty and include 1.0")
    rows = []
    for rho in grid:
        out = simulate_lin_plus(contract, FlexParams(rho, audit_tolerance, mode), test, cost, train_a)
        rows.append((out.simulation.social_cost, leftover_norm(out.simulation), out.violation_rate, out.audit.n_flagged))
    cols = np.array(rows, dtype=float).T
    return RhoSweep(grid, cols[0], cols[1], cols[2], cols[3].astype(int))


FLEX_HEADER = ["rho", "social_cost", "leftover_norm", "violation_rate", "audit_flags"]


def write_rho_sweep_csv(sweep: RhoSweep, path: str | Path):
    path = Path(path)
    try:
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(FLEX_HEADER)
            for k in range(sweep.rho.size):
                w.writerow(
                    [
                        f"{sweep.rho[k]:.9g}",
                        f"{sweep.social_cost[k]:.9g}",
                        f"{sweep.leftover_norm[k]:.9g}",
                        f"{sweep.violation_rate[k]:.9g}",
                        int(sweep.audit_flags[k]),
                    ]
                )
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc
