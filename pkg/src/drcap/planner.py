"""Capacity planning for the offline optimum (OPT) and the sequential baseline (SEQ)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import LseCost, capped_cost, capped_dual_sum, capped_leftover
from .scenarios import ScenarioSet


@dataclass(frozen=True)
class CapacityPlan:
    kappa: float
    expected_cost: float
    policy_tag: str

    def __post_init__(self):
        if self.kappa < 0:
            raise ValueError("kappa must be >= 0")


def seq_capacity(scenarios: ScenarioSet) -> float:
    """Smallest capacity covering the worst mismatch of the set."""
    b = scenarios.bounds
    return max(abs(b.D_hi), abs(b.D_lo))


def opt_objective(scenarios: ScenarioSet, cost: LseCost, kappa: float) -> float:
    """Sample-average ``c * kappa + E[R(kappa; t)]`` with realised coefficients."""
    r = capped_cost(scenarios.D, scenarios.H, cost.A, kappa)
    return cost.c * kappa + float(r.mean())


def mean_dual_sum(scenarios: ScenarioSet, cost: LseCost, kappa: float) -> float:
    return float(capped_dual_sum(scenarios.D, scenarios.H, cost.A, kappa).mean())


@dataclass(frozen=True)
class OptSolution:
    plan: CapacityPlan
    leftover: np.ndarray
    dual_sum: np.ndarray


def solve_opt(
    scenarios: ScenarioSet, cost: LseCost, rtol: float = 1e-10, max_iter: int = 200
) -> OptSolution:
    """Offline optimum: the capacity balancing ``c = E[theta_lo + theta_hi]``.

    The mean dual sum is nonincreasing in ``kappa`` and vanishes at the SEQ
    capacity, so bisection on ``[0, kappa_SEQ]`` brackets the root.  Each slot
    is dispatched with its realised coefficients.
    """
    D, H, A = scenarios.D, scenarios.H, cost.A
    free = np.abs(D) / (1.0 + A * H)
    if cost.c == 0:
        kappa = float(free.max())
    elif mean_dual_sum(scenarios, cost, 0.0) <= cost.c:
        kappa = 0.0
    else:
        lo, hi = 0.0, float(free.max())
        tol = rtol * max(hi, 1e-300)
        for _ in range(max_iter):
            if hi - lo <= tol:
                break
            mid = 0.5 * (lo + hi)
            if mean_dual_sum(scenarios, cost, mid) > cost.c:
                lo = mid
            else:
                hi = mid
        kappa = _refine_root(scenarios, cost, lo, hi)
    plan = CapacityPlan(kappa, opt_objective(scenarios, cost, kappa), "opt")
    return OptSolution(
        plan,
        capped_leftover(D, H, A, kappa),
        capped_dual_sum(D, H, A, kappa),
    )


def _refine_root(scenarios, cost, lo, hi):
    # the mean dual sum is piecewise linear; interpolate within the final bracket
    g_lo = mean_dual_sum(scenarios, cost, lo) - cost.c
    g_hi = mean_dual_sum(scenarios, cost, hi) - cost.c
    if g_lo > 0 > g_hi or (g_lo > 0 and g_hi == 0):
        k = lo + (hi - lo) * g_lo / (g_lo - g_hi)
        return float(min(max(k, lo), hi))
    return 0.5 * (lo + hi)


def solve_seq(scenarios: ScenarioSet, cost: LseCost) -> CapacityPlan:
    """Worst-case capacity; the objective is the capacity cost alone.

    Real-time costs under SEQ come from the pricing simulation, see
    :func:`drcap.pred.simulate_pred`.
    """
    kappa = seq_capacity(scenarios)
    return CapacityPlan(kappa, cost.c * kappa, "seq")
