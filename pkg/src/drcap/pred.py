"""Prediction-based pricing (PRED) and the SEQ real-time stage.

The LSE prices demand response from estimated coefficients ``a_hat``; each
customer answers a price ``p`` with ``x_i = p / (2 a_i)`` using its realised
coefficient.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import LseCost
from .outcome import Simulation, play
from .planner import CapacityPlan, seq_capacity
from .scenarios import ScenarioSet

GRID_POINTS = 200


def estimated_response(a_hat, p):
    """Response maximising ``p x - a_hat x**2``."""
    return np.asarray(p, dtype=float)[..., None] / (2.0 * np.asarray(a_hat, dtype=float))


@dataclass(frozen=True)
class PriceRule:
    """Price as a function of the observed mismatch for a fixed capacity."""

    kappa: float
    A: float
    S: float  # sum_i 1 / (2 a_hat_i)

    @classmethod
    def from_estimates(cls, a_hat, A: float, kappa: float) -> PriceRule:
        if kappa < 0:
            raise ValueError("kappa must be >= 0")
        return cls(float(kappa), float(A), float(np.sum(0.5 / np.asarray(a_hat, dtype=float))))

    def estimated_leftover(self, D):
        D = np.asarray(D, dtype=float)
        return np.clip(D / (1.0 + 2.0 * self.A * self.S), -self.kappa, self.kappa)

    def __call__(self, D):
        # the price delivering exactly the (clamped) estimated leftover
        D = np.asarray(D, dtype=float)
        return (D - self.estimated_leftover(D)) / self.S


def price_rule(a_hat, A: float, kappa: float) -> PriceRule:
    return PriceRule.from_estimates(a_hat, A, kappa)


def estimated_cost(rule: PriceRule, D):
    """``H(kappa; D)``: estimated customer cost plus LSE penalty."""
    D = np.asarray(D, dtype=float)
    left = rule.estimated_leftover(D)
    # sum_i a_hat_i (p / 2 a_hat_i)^2 = p^2 S / 2 = (D - left)^2 / (2 S)
    return np.square(D - left) / (2.0 * rule.S) + rule.A * np.square(left)


@dataclass(frozen=True)
class PredFit:
    plan: CapacityPlan
    rule: PriceRule
    grid: np.ndarray
    objective: np.ndarray


def solve_pred(train: ScenarioSet, cost: LseCost, grid_points: int = GRID_POINTS) -> PredFit:
    """Exhaustive search of ``c kappa + E[H(kappa; D)]`` over a grid on
    ``[0, kappa_SEQ]``; ties go to the smallest capacity."""
    top = seq_capacity(train)
    grid = np.linspace(0.0, top, grid_points) if top > 0 else np.zeros(1)
    base = PriceRule.from_estimates(train.a_hat, cost.A, 0.0)
    free = train.D / (1.0 + 2.0 * cost.A * base.S)
    lefts = np.clip(free[None, :], -grid[:, None], grid[:, None])
    h = np.square(train.D[None, :] - lefts) / (2.0 * base.S) + cost.A * np.square(lefts)
    objective = cost.c * grid + h.mean(axis=1)
    k = int(np.argmin(objective))
    rule = PriceRule(float(grid[k]), cost.A, base.S)
    return PredFit(CapacityPlan(rule.kappa, float(objective[k]), "pred"), rule, grid, objective)


def simulate_pred(rule: PriceRule, test: ScenarioSet, cost: LseCost) -> Simulation:
    """Real-time play of a price rule; leftovers beyond ``kappa`` are recorded,
    not clamped."""
    p = rule(test.D)
    x = p[:, None] / (2.0 * test.a)
    return play(x, test.a, test.D, cost.A, rule.kappa, cost.c)


def seq_rule(train: ScenarioSet, cost: LseCost) -> PriceRule:
    """SEQ prices with the same rule as PRED but at worst-case capacity."""
    return PriceRule.from_estimates(train.a_hat, cost.A, seq_capacity(train))
