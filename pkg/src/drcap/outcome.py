"""Per-slot outcome of playing a policy on a scenario set."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

EXCESS_RTOL = 1e-9


@dataclass(frozen=True)
class Simulation:
    """Per-slot outcome of a policy on a scenario set."""

    kappa: float
    capacity_cost: float
    total_dr: np.ndarray
    leftover: np.ndarray
    customer_cost: np.ndarray
    lse_cost: np.ndarray
    D: np.ndarray

    @property
    def slot_cost(self) -> np.ndarray:
        return self.customer_cost + self.lse_cost

    @property
    def social_cost(self) -> float:
        """Capacity cost plus mean real-time cost, per slot."""
        return self.capacity_cost + float(self.slot_cost.mean())

    @property
    def excess(self) -> np.ndarray:
        # leftovers that sit on the capacity bound up to rounding do not count
        over = np.abs(self.leftover) - self.kappa
        tol = EXCESS_RTOL * max(self.kappa, 1.0)
        return np.where(over > tol, over, 0.0)

    @property
    def exceedance_rate(self) -> float:
        return float(np.mean(self.excess > 0))


def play(x: np.ndarray, a: np.ndarray, D: np.ndarray, A: float, kappa: float, c: float) -> Simulation:
    """Score per-customer responses ``x`` (T, N) against realised costs ``a``."""
    total = x.sum(axis=1)
    left = D - total
    return Simulation(
        kappa=kappa,
        capacity_cost=c * kappa,
        total_dr=total,
        leftover=left,
        customer_cost=np.sum(a * x * x, axis=1),
        lse_cost=A * left * left,
        D=D,
    )
