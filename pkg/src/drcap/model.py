"""Cost model and single-timeslot dispatch.

Customer cost ``a * x**2``, LSE mismatch penalty ``A * delta**2`` and linear
capacity cost ``c * kappa``.  The dispatch problem for one timeslot is

    min_x  sum_i a_i x_i**2 + A (D - sum_i x_i)**2
    s.t.   -kappa <= D - sum_i x_i <= kappa

and is solved in closed form together with the duals of the capacity
constraint.  A bisection-based dispatch for general convex marginal costs is
provided as an extension point.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol, Sequence

import numpy as np


class InvalidModelError(ValueError):
    """Raised for non-positive cost coefficients or malformed inputs."""


@dataclass(frozen=True)
class CustomerCost:
    a: float

    def __post_init__(self):
        if not self.a > 0:
            raise InvalidModelError(f"customer coefficient must be > 0, got {self.a}")

    def __call__(self, x):
        return self.a * np.square(x)

    def marginal(self, x):
        return 2.0 * self.a * x

    def inverse_marginal(self, p):
        return p / (2.0 * self.a)


@dataclass(frozen=True)
class LseCost:
    """LSE penalty coefficient ``A`` and per-slot capacity price ``c``."""

    A: float
    c: float = 0.0

    def __post_init__(self):
        if not self.A > 0:
            raise InvalidModelError(f"LSE coefficient must be > 0, got {self.A}")
        if self.c < 0:
            raise InvalidModelError(f"capacity price must be >= 0, got {self.c}")

    def penalty(self, delta):
        return self.A * np.square(delta)

    def capacity(self, kappa):
        return self.c * kappa


@dataclass(frozen=True)
class DispatchResult:
    x: np.ndarray
    delta: float
    theta_lo: float
    theta_hi: float
    customer_cost: float
    lse_cost: float

    @property
    def total_cost(self) -> float:
        return self.customer_cost + self.lse_cost


def _coeffs(a) -> np.ndarray:
    a = np.atleast_1d(np.asarray(a, dtype=float))
    if a.ndim != 1 or a.size == 0:
        raise InvalidModelError("need a nonempty vector of customer coefficients")
    if not np.all(a > 0):
        raise InvalidModelError("customer coefficients must all be > 0")
    return a


def _check_lse(A: float):
    if not A > 0:
        raise InvalidModelError(f"LSE coefficient must be > 0, got {A}")


def _result(x, delta, theta_lo, theta_hi, a, A) -> DispatchResult:
    return DispatchResult(
        x=x,
        delta=float(delta),
        theta_lo=float(theta_lo),
        theta_hi=float(theta_hi),
        customer_cost=float(np.sum(a * x * x)),
        lse_cost=float(A * delta * delta),
    )


def dispatch_unconstrained(a, A: float, D: float) -> DispatchResult:
    """Closed-form dispatch without the capacity constraint.

    Marginal costs are equalised: ``2 a_i x_i = 2 A delta`` for every customer.
    """
    a = _coeffs(a)
    _check_lse(A)
    if not np.isfinite(D):
        raise InvalidModelError("mismatch must be finite")
    delta = D / (1.0 + np.sum(A / a))
    x = A * delta / a
    return _result(x, delta, 0.0, 0.0, a, A)


def dispatch_capped(a, A: float, D: float, kappa: float) -> DispatchResult:
    """Dispatch with ``|D - sum(x)| <= kappa``; reports the capacity duals.

    When the unconstrained leftover falls outside ``[-kappa, kappa]`` the
    leftover is pinned to the nearer face and the remaining ``D -/+ kappa`` is
    split in proportion to ``1/a_i``.  At ``kappa == 0`` the residual is
    reported on ``theta_hi`` for positive ``D`` and on ``theta_lo`` for
    negative ``D``.
    """
    if kappa < 0:
        raise ValueError(f"kappa must be >= 0, got {kappa}")
    free = dispatch_unconstrained(a, A, D)
    if abs(free.delta) <= kappa:
        return free
    a = _coeffs(a)
    delta = float(np.copysign(kappa, free.delta))
    x = (D - delta) * (1.0 / a) / np.sum(1.0 / a)
    # stationarity: 2 a_i x_i - 2 A delta + theta_lo - theta_hi = 0
    resid = 2.0 * (D - delta) / np.sum(1.0 / a) - 2.0 * A * delta
    if free.delta > 0:
        return _result(x, delta, 0.0, resid, a, A)
    return _result(x, delta, -resid, 0.0, a, A)


def kappa_subgradient(result: DispatchResult) -> float:
    """Subgradient of the optimal real-time cost with respect to ``kappa``."""
    return -(result.theta_lo + result.theta_hi)


def realized_social_cost(result: DispatchResult, a, A: float) -> float:
    a = np.asarray(a, dtype=float)
    return float(np.sum(a * np.square(result.x)) + A * result.delta ** 2)


def kkt_residuals(result: DispatchResult, a, A: float, D: float, kappa: float) -> dict:
    """Absolute residuals of the capacity-constrained KKT system."""
    a = np.asarray(a, dtype=float)
    delta = D - np.sum(result.x)
    stat = 2.0 * a * result.x - 2.0 * A * delta + result.theta_lo - result.theta_hi
    return {
        "stationarity": float(np.max(np.abs(stat))),
        "comp_lo": abs(result.theta_lo * (delta + kappa)),
        "comp_hi": abs(result.theta_hi * (delta - kappa)),
        "dual_feas": max(0.0, -result.theta_lo, -result.theta_hi),
        "primal_feas": max(0.0, abs(delta) - kappa),
        "delta_consistency": abs(delta - result.delta),
    }


# Vectorised forms over a batch of timeslots: ``H`` holds sum_i 1/a_i(t).


def capped_leftover(D, H, A: float, kappa: float):
    """Optimal leftover per slot for the quadratic model."""
    D = np.asarray(D, dtype=float)
    free = D / (1.0 + A * np.asarray(H, dtype=float))
    return np.clip(free, -kappa, kappa)


def capped_cost(D, H, A: float, kappa: float):
    """Optimal real-time cost R(kappa; t) per slot."""
    delta = capped_leftover(D, H, A, kappa)
    return np.square(np.asarray(D) - delta) / H + A * np.square(delta)


def capped_dual_sum(D, H, A: float, kappa: float):
    """theta_lo + theta_hi per slot; zero on non-binding slots."""
    D = np.asarray(D, dtype=float)
    return np.maximum(0.0, 2.0 * (np.abs(D) - kappa) / H - 2.0 * A * kappa)


# Extension seam for generic convex costs.


class MarginalCost(Protocol):
    def marginal(self, x): ...

    def inverse_marginal(self, p): ...


def dispatch_convex(
    customers: Sequence[MarginalCost],
    lse: MarginalCost,
    D: float,
    kappa: float = np.inf,
    tol: float = 1e-12,
    max_iter: int = 200,
) -> DispatchResult:
    """Dispatch for general convex costs by bisection on the common price.

    Each customer responds with ``x_i(p) = (C_i')^{-1}(p)`` and the leftover
    ``D - sum x_i(p)`` is decreasing in ``p``.  Without a binding constraint
    the price equals the LSE marginal penalty of the leftover; otherwise the
    leftover is pinned to ``+-kappa``.
    """
    if kappa < 0:
        raise ValueError(f"kappa must be >= 0, got {kappa}")

    def leftover(p):
        return D - sum(float(c.inverse_marginal(p)) for c in customers)

    def excess(p):
        delta = leftover(p)
        if delta > kappa:
            return 1.0
        if delta < -kappa:
            return -1.0
        return float(lse.marginal(delta)) - p

    lo, hi = -1.0, 1.0
    while excess(lo) < 0:
        lo *= 2.0
    while excess(hi) > 0:
        hi *= 2.0
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        if excess(mid) > 0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= tol * max(1.0, abs(mid)):
            break
    p = 0.5 * (lo + hi)
    x = np.array([float(c.inverse_marginal(p)) for c in customers])
    delta = D - float(x.sum())
    gap = p - float(lse.marginal(delta))
    binding = abs(delta) >= kappa - 1e-9 * max(1.0, abs(D))
    # the side of a binding bound follows the price gap, not the sign of a
    # leftover that may be a rounding-level number at kappa = 0
    theta_hi = max(gap, 0.0) if binding else 0.0
    theta_lo = max(-gap, 0.0) if binding else 0.0
    return DispatchResult(
        x=x,
        delta=delta,
        theta_lo=theta_lo,
        theta_hi=theta_hi,
        customer_cost=float(sum(c(xi) for c, xi in zip(customers, x))),
        lse_cost=float(lse(delta)),
    )
