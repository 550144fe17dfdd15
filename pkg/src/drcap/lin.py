"""Linear demand-response contract (LIN).

Customer ``i`` commits to ``x_i = alpha_i D + beta_i delta_i + gamma_i``.  With
quadratic costs the expected social cost only needs the first and second
moments of ``z = (delta_1..delta_N, delta_r)``, so both the centralised
contract design and the distributed price negotiation are deterministic
quadratic programs.

Parameters are stored customer-major: ``theta[3i:3i+3] = (alpha_i, beta_i,
gamma_i)``, with feature vector ``phi_i = (D, delta_i, 1)``.

Worst-case capacity constraints are evaluated by interval arithmetic over the
training support of ``D`` and of each ``delta_i``.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

from .model import LseCost
from .outcome import Simulation, play
from .qp import solve_qp, solve_tiny_qp
from .scenarios import ScenarioSet

log = logging.getLogger(__name__)

RIDGE = 1e-12


@dataclass(frozen=True)
class LinearContract:
    alpha: np.ndarray
    beta: np.ndarray
    gamma: np.ndarray
    kappa: float

    @classmethod
    def from_theta(cls, theta: np.ndarray, kappa: float) -> LinearContract:
        t = np.asarray(theta, dtype=float).reshape(-1, 3)
        return cls(t[:, 0].copy(), t[:, 1].copy(), t[:, 2].copy(), float(kappa))

    @property
    def theta(self) -> np.ndarray:
        return np.column_stack([self.alpha, self.beta, self.gamma]).ravel()

    @property
    def n_customers(self) -> int:
        return self.alpha.size

    def response(self, D, delta) -> np.ndarray:
        """Contracted DR, shape (T, N)."""
        D = np.asarray(D, dtype=float)
        return self.alpha * D[:, None] + self.beta * np.asarray(delta) + self.gamma


@dataclass(frozen=True)
class DualPrices:
    pi: np.ndarray
    lam: np.ndarray
    mu: np.ndarray

    @classmethod
    def zeros(cls, n: int) -> DualPrices:
        return cls(np.zeros(n), np.zeros(n), np.zeros(n))

    @classmethod
    def from_vector(cls, v: np.ndarray) -> DualPrices:
        t = np.asarray(v, dtype=float).reshape(-1, 3)
        return cls(t[:, 0].copy(), t[:, 1].copy(), t[:, 2].copy())

    @property
    def vector(self) -> np.ndarray:
        return np.column_stack([self.pi, self.lam, self.mu]).ravel()

    def payments(self, contract: LinearContract) -> np.ndarray:
        return self.pi * contract.alpha + self.lam * contract.beta + self.mu * contract.gamma


@dataclass(frozen=True)
class LinProblem:
    """Moment and support data of a training set, in the form the LIN solvers use."""

    a_hat: np.ndarray
    M: np.ndarray  # second moments of (delta_1..delta_N, delta_r, 1)
    D_lo: float
    D_hi: float
    lo: np.ndarray  # per-customer delta bounds
    hi: np.ndarray

    @classmethod
    def from_scenarios(cls, train: ScenarioSet) -> LinProblem:
        b = train.bounds
        return cls(train.a_hat, train.moments.augmented, b.D_lo, b.D_hi, b.delta_lo, b.delta_hi)

    @property
    def n(self) -> int:
        return self.a_hat.size

    @cached_property
    def d(self) -> np.ndarray:
        """Coefficients of D on (z, 1)."""
        d = np.ones(self.n + 2)
        d[-2], d[-1] = -1.0, 0.0
        return d

    @cached_property
    def W(self) -> np.ndarray:
        n = self.n
        W = np.zeros((3 * n, n + 2))
        W[0::3] = self.d
        W[np.arange(1, 3 * n, 3), np.arange(n)] = 1.0
        W[2::3, -1] = 1.0
        return W

    @cached_property
    def F(self) -> np.ndarray:
        """E[phi phi'] over all customers' features."""
        return self.W @ self.M @ self.W.T

    @cached_property
    def b(self) -> np.ndarray:
        """E[D phi]."""
        return self.W @ self.M @ self.d

    @cached_property
    def ED2(self) -> float:
        return float(self.d @ self.M @ self.d)

    @cached_property
    def ED(self) -> float:
        return float(self.M[-1] @ self.d)

    @cached_property
    def K(self) -> np.ndarray:
        """Per-customer 3x3 feature second moments, shape (N, 3, 3)."""
        n = self.n
        idx = np.arange(3 * n).reshape(n, 3)
        return self.F[idx[:, :, None], idx[:, None, :]]

    @cached_property
    def customer_hessian(self) -> np.ndarray:
        """Block diagonal of ``2 a_hat_i K_i``."""
        out = np.zeros((3 * self.n, 3 * self.n))
        for i in range(self.n):
            out[3 * i : 3 * i + 3, 3 * i : 3 * i + 3] = 2.0 * self.a_hat[i] * self.K[i]
        return out

    @property
    def scale_kw(self) -> float:
        return max(abs(self.D_lo), abs(self.D_hi), 1e-12)


# Objective pieces.


def customer_costs(problem: LinProblem, theta: np.ndarray) -> np.ndarray:
    """Per-customer expected cost ``a_hat_i E[x_i^2]``."""
    t = np.asarray(theta).reshape(-1, 3)
    return problem.a_hat * np.einsum("ij,ijk,ik->i", t, problem.K, t)


def lse_penalty(problem: LinProblem, theta: np.ndarray, A: float) -> float:
    """``A E[(D - sum_i x_i)^2]``."""
    theta = np.asarray(theta)
    return float(A * (problem.ED2 - 2.0 * problem.b @ theta + theta @ problem.F @ theta))


def worst_case(problem: LinProblem, theta: np.ndarray) -> tuple[float, float]:
    """Largest and smallest leftover ``D - sum x_i`` over the training support."""
    t = np.asarray(theta).reshape(-1, 3)
    s, g = t[:, 0].sum(), t[:, 2].sum()
    beta = t[:, 1]
    ends = ((1.0 - s) * problem.D_lo, (1.0 - s) * problem.D_hi)
    up = np.maximum(-beta * problem.lo, -beta * problem.hi).sum()
    down = np.minimum(-beta * problem.lo, -beta * problem.hi).sum()
    return max(ends) + up - g, min(ends) + down - g


def required_kappa(problem: LinProblem, theta: np.ndarray) -> float:
    hi, lo = worst_case(problem, theta)
    return max(hi, -lo, 0.0)


def lin_objective(problem: LinProblem, contract: LinearContract, cost: LseCost) -> float:
    """Expected social cost per slot of a contract under the training moments."""
    theta = contract.theta
    return (
        cost.c * contract.kappa
        + float(customer_costs(problem, theta).sum())
        + lse_penalty(problem, theta, cost.A)
    )


# Centralised design.


@dataclass(frozen=True)
class LinFit:
    contract: LinearContract
    objective: float
    method: str
    multipliers: np.ndarray = field(repr=False)


def _constraints(problem: LinProblem, with_beta: bool):
    """Rows of ``G v <= h`` for the worst-case constraints.

    Variable layout: ``theta (3N), t_up (N), t_down (N), kappa``.  ``t_up_i``
    bounds the largest value of ``-beta_i delta_i`` and ``t_down_i`` the largest
    value of ``beta_i delta_i`` over the support.
    """
    n = problem.n
    nv = 5 * n + 1
    rows, rhs = [], []
    a_cols = np.arange(0, 3 * n, 3)
    g_cols = np.arange(2, 3 * n, 3)
    b_cols = np.arange(1, 3 * n, 3)
    up_cols = 3 * n + np.arange(n)
    down_cols = 4 * n + np.arange(n)
    for Dk in (problem.D_hi, problem.D_lo):
        r = np.zeros(nv)
        r[a_cols], r[g_cols], r[up_cols], r[-1] = -Dk, -1.0, 1.0, -1.0
        rows.append(r), rhs.append(-Dk)
        r = np.zeros(nv)
        r[a_cols], r[g_cols], r[down_cols], r[-1] = Dk, 1.0, 1.0, -1.0
        rows.append(r), rhs.append(Dk)
    if with_beta:
        for i in range(n):
            for bound in (problem.lo[i], problem.hi[i]):
                r = np.zeros(nv)
                r[b_cols[i]], r[up_cols[i]] = -bound, -1.0
                rows.append(r), rhs.append(0.0)
                r = np.zeros(nv)
                r[b_cols[i]], r[down_cols[i]] = bound, -1.0
                rows.append(r), rhs.append(0.0)
    else:
        # beta fixed at zero: t_up = t_down = 0
        for cols in (b_cols, up_cols, down_cols):
            for j in cols:
                for sign in (1.0, -1.0):
                    r = np.zeros(nv)
                    r[j] = sign
                    rows.append(r), rhs.append(0.0)
    return np.array(rows), np.array(rhs)


def _solve_policy_qp(problem: LinProblem, P: np.ndarray, q: np.ndarray, c: float):
    """Minimise ``0.5 theta'P theta + q'theta + c kappa`` under the worst-case
    constraints.  Returns ``(theta, kappa, multipliers of the four aggregate
    constraints)``."""
    n = problem.n
    if c == 0:
        theta = np.linalg.solve(P, -q)
        return theta, required_kappa(problem, theta), np.zeros(4)
    nv = 5 * n + 1
    Pf = np.zeros((nv, nv))
    Pf[: 3 * n, : 3 * n] = P
    qf = np.zeros(nv)
    qf[: 3 * n] = q
    qf[-1] = c
    G, h = _constraints(problem, with_beta=True)
    kw = problem.scale_kw
    scale = np.ones(nv)
    scale[2 : 3 * n : 3] = kw / n
    scale[3 * n :] = kw
    v, z = solve_qp(Pf, qf, G, h, var_scale=scale)
    theta = v[: 3 * n]
    return theta, required_kappa(problem, theta), z[:4]


def _central_quadratic(problem: LinProblem, A: float):
    P = problem.customer_hessian + 2.0 * A * problem.F
    q = -2.0 * A * problem.b
    return P, q


def _reduced_solve(problem: LinProblem, cost: LseCost):
    """Optimum with ``beta = 0``: only ``s = sum alpha`` and ``g = sum gamma``
    matter, and each customer takes a share proportional to ``1 / a_hat_i``."""
    A, m1, m2 = cost.A, problem.ED, problem.ED2
    Hh = float(np.sum(1.0 / problem.a_hat))
    K2 = np.array([[m2, m1], [m1, 1.0]])
    P = np.zeros((3, 3))
    P[:2, :2] = 2.0 * (1.0 / Hh + A) * K2
    q = np.array([-2.0 * A * m2, -2.0 * A * m1, cost.c])
    G, h = [], []
    for Dk in (problem.D_hi, problem.D_lo):
        G.append([-Dk, -1.0, -1.0]), h.append(-Dk)
        G.append([Dk, 1.0, -1.0]), h.append(Dk)
    if cost.c == 0:
        s, g = np.linalg.solve(P[:2, :2], -q[:2])
        nu = np.zeros(4)
    else:
        # solve in kW-normalised units for conditioning
        kw = problem.scale_kw
        S = np.diag([1.0, kw, kw])
        Gs = np.array(G) @ S / kw
        (s, g_s, _), nu = solve_tiny_qp(S @ P @ S, S @ q, Gs, np.array(h) / kw)
        g = g_s * kw
        nu = nu / kw
    share = 1.0 / (problem.a_hat * Hh)
    theta = np.column_stack([s * share, np.zeros(problem.n), g * share]).ravel()
    return theta, nu


def beta_zero_is_optimal(problem: LinProblem, theta: np.ndarray, A: float, nu: np.ndarray, rtol: float = 1e-9) -> bool:
    """Subgradient test for ``beta = 0`` at a solution of the reduced problem.

    ``nu`` holds the multipliers of the two upper and two lower aggregate
    constraints, ordered as in :func:`_constraints`.
    """
    P, q = _central_quadratic(problem, A)
    grad = (P @ theta + q)[1::3]
    nu_up = nu[0] + nu[2]
    nu_down = nu[1] + nu[3]
    # subdifferentials at beta_i = 0 of max(-beta lo, -beta hi) and max(beta lo, beta hi)
    lo_i, hi_i = problem.lo, problem.hi
    low = nu_up * np.minimum(-lo_i, -hi_i) + nu_down * np.minimum(lo_i, hi_i)
    high = nu_up * np.maximum(-lo_i, -hi_i) + nu_down * np.maximum(lo_i, hi_i)
    slack = rtol * (1.0 + np.abs(grad).max() + np.abs(high).max() + np.abs(low).max())
    return bool(np.all(-grad >= low - slack) and np.all(-grad <= high + slack))


def solve_lin_centralized(train: ScenarioSet | LinProblem, cost: LseCost, method: str = "auto") -> LinFit:
    """Jointly optimal contract and capacity under the training moments.

    ``method="auto"`` first solves with ``beta = 0`` and keeps that solution
    when the optimality test for ``beta`` passes; otherwise, or with
    ``method="full"``, it solves the full QP.
    """
    problem = train if isinstance(train, LinProblem) else LinProblem.from_scenarios(train)
    if method not in ("auto", "full"):
        raise ValueError(f"unknown method {method!r}")
    if method == "auto":
        theta, nu = _reduced_solve(problem, cost)
        if beta_zero_is_optimal(problem, theta, cost.A, nu):
            contract = LinearContract.from_theta(theta, required_kappa(problem, theta))
            return LinFit(contract, lin_objective(problem, contract, cost), "reduced", nu)
        log.info("beta = 0 is not optimal; solving the full QP")
    P, q = _central_quadratic(problem, cost.A)
    theta, kappa, nu = _solve_policy_qp(problem, P, q, cost.c)
    contract = LinearContract.from_theta(theta, kappa)
    return LinFit(contract, lin_objective(problem, contract, cost), "full", nu)


# Distributed design.


def customer_subproblem(prices: np.ndarray, K: np.ndarray, a_hat: float) -> np.ndarray:
    """Minimiser of ``a_hat E[(u D + v delta_i + w)^2] - pi u - lam v - mu w``.

    ``prices`` is ``(pi, lam, mu)`` and ``K`` the 3x3 second moments of
    ``(D, delta_i, 1)``.  Batched over a leading axis.
    """
    prices = np.asarray(prices, dtype=float)
    K = np.asarray(K, dtype=float)
    single = prices.ndim == 1
    prices, K = np.atleast_2d(prices), K.reshape(-1, 3, 3)
    a_hat = np.broadcast_to(np.asarray(a_hat, dtype=float), (K.shape[0],))
    tr = np.trace(K, axis1=1, axis2=2)
    dead = K[:, 1, 1] <= RIDGE * tr  # delta_i identically zero
    Kr = K + (RIDGE * tr)[:, None, None] * np.eye(3)
    out = np.linalg.solve(2.0 * a_hat[:, None, None] * Kr, prices[:, :, None])[:, :, 0]
    if dead.any():
        # solve the (u, w) system and pin v to 0
        sub = Kr[dead][:, [0, 2]][:, :, [0, 2]]
        uw = np.linalg.solve(2.0 * a_hat[dead][:, None, None] * sub, prices[dead][:, [0, 2], None])[:, :, 0]
        out[dead] = np.column_stack([uw[:, 0], np.zeros(len(uw)), uw[:, 1]])
    return out[0] if single else out


def lse_subproblem(
    prices: DualPrices | np.ndarray,
    problem: LinProblem,
    cost: LseCost,
    anchor: np.ndarray | None = None,
    prox: float = 0.0,
) -> tuple[np.ndarray, float]:
    """LSE side: ``min c kappa + prices'theta + A E[(D - sum x)^2]`` under the
    worst-case constraints, plus ``prox/2 * sum_i E[((theta_i - anchor_i)'phi_i)^2]``.

    Without the proximal term the problem is bounded only when all ``pi_i``
    (and all ``mu_i``) coincide, since the penalty depends on the alphas and
    gammas through their sums alone.
    """
    pv = prices.vector if isinstance(prices, DualPrices) else np.asarray(prices, dtype=float)
    n = problem.n
    P = 2.0 * cost.A * problem.F
    q = pv - 2.0 * cost.A * problem.b
    if prox > 0:
        Kb = np.zeros((3 * n, 3 * n))
        for i in range(n):
            Ki = problem.K[i]
            Kb[3 * i : 3 * i + 3, 3 * i : 3 * i + 3] = Ki + RIDGE * np.trace(Ki) * np.eye(3)
        anchor = np.zeros(3 * n) if anchor is None else np.asarray(anchor, dtype=float)
        P = P + prox * Kb
        q = q - prox * Kb @ anchor
    theta, kappa, _ = _solve_policy_qp(problem, P, q, cost.c)
    return theta, kappa


def lagrangians(problem: LinProblem, cost: LseCost, theta, u, kappa: float, prices: np.ndarray):
    """Lagrangians of the split problem, the LSE problem and each customer's
    problem at a point; the first equals the sum of the others."""
    theta, u, prices = (np.asarray(v, dtype=float) for v in (theta, u, prices))
    lse = cost.c * kappa + prices @ theta + lse_penalty(problem, theta, cost.A)
    cust = customer_costs(problem, u) - (prices * u).reshape(-1, 3).sum(axis=1)
    full = (
        cost.c * kappa
        + customer_costs(problem, u).sum()
        + lse_penalty(problem, theta, cost.A)
        + prices @ (theta - u)
    )
    return full, lse, cust


@dataclass
class NegotiationResult:
    contract: LinearContract
    prices: DualPrices
    converged: bool
    iterations: int
    residual: float
    zeta: float
    eps: float
    log: list[dict]

    @property
    def payments(self) -> np.ndarray:
        return self.prices.payments(self.contract)


def default_prox(problem: LinProblem) -> float:
    """Proximal weight matching the customers' mean curvature."""
    return 2.0 * float(np.mean(problem.a_hat))


def price_unit(problem: LinProblem) -> float:
    """Price scale at which no customer moves more than 1 kW (RMS) per unit."""
    return 2.0 * float(np.min(problem.a_hat))


def whitening(problem: LinProblem) -> np.ndarray:
    """Cholesky factors ``L_i`` of the (ridged) ``K_i``, shape (N, 3, 3).

    ``||L_i' theta_i||`` is the RMS response of customer ``i`` in kW.
    """
    K = problem.K
    tr = np.trace(K, axis1=1, axis2=2)
    return np.linalg.cholesky(K + (RIDGE * tr)[:, None, None] * np.eye(3))


def disagreement(L: np.ndarray, theta: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Per-customer gap between LSE and customer parameters in whitened units."""
    diff = (np.asarray(theta) - np.asarray(u)).reshape(-1, 3)
    return np.einsum("ikj,ik->ij", L, diff).ravel()


def negotiate(
    train: ScenarioSet | LinProblem,
    cost: LseCost,
    zeta: float = 1.0,
    eps: float | None = None,
    max_iter: int = 5000,
    prox: float | None = None,
) -> NegotiationResult:
    """Price negotiation between the LSE and its customers.

    Each round the LSE solves its problem against the customers' last
    proposals, the prices move along the disagreement ``G`` with step
    ``(zeta / k) / ||G||``, and every customer re-optimises at its new prices.
    Stops when ``||G|| <= eps``.  The agreed contract is the customers' last
    proposal.

    ``G`` is measured per customer in whitened coordinates (RMS kW of the
    response gap) and prices in units of :func:`price_unit`, so that ``zeta``
    and ``eps`` do not depend on the scale of each contract coefficient.
    Reported prices are converted back to $ per unit of alpha, beta, gamma.
    """
    if zeta <= 0:
        raise ValueError("zeta must be > 0")
    if eps is not None and eps <= 0:
        raise ValueError("eps must be > 0")
    problem = train if isinstance(train, LinProblem) else LinProblem.from_scenarios(train)
    n = problem.n
    prox = default_prox(problem) if prox is None else prox
    L = whitening(problem)
    unit = price_unit(problem)

    def to_prices(w):
        return unit * np.einsum("ijk,ik->ij", L, w.reshape(-1, 3)).ravel()

    w = np.zeros(3 * n)  # prices in whitened units
    prices = np.zeros(3 * n)
    u = np.zeros(3 * n)
    entries: list[dict] = []
    best = (np.inf, u, prices)
    converged = False
    k = 0
    for k in range(1, max_iter + 1):
        theta, kappa = lse_subproblem(prices, problem, cost, anchor=u, prox=prox)
        G = disagreement(L, theta, u)
        resid = float(np.linalg.norm(G))
        if eps is None:
            eps = 1e-4 * (1.0 + resid)
        if resid < best[0]:
            best = (resid, u, prices)
        if resid <= eps:
            converged = True
            entries.append({"iteration": k, "residual": resid, "eta": 0.0, "kappa": float(kappa)})
            break
        eta = (zeta / k) / resid
        w = w + eta * G
        prices = to_prices(w)
        entries.append({"iteration": k, "residual": resid, "eta": eta, "kappa": float(kappa)})
        u = customer_subproblem(prices.reshape(-1, 3), problem.K, problem.a_hat).ravel()
    resid, u_final, p_final = best
    contract = LinearContract.from_theta(u_final, required_kappa(problem, u_final))
    return NegotiationResult(
        contract, DualPrices.from_vector(p_final), converged, k, resid, zeta, eps, entries
    )


# Real-time play.


def simulate_lin(contract: LinearContract, test: ScenarioSet, cost: LseCost) -> Simulation:
    """Contracted responses scored with realised coefficients; leftovers beyond
    ``kappa`` are recorded."""
    x = contract.response(test.D, test.delta)
    return play(x, test.a, test.D, cost.A, contract.kappa, cost.c)


CONTRACT_HEADER = ["customer_id", "alpha", "beta", "gamma", "pi", "lambda", "mu", "payment"]


def write_contract_csv(result: NegotiationResult, path: str | Path, customer_ids=None):
    """Contract export; the first line is a ``#`` comment with the run summary."""
    path = Path(path)
    c, p = result.contract, result.prices
    ids = range(c.n_customers) if customer_ids is None else customer_ids
    pay = result.payments
    try:
        with path.open("w", newline="") as fh:
            fh.write(
                f"# kappa_kw={c.kappa:.9g},zeta={result.zeta:.9g},eps={result.eps:.9g},"
                f"iterations={result.iterations},converged={str(result.converged).lower()}\n"
            )
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(CONTRACT_HEADER)
            for i, cid in enumerate(ids):
                vals = (c.alpha[i], c.beta[i], c.gamma[i], p.pi[i], p.lam[i], p.mu[i], pay[i])
                w.writerow([cid, *(f"{v:.9g}" for v in vals)])
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc
