"""Small convex QP helpers.

``solve_tiny_qp`` enumerates active sets and is exact for a handful of
variables; ``solve_qp`` wraps cvxopt's interior-point solver with variable
and objective scaling.
"""

from __future__ import annotations

from itertools import combinations

import numpy as np


class QPError(RuntimeError):
    pass


def solve_tiny_qp(P, q, G, h, tol: float = 1e-10):
    """Minimise ``0.5 y'Py + q'y`` s.t. ``Gy <= h`` by active-set enumeration.

    Returns ``(y, multipliers)``.  ``P`` may be singular as long as the
    optimum is pinned by active constraints.
    """
    P, q, G, h = (np.asarray(v, dtype=float) for v in (P, q, G, h))
    n, m = q.size, h.size
    scale = 1.0 + np.abs(h).max(initial=0.0)
    best = None
    for k in range(0, min(n, m) + 1):
        for active in combinations(range(m), k):
            idx = list(active)
            Ga = G[idx]
            kkt = np.block([[P, Ga.T], [Ga, np.zeros((k, k))]])
            rhs = np.concatenate([-q, h[idx]])
            try:
                sol = np.linalg.solve(kkt, rhs)
            except np.linalg.LinAlgError:
                continue
            if not np.all(np.isfinite(sol)) or np.linalg.cond(kkt) > 1e14:
                continue
            y, nu = sol[:n], sol[n:]
            if np.any(G @ y - h > tol * scale) or np.any(nu < -tol * (1.0 + np.abs(nu).max(initial=0.0))):
                continue
            val = 0.5 * y @ P @ y + q @ y
            if best is None or val < best[0] - tol * (1.0 + abs(val)):
                mult = np.zeros(m)
                mult[idx] = np.maximum(nu, 0.0)
                best = (val, y, mult)
    if best is None:
        raise QPError("no KKT point found; the problem may be infeasible or unbounded")
    return best[1], best[2]


def solve_qp(P, q, G, h, var_scale=None, tol: float = 1e-11, max_iter: int = 200):
    """Minimise ``0.5 v'Pv + q'v`` s.t. ``Gv <= h`` with cvxopt.

    ``var_scale`` gives a typical magnitude per variable; the problem is solved
    in scaled units and the objective normalised.  Returns ``(v, z)`` with
    ``z`` the inequality multipliers in the original units.
    """
    from cvxopt import matrix, solvers

    P, q, G, h = (np.asarray(v, dtype=float) for v in (P, q, G, h))
    s = np.ones(q.size) if var_scale is None else np.asarray(var_scale, dtype=float)
    Ps = P * np.outer(s, s)
    qs = q * s
    Gs = G * s
    row = np.maximum(np.abs(Gs).max(axis=1), 1e-300)
    Gs = Gs / row[:, None]
    hs = h / row
    obj = max(np.abs(Ps).max(), np.abs(qs).max(), 1e-300)
    Ps, qs = Ps / obj, qs / obj
    Ps = 0.5 * (Ps + Ps.T)
    opts = {"show_progress": False, "abstol": tol, "reltol": tol, "feastol": tol, "maxiters": max_iter}
    sol = solvers.qp(matrix(Ps), matrix(qs), matrix(Gs), matrix(hs), options=opts)
    if sol["status"] not in ("optimal", "unknown") or sol["x"] is None:
        raise QPError(f"QP solver failed: {sol['status']}")
    v = np.array(sol["x"]).ravel() * s
    z = np.array(sol["z"]).ravel() / row * obj
    if sol["status"] == "unknown":
        viol = np.max(G @ v - h, initial=0.0)
        if viol > 1e-6 * (1.0 + np.abs(h).max()):
            raise QPError(f"QP solver stalled with constraint violation {viol:g}")
    return v, z
