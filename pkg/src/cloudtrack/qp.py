"""Dense primal active-set solver for strictly convex quadratic programs.

Solves min 0.5 x^T H x + f^T x subject to G x <= h with H positive definite.
Small problems only (tens of variables); every working-set subproblem is an
exact KKT linear solve, so the returned multipliers certify optimality to
machine precision.  Infeasible problems come back with a per-row slack
report instead of a solution.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

__all__ = ["QpResult", "solve_qp"]

_MAX_ITER = 400


@dataclass
class QpResult:
    x: np.ndarray
    mu: np.ndarray  # one multiplier per constraint row, zero off the active set
    status: str  # "optimal" | "infeasible" | "max-iter"
    obj: float
    n_iter: int
    stationarity_residual: float
    complementarity_residual: float
    max_violation: float
    slack_report: np.ndarray = field(default=None)  # violations when infeasible


def _feasible_start(G: np.ndarray, h: np.ndarray, x0: np.ndarray, tol: float):
    """x0 if already feasible, else a phase-1 LP point; None if infeasible."""
    if G.shape[0] == 0 or np.all(G @ x0 <= h + tol):
        return x0, None
    n = x0.shape[0]
    # min t  s.t.  G x - t <= h, |x| bounded to keep the LP bounded
    c = np.zeros(n + 1)
    c[-1] = 1.0
    A_ub = np.hstack([G, -np.ones((G.shape[0], 1))])
    bounds = [(-1e9, 1e9)] * n + [(0.0, None)]
    res = linprog(c, A_ub=A_ub, b_ub=h, bounds=bounds, method="highs")
    if not res.success:
        return None, np.maximum(G @ x0 - h, 0.0)
    x = res.x[:n]
    t = res.x[-1]
    if t > 1e-7:
        return None, np.maximum(G @ x - h, 0.0)
    return x, None


def _kkt_solve(H, f, G_w, h_w):
    """Equality-constrained minimizer on the working set G_w x = h_w."""
    n = H.shape[0]
    m = 0 if G_w is None else G_w.shape[0]
    if m == 0:
        return np.linalg.solve(H, -f), np.empty(0)
    K = np.zeros((n + m, n + m))
    K[:n, :n] = H
    K[:n, n:] = G_w.T
    K[n:, :n] = G_w
    rhs = np.concatenate([-f, h_w])
    try:
        sol = np.linalg.solve(K, rhs)
    except np.linalg.LinAlgError:
        sol, *_ = np.linalg.lstsq(K, rhs, rcond=None)
    return sol[:n], sol[n:]


def solve_qp(
    H: np.ndarray,
    f: np.ndarray,
    G: np.ndarray | None = None,
    h: np.ndarray | None = None,
    x0: np.ndarray | None = None,
    tol: float = 1e-9,
) -> QpResult:
    H = np.asarray(H, dtype=float)
    f = np.asarray(f, dtype=float)
    n = f.shape[0]
    if G is None or h is None or len(h) == 0:
        G = np.zeros((0, n))
        h = np.zeros(0)
    G = np.asarray(G, dtype=float)
    h = np.asarray(h, dtype=float)

    def finish(x, mu, status, n_iter):
        g_vals = G @ x - h if G.shape[0] else np.zeros(0)
        grad = H @ x + f + (G.T @ mu if G.shape[0] else 0.0)
        return QpResult(
            x=x,
            mu=mu,
            status=status,
            obj=float(0.5 * x @ H @ x + f @ x),
            n_iter=n_iter,
            stationarity_residual=float(np.max(np.abs(grad))) if n else 0.0,
            complementarity_residual=float(np.max(np.abs(mu * g_vals)))
            if G.shape[0]
            else 0.0,
            max_violation=float(np.max(g_vals)) if G.shape[0] else 0.0,
        )

    # Unconstrained fast path.
    x_unc = np.linalg.solve(H, -f)
    if G.shape[0] == 0 or np.all(G @ x_unc <= h + tol):
        return finish(x_unc, np.zeros(G.shape[0]), "optimal", 0)

    start = np.zeros(n) if x0 is None else np.asarray(x0, dtype=float)
    x, violations = _feasible_start(G, h, start, tol)
    if x is None:
        return QpResult(
            x=start,
            mu=np.zeros(G.shape[0]),
            status="infeasible",
            obj=float("inf"),
            n_iter=0,
            stationarity_residual=float("inf"),
            complementarity_residual=float("inf"),
            max_violation=float(np.max(violations)),
            slack_report=violations,
        )

    work: list[int] = [int(i) for i in np.flatnonzero(np.abs(G @ x - h) <= tol)]
    for it in range(1, _MAX_ITER + 1):
        G_w = G[work] if work else None
        h_w = h[work] if work else np.empty(0)
        x_eq, mu_w = _kkt_solve(H, f, G_w, h_w)

        if np.max(np.abs(x_eq - x)) <= tol * (1.0 + np.max(np.abs(x))):
            # Stationary on the working set: optimal iff multipliers admissible.
            if len(work) == 0 or np.all(mu_w >= -tol):
                mu = np.zeros(G.shape[0])
                mu[work] = np.maximum(mu_w, 0.0)
                return finish(x_eq, mu, "optimal", it)
            drop = work[int(np.argmin(mu_w))]
            work.remove(drop)
            continue

        p = x_eq - x
        # Largest step along p keeping every idle constraint satisfied.
        idle = [i for i in range(G.shape[0]) if i not in work]
        alpha, blocker = 1.0, None
        if idle:
            Gp = G[idle] @ p
            slack = h[idle] - G[idle] @ x
            for row, gp, sl in zip(idle, Gp, slack):
                if gp > tol:
                    a = max(sl, 0.0) / gp
                    if a < alpha - 1e-14:
                        alpha, blocker = a, row
        x = x + alpha * p
        if blocker is not None:
            # Skip rows linearly dependent on the working set (degenerate).
            if work:
                resid = G[blocker] - G[work].T @ np.linalg.lstsq(
                    G[work].T, G[blocker], rcond=None
                )[0]
                if np.max(np.abs(resid)) <= 1e-10:
                    continue
            work.append(blocker)

    mu = np.zeros(G.shape[0])
    return finish(x, mu, "max-iter", _MAX_ITER)
