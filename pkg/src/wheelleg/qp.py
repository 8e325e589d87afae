"""Dense convex QP solver (Goldfarb-Idnani dual active set)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _gi

REGULARIZATION = 1e-8
MAX_ACTIVE_SET_CHANGES = 200


class QPError(RuntimeError):
    pass


class QPInfeasibleError(QPError):
    pass


class QPMaxIterError(QPError):
    def __init__(self, msg, x=None, active_set=None):
        super().__init__(msg)
        self.x = x
        self.active_set = active_set


@dataclass(eq=False)
class QuadProblem:
    """min 1/2 x'Hx + g'x  s.t.  C_E x = d_E,  C_I x <= d_I."""
    H: np.ndarray
    g: np.ndarray
    C_E: np.ndarray | None = None
    d_E: np.ndarray | None = None
    C_I: np.ndarray | None = None
    d_I: np.ndarray | None = None

    def __post_init__(self):
        self.H = np.asarray(self.H, dtype=float)
        self.g = np.asarray(self.g, dtype=float)
        n = self.g.shape[0]
        if self.H.shape != (n, n):
            raise ValueError("Hessian / gradient dimension mismatch")
        if np.abs(self.H - self.H.T).max(initial=0.0) > 1e-12 * max(1.0, np.abs(self.H).max(initial=0.0)):
            raise ValueError("Hessian must be symmetric")
        self.C_E, self.d_E = _rows(self.C_E, self.d_E, n)
        self.C_I, self.d_I = _rows(self.C_I, self.d_I, n)

    @property
    def n(self):
        return self.g.shape[0]

    def objective(self, x):
        return 0.5 * x @ self.H @ x + self.g @ x


def _rows(C, d, n):
    if C is None or len(C) == 0:
        return np.zeros((0, n)), np.zeros(0)
    C = np.atleast_2d(np.asarray(C, dtype=float))
    d = np.atleast_1d(np.asarray(d, dtype=float))
    if C.shape != (d.shape[0], n):
        raise ValueError("constraint dimension mismatch")
    return C, d


@dataclass(eq=False)
class QPResult:
    x: np.ndarray
    objective: float
    active_set: tuple            # indices into the inequality rows that are active
    multipliers_eq: np.ndarray
    multipliers_ineq: np.ndarray  # >= 0, one per inequality row
    iterations: int

    def kkt_residuals(self, problem: QuadProblem):
        """(stationarity, primal infeasibility, complementarity), each an infinity norm."""
        x = self.x
        grad = problem.H @ x + problem.g + problem.C_E.T @ self.multipliers_eq + problem.C_I.T @ self.multipliers_ineq
        viol_e = np.abs(problem.C_E @ x - problem.d_E).max(initial=0.0)
        viol_i = np.maximum(problem.C_I @ x - problem.d_I, 0.0).max(initial=0.0)
        comp = np.abs(self.multipliers_ineq * (problem.C_I @ x - problem.d_I)).max(initial=0.0)
        return np.abs(grad).max(initial=0.0), max(viol_e, viol_i), comp


def _cholesky(H):
    try:
        return np.linalg.cholesky(H), 0.0
    except np.linalg.LinAlgError:
        eps = REGULARIZATION * max(1.0, np.abs(H).max(initial=0.0))
        n = H.shape[0]
        for _ in range(12):
            try:
                return np.linalg.cholesky(H + eps * np.eye(n)), eps
            except np.linalg.LinAlgError:
                eps *= 10.0
        raise QPError("Hessian is not positive semidefinite")


def solve_qp(problem: QuadProblem, max_changes: int = MAX_ACTIVE_SET_CHANGES, feas_tol: float = 1e-12) -> QPResult:
    """Solve a dense convex QP.

    Raises QPInfeasibleError when the constraints admit no solution and QPMaxIterError
    when the active set changes more than ``max_changes`` times.
    """
    n = problem.n
    L, _ = _cholesky(problem.H)
    n_eq = problem.C_E.shape[0]
    N = np.vstack([problem.C_E, -problem.C_I])
    b = np.concatenate([problem.d_E, -problem.d_I])
    x, active, u, q, status, changes = _gi.gi_solve(L, problem.g, np.ascontiguousarray(N), b, n_eq,
                                                    max_changes, feas_tol)
    if status == _gi.INFEASIBLE:
        raise QPInfeasibleError("constraints are infeasible")
    if status == _gi.DEPENDENT_EQUALITIES:
        raise QPInfeasibleError("equality constraints are linearly dependent or inconsistent")
    if status == _gi.MAX_ITER:
        act = tuple(int(i) - n_eq for i in active[:q] if i >= n_eq)
        raise QPMaxIterError(f"active-set changes exceeded {max_changes} (n={n}, active={len(act)})",
                             x=x.copy(), active_set=act)
    mu_e = np.zeros(n_eq)
    mu_i = np.zeros(problem.C_I.shape[0])
    for k in range(q):
        i = int(active[k])
        if i < n_eq:
            mu_e[i] = -u[k]
        else:
            mu_i[i - n_eq] = u[k]
    act = tuple(sorted(int(i) - n_eq for i in active[:q] if i >= n_eq))
    return QPResult(x.copy(), float(problem.objective(x)), act, mu_e, mu_i, int(changes))
