"""Strict-priority cascade of weighted least-squares tasks with inequalities.

Each level is solved in the null space of the equality rows of all higher levels; the
inequalities of higher levels stay in force with their optimal slacks frozen.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .qp import QPError, QPInfeasibleError, QuadProblem, solve_qp

REGULARIZATION = 1e-12
RANK_TOL = 1e-9


class HierarchyInfeasibleError(RuntimeError):
    pass


@dataclass(eq=False)
class TaskLevel:
    """One priority level: ``W_eq (A x - b) = 0`` and ``W_ineq (D x - f) <= 0``."""
    A: np.ndarray | None = None
    b: np.ndarray | None = None
    D: np.ndarray | None = None
    f: np.ndarray | None = None
    w_eq: np.ndarray | None = None     # diagonal of W_eq
    w_ineq: np.ndarray | None = None   # diagonal of W_ineq
    priority: int = 1
    names: list = field(default_factory=list)   # (name, first row, n rows) of equality blocks

    def __post_init__(self):
        n = 0
        for M in (self.A, self.D):
            if M is not None and np.size(M):
                n = np.shape(M)[1]
        self.A, self.b = _block(self.A, self.b, n)
        self.D, self.f = _block(self.D, self.f, n)
        self.w_eq = _weights(self.w_eq, len(self.b))
        self.w_ineq = _weights(self.w_ineq, len(self.f))

    @property
    def n(self):
        return max(self.A.shape[1], self.D.shape[1])

    def weighted_residual(self, x):
        if len(self.b) == 0:
            return 0.0
        return float(np.linalg.norm(self.w_eq * (self.A @ x - self.b)))


def _weights(w, m):
    if w is None:
        return np.ones(m)
    w = np.asarray(w, dtype=float)
    w = np.full(m, float(w)) if w.ndim == 0 else w.copy()
    if w.shape != (m,):
        raise ValueError("weight vector does not match the task rows")
    if m and w.min() <= 0:
        raise ValueError("task weights must be positive")
    return w


def _block(M, v, n):
    if M is None or np.size(M) == 0:
        return np.zeros((0, n)), np.zeros(0)
    M = np.asarray(M, dtype=float)
    if M.ndim == 1:
        M = M[None, :]
    v = np.asarray(v, dtype=float).reshape(-1)
    if M.shape[0] != v.shape[0]:
        raise ValueError("task row dimensions do not match")
    return M, v


def stack_tasks(tasks, priority=1) -> TaskLevel:
    """Merge several ``TaskLevel`` blocks into one level (rows in the given order)."""
    A = [t.A for t in tasks if len(t.b)]
    D = [t.D for t in tasks if len(t.f)]
    names = []
    row = 0
    for t in tasks:
        for name, r0, nr in (t.names or ([("", 0, len(t.b))] if len(t.b) else [])):
            names.append((name, row + r0, nr))
        row += len(t.b)
    return TaskLevel(
        np.vstack(A) if A else None, np.concatenate([t.b for t in tasks if len(t.b)]) if A else None,
        np.vstack(D) if D else None, np.concatenate([t.f for t in tasks if len(t.f)]) if D else None,
        np.concatenate([t.w_eq for t in tasks if len(t.b)]) if A else None,
        np.concatenate([t.w_ineq for t in tasks if len(t.f)]) if D else None,
        priority, names,
    )


@dataclass(eq=False)
class HierarchySolution:
    x: np.ndarray
    eq_residuals: list          # ||W_eq (A x - b)|| per level
    ineq_slacks: list           # optimal slacks per level
    active_sets: list           # active inequality rows (global row index) per level


def _level_hessian(Az, r):
    """``Az^T Az`` plus ``eps`` on its null space only, so the regularisation never biases
    the achievable task residual; also returns a basis of that null space."""
    if Az.shape[0] == 0:
        return REGULARIZATION * np.eye(r), np.eye(r)
    _, s, Vt = np.linalg.svd(Az)
    rank = int(np.sum(s > RANK_TOL * max(1.0, s[0]))) if s.size else 0
    Vr, Vn = Vt[:rank].T, Vt[rank:].T
    eps = REGULARIZATION * max(1.0, s[0] ** 2 if s.size else 1.0)
    H = (Vr * s[:rank] ** 2) @ Vr.T + eps * (Vn @ Vn.T)
    return 0.5 * (H + H.T), Vn


def solve_hierarchy(levels, n=None) -> HierarchySolution:
    """Lexicographic minimization over an ordered list of ``TaskLevel`` (highest priority first)."""
    if not levels:
        raise ValueError("need at least one task level")
    n = levels[0].n if n is None else n
    if any(lv.n not in (0, n) for lv in levels):
        raise ValueError("task levels have inconsistent variable dimensions")
    x = np.zeros(n)
    Z = np.eye(n)
    D_all = np.zeros((0, n))
    f_all = np.zeros(0)
    slacks, active_sets = [], []

    for idx, lv in enumerate(levels):
        r = Z.shape[1]
        Aw = lv.w_eq[:, None] * lv.A if len(lv.b) else np.zeros((0, n))
        bw = lv.w_eq * lv.b if len(lv.b) else np.zeros(0)
        Az = Aw @ Z
        res = bw - Aw @ x
        m = len(lv.f)
        if r == 0:
            v = np.maximum(lv.D @ x - lv.f, 0.0) if m else np.zeros(0)
            slacks.append(v)
            active_sets.append(())
            D_all = np.vstack([D_all, lv.D])
            f_all = np.concatenate([f_all, lv.f + v])
            continue
        H, Z_next = _level_hessian(Az, r)
        g = -Az.T @ res
        C_prev = D_all @ Z
        # x satisfies the frozen rows by construction; clip round-off so z = 0 stays feasible and
        # drop rows that no longer depend on the remaining null-space coordinates
        d_prev = np.maximum(f_all - D_all @ x, 0.0)
        kept = np.arange(len(d_prev))
        if len(d_prev):
            kept = np.flatnonzero(np.abs(C_prev).max(axis=1) > RANK_TOL * max(1.0, np.abs(D_all).max()))
            C_prev, d_prev = C_prev[kept], d_prev[kept]
        try:
            z, v, act = _solve_level(H, g, C_prev, d_prev, lv, x, Z, Az, res)
            act = tuple(int(kept[i]) if i < len(kept) else int(i - len(kept) + len(f_all)) for i in act)
        except QPError as exc:
            if idx == 0:
                raise HierarchyInfeasibleError(f"priority-1 level could not be solved: {exc}") from exc
            raise
        x = x + Z @ z
        slacks.append(v)
        active_sets.append(act)
        D_all = np.vstack([D_all, lv.D])
        f_all = np.concatenate([f_all, lv.f + v])
        if len(lv.b):
            Z = Z @ Z_next

    residuals = [lv.weighted_residual(x) for lv in levels]
    return HierarchySolution(x, residuals, slacks, active_sets)


def _solve_level(H, g, C_prev, d_prev, lv, x, Z, Az, res):
    m = len(lv.f)
    n_prev = C_prev.shape[0]
    if m == 0:
        sol = solve_qp(QuadProblem(H, g, C_I=C_prev, d_I=d_prev))
        return sol.x, np.zeros(0), sol.active_set
    Dz = lv.D @ Z
    fd = lv.f - lv.D @ x
    # Hard inequalities first: exact whenever they leave this level's equality residual at the
    # value reachable under the higher-priority constraints alone.
    try:
        sol = solve_qp(QuadProblem(H, g, C_I=np.vstack([C_prev, Dz]), d_I=np.concatenate([d_prev, fd])))
        if len(res) == 0:
            return sol.x, np.zeros(m), sol.active_set
        ref = solve_qp(QuadProblem(H, g, C_I=C_prev, d_I=d_prev)).x if n_prev else np.linalg.solve(H, -g)
        r_hard = np.linalg.norm(Az @ sol.x - res)
        r_ref = np.linalg.norm(Az @ ref - res)
        if r_hard <= r_ref + 1e-9 * max(1.0, np.linalg.norm(res)):
            return sol.x, np.zeros(m), sol.active_set
    except QPInfeasibleError:
        pass
    r = H.shape[0]
    w2 = lv.w_ineq ** 2
    Hs = np.zeros((r + m, r + m))
    Hs[:r, :r] = H
    Hs[r:, r:] = np.diag(w2) + REGULARIZATION * np.eye(m)
    gs = np.concatenate([g, np.zeros(m)])
    C = np.zeros((n_prev + m, r + m))
    C[:n_prev, :r] = C_prev
    C[n_prev:, :r] = Dz
    C[n_prev:, r:] = -np.eye(m)
    sol = solve_qp(QuadProblem(Hs, gs, C_I=C, d_I=np.concatenate([d_prev, fd])))
    z = sol.x[:r]
    v = np.maximum(Dz @ z - fd, 0.0)
    return z, v, sol.active_set
