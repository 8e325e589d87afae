"""Goldfarb-Idnani dual active-set kernel (numba).

Solves  min 1/2 x'Gx + a'x  s.t.  N[i] x = b[i] (i < n_eq),  N[i] x >= b[i] (i >= n_eq)
given the lower Cholesky factor L of G. Constraint multipliers satisfy
G x + a = sum_i u_i N[i], with u_i >= 0 for inequalities.
"""

import numpy as np
from numba import njit

OK = 0
INFEASIBLE = 1
MAX_ITER = 2
DEPENDENT_EQUALITIES = 3


@njit(cache=True)
def _add_constraint(R, J, d, q, n, r_norm):
    # rotate d[q:] onto d[q] with Givens reflections, carrying J along
    for j in range(n - 1, q, -1):
        cc = d[j - 1]
        ss = d[j]
        h = np.hypot(cc, ss)
        if h == 0.0:
            continue
        d[j] = 0.0
        ss = ss / h
        cc = cc / h
        if cc < 0.0:
            cc = -cc
            ss = -ss
            d[j - 1] = -h
        else:
            d[j - 1] = h
        for k in range(n):
            t1 = J[k, j - 1]
            t2 = J[k, j]
            J[k, j - 1] = t1 * cc + t2 * ss
            J[k, j] = t1 * ss - t2 * cc
    for i in range(q + 1):
        R[i, q] = d[i]
    if abs(d[q]) <= 2.2e-16 * r_norm:
        return False, r_norm
    return True, max(r_norm, abs(d[q]))


@njit(cache=True)
def _delete_constraint(R, J, active, u, q, n, pos):
    # drop the active constraint at position ``pos`` and retriangularize R
    for i in range(pos, q - 1):
        active[i] = active[i + 1]
        u[i] = u[i + 1]
        for k in range(n):
            R[k, i] = R[k, i + 1]
    active[q - 1] = -1
    u[q - 1] = 0.0
    for k in range(n):
        R[k, q - 1] = 0.0
    q -= 1
    for j in range(pos, q):
        cc = R[j, j]
        ss = R[j + 1, j]
        h = np.hypot(cc, ss)
        if h == 0.0:
            continue
        cc = cc / h
        ss = ss / h
        R[j + 1, j] = 0.0
        if cc < 0.0:
            R[j, j] = -h
            cc = -cc
            ss = -ss
        else:
            R[j, j] = h
        for k in range(j + 1, q):
            t1 = R[j, k]
            t2 = R[j + 1, k]
            R[j, k] = t1 * cc + t2 * ss
            R[j + 1, k] = t1 * ss - t2 * cc
        for k in range(n):
            t1 = J[k, j]
            t2 = J[k, j + 1]
            J[k, j] = t1 * cc + t2 * ss
            J[k, j + 1] = t1 * ss - t2 * cc
    return q


@njit(cache=True)
def _step_vectors(R, J, np_, q, n, d, z, r):
    for i in range(n):
        s = 0.0
        for k in range(n):
            s += J[k, i] * np_[k]
        d[i] = s
    for i in range(n):
        s = 0.0
        for k in range(q, n):
            s += J[i, k] * d[k]
        z[i] = s
    for i in range(q - 1, -1, -1):
        s = d[i]
        for k in range(i + 1, q):
            s -= R[i, k] * r[k]
        r[i] = s / R[i, i]


@njit(cache=True)
def gi_solve(L, a, N, b, n_eq, max_changes, feas_tol):
    n = a.shape[0]
    m = N.shape[0]
    # J = L^{-T}
    Linv = np.zeros((n, n))
    for i in range(n):
        Linv[i, i] = 1.0 / L[i, i]
        for j in range(i):
            s = 0.0
            for k in range(j, i):
                s -= L[i, k] * Linv[k, j]
            Linv[i, j] = s / L[i, i]
    J = Linv.T.copy()
    R = np.zeros((n, n))
    x = -(J @ (J.T @ a))
    u = np.zeros(n + 1)
    active = -np.ones(n + 1, dtype=np.int64)
    is_active = np.zeros(m, dtype=np.bool_)
    d = np.zeros(n)
    z = np.zeros(n)
    r = np.zeros(n + 1)
    q = 0
    r_norm = 1.0
    changes = 0

    for i in range(n_eq):
        np_ = N[i]
        _step_vectors(R, J, np_, q, n, d, z, r)
        zn = 0.0
        for k in range(n):
            zn += z[k] * np_[k]
        if abs(zn) <= 1e-14 * (1.0 + np.sqrt(np_ @ np_)):
            return x, active, u, q, DEPENDENT_EQUALITIES, changes
        t2 = (b[i] - np_ @ x) / zn
        for k in range(n):
            x[k] += t2 * z[k]
        for k in range(q):
            u[k] -= t2 * r[k]
        u[q] = t2
        active[q] = i
        is_active[i] = True
        ok, r_norm = _add_constraint(R, J, d, q, n, r_norm)
        if not ok:
            return x, active, u, q, DEPENDENT_EQUALITIES, changes
        q += 1

    while True:
        # most violated inactive inequality
        p = -1
        s_min = 0.0
        for i in range(n_eq, m):
            if is_active[i]:
                continue
            s = N[i] @ x - b[i]
            tol = feas_tol * (1.0 + abs(b[i]))
            if s < -tol and s < s_min:
                s_min = s
                p = i
        if p < 0:
            return x, active, u, q, OK, changes
        np_ = N[p]
        s_p = s_min
        u_p = 0.0
        while True:
            _step_vectors(R, J, np_, q, n, d, z, r)
            t1 = np.inf
            pos = -1
            for j in range(n_eq, q):
                if r[j] > 0.0:
                    ratio = u[j] / r[j]
                    if ratio < t1:
                        t1 = ratio
                        pos = j
            zz = z @ z
            zn = z @ np_
            # primal step only if z is not numerically orthogonal to the new constraint normal
            if zz > 1e-28 and zn > 1e-14 * np.sqrt(zz * (np_ @ np_)):
                t2 = -s_p / zn
            else:
                t2 = np.inf
            if t1 == np.inf and t2 == np.inf:
                return x, active, u, q, INFEASIBLE, changes
            changes += 1
            if changes > max_changes:
                return x, active, u, q, MAX_ITER, changes
            if t2 == np.inf:
                for k in range(q):
                    u[k] -= t1 * r[k]
                u_p += t1
                is_active[active[pos]] = False
                q = _delete_constraint(R, J, active, u, q, n, pos)
                continue
            t = min(t1, t2)
            for k in range(n):
                x[k] += t * z[k]
            for k in range(q):
                u[k] -= t * r[k]
            u_p += t
            s_p = np_ @ x - b[p]
            if t == t2:
                u[q] = u_p
                active[q] = p
                is_active[p] = True
                ok, r_norm = _add_constraint(R, J, d, q, n, r_norm)
                if not ok:
                    # numerically dependent on the active set: accept x and stop adding it
                    active[q] = -1
                    u[q] = 0.0
                    is_active[p] = True
                else:
                    q += 1
                break
            is_active[active[pos]] = False
            q = _delete_constraint(R, J, active, u, q, n, pos)
