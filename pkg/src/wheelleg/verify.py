"""Verification suites: each checks an implementation against an independent oracle.

The oracles here deliberately share no code with the solvers they check:

* ``qp``          -- dense QPs against exhaustive active-set enumeration (KKT solves).
* ``hierarchy``   -- strict priorities: perturbing lower levels leaves higher-level
                     residuals untouched.
* ``foothold``    -- closed-form constant-twist foothold against RK4 unicycle integration.
* ``jacobians``   -- analytic point / COM / ZMP-row Jacobians against central differences.
* ``dynamics``    -- compiled CRBA / RNEA / kinematics against array reference versions.

Every suite returns a list of :class:`Check` records (worst error vs. tolerance).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from . import model as mdl
from .foothold import expected_foothold
from .hierarchy import TaskLevel, solve_hierarchy
from .qp import QuadProblem, solve_qp
from .zmp_planner import SPLINE_DIM, zmp_constraint


@dataclass(frozen=True)
class Check:
    name: str
    worst: float
    tol: float
    cases: int
    detail: str = ""

    @property
    def passed(self):
        return bool(np.isfinite(self.worst) and self.worst < self.tol)

    def line(self):
        flag = "PASS" if self.passed else "FAIL"
        extra = f" ({self.detail})" if self.detail else ""
        return f"[{flag}] {self.name}: worst {self.worst:.3e} < {self.tol:.1e} over {self.cases} cases{extra}"


# ----------------------------------------------------------------------------------------
# QP oracle
# ----------------------------------------------------------------------------------------

def random_qp(rng, n_max=8):
    """Strictly convex QP with a known feasible point (so it always has a solution)."""
    n = int(rng.integers(1, n_max + 1))
    G = rng.normal(size=(n, n))
    H = G @ G.T + 0.1 * np.eye(n)
    g = rng.normal(size=n)
    x0 = rng.normal(size=n)
    n_eq = int(rng.integers(0, min(2, n - 1) + 1)) if n > 1 else 0
    n_in = int(rng.integers(0, 9))
    C_E = rng.normal(size=(n_eq, n))
    C_I = rng.normal(size=(n_in, n))
    d_E = C_E @ x0
    d_I = C_I @ x0 + rng.uniform(0.0, 1.0, size=n_in)
    return QuadProblem(H, g, C_E, d_E, C_I, d_I)


def enumerate_qp(p: QuadProblem, tol=1e-9):
    """Minimum objective over every active set whose KKT point is primal feasible.

    For a strictly convex QP the optimum is the KKT point of its optimal active set, and any
    feasible candidate is an upper bound, so the minimum over feasible candidates is exact.
    """
    n = p.n
    best = np.inf
    x_best = None
    m = p.C_I.shape[0]
    for k in range(m + 1):
        for act in itertools.combinations(range(m), k):
            A = np.vstack([p.C_E, p.C_I[list(act)]])
            b = np.concatenate([p.d_E, p.d_I[list(act)]])
            K = np.block([[p.H, A.T], [A, np.zeros((len(b), len(b)))]])
            rhs = np.concatenate([-p.g, b])
            try:
                sol = np.linalg.solve(K, rhs)
            except np.linalg.LinAlgError:
                continue
            x = sol[:n]
            if not np.allclose(K @ sol, rhs, atol=1e-8):
                continue
            if m and np.max(p.C_I @ x - p.d_I) > tol:
                continue
            f = p.objective(x)
            if f < best:
                best, x_best = f, x
    return best, x_best


def check_qp(n_cases=100, seed=0):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_cases):
        p = random_qp(rng)
        f_ref, _ = enumerate_qp(p)
        res = solve_qp(p)
        worst = max(worst, abs(res.objective - f_ref) / max(1.0, abs(f_ref)))
    return [Check("qp objective vs active-set enumeration", worst, 1e-6, n_cases)]


# ----------------------------------------------------------------------------------------
# hierarchy strictness
# ----------------------------------------------------------------------------------------

def random_stack(rng, n=None):
    """Three levels with equality tasks and feasible inequalities on the first two."""
    n = int(rng.integers(6, 13)) if n is None else n
    x0 = rng.normal(size=n)
    levels = []
    for k, (n_eq, n_in) in enumerate([(int(rng.integers(1, 4)), int(rng.integers(0, 4))),
                                      (int(rng.integers(1, 5)), int(rng.integers(0, 4))),
                                      (n, 0)]):
        A = rng.normal(size=(n_eq, n))
        b = rng.normal(size=n_eq)
        D = rng.normal(size=(n_in, n))
        f = D @ x0 + rng.uniform(0.0, 0.5, size=n_in)
        levels.append(TaskLevel(A, b, D if n_in else None, f if n_in else None,
                                rng.uniform(0.5, 2.0, size=n_eq), priority=k + 1))
    return levels


def _level_cost(lv: TaskLevel, sol, k):
    return np.hypot(sol.eq_residuals[k], np.linalg.norm(lv.w_ineq * sol.ineq_slacks[k]) if len(lv.f) else 0.0)


def _perturbed(lv: TaskLevel, rng):
    has_in = len(lv.f) > 0
    return TaskLevel(lv.A + rng.normal(size=lv.A.shape), lv.b + rng.normal(size=lv.b.shape),
                     lv.D + 0.1 * rng.normal(size=lv.D.shape) if has_in else None,
                     lv.f + rng.uniform(0.0, 0.5, size=lv.f.shape) if has_in else None,
                     lv.w_eq, priority=lv.priority)


def check_hierarchy(n_cases=100, seed=0):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_cases):
        levels = random_stack(rng)
        base = solve_hierarchy(levels)
        c0 = [_level_cost(lv, base, k) for k, lv in enumerate(levels)]
        # perturb the lowest level: levels 1 and 2 must not move
        s3 = solve_hierarchy(levels[:2] + [_perturbed(levels[2], rng)])
        worst = max(worst, *(abs(_level_cost(levels[k], s3, k) - c0[k]) for k in (0, 1)))
        # perturb level 2: level 1 must not move
        s2 = solve_hierarchy([levels[0], _perturbed(levels[1], rng), levels[2]])
        worst = max(worst, abs(_level_cost(levels[0], s2, 0) - c0[0]))
    return [Check("hierarchy: higher-level residual change under lower-level perturbation", worst, 1e-9,
                  n_cases)]


# ----------------------------------------------------------------------------------------
# foothold oracle
# ----------------------------------------------------------------------------------------

def rk4_unicycle(p0, v_body, omega, tau, heading=0.0, steps=2000):
    """Integrate ``p' = Rz(psi) v, psi' = omega`` with classical RK4."""
    v_body = np.asarray(v_body, dtype=float)[:2]

    def f(y):
        c, s = np.cos(y[2]), np.sin(y[2])
        return np.array([c * v_body[0] - s * v_body[1], s * v_body[0] + c * v_body[1], omega])

    y = np.array([p0[0], p0[1], heading], dtype=float)
    h = tau / steps
    for _ in range(steps):
        k1 = f(y)
        k2 = f(y + 0.5 * h * k1)
        k3 = f(y + 0.5 * h * k2)
        k4 = f(y + h * k3)
        y = y + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    return np.array([y[0], y[1], p0[2]])


def check_foothold(n_cases=1000, seed=0, steps=400):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for i in range(n_cases):
        p0 = rng.uniform(-2, 2, size=3)
        v = rng.uniform(-2, 2, size=2)
        # include near-zero and exactly zero yaw rates
        w = 0.0 if i % 10 == 0 else rng.uniform(-2, 2) * (1e-7 if i % 10 == 1 else 1.0)
        tau = rng.uniform(0.05, 1.0)
        psi = rng.uniform(-np.pi, np.pi)
        ref = rk4_unicycle(p0, v, w, tau, psi, steps)
        got = expected_foothold(p0, [v[0], v[1], 0.0], [0.0, 0.0, w], tau, heading=psi)
        worst = max(worst, float(np.max(np.abs(got - ref))))
    return [Check("constant-twist foothold vs RK4 unicycle", worst, 1e-9, n_cases)]


# ----------------------------------------------------------------------------------------
# Jacobians
# ----------------------------------------------------------------------------------------

def random_state(model, rng, velocity_scale=1.0):
    q = rng.normal(size=4)
    q /= np.linalg.norm(q)
    qj = model.nominal_joint_positions + rng.uniform(-0.4, 0.4, size=mdl.N_JOINTS)
    return mdl.GeneralizedState(rng.uniform(-1, 1, size=3), q, qj,
                                velocity_scale * rng.normal(size=3), velocity_scale * rng.normal(size=3),
                                velocity_scale * rng.normal(size=mdl.N_JOINTS))


def _fd_columns(fun, state, h=1e-6):
    """Central differences of ``fun(state)`` along each generalized velocity direction."""
    cols = []
    for i in range(mdl.N_U):
        e = np.zeros(mdl.N_U)
        e[i] = 1.0
        fp = fun(mdl.integrate_configuration(state, e, h))
        fm = fun(mdl.integrate_configuration(state, -e, h))
        cols.append((fp - fm) / (2 * h))
    return np.column_stack(cols)


def check_jacobians(n_cases=100, seed=0, model=None):
    model = mdl.load_model(model)
    rng = np.random.default_rng(seed)
    w_point = w_com = w_zmp = 0.0
    for _ in range(n_cases):
        st = random_state(model, rng)
        kin = mdl.compute_kinematics(model, st)
        leg = int(rng.integers(0, mdl.N_LEGS))
        link = int(rng.integers(0, mdl.N_LINKS))
        p = kin.o[leg, link] + rng.uniform(-0.1, 0.1, size=3)
        local = kin.R[leg, link].T @ (p - kin.o[leg, link])
        J = mdl.point_jacobian(kin, leg, link, p)
        J_fd = _fd_columns(lambda s: mdl.body_point_position(model, s, leg, link, local), st)
        w_point = max(w_point, float(np.abs(J - J_fd).max()))

        Jc, _ = mdl.com_jacobian(model, st, kin)
        Jc_fd = _fd_columns(lambda s: mdl.com_state(model, s)[0], st)
        w_com = max(w_com, float(np.abs(Jc - Jc_fd).max()))

        alpha = rng.normal(size=SPLINE_DIM)
        alpha[12] += 0.4                                   # keep the COM above the ground
        s = rng.uniform(0.0, 0.3)
        edge = np.append(rng.normal(size=2), rng.normal())
        edge /= np.linalg.norm(edge[:2])
        g = np.array([0.0, 0.0, -9.81])
        _, grad = zmp_constraint(alpha, s, edge, g, safety=0.01)
        h = 1e-6
        fd = np.zeros(SPLINE_DIM)
        for i in range(SPLINE_DIM):
            e = np.zeros(SPLINE_DIM)
            e[i] = h
            fd[i] = (zmp_constraint(alpha + e, s, edge, g, 0.01)[0] - zmp_constraint(alpha - e, s, edge, g, 0.01)[0]) / (2 * h)
        w_zmp = max(w_zmp, float(np.abs(grad - fd).max()))
    return [Check("point Jacobian vs central differences", w_point, 1e-5, n_cases),
            Check("COM Jacobian vs central differences", w_com, 1e-5, n_cases),
            Check("ZMP constraint gradient vs central differences", w_zmp, 1e-5, n_cases)]


# ----------------------------------------------------------------------------------------
# dynamics
# ----------------------------------------------------------------------------------------

def check_dynamics(n_cases=20, seed=0, model=None):
    model = mdl.load_model(model)
    rng = np.random.default_rng(seed)
    w_M = w_h = w_sym = w_com = 0.0
    for _ in range(n_cases):
        st = random_state(model, rng)
        kin = mdl.compute_kinematics(model, st)
        M = mdl.mass_matrix(model, st, kin)
        udot = rng.normal(size=mdl.N_U)
        w_M = max(w_M, float(np.abs(M - mdl.mass_matrix_numpy(model, st, kin)).max()))
        tau = mdl.inverse_dynamics(model, st, udot, kin=kin)
        w_h = max(w_h, float(np.abs(tau - mdl.inverse_dynamics_numpy(model, st, udot, kin=kin)).max()))
        # RNEA with zero velocity and no gravity is M udot
        st0 = st.with_u(np.zeros(mdl.N_U))
        w_sym = max(w_sym, float(np.abs(mdl.inverse_dynamics(model, st0, udot, gravity=False) - M @ udot).max()))
        p, v, _ = mdl.com_state(model, st, kin)
        p_ref, v_ref, _ = mdl.com_state_numpy(model, st, kin)
        w_com = max(w_com, float(max(np.abs(p - p_ref).max(), np.abs(v - v_ref).max())))
    return [Check("mass matrix: compiled vs array reference", w_M, 1e-10, n_cases),
            Check("inverse dynamics: compiled vs array reference", w_h, 1e-9, n_cases),
            Check("inverse dynamics at rest equals M udot", w_sym, 1e-9, n_cases),
            Check("COM state: compiled vs array reference", w_com, 1e-12, n_cases)]


SUITES = {
    "qp": check_qp,
    "hierarchy": check_hierarchy,
    "foothold": check_foothold,
    "jacobians": check_jacobians,
    "dynamics": check_dynamics,
}


def run_suites(names=None):
    names = list(SUITES) if names is None else list(names)
    unknown = [n for n in names if n not in SUITES]
    if unknown:
        raise KeyError(f"unknown suite(s) {unknown}; available: {sorted(SUITES)}")
    out = []
    for name in names:
        out.extend(SUITES[name]())
    return out
