"""Receding-horizon COM planning with quintic splines and a ZMP support criterion.

All planning happens in a terrain-aligned plan frame P (z along the terrain normal,
x along the heading, origin on the terrain below the footprint centre), so the ZMP lives
in the plane ``z = 0`` and the support-polygon edges are 2-D lines ``p x + q y + r >= 0``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import ConvexHull, QhullError

from .foothold import expected_foothold, twist_displacement
from .gait import ContactSchedule
from .qp import QPError, QPInfeasibleError, QuadProblem, solve_qp
from .rotations import cross
from .terrain import PlanFrame

N_COEF = 6
N_AXES = 3
SPLINE_DIM = N_COEF * N_AXES


class ZMPSingularityError(ValueError):
    pass


class UnsupportedPolygonError(ValueError):
    pass


class PlanningError(RuntimeError):
    pass


@dataclass(frozen=True)
class PlannerConfig:
    samples_per_spline: int = 5
    a_min: float = 1.0
    w_line: float = 0.04
    horizon_drive: float = 1.0
    horizon_stride_factor: float = 1.2
    min_phase: float = 0.05
    soft_window: float = 0.1
    zmp_safety: float = 0.002       # margin (m) demanded of the linearised hard ZMP rows
    w_acc: float = 1.0
    w_path: float = 20.0
    w_previous: float = 1.0
    w_initial: float = 1e4
    w_final: float = 1e2
    w_overshoot: float = 1e3
    w_soft_zmp: float = 1e4
    merit_penalty: float = 1e3
    max_iterations: int = 3
    path_leash: float = 0.15        # max distance (m) the reference path origin may lead the COM
    nominal_height: float | None = None

    @classmethod
    def from_dict(cls, d):
        d = dict(d or {})
        kw = {}
        for k, v in d.items():
            if k not in cls.__dataclass_fields__:
                continue
            if k in ("samples_per_spline", "max_iterations"):
                kw[k] = int(v)
            else:
                kw[k] = None if v is None else float(v)
        return cls(**kw)


@dataclass(frozen=True)
class GravitoInertial:
    mass: float
    gravity: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, -9.81]))
    angular_momentum_rate: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        if np.any(np.asarray(self.angular_momentum_rate) != 0):
            raise ValueError("the angular momentum rate is assumed to be zero")


def zmp_position(p_com, a_com, normal, gi: GravitoInertial):
    """``n x m_O / (n . f)`` for the gravito-inertial wrench about the origin."""
    p = np.asarray(p_com, dtype=float)
    n = np.asarray(normal, dtype=float)
    f = gi.mass * (np.asarray(gi.gravity) - np.asarray(a_com))
    m_O = cross(p, f)
    den = n @ f
    if abs(den) <= 1e-6 * gi.mass * np.linalg.norm(gi.gravity):
        raise ZMPSingularityError("gravito-inertial force is parallel to the ground plane")
    return cross(n, m_O) / den


# ----------------------------------------------------------------------------------------
# support polygons
# ----------------------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class SupportPolygonPhase:
    duration: float
    edges: np.ndarray                 # (E, 3) rows [p, q, r], p^2 + q^2 = 1, interior >= 0
    edges_end: np.ndarray | None = None   # driving: edges at the end of the phase
    flags: tuple = (True, True, True, True)
    vertices: np.ndarray | None = None

    def edges_at(self, s):
        """Edge coefficients at local time ``s`` of the phase."""
        if self.edges_end is None:
            return self.edges
        return deformed_edge(self.edges, self.edges_end, s, 0.0, self.duration)

    def margin(self, xy, s=0.0):
        E = self.edges_at(s)
        return float(np.min(E[:, :2] @ np.asarray(xy)[:2] + E[:, 2]))


def _normalize_edges(E):
    E = np.atleast_2d(np.asarray(E, dtype=float))
    return E / np.linalg.norm(E[:, :2], axis=1, keepdims=True)


def deformed_edge(d0, d_tau, t, t_bar, tau):
    """Edge coefficients moving linearly from ``d0`` at ``t_bar`` to ``d_tau`` at ``t_bar + tau``,
    renormalised to a unit line normal."""
    lam = (t - t_bar) / tau
    d = (1.0 - lam) * np.asarray(d0, dtype=float) + lam * np.asarray(d_tau, dtype=float)
    return _normalize_edges(d) if np.ndim(d) > 1 else _normalize_edges(d)[0]


def hull_order(points_xy):
    """Counter-clockwise order of the convex-hull vertices (indices into ``points_xy``)."""
    P = np.asarray(points_xy, dtype=float)
    if len(P) < 3:
        return list(range(len(P)))
    try:
        hull = ConvexHull(P)
    except QhullError:
        return None
    return list(hull.vertices)          # counter-clockwise in 2-D


def edges_from_order(points_xy, order):
    P = np.asarray(points_xy, dtype=float)
    E = []
    for a, b in zip(order, order[1:] + order[:1]):
        e = P[b] - P[a]
        nrm = np.array([-e[1], e[0]])
        nrm /= np.linalg.norm(nrm)
        E.append([nrm[0], nrm[1], -nrm @ P[a]])
    return np.array(E)


def line_band_edges(a, b, width):
    """Two opposing edges bounding a band of total ``width`` around the segment a-b."""
    a = np.asarray(a, dtype=float)[:2]
    b = np.asarray(b, dtype=float)[:2]
    e = b - a
    if np.linalg.norm(e) < 1e-9:
        raise UnsupportedPolygonError("coincident stance footholds")
    m = np.array([-e[1], e[0]]) / np.linalg.norm(e)
    h = 0.5 * width
    return np.array([[m[0], m[1], -m @ a + h], [-m[0], -m[1], m @ a + h]])


def support_edges(points_xy, w_line):
    P = np.asarray(points_xy, dtype=float)[:, :2]
    if len(P) < 2:
        raise UnsupportedPolygonError("at least two stance legs are required")
    if len(P) == 2:
        return line_band_edges(P[0], P[1], w_line), None
    order = hull_order(P)
    if order is None:
        # collinear stance: band around the two extreme points
        c = P.mean(axis=0)
        d = P - c
        _, _, Vt = np.linalg.svd(d)
        proj = d @ Vt[0]
        return line_band_edges(P[np.argmin(proj)], P[np.argmax(proj)], w_line), None
    return edges_from_order(P, order), order


def build_polygon_sequence(schedule: ContactSchedule, stance_points, frame: PlanFrame, w_line,
                           driving_prediction=None):
    """Support polygons in plan-frame coordinates.

    ``stance_points(k)`` returns a dict leg -> world position of the stance legs in phase ``k``
    (walking).  For driving pass ``driving_prediction = (current, predicted)``, two dicts
    leg -> world position at the start and end of the single phase.
    """
    phases = []
    if driving_prediction is not None:
        cur, pred = driving_prediction
        legs = sorted(cur)
        P0 = np.array([frame.to_local(cur[l])[:2] for l in legs])
        P1 = np.array([frame.to_local(pred[l])[:2] for l in legs])
        d0, order = support_edges(P0, w_line)
        if order is None:
            d1, _ = support_edges(P1, w_line)
        else:
            d1 = edges_from_order(P1, order)
            if np.any(d1[:, :2] @ P1.mean(axis=0) + d1[:, 2] < 0):
                raise UnsupportedPolygonError("predicted support polygon changed orientation")
        flags = schedule.phases[0][0]
        return [SupportPolygonPhase(schedule.horizon, d0, d1, flags, P0)]
    for k, (flags, dur) in enumerate(schedule.phases):
        pts = stance_points(k)
        legs = sorted(pts)
        P = np.array([frame.to_local(pts[l])[:2] for l in legs])
        E, _ = support_edges(P, w_line)
        phases.append(SupportPolygonPhase(dur, E, None, flags, P))
    return phases


# ----------------------------------------------------------------------------------------
# quintic spline basis
# ----------------------------------------------------------------------------------------

def basis(s):
    """Rows T, T', T'' of the monomial quintic basis at local time ``s``."""
    s = float(s)
    s2, s3, s4 = s * s, s ** 3, s ** 4
    return (np.array([1.0, s, s2, s3, s4, s4 * s]),
            np.array([0.0, 1.0, 2 * s, 3 * s2, 4 * s3, 5 * s4]),
            np.array([0.0, 0.0, 2.0, 6 * s, 12 * s2, 20 * s3]))


def basis_batch(s):
    s = np.asarray(s, dtype=float)[:, None]
    k = np.arange(N_COEF)
    T0 = s ** k
    T1 = np.where(k >= 1, k * s ** np.maximum(k - 1, 0), 0.0)
    T2 = np.where(k >= 2, k * (k - 1) * s ** np.maximum(k - 2, 0), 0.0)
    return T0, T1, T2


def acceleration_gram(T):
    """``int_0^T T''(s)^T T''(s) ds``."""
    Q = np.zeros((N_COEF, N_COEF))
    for i in range(2, N_COEF):
        for j in range(2, N_COEF):
            p = i + j - 3
            Q[i, j] = i * (i - 1) * j * (j - 1) * T ** p / p
    return Q


@dataclass(frozen=True, eq=False)
class MotionPlan:
    coefficients: np.ndarray          # (K, 3, 6) monomial coefficients in the plan frame
    durations: np.ndarray             # (K,)
    frame: PlanFrame
    t0: float
    horizon: float
    polygons: tuple = ()
    previous: np.ndarray | None = None    # coefficients of the plan this one replaced
    accepted: bool = True
    degraded: bool = False
    min_hard_margin: float = math.inf
    min_push: float = math.inf
    soft_slack: float = 0.0
    iterations: int = 0
    merit_history: tuple = ()
    samples: tuple = ()               # (spline index, local time, hard flag)

    def __post_init__(self):
        if abs(float(np.sum(self.durations)) - self.horizon) > 1e-9:
            raise ValueError("spline durations must sum to the horizon")

    @property
    def alpha(self):
        return self.coefficients.reshape(-1)

    @property
    def starts(self):
        return np.concatenate([[0.0], np.cumsum(self.durations)[:-1]])

    def locate(self, t_rel):
        k = int(np.searchsorted(np.cumsum(self.durations), t_rel, side="right"))
        k = min(k, len(self.durations) - 1)
        return k, t_rel - self.starts[k]

    def junction_jumps(self):
        """Max position/velocity/acceleration jump over all spline junctions."""
        worst = 0.0
        for k in range(len(self.durations) - 1):
            left = basis(self.durations[k])
            right = basis(0.0)
            for a, b in zip(left, right):
                worst = max(worst, float(np.abs(self.coefficients[k] @ a - self.coefficients[k + 1] @ b).max()))
        return worst

    def evaluate_local(self, t_rel, extrapolate=False):
        if not extrapolate and not (-1e-9 <= t_rel <= self.horizon + 1e-9):
            raise ValueError(f"time {t_rel:.6f} outside the plan horizon [0, {self.horizon:.6f}]")
        if t_rel > self.horizon:
            p, v, _ = self.evaluate_local(self.horizon)
            return p + v * (t_rel - self.horizon), v, np.zeros(3)
        if t_rel < 0:
            p, v, _ = self.evaluate_local(0.0)
            return p + v * t_rel, v, np.zeros(3)
        k, s = self.locate(t_rel)
        T0, T1, T2 = basis(s)
        C = self.coefficients[k]
        return C @ T0, C @ T1, C @ T2


def _positions_local(plan: MotionPlan, t_rel):
    """Plan-frame positions at an array of relative times (linear extrapolation outside)."""
    t_rel = np.asarray(t_rel, dtype=float)
    ends = np.cumsum(plan.durations)
    tc = np.clip(t_rel, 0.0, plan.horizon)
    k = np.minimum(np.searchsorted(ends, tc, side="right"), len(ends) - 1)
    s = tc - (ends[k] - plan.durations[k])
    T0, T1, _ = basis_batch(s)
    C = plan.coefficients[k]
    p = np.einsum("mai,mi->ma", C, T0)
    v = np.einsum("mai,mi->ma", C, T1)
    return p + v * (t_rel - tc)[:, None]


def evaluate_plan(plan: MotionPlan, t, frame="world", extrapolate=False):
    """COM position, velocity and acceleration at absolute time ``t``."""
    p, v, a = plan.evaluate_local(t - plan.t0, extrapolate=extrapolate)
    if frame == "plan":
        return p, v, a
    F = plan.frame
    return F.to_world(p), F.vec_to_world(v), F.vec_to_world(a)


def hermite_fit(p0, v0, a0, p1, v1, a1, T):
    """(3, 6) quintic coefficients with given end states."""
    from .foothold import _quintic_coeffs
    return _quintic_coeffs(p0, v0, a0, p1, v1, a1, T).T


# ----------------------------------------------------------------------------------------
# ZMP constraint rows
# ----------------------------------------------------------------------------------------

def zmp_constraint(alpha_k, s, edge, g_plan, safety=0.0):
    """Value and gradient (w.r.t. the 18 coefficients of one spline) of the ZMP row

    ``c = p (x a_z - z a_x) + q (y a_z - z a_y) + (r - safety) a_z``,  ``a = p'' - g``,

    which equals ``a_z`` times the signed edge distance of the ZMP minus the safety margin.
    """
    C = np.asarray(alpha_k, dtype=float).reshape(N_AXES, N_COEF)
    T0, _, T2 = basis(s)
    p = C @ T0
    a = C @ T2 - g_plan
    pe, qe, re = edge
    re = re - safety
    c = pe * (p[0] * a[2] - p[2] * a[0]) + qe * (p[1] * a[2] - p[2] * a[1]) + re * a[2]
    grad = np.zeros((N_AXES, N_COEF))
    grad[0] = pe * (a[2] * T0 - p[2] * T2)
    grad[1] = qe * (a[2] * T0 - p[2] * T2)
    grad[2] = pe * (p[0] * T2 - a[0] * T0) + qe * (p[1] * T2 - a[1] * T0) + re * T2
    return c, grad.reshape(-1)


def _zmp_rows(alpha, rows, g_plan, safety):
    """Vectorised ``zmp_constraint`` over sample rows (k, T0, T2, edge, safety)."""
    K = alpha.reshape(-1, N_AXES, N_COEF)
    k_idx, T0, T2, E, saf = rows
    C = K[k_idx]                                   # (m, 3, 6)
    p = np.einsum("mai,mi->ma", C, T0)
    a = np.einsum("mai,mi->ma", C, T2) - g_plan
    pe, qe, re = E[:, 0], E[:, 1], E[:, 2] - saf
    c = pe * (p[:, 0] * a[:, 2] - p[:, 2] * a[:, 0]) + qe * (p[:, 1] * a[:, 2] - p[:, 2] * a[:, 1]) + re * a[:, 2]
    m = len(c)
    G = np.zeros((m, N_AXES, N_COEF))
    G[:, 0] = pe[:, None] * (a[:, 2:3] * T0 - p[:, 2:3] * T2)
    G[:, 1] = qe[:, None] * (a[:, 2:3] * T0 - p[:, 2:3] * T2)
    G[:, 2] = (pe[:, None] * (p[:, 0:1] * T2 - a[:, 0:1] * T0) + qe[:, None] * (p[:, 1:2] * T2 - a[:, 1:2] * T0)
               + re[:, None] * T2)
    J = np.zeros((m, alpha.size))
    for i in range(m):
        k = k_idx[i]
        J[i, k * SPLINE_DIM:(k + 1) * SPLINE_DIM] = G[i].reshape(-1)
    return c, J


def _zmp_margins(alpha, rows, g_plan):
    """Signed distance of the ZMP to each sampled edge (no safety margin)."""
    K = alpha.reshape(-1, N_AXES, N_COEF)
    k_idx, T0, T2, E, _ = rows
    C = K[k_idx]
    p = np.einsum("mai,mi->ma", C, T0)
    a = np.einsum("mai,mi->ma", C, T2) - g_plan
    zmp = p[:, :2] - p[:, 2:3] * a[:, :2] / a[:, 2:3]
    return E[:, 0] * zmp[:, 0] + E[:, 1] * zmp[:, 1] + E[:, 2]


# ----------------------------------------------------------------------------------------
# motion optimisation
# ----------------------------------------------------------------------------------------

@dataclass(frozen=True)
class PlannerInput:
    """Measured COM state and commands, in world coordinates."""
    t: float
    com_position: np.ndarray
    com_velocity: np.ndarray
    com_acceleration: np.ndarray
    v_ref: np.ndarray               # heading frame
    omega_ref: np.ndarray
    gravity: np.ndarray
    nominal_height: float
    path_origin: np.ndarray | None = None   # start of the reference path (default: measured COM)


def _unit_heading_path(p0_xy, v_ref, omega_z, t):
    return expected_foothold(np.array([p0_xy[0], p0_xy[1], 0.0]), v_ref, [0, 0, omega_z], t)[:2]


def _heading_path_batch(p0_xy, v_ref, omega_z, t):
    """``_unit_heading_path`` at an array of times."""
    return np.asarray(p0_xy, dtype=float)[:2] + twist_displacement(v_ref, omega_z, t)


def _path_velocity(v_ref, omega_z, t):
    c, s = math.cos(omega_z * t), math.sin(omega_z * t)
    return np.array([c * v_ref[0] - s * v_ref[1], s * v_ref[0] + c * v_ref[1]])


def solve_motion_plan(inp: PlannerInput, polygons, frame: PlanFrame, cfg: PlannerConfig,
                      previous: MotionPlan | None = None) -> MotionPlan:
    """SQP over spline coefficients; see module docstring for the frame conventions."""
    durations = np.array([ph.duration for ph in polygons], dtype=float)
    K = len(durations)
    n_alpha = K * SPLINE_DIM
    starts = np.concatenate([[0.0], np.cumsum(durations)[:-1]])
    tau = float(durations.sum())
    g_plan = frame.vec_to_local(inp.gravity)
    p_meas = frame.to_local(inp.com_position)
    v_meas = frame.vec_to_local(inp.com_velocity)
    a_meas = frame.vec_to_local(inp.com_acceleration)
    h = inp.nominal_height
    v_ref = np.asarray(inp.v_ref, dtype=float)
    wz = float(np.asarray(inp.omega_ref).reshape(-1)[-1])
    Ns = cfg.samples_per_spline
    path0 = p_meas if inp.path_origin is None else frame.to_local(inp.path_origin)

    H = np.zeros((n_alpha, n_alpha))
    g = np.zeros(n_alpha)

    def add_ls(k, row_T, axis, target, w):
        idx = slice(k * SPLINE_DIM + axis * N_COEF, k * SPLINE_DIM + (axis + 1) * N_COEF)
        H[idx, idx] += 2 * w * np.outer(row_T, row_T)
        g[idx] -= 2 * w * row_T * target

    prev_eval = None
    if previous is not None:
        def prev_eval(t_abs):
            p, v, a = previous.evaluate_local(t_abs - previous.t0, extrapolate=True)
            F = previous.frame
            return (frame.to_local(F.to_world(p)), frame.vec_to_local(F.vec_to_world(v)),
                    frame.vec_to_local(F.vec_to_world(a)))

    # samples: Ns interior points plus both ends of every spline
    j = np.arange(Ns + 2)
    sample_k = np.repeat(np.arange(K), Ns + 2)
    dw = durations / (Ns + 1)
    sample_s = (j[None, :] * dw[:, None]).reshape(-1)
    sample_t = starts[sample_k] + sample_s
    wq = (dw[:, None] * np.where((j == 0) | (j == Ns + 1), 0.5, 1.0)[None, :]).reshape(-1)
    sample_hard = sample_t > cfg.soft_window + 1e-12
    T0_all, _, _ = basis_batch(sample_s)
    # per-sample quadratic tracking terms on the position: path (x, y), height and previous plan
    W = np.zeros((len(sample_s), N_AXES))
    Wt = np.zeros((len(sample_s), N_AXES))
    ref_xy = _heading_path_batch(path0[:2], v_ref, wz, sample_t)
    W[:, :2] = cfg.w_path * wq[:, None]
    Wt[:, :2] = W[:, :2] * ref_xy
    W[:, 2] = cfg.w_overshoot * wq
    Wt[:, 2] = W[:, 2] * h
    if previous is not None and cfg.w_previous > 0:
        pp = _positions_local(previous, inp.t + sample_t - previous.t0)
        F = previous.frame
        pp = (pp @ F.rotation.T + F.origin - frame.origin) @ frame.rotation
        W += cfg.w_previous * wq[:, None]
        Wt += cfg.w_previous * wq[:, None] * pp
    for k in range(K):
        sl = sample_k == k
        T0k = T0_all[sl]
        Q = acceleration_gram(durations[k])
        for ax in range(N_AXES):
            idx = slice(k * SPLINE_DIM + ax * N_COEF, k * SPLINE_DIM + (ax + 1) * N_COEF)
            H[idx, idx] += 2 * cfg.w_acc * Q + 2 * (T0k.T * W[sl, ax]) @ T0k
            g[idx] -= 2 * T0k.T @ Wt[sl, ax]
    sample_k, sample_s, sample_t, sample_hard = (list(sample_k), list(sample_s), list(sample_t),
                                                 list(sample_hard))
    # initial and final conditions
    T0, T1, T2 = basis(0.0)
    a_init = prev_eval(inp.t)[2] if prev_eval is not None else a_meas
    for ax in range(N_AXES):
        add_ls(0, T0, ax, p_meas[ax], cfg.w_initial)
        add_ls(0, T1, ax, v_meas[ax], cfg.w_initial)
        add_ls(0, T2, ax, a_init[ax], cfg.w_initial * 1e-2)
    T0, T1, T2 = basis(durations[-1])
    end_xy = _unit_heading_path(path0[:2], v_ref, wz, tau)
    end_v = _path_velocity(v_ref, wz, tau)
    for ax, (pt, vt) in enumerate(zip([end_xy[0], end_xy[1], h], [end_v[0], end_v[1], 0.0])):
        add_ls(K - 1, T0, ax, pt, cfg.w_final)
        add_ls(K - 1, T1, ax, vt, cfg.w_final)
        add_ls(K - 1, T2, ax, 0.0, cfg.w_final)
    H = 0.5 * (H + H.T) + 1e-9 * np.eye(n_alpha)

    # junction equalities
    CE, dE = [], []
    for k in range(K - 1):
        L = basis(durations[k])
        R = basis(0.0)
        for a_row, b_row in zip(L, R):
            for ax in range(N_AXES):
                row = np.zeros(n_alpha)
                row[k * SPLINE_DIM + ax * N_COEF:k * SPLINE_DIM + (ax + 1) * N_COEF] = a_row
                row[(k + 1) * SPLINE_DIM + ax * N_COEF:(k + 1) * SPLINE_DIM + (ax + 1) * N_COEF] = -b_row
                CE.append(row)
                dE.append(0.0)
    CE = np.array(CE) if CE else np.zeros((0, n_alpha))
    dE = np.array(dE)

    # push constraint  a_z >= a_min  (plan z = terrain normal)
    sk = np.array(sample_k)
    T0s, _, T2s = basis_batch(sample_s)
    push = np.zeros((len(sk), n_alpha))
    for i, k in enumerate(sk):
        push[i, k * SPLINE_DIM + 2 * N_COEF:k * SPLINE_DIM + 3 * N_COEF] = T2s[i]
    push_rhs = np.full(len(sk), cfg.a_min + g_plan[2])

    # ZMP sample rows
    rk, rT0, rT2, rE, rhard, rsaf = [], [], [], [], [], []
    for i, k in enumerate(sk):
        E = polygons[k].edges_at(sample_s[i])
        for e in E:
            rk.append(k)
            rT0.append(T0s[i])
            rT2.append(T2s[i])
            rE.append(e)
            rhard.append(sample_hard[i])
            rsaf.append(cfg.zmp_safety if sample_hard[i] else 0.0)
    rows = (np.array(rk, dtype=int), np.array(rT0), np.array(rT2), np.array(rE), np.array(rsaf))
    hard = np.array(rhard, dtype=bool)

    # initial iterate
    alpha = _initial_alpha(durations, starts, inp, p_meas, v_meas, prev_eval, h)

    def objective(al):
        return 0.5 * al @ H @ al + g @ al

    def merit(al, soft_w):
        c, _ = _zmp_rows(al, rows, g_plan, 0.0)
        viol_h = np.maximum(-c[hard], 0.0).sum() + np.maximum(push_rhs - push @ al, 0.0).sum()
        viol_s = np.maximum(-c[~hard], 0.0)
        return objective(al) + cfg.merit_penalty * viol_h + soft_w * (viol_s @ viol_s)

    soft_w = cfg.w_soft_zmp
    soften_all = False
    history = []
    iters = 0
    m_cur = merit(alpha, soft_w)
    history.append(m_cur)
    for it in range(cfg.max_iterations):
        c, J = _zmp_rows(alpha, rows, g_plan, rows[4])
        rhs_lin = J @ alpha - c                      # J a_new >= J a - c
        hard_mask = hard & (not soften_all)
        n_soft = int(np.sum(~hard_mask))
        n_var = n_alpha + n_soft
        Hq = np.zeros((n_var, n_var))
        Hq[:n_alpha, :n_alpha] = H
        Hq[n_alpha:, n_alpha:] = 2 * soft_w * np.eye(n_soft)
        gq = np.concatenate([g, np.zeros(n_soft)])
        CI = np.zeros((len(c) + n_soft + len(sk), n_var))
        dI = np.zeros(len(c) + n_soft + len(sk))
        # -J a - s <= -(rhs)
        CI[:len(c), :n_alpha] = -J
        soft_idx = np.flatnonzero(~hard_mask)
        CI[soft_idx, n_alpha + np.arange(n_soft)] = -1.0
        dI[:len(c)] = -rhs_lin
        CI[len(c):len(c) + n_soft, n_alpha:] = -np.eye(n_soft)
        CI[len(c) + n_soft:, :n_alpha] = -push
        dI[len(c) + n_soft:] = -push_rhs
        CEq = np.hstack([CE, np.zeros((CE.shape[0], n_soft))])
        try:
            sol = solve_qp(QuadProblem(Hq, gq, CEq, dE, CI, dI), max_changes=400)
        except QPInfeasibleError:
            if soften_all:
                raise PlanningError("motion-plan QP infeasible even with softened ZMP rows")
            soften_all = True
            hard = np.zeros_like(hard)
            m_cur = merit(alpha, soft_w)
            continue
        except QPError as exc:
            raise PlanningError(str(exc)) from exc
        step = sol.x[:n_alpha] - alpha
        # backtracking on the merit function
        t_step = 1.0
        accepted = False
        for _ in range(6):
            cand = alpha + t_step * step
            m_new = merit(cand, soft_w)
            if m_new <= m_cur + 1e-12 * max(1.0, abs(m_cur)):
                accepted = True
                break
            t_step *= 0.5
        iters += 1
        if not accepted:
            break
        alpha, m_cur = cand, m_new
        history.append(m_cur)
        if np.abs(t_step * step).max() < 1e-7:
            break

    # post-hoc checks
    margins = _zmp_margins(alpha, rows, g_plan)
    push_val = push @ alpha - push_rhs
    min_hard = float(margins[hard].min()) if np.any(hard) else math.inf
    soft_slack = float(np.maximum(-margins[~hard], 0.0).max(initial=0.0))
    ok = min_hard >= 0.0 and float(push_val.min(initial=0.0)) >= -1e-9 and not soften_all
    coeffs = alpha.reshape(K, N_AXES, N_COEF)
    samples = tuple(zip(sample_k, sample_s, sample_hard))
    return MotionPlan(coeffs, durations, frame, inp.t, tau, tuple(polygons),
                      None if previous is None else previous.coefficients.copy(),
                      accepted=ok, degraded=not ok, min_hard_margin=min_hard,
                      min_push=float(push_val.min(initial=math.inf)) + cfg.a_min,
                      soft_slack=soft_slack, iterations=iters, merit_history=tuple(history),
                      samples=samples)


def _initial_alpha(durations, starts, inp, p_meas, v_meas, prev_eval, h):
    K = len(durations)
    alpha = np.zeros((K, N_AXES, N_COEF))
    if prev_eval is None:
        # rest trajectory at the measured position
        for k in range(K):
            alpha[k, :, 0] = p_meas
        return alpha.reshape(-1)
    for k in range(K):
        p0, v0, a0 = prev_eval(inp.t + starts[k])
        p1, v1, a1 = prev_eval(inp.t + starts[k] + durations[k])
        alpha[k] = hermite_fit(p0, v0, a0, p1, v1, a1, durations[k])
    return alpha.reshape(-1)


def sample_margins(plan: MotionPlan, gravity):
    """(hard flags, margins) of the plan's ZMP samples against their polygons."""
    g_plan = plan.frame.vec_to_local(gravity)
    hard, margins = [], []
    for k, s, is_hard in plan.samples:
        C = plan.coefficients[k]
        T0, _, T2 = basis(s)
        p = C @ T0
        a = C @ T2 - g_plan
        zmp = p[:2] - p[2] * a[:2] / a[2]
        E = plan.polygons[k].edges_at(s)
        m = E[:, :2] @ zmp + E[:, 2]
        hard.extend([is_hard] * len(m))
        margins.extend(m)
    return np.array(hard, dtype=bool), np.array(margins)
