"""Prioritised whole-body controller over xi = [udot; lambda]."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import model as mdl
from .hierarchy import TaskLevel, solve_hierarchy
from .rotations import rot_log
from .terrain import ContactFrameInfo, TerrainPlane, contact_frame


@dataclass(frozen=True)
class Gains:
    kp: np.ndarray = field(default_factory=lambda: np.full(3, 400.0))      # swing / ground legs
    kd: np.ndarray = field(default_factory=lambda: np.full(3, 40.0))
    kp_com: np.ndarray = field(default_factory=lambda: np.full(3, 50.0))
    kd_com: np.ndarray = field(default_factory=lambda: np.full(3, 10.0))
    kp_ang: np.ndarray = field(default_factory=lambda: np.full(3, 50.0))
    kd_ang: np.ndarray = field(default_factory=lambda: np.full(3, 10.0))
    k_wheel: float = 2.0

    def __post_init__(self):
        for name in ("kp", "kd", "kp_com", "kd_com", "kp_ang", "kd_ang"):
            v = np.broadcast_to(np.asarray(getattr(self, name), dtype=float), (3,)).copy()
            if np.any(v <= 0):
                raise ValueError(f"gain {name} must be positive")
            object.__setattr__(self, name, v)
        if self.k_wheel <= 0:
            raise ValueError("wheel damping gain must be positive")


@dataclass(frozen=True)
class WbcConfig:
    gains: Gains = field(default_factory=Gains)
    mu: float = 0.7
    pyramid_inner: bool = True        # facets at mu/sqrt(2): inside the true cone
    w_eom: float = 1.0
    w_rolling: float = 1.0
    w_com: float = 1.0
    w_angular: float = 1.0
    w_swing: float = 1.0
    w_wheel: float = 0.1
    w_ground: float = 1.0
    w_force: float = 1.0

    @classmethod
    def from_dict(cls, d):
        d = dict(d or {})
        gk = {k: d.pop(k) for k in list(d) if k in Gains.__dataclass_fields__}
        kw = {k: float(v) if k != "pyramid_inner" else bool(v) for k, v in d.items() if k in cls.__dataclass_fields__}
        return cls(gains=Gains(**gk), **kw)


@dataclass(frozen=True, eq=False)
class WbcInput:
    model: mdl.RobotModel
    state: mdl.GeneralizedState
    dynamics: mdl.DynamicsTerms
    plane: TerrainPlane
    kin: mdl.Kinematics
    contact_frames: dict                # leg -> ContactFrameInfo
    com_ref: tuple                      # (p, v, a) world
    orientation_ref: tuple              # (R_ref, omega_ref world, omegadot_ref world)
    swing_refs: dict = field(default_factory=dict)     # leg -> (r, v, a) of the leg-fixed contact point
    ground_refs: dict = field(default_factory=dict)    # leg -> (r, v, a)

    @property
    def contacts(self):
        return self.dynamics.contacts


@dataclass(frozen=True, eq=False)
class WbcSolution:
    udot: np.ndarray
    forces: np.ndarray                  # stacked world-frame contact forces
    tau: np.ndarray
    residuals: list
    rolling_residual: float
    eom_residual: float
    levels: list


def make_input(model, state, contact_set, plane, com_ref, orientation_ref, swing_refs=None, ground_refs=None,
               kin=None) -> WbcInput:
    kin = mdl.compute_kinematics(model, state) if kin is None else kin
    dyn = mdl.dynamics_terms(model, state, contact_set, plane, kin)
    frames = {}
    for leg in dyn.contacts:
        frames[leg] = contact_frame(plane, mdl.wheel_axle(kin, leg), mdl.wheel_center(kin, leg), model.wheel_radius)
    return WbcInput(model, state, dyn, plane, kin, frames, com_ref, orientation_ref,
                    dict(swing_refs or {}), dict(ground_refs or {}))


def rolling_rhs(inp: WbcInput, leg) -> np.ndarray:
    """Right-hand side of ``J_C udot = -Jdot_C u + a_roll`` for a grounded wheel."""
    leg = mdl.leg_index(leg)
    dyn = inp.dynamics
    if leg in dyn.contacts:
        i = dyn.contacts.index(leg)
        drift = dyn.support_drift[3 * i:3 * i + 3]
    else:
        drift = mdl.contact_drift(inp.model, inp.state, leg, "wheel", inp.plane, inp.kin)
    return -drift + mdl.rolling_contact_acceleration(inp.model, inp.state, leg, inp.plane, inp.kin)


def _leg_point(inp, leg):
    """Position, velocity, Jacobian and drift of the leg-fixed contact point C'."""
    n = inp.plane.normal
    p = mdl.contact_point(inp.kin, leg, n)
    dyn = inp.dynamics
    if leg in dyn.contacts:
        # same point as the wheel-fixed C, minus the wheel-joint column
        i = dyn.contacts.index(leg)
        J = dyn.support_jacobian[3 * i:3 * i + 3].copy()
        J[:, mdl.u_index(leg, mdl.WHEEL)] = 0.0
    else:
        J = mdl.point_jacobian(inp.kin, leg, mdl.SHANK, p)
    v = J @ inp.state.u
    drift = mdl.point_bias_acceleration(inp.kin, leg, mdl.SHANK, p)
    return p, v, J, drift


def build_task_stack(inp: WbcInput, cfg: WbcConfig = WbcConfig()):
    """Three priority levels over ``xi = [udot (22); lambda (3 n_c)]``."""
    dyn = inp.dynamics
    nc = dyn.n_contacts
    if nc < 2:
        raise ValueError("the controller needs at least two grounded wheels")
    nu = mdl.N_U
    nx = nu + 3 * nc
    M, h, JS = dyn.mass_matrix, dyn.bias, dyn.support_jacobian
    G = cfg.gains
    legs_all = range(mdl.N_LEGS)
    swing_legs = [l for l in legs_all if l not in dyn.contacts]
    for l in swing_legs:
        if l not in inp.swing_refs:
            raise KeyError(f"missing swing reference for leg {mdl.LEGS[l]}")

    # -- priority 1 ----------------------------------------------------------------------
    A1 = np.zeros((6 + 3 * nc, nx))
    A1[:6, :nu] = M[:6]
    A1[:6, nu:] = -JS[:, :6].T
    A1[6:, :nu] = JS
    b1 = np.concatenate([-h[:6]] + [rolling_rhs(inp, leg) for leg in dyn.contacts])
    w1 = np.concatenate([np.full(6, cfg.w_eom), np.full(3 * nc, cfg.w_rolling)])
    # torque limits on tau = M_j udot + h_j - J_Sj^T lambda, then the friction pyramid
    T = np.hstack([M[6:], -JS[:, 6:].T])
    lim = inp.model.torque_limit
    mu = cfg.mu / np.sqrt(2.0) if cfg.pyramid_inner else cfg.mu
    D_fr = np.zeros((4 * nc, nx))
    for i, leg in enumerate(dyn.contacts):
        Rc = inp.contact_frames[leg].rotation
        cx, cy, n = Rc[:, 0], Rc[:, 1], Rc[:, 2]
        cols = slice(nu + 3 * i, nu + 3 * i + 3)
        D_fr[4 * i + 0, cols] = cx - mu * n
        D_fr[4 * i + 1, cols] = -cx - mu * n
        D_fr[4 * i + 2, cols] = cy - mu * n
        D_fr[4 * i + 3, cols] = -cy - mu * n
    D1 = np.vstack([T, -T, D_fr])
    f1 = np.concatenate([lim - h[6:], lim + h[6:], np.zeros(4 * nc)])
    p1 = TaskLevel(A1, b1, D1, f1, w1, None, priority=1, names=[("eom", 0, 6), ("rolling", 6, 3 * nc)])

    # -- priority 2 ----------------------------------------------------------------------
    rows, rhs, wts, names = [], [], [], []

    def add(name, J, b, w):
        J = np.atleast_2d(J)
        names.append((name, sum(len(r) for r in rhs), J.shape[0]))
        rows.append(J)
        rhs.append(np.atleast_1d(b))
        wts.append(np.full(J.shape[0], w))

    Jc, dc = mdl.com_jacobian(inp.model, inp.state, inp.kin)
    pc, vc, _ = mdl.com_state(inp.model, inp.state, inp.kin)
    p_ref, v_ref, a_ref = inp.com_ref
    a_des = a_ref + G.kp_com * (p_ref - pc) + G.kd_com * (v_ref - vc)
    add("com", Jc, a_des - dc, cfg.w_com)
    R_ref, w_ref, wd_ref = inp.orientation_ref
    R = inp.kin.R_base
    w = inp.kin.omega_world
    e_rot = rot_log(R_ref @ R.T)
    wd_des = wd_ref + G.kp_ang * e_rot + G.kd_ang * (w_ref - w)
    A_ang = np.zeros((3, nu))
    A_ang[:, 3:6] = R
    add("angular", A_ang, wd_des, cfg.w_angular)
    for leg in swing_legs:
        r_d, v_d, a_d = inp.swing_refs[leg]
        p, v, J, drift = _leg_point(inp, leg)
        acc = a_d + G.kp * (r_d - p) + G.kd * (v_d - v)
        add(f"swing:{mdl.LEGS[leg]}", J, acc - drift, cfg.w_swing)
        row = np.zeros(nu)
        j = mdl.u_index(leg, mdl.WHEEL)
        row[j] = 1.0
        add(f"wheel:{mdl.LEGS[leg]}", row, -G.k_wheel * inp.state.u[j], cfg.w_wheel)
    for leg in dyn.contacts:
        if leg not in inp.ground_refs:
            continue
        r_d, v_d, a_d = inp.ground_refs[leg]
        cx = inp.contact_frames[leg].rolling_direction
        p, v, J, drift = _leg_point(inp, leg)
        acc = a_d + G.kp * (r_d - p) + G.kd * (v_d - v)
        add(f"ground:{mdl.LEGS[leg]}", cx @ J, cx @ (acc - drift), cfg.w_ground)
    A2 = np.zeros((sum(r.shape[0] for r in rows), nx))
    A2[:, :nu] = np.vstack(rows)
    p2 = TaskLevel(A2, np.concatenate(rhs), w_eq=np.concatenate(wts), priority=2, names=names)

    # -- priority 3 ----------------------------------------------------------------------
    A_f = np.zeros((3 * nc, nx))
    A_f[:, nu:] = np.eye(3 * nc)
    p3 = TaskLevel(A_f, np.zeros(3 * nc), w_eq=cfg.w_force, priority=3, names=[("force", 0, 3 * nc)])
    return [p1, p2, p3]


def solve_wbc(inp: WbcInput, cfg: WbcConfig = WbcConfig(), levels=None) -> WbcSolution:
    levels = build_task_stack(inp, cfg) if levels is None else levels
    sol = solve_hierarchy(levels)
    dyn = inp.dynamics
    nu = mdl.N_U
    udot = sol.x[:nu]
    lam = sol.x[nu:]
    M, h, JS = dyn.mass_matrix, dyn.bias, dyn.support_jacobian
    tau = M[6:] @ udot + h[6:] - JS[:, 6:].T @ lam
    eom = M @ udot + h - dyn.selection.T @ tau - JS.T @ lam
    roll = 0.0
    if dyn.n_contacts:
        rhs = levels[0].b[6:6 + 3 * dyn.n_contacts]
        roll = float(np.abs(JS @ udot - rhs).max())
    return WbcSolution(udot, lam, tau, sol.eq_residuals, roll, float(np.abs(eom).max()), levels)


def contact_forces_local(inp: WbcInput, lam):
    """Contact forces expressed in each contact frame (c_x, c_y, n), shape (n_c, 3)."""
    out = []
    for i, leg in enumerate(inp.contacts):
        out.append(inp.contact_frames[leg].rotation.T @ lam[3 * i:3 * i + 3])
    return np.array(out).reshape(-1, 3)
