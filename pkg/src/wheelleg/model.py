"""Floating-base kinematics and dynamics of a four-legged robot with wheels as end-effectors.

Every leg is a serial chain of four revolute joints (HAA, HFE, KFE, WHEEL) hanging off the
base. Generalized coordinates follow ``u = [v_B (world), omega_B (base frame), qdot_j]``.
All spatial quantities are expressed in world coordinates, about the world origin, with
motion vectors ordered ``[omega; v_O]``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .rotations import axis_angle_batch, cross, euler_zxy, frame_from_z_and_x, quat_integrate, quat_to_rot, rot_x, rot_z, skew
from . import _rbd

LEGS = ("LF", "RF", "LH", "RH")
JOINT_TYPES = ("HAA", "HFE", "KFE", "WHEEL")
N_LEGS = 4
N_LINKS = 4
N_JOINTS = 16
N_TAU = 16
N_U = 22

WHEEL = 3
SHANK = 2


class WheelOrientationError(ValueError):
    """Wheel roll is too close to the z-x'-y'' Euler singularity."""


def leg_index(leg) -> int:
    if isinstance(leg, str):
        try:
            return LEGS.index(leg)
        except ValueError:
            raise ValueError(f"unknown leg {leg!r}") from None
    leg = int(leg)
    if not 0 <= leg < N_LEGS:
        raise ValueError(f"leg index out of range: {leg}")
    return leg


def joint_index(leg, link) -> int:
    return N_LINKS * leg_index(leg) + link


def u_index(leg, link) -> int:
    return 6 + joint_index(leg, link)


# ----------------------------------------------------------------------------------------
# model / state types
# ----------------------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class RobotModel:
    base_mass: float
    base_com: np.ndarray
    base_inertia: np.ndarray
    joint_origin: np.ndarray      # (4, 4, 3) joint position in parent link frame
    joint_axis: np.ndarray        # (4, 4, 3) unit axis in link frame
    link_mass: np.ndarray         # (4, 4)
    link_com: np.ndarray          # (4, 4, 3) in link frame
    link_inertia: np.ndarray      # (4, 4, 3, 3) about the link COM, link frame
    wheel_radius: float
    torque_limit: np.ndarray      # (16,)
    velocity_limit: np.ndarray    # (16,)
    position_limit: np.ndarray    # (16, 2)
    nominal_joint_positions: np.ndarray = field(default_factory=lambda: np.zeros(N_JOINTS))
    gravity: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, -9.81]))
    fixed_base: bool = False

    def __post_init__(self):
        if self.wheel_radius <= 0:
            raise ValueError("wheel radius must be positive")
        if self.base_mass <= 0 or np.any(self.link_mass <= 0):
            raise ValueError("all link masses must be positive")
        for I in [self.base_inertia, *self.link_inertia.reshape(-1, 3, 3)]:
            if not np.allclose(I, I.T, atol=1e-12) or np.linalg.eigvalsh(I)[0] <= 0:
                raise ValueError("inertia tensors must be symmetric positive definite")
        axes = self.joint_axis
        if not np.allclose(np.linalg.norm(axes, axis=-1), 1.0, atol=1e-9):
            raise ValueError("joint axes must be unit vectors")
        if not np.allclose(axes[:, WHEEL], [0.0, 1.0, 0.0]):
            raise ValueError("wheel joints must rotate about the local y axis")

    @property
    def total_mass(self) -> float:
        return float(self.base_mass + self.link_mass.sum())

    @property
    def hip_positions(self) -> np.ndarray:
        """HAA joint positions in the base frame, (4, 3)."""
        return self.joint_origin[:, 0].copy()

    @classmethod
    def from_dict(cls, d: dict) -> "RobotModel":
        base = d["base"]
        links = d["links"]
        by_name = {l["name"]: l for l in links}
        chains = []
        for leg in LEGS:
            chain = []
            parent = "base"
            for k in range(N_LINKS):
                children = [l for l in links if l["parent"] == parent and l["name"].startswith(leg + "_")]
                if len(children) != 1:
                    raise ValueError(f"leg {leg}: expected one child of {parent!r}, found {len(children)}")
                chain.append(children[0])
                parent = children[0]["name"]
            chains.append(chain)
        if sum(len(c) for c in chains) != len(by_name):
            raise ValueError("link list contains links outside the four leg chains")

        def inertia(v):
            v = np.asarray(v, dtype=float)
            return np.diag(v) if v.shape == (3,) else v.reshape(3, 3)

        def get(key, default=None):
            return np.array([[l.get(key, default) for l in chain] for chain in chains], dtype=float)

        nominal = d.get("nominal_joint_positions")
        return cls(
            base_mass=float(base["mass"]),
            base_com=np.asarray(base.get("com", [0.0, 0.0, 0.0]), dtype=float),
            base_inertia=inertia(base["inertia"]),
            joint_origin=get("origin"),
            joint_axis=get("axis"),
            link_mass=get("mass"),
            link_com=get("com"),
            link_inertia=np.array([[inertia(l["inertia"]) for l in chain] for chain in chains]),
            wheel_radius=float(d["wheel_radius"]),
            torque_limit=get("torque_limit", np.inf).reshape(-1),
            velocity_limit=get("velocity_limit", np.inf).reshape(-1),
            position_limit=np.array([l.get("position_limit", [-np.inf, np.inf])
                                     for chain in chains for l in chain], dtype=float),
            nominal_joint_positions=(np.zeros(N_JOINTS) if nominal is None
                                     else np.asarray(nominal, dtype=float)),
            gravity=np.asarray(d.get("gravity", [0.0, 0.0, -9.81]), dtype=float),
            fixed_base=bool(d.get("fixed_base", False)),
        )


@dataclass(frozen=True, eq=False)
class GeneralizedState:
    position: np.ndarray                    # r_IB, world (m)
    orientation: np.ndarray                 # q_IB, [w, x, y, z]
    joint_positions: np.ndarray             # (16,)
    linear_velocity: np.ndarray             # v_B, world (m/s)
    angular_velocity: np.ndarray            # omega_IB in base frame (rad/s)
    joint_velocities: np.ndarray            # (16,)

    def __post_init__(self):
        if abs(np.linalg.norm(self.orientation) - 1.0) > 1e-9:
            raise ValueError("base orientation quaternion must have unit norm")
        if self.joint_positions.shape != (N_JOINTS,) or self.joint_velocities.shape != (N_JOINTS,):
            raise ValueError("joint vectors must have 16 entries")

    @property
    def u(self) -> np.ndarray:
        return np.concatenate([self.linear_velocity, self.angular_velocity, self.joint_velocities])

    def with_u(self, u) -> "GeneralizedState":
        u = np.asarray(u, dtype=float)
        return replace(self, linear_velocity=u[0:3].copy(), angular_velocity=u[3:6].copy(),
                       joint_velocities=u[6:].copy())

    @classmethod
    def standing(cls, model: RobotModel, position=(0.0, 0.0, 0.0), orientation=(1.0, 0.0, 0.0, 0.0),
                 joint_positions=None) -> "GeneralizedState":
        qj = model.nominal_joint_positions if joint_positions is None else joint_positions
        return cls(np.asarray(position, dtype=float), np.asarray(orientation, dtype=float),
                   np.array(qj, dtype=float), np.zeros(3), np.zeros(3), np.zeros(N_JOINTS))


def integrate_configuration(state: GeneralizedState, u, dt) -> GeneralizedState:
    """Explicit configuration update ``q+ = q (+) u dt`` (quaternion renormalized)."""
    u = np.asarray(u, dtype=float)
    return GeneralizedState(
        position=state.position + dt * u[0:3],
        orientation=quat_integrate(state.orientation, u[3:6], dt),
        joint_positions=state.joint_positions + dt * u[6:],
        linear_velocity=u[0:3].copy(),
        angular_velocity=u[3:6].copy(),
        joint_velocities=u[6:].copy(),
    )


@dataclass(frozen=True, eq=False)
class DynamicsTerms:
    mass_matrix: np.ndarray          # (22, 22)
    bias: np.ndarray                 # h, (22,)
    selection: np.ndarray            # S, (16, 22)
    support_jacobian: np.ndarray     # J_S, (3 n_c, 22), wheel-fixed contact points
    support_drift: np.ndarray        # Jdot_S u, (3 n_c,)
    contacts: tuple                  # leg indices in LF, RF, LH, RH order

    @property
    def n_contacts(self) -> int:
        return len(self.contacts)


@dataclass(frozen=True, eq=False)
class WheelFramePose:
    R_IW: np.ndarray            # wheel-fixed frame
    R_IWp: np.ndarray           # leg-fixed wheel frame W'
    yaw: float
    roll: float
    pitch: float
    yaw_rate: float
    roll_rate: float
    pitch_rate: float
    theta: float
    theta_dot: float
    R_reference: np.ndarray     # frame the Euler angles are measured against (z = terrain normal)


@dataclass(frozen=True)
class Transform:
    rotation: np.ndarray
    translation: np.ndarray


def selection_matrix() -> np.ndarray:
    S = np.zeros((N_TAU, N_U))
    S[:, 6:] = np.eye(N_TAU)
    return S


# ----------------------------------------------------------------------------------------
# spatial algebra (batched over leading axes)
# ----------------------------------------------------------------------------------------

def _cross_motion(V, m):
    w, v = V[..., :3], V[..., 3:]
    return np.concatenate([cross(w, m[..., :3]), cross(v, m[..., :3]) + cross(w, m[..., 3:])], axis=-1)


def _cross_force(V, f):
    w, v = V[..., :3], V[..., 3:]
    return np.concatenate([cross(w, f[..., :3]) + cross(v, f[..., 3:]), cross(w, f[..., 3:])], axis=-1)


def _skew_batch(c):
    K = np.zeros(c.shape[:-1] + (3, 3))
    K[..., 0, 1] = -c[..., 2]
    K[..., 0, 2] = c[..., 1]
    K[..., 1, 0] = c[..., 2]
    K[..., 1, 2] = -c[..., 0]
    K[..., 2, 0] = -c[..., 1]
    K[..., 2, 1] = c[..., 0]
    return K


def _spatial_inertia(m, c, Ic):
    """World spatial inertia about the origin for mass ``m`` at world COM ``c`` (batched)."""
    m = np.asarray(m, dtype=float)
    C = _skew_batch(c)
    out = np.zeros(m.shape + (6, 6))
    mm = m[..., None, None]
    out[..., :3, :3] = Ic + mm * (C @ np.swapaxes(C, -1, -2))
    out[..., :3, 3:] = mm * C
    out[..., 3:, :3] = mm * np.swapaxes(C, -1, -2)
    out[..., 3:, 3:] = mm * np.eye(3)
    return out


# ----------------------------------------------------------------------------------------
# kinematics
# ----------------------------------------------------------------------------------------

@dataclass(eq=False)
class Kinematics:
    """Per-state cache of world-frame link poses, velocities and bias accelerations."""
    model: RobotModel
    state: GeneralizedState
    R_base: np.ndarray
    r_base: np.ndarray
    omega_world: np.ndarray
    R: np.ndarray        # (4, 4, 3, 3)
    o: np.ndarray        # (4, 4, 3)
    a: np.ndarray        # (4, 4, 3)
    com: np.ndarray      # (4, 4, 3)
    S: np.ndarray        # (4, 4, 6)
    S_base: np.ndarray   # (6, 6)
    V_base: np.ndarray   # (6,)
    A_base: np.ndarray   # (6,) bias, no gravity
    V: np.ndarray        # (4, 4, 6)
    zeta: np.ndarray     # (4, 4, 6) V x S qdot
    A: np.ndarray        # (4, 4, 6) bias spatial acceleration (udot = 0), no gravity
    I_base: np.ndarray   # (6, 6)
    I: np.ndarray        # (4, 4, 6, 6)
    base_com: np.ndarray


def compute_kinematics(model: RobotModel, state: GeneralizedState) -> Kinematics:
    R_base = quat_to_rot(state.orientation)
    r_base = np.asarray(state.position, dtype=float)
    (w, S_base, V_base, A_base, R, o, a, com, S, V, zeta, A, I, I_base, base_com) = _rbd.kinematics(
        R_base, r_base, np.asarray(state.angular_velocity, dtype=float),
        np.asarray(state.linear_velocity, dtype=float),
        state.joint_positions.reshape(N_LEGS, N_LINKS), state.joint_velocities.reshape(N_LEGS, N_LINKS),
        model.joint_axis, model.joint_origin, model.link_com, model.link_inertia, model.link_mass,
        float(model.base_mass), model.base_com, model.base_inertia)
    return Kinematics(model, state, R_base, r_base, w, R, o, a, com, S, S_base, V_base, A_base,
                      V, zeta, A, I_base, I, base_com)


def compute_kinematics_numpy(model: RobotModel, state: GeneralizedState) -> Kinematics:
    """Array-code version of :func:`compute_kinematics` (reference for the compiled kernel)."""
    R_base = quat_to_rot(state.orientation)
    r_base = np.asarray(state.position, dtype=float)
    qj = state.joint_positions.reshape(N_LEGS, N_LINKS)
    dqj = state.joint_velocities.reshape(N_LEGS, N_LINKS)

    w = R_base @ state.angular_velocity
    S_base = np.zeros((6, 6))
    S_base[3:, :3] = np.eye(3)
    S_base[:3, 3:] = R_base
    S_base[3:, 3:] = skew(r_base) @ R_base
    V_base = np.concatenate([w, state.linear_velocity + cross(r_base, w)])
    A_base = np.concatenate([np.zeros(3), cross(state.linear_velocity, w)])

    R = np.empty((N_LEGS, N_LINKS, 3, 3))
    o = np.empty((N_LEGS, N_LINKS, 3))
    V = np.empty((N_LEGS, N_LINKS, 6))
    A = np.empty((N_LEGS, N_LINKS, 6))
    R_joint = axis_angle_batch(model.joint_axis, qj)
    parent_R = np.broadcast_to(R_base, (N_LEGS, 3, 3))
    parent_o = np.broadcast_to(r_base, (N_LEGS, 3))
    for k in range(N_LINKS):
        o[:, k] = parent_o + np.einsum("lij,lj->li", parent_R, model.joint_origin[:, k])
        R[:, k] = parent_R @ R_joint[:, k]
        parent_R, parent_o = R[:, k], o[:, k]
    a = np.einsum("lkij,lkj->lki", R, model.joint_axis)
    com = o + np.einsum("lkij,lkj->lki", R, model.link_com)
    S = np.concatenate([a, cross(o, a)], axis=-1)
    Sq = S * dqj[..., None]
    Vp = V_base
    for k in range(N_LINKS):
        V[:, k] = Vp + Sq[:, k]
        Vp = V[:, k]
    zeta = _cross_motion(V, Sq)
    Ap = A_base
    for k in range(N_LINKS):
        A[:, k] = Ap + zeta[:, k]
        Ap = A[:, k]

    base_com = r_base + R_base @ model.base_com
    I_base = _spatial_inertia(model.base_mass, base_com, R_base @ model.base_inertia @ R_base.T)
    Ic_world = R @ model.link_inertia @ np.swapaxes(R, -1, -2)
    I = _spatial_inertia(model.link_mass, com, Ic_world)
    return Kinematics(model, state, R_base, r_base, w, R, o, a, com, S, S_base, V_base, A_base,
                      V, zeta, A, I_base, I, base_com)


def _kin(model, state, kin):
    if kin is not None:
        return kin
    return compute_kinematics(model, state)


def point_jacobian(kin: Kinematics, leg: int, link: int, p) -> np.ndarray:
    """Linear-velocity Jacobian (3 x 22) of the material point at world position ``p`` on a link."""
    p = np.asarray(p, dtype=float)
    J = np.zeros((3, N_U))
    J[:, 0:3] = np.eye(3)
    J[:, 3:6] = -skew(p - kin.r_base) @ kin.R_base
    c0 = 6 + N_LINKS * leg
    J[:, c0:c0 + link + 1] = cross(kin.a[leg, :link + 1], p - kin.o[leg, :link + 1]).T
    return J


def point_bias_acceleration(kin: Kinematics, leg: int, link: int, p) -> np.ndarray:
    """``Jdot u`` of the material point at ``p``: its classical acceleration when ``udot = 0``."""
    V = kin.V[leg, link]
    A = kin.A[leg, link]
    w = V[:3]
    v_p = V[3:] + cross(w, p)
    return A[3:] + cross(A[:3], p) + cross(w, v_p)


def point_velocity(kin: Kinematics, leg: int, link: int, p) -> np.ndarray:
    V = kin.V[leg, link]
    return V[3:] + cross(V[:3], p)


def body_point_position(model, state, leg, link, local_point, kin=None) -> np.ndarray:
    kin = _kin(model, state, kin)
    leg = leg_index(leg)
    return kin.o[leg, link] + kin.R[leg, link] @ np.asarray(local_point, dtype=float)


def wheel_center(kin: Kinematics, leg: int) -> np.ndarray:
    return kin.o[leg, WHEEL]


def wheel_axle(kin: Kinematics, leg: int) -> np.ndarray:
    return kin.a[leg, WHEEL]


def contact_point(kin: Kinematics, leg: int, normal) -> np.ndarray:
    """Lowest rim point of the wheel with respect to a plane of normal ``normal``."""
    n = np.asarray(normal, dtype=float)
    w = kin.a[leg, WHEEL]
    d = n - (n @ w) * w
    nd = math.sqrt(d @ d)
    if nd < 1e-6:
        raise ValueError("wheel axle is parallel to the terrain normal")
    return kin.o[leg, WHEEL] - kin.model.wheel_radius * d / nd


def _plane_normal(plane):
    if plane is None:
        return np.array([0.0, 0.0, 1.0])
    return np.asarray(getattr(plane, "normal", plane), dtype=float)


def contact_jacobian(model: RobotModel, state: GeneralizedState, leg, attachment="wheel", plane=None,
                     kin=None) -> np.ndarray:
    """3 x 22 Jacobian of the contact point of ``leg``.

    ``attachment='wheel'`` gives the wheel-fixed point C (depends on the wheel angle);
    ``attachment='leg'`` gives the leg-fixed point C' whose wheel column is zero.
    """
    kin = _kin(model, state, kin)
    leg = leg_index(leg)
    p = contact_point(kin, leg, _plane_normal(plane))
    if attachment in ("wheel", "wheel-fixed"):
        return point_jacobian(kin, leg, WHEEL, p)
    if attachment in ("leg", "leg-fixed"):
        return point_jacobian(kin, leg, SHANK, p)
    raise ValueError(f"unknown attachment {attachment!r}")


def contact_drift(model, state, leg, attachment="wheel", plane=None, kin=None) -> np.ndarray:
    """``Jdot_C u`` for the contact point of ``leg``."""
    kin = _kin(model, state, kin)
    leg = leg_index(leg)
    p = contact_point(kin, leg, _plane_normal(plane))
    link = WHEEL if attachment in ("wheel", "wheel-fixed") else SHANK
    return point_bias_acceleration(kin, leg, link, p)


def forward_kinematics(model: RobotModel, state: GeneralizedState, frame: str, plane=None, kin=None) -> Transform:
    """Pose of a named frame in the inertial frame.

    Frames: ``base``, ``hip:<leg>``, ``wheel:<leg>`` (W), ``wheel_leg:<leg>`` (W'),
    ``contact:<leg>`` (C), ``contact_leg:<leg>`` (C'). Contact frames need a terrain plane.
    """
    kin = _kin(model, state, kin)
    if frame == "base":
        return Transform(kin.R_base.copy(), kin.r_base.copy())
    kind, sep, leg_name = frame.partition(":")
    if not sep:
        raise KeyError(f"unknown frame {frame!r}")
    leg = leg_index(leg_name)
    if kind == "hip":
        return Transform(kin.R[leg, 0].copy(), kin.o[leg, 0].copy())
    if kind == "wheel":
        return Transform(kin.R[leg, WHEEL].copy(), kin.o[leg, WHEEL].copy())
    if kind == "wheel_leg":
        return Transform(kin.R[leg, SHANK].copy(), kin.o[leg, WHEEL].copy())
    if kind in ("contact", "contact_leg"):
        if plane is None:
            raise ValueError("contact frames require a terrain plane")
        n = _plane_normal(plane)
        p = contact_point(kin, leg, n)
        w_y = kin.a[leg, WHEEL]
        c_x = cross(w_y, n)
        c_x /= np.linalg.norm(c_x)
        return Transform(np.column_stack([c_x, cross(n, c_x), n]), p)
    raise KeyError(f"unknown frame {frame!r}")


# ----------------------------------------------------------------------------------------
# dynamics
# ----------------------------------------------------------------------------------------

def mass_matrix(model: RobotModel, state: GeneralizedState, kin=None) -> np.ndarray:
    """Composite-rigid-body algorithm."""
    kin = _kin(model, state, kin)
    return _rbd.mass_matrix(kin.I, kin.I_base, kin.S, kin.S_base)


def mass_matrix_numpy(model: RobotModel, state: GeneralizedState, kin=None) -> np.ndarray:
    kin = _kin(model, state, kin)
    Ic = kin.I.copy()
    for k in range(N_LINKS - 2, -1, -1):
        Ic[:, k] += Ic[:, k + 1]
    Ic_all = kin.I_base + Ic[:, 0].sum(axis=0)
    M = np.zeros((N_U, N_U))
    Sb = kin.S_base
    M[:6, :6] = Sb.T @ Ic_all @ Sb
    F = np.einsum("lkij,lkj->lki", Ic, kin.S)                  # (4, 4, 6)
    M[:6, 6:] = Sb.T @ F.reshape(-1, 6).T
    M[6:, :6] = M[:6, 6:].T
    # joint block: M[j, k] = s_j . F_k for j <= k within a leg
    blocks = np.einsum("lji,lki->ljk", kin.S, F)
    upper = np.triu(blocks)
    leg_blocks = upper + np.swapaxes(upper, 1, 2) - blocks * np.eye(N_LINKS)
    for leg in range(N_LEGS):
        c0 = 6 + N_LINKS * leg
        M[c0:c0 + N_LINKS, c0:c0 + N_LINKS] = leg_blocks[leg]
    return M


def inverse_dynamics(model: RobotModel, state: GeneralizedState, udot, gravity=True, kin=None) -> np.ndarray:
    """Recursive Newton-Euler: generalized force ``M udot + h`` (or ``M udot + C u`` without gravity)."""
    kin = _kin(model, state, kin)
    g = model.gravity if gravity else np.zeros(3)
    return _rbd.inverse_dynamics(kin.I, kin.I_base, kin.S, kin.S_base, kin.V, kin.V_base, kin.zeta, kin.A_base,
                                 np.asarray(udot, dtype=float), np.asarray(g, dtype=float))


def inverse_dynamics_numpy(model: RobotModel, state: GeneralizedState, udot, gravity=True, kin=None) -> np.ndarray:
    kin = _kin(model, state, kin)
    udot = np.asarray(udot, dtype=float)
    A0 = kin.S_base @ udot[:6] + kin.A_base
    if gravity:
        A0 = A0 + np.concatenate([np.zeros(3), -model.gravity])
    qdd = udot[6:].reshape(N_LEGS, N_LINKS)
    Sqdd = kin.S * qdd[..., None]
    A = np.empty((N_LEGS, N_LINKS, 6))
    Ap = A0
    for k in range(N_LINKS):
        A[:, k] = Ap + Sqdd[:, k] + kin.zeta[:, k]
        Ap = A[:, k]
    IV = np.einsum("lkij,lkj->lki", kin.I, kin.V)
    f = np.einsum("lkij,lkj->lki", kin.I, A) + _cross_force(kin.V, IV)
    for k in range(N_LINKS - 2, -1, -1):
        f[:, k] += f[:, k + 1]
    tau = np.einsum("lki,lki->lk", kin.S, f).reshape(-1)
    f_base = kin.I_base @ A0 + _cross_force(kin.V_base, kin.I_base @ kin.V_base) + f[:, 0].sum(axis=0)
    return np.concatenate([kin.S_base.T @ f_base, tau])


def bias_forces(model, state, kin=None) -> np.ndarray:
    return inverse_dynamics(model, state, np.zeros(N_U), gravity=True, kin=kin)


def gravity_forces(model, state, kin=None) -> np.ndarray:
    return inverse_dynamics(model, state.with_u(np.zeros(N_U)), np.zeros(N_U), gravity=True)


def dynamics_terms(model: RobotModel, state: GeneralizedState, contact_set=(), plane=None, kin=None) -> DynamicsTerms:
    kin = _kin(model, state, kin)
    contacts = tuple(sorted(leg_index(l) for l in contact_set))
    n = _plane_normal(plane)
    J = np.zeros((3 * len(contacts), N_U))
    drift = np.zeros(3 * len(contacts))
    for i, leg in enumerate(contacts):
        p = contact_point(kin, leg, n)
        J[3 * i:3 * i + 3] = point_jacobian(kin, leg, WHEEL, p)
        drift[3 * i:3 * i + 3] = point_bias_acceleration(kin, leg, WHEEL, p)
    return DynamicsTerms(mass_matrix(model, state, kin), bias_forces(model, state, kin),
                         selection_matrix(), J, drift, contacts)


# ----------------------------------------------------------------------------------------
# centre of mass
# ----------------------------------------------------------------------------------------

def _com_terms(model, kin):
    return _rbd.com_terms(kin.V_base, kin.A_base, kin.base_com, model.base_mass, kin.r_base, kin.R_base, kin.V,
                          kin.A, kin.a, kin.o, kin.com, model.link_mass)


def com_state(model: RobotModel, state: GeneralizedState, kin=None):
    """Whole-body COM position, velocity and total mass."""
    kin = _kin(model, state, kin)
    p, v, mt, _, _ = _com_terms(model, kin)
    return p, v, mt


def com_jacobian(model: RobotModel, state: GeneralizedState, kin=None):
    """COM Jacobian (3 x 22) and its drift ``Jdot_com u``."""
    kin = _kin(model, state, kin)
    _, _, _, J, drift = _com_terms(model, kin)
    return J, drift


def com_state_numpy(model: RobotModel, state: GeneralizedState, kin=None):
    """Array reference implementation of ``com_state``."""
    kin = _kin(model, state, kin)
    m = model.link_mass
    mt = model.total_mass
    p = (model.base_mass * kin.base_com + np.einsum("lk,lki->i", m, kin.com)) / mt
    v_base = kin.V_base[3:] + cross(kin.V_base[:3], kin.base_com)
    v_links = kin.V[..., 3:] + cross(kin.V[..., :3], kin.com)
    v = (model.base_mass * v_base + np.einsum("lk,lki->i", m, v_links)) / mt
    return p, v, mt


def com_jacobian_numpy(model: RobotModel, state: GeneralizedState, kin=None):
    """Array reference implementation of ``com_jacobian``."""
    kin = _kin(model, state, kin)
    m = model.link_mass
    mt = model.total_mass
    p, _, _ = com_state_numpy(model, state, kin)
    J = np.zeros((3, N_U))
    J[:, 0:3] = np.eye(3)
    J[:, 3:6] = -skew(p - kin.r_base) @ kin.R_base
    # sum over descendants: a_j x (sum_k>=j m_k c_k - M_j o_j)
    mc = m[..., None] * kin.com
    mc_desc = np.cumsum(mc[:, ::-1], axis=1)[:, ::-1]
    m_desc = np.cumsum(m[:, ::-1], axis=1)[:, ::-1]
    cols = cross(kin.a, mc_desc - m_desc[..., None] * kin.o) / mt
    J[:, 6:] = cols.reshape(-1, 3).T
    # drift
    wb = kin.V_base[:3]
    vb = kin.V_base[3:] + cross(wb, kin.base_com)
    ab = kin.A_base[3:] + cross(kin.A_base[:3], kin.base_com) + cross(wb, vb)
    w = kin.V[..., :3]
    v = kin.V[..., 3:] + cross(w, kin.com)
    al = kin.A[..., 3:] + cross(kin.A[..., :3], kin.com) + cross(w, v)
    drift = (model.base_mass * ab + np.einsum("lk,lki->i", m, al)) / mt
    return J, drift


# ----------------------------------------------------------------------------------------
# wheel frames and the rolling contact acceleration
# ----------------------------------------------------------------------------------------

ROLL_SINGULARITY_MARGIN = 1e-3


def _reference_frame(plane):
    n = _plane_normal(plane)
    n = n / np.linalg.norm(n)
    hint = np.array([1.0, 0.0, 0.0]) if abs(n[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    return frame_from_z_and_x(n, hint)


def wheel_frame_pose(model: RobotModel, state: GeneralizedState, leg, plane=None, kin=None) -> WheelFramePose:
    """Euler description of the leg-fixed wheel frame W' relative to a terrain-aligned frame.

    On flat ground the reference frame coincides with the inertial frame.
    """
    kin = _kin(model, state, kin)
    leg = leg_index(leg)
    R_T = _reference_frame(plane)
    R_Wp = kin.R[leg, SHANK]
    yaw, roll, pitch = euler_zxy(R_T.T @ R_Wp)
    if abs(roll) > math.pi / 2 - ROLL_SINGULARITY_MARGIN:
        raise WheelOrientationError(f"wheel roll {roll:.4f} rad is at the Euler singularity")
    omega = R_T.T @ kin.V[leg, SHANK, :3]
    # omega = yaw_rate e_z + roll_rate x' + pitch_rate y''
    cy, sy = math.cos(yaw), math.sin(yaw)
    pitch_rate = (-sy * omega[0] + cy * omega[1]) / math.cos(roll)
    rates = (omega[2] - pitch_rate * math.sin(roll), cy * omega[0] + sy * omega[1], pitch_rate)
    j = joint_index(leg, WHEEL)
    return WheelFramePose(kin.R[leg, WHEEL].copy(), R_Wp.copy(), yaw, roll, pitch,
                          float(rates[0]), float(rates[1]), float(rates[2]),
                          float(state.joint_positions[j]), float(state.joint_velocities[j]), R_T)


def rolling_contact_acceleration(model: RobotModel, state: GeneralizedState, leg, plane=None, kin=None) -> np.ndarray:
    """Acceleration of the wheel-fixed contact point under rolling without slipping.

    The bracketed vector is expressed in the spin-free wheel frame ``Rz(yaw) Rx(roll)``
    (x along the rolling direction, z from the contact point to the wheel centre).
    """
    pose = wheel_frame_pose(model, state, leg, plane, kin)
    r0 = model.wheel_radius
    spin = pose.pitch_rate + pose.theta_dot
    vec = np.array([
        0.0,
        -r0 * pose.yaw_rate * math.cos(pose.roll) * spin,
        r0 * spin * (spin + pose.yaw_rate * math.sin(pose.roll)),
    ])
    return pose.R_reference @ rot_z(pose.yaw) @ rot_x(pose.roll) @ vec


DEFAULT_MODEL_FILE = "model_default.json"


def default_model_path():
    return Path(__file__).with_name("data") / DEFAULT_MODEL_FILE


def load_model(data=None) -> RobotModel:
    """Build a model from a dict or a JSON file path (the bundled default when ``None``)."""
    if isinstance(data, RobotModel):
        return data
    if data is None:
        data = default_model_path()
    if not isinstance(data, dict):
        with open(data) as fh:
            data = json.load(fh)
    return RobotModel.from_dict(data)
