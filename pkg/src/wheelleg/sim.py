"""Rigid-body simulation with compliant wheel-rim contact on piecewise-planar terrain."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import model as mdl

MAX_GENERALIZED_VELOCITY = 500.0


class SimulationError(RuntimeError):
    pass


@dataclass(frozen=True)
class ContactModel:
    stiffness: float = 5e4
    damping: float = 3e3
    mu: float = 0.7
    v_reg: float = 0.01

    def __post_init__(self):
        if self.stiffness <= 0 or self.damping <= 0 or self.v_reg <= 0 or self.mu < 0:
            raise ValueError("contact stiffness, damping and v_reg must be positive")

    @classmethod
    def from_dict(cls, d):
        d = d or {}
        return cls(**{k: float(v) for k, v in d.items() if k in cls.__dataclass_fields__})


def _hinge(u, w):
    """Rounded hinge max(u, 0) with a quadratic blend of width ``w`` and its slope."""
    h = 0.5 * w
    val = np.where(u <= -h, 0.0, np.where(u >= h, u, (u + h) ** 2 / (2 * w)))
    slope = np.clip((u + h) / w, 0.0, 1.0)
    return val, slope


@dataclass(frozen=True, eq=False)
class TerrainProfile:
    """Height field ``z = h(x)`` (constant along y) made of straight pieces with rounded kinks.

    Built as ``z0 + sum_k ds_k hinge(x - x_k)`` so each kink is blended over ``fillet`` metres.
    """
    knots: np.ndarray = field(default_factory=lambda: np.zeros(0))
    slope_changes: np.ndarray = field(default_factory=lambda: np.zeros(0))
    z0: float = 0.0
    fillet: float = 0.01

    @classmethod
    def flat(cls, height=0.0):
        return cls(np.zeros(0), np.zeros(0), float(height))

    @classmethod
    def from_points(cls, xs, zs, fillet=0.01):
        """Piecewise-linear profile through ``(xs, zs)``, flat before the first and after the last point."""
        xs = np.asarray(xs, dtype=float)
        zs = np.asarray(zs, dtype=float)
        if np.any(np.diff(xs) <= 0):
            raise ValueError("profile points must have increasing x")
        slopes = np.concatenate([[0.0], np.diff(zs) / np.diff(xs), [0.0]])
        return cls(xs, np.diff(slopes), float(zs[0]), float(fillet))

    @classmethod
    def from_dict(cls, d):
        d = dict(d or {"type": "flat"})
        kind = d.get("type", "flat")
        fillet = float(d.get("fillet", 0.01))
        if kind == "flat":
            return cls.flat(float(d.get("height", 0.0)))
        xs, zs = [], []
        z = 0.0
        if kind == "ramps":
            for seg in d["segments"]:
                x0 = float(seg["start"])
                rise = float(seg["rise"])
                if "length" in seg:
                    L = float(seg["length"])
                else:
                    L = abs(rise) / math.tan(math.radians(float(seg["slope_deg"])))
                xs += [x0, x0 + L]
                zs += [z, z + rise]
                z += rise
        elif kind in ("steps", "stairs"):
            if kind == "stairs":
                steps = [{"x": float(d["start"]) + i * float(d["run"]), "height": float(d["rise"])}
                         for i in range(int(d["count"]))]
            else:
                steps = d["steps"]
            for st in steps:
                x0 = float(st["x"])
                hgt = float(st["height"])
                xs += [x0 - 0.5 * fillet, x0 + 0.5 * fillet]
                zs += [z, z + hgt]
                z += hgt
        else:
            raise ValueError(f"unknown terrain type {kind!r}")
        return cls.from_points(xs, zs, fillet)

    def height_slope(self, x: float):
        """Height and slope at a scalar ``x``."""
        z, s = self.z0, 0.0
        h = 0.5 * self.fillet
        for xk, ds in zip(self._knots, self._ds):
            u = x - xk
            if u <= -h:
                continue
            if u >= h:
                z += ds * u
                s += ds
            else:
                z += ds * (u + h) ** 2 / (2 * self.fillet)
                s += ds * (u + h) / self.fillet
        return z, s

    def height(self, x):
        if np.ndim(x) == 0:
            return self.height_slope(float(x))[0]
        if self.knots.size == 0:
            return self.z0 + 0.0 * np.asarray(x, dtype=float)
        val, _ = _hinge(np.asarray(x, dtype=float)[..., None] - self.knots, self.fillet)
        return self.z0 + val @ self.slope_changes

    def slope(self, x):
        if np.ndim(x) == 0:
            return self.height_slope(float(x))[1]
        if self.knots.size == 0:
            return 0.0 * np.asarray(x, dtype=float)
        _, s = _hinge(np.asarray(x, dtype=float)[..., None] - self.knots, self.fillet)
        return s @ self.slope_changes

    def normal(self, x):
        s = self.slope(float(x))
        c = 1.0 / math.sqrt(1.0 + s * s)
        return np.array([-s * c, 0.0, c])

    @property
    def _knots(self):
        return self.knots.tolist()

    @property
    def _ds(self):
        return self.slope_changes.tolist()


@dataclass(frozen=True, eq=False)
class WheelContact:
    leg: int
    point: np.ndarray          # lowest rim point (material point of the wheel)
    normal: np.ndarray
    depth: float               # penetration (> 0 when in contact)


def wheel_contacts(model, kin, terrain: TerrainProfile):
    """Rim point of each wheel lowest with respect to the local terrain plane under it."""
    out = []
    r = model.wheel_radius
    for leg in range(mdl.N_LEGS):
        cx, cy, cz = kin.o[leg, mdl.WHEEL].tolist()
        wx, wy, wz = kin.a[leg, mdl.WHEEL].tolist()
        _, s = terrain.height_slope(cx)
        for _ in range(3):
            inv = 1.0 / math.sqrt(1.0 + s * s)
            nx, nz = -s * inv, inv
            nw = nx * wx + nz * wz
            dx, dy, dz = nx - nw * wx, -nw * wy, nz - nw * wz
            dn = r / math.sqrt(dx * dx + dy * dy + dz * dz)
            px, py, pz = cx - dn * dx, cy - dn * dy, cz - dn * dz
            hz, s = terrain.height_slope(px)
        inv = 1.0 / math.sqrt(1.0 + s * s)
        depth = (hz - pz) * inv
        out.append(WheelContact(leg, np.array([px, py, pz]), np.array([-s * inv, 0.0, inv]), depth))
    return out


@dataclass(frozen=True, eq=False)
class StepResult:
    state: mdl.GeneralizedState
    forces: np.ndarray          # (4, 3) world-frame contact force per wheel
    contacts: tuple             # WheelContact per wheel
    in_contact: tuple


def step(model: mdl.RobotModel, state: mdl.GeneralizedState, tau, terrain: TerrainProfile, dt: float,
         contact: ContactModel = ContactModel()) -> StepResult:
    """One semi-implicit Euler step of the contact dynamics.

    Contact damping and regularised friction are treated implicitly in the velocity update
    (their time constants are far below ``dt``); the spring force and configuration update
    are explicit / symplectic.
    """
    if dt > 1e-3:
        raise ValueError("time step must not exceed 1 ms")
    tau = np.clip(np.asarray(tau, dtype=float), -model.torque_limit, model.torque_limit)
    kin = mdl.compute_kinematics(model, state)
    M = mdl.mass_matrix(model, state, kin)
    h = mdl.bias_forces(model, state, kin)
    u = state.u
    rhs = M @ u + dt * (np.concatenate([np.zeros(6), tau]) - h)
    A = M.copy()
    contacts = wheel_contacts(model, kin, terrain)
    active = []
    for wc in contacts:
        if wc.depth <= 0:
            continue
        J = mdl.point_jacobian(kin, wc.leg, mdl.WHEEL, wc.point)
        v = J @ u
        n = wc.normal
        vn = n @ v
        fn = contact.stiffness * wc.depth - contact.damping * vn
        if fn <= 0:
            continue
        vt = v - vn * n
        d_t = contact.mu * fn / max(np.linalg.norm(vt), contact.v_reg)
        P = np.outer(n, n)
        K = contact.damping * P + d_t * (np.eye(3) - P)
        f0 = contact.stiffness * wc.depth * n
        A += dt * J.T @ K @ J
        rhs += dt * J.T @ f0
        active.append((wc.leg, J, K, f0))
    if model.fixed_base:
        u_new = np.zeros(mdl.N_U)
        u_new[6:] = np.linalg.solve(A[6:, 6:], rhs[6:] - A[6:, :6] @ np.zeros(6))
    else:
        u_new = np.linalg.solve(A, rhs)
    if not np.all(np.isfinite(u_new)) or np.abs(u_new).max() > MAX_GENERALIZED_VELOCITY:
        raise SimulationError(f"simulation diverged (max |u| = {np.abs(u_new).max():.3g})")
    forces = np.zeros((mdl.N_LEGS, 3))
    for leg, J, K, f0 in active:
        forces[leg] = f0 - K @ (J @ u_new)
    new_state = mdl.integrate_configuration(state, u_new, dt)
    if model.fixed_base:
        new_state = mdl.GeneralizedState(state.position, state.orientation, new_state.joint_positions,
                                         np.zeros(3), np.zeros(3), new_state.joint_velocities)
    else:
        # Linear momentum changes only through gravity and contact forces; re-impose that on the
        # updated configuration (d p / d v_B = m I, so one correction of v_B is exact).
        m = model.total_mass
        p_target = M[:3] @ u + dt * (m * model.gravity + forces.sum(axis=0))
        _, v_com, _ = mdl.com_state(model, new_state)
        dv = p_target / m - v_com
        new_state = replace(new_state, linear_velocity=new_state.linear_velocity + dv)
    flags = tuple(leg in {a[0] for a in active} for leg in range(mdl.N_LEGS))
    return StepResult(new_state, forces, tuple(contacts), flags)


def mechanical_energy(model, state):
    """Kinetic plus gravitational potential energy."""
    kin = mdl.compute_kinematics(model, state)
    M = mdl.mass_matrix(model, state, kin)
    u = state.u
    p, _, m = mdl.com_state(model, state, kin)
    return 0.5 * u @ M @ u - m * model.gravity @ p


def linear_momentum(model, state):
    _, v, m = mdl.com_state(model, state)
    return m * v


def settle_height(model, terrain: TerrainProfile, contact: ContactModel, joint_positions=None, x=0.0):
    """Base height at which the nominal stance carries its weight with static spring deflection."""
    st = mdl.GeneralizedState.standing(model, position=(x, 0.0, 0.0), joint_positions=joint_positions)
    kin = mdl.compute_kinematics(model, st)
    gaps = []
    for wc in wheel_contacts(model, kin, terrain):
        gaps.append(wc.depth / wc.normal[2])
    sag = model.total_mass * np.linalg.norm(model.gravity) / (4 * contact.stiffness)
    return float(np.mean(gaps)) - sag
