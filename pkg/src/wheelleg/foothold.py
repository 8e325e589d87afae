"""Foothold selection, swing splines and grounded-wheel references."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .qp import QPError, QuadProblem, solve_qp
from .rotations import cross, rot_z

SERIES_SWITCH = 1e-4           # |omega tau| below which the sinc terms use their series


@dataclass(frozen=True)
class FootholdConfig:
    w_default: float = 1.0          # (a) default foothold under the hip
    w_velocity: float = 1.0         # (b) velocity-projected foothold
    w_previous: float = 0.5         # (c) previous solution
    w_pendulum: float = 1.0         # (d) inverted-pendulum correction
    k_ip: float = 0.3
    swing_height: float = 0.08
    max_reach: float = 0.25         # horizontal hip-to-foothold distance (m)
    min_distance: float = 0.12      # between any two footholds (m)
    drive_anchor: float = 0.5       # per planner cycle pull of driving wheels toward the nominal stance

    @classmethod
    def from_dict(cls, d):
        d = d or {}
        return cls(**{k: float(v) for k, v in d.items() if k in cls.__dataclass_fields__})


def _sinc_terms(x):
    """``sin(x)/x`` and ``(1 - cos x)/x``, accurate through ``x = 0``."""
    x = np.asarray(x, dtype=float)
    small = np.abs(x) < SERIES_SWITCH
    xs = np.where(small, 1.0, x)
    x2 = x * x
    S = np.where(small, 1.0 - x2 / 6.0 + x2 * x2 / 120.0, np.sin(xs) / xs)
    C = np.where(small, x / 2.0 - x * x2 / 24.0, (1.0 - np.cos(xs)) / xs)
    return S, C


def twist_displacement(v_xy, omega_z, tau):
    """Planar displacement (heading frame at the start) after ``tau`` of constant twist.

    ``tau`` may be an array; the result then has shape ``(len(tau), 2)``.
    """
    tau = np.asarray(tau, dtype=float)
    S, C = _sinc_terms(float(omega_z) * tau)
    vx, vy = float(v_xy[0]), float(v_xy[1])
    return np.stack([tau * (S * vx - C * vy), tau * (C * vx + S * vy)], axis=-1)


def expected_foothold(p0, v_ref, omega_ref, tau, heading=0.0):
    """Position reached after ``tau`` seconds of constant body twist ``(v_ref, omega_ref)``.

    ``v_ref`` is given in the heading frame (yaw ``heading`` in the world); the vertical
    component is carried over unchanged.
    """
    p0 = np.asarray(p0, dtype=float)
    v = np.asarray(v_ref, dtype=float)
    wz = float(np.asarray(omega_ref, dtype=float).reshape(-1)[-1])
    d = twist_displacement(v, wz, float(tau))
    return p0 + rot_z(heading) @ np.array([d[0], d[1], 0.0])


# ----------------------------------------------------------------------------------------
# swing trajectories
# ----------------------------------------------------------------------------------------

def _quintic_coeffs(p0, v0, a0, p1, v1, a1, T):
    """Coefficients c[0..5] (rows) of a vector quintic on [0, T] matching both ends."""
    p0, v0, a0, p1, v1, a1 = (np.asarray(x, dtype=float) for x in (p0, v0, a0, p1, v1, a1))
    c0, c1, c2 = p0, v0, 0.5 * a0
    M = np.array([[T ** 3, T ** 4, T ** 5],
                  [3 * T ** 2, 4 * T ** 3, 5 * T ** 4],
                  [6 * T, 12 * T ** 2, 20 * T ** 3]])
    rhs = np.stack([p1 - (c0 + c1 * T + c2 * T ** 2), v1 - (c1 + 2 * c2 * T), a1 - 2 * c2])
    c3, c4, c5 = np.linalg.solve(M, rhs)
    return np.stack([c0, c1, c2, c3, c4, c5])


def _quintic_eval(c, s):
    pw = np.array([1.0, s, s ** 2, s ** 3, s ** 4, s ** 5])
    dp = np.array([0.0, 1.0, 2 * s, 3 * s ** 2, 4 * s ** 3, 5 * s ** 4])
    ddp = np.array([0.0, 0.0, 2.0, 6 * s, 12 * s ** 2, 20 * s ** 3])
    return pw @ c, dp @ c, ddp @ c


@dataclass(frozen=True, eq=False)
class SwingTrajectory:
    liftoff: np.ndarray
    target: np.ndarray
    duration: float
    apex_height: float
    segments: tuple          # two (6, 3) coefficient arrays
    t_start: float = 0.0

    def evaluate(self, t):
        """Position, velocity, acceleration at absolute time ``t`` (clamped to the swing)."""
        s = min(max(t - self.t_start, 0.0), self.duration)
        half = 0.5 * self.duration
        if s <= half:
            return _quintic_eval(self.segments[0], s)
        return _quintic_eval(self.segments[1], s - half)


def swing_trajectory(liftoff, target, duration, h_sw, t_start=0.0, up=(0.0, 0.0, 1.0)) -> SwingTrajectory:
    """Two quintic segments lift-off -> apex -> target.

    Along the chord the motion is a single minimum-jerk profile; perpendicular to it the
    offset rises to ``h_sw`` at mid-swing with zero velocity and acceleration at the apex.
    """
    if duration <= 0:
        raise ValueError("swing duration must be positive")
    p0 = np.asarray(liftoff, dtype=float)
    p1 = np.asarray(target, dtype=float)
    up = np.asarray(up, dtype=float)
    up = up / np.linalg.norm(up)
    half = 0.5 * duration
    delta = p1 - p0
    apex = p0 + 0.5 * delta + h_sw * up
    v_apex = 1.875 * delta / duration
    z3 = np.zeros(3)
    seg1 = _quintic_coeffs(p0, z3, z3, apex, v_apex, z3, half)
    seg2 = _quintic_coeffs(apex, v_apex, z3, p1, z3, z3, half)
    return SwingTrajectory(p0, p1, float(duration), float(h_sw), (seg1, seg2), float(t_start))


# ----------------------------------------------------------------------------------------
# foothold QP
# ----------------------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class FootholdPlan:
    targets: dict = field(default_factory=dict)     # leg -> foothold on the terrain
    swings: dict = field(default_factory=dict)      # leg -> SwingTrajectory
    driving: dict = field(default_factory=dict)     # leg -> (r_d, v_d, a_d)
    degraded: bool = False
    timestamp: float = 0.0


def _on_plane(plane, xy):
    """Point of the plane above/below ``xy`` (vertical projection)."""
    n, p = plane.normal, plane.point
    z = p[2] - (n[0] * (xy[0] - p[0]) + n[1] * (xy[1] - p[1])) / n[2]
    return np.array([xy[0], xy[1], z])


@dataclass(frozen=True)
class SwingRequest:
    """One swing leg for the foothold QP (all positions in the world frame)."""
    leg: int
    hip_touchdown: np.ndarray        # predicted hip position at touch-down
    velocity_target: np.ndarray      # hip_touchdown + velocity projection
    previous: np.ndarray | None = None


def solve_foothold_qp(requests, fixed_points, pendulum_offset, plane, cfg: FootholdConfig):
    """Jointly optimise the x-y footholds of ``requests``.

    Returns ``(targets, multipliers, degraded)``; ``targets`` maps leg to a point on the plane.
    """
    n = len(requests)
    if n == 0:
        return {}, {}, False
    H = np.zeros((2 * n, 2 * n))
    g = np.zeros(2 * n)
    off = np.asarray(pendulum_offset, dtype=float)[:2]
    for i, rq in enumerate(requests):
        sl = slice(2 * i, 2 * i + 2)
        hip = rq.hip_touchdown[:2]
        terms = [(cfg.w_default, hip), (cfg.w_velocity, rq.velocity_target[:2]),
                 (cfg.w_pendulum, hip + off)]
        if rq.previous is not None:
            terms.append((cfg.w_previous, np.asarray(rq.previous, dtype=float)[:2]))
        for w, tgt in terms:
            if w > 0:
                H[sl, sl] += 2 * w * np.eye(2)
                g[sl] -= 2 * w * tgt
    if not np.any(np.diag(H) > 0):
        H += 2e-6 * np.eye(2 * n)

    # collision: linearised separation along the direction between nominal positions
    rows, rhs = [], []
    nominal = [rq.hip_touchdown[:2] for rq in requests]
    for i in range(n):
        for j in range(i + 1, n):
            e = nominal[i] - nominal[j]
            if np.linalg.norm(e) < 1e-9:
                continue
            e = e / np.linalg.norm(e)
            row = np.zeros(2 * n)
            row[2 * i:2 * i + 2] = -e
            row[2 * j:2 * j + 2] = e
            rows.append(row)
            rhs.append(-cfg.min_distance)
        for fp in fixed_points:
            e = nominal[i] - np.asarray(fp)[:2]
            if np.linalg.norm(e) < 1e-9:
                continue
            e = e / np.linalg.norm(e)
            row = np.zeros(2 * n)
            row[2 * i:2 * i + 2] = -e
            rows.append(row)
            rhs.append(-cfg.min_distance - e @ np.asarray(fp)[:2])

    reach_rows = {}
    x = None
    mult = None
    try:
        for _ in range(4):
            C = np.array(rows + [r for r, _ in reach_rows.values()]) if (rows or reach_rows) else None
            d = np.array(rhs + [b for _, b in reach_rows.values()]) if (rows or reach_rows) else None
            sol = solve_qp(QuadProblem(H, g, C_I=C, d_I=d))
            x = sol.x
            mult = sol.multipliers_ineq
            added = False
            for i, rq in enumerate(requests):
                rel = x[2 * i:2 * i + 2] - rq.hip_touchdown[:2]
                dist = np.linalg.norm(rel)
                if dist > cfg.max_reach * (1 + 1e-9):
                    # tangent half-plane of the reach disk in the direction of the violation
                    e = rel / dist
                    row = np.zeros(2 * n)
                    row[2 * i:2 * i + 2] = e
                    key = (i, len(reach_rows))
                    reach_rows[key] = (row, cfg.max_reach + e @ rq.hip_touchdown[:2])
                    added = True
            if not added:
                break
        else:
            raise QPError("reach constraints did not settle")
    except QPError:
        targets = {}
        for rq in requests:
            rel = rq.hip_touchdown[:2]
            targets[rq.leg] = _on_plane(plane, rel)
        return targets, {}, True

    targets = {rq.leg: _on_plane(plane, x[2 * i:2 * i + 2]) for i, rq in enumerate(requests)}
    multipliers = {"collision": mult[:len(rows)], "reach": mult[len(rows):]}
    return targets, multipliers, False


def default_foothold(hip_world, plane):
    """Hip position projected onto the terrain along its normal."""
    return plane.project(hip_world)


def pendulum_offset(com_velocity, v_ref_world, height, gravity, k_ip):
    return k_ip * (np.asarray(com_velocity) - np.asarray(v_ref_world)) * np.sqrt(height / np.linalg.norm(gravity))


def driving_contact_reference(contact_point, rolling_direction, v_ref, omega_ref, heading, center, dt=0.0):
    """Desired contact motion of a grounded wheel under the commanded base twist.

    The commanded rigid-body velocity field (about ``center``) is evaluated at the contact
    point and projected onto the rolling direction; the position reference integrates that
    velocity for ``dt`` from the measured point; constant commands give zero acceleration.
    """
    p = np.asarray(contact_point, dtype=float)
    c_x = np.asarray(rolling_direction, dtype=float)
    v_world = rot_z(heading) @ np.array([v_ref[0], v_ref[1], 0.0])
    w = np.array([0.0, 0.0, float(np.asarray(omega_ref).reshape(-1)[-1])])
    v_field = v_world + cross(w, p - np.asarray(center, dtype=float))
    v_d = (c_x @ v_field) * c_x
    return p + dt * v_d, v_d, np.zeros(3)
