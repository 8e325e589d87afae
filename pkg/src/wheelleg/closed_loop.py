"""Scenario description and the rate-scheduled closed loop: gait -> terrain -> footholds ->
motion plan -> whole-body control -> simulator.

Loop order per WBC tick (fixed, single-threaded): gait clock / command update, planner
cycle (every ``wbc_rate / planner_rate`` ticks), WBC solve, log row, simulator substeps with
the torque held constant.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import model as mdl
from . import sim
from .foothold import (FootholdConfig, SwingRequest, driving_contact_reference, expected_foothold,
                       pendulum_offset, solve_foothold_qp, swing_trajectory)
from .gait import GaitPattern, contact_flags, make_gait, schedule_horizon
from .hierarchy import HierarchyInfeasibleError
from .qp import QPError
from .rotations import frame_from_z_and_x, rot_z
from .terrain import DegeneratePlaneError, TerrainEstimator, plan_frame
from .wbc import WbcConfig, contact_forces_local, make_input, solve_wbc
from .zmp_planner import (PlannerConfig, PlannerInput, PlanningError, UnsupportedPolygonError,
                          build_polygon_sequence, evaluate_plan, sample_margins, solve_motion_plan)

log = logging.getLogger(__name__)

EPS_T = 1e-9


class ScenarioError(ValueError):
    """Malformed or inconsistent scenario description."""


# ----------------------------------------------------------------------------------------
# scenario
# ----------------------------------------------------------------------------------------

@dataclass(frozen=True)
class CommandSegment:
    t: float
    v: tuple                 # (v_x, v_y) in the heading frame
    omega: float             # yaw rate
    gait: GaitPattern


@dataclass(frozen=True, eq=False)
class Scenario:
    name: str
    model: mdl.RobotModel
    terrain: sim.TerrainProfile
    commands: tuple
    duration: float
    contact: sim.ContactModel = field(default_factory=sim.ContactModel)
    planner: PlannerConfig = field(default_factory=PlannerConfig)
    wbc: WbcConfig = field(default_factory=WbcConfig)
    foothold: FootholdConfig = field(default_factory=FootholdConfig)
    seed: int = 0
    dt: float = 5e-4
    wbc_rate: float = 400.0
    planner_rate: float = 100.0
    accel_limit: float = 2.0         # m/s^2 on the commanded velocity
    yaw_accel_limit: float = 2.0     # rad/s^2
    initial_x: float = 0.0
    initial_yaw: float = 0.0
    perturbation: float = 0.0        # std of random initial joint velocities (rad/s)
    fall_tolerance: float = 0.5      # abort when the base height leaves +-50 % of nominal

    def __post_init__(self):
        if self.duration <= 0:
            raise ScenarioError("duration must be positive")
        if not self.commands or abs(self.commands[0].t) > EPS_T:
            raise ScenarioError("the command timeline must start at t = 0")
        ts = [c.t for c in self.commands]
        if any(b <= a for a, b in zip(ts[:-1], ts[1:])):
            raise ScenarioError("command times must be strictly increasing")
        if self.dt > 1e-3:
            raise ScenarioError("simulator time step must be <= 1 ms")
        if abs(self.substeps * self.dt * self.wbc_rate - 1.0) > 1e-9:
            raise ScenarioError("1 / wbc_rate must be a multiple of dt")
        if abs(self.planner_every * self.planner_rate - self.wbc_rate) > 1e-9:
            raise ScenarioError("wbc_rate must be a multiple of planner_rate")

    @property
    def substeps(self):
        return max(1, int(round(1.0 / (self.wbc_rate * self.dt))))

    @property
    def planner_every(self):
        return max(1, int(round(self.wbc_rate / self.planner_rate)))

    def command_at(self, t) -> CommandSegment:
        seg = self.commands[0]
        for c in self.commands:
            if c.t <= t + EPS_T:
                seg = c
        return seg

    @classmethod
    def from_dict(cls, d, base_dir="."):
        try:
            return cls._from_dict(d, Path(base_dir))
        except ScenarioError:
            raise
        except (KeyError, TypeError, ValueError) as exc:
            raise ScenarioError(f"invalid scenario: {exc!r}") from exc

    @classmethod
    def _from_dict(cls, d, base_dir):
        if not isinstance(d, dict):
            raise ScenarioError("scenario must be a JSON object")
        m = d.get("model", mdl.DEFAULT_MODEL_FILE)
        if isinstance(m, str):
            path = Path(m) if Path(m).is_absolute() else base_dir / m
            if not path.exists() and m == mdl.DEFAULT_MODEL_FILE:
                path = mdl.default_model_path()
            m = str(path)
        model = mdl.load_model(m)
        gait_defaults = d.get("gait", {}) or {}
        if isinstance(gait_defaults, str):
            gait_defaults = {gait_defaults: {}}

        def gait_of(spec):
            if isinstance(spec, str):
                return make_gait({"name": spec, **gait_defaults.get(spec, {})})
            return make_gait(spec)

        cmds = []
        for c in d["commands"]:
            v = c.get("v", [0.0, 0.0])
            v = (float(v), 0.0) if np.isscalar(v) else (float(v[0]), float(v[1]))
            cmds.append(CommandSegment(float(c.get("t", 0.0)), v, float(c.get("omega", 0.0)),
                                       gait_of(c.get("gait", "drive"))))
        sim_cfg = d.get("sim", {}) or {}
        init = d.get("initial", {}) or {}
        return cls(
            name=str(d.get("name", "scenario")),
            model=model,
            terrain=sim.TerrainProfile.from_dict(d.get("terrain", {"type": "flat"})),
            commands=tuple(cmds),
            duration=float(d["duration"]),
            contact=sim.ContactModel.from_dict(d.get("contact")),
            planner=PlannerConfig.from_dict(d.get("planner")),
            wbc=WbcConfig.from_dict(d.get("wbc")),
            foothold=FootholdConfig.from_dict(d.get("foothold")),
            seed=int(d.get("seed", 0)),
            dt=float(sim_cfg.get("dt", 5e-4)),
            wbc_rate=float(sim_cfg.get("wbc_rate", 400.0)),
            planner_rate=float(sim_cfg.get("planner_rate", 100.0)),
            accel_limit=float(sim_cfg.get("accel_limit", 2.0)),
            yaw_accel_limit=float(sim_cfg.get("yaw_accel_limit", 2.0)),
            initial_x=float(init.get("x", 0.0)),
            initial_yaw=float(init.get("yaw", 0.0)),
            perturbation=float(init.get("perturbation", 0.0)),
            fall_tolerance=float(sim_cfg.get("fall_tolerance", 0.5)),
        )


def load_scenario(path) -> Scenario:
    path = Path(path)
    try:
        with open(path) as fh:
            d = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{path}: malformed JSON ({exc})") from exc
    except OSError as exc:
        raise ScenarioError(f"{path}: {exc}") from exc
    return Scenario.from_dict(d, path.parent)


def leg_length(model: mdl.RobotModel) -> float:
    """Hip-pitch-to-wheel-axle length of the first leg (thigh plus shank)."""
    return float(np.linalg.norm(model.joint_origin[0, 2]) + np.linalg.norm(model.joint_origin[0, 3]))


# ----------------------------------------------------------------------------------------
# log layout
# ----------------------------------------------------------------------------------------

def _names(prefix, suffixes):
    return [f"{prefix}{s}" for s in suffixes]


JOINT_NAMES = [f"{leg}_{j}" for leg in mdl.LEGS for j in mdl.JOINT_TYPES]
LOG_COLUMNS = (
    ["t"]
    + _names("base_", "xyz") + _names("quat_", "wxyz")
    + _names("q_", JOINT_NAMES)
    + _names("v_", "xyz") + _names("w_", "xyz") + _names("qd_", JOINT_NAMES)
    + _names("com_", "xyz") + _names("com_v", "xyz")
    + _names("com_ref_", "xyz") + _names("com_ref_v", "xyz")
    + _names("tau_", JOINT_NAMES)
    + [f"lam_{leg}_{a}" for leg in mdl.LEGS for a in ("x", "y", "n")]
    + _names("flag_", mdl.LEGS) + _names("touch_", mdl.LEGS) + _names("fsim_n_", mdl.LEGS)
    + _names("zmp_", "xyz") + ["zmp_margin"]
    + _names("power_", JOINT_NAMES)
    + ["rolling_residual", "eom_residual", "plan_accepted", "plan_min_margin", "plan_junction"]
    + ["cmd_vx", "cmd_vy", "cmd_wz"] + _names("terrain_n", "xyz")
    + ["penetration_max", "base_height", "mass", "gravity"]
)
COLUMN_INDEX = {c: i for i, c in enumerate(LOG_COLUMNS)}


# ----------------------------------------------------------------------------------------
# results
# ----------------------------------------------------------------------------------------

@dataclass
class PlanRecord:
    t: float
    accepted: bool
    adopted: bool
    min_hard_margin: float
    junction_jump: float
    iterations: int
    solve_time: float
    error: str = ""


@dataclass
class RunResult:
    scenario: str
    status: str                     # "ok" | "failed"
    reason: str
    columns: tuple
    data: np.ndarray                # (ticks, len(columns))
    plans: list
    wbc_times: list                 # seconds per WBC solve (task build + cascade)
    wbc_input_times: list           # seconds per dynamics / task-input build
    planner_times: list             # seconds per planner cycle (footholds + polygons + SQP)
    nominal_height: float           # nominal COM height above the terrain plane
    mass: float
    leg_length: float
    wall_time: float = 0.0

    @property
    def ok(self):
        return self.status == "ok"

    def column(self, name):
        return self.data[:, COLUMN_INDEX[name]]


# ----------------------------------------------------------------------------------------
# controller
# ----------------------------------------------------------------------------------------

def _next_event(gait: GaitPattern, t_g, leg, kind):
    """Next lift-off (``kind=0``) or touch-down (``kind=1``) time after gait time ``t_g``."""
    S = gait.stride
    best = math.inf
    k0 = int(math.floor(t_g / S)) - 1
    for k in range(k0, k0 + 4):
        for w in gait.swing[leg]:
            te = (k + w[kind]) * S
            if te > t_g + EPS_T:
                best = min(best, te)
    return best


def _events_in(gait: GaitPattern, t_g, horizon, leg):
    """All touch-down times of ``leg`` in ``(t_g, t_g + horizon]``, with their preceding lift-off."""
    S = gait.stride
    out = []
    k0 = int(math.floor(t_g / S)) - 1
    for k in range(k0, k0 + int(math.ceil(horizon / S)) + 3):
        for lo, td in gait.swing[leg]:
            t_td = (k + td) * S
            if t_g + EPS_T < t_td <= t_g + horizon + EPS_T:
                out.append(((k + lo) * S, t_td))
    return sorted(out, key=lambda e: e[1])


class Controller:
    """Planner / foothold / WBC pipeline with its inter-cycle state."""

    def __init__(self, scenario: Scenario, state: mdl.GeneralizedState):
        sc = scenario
        self.sc = sc
        self.model = sc.model
        m = self.model
        kin = mdl.compute_kinematics(m, state)
        self.estimator = TerrainEstimator(m.wheel_radius)
        for leg in range(mdl.N_LEGS):
            self.estimator.record(leg, mdl.wheel_center(kin, leg), mdl.wheel_axle(kin, leg))
        self.plane = self.estimator.update(0.0)
        # nominal COM height above the terrain and the base-frame foothold offsets
        pc, _, _ = mdl.com_state(m, state, kin)
        contacts = np.array([mdl.contact_point(kin, leg, self.plane.normal) for leg in range(mdl.N_LEGS)])
        self.nominal_height = float(self.plane.signed_distance(pc))
        self.foot_offsets = (contacts - state.position) @ kin.R_base
        self.foot_offsets[:, 2] = 0.0
        # the same stance relative to the COM, in the heading frame
        self.com_offsets = (contacts - pc) @ rot_z(sc.initial_yaw)
        self.com_offsets[:, 2] = 0.0
        self.mass = m.total_mass
        seg = sc.command_at(0.0)
        self.gait = seg.gait
        self.pending_gait = None
        self.t_gait0 = 0.0
        self.v_cmd = np.zeros(2)
        self.wz_cmd = 0.0
        self.yaw_ref = sc.initial_yaw
        self.plan = None
        self.plan_record = None
        self.targets = {}
        self.swings = {}
        self.stance_refs = {leg: contacts[leg].copy() for leg in range(mdl.N_LEGS)}
        self.drive_refs = None
        self.flags = (True,) * 4
        # origin of the planner's reference path: integrates the command, leashed to the COM
        self.path_anchor = pc.copy()

    # -- commands and gait clock ------------------------------------------------------
    def update_commands(self, t, dt):
        seg = self.sc.command_at(t)
        v_target = np.array(seg.v)
        dv = v_target - self.v_cmd
        lim = self.sc.accel_limit * dt
        n = np.linalg.norm(dv)
        self.v_cmd = v_target if n <= lim else self.v_cmd + dv * (lim / n)
        dw = seg.omega - self.wz_cmd
        lw = self.sc.yaw_accel_limit * dt
        self.wz_cmd = seg.omega if abs(dw) <= lw else self.wz_cmd + math.copysign(lw, dw)
        R = frame_from_z_and_x(self.plane.normal, [math.cos(self.yaw_ref), math.sin(self.yaw_ref), 0.0])
        self.path_anchor = self.path_anchor + dt * (R @ np.array([self.v_cmd[0], self.v_cmd[1], 0.0]))
        self.yaw_ref += self.wz_cmd * dt
        if seg.gait != self.gait and seg.gait != self.pending_gait:
            self.pending_gait = seg.gait
        if self.pending_gait is not None:
            # walking gaits hand over at stride boundaries; a driving gait can stop anywhere
            tg = t - self.t_gait0
            boundary = self.gait.is_driving or abs(tg / self.gait.stride - round(tg / self.gait.stride)) < 1e-6
            if boundary:
                self.gait = self.pending_gait
                self.pending_gait = None
                self.t_gait0 = t
                self.targets = {}

    def gait_time(self, t):
        return t - self.t_gait0

    def flags_at(self, t):
        if self.gait.is_driving:
            return (True,) * 4
        return contact_flags(self.gait, self.gait_time(t))

    # -- helpers --------------------------------------------------------------------------
    def _hip_ground(self, state, kin, leg):
        p = state.position + kin.R_base @ self.foot_offsets[leg]
        return self.plane.project(p)

    def _heading_at(self, dt):
        return self.yaw_ref + self.wz_cmd * dt

    def _foothold_target(self, hip_td, t_ahead, offset):
        """Unconstrained optimum of the foothold costs (no collision / reach rows)."""
        cfg = self.sc.foothold
        T_st = self._stance_duration()
        vel = expected_foothold(hip_td, self._v3(), self._w3(), 0.5 * T_st, self._heading_at(t_ahead))
        w = cfg.w_default + cfg.w_velocity + cfg.w_pendulum
        xy = (cfg.w_default * hip_td[:2] + cfg.w_velocity * vel[:2] + cfg.w_pendulum * (hip_td[:2] + offset[:2])) / w
        return self.plane.project(np.array([xy[0], xy[1], hip_td[2]]), direction=[0, 0, 1])

    def _stance_duration(self):
        g = self.gait
        return g.stride * min(g.duty_factor(leg) for leg in range(mdl.N_LEGS))

    def _v3(self):
        return np.array([self.v_cmd[0], self.v_cmd[1], 0.0])

    def _w3(self):
        return np.array([0.0, 0.0, self.wz_cmd])

    def _horizon(self):
        cfg = self.sc.planner
        return cfg.horizon_drive if self.gait.is_driving else cfg.horizon_stride_factor * self.gait.stride

    # -- contact transitions ----------------------------------------------------------
    def update_contacts(self, t, state, kin):
        flags = self.flags_at(t)
        for leg in range(mdl.N_LEGS):
            was, now = self.flags[leg], flags[leg]
            if was and not now:
                lift = mdl.contact_point(kin, leg, self.plane.normal)
                t_td = self.t_gait0 + _next_event(self.gait, self.gait_time(t), leg, 1)
                target = self.targets.get(leg)
                if target is None:
                    offset = np.zeros(3)
                    hip_td = expected_foothold(self._hip_ground(state, kin, leg), self._v3(), self._w3(),
                                               t_td - t, self.yaw_ref)
                    target = self._foothold_target(hip_td, t_td - t, offset)
                self.swings[leg] = swing_trajectory(lift, target, t_td - t, self.sc.foothold.swing_height, t,
                                                    up=self.plane.normal)
                self.targets.pop(leg, None)
            elif now and not was:
                self.stance_refs[leg] = mdl.contact_point(kin, leg, self.plane.normal)
                self.swings.pop(leg, None)
        self.flags = flags

    # -- planner cycle ------------------------------------------------------------------
    def plan_cycle(self, t, state, kin):
        sc = self.sc
        m = self.model
        for leg in range(mdl.N_LEGS):
            if self.flags[leg]:
                self.estimator.record(leg, mdl.wheel_center(kin, leg), mdl.wheel_axle(kin, leg))
        try:
            self.plane = self.estimator.update(t)
        except DegeneratePlaneError:
            pass
        n = self.plane.normal
        points = {leg: mdl.contact_point(kin, leg, n) for leg in range(mdl.N_LEGS)}
        grounded = [leg for leg in range(mdl.N_LEGS) if self.flags[leg]]
        frame = plan_frame(self.plane, np.array([points[l] for l in grounded]), self.yaw_ref)
        tau = self._horizon()
        tg = self.gait_time(t)
        schedule = schedule_horizon(self.gait, tg, tau, sc.planner.min_phase)
        pc, vc, _ = mdl.com_state(m, state, kin)
        v3, w3 = self._v3(), self._w3()

        if self.gait.is_driving:
            center = np.mean([points[l] for l in range(mdl.N_LEGS)], axis=0)
            c_pred = expected_foothold(center, v3, w3, tau, self.yaw_ref)
            Rz = rot_z(self.wz_cmd * tau)
            cur = dict(points)
            pred = {l: c_pred + Rz @ (points[l] - center) for l in range(mdl.N_LEGS)}
            polygons = build_polygon_sequence(schedule, None, frame, sc.planner.w_line, (cur, pred))
            frames = {}
            for leg in range(mdl.N_LEGS):
                axle = mdl.wheel_axle(kin, leg)
                cx = np.cross(axle, n)
                frames[leg] = cx / np.linalg.norm(cx)
            # start each driving reference from the measured contact, pulled part of the way toward
            # the nominal stance under the planned COM so leg posture does not drift while rolling
            starts = dict(points)
            if self.plan is not None:
                p_ref, _, _ = evaluate_plan(self.plan, t, extrapolate=True)
                k = sc.foothold.drive_anchor
                for leg in range(mdl.N_LEGS):
                    nom = self.plane.project(p_ref + rot_z(self.yaw_ref) @ self.com_offsets[leg], direction=n)
                    starts[leg] = points[leg] + k * (nom - points[leg])
            self.drive_refs = (t, starts, frames, center, self.yaw_ref)
            # rolling wheels move their footholds; a walking gait taking over starts from here
            self.stance_refs = dict(points)
        else:
            self.drive_refs = None
            offset = pendulum_offset(vc, rot_z(self.yaw_ref) @ v3, self.nominal_height, m.gravity,
                                     sc.foothold.k_ip)
            offset = offset - (offset @ n) * n
            # next touch-down of every stance leg through the foothold QP
            requests, fixed = [], []
            td_times = {}
            for leg in range(mdl.N_LEGS):
                if self.flags[leg]:
                    t_td = _next_event(self.gait, tg, leg, 1)
                    if not math.isfinite(t_td):
                        continue
                    dt_td = t_td - tg
                    hip_td = expected_foothold(self._hip_ground(state, kin, leg), v3, w3, dt_td, self.yaw_ref)
                    vel = expected_foothold(hip_td, v3, w3, 0.5 * self._stance_duration(), self._heading_at(dt_td))
                    requests.append(SwingRequest(leg, hip_td, vel, self.targets.get(leg)))
                    td_times[leg] = dt_td
                elif leg in self.swings:
                    fixed.append(self.swings[leg].target)
            targets, _, degraded = solve_foothold_qp(requests, fixed, offset, self.plane, sc.foothold)
            self.targets.update(targets)
            # touch-down sequence per leg over the horizon
            events = {}
            for leg in range(mdl.N_LEGS):
                evs = []
                for k, (t_lo, t_td) in enumerate(_events_in(self.gait, tg, tau, leg)):
                    dt_td = t_td - tg
                    if k == 0 and not self.flags[leg] and leg in self.swings:
                        pos = self.swings[leg].target
                    elif k == 0 and leg in targets:
                        pos = targets[leg]
                    else:
                        hip_td = expected_foothold(self._hip_ground(state, kin, leg), v3, w3, dt_td, self.yaw_ref)
                        pos = self._foothold_target(hip_td, dt_td, offset)
                    evs.append((dt_td, pos))
                events[leg] = evs
            starts = schedule.start_times - schedule.t0

            def stance_points(k):
                flags, dur = schedule.phases[k]
                mid = starts[k] + 0.5 * dur
                pts = {}
                for leg in range(mdl.N_LEGS):
                    if not flags[leg]:
                        continue
                    pos = self.stance_refs.get(leg, points[leg]) if self.flags[leg] else None
                    for dt_td, p in events[leg]:
                        if dt_td <= mid:
                            pos = p
                    pts[leg] = points[leg] if pos is None else pos
                return pts

            polygons = build_polygon_sequence(schedule, stance_points, frame, sc.planner.w_line)

        a_meas = np.zeros(3)
        if self.plan is not None:
            _, _, a_meas = evaluate_plan(self.plan, t, extrapolate=True)
        lead = self.path_anchor - pc
        lead = lead - (lead @ n) * n
        dist = np.linalg.norm(lead)
        if dist > sc.planner.path_leash:
            lead *= sc.planner.path_leash / dist
        self.path_anchor = pc + lead
        inp = PlannerInput(t, pc, vc, a_meas, self.v_cmd.copy(), w3, m.gravity, self.nominal_height,
                           path_origin=self.path_anchor.copy())
        return solve_motion_plan(inp, polygons, frame, sc.planner, previous=self.plan)

    # -- WBC references -------------------------------------------------------------------
    def references(self, t, state, kin):
        p, v, a = evaluate_plan(self.plan, t, extrapolate=True)
        R_ref = frame_from_z_and_x(self.plane.normal, [math.cos(self.yaw_ref), math.sin(self.yaw_ref), 0.0])
        orient = (R_ref, self._w3(), np.zeros(3))
        swing_refs = {leg: self.swings[leg].evaluate(t) for leg in range(mdl.N_LEGS)
                      if not self.flags[leg] and leg in self.swings}
        ground_refs = {}
        if self.drive_refs is not None:
            t_p, pts, frames, center, heading = self.drive_refs
            # wheels follow the planned COM velocity (the command leads it while the plan accelerates)
            v_plan = (rot_z(heading).T @ v)[:2]
            for leg in range(mdl.N_LEGS):
                if self.flags[leg]:
                    ground_refs[leg] = driving_contact_reference(pts[leg], frames[leg], v_plan, self.wz_cmd,
                                                                 heading, center, t - t_p)
        else:
            for leg in range(mdl.N_LEGS):
                if self.flags[leg]:
                    ground_refs[leg] = (self.stance_refs[leg], np.zeros(3), np.zeros(3))
        return (p, v, a), orient, swing_refs, ground_refs


# ----------------------------------------------------------------------------------------
# closed loop
# ----------------------------------------------------------------------------------------

def initial_state(sc: Scenario) -> mdl.GeneralizedState:
    m = sc.model
    z = sim.settle_height(m, sc.terrain, sc.contact, x=sc.initial_x)
    q = np.array([math.cos(0.5 * sc.initial_yaw), 0.0, 0.0, math.sin(0.5 * sc.initial_yaw)])
    st = mdl.GeneralizedState.standing(m, position=(sc.initial_x, 0.0, z), orientation=q)
    if sc.perturbation > 0:
        rng = np.random.default_rng(sc.seed)
        u = st.u
        u[6:] = rng.normal(0.0, sc.perturbation, mdl.N_JOINTS)
        st = st.with_u(u)
    return st


def _plan_zmp(plan, t, gravity):
    """Plan ZMP (world) at ``t`` and its margin in the support polygon active at that time."""
    t_rel = min(max(t - plan.t0, 0.0), plan.horizon)
    k, s = plan.locate(t_rel)
    p, _, a = plan.evaluate_local(t_rel)
    acc = a - plan.frame.vec_to_local(gravity)
    zmp = np.array([p[0] - p[2] * acc[0] / acc[2], p[1] - p[2] * acc[1] / acc[2], 0.0])
    margin = plan.polygons[k].margin(zmp[:2], s) if plan.polygons else math.nan
    return plan.frame.to_world(zmp), margin


def run_closed_loop(scenario: Scenario, log_path=None, seed=None) -> RunResult:
    """Run ``scenario`` to completion (or failure), optionally streaming the CSV log."""
    sc = scenario
    if seed is not None and seed != sc.seed:
        from dataclasses import replace
        sc = replace(sc, seed=int(seed))
    m = sc.model
    state = initial_state(sc)
    ctrl = Controller(sc, state)
    n_ticks = int(round(sc.duration * sc.wbc_rate))
    dt_wbc = 1.0 / sc.wbc_rate
    rows = []
    plans, wbc_times, input_times, planner_times = [], [], [], []
    status, reason = "ok", ""
    fh = writer = None
    if log_path is not None:
        fh = open(log_path, "w", newline="")
        writer = csv.writer(fh)
        writer.writerow(LOG_COLUMNS)
    nominal_base = state.position[2] - float(sc.terrain.height(state.position[0]))
    g_norm = float(np.linalg.norm(m.gravity))
    last_sim = None
    wall0 = time.perf_counter()
    try:
        for tick in range(n_ticks + 1):
            t = tick * dt_wbc
            ctrl.update_commands(t, dt_wbc)
            kin = mdl.compute_kinematics(m, state)
            ctrl.update_contacts(t, state, kin)
            if tick % sc.planner_every == 0:
                t0 = time.perf_counter()
                err = ""
                try:
                    plan = ctrl.plan_cycle(t, state, kin)
                except (PlanningError, UnsupportedPolygonError, QPError, DegeneratePlaneError) as exc:
                    plan, err = None, f"{type(exc).__name__}: {exc}"
                    log.debug("planner cycle at t=%.3f failed: %s", t, err)
                planner_times.append(time.perf_counter() - t0)
                adopt = plan is not None and (plan.accepted or ctrl.plan is None
                                              or t - ctrl.plan.t0 > ctrl.plan.horizon)
                if plan is not None:
                    hard, margins = sample_margins(plan, m.gravity)
                    mh = float(margins[hard].min()) if hard.any() else math.inf
                    plans.append(PlanRecord(t, plan.accepted, adopt, mh, plan.junction_jumps(), plan.iterations,
                                            planner_times[-1]))
                else:
                    plans.append(PlanRecord(t, False, False, math.nan, math.nan, 0, planner_times[-1], err))
                if adopt:
                    ctrl.plan = plan
                    ctrl.plan_record = plans[-1]
                if ctrl.plan is None:
                    raise PlanningError(f"no motion plan available at t={t:.3f}: {err}")
            com_ref, orient, swing_refs, ground_refs = ctrl.references(t, state, kin)
            contact_set = tuple(leg for leg in range(mdl.N_LEGS) if ctrl.flags[leg])
            t0 = time.perf_counter()
            inp = make_input(m, state, contact_set, ctrl.plane, com_ref, orient, swing_refs, ground_refs, kin)
            t1 = time.perf_counter()
            sol = solve_wbc(inp, sc.wbc)
            t2 = time.perf_counter()
            input_times.append(t1 - t0)
            wbc_times.append(t2 - t1)
            tau = sol.tau
            lam_local = contact_forces_local(inp, sol.forces)

            pc, vc, _ = mdl.com_state(m, state, kin)
            zmp, margin = _plan_zmp(ctrl.plan, t, m.gravity)
            lam = np.zeros((mdl.N_LEGS, 3))
            for i, leg in enumerate(contact_set):
                lam[leg] = lam_local[i]
            touch = np.zeros(4)
            fsim = np.zeros(4)
            pen = 0.0
            if last_sim is not None:
                touch = np.array(last_sim.in_contact, dtype=float)
                fsim = np.array([last_sim.forces[l] @ last_sim.contacts[l].normal for l in range(4)])
                pen = max(c.depth for c in last_sim.contacts)
            qd = state.joint_velocities
            power = [float(a) * float(b) for a, b in zip(tau, qd)]
            pr = ctrl.plan_record
            base_h = state.position[2] - float(sc.terrain.height(state.position[0]))
            row = ([t] + list(state.position) + list(state.orientation) + list(state.joint_positions)
                   + list(state.u) + list(pc) + list(vc) + list(com_ref[0]) + list(com_ref[1]) + list(tau)
                   + list(lam.reshape(-1)) + [float(f) for f in ctrl.flags] + list(touch) + list(fsim)
                   + list(zmp) + [margin] + power
                   + [sol.rolling_residual, sol.eom_residual, float(ctrl.plan.accepted),
                      pr.min_hard_margin, pr.junction_jump]
                   + [ctrl.v_cmd[0], ctrl.v_cmd[1], ctrl.wz_cmd] + list(ctrl.plane.normal)
                   + [pen, base_h, m.total_mass, g_norm])
            row = [float(x) for x in row]
            rows.append(row)
            if writer is not None:
                writer.writerow(row)

            if abs(base_h - nominal_base) > sc.fall_tolerance * nominal_base:
                raise sim.SimulationError(f"base height {base_h:.3f} m left the admissible band (fall)")
            if tick == n_ticks:
                break
            for _ in range(sc.substeps):
                last_sim = sim.step(m, state, tau, sc.terrain, sc.dt, sc.contact)
                state = last_sim.state
    except (sim.SimulationError, HierarchyInfeasibleError, QPError, PlanningError, ValueError) as exc:
        status, reason = "failed", f"{type(exc).__name__}: {exc}"
        log.error("run %s aborted at t=%.4f: %s", sc.name, len(rows) * dt_wbc, reason)
    finally:
        if fh is not None:
            fh.close()
    data = np.array(rows) if rows else np.zeros((0, len(LOG_COLUMNS)))
    return RunResult(sc.name, status, reason, tuple(LOG_COLUMNS), data, plans, wbc_times, input_times,
                     planner_times, ctrl.nominal_height, m.total_mass, leg_length(m),
                     time.perf_counter() - wall0)
