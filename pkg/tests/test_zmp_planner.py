import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from wheelleg.gait import drive, schedule_horizon, trot
from wheelleg.rotations import cross, rot_y
from wheelleg.terrain import TerrainPlane, plan_frame
from wheelleg.zmp_planner import (GravitoInertial, MotionPlan, PlannerConfig, PlannerInput,
                                  UnsupportedPolygonError, ZMPSingularityError, basis, build_polygon_sequence,
                                  deformed_edge, evaluate_plan, sample_margins, solve_motion_plan, support_edges,
                                  zmp_position)

G = np.array([0.0, 0.0, -9.81])
H_NOM = 0.42
SQUARE = np.array([[0.3, 0.3, 0.0], [0.3, -0.3, 0.0], [-0.3, 0.3, 0.0], [-0.3, -0.3, 0.0]])


def test_static_zmp_is_vertical_projection():
    z = zmp_position([0.1, 0.2, 0.5], np.zeros(3), [0, 0, 1], GravitoInertial(30.0))
    np.testing.assert_allclose(z, [0.1, 0.2, 0.0], atol=1e-15)


def test_free_fall_is_singular():
    with pytest.raises(ZMPSingularityError):
        zmp_position([0.1, 0.2, 0.5], G, [0, 0, 1], GravitoInertial(30.0))


def test_inclined_zmp_wrench_balance():
    rng = np.random.default_rng(0)
    gi = GravitoInertial(30.0)
    for _ in range(50):
        n = rot_y(rng.uniform(-0.4, 0.4)) @ [0, 0, 1]
        p = rng.normal(size=3) * 0.3 + [0, 0, 0.5]
        a = rng.normal(size=3)
        z = zmp_position(p, a, n, gi)
        assert abs(z @ n) < 1e-12
        f = gi.mass * (G - a)
        m_z = cross(p - z, f)                      # moment about the ZMP
        t1 = np.cross(n, [0, 1, 0])
        t1 /= np.linalg.norm(t1)
        t2 = np.cross(n, t1)
        assert abs(m_z @ t1) < 1e-9 * np.linalg.norm(f) and abs(m_z @ t2) < 1e-9 * np.linalg.norm(f)


def test_square_support_polygon():
    E, order = support_edges(SQUARE[:, :2], 0.04)
    assert E.shape == (4, 3) and order is not None
    np.testing.assert_allclose(np.linalg.norm(E[:, :2], axis=1), 1.0)
    assert np.min(E[:, :2] @ [0.0, 0.0] + E[:, 2]) == pytest.approx(0.3)


def test_two_stance_legs_give_line_band():
    E, order = support_edges(SQUARE[[0, 3], :2], 0.04)
    assert order is None and E.shape == (2, 3)
    np.testing.assert_allclose(E[0, :2], -E[1, :2])
    mid = 0.5 * (SQUARE[0, :2] + SQUARE[3, :2])
    np.testing.assert_allclose(E[:, :2] @ mid + E[:, 2], [0.02, 0.02], atol=1e-15)
    with pytest.raises(UnsupportedPolygonError):
        support_edges(SQUARE[:1, :2], 0.04)


def test_driving_polygon_translates():
    frame = plan_frame(TerrainPlane.flat(), SQUARE, 0.0)
    tau, v = 1.0, np.array([0.5, 0.1, 0.0])
    cur = {i: p for i, p in enumerate(SQUARE)}
    pred = {i: p + tau * v for i, p in enumerate(SQUARE)}
    (ph,) = build_polygon_sequence(schedule_horizon(drive(), 0.0, tau), None, frame, 0.04, (cur, pred))
    d0, d1 = ph.edges, ph.edges_end
    np.testing.assert_allclose(d1[:, :2], d0[:, :2], atol=1e-15)
    np.testing.assert_allclose(d1[:, 2], d0[:, 2] - d0[:, :2] @ v[:2], atol=1e-15)


def test_deformed_edge_endpoints_and_midpoint():
    d0 = np.array([[1.0, 0.0, 0.3], [0.0, -1.0, 0.2]])
    d1 = np.array([[1.0, 0.0, 0.1], [0.0, -1.0, 0.4]])
    np.testing.assert_allclose(deformed_edge(d0, d1, 2.0, 2.0, 1.0), d0)
    np.testing.assert_allclose(deformed_edge(d0, d1, 3.0, 2.0, 1.0), d1)
    np.testing.assert_allclose(deformed_edge(d0, d1, 2.5, 2.0, 1.0)[:, 2], [0.2, 0.3])


def _driving_problem(p_com, v_com, a_com, t, v_ref, feet=SQUARE, cfg=PlannerConfig(), previous=None):
    plane = TerrainPlane.flat()
    frame = plan_frame(plane, feet, 0.0)
    tau = cfg.horizon_drive
    cur = {i: p for i, p in enumerate(feet)}
    pred = {i: p + tau * np.array([v_ref[0], v_ref[1], 0.0]) for i, p in enumerate(feet)}
    polys = build_polygon_sequence(schedule_horizon(drive(), t, tau), None, frame, cfg.w_line, (cur, pred))
    inp = PlannerInput(t, np.asarray(p_com, float), np.asarray(v_com, float), np.asarray(a_com, float),
                       np.array([v_ref[0], v_ref[1], 0.0]), np.zeros(3), G, H_NOM)
    return solve_motion_plan(inp, polys, frame, cfg, previous)


def test_rest_plan_is_constant():
    plan = _driving_problem([0, 0, H_NOM], np.zeros(3), np.zeros(3), 0.0, [0.0, 0.0])
    assert plan.accepted
    for t in np.linspace(0, plan.horizon, 41):
        p, v, a = evaluate_plan(plan, t)
        assert np.abs(a).max() < 1e-6
        np.testing.assert_allclose(p, [0, 0, H_NOM], atol=1e-6)


def test_driving_rollout_converges_to_command():
    """Replan every 10 ms from the previous plan's state; feet roll along with the command."""
    v_ref = np.array([0.5, 0.0])
    dt = 0.01
    p, v, a = np.array([0, 0, H_NOM]), np.zeros(3), np.zeros(3)
    feet = SQUARE.copy()
    plan = None
    cfg = PlannerConfig()
    for k in range(int(2 * cfg.horizon_drive / dt)):
        t = k * dt
        plan = _driving_problem(p, v, a, t, v_ref, feet, cfg, plan)
        assert plan.accepted
        hard, margins = sample_margins(plan, G)
        assert margins[hard].min() >= 0.0
        assert plan.junction_jumps() <= 1e-9
        p, v, a = evaluate_plan(plan, t + dt)
        feet = feet + dt * v_ref_xyz(v_ref, 0.0)
    assert abs(v[0] - 0.5) < 0.01 and abs(v[1]) < 1e-3


def v_ref_xyz(v, _):
    return np.array([v[0], v[1], 0.0])


def test_trot_plan_keeps_zmp_in_line_supports():
    cfg = PlannerConfig()
    g = trot(0.8, 0.5)
    t0 = 0.0
    tau = cfg.horizon_stride_factor * g.stride
    sched = schedule_horizon(g, t0, tau, cfg.min_phase)
    frame = plan_frame(TerrainPlane.flat(), SQUARE, 0.0)

    def stance(k):
        flags = sched.phases[k][0]
        return {i: SQUARE[i] for i in range(4) if flags[i]}

    polys = build_polygon_sequence(sched, stance, frame, cfg.w_line)
    inp = PlannerInput(t0, np.array([0, 0, H_NOM]), np.zeros(3), np.zeros(3), np.zeros(3), np.zeros(3), G, H_NOM)
    plan = solve_motion_plan(inp, polys, frame, cfg)
    hard, margins = sample_margins(plan, G)
    assert plan.accepted and hard.any()
    assert margins[hard].min() >= 0.0
    assert plan.junction_jumps() <= 1e-9


def _plan_from(coeffs, durations):
    frame = plan_frame(TerrainPlane.flat(), SQUARE, 0.0)
    return MotionPlan(np.asarray(coeffs, float), np.asarray(durations, float), frame, 0.0, float(np.sum(durations)))


def test_constant_spline_has_no_motion():
    C = np.zeros((2, 3, 6))
    C[:, :, 0] = [0.1, 0.2, 0.4]
    plan = _plan_from(C, [0.3, 0.4])
    for t in (0.0, 0.2, 0.5, 0.7):
        p, v, a = plan.evaluate_local(t)
        np.testing.assert_array_equal(v, 0)
        np.testing.assert_array_equal(a, 0)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.floats(0.0, 0.5))
def test_basis_derivatives_match_finite_differences(seed, s):
    c = np.random.default_rng(seed).normal(size=6)
    h = 1e-6
    T0p, T0m = basis(s + h)[0], basis(s - h)[0]
    T1p, T1m = basis(s + h)[1], basis(s - h)[1]
    _, T1, T2 = basis(s)
    assert abs(c @ (T0p - T0m) / (2 * h) - c @ T1) < 1e-6
    assert abs(c @ (T1p - T1m) / (2 * h) - c @ T2) < 1e-6


def test_plan_horizon_checked():
    with pytest.raises(ValueError):
        MotionPlan(np.zeros((1, 3, 6)), np.array([0.5]), plan_frame(TerrainPlane.flat(), SQUARE, 0.0), 0.0, 0.6)
    plan = _plan_from(np.zeros((1, 3, 6)), [0.5])
    with pytest.raises(ValueError):
        plan.evaluate_local(0.7)
