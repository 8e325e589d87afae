import numpy as np
import pytest

from wheelleg import model as mdl
from wheelleg import sim
from wheelleg.terrain import TerrainPlane
from wheelleg.verify import random_state
from wheelleg.wbc import WbcConfig, build_task_stack, contact_forces_local, make_input, solve_wbc

FLAT = TerrainPlane.flat()


def _standing(robot):
    z = sim.settle_height(robot, sim.TerrainProfile.flat(), sim.ContactModel())
    return mdl.GeneralizedState.standing(robot, position=(0.0, 0.0, z))


def _hold_refs(robot, state, legs):
    kin = mdl.compute_kinematics(robot, state)
    p, _, _ = mdl.com_state(robot, state, kin)
    com = (p, np.zeros(3), np.zeros(3))
    orient = (kin.R_base.copy(), np.zeros(3), np.zeros(3))
    pts = {leg: (mdl.contact_point(kin, leg, FLAT.normal), np.zeros(3), np.zeros(3)) for leg in range(4)}
    ground = {leg: pts[leg] for leg in legs}
    swing = {leg: pts[leg] for leg in range(4) if leg not in legs}
    return com, orient, swing, ground, kin


def _solve(robot, state, legs, cfg=WbcConfig()):
    com, orient, swing, ground, kin = _hold_refs(robot, state, legs)
    inp = make_input(robot, state, legs, FLAT, com, orient, swing, ground, kin=kin)
    return inp, solve_wbc(inp, cfg)


def test_row_counts_while_driving(robot):
    st0 = _standing(robot)
    com, orient, _, ground, kin = _hold_refs(robot, st0, (0, 1, 2, 3))
    inp = make_input(robot, st0, (0, 1, 2, 3), FLAT, com, orient, {}, ground, kin=kin)
    p1, p2, p3 = build_task_stack(inp)
    assert p1.A.shape == (6 + 12, mdl.N_U + 12)
    assert p2.A.shape[0] == 3 + 3 + 4          # COM, angular, one rolling-direction row per wheel
    assert p3.A.shape[0] == 12
    assert p1.D.shape[0] == 2 * 16 + 16


def test_static_stand_shares_weight(robot):
    inp, sol = _solve(robot, _standing(robot), (0, 1, 2, 3))
    fl = contact_forces_local(inp, sol.forces)
    weight = robot.total_mass * np.linalg.norm(robot.gravity)
    assert fl[:, 2].sum() == pytest.approx(weight, rel=1e-9)
    np.testing.assert_allclose(fl[:, 2], weight / 4, atol=1.0)
    assert np.abs(sol.udot).max() < 1e-6


def test_equations_of_motion_and_rolling_on_random_states(robot):
    rng = np.random.default_rng(3)
    for _ in range(20):
        s = random_state(robot, rng, velocity_scale=0.3)
        legs = (0, 1, 2, 3) if rng.random() < 0.5 else (1, 2)
        _, sol = _solve(robot, s, legs)
        assert sol.eom_residual < 1e-6
        assert sol.rolling_residual < 1e-6


def test_forces_inside_friction_cone_post_hoc(robot):
    cfg = WbcConfig()
    for legs in ((0, 1, 2, 3), (0, 3), (1, 2)):
        inp, sol = _solve(robot, _standing(robot), legs, cfg)
        fl = contact_forces_local(inp, sol.forces)
        assert np.all(fl[:, 2] > 0)
        assert np.all(np.hypot(fl[:, 0], fl[:, 1]) <= cfg.mu * fl[:, 2] + 1e-9)


def test_swing_wheel_speed_is_damped(robot):
    st0 = _standing(robot)
    u = st0.u
    j = mdl.u_index(0, mdl.WHEEL)
    u[j] = 3.0
    s = st0.with_u(u)
    cfg = WbcConfig()
    _, sol = _solve(robot, s, (1, 2), cfg)
    # shares its level with the base tasks, which the wheel inertia couples to: a weighted compromise
    assert sol.udot[j] == pytest.approx(-cfg.gains.k_wheel * 3.0, rel=1e-4)


def test_needs_two_contacts_and_swing_refs(robot):
    st0 = _standing(robot)
    com, orient, swing, ground, kin = _hold_refs(robot, st0, (0,))
    with pytest.raises(ValueError):
        build_task_stack(make_input(robot, st0, (0,), FLAT, com, orient, swing, ground, kin=kin))
    inp = make_input(robot, st0, (0, 3), FLAT, com, orient, {}, {}, kin=kin)
    with pytest.raises(KeyError):
        build_task_stack(inp)
