from dataclasses import replace

import numpy as np
import pytest

from wheelleg import model as mdl
from wheelleg import sim
from wheelleg.closed_loop import JOINT_NAMES, load_scenario, run_closed_loop
from conftest import scenario_path

slow = pytest.mark.slow
FLAT = sim.TerrainProfile.flat()


def _airborne(robot, rng, z=5.0):
    st = mdl.GeneralizedState.standing(robot, position=(0.0, 0.0, z))
    return replace(st, joint_positions=st.joint_positions + rng.normal(0, 0.3, 16),
                   joint_velocities=rng.normal(0, 1.0, 16))


def test_terrain_profile_ramp():
    t = sim.TerrainProfile.from_points([0.0, 1.0, 2.0], [0.0, 0.5, 0.5], fillet=0.01)
    assert t.height(-1.0) == 0.0 and t.height(0.5) == pytest.approx(0.25)
    assert t.height(3.0) == pytest.approx(0.5)
    assert t.slope(0.5) == pytest.approx(0.5) and t.slope(1.5) == pytest.approx(0.0)
    n = t.normal(0.5)
    assert np.linalg.norm(n) == pytest.approx(1.0) and n[0] < 0


def test_drop_settles_to_weight(robot):
    """1 mm drop with the joints held by PD: the wheels end up carrying the weight."""
    cm = sim.ContactModel()
    z = sim.settle_height(robot, FLAT, cm) + 1e-3
    state = mdl.GeneralizedState.standing(robot, position=(0.0, 0.0, z))
    q0 = state.joint_positions.copy()
    hold = np.ones(16)
    hold[3::4] = 0.0                                   # wheels free
    dt = 5e-4
    for _ in range(2000):
        tau = hold * (300.0 * (q0 - state.joint_positions) - 10.0 * state.joint_velocities)
        res = sim.step(robot, state, tau, FLAT, dt, cm)
        state = res.state
    weight = robot.total_mass * np.linalg.norm(robot.gravity)
    assert res.forces[:, 2].sum() == pytest.approx(weight, rel=0.01)
    assert all(res.in_contact)


@slow
def test_fixed_base_pendulum_conserves_energy(robot):
    """Unactuated legs swinging under gravity; potential energy measured from the base origin."""
    model = replace(robot, fixed_base=True)
    state = _airborne(model, np.random.default_rng(0), z=0.0)
    low = sim.TerrainProfile.flat(-10.0)
    e0 = sim.mechanical_energy(model, state)
    dt = 1e-4
    worst = 0.0
    for k in range(int(5.0 / dt)):
        state = sim.step(model, state, np.zeros(16), low, dt).state
        if k % 100 == 0:
            worst = max(worst, abs(sim.mechanical_energy(model, state) - e0))
    assert worst <= 0.005 * abs(e0)


def test_zero_gravity_momentum_conserved(robot):
    model = replace(robot, gravity=np.zeros(3))
    rng = np.random.default_rng(1)
    state = _airborne(model, rng)
    p = sim.linear_momentum(model, state)
    for _ in range(200):
        state = sim.step(model, state, rng.normal(0, 5.0, 16), FLAT, 5e-4).state
        p_new = sim.linear_momentum(model, state)
        assert np.abs(p_new - p).max() < 1e-9
        p = p_new


def test_time_step_limit(robot):
    st = mdl.GeneralizedState.standing(robot, position=(0.0, 0.0, 1.0))
    with pytest.raises(ValueError):
        sim.step(robot, st, np.zeros(16), FLAT, 2e-3)


def _short(name, duration):
    sc = load_scenario(scenario_path(name))
    return replace(sc, duration=duration)


def test_runs_are_deterministic():
    sc = _short("drive_to_trot", 0.3)
    a, b = run_closed_loop(sc), run_closed_loop(sc)
    assert a.ok and b.ok
    assert np.array_equal(a.data, b.data)


def test_power_column_is_joint_power():
    r = run_closed_loop(_short("flat_drive", 0.5))
    for j in JOINT_NAMES:
        np.testing.assert_array_equal(r.column(f"power_{j}"), r.column(f"tau_{j}") * r.column(f"qd_{j}"))


@slow
def test_flat_drive_distance(run):
    r = run("flat_drive")
    assert r.ok
    x = r.column("com_x")
    assert abs((x[-1] - x[0]) - 2.5) <= 0.05 * 2.5
    assert r.column("penetration_max").max() < 5e-3


@slow
def test_stand_holds_height(run):
    r = run("stand")
    assert r.ok and r.column("t")[-1] == pytest.approx(10.0)
    h = r.column("base_height")
    assert np.abs(h - h[0]).max() <= 0.01
    assert r.column("penetration_max").max() < 5e-3


@slow
def test_drive_to_trot_switches_within_one_planner_cycle(run):
    r = run("drive_to_trot")
    assert r.ok
    t = r.column("t")
    flags = np.column_stack([r.column(f"flag_{leg}") for leg in mdl.LEGS])
    lifted = t[np.any(flags < 0.5, axis=1)]
    sc = load_scenario(scenario_path("drive_to_trot"))
    assert lifted.size and lifted[0] >= 3.0 - 1e-9
    assert lifted[0] - 3.0 <= 1.0 / sc.planner_rate + 1e-9
    assert r.column("penetration_max").max() < 5e-3
