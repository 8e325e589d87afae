import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from wheelleg import model as mdl
from wheelleg.model import GeneralizedState, N_U
from wheelleg.terrain import TerrainPlane
from wheelleg.verify import random_state

FLAT = TerrainPlane.flat()


def test_dimensions_and_parameters(robot):
    assert mdl.N_JOINTS == mdl.N_TAU == 16 and N_U == 22
    assert np.all(robot.link_mass > 0) and robot.base_mass > 0
    assert robot.wheel_radius > 0
    for I in robot.link_inertia.reshape(-1, 3, 3):
        np.testing.assert_allclose(I, I.T)
        assert np.linalg.eigvalsh(I)[0] > 0
    assert mdl.selection_matrix().shape == (16, 22)


def test_zero_configuration_wheel_centres(robot):
    st0 = GeneralizedState.standing(robot, joint_positions=np.zeros(16))
    kin = mdl.compute_kinematics(robot, st0)
    for leg in range(4):
        np.testing.assert_allclose(mdl.wheel_center(kin, leg), robot.joint_origin[leg].sum(axis=0), atol=1e-14)


def test_wheel_angle_leaves_leg_fixed_frame_unchanged(robot):
    rng = np.random.default_rng(0)
    s = random_state(robot, rng)
    qj = s.joint_positions.copy()
    qj[mdl.joint_index(1, mdl.WHEEL)] += 1.234
    s2 = GeneralizedState(s.position, s.orientation, qj, s.linear_velocity, s.angular_velocity, s.joint_velocities)
    for frame in ("wheel_leg:RF", "contact_leg:RF"):
        a = mdl.forward_kinematics(robot, s, frame, plane=FLAT)
        b = mdl.forward_kinematics(robot, s2, frame, plane=FLAT)
        assert np.array_equal(a.rotation, b.rotation) and np.array_equal(a.translation, b.translation)


def test_jacobians_zero_velocity_and_leg_fixed_wheel_column(robot):
    rng = np.random.default_rng(1)
    s = random_state(robot, rng).with_u(np.zeros(N_U))
    for leg in range(4):
        for att in ("wheel", "leg"):
            J = mdl.contact_jacobian(robot, s, leg, att, FLAT)
            assert np.all(J @ s.u == 0)
        J_leg = mdl.contact_jacobian(robot, s, leg, "leg", FLAT)
        assert np.all(J_leg[:, mdl.u_index(leg, mdl.WHEEL)] == 0.0)


def test_wheel_fixed_contact_jacobian_finite_differences(robot):
    """Material rim point currently in contact, swept along every coordinate (incl. the wheel angle)."""
    rng = np.random.default_rng(2)
    h = 1e-6
    for _ in range(10):
        s = random_state(robot, rng)
        kin = mdl.compute_kinematics(robot, s)
        leg = int(rng.integers(4))
        p = mdl.contact_point(kin, leg, FLAT.normal)
        local = kin.R[leg, mdl.WHEEL].T @ (p - kin.o[leg, mdl.WHEEL])
        J = mdl.contact_jacobian(robot, s, leg, "wheel", FLAT, kin)
        for i in range(N_U):
            e = np.zeros(N_U)
            e[i] = 1.0
            fp = mdl.body_point_position(robot, mdl.integrate_configuration(s, e, h), leg, mdl.WHEEL, local)
            fm = mdl.body_point_position(robot, mdl.integrate_configuration(s, -e, h), leg, mdl.WHEEL, local)
            np.testing.assert_allclose((fp - fm) / (2 * h), J[:, i], atol=1e-6)


def test_bias_acceleration_finite_differences(robot):
    """``Jdot u``: derivative of ``J u`` of a material point along the motion with ``udot = 0``."""
    rng = np.random.default_rng(3)
    h = 1e-6
    s = random_state(robot, rng)
    kin = mdl.compute_kinematics(robot, s)
    leg, link = 2, mdl.WHEEL
    p = mdl.contact_point(kin, leg, FLAT.normal)
    local = kin.R[leg, link].T @ (p - kin.o[leg, link])

    def vel(state):
        k = mdl.compute_kinematics(robot, state)
        return mdl.point_velocity(k, leg, link, k.o[leg, link] + k.R[leg, link] @ local)

    fd = (vel(mdl.integrate_configuration(s, s.u, h)) - vel(mdl.integrate_configuration(s, s.u, -h))) / (2 * h)
    np.testing.assert_allclose(mdl.point_bias_acceleration(kin, leg, link, p), fd, atol=1e-5)


def test_mass_matrix_spd_on_random_states(robot):
    rng = np.random.default_rng(4)
    for _ in range(100):
        M = mdl.mass_matrix(robot, random_state(robot, rng))
        np.testing.assert_allclose(M, M.T, atol=1e-12)
        assert np.linalg.eigvalsh(M)[0] > 0


def test_static_bias_is_weight(robot):
    s = GeneralizedState.standing(robot)
    h = mdl.bias_forces(robot, s)
    np.testing.assert_allclose(h[:3], [0.0, 0.0, robot.total_mass * 9.81], rtol=1e-12)
    np.testing.assert_allclose(h, mdl.gravity_forces(robot, s), atol=1e-12)


def test_energy_rate_equals_actuator_power(robot):
    """d/dt (kinetic + potential) = u' S' tau for the unconstrained dynamics."""
    rng = np.random.default_rng(5)
    for _ in range(5):
        s = random_state(robot, rng)
        tau = rng.normal(size=16) * 5
        M = mdl.mass_matrix(robot, s)
        udot = np.linalg.solve(M, np.concatenate([np.zeros(6), tau]) - mdl.bias_forces(robot, s))

        def energy(state):
            k = mdl.compute_kinematics(robot, state)
            p, _, m = mdl.com_state(robot, state, k)
            u = state.u
            return 0.5 * u @ mdl.mass_matrix(robot, state, k) @ u - m * robot.gravity @ p

        h = 1e-5
        sp = mdl.integrate_configuration(s, s.u, h).with_u(s.u + h * udot)
        sm = mdl.integrate_configuration(s, s.u, -h).with_u(s.u - h * udot)
        rate = (energy(sp) - energy(sm)) / (2 * h)
        power = s.joint_velocities @ tau
        assert abs(rate - power) < 1e-5 * max(1.0, abs(power))


def test_rolling_acceleration_special_cases(robot):
    s = GeneralizedState.standing(robot)
    for leg in range(4):
        np.testing.assert_array_equal(mdl.rolling_contact_acceleration(robot, s, leg, FLAT), np.zeros(3))
    # upright, straight wheel spinning: centripetal acceleration r0 (pitch_rate + theta_dot)^2 along +z
    qd = np.zeros(16)
    qd[mdl.joint_index(0, mdl.WHEEL)] = 3.0
    s2 = s.with_u(np.concatenate([np.zeros(6), qd]))
    pose = mdl.wheel_frame_pose(robot, s2, 0, FLAT)
    assert abs(pose.yaw) < 1e-12 and abs(pose.roll) < 1e-12
    a = mdl.rolling_contact_acceleration(robot, s2, 0, FLAT)
    np.testing.assert_allclose(a, [0.0, 0.0, robot.wheel_radius * 9.0], atol=1e-12)


def test_rolling_acceleration_keeps_contact_point_at_rest(robot):
    """Under ``J_C udot + Jdot_C u = a_roll`` the velocity of the (moving) geometric contact
    point stays zero to first order."""
    rng = np.random.default_rng(6)
    h = 1e-5
    for _ in range(20):
        s = random_state(robot, rng)
        leg = int(rng.integers(4))
        J = mdl.contact_jacobian(robot, s, leg, "wheel", FLAT)
        u = s.u - np.linalg.pinv(J) @ (J @ s.u)          # no-slip velocity
        s = s.with_u(u)
        J = mdl.contact_jacobian(robot, s, leg, "wheel", FLAT)
        drift = mdl.contact_drift(robot, s, leg, "wheel", FLAT)
        a_roll = mdl.rolling_contact_acceleration(robot, s, leg, FLAT)
        udot = rng.normal(size=N_U)
        udot += np.linalg.pinv(J) @ (a_roll - drift - J @ udot)

        def v_contact(state):
            return mdl.contact_jacobian(robot, state, leg, "wheel", FLAT) @ state.u

        vp = v_contact(mdl.integrate_configuration(s, u, h).with_u(u + h * udot))
        vm = v_contact(mdl.integrate_configuration(s, u, -h).with_u(u - h * udot))
        np.testing.assert_allclose((vp - vm) / (2 * h), np.zeros(3), atol=1e-5)


def test_com_symmetric_stance_is_centred(robot):
    s = GeneralizedState.standing(robot)
    p, v, m = mdl.com_state(robot, s)
    hips = robot.hip_positions
    assert abs(p[1] - hips[:, 1].mean()) < 1e-9
    assert m == pytest.approx(robot.total_mass)


def test_com_velocity_matches_finite_difference(robot):
    rng = np.random.default_rng(7)
    s = random_state(robot, rng)
    h = 1e-6
    fp = mdl.com_state(robot, mdl.integrate_configuration(s, s.u, h))[0]
    fm = mdl.com_state(robot, mdl.integrate_configuration(s, s.u, -h))[0]
    np.testing.assert_allclose(mdl.com_state(robot, s)[1], (fp - fm) / (2 * h), atol=1e-6)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_compiled_kernels_match_array_reference(robot, seed):
    rng = np.random.default_rng(seed)
    s = random_state(robot, rng)
    kin = mdl.compute_kinematics(robot, s)
    kin_np = mdl.compute_kinematics_numpy(robot, s)
    np.testing.assert_allclose(kin.o, kin_np.o, atol=1e-12)
    np.testing.assert_allclose(kin.V, kin_np.V, atol=1e-12)
    np.testing.assert_allclose(mdl.mass_matrix(robot, s, kin), mdl.mass_matrix_numpy(robot, s, kin), atol=1e-10)
    udot = rng.normal(size=N_U)
    np.testing.assert_allclose(mdl.inverse_dynamics(robot, s, udot, kin=kin),
                               mdl.inverse_dynamics_numpy(robot, s, udot, kin=kin), atol=1e-9)
    J, drift = mdl.com_jacobian(robot, s, kin)
    J_np, drift_np = mdl.com_jacobian_numpy(robot, s, kin)
    np.testing.assert_allclose(J, J_np, atol=1e-13)
    np.testing.assert_allclose(drift, drift_np, atol=1e-12)


def test_invalid_model_rejected(robot):
    from dataclasses import replace
    with pytest.raises(ValueError):
        replace(robot, wheel_radius=0.0)
    bad = robot.link_mass.copy()
    bad[0, 0] = 0.0
    with pytest.raises(ValueError):
        replace(robot, link_mass=bad)
