import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from wheelleg.rotations import rot_y, rot_z
from wheelleg.terrain import (DegeneratePlaneError, TerrainEstimator, TerrainPlane, contact_frame,
                              estimate_plane, plan_frame)

R0 = 0.1
Y = np.array([0.0, 1.0, 0.0])


def _square(z=0.0):
    return np.array([[0.4, 0.3, z], [0.4, -0.3, z], [-0.4, 0.3, z], [-0.4, -0.3, z]])


def test_flat_ground_plane_through_rim_points():
    centers = _square(R0)
    plane = estimate_plane(centers, [Y] * 4, R0)
    np.testing.assert_allclose(plane.normal, [0, 0, 1], atol=1e-15)
    for c in centers:
        assert abs(plane.signed_distance(c - [0, 0, R0])) < 1e-12


def test_incline_recovered():
    slope = np.deg2rad(15.0)
    R = rot_y(-slope)                      # plane rising along +x
    n_true = R @ [0, 0, 1]
    pts = [R @ p for p in _square()]
    axles = [R @ Y] * 4
    centers = [p + R0 * n_true for p in pts]
    plane = estimate_plane(centers, axles, R0)
    np.testing.assert_allclose(plane.normal, n_true, atol=1e-9)
    assert np.arccos(plane.normal[2]) == pytest.approx(slope, abs=1e-9)
    for p in pts:
        assert abs(plane.signed_distance(p)) < 1e-9


def test_collinear_points_degenerate():
    pts = np.array([[0, 0, 0.1], [1, 0, 0.1], [2, 0, 0.1]], dtype=float)
    with pytest.raises(DegeneratePlaneError):
        estimate_plane(pts, [Y] * 3, R0)
    prev = TerrainPlane.flat()
    out = estimate_plane(pts, [Y] * 3, R0, previous=prev)
    assert out.stale and np.array_equal(out.normal, prev.normal)


def test_contact_frame_upright_and_yawed():
    plane = TerrainPlane.flat()
    f = contact_frame(plane, Y, [0, 0, R0], R0)
    np.testing.assert_allclose(f.rolling_direction, [1, 0, 0], atol=1e-15)
    np.testing.assert_allclose(f.origin, [0, 0, 0], atol=1e-15)
    f = contact_frame(plane, rot_z(np.pi / 2) @ Y, [0, 0, R0], R0)
    np.testing.assert_allclose(f.rolling_direction, [0, 1, 0], atol=1e-15)


@settings(max_examples=1000, deadline=None)
@given(st.floats(-0.6, 0.6), st.floats(-np.pi, np.pi), st.floats(-0.5, 0.5), st.floats(-np.pi, np.pi))
def test_contact_frame_orthonormal(tilt, tilt_dir, axle_roll, axle_yaw):
    n = rot_z(tilt_dir) @ rot_y(tilt) @ [0, 0, 1]
    plane = TerrainPlane.from_normal(n, [0, 0, 0])
    axle = rot_z(axle_yaw) @ np.array([0.0, np.cos(axle_roll), np.sin(axle_roll)])
    f = contact_frame(plane, axle, [0, 0, R0], R0)
    assert abs(f.rolling_direction @ n) < 1e-12
    assert abs(np.linalg.norm(f.rolling_direction) - 1.0) < 1e-12
    np.testing.assert_allclose(f.rotation.T @ f.rotation, np.eye(3), atol=1e-12)


def test_plan_frame_flat_and_incline():
    F = _square()
    P = plan_frame(TerrainPlane.flat(), F, 0.0)
    np.testing.assert_allclose(P.rotation, np.eye(3), atol=1e-15)
    np.testing.assert_allclose(P.origin, F.mean(axis=0), atol=1e-15)

    n = rot_y(-0.3) @ [0, 0, 1]
    plane = TerrainPlane.from_normal(n, [0.1, 0.0, 0.05])
    F = np.array([plane.project(p + [0, 0, 0.2]) for p in _square()]) + 0.01 * np.arange(4)[:, None]
    P = plan_frame(plane, F, 0.2)
    np.testing.assert_allclose(P.rotation[:, 2], n, atol=1e-12)
    c = F.mean(axis=0)
    np.testing.assert_allclose(P.origin, c - ((c - plane.point) @ n) * n, atol=1e-12)


def test_estimator_smooths_toward_new_plane():
    est = TerrainEstimator(R0, smoothing=0.5)
    for leg, c in enumerate(_square(R0)):
        est.record(leg, c, Y)
    p0 = est.update(0.0)
    np.testing.assert_allclose(p0.normal, [0, 0, 1], atol=1e-15)
    R = rot_y(-0.2)
    for leg, c in enumerate(_square()):
        est.record(leg, R @ c + R0 * (R @ [0, 0, 1]), R @ Y)
    p1 = est.update(0.1)
    tilt = np.arccos(p1.normal[2])
    assert 0.0 < tilt < 0.2
