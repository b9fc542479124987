import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.spatial.transform import Rotation

from jumpctl.rotations import (
    euler_rate_map,
    euler_rate_map_dot,
    euler_xyz_to_matrix,
    matrix_to_euler_xyz,
    rot_x,
    rot_y,
    rot_z,
    rotation_about_axis,
    skew,
    vee,
)

angles = st.floats(min_value=-1.4, max_value=1.4)


def test_elementary_rotations_match_scipy():
    for a in [0.0, 0.3, -1.2, 2.9]:
        np.testing.assert_allclose(rot_x(a), Rotation.from_euler("x", a).as_matrix(), atol=1e-14)
        np.testing.assert_allclose(rot_y(a), Rotation.from_euler("y", a).as_matrix(), atol=1e-14)
        np.testing.assert_allclose(rot_z(a), Rotation.from_euler("z", a).as_matrix(), atol=1e-14)


def test_euler_xyz_matches_scipy_intrinsic():
    theta = np.array([0.21, -0.43, 0.8])
    expected = Rotation.from_euler("XYZ", theta).as_matrix()
    np.testing.assert_allclose(euler_xyz_to_matrix(theta), expected, atol=1e-14)


@given(a=angles, b=angles, c=angles)
def test_euler_round_trip(a, b, c):
    theta = np.array([a, b, c])
    r = euler_xyz_to_matrix(theta)
    back = matrix_to_euler_xyz(r)
    np.testing.assert_allclose(euler_xyz_to_matrix(back), r, atol=1e-12)


@given(st.lists(st.floats(min_value=-5, max_value=5), min_size=3, max_size=3),
       st.lists(st.floats(min_value=-5, max_value=5), min_size=3, max_size=3))
def test_skew_is_cross_product(v, u):
    v, u = np.array(v), np.array(u)
    np.testing.assert_allclose(skew(v) @ u, np.cross(v, u), atol=1e-12)


def test_vee_inverts_skew():
    v = np.array([0.4, -2.0, 1.3])
    np.testing.assert_allclose(vee(skew(v)), v)


def test_rotation_about_axis_matches_scipy():
    axis = np.array([1.0, 2.0, -0.5])
    axis /= np.linalg.norm(axis)
    expected = Rotation.from_rotvec(0.7 * axis).as_matrix()
    np.testing.assert_allclose(rotation_about_axis(axis, 0.7), expected, atol=1e-14)


def test_rate_map_consistent_with_rotation_derivative():
    # omega = E(theta) thetadot must reproduce vee(Rdot R^T); Rdot obtained by
    # complex step along the flow, exact to roundoff.
    rng = np.random.default_rng(3)
    for _ in range(20):
        theta = rng.uniform(-1.3, 1.3, 3)
        theta_dot = rng.uniform(-2, 2, 3)
        h = 1e-30
        rc = euler_xyz_to_matrix(theta + 1j * h * theta_dot)
        rdot = np.imag(rc) / h
        r = euler_xyz_to_matrix(theta)
        omega = vee(rdot @ r.T)
        np.testing.assert_allclose(euler_rate_map(theta) @ theta_dot, omega, atol=1e-12)


def test_rate_map_dot_matches_complex_step():
    rng = np.random.default_rng(4)
    theta = rng.uniform(-1.0, 1.0, 3)
    theta_dot = rng.uniform(-2, 2, 3)
    h = 1e-30
    ec = euler_rate_map(theta + 1j * h * theta_dot)
    np.testing.assert_allclose(euler_rate_map_dot(theta, theta_dot), np.imag(ec) / h, atol=1e-12)


def test_rate_map_determinant_is_cos_pitch():
    theta = np.array([0.5, 0.9, -1.1])
    assert np.linalg.det(euler_rate_map(theta)) == pytest.approx(np.cos(0.9), abs=1e-12)
