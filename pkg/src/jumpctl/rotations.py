"""Rotation and Euler-angle helpers.

Conventions used across the package:

- world frame: x forward, y left, z up; gravity acts along -z.
- base orientation chart: X-Y-Z Euler angles, ``R = Rx(a) @ Ry(b) @ Rz(c)``,
  so q holds (a, b, c) and qdot holds their time derivatives.
- ``euler_rate_map`` maps Euler rates to the world-frame angular velocity.

Every function below is polynomial/trigonometric in its inputs with no
branching on values, so complex-step differentiation through them is exact.
"""

import numpy as np


def skew(v):
    """3x3 matrix S with S @ u = v x u."""
    z = v[0] * 0.0
    return np.array([[z, -v[2], v[1]], [v[2], z, -v[0]], [-v[1], v[0], z]])


def vee(s):
    """Inverse of skew for a (not necessarily exactly) antisymmetric matrix.

    Returns (s[2,1], s[0,2], s[1,0]), the convention the IK orientation
    feedback relies on.
    """
    return np.array([s[2, 1], s[0, 2], s[1, 0]])


def rot_x(a):
    c, s = np.cos(a), np.sin(a)
    o, z = c * 0.0 + 1.0, c * 0.0
    return np.array([[o, z, z], [z, c, -s], [z, s, c]])


def rot_y(a):
    c, s = np.cos(a), np.sin(a)
    o, z = c * 0.0 + 1.0, c * 0.0
    return np.array([[c, z, s], [z, o, z], [-s, z, c]])


def rot_z(a):
    c, s = np.cos(a), np.sin(a)
    o, z = c * 0.0 + 1.0, c * 0.0
    return np.array([[c, -s, z], [s, c, z], [z, z, o]])


def rotation_about_axis(axis, angle):
    """Rodrigues rotation about a unit axis. The axis must be pre-normalized."""
    c, s = np.cos(angle), np.sin(angle)
    k = skew(axis)
    return np.eye(3) * c + np.outer(axis, axis) * (1.0 - c) + k * s


def euler_xyz_to_matrix(theta):
    """R = Rx(theta[0]) @ Ry(theta[1]) @ Rz(theta[2])."""
    return rot_x(theta[0]) @ rot_y(theta[1]) @ rot_z(theta[2])


def matrix_to_euler_xyz(r):
    """Inverse of euler_xyz_to_matrix; pitch is resolved to [-pi/2, pi/2]."""
    b = np.arcsin(np.clip(r[0, 2], -1.0, 1.0))
    a = np.arctan2(-r[1, 2], r[2, 2])
    c = np.arctan2(-r[0, 1], r[0, 0])
    return np.array([a, b, c])


def euler_rate_map(theta):
    """E(theta) with omega_world = E @ theta_dot for the X-Y-Z chart.

    Columns are the world-frame axes the successive Euler rates rotate about:
    E = [x_hat | Rx(a) y_hat | Rx(a) Ry(b) z_hat]. det(E) = cos(b), so the
    chart degenerates at pitch +-pi/2 (far outside the jumping envelope).
    """
    a, b = theta[0], theta[1]
    ca, sa = np.cos(a), np.sin(a)
    cb, sb = np.cos(b), np.sin(b)
    o, z = ca * 0.0 + 1.0, ca * 0.0
    return np.array([[o, z, sb], [z, ca, -sa * cb], [z, sa, ca * cb]])


def euler_rate_map_dot(theta, theta_dot):
    """Time derivative of euler_rate_map along theta_dot."""
    a, b = theta[0], theta[1]
    da, db = theta_dot[0], theta_dot[1]
    ca, sa = np.cos(a), np.sin(a)
    cb, sb = np.cos(b), np.sin(b)
    z = ca * 0.0
    return np.array(
        [
            [z, z, cb * db],
            [z, -sa * da, -ca * da * cb + sa * sb * db],
            [z, ca * da, -sa * da * cb - ca * sb * db],
        ]
    )
