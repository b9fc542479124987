"""Forward kinematics, Jacobians, and velocity/bias propagation.

All routines are dtype-polymorphic: passing a complex q (or qdot) propagates
imaginary parts exactly, which the dynamics and planner layers exploit for
complex-step differentiation (machine-precision directional derivatives with
no subtractive cancellation).

Frames: each link frame sits at its parent joint; the world pose of link i is
(R[i], p[i]). Jacobians map qdot to world-frame quantities.
"""

import numpy as np

from .rotations import (
    euler_rate_map,
    euler_rate_map_dot,
    euler_xyz_to_matrix,
    rot_y,
    rotation_about_axis,
)


class FK:
    """Container for one forward-kinematics evaluation."""

    __slots__ = ("model", "q", "R", "p", "axis_w", "com_links", "com", "contacts")

    def __init__(self, model, q, R, p, axis_w, com_links, com, contacts):
        self.model = model
        self.q = q
        self.R = R                  # per-link world rotation
        self.p = p                  # per-link frame origin (= parent joint position)
        self.axis_w = axis_w        # per-link world axis of the parent joint (None for base)
        self.com_links = com_links  # per-link CoM position
        self.com = com              # whole-body CoM
        self.contacts = contacts    # per-contact world position, model.contacts order


def fk(model, q):
    """Forward kinematics for all link frames, CoMs, and contact points."""
    q = np.asarray(q)
    if q.shape != (model.dof,):
        raise ValueError(f"q must have shape ({model.dof},), got {q.shape}")
    n_links = len(model.link_order)
    R = [None] * n_links
    p = [None] * n_links
    axis_w = [None] * n_links
    if model.planar:
        R[0] = rot_y(q[2])
        p[0] = np.array([q[0], q[0] * 0.0, q[1]])
    else:
        R[0] = euler_xyz_to_matrix(q[3:6])
        p[0] = q[0:3]
    for i in range(1, n_links):
        par = model.parent_index[i]
        joint = model.parent_joint[i]
        k = model.joint_dof[joint.name]
        p[i] = p[par] + R[par] @ joint.origin
        axis_w[i] = R[par] @ joint.axis
        R[i] = R[par] @ rotation_about_axis(joint.axis, q[k])
    com_links = [p[i] + R[i] @ model.link_order[i].com for i in range(n_links)]
    com = sum(model.link_order[i].mass * com_links[i] for i in range(n_links))
    com = com / model.total_mass
    contacts = []
    for c in model.contacts:
        i = model.link_index[c.link]
        contacts.append(p[i] + R[i] @ c.offset)
    return FK(model, q, R, p, axis_w, com_links, com, contacts)


def _chain(model, i):
    """Link indices from the base link down to link i (inclusive), base first."""
    rev = []
    while i >= 0:
        rev.append(i)
        i = model.parent_index[i]
    return rev[::-1]


def angular_jacobian(model, fkr, link):
    """3 x dof map from qdot to the world angular velocity of a link frame."""
    n = model.dof
    J = np.zeros((3, n), dtype=np.result_type(fkr.q.dtype, float))
    if model.planar:
        J[1, 2] = 1.0
    else:
        J[:, 3:6] = euler_rate_map(fkr.q[3:6])
    for i in _chain(model, link)[1:]:
        k = model.joint_dof[model.parent_joint[i].name]
        J[:, k] = fkr.axis_w[i]
    return J


def point_jacobian(model, fkr, link, point):
    """3 x dof map from qdot to the world velocity of a point fixed on a link."""
    n = model.dof
    J = np.zeros((3, n), dtype=np.result_type(fkr.q.dtype, np.asarray(point).dtype, float))
    if model.planar:
        J[0, 0] = 1.0
        J[2, 1] = 1.0
        J[:, 2] = np.cross(np.array([0.0, 1.0, 0.0]), point - fkr.p[0])
    else:
        J[0, 0] = J[1, 1] = J[2, 2] = 1.0
        E = euler_rate_map(fkr.q[3:6])
        r = point - fkr.p[0]
        for k in range(3):
            J[:, 3 + k] = np.cross(E[:, k], r)
    for i in _chain(model, link)[1:]:
        k = model.joint_dof[model.parent_joint[i].name]
        J[:, k] = np.cross(fkr.axis_w[i], point - fkr.p[i])
    return J


def com_jacobian(model, fkr):
    """3 x dof map from qdot to the CoM velocity (mass-weighted average)."""
    J = np.zeros((3, model.dof), dtype=np.result_type(fkr.q.dtype, float))
    for i, link in enumerate(model.link_order):
        if link.mass == 0.0:
            continue
        J = J + (link.mass / model.total_mass) * point_jacobian(model, fkr, i, fkr.com_links[i])
    return J


def contact_jacobian(model, fkr):
    """Stacked (3*n_contacts) x dof contact-point Jacobian, model.contacts order."""
    rows = []
    for c, pt in zip(model.contacts, fkr.contacts):
        rows.append(point_jacobian(model, fkr, model.link_index[c.link], pt))
    return np.vstack(rows) if rows else np.zeros((0, model.dof))


def link_motion(model, fkr, qdot):
    """World angular velocity and frame-origin velocity for every link.

    Returns (omega, v) lists. Propagated recursively, so the cost is linear in
    the number of links.
    """
    qdot = np.asarray(qdot)
    n_links = len(model.link_order)
    omega = [None] * n_links
    v = [None] * n_links
    if model.planar:
        omega[0] = np.array([qdot[0] * 0.0, qdot[2], qdot[0] * 0.0])
        v[0] = np.array([qdot[0], qdot[0] * 0.0, qdot[1]])
    else:
        omega[0] = euler_rate_map(fkr.q[3:6]) @ qdot[3:6]
        v[0] = qdot[0:3]
    for i in range(1, n_links):
        par = model.parent_index[i]
        k = model.joint_dof[model.parent_joint[i].name]
        omega[i] = omega[par] + fkr.axis_w[i] * qdot[k]
        v[i] = v[par] + np.cross(omega[par], fkr.p[i] - fkr.p[par])
    return omega, v


def link_bias_accelerations(model, fkr, qdot):
    """Frame angular and origin linear accelerations at qddot = 0.

    Returns (omega, v, alpha_b, a_b): the velocity recursion outputs plus the
    bias accelerations of each link frame.
    """
    qdot = np.asarray(qdot)
    omega, v = link_motion(model, fkr, qdot)
    n_links = len(model.link_order)
    alpha = [None] * n_links
    a = [None] * n_links
    zero3 = np.zeros(3, dtype=np.result_type(fkr.q.dtype, qdot.dtype, float))
    if model.planar:
        alpha[0] = zero3
        a[0] = zero3
    else:
        alpha[0] = euler_rate_map_dot(fkr.q[3:6], qdot[3:6]) @ qdot[3:6]
        a[0] = zero3
    for i in range(1, n_links):
        par = model.parent_index[i]
        k = model.joint_dof[model.parent_joint[i].name]
        r = fkr.p[i] - fkr.p[par]
        alpha[i] = alpha[par] + np.cross(omega[par], fkr.axis_w[i] * qdot[k])
        a[i] = a[par] + np.cross(alpha[par], r) + np.cross(omega[par], np.cross(omega[par], r))
    return omega, v, alpha, a


def point_velocity(omega_i, v_i, p_frame, point):
    """Velocity of a point fixed on a link given the frame twist."""
    return v_i + np.cross(omega_i, point - p_frame)


def point_bias_acceleration(omega_i, alpha_i, a_i, p_frame, point):
    """Acceleration at qddot = 0 of a point fixed on a link."""
    r = point - p_frame
    return a_i + np.cross(alpha_i, r) + np.cross(omega_i, np.cross(omega_i, r))


def contact_state(model, fkr, qdot):
    """Contact-point velocities and bias accelerations, stacked (n_c, 3)."""
    omega, v, alpha, a = link_bias_accelerations(model, fkr, qdot)
    vels, biases = [], []
    for c, pt in zip(model.contacts, fkr.contacts):
        i = model.link_index[c.link]
        vels.append(point_velocity(omega[i], v[i], fkr.p[i], pt))
        biases.append(point_bias_acceleration(omega[i], alpha[i], a[i], fkr.p[i], pt))
    n = np.result_type(fkr.q.dtype, np.asarray(qdot).dtype, float)
    if not vels:
        return np.zeros((0, 3), dtype=n), np.zeros((0, 3), dtype=n)
    return np.array(vels), np.array(biases)
