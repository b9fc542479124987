"""Centroidal quantities and joint-space dynamics terms.

Conventions:

- The centroidal frame is world-aligned and centered at the instantaneous CoM.
- The 6D momentum is ordered angular-first: H = [h; m*rdot].
- The locked rotational inertia about the CoM (3x3) splits into a
  floating-base part (links rigidly attached to the base) and an actuated
  part (links moved by at least one revolute joint). The full 6x6 composite
  inertia is recoverable from (I_h, total mass, CoM) but nothing downstream
  needs it: the flight-model controller works with the 3x3 rotational block.
"""

import numpy as np

from .errors import SingularInertiaError
from .kinematics import (
    angular_jacobian,
    com_jacobian,
    contact_jacobian,
    contact_state,
    fk,
    link_bias_accelerations,
    point_bias_acceleration,
    point_velocity,
    point_jacobian,
)
from .rotations import skew

_CS_STEP = 1e-30


def cmm(model, q, fkr=None):
    """Centroidal momentum matrix A(q): [h; m*rdot] = A(q) @ qdot (6 x dof)."""
    fkr = fkr if fkr is not None else fk(model, q)
    dt = np.result_type(np.asarray(q).dtype, float)
    A_ang = np.zeros((3, model.dof), dtype=dt)
    A_lin = np.zeros((3, model.dof), dtype=dt)
    for i, link in enumerate(model.link_order):
        Jw = angular_jacobian(model, fkr, i)
        Jv = point_jacobian(model, fkr, i, fkr.com_links[i])
        I_w = fkr.R[i] @ link.inertia @ fkr.R[i].T
        d = fkr.com_links[i] - fkr.com
        A_ang = A_ang + I_w @ Jw + link.mass * (skew(d) @ Jv)
        A_lin = A_lin + link.mass * Jv
    return np.vstack([A_ang, A_lin])


def centroidal_momentum(model, q, qdot):
    """H = [h; m*rdot] evaluated by the link-momentum sum (not via the CMM)."""
    fkr = fk(model, q)
    omega, v = _link_com_motion(model, fkr, qdot)
    h = np.zeros(3, dtype=np.result_type(np.asarray(q).dtype, np.asarray(qdot).dtype, float))
    lin = np.zeros_like(h)
    for i, link in enumerate(model.link_order):
        I_w = fkr.R[i] @ link.inertia @ fkr.R[i].T
        d = fkr.com_links[i] - fkr.com
        h = h + I_w @ omega[i] + link.mass * np.cross(d, v[i])
        lin = lin + link.mass * v[i]
    return np.concatenate([h, lin])


def _link_com_motion(model, fkr, qdot):
    from .kinematics import link_motion

    omega, v = link_motion(model, fkr, qdot)
    v_com = [
        point_velocity(omega[i], v[i], fkr.p[i], fkr.com_links[i])
        for i in range(len(model.link_order))
    ]
    return omega, v_com


def momentum_rate_bias(model, q, qdot):
    """Adot(q, qdot) @ qdot, the 6D momentum rate at qddot = 0.

    Evaluated by complex-step differentiation of the momentum along the flow
    q(t): exact to roundoff.
    """
    qc = np.asarray(q, dtype=complex) + 1j * _CS_STEP * np.asarray(qdot, dtype=float)
    return np.imag(centroidal_momentum(model, qc, qdot)) / _CS_STEP


def ccrbi(model, q, fkr=None):
    """Locked rotational inertia about the CoM and its base/actuated split.

    Returns (I_h, I_h_f, I_h_a) with I_h = I_h_f + I_h_a exactly (the split is
    a partition of the link sum).
    """
    fkr = fkr if fkr is not None else fk(model, q)
    dt = np.result_type(np.asarray(q).dtype, float)
    I_f = np.zeros((3, 3), dtype=dt)
    I_a = np.zeros((3, 3), dtype=dt)
    for i, link in enumerate(model.link_order):
        I_w = fkr.R[i] @ link.inertia @ fkr.R[i].T
        d = fkr.com_links[i] - fkr.com
        contrib = I_w + link.mass * ((d @ d) * np.eye(3) - np.outer(d, d))
        if link.name in model.actuated_links:
            I_a = I_a + contrib
        else:
            I_f = I_f + contrib
    return I_f + I_a, I_f, I_a


def average_angular_velocity(I_h, h):
    """Whole-body average angular velocity: solve I_h @ w = h.

    Raises SingularInertiaError when the locked inertia is singular or close
    enough that the solve is meaningless (condition-based guard).
    """
    I_h = np.asarray(I_h, dtype=float)
    try:
        evals = np.linalg.eigvalsh(0.5 * (I_h + I_h.T))
    except np.linalg.LinAlgError as e:
        raise SingularInertiaError("locked inertia eigensolve failed") from e
    if evals[0] <= 1e-12 * max(evals[-1], 1.0):
        raise SingularInertiaError(
            f"locked inertia is singular (eigenvalues {evals})"
        )
    return np.linalg.solve(I_h, np.asarray(h, dtype=float))


def dynamics_terms(model, q, qdot):
    """Joint-space mass matrix M(q) and bias C(q, qdot).

    M qddot + C = generalized applied forces; C contains Coriolis, centrifugal
    and gravity. Assembled per link from world-frame Jacobians and Newton-Euler
    bias accelerations, so the floating-base rows reproduce Newton/Euler for
    the whole body exactly.
    """
    fkr = fk(model, q)
    n = model.dof
    dt = np.result_type(np.asarray(q).dtype, np.asarray(qdot).dtype, float)
    M = np.zeros((n, n), dtype=dt)
    C = np.zeros(n, dtype=dt)
    omega, v, alpha, a = link_bias_accelerations(model, fkr, qdot)
    g = model.gravity
    for i, link in enumerate(model.link_order):
        Jw = angular_jacobian(model, fkr, i)
        Jv = point_jacobian(model, fkr, i, fkr.com_links[i])
        I_w = fkr.R[i] @ link.inertia @ fkr.R[i].T
        M = M + Jw.T @ I_w @ Jw + link.mass * (Jv.T @ Jv)
        w_i = omega[i]
        a_ci = point_bias_acceleration(w_i, alpha[i], a[i], fkr.p[i], fkr.com_links[i])
        C = C + Jw.T @ (I_w @ alpha[i] + np.cross(w_i, I_w @ w_i))
        C = C + link.mass * (Jv.T @ a_ci) - link.mass * (Jv.T @ g)
    return M, C


def actuation_matrix(model):
    """Selection matrix mapping actuated torques into generalized forces."""
    n = model.dof
    na = n - model.nb
    S = np.zeros((n, na))
    S[model.nb :, :] = np.eye(na)
    return S


def contact_jacobian_full(model, q, fkr=None):
    """Stacked contact Jacobian (3*n_c x dof)."""
    fkr = fkr if fkr is not None else fk(model, q)
    return contact_jacobian(model, fkr)


def contact_bias(model, q, qdot, fkr=None):
    """Contact-point velocities and Jdot*qdot terms, stacked (n_c, 3) each."""
    fkr = fkr if fkr is not None else fk(model, q)
    return contact_state(model, fkr, qdot)
