"""Forward kinematics and Jacobian checks.

The FK oracle for the planar model is written out with explicit trigonometry
(independent of the rotation helpers); derivative checks use complex-step
differentiation along the flow, which is exact to roundoff for this codebase.
"""

import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from jumpctl.kinematics import (
    angular_jacobian,
    com_jacobian,
    contact_jacobian,
    contact_state,
    fk,
    link_bias_accelerations,
    link_motion,
    point_jacobian,
)
from tests.conftest import random_states

CS = 1e-30


def flow_step(q, qdot):
    return np.asarray(q, dtype=complex) + 1j * CS * np.asarray(qdot, dtype=float)


def test_planar5_fk_hand_trig(planar5):
    # q = (x, z, pitch, hipL, kneeL, hipR, kneeR); hip/knee rotate about -y so
    # a positive hip angle swings the leg forward.
    q = np.array([0.3, 0.9, 0.2, 0.5, -1.0, -0.3, 0.1])
    r = fk(planar5, q)
    l_th, l_sh = 0.23, 0.26

    hip = np.array([0.3, 0.08, 0.9])           # Ry(pitch) leaves y untouched
    th = 0.2 - 0.5                              # world thigh pitch about +y
    knee = hip + l_th * np.array([-np.sin(th), 0.0, -np.cos(th)])
    sh = th - (-1.0)
    foot = knee + l_sh * np.array([-np.sin(sh), 0.0, -np.cos(sh)])

    i_thigh = planar5.link_index["thigh_l"]
    i_calf = planar5.link_index["calf_l"]
    np.testing.assert_allclose(r.p[i_thigh], hip, atol=1e-12)
    np.testing.assert_allclose(r.p[i_calf], knee, atol=1e-12)
    np.testing.assert_allclose(r.contacts[0], foot, atol=1e-12)


def test_planar5_nominal_feet_on_ground(planar5):
    r = fk(planar5, planar5.nominal_posture)
    for c in r.contacts:
        assert abs(c[2]) < 5e-4
    assert r.contacts[0][0] == pytest.approx(0.07, abs=1e-3)
    assert r.contacts[1][0] == pytest.approx(-0.07, abs=1e-3)


def test_kuavo16_nominal_feet_on_ground(kuavo16):
    r = fk(kuavo16, kuavo16.nominal_posture)
    for c in r.contacts:
        assert abs(c[2]) < 5e-4


def test_floating_base_orientation_matches_scipy(kuavo16):
    q = kuavo16.nominal_posture.copy()
    q[3:6] = [0.11, -0.25, 0.4]
    r = fk(kuavo16, q)
    expected = Rotation.from_euler("XYZ", q[3:6]).as_matrix()
    np.testing.assert_allclose(r.R[0], expected, atol=1e-14)


def test_com_is_mass_weighted_average(planar5):
    q = planar5.nominal_posture
    r = fk(planar5, q)
    acc = sum(l.mass * r.com_links[i] for i, l in enumerate(planar5.link_order))
    np.testing.assert_allclose(r.com, acc / planar5.total_mass, atol=1e-14)


@pytest.mark.parametrize("model_name", ["planar5", "kuavo16"])
def test_point_jacobian_is_velocity_map(model_name, request):
    model = request.getfixturevalue(model_name)
    for q, qdot in random_states(model, 10, seed=11):
        rc = fk(model, flow_step(q, qdot))
        r = fk(model, q)
        for i in range(len(model.link_order)):
            v_cs = np.imag(rc.com_links[i]) / CS
            J = point_jacobian(model, r, i, r.com_links[i])
            np.testing.assert_allclose(J @ qdot, v_cs, atol=1e-11)


@pytest.mark.parametrize("model_name", ["planar5", "kuavo16"])
def test_angular_jacobian_is_rotation_rate_map(model_name, request):
    from jumpctl.rotations import vee

    model = request.getfixturevalue(model_name)
    for q, qdot in random_states(model, 10, seed=12):
        rc = fk(model, flow_step(q, qdot))
        r = fk(model, q)
        for i in range(len(model.link_order)):
            rdot = np.imag(rc.R[i]) / CS
            omega_cs = vee(rdot @ r.R[i].T)
            J = angular_jacobian(model, r, i)
            np.testing.assert_allclose(J @ qdot, omega_cs, atol=1e-11)


def test_com_jacobian_matches_complex_step(kuavo16):
    for q, qdot in random_states(kuavo16, 5, seed=13):
        rc = fk(kuavo16, flow_step(q, qdot))
        r = fk(kuavo16, q)
        v_cs = np.imag(rc.com) / CS
        np.testing.assert_allclose(com_jacobian(kuavo16, r) @ qdot, v_cs, atol=1e-11)


def test_contact_jacobian_matches_point_rows(planar5):
    q = planar5.nominal_posture
    r = fk(planar5, q)
    J = contact_jacobian(planar5, r)
    assert J.shape == (6, 7)
    for k, c in enumerate(planar5.contacts):
        Jk = point_jacobian(planar5, r, planar5.link_index[c.link], r.contacts[k])
        np.testing.assert_array_equal(J[3 * k : 3 * k + 3], Jk)


@pytest.mark.parametrize("model_name", ["planar5", "kuavo16"])
def test_link_motion_matches_jacobians(model_name, request):
    model = request.getfixturevalue(model_name)
    for q, qdot in random_states(model, 10, seed=14):
        r = fk(model, q)
        omega, v = link_motion(model, r, qdot)
        for i in range(len(model.link_order)):
            np.testing.assert_allclose(
                omega[i], angular_jacobian(model, r, i) @ qdot, atol=1e-12)
            np.testing.assert_allclose(
                v[i], point_jacobian(model, r, i, r.p[i]) @ qdot, atol=1e-12)


@pytest.mark.parametrize("model_name", ["planar5", "kuavo16"])
def test_bias_accelerations_are_velocity_rates(model_name, request):
    # At qddot = 0 the frame accelerations equal d/dt of the velocity
    # recursion along the flow q(t).
    model = request.getfixturevalue(model_name)
    for q, qdot in random_states(model, 8, seed=15):
        r = fk(model, q)
        rc = fk(model, flow_step(q, qdot))
        omega_c, v_c = link_motion(model, rc, qdot)
        _, _, alpha, a = link_bias_accelerations(model, r, qdot)
        for i in range(len(model.link_order)):
            np.testing.assert_allclose(alpha[i], np.imag(omega_c[i]) / CS, atol=1e-10)
            np.testing.assert_allclose(a[i], np.imag(v_c[i]) / CS, atol=1e-10)


def test_contact_state_rates(planar5):
    for q, qdot in random_states(planar5, 6, seed=16):
        r = fk(planar5, q)
        vels, biases = contact_state(planar5, r, qdot)
        rc = fk(planar5, flow_step(q, qdot))
        vels_c, _ = contact_state(planar5, rc, qdot)
        np.testing.assert_allclose(vels, np.real(vels_c), atol=1e-12)
        np.testing.assert_allclose(biases, np.imag(vels_c) / CS, atol=1e-10)
        J = contact_jacobian(planar5, r)
        np.testing.assert_allclose(vels.ravel(), J @ qdot, atol=1e-12)
