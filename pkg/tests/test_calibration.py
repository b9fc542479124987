"""Leg-inertia calibration: posture sampling, fitting, and the angle chart.

The load-bearing oracle is the point-mass-leg model: with all leg mass in the
feet and the hips on the body centerline, the actuated inertia about the CoM
is exactly 2*m_foot*|xi|^2 on the horizontal axes and 0 about the vertical,
so the fit must recover (4, 4, 0) at machine precision for 2 kg feet.
"""

import time

import numpy as np
import pytest

from jumpctl.calibration import (
    approx_actuated_inertia,
    balanced_crouch,
    calibrate_inertia,
    feasible_height_bracket,
    leg_angles,
    leg_direction,
    leg_length,
    posture_at_leg_length,
    prediction_error,
)
from jumpctl.errors import (
    DegenerateFitError,
    InvalidInputError,
    UnreachableTargetError,
)
from jumpctl.kinematics import fk
from jumpctl.rotations import euler_xyz_to_matrix


def test_leg_angles_invert_leg_direction():
    rng = np.random.default_rng(7)
    for _ in range(50):
        xi = rng.normal(size=3)
        if np.linalg.norm(xi) < 1e-3:
            continue
        theta = leg_angles(xi)
        assert theta[2] == 0.0
        np.testing.assert_allclose(
            leg_direction(theta), -xi / np.linalg.norm(xi), atol=1e-12)


def test_leg_angles_rejects_zero_vector():
    with pytest.raises(InvalidInputError):
        leg_angles(np.zeros(3))


def test_leg_direction_ignores_yaw():
    theta = np.array([0.3, -0.2, 0.0])
    for yaw in (0.5, -1.2, 3.0):
        np.testing.assert_allclose(
            leg_direction(theta),
            leg_direction(theta + [0.0, 0.0, yaw]),
            atol=1e-14)


class _FakeCalib:
    def __init__(self, k):
        self.k_xi = np.asarray(k, dtype=float)

    def predict_diag(self, length):
        k = self.k_xi
        return np.array([k[0] * length**2, k[1] * length**2, k[2]])


def test_approx_inertia_diagonal_at_zero_angles():
    calib = _FakeCalib([0.51, 0.62, 0.07])
    i_a = approx_actuated_inertia(calib, np.array([0.0, 0.0, -0.5]),
                                  np.zeros(3))
    np.testing.assert_allclose(
        i_a, np.diag([0.51 * 0.25, 0.62 * 0.25, 0.07]), atol=1e-12)


def test_approx_inertia_rotates_with_leg_angles():
    calib = _FakeCalib([0.51, 0.62, 0.07])
    theta = np.array([0.4, -0.25, 0.1])
    xi = np.array([0.1, -0.05, -0.45])
    i_a = approx_actuated_inertia(calib, xi, theta)
    R = euler_xyz_to_matrix(theta)
    ell = np.linalg.norm(xi)
    expected = R.T @ np.diag([0.51 * ell**2, 0.62 * ell**2, 0.07]) @ R
    np.testing.assert_allclose(i_a, expected, atol=1e-12)
    np.testing.assert_allclose(i_a, i_a.T, atol=1e-14)


def test_approx_inertia_enforces_min_length():
    calib = _FakeCalib([0.5, 0.5, 0.1])
    with pytest.raises(InvalidInputError):
        approx_actuated_inertia(calib, np.array([0.0, 0.0, -0.1]),
                                np.zeros(3), xi_min=0.2)


@pytest.mark.parametrize("model_name", ["planar5", "kuavo16", "pointleg5"])
def test_balanced_crouch_feet_on_ground(model_name, request):
    model = request.getfixturevalue(model_name)
    lo, hi = feasible_height_bracket(model)
    for h in np.linspace(lo, hi, 5):
        q = balanced_crouch(model, h)
        r = fk(model, q)
        centroid = np.mean(r.contacts, axis=0)
        for c in r.contacts:
            assert abs(c[2]) < 1e-9
        assert abs(centroid[0] - r.com[0]) < 1e-9
        qlo, qhi = model.joint_limits()
        assert np.all(q >= qlo - 1e-9)
        assert np.all(q <= qhi + 1e-9)


def test_balanced_crouch_unreachable_height_reports_closest(planar5):
    with pytest.raises(UnreachableTargetError) as exc:
        balanced_crouch(planar5, 2.0)
    assert exc.value.closest is not None
    assert exc.value.closest.shape == (planar5.dof,)


def test_posture_at_leg_length_hits_target(kuavo16):
    for target in (0.42, 0.50, 0.58):
        q = posture_at_leg_length(kuavo16, target)
        assert abs(leg_length(kuavo16, q) - target) < 1e-6


def test_posture_at_leg_length_rejects_unreachable(kuavo16):
    with pytest.raises(UnreachableTargetError):
        posture_at_leg_length(kuavo16, 0.95)


def test_pointleg_fit_recovers_exact_law(pointleg5):
    calib = calibrate_inertia(pointleg5, np.linspace(0.38, 0.56, 12))
    np.testing.assert_allclose(calib.k_xi, [4.0, 4.0, 0.0], atol=1e-9)
    np.testing.assert_allclose(calib.fit_r2, [1.0, 1.0, 1.0], atol=1e-12)
    assert prediction_error(calib) < 1e-9


def test_massless_legs_fit_to_zero(masslessleg5):
    calib = calibrate_inertia(masslessleg5, np.linspace(0.45, 0.65, 12))
    np.testing.assert_allclose(calib.k_xi, 0.0, atol=1e-12)
    # flat zero samples count as a perfect fit, not an undefined one
    np.testing.assert_allclose(calib.fit_r2, 1.0, atol=1e-12)


def test_predict_diag_matches_coefficients(pointleg5):
    calib = calibrate_inertia(pointleg5, np.linspace(0.38, 0.56, 12))
    d = calib.predict_diag(0.47)
    np.testing.assert_allclose(
        d, [calib.k_xi[0] * 0.47**2, calib.k_xi[1] * 0.47**2, calib.k_xi[2]],
        atol=1e-12)


def test_kuavo_window_covers_calibration_range(kuavo16):
    lo, hi = feasible_height_bracket(kuavo16)
    assert leg_length(kuavo16, balanced_crouch(kuavo16, lo)) < 0.40
    assert leg_length(kuavo16, balanced_crouch(kuavo16, hi)) > 0.60


def test_kuavo_fit_quality_and_runtime(kuavo16):
    start = time.perf_counter()
    calib = calibrate_inertia(kuavo16, np.linspace(0.40, 0.60, 20))
    elapsed = time.perf_counter() - start
    assert calib.fit_r2[0] > 0.99
    assert calib.fit_r2[1] > 0.99
    assert prediction_error(calib) < 0.05
    assert elapsed < 5.0
    # both horizontal coefficients from the same leg geometry
    assert abs(calib.k_xi[0] - calib.k_xi[1]) / calib.k_xi[0] < 0.05


def test_planar_fit_over_reachable_range(planar5):
    calib = calibrate_inertia(planar5, np.linspace(0.38, 0.52, 12))
    assert calib.k_xi[0] > 0.0
    assert calib.k_xi[1] > 0.0
    assert calib.fit_r2[0] > 0.99
    assert calib.fit_r2[1] > 0.99


def test_fit_needs_ten_samples(kuavo16):
    with pytest.raises(DegenerateFitError):
        calibrate_inertia(kuavo16, np.linspace(0.42, 0.55, 9))


def test_fit_needs_length_spread(kuavo16):
    with pytest.raises(DegenerateFitError):
        calibrate_inertia(kuavo16, np.full(12, 0.5))


def test_calibration_is_reproducible(kuavo16):
    a = calibrate_inertia(kuavo16, np.linspace(0.40, 0.60, 20))
    b = calibrate_inertia(kuavo16, np.linspace(0.40, 0.60, 20))
    np.testing.assert_array_equal(a.k_xi, b.k_xi)
    np.testing.assert_array_equal(a.inertia_diag, b.inertia_diag)
