"""Quadratic leg-inertia model: crouch sampling, fit, and evaluation.

The actuated part of the locked inertia is approximated by a leg-aligned
cuboid: diagonal (k1*|xi|^2, k2*|xi|^2, k3) in a frame whose -z axis points
down the virtual leg (CoM to mean contact point). Coefficients come from a
regression over statically balanced crouch postures.

The fit itself is a through-origin slope on the x/y axes and a plain mean on
z; the reported R^2 uses the ordinary with-intercept regression, which is the
statistic that says whether the relationship is linear at all.
"""

from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .dynamics import ccrbi
from .errors import DegenerateFitError, InvalidInputError, UnreachableTargetError
from .kinematics import com_jacobian, fk, point_jacobian
from .rotations import euler_xyz_to_matrix


def leg_angles(xi):
    """X-Y-Z Euler angles (roll, pitch, 0) of the leg line xi = r - rho.

    The angles orient the downward vertical onto the CoM-to-contact direction:
    leg_direction(leg_angles(xi)) == -xi/|xi|. A vertical leg maps to zero.
    """
    xi = np.asarray(xi, dtype=float)
    n = np.linalg.norm(xi)
    if n < 1e-12:
        raise InvalidInputError("leg vector has zero length")
    d = -xi / n
    b = np.arcsin(np.clip(-d[0], -1.0, 1.0))
    a = np.arctan2(d[1], -d[2])
    return np.array([a, b, 0.0])


def leg_direction(theta):
    """Unit vector the angles from leg_angles encode (downward when theta=0)."""
    return euler_xyz_to_matrix(theta) @ np.array([0.0, 0.0, -1.0])


@dataclass(frozen=True)
class InertiaCalibration:
    """Fitted cuboid coefficients with their fit diagnostics."""

    k_xi: np.ndarray          # (k1, k2, k3)
    fit_r2: np.ndarray        # per-axis R^2 of diag(I_a) against |xi|^2
    sample_range: tuple       # (min |xi|, max |xi|) over the samples
    lengths: np.ndarray       # sampled |xi|
    inertia_diag: np.ndarray  # (n, 3) measured diag of I_h_a per sample

    def predict_diag(self, length):
        """Model value of diag(I_h_a) at leg length |xi| = length."""
        return np.array([self.k_xi[0] * length**2,
                         self.k_xi[1] * length**2,
                         self.k_xi[2]])


def approx_actuated_inertia(calib, xi, theta, xi_min=0.0):
    """Cuboid approximation R(theta)' diag(k1|xi|^2, k2|xi|^2, k3) R(theta)."""
    n2 = float(np.dot(xi, xi))
    if n2 < xi_min * xi_min:
        raise InvalidInputError(
            f"leg length {np.sqrt(n2):.4f} below the minimum {xi_min}")
    r = euler_xyz_to_matrix(theta)
    d = np.diag([calib.k_xi[0] * n2, calib.k_xi[1] * n2, calib.k_xi[2]])
    return r.T @ d @ r


def _pitch_joint_dofs(model):
    """DoF indices of the sagittal leg joints (axis along +-y)."""
    ey = np.array([0.0, 1.0, 0.0])
    return [model.joint_dof[j.name] for j in model.revolute_joints
            if abs(np.dot(j.axis, ey)) > 0.9]


def balanced_crouch(model, base_height, q0=None, iters=120, tol=1e-11):
    """Symmetric crouch with the base at a given height and feet on the ground.

    The sagittal leg joints are solved by damped Gauss-Newton so that every
    contact point sits at z = 0 with the stance centered under the CoM (each
    foot keeps its nominal offset from the stance centroid, so staggered or
    heel/toe stances keep their shape). Base orientation stays nominal.
    Always starts from the nominal posture unless q0 is given: the iteration
    must land on the same fold branch no matter what was solved before it.
    """
    q = (model.nominal_posture if q0 is None else q0).copy().astype(float)
    if model.planar:
        q[1] = base_height
    else:
        q[2] = base_height
    dofs = _pitch_joint_dofs(model)

    r0 = fk(model, model.nominal_posture)
    centroid0 = np.mean(r0.contacts, axis=0)
    x_off = [c[0] - centroid0[0] for c in r0.contacts]

    best = np.inf
    stall = 0
    for _ in range(iters):
        r = fk(model, q)
        res = []
        rows = []
        cx = r.com[0]
        jcom = com_jacobian(model, r)
        for k, c in enumerate(model.contacts):
            li = model.link_index[c.link]
            jp = point_jacobian(model, r, li, r.contacts[k])
            res.extend([r.contacts[k][0] - (cx + x_off[k]), r.contacts[k][2]])
            rows.append(jp[0] - jcom[0])
            rows.append(jp[2])
        res = np.array(res)
        rnorm = np.linalg.norm(res, ord=np.inf)
        if rnorm < tol:
            break
        # out-of-reach heights plateau at the geometric gap; cut them off
        # early instead of exhausting the iteration budget
        if rnorm < best * (1.0 - 1e-3):
            best = rnorm
            stall = 0
        else:
            stall += 1
            if stall >= 25:
                raise UnreachableTargetError(
                    f"crouch at base height {base_height} stalled "
                    f"(residual {rnorm:.2e})", closest=q)
        J = np.vstack(rows)[:, dofs]
        step = np.linalg.lstsq(J.T @ J + 1e-10 * np.eye(len(dofs)),
                               J.T @ -res, rcond=None)[0]
        q[dofs] += np.clip(step, -0.5, 0.5)
    else:
        raise UnreachableTargetError(
            f"crouch at base height {base_height} did not converge "
            f"(residual {np.linalg.norm(res, ord=np.inf):.2e})",
            closest=q)

    lo, hi = model.joint_limits()
    if np.any(q < lo - 1e-9) or np.any(q > hi + 1e-9):
        raise UnreachableTargetError(
            f"crouch at base height {base_height} violates joint limits",
            closest=q)
    return q


def leg_length(model, q):
    """|xi| = distance from the CoM to the stance centroid."""
    r = fk(model, q)
    return float(np.linalg.norm(r.com - np.mean(r.contacts, axis=0)))


_BRACKET_CACHE = {}


def _crouch_ok(model, h):
    try:
        balanced_crouch(model, h)
    except UnreachableTargetError:
        return False
    return True


def feasible_height_bracket(model, probes=11):
    """Base-height interval over which the balanced crouch is solvable.

    Probed numerically (kinematic reach and joint limits both bind), then the
    edges are sharpened by bisection: the reachable window is narrow relative
    to the calibration range, so coarse edges would throw usable lengths away.
    Cached per model instance.
    """
    key = id(model)
    if key in _BRACKET_CACHE:
        return _BRACKET_CACHE[key]
    z0 = model.nominal_posture[1] if model.planar else model.nominal_posture[2]
    grid = np.linspace(0.5 * z0, 1.3 * z0, probes)
    ok = [_crouch_ok(model, h) for h in grid]
    if not any(ok):
        raise UnreachableTargetError("no feasible crouch height found")
    i_lo = ok.index(True)
    i_hi = len(ok) - 1 - ok[::-1].index(True)

    def refine(good, bad):
        for _ in range(14):
            mid = 0.5 * (good + bad)
            if _crouch_ok(model, mid):
                good = mid
            else:
                bad = mid
        return good

    lo = grid[i_lo] if i_lo == 0 else refine(grid[i_lo], grid[i_lo - 1])
    hi = grid[i_hi] if i_hi == len(grid) - 1 else refine(grid[i_hi], grid[i_hi + 1])
    bracket = (lo + 1e-5, hi - 1e-5)
    _BRACKET_CACHE[key] = bracket
    return bracket


def posture_at_leg_length(model, length, height_bracket=None):
    """Balanced crouch whose CoM-to-stance distance equals the given length."""
    if height_bracket is None:
        height_bracket = feasible_height_bracket(model)

    def gap(h):
        return leg_length(model, balanced_crouch(model, h)) - length

    lo, hi = height_bracket
    glo, ghi = gap(lo), gap(hi)
    if glo * ghi > 0:
        raise UnreachableTargetError(
            f"leg length {length} outside the reachable range "
            f"[{length + min(glo, ghi):.3f}, {length + max(glo, ghi):.3f}]")
    # 0.1 um on the length target; far below the sensitivity of anything
    # fitted from these postures
    h = brentq(gap, lo, hi, xtol=1e-7)
    return balanced_crouch(model, h)


def _r2(x, y):
    # with-intercept least squares; flat data with zero residual counts as a
    # perfect fit (the z axis of analytic models)
    A = np.column_stack([x, np.ones_like(x)])
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    ss_res = float(np.sum((y - A @ coef) ** 2))
    ss_tot = float(np.sum((y - np.mean(y)) ** 2))
    if ss_tot < 1e-18:
        return 1.0 if ss_res < 1e-18 else 0.0
    return 1.0 - ss_res / ss_tot


def calibrate_inertia(model, leg_lengths):
    """Fit the cuboid coefficients from balanced-crouch samples.

    Needs at least 10 distinct lengths. Raises DegenerateFitError when the
    sample set cannot identify a slope (too few points or no spread).
    """
    lengths = np.array(leg_lengths, dtype=float)
    if lengths.size < 10:
        raise DegenerateFitError(
            f"need at least 10 leg lengths, got {lengths.size}")
    if np.ptp(lengths) < 1e-6:
        raise DegenerateFitError("leg lengths have no spread")

    diag = np.empty((lengths.size, 3))
    for j, ell in enumerate(lengths):
        q = posture_at_leg_length(model, ell)
        fkr = fk(model, q)
        _, _, i_a = ccrbi(model, q, fkr)
        diag[j] = np.diag(i_a)
        # fit against the achieved length, not the request; the posture solve
        # carries a root-finding tolerance the fit should not inherit
        lengths[j] = np.linalg.norm(fkr.com - np.mean(fkr.contacts, axis=0))

    x = lengths**2
    k = np.array([
        float(np.dot(x, diag[:, 0]) / np.dot(x, x)),
        float(np.dot(x, diag[:, 1]) / np.dot(x, x)),
        float(np.mean(diag[:, 2])),
    ])
    r2 = np.array([_r2(x, diag[:, 0]), _r2(x, diag[:, 1]), _r2(x, diag[:, 2])])
    return InertiaCalibration(
        k_xi=k, fit_r2=r2,
        sample_range=(float(lengths.min()), float(lengths.max())),
        lengths=lengths, inertia_diag=diag)


def prediction_error(calib):
    """Worst relative error of the fitted model over the stored samples (x, y)."""
    worst = 0.0
    for ell, meas in zip(calib.lengths, calib.inertia_diag):
        pred = calib.predict_diag(ell)
        for ax in (0, 1):
            worst = max(worst, abs(pred[ax] - meas[ax]) / abs(meas[ax]))
    return worst
