"""Offline kinodynamic jump planning over a fixed contact schedule.

The planner transcribes centroidal dynamics coupled to full-body kinematics
into a sparse nonlinear program. Per knot the decision variables are the
posture and its rate, the CoM position/velocity/acceleration, the angular
momentum about the CoM and its rate, and per contact the force, the contact
point, and nonnegative weights expressing the force inside a friction
pyramid. Equalities tie the momentum variables to the posture through the
centroidal momentum matrix, pin CoM and contact points to forward
kinematics, and encode the Newton-Euler balance of the aggregate body;
inequalities keep forces inside the pyramid and under the force cap, hold
contact points still while loaded, and keep the CoM far enough from each
support point for the leg-inertia flight model downstream.

Integration between knots is trapezoidal for the CoM chain and the angular
momentum, backward Euler for the posture. The first and last knots are
constrained to zero generalized velocity, so every plan starts and ends at
rest; without that pin the optimizer shaves force cost by drifting net
momentum into the trajectory endpoints instead of supporting the weight.

The cost is a diagonal quadratic (force, CoM acceleration, momentum rate,
joint rate, posture deviation), so the solver runs in Gauss-Newton mode with
a constant sparse Hessian; constraint curvature is handled by the merit line
search.
"""

import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.optimize import nnls

from .dynamics import centroidal_momentum, cmm
from .errors import InvalidInputError, PlanningFailedError
from .kinematics import com_jacobian, contact_jacobian, fk
from .optim import NlpProblem, solve_nlp
from .rotations import skew
from .schedule import ContactSchedule

logger = logging.getLogger(__name__)

_CS_STEP = 1e-30


@dataclass
class KmpParams:
    """Planner limits, pyramid geometry, and cost weights."""

    q_star: np.ndarray         # nominal posture the cost pulls toward
    f_max: float = 2000.0      # per-contact force magnitude cap, N
    xi_min: float = 0.4        # minimum CoM-to-contact distance, m
    D: float = 0.5             # unloaded contact-point travel per step, m
    mu: float = 0.7            # friction coefficient
    n_edges: int = 4           # pyramid edges per contact point
    w_force: float = 1.0
    w_com_acc: float = 1.0
    w_momentum_rate: float = 1.0
    w_joint_rate: float = 1.0
    w_posture: float = 1.0

    def __post_init__(self):
        self.q_star = np.asarray(self.q_star, dtype=float).ravel()
        if not self.f_max > 0.0:
            raise InvalidInputError(f"f_max must be positive, got {self.f_max}")
        if not 0.0 < self.mu <= 1.5:
            raise InvalidInputError(f"mu must lie in (0, 1.5], got {self.mu}")
        if self.n_edges < 3:
            raise InvalidInputError(f"need at least 3 pyramid edges, got {self.n_edges}")
        if not self.xi_min > 0.0:
            raise InvalidInputError(f"xi_min must be positive, got {self.xi_min}")
        if not self.D > 0.0:
            raise InvalidInputError(f"D must be positive, got {self.D}")


@dataclass
class PlanTrajectory:
    """Knot-sampled whole-body jump reference.

    h/hd are the angular momentum about the CoM and its rate; the linear
    momentum is m*rd. f/rho/beta are per-contact force, contact point, and
    pyramid edge weights.
    """

    step_time: float
    times: np.ndarray          # (N,)
    q: np.ndarray              # (N, dof)
    qd: np.ndarray             # (N, dof)
    r: np.ndarray              # (N, 3)
    rd: np.ndarray             # (N, 3)
    rdd: np.ndarray            # (N, 3)
    h: np.ndarray              # (N, 3)
    hd: np.ndarray             # (N, 3)
    f: np.ndarray              # (N, n_contacts, 3)
    rho: np.ndarray            # (N, n_contacts, 3)
    beta: np.ndarray           # (N, n_contacts, n_edges)

    def __post_init__(self):
        n = self.times.shape[0]
        two_d = {"q": self.q, "qd": self.qd, "r": self.r, "rd": self.rd,
                 "rdd": self.rdd, "h": self.h, "hd": self.hd}
        for name, a in two_d.items():
            if a.ndim != 2 or a.shape[0] != n:
                raise InvalidInputError(f"{name} must be ({n}, ...), got {a.shape}")
        for name, a in (("f", self.f), ("rho", self.rho), ("beta", self.beta)):
            if a.ndim != 3 or a.shape[0] != n:
                raise InvalidInputError(f"{name} must be ({n}, contacts, ...), got {a.shape}")
        if self.q.shape != self.qd.shape:
            raise InvalidInputError("q and qd shapes differ")
        if self.f.shape != self.rho.shape or self.f.shape[2] != 3:
            raise InvalidInputError("f and rho must both be (N, contacts, 3)")
        if self.beta.shape[1] != self.f.shape[1]:
            raise InvalidInputError("beta contact count differs from f")

    @property
    def n_knots(self):
        return self.times.shape[0]

    @property
    def dof(self):
        return self.q.shape[1]

    @property
    def n_contacts(self):
        return self.f.shape[1]

    @property
    def n_edges(self):
        return self.beta.shape[2]

    @property
    def mean_forward_velocity(self):
        return float(np.mean(self.rd[:, 0]))


def friction_pyramid(normal, mu, edges):
    """Unit edge vectors of a friction pyramid around a contact normal.

    Edges are evenly spaced in azimuth with tangential/normal ratio mu;
    mu = 0 collapses the pyramid onto the normal.
    """
    n = np.asarray(normal, dtype=float).ravel()
    if n.shape != (3,):
        raise InvalidInputError(f"normal must be a 3-vector, got shape {n.shape}")
    nn = float(np.linalg.norm(n))
    if nn == 0.0:
        raise InvalidInputError("contact normal is the zero vector")
    if mu < 0.0:
        raise InvalidInputError(f"mu must be nonnegative, got {mu}")
    if edges < 3:
        raise InvalidInputError(f"need at least 3 edges, got {edges}")
    n = n / nn
    ref = np.array([1.0, 0.0, 0.0])
    if abs(n @ ref) > 0.9:
        ref = np.array([0.0, 1.0, 0.0])
    t1 = ref - (ref @ n) * n
    t1 = t1 / np.linalg.norm(t1)
    t2 = np.cross(n, t1)
    out = np.empty((edges, 3))
    for j in range(edges):
        phi = 2.0 * np.pi * j / edges
        v = n + mu * (np.cos(phi) * t1 + np.sin(phi) * t2)
        out[j] = v / np.linalg.norm(v)
    return out


class PlanLayout:
    """Index map for the stacked decision vector: one block per knot.

    Block order: q, qd, r, rd, rdd, h, hd, then per contact f, then per
    contact rho, then per contact beta.
    """

    def __init__(self, dof, n_contacts, n_edges, n_knots):
        self.dof = dof
        self.n_contacts = n_contacts
        self.n_edges = n_edges
        self.n_knots = n_knots
        off = 0
        self._off = {}
        for name, size in (
            ("q", dof), ("qd", dof), ("r", 3), ("rd", 3), ("rdd", 3),
            ("h", 3), ("hd", 3),
            ("f", 3 * n_contacts), ("rho", 3 * n_contacts),
            ("beta", n_edges * n_contacts),
        ):
            self._off[name] = off
            off += size
        self.block = off
        self.n = off * n_knots

    def _sl(self, k, name, size):
        s = k * self.block + self._off[name]
        return slice(s, s + size)

    def q(self, k):
        return self._sl(k, "q", self.dof)

    def qd(self, k):
        return self._sl(k, "qd", self.dof)

    def r(self, k):
        return self._sl(k, "r", 3)

    def rd(self, k):
        return self._sl(k, "rd", 3)

    def rdd(self, k):
        return self._sl(k, "rdd", 3)

    def h(self, k):
        return self._sl(k, "h", 3)

    def hd(self, k):
        return self._sl(k, "hd", 3)

    def f(self, k, i):
        s = k * self.block + self._off["f"] + 3 * i
        return slice(s, s + 3)

    def rho(self, k, i):
        s = k * self.block + self._off["rho"] + 3 * i
        return slice(s, s + 3)

    def beta(self, k, i):
        s = k * self.block + self._off["beta"] + self.n_edges * i
        return slice(s, s + self.n_edges)

    def pack(self, traj):
        x = np.zeros(self.n)
        for k in range(self.n_knots):
            x[self.q(k)] = traj.q[k]
            x[self.qd(k)] = traj.qd[k]
            x[self.r(k)] = traj.r[k]
            x[self.rd(k)] = traj.rd[k]
            x[self.rdd(k)] = traj.rdd[k]
            x[self.h(k)] = traj.h[k]
            x[self.hd(k)] = traj.hd[k]
            for i in range(self.n_contacts):
                x[self.f(k, i)] = traj.f[k, i]
                x[self.rho(k, i)] = traj.rho[k, i]
                x[self.beta(k, i)] = traj.beta[k, i]
        return x

    def unpack(self, x, step_time):
        N, C, E, nq = self.n_knots, self.n_contacts, self.n_edges, self.dof
        traj = PlanTrajectory(
            step_time=step_time,
            times=np.arange(N) * step_time,
            q=np.empty((N, nq)), qd=np.empty((N, nq)),
            r=np.empty((N, 3)), rd=np.empty((N, 3)), rdd=np.empty((N, 3)),
            h=np.empty((N, 3)), hd=np.empty((N, 3)),
            f=np.empty((N, C, 3)), rho=np.empty((N, C, 3)),
            beta=np.empty((N, C, E)),
        )
        for k in range(N):
            traj.q[k] = x[self.q(k)]
            traj.qd[k] = x[self.qd(k)]
            traj.r[k] = x[self.r(k)]
            traj.rd[k] = x[self.rd(k)]
            traj.rdd[k] = x[self.rdd(k)]
            traj.h[k] = x[self.h(k)]
            traj.hd[k] = x[self.hd(k)]
            for i in range(C):
                traj.f[k, i] = x[self.f(k, i)]
                traj.rho[k, i] = x[self.rho(k, i)]
                traj.beta[k, i] = x[self.beta(k, i)]
        return traj


def plan_layout(model, schedule, params):
    return PlanLayout(model.dof, model.n_contacts, params.n_edges, schedule.n_knots)


class _Coo:
    """Accumulator for sparse Jacobian triplets."""

    def __init__(self):
        self.r = []
        self.c = []
        self.v = []

    def add(self, row0, cols, block):
        block = np.atleast_2d(np.asarray(block, dtype=float))
        nr, nc = block.shape
        self.r.append(np.repeat(np.arange(row0, row0 + nr), nc))
        self.c.append(np.tile(np.asarray(cols), nr))
        self.v.append(block.ravel())

    def add_diag(self, row0, cols, vals):
        cols = np.asarray(cols)
        self.r.append(np.arange(row0, row0 + cols.size))
        self.c.append(cols)
        self.v.append(np.broadcast_to(np.asarray(vals, dtype=float), cols.shape).copy())

    def matrix(self, shape):
        return sp.csr_matrix(
            (np.concatenate(self.v), (np.concatenate(self.r), np.concatenate(self.c))),
            shape=shape,
        )


def _momentum_q_jacobian(model, q, qd):
    """d(A(q) qd)/dq by complex-step differentiation, one column per DoF."""
    n = q.size
    J = np.empty((6, n))
    for j in range(n):
        qc = q.astype(complex)
        qc[j] += 1j * _CS_STEP
        J[:, j] = np.imag(centroidal_momentum(model, qc, qd)) / _CS_STEP
    return J


def _idx(sl):
    return np.arange(sl.start, sl.stop)


def build_kmp(model, schedule, params, guess, commanded_velocity=None):
    """Transcribe the planning problem; returns an NlpProblem.

    guess is either a nominal posture vector or a PlanTrajectory (resampled
    onto the schedule when the knot grids differ). commanded_velocity, when
    given, adds one equality pinning mean forward CoM velocity over the
    horizon.
    """
    if not isinstance(schedule, ContactSchedule):
        raise InvalidInputError("schedule must be a ContactSchedule")
    if schedule.n_contacts != model.n_contacts:
        raise InvalidInputError(
            f"schedule has {schedule.n_contacts} contacts, model has {model.n_contacts}"
        )
    if params.q_star.shape != (model.dof,):
        raise InvalidInputError(
            f"q_star has {params.q_star.size} entries, model has {model.dof} DoF"
        )
    lay = plan_layout(model, schedule, params)
    N, C, E, nq = lay.n_knots, lay.n_contacts, lay.n_edges, lay.dof
    dt = schedule.step_time
    m = model.total_mass
    grav = model.gravity
    V = friction_pyramid(np.array([0.0, 0.0, 1.0]), params.mu, E).T  # (3, E)
    S = schedule.S

    x0 = _initial_vector(model, schedule, params, guess, lay, V)

    # -- cost: diagonal quadratic around a shifted center -------------------
    wdiag = np.zeros(lay.n)
    center = np.zeros(lay.n)
    for k in range(N):
        wdiag[lay.q(k)] = params.w_posture
        center[lay.q(k)] = params.q_star
        wdiag[lay.qd(k)] = params.w_joint_rate
        wdiag[lay.rdd(k)] = params.w_com_acc
        wdiag[lay.hd(k)] = params.w_momentum_rate
        for i in range(C):
            wdiag[lay.f(k, i)] = params.w_force
    Hc = sp.diags(2.0 * wdiag, format="csr")

    def cost(x):
        d = x - center
        return float(d @ (wdiag * d)), 2.0 * wdiag * d

    # -- equality rows ------------------------------------------------------
    n_eq = N * (6 + 3 + 3 * C + 3 + 3 + 3 * C)
    n_eq += int(np.sum(S == 0)) * 3                      # force gate
    n_eq += (N - 1) * (9 + nq)                           # integration
    n_eq += int(np.sum(S[1:] == 1)) * 3                  # loaded-contact pinning
    n_eq += nq if N == 1 else 2 * nq                     # rest-to-rest ends
    if commanded_velocity is not None and N > 1:
        n_eq += 1

    def eq(x):
        vals = np.empty(n_eq)
        coo = _Coo()
        row = 0
        eye3 = np.ones(3)
        for k in range(N):
            iq, iqd = _idx(lay.q(k)), _idx(lay.qd(k))
            ir, ird, irdd = _idx(lay.r(k)), _idx(lay.rd(k)), _idx(lay.rdd(k))
            ih, ihd = _idx(lay.h(k)), _idx(lay.hd(k))
            qk, qdk = x[iq], x[iqd]
            rk, rdk, rddk = x[ir], x[ird], x[irdd]
            hk, hdk = x[ih], x[ihd]
            fkr = fk(model, qk)
            A = cmm(model, qk, fkr)
            # momentum consistency: A(q) qd = [h; m rd]
            vals[row : row + 6] = A @ qdk - np.concatenate([hk, m * rdk])
            coo.add(row, iq, _momentum_q_jacobian(model, qk, qdk))
            coo.add(row, iqd, A)
            coo.add_diag(row, ih, -eye3)
            coo.add_diag(row + 3, ird, -m * eye3)
            row += 6
            # CoM matches forward kinematics
            vals[row : row + 3] = rk - fkr.com
            coo.add_diag(row, ir, eye3)
            coo.add(row, iq, -com_jacobian(model, fkr))
            row += 3
            # contact points match forward kinematics
            Jc = contact_jacobian(model, fkr)
            for i in range(C):
                irho = _idx(lay.rho(k, i))
                vals[row : row + 3] = x[irho] - fkr.contacts[i]
                coo.add_diag(row, irho, eye3)
                coo.add(row, iq, -Jc[3 * i : 3 * i + 3])
                row += 3
            # angular momentum rate balances contact moments
            tot = np.zeros(3)
            sum_skew = np.zeros((3, 3))
            for i in range(C):
                fi = x[lay.f(k, i)]
                ui = x[lay.rho(k, i)] - rk
                tot += np.cross(ui, fi)
                sk = skew(fi)
                sum_skew += sk
                coo.add(row, _idx(lay.rho(k, i)), sk)
                coo.add(row, _idx(lay.f(k, i)), -skew(ui))
            vals[row : row + 3] = hdk - tot
            coo.add_diag(row, ihd, eye3)
            coo.add(row, ir, -sum_skew)
            row += 3
            # CoM acceleration from total force and gravity
            fsum = np.zeros(3)
            for i in range(C):
                fsum += x[lay.f(k, i)]
                coo.add_diag(row, _idx(lay.f(k, i)), -1.0 / m)
            vals[row : row + 3] = rddk - grav - fsum / m
            coo.add_diag(row, irdd, eye3)
            row += 3
            # force expressed on pyramid edges
            for i in range(C):
                ifr, ib = _idx(lay.f(k, i)), _idx(lay.beta(k, i))
                vals[row : row + 3] = x[ifr] - V @ x[ib]
                coo.add_diag(row, ifr, eye3)
                coo.add(row, ib, -V)
                row += 3
            # unloaded contacts carry no force
            for i in range(C):
                if S[k, i] == 0:
                    ifr = _idx(lay.f(k, i))
                    vals[row : row + 3] = x[ifr]
                    coo.add_diag(row, ifr, eye3)
                    row += 3
        half = 0.5 * dt
        for k in range(1, N):
            for cur, prev, dcur, dprev in (
                (lay.r(k), lay.r(k - 1), lay.rd(k), lay.rd(k - 1)),
                (lay.rd(k), lay.rd(k - 1), lay.rdd(k), lay.rdd(k - 1)),
                (lay.h(k), lay.h(k - 1), lay.hd(k), lay.hd(k - 1)),
            ):
                vals[row : row + 3] = (
                    x[cur] - x[prev] - half * (x[dcur] + x[dprev])
                )
                coo.add_diag(row, _idx(cur), eye3)
                coo.add_diag(row, _idx(prev), -eye3)
                coo.add_diag(row, _idx(dcur), -half * eye3)
                coo.add_diag(row, _idx(dprev), -half * eye3)
                row += 3
            vals[row : row + nq] = x[lay.q(k)] - x[lay.q(k - 1)] - dt * x[lay.qd(k)]
            coo.add_diag(row, _idx(lay.q(k)), np.ones(nq))
            coo.add_diag(row, _idx(lay.q(k - 1)), -np.ones(nq))
            coo.add_diag(row, _idx(lay.qd(k)), -dt * np.ones(nq))
            row += nq
            for i in range(C):
                if S[k, i] == 1:
                    cur, prev = _idx(lay.rho(k, i)), _idx(lay.rho(k - 1, i))
                    vals[row : row + 3] = x[cur] - x[prev]
                    coo.add_diag(row, cur, eye3)
                    coo.add_diag(row, prev, -eye3)
                    row += 3
        for k in ((0,) if N == 1 else (0, N - 1)):
            iv = _idx(lay.qd(k))
            vals[row : row + nq] = x[iv]
            coo.add_diag(row, iv, np.ones(nq))
            row += nq
        if commanded_velocity is not None and N > 1:
            i0, i1 = lay.r(0).start, lay.r(N - 1).start
            vals[row] = x[i1] - x[i0] - commanded_velocity * (N - 1) * dt
            coo.add(row, np.array([i1, i0]), np.array([[1.0, -1.0]]))
            row += 1
        return vals, coo.matrix((n_eq, lay.n))

    # -- inequality rows (c >= 0) -------------------------------------------
    n_in = N * C                                          # CoM-contact distance
    n_in += int(np.sum(S == 1)) * 1                       # force cap
    n_in += int(np.sum(S[1:] == 0)) * 6                   # unloaded travel box

    def ineq(x):
        vals = np.empty(n_in)
        coo = _Coo()
        row = 0
        for k in range(N):
            ir = _idx(lay.r(k))
            rk = x[ir]
            for i in range(C):
                irho = _idx(lay.rho(k, i))
                u = rk - x[irho]
                vals[row] = float(u @ u) - params.xi_min**2
                coo.add(row, ir, 2.0 * u[None, :])
                coo.add(row, irho, -2.0 * u[None, :])
                row += 1
            for i in range(C):
                if S[k, i] == 1:
                    ifr = _idx(lay.f(k, i))
                    fi = x[ifr]
                    vals[row] = params.f_max**2 - float(fi @ fi)
                    coo.add(row, ifr, -2.0 * fi[None, :])
                    row += 1
        eye3 = np.ones(3)
        for k in range(1, N):
            for i in range(C):
                if S[k, i] == 0:
                    cur, prev = _idx(lay.rho(k, i)), _idx(lay.rho(k - 1, i))
                    d = x[cur] - x[prev]
                    vals[row : row + 3] = params.D - d
                    coo.add_diag(row, cur, -eye3)
                    coo.add_diag(row, prev, eye3)
                    row += 3
                    vals[row : row + 3] = params.D + d
                    coo.add_diag(row, cur, eye3)
                    coo.add_diag(row, prev, -eye3)
                    row += 3
        return vals, coo.matrix((n_in, lay.n))

    lb = np.full(lay.n, -np.inf)
    ub = np.full(lay.n, np.inf)
    jlo, jhi = model.joint_limits()
    for k in range(N):
        lb[lay.q(k)] = jlo
        ub[lay.q(k)] = jhi
        for i in range(C):
            lb[lay.beta(k, i)] = 0.0
    return NlpProblem(
        n=lay.n, cost=cost, x0=x0, eq=eq, ineq=ineq, lb=lb, ub=ub,
        cost_hess=lambda x: Hc,
    )


def _resample(traj, schedule):
    """Linear resampling of a trajectory onto a schedule's knot grid."""
    tt = schedule.times()
    if traj.times.size == tt.size and np.allclose(traj.times, tt):
        return traj

    def interp(a):
        flat = a.reshape(a.shape[0], -1)
        out = np.empty((tt.size, flat.shape[1]))
        for j in range(flat.shape[1]):
            out[:, j] = np.interp(tt, traj.times, flat[:, j])
        return out.reshape((tt.size,) + a.shape[1:])

    return PlanTrajectory(
        step_time=schedule.step_time, times=tt,
        q=interp(traj.q), qd=interp(traj.qd),
        r=interp(traj.r), rd=interp(traj.rd), rdd=interp(traj.rdd),
        h=interp(traj.h), hd=interp(traj.hd),
        f=interp(traj.f), rho=interp(traj.rho), beta=interp(traj.beta),
    )


def _initial_vector(model, schedule, params, guess, lay, V):
    if isinstance(guess, PlanTrajectory):
        if guess.dof != lay.dof or guess.n_contacts != lay.n_contacts:
            raise InvalidInputError(
                f"guess trajectory dimensions ({guess.dof} DoF, {guess.n_contacts} "
                f"contacts) do not match the model ({lay.dof}, {lay.n_contacts})"
            )
        if guess.n_edges != lay.n_edges:
            raise InvalidInputError(
                f"guess has {guess.n_edges} pyramid edges, params say {lay.n_edges}"
            )
        return lay.pack(_resample(guess, schedule))
    q0 = np.asarray(guess, dtype=float).ravel()
    if q0.shape != (lay.dof,):
        raise InvalidInputError(
            f"posture guess has {q0.size} entries, model has {lay.dof} DoF"
        )
    fkr = fk(model, q0)
    m = model.total_mass
    weight = -m * model.gravity          # force the supports must provide
    x = np.zeros(lay.n)
    forces = {}
    for k in range(lay.n_knots):
        x[lay.q(k)] = q0
        x[lay.r(k)] = fkr.com
        active = np.flatnonzero(schedule.S[k] == 1)
        if active.size == 0:
            x[lay.rdd(k)] = model.gravity
        for i in range(lay.n_contacts):
            x[lay.rho(k, i)] = fkr.contacts[i]
        key = active.tobytes()
        if active.size and key not in forces:
            # supporting the weight exactly, then cancelling as much moment
            # as pairwise force transfers allow; point feet cannot produce
            # torque about their common line, so the leftover moment is
            # assigned to the momentum-rate variables rather than left as a
            # residual the optimizer can only shed through large posture
            # excursions
            na = active.size
            lever = [fkr.contacts[i] - fkr.com for i in active]
            split = np.tile(weight / na, na)
            if na > 1:
                S = np.hstack([skew(lever[j] - lever[0]) for j in range(1, na)])
                moment = sum(
                    np.cross(lever[j], split[3 * j : 3 * j + 3])
                    for j in range(na)
                )
                delta = np.linalg.lstsq(S, -moment, rcond=None)[0]
                for j in range(1, na):
                    t = delta[3 * (j - 1) : 3 * j]
                    split[3 * j : 3 * j + 3] += t
                    split[0:3] -= t
            forces[key] = split
        if active.size:
            split = forces[key]
            x[lay.hd(k)] = sum(
                np.cross(lever_i, split[3 * j : 3 * j + 3])
                for j, lever_i in enumerate(
                    fkr.contacts[i] - fkr.com for i in active
                )
            )
        for j, i in enumerate(active):
            fi = forces[key][3 * j : 3 * j + 3]
            x[lay.f(k, i)] = fi
            x[lay.beta(k, i)] = nnls(V, fi)[0]
    return x


def plan(model, schedule, params, guess, commanded_velocity=None,
         feas_tol=1e-6, opt_tol=1e-4, max_iter=200):
    """Run the planner; returns a PlanTrajectory or raises PlanningFailedError.

    guess may be a posture vector, a PlanTrajectory, or a sequence of
    trajectories; a sequence is treated as a seed library and the member
    whose mean forward velocity is nearest the commanded velocity is used.
    """
    if isinstance(guess, (list, tuple)):
        if not guess:
            raise InvalidInputError("guess library is empty")
        target = 0.0 if commanded_velocity is None else float(commanded_velocity)
        chosen = min(guess, key=lambda t: abs(target - t.mean_forward_velocity))
        logger.info(
            "seed library: chose plan with mean forward velocity %.3f m/s "
            "(commanded %.3f m/s)",
            chosen.mean_forward_velocity, target,
        )
        guess = chosen
    prob = build_kmp(model, schedule, params, guess, commanded_velocity)
    rep = solve_nlp(
        prob, max_iter=max_iter, feas_tol=feas_tol, opt_tol=opt_tol, qp_max_iter=200
    )
    if rep.status != "optimal":
        raise PlanningFailedError(
            f"trajectory optimization ended with status {rep.status!r} "
            f"(constraint violation {rep.max_violation:.3e})",
            report=rep,
        )
    lay = plan_layout(model, schedule, params)
    return lay.unpack(rep.x, schedule.step_time)


def validate_plan(model, traj, tol=1e-6, schedule=None, params=None):
    """Re-evaluate the plan's constraints directly; returns {family: violation}.

    The dynamics and kinematics families need only the model; the gating,
    travel, distance, and pyramid families additionally need the schedule
    and params and are skipped when those are absent.
    """
    if traj.dof != model.dof or traj.n_contacts != model.n_contacts:
        raise InvalidInputError("plan dimensions do not match the model")
    N = traj.n_knots
    m = model.total_mass
    dt = traj.step_time
    out = {}

    mom = com_p = con_p = 0.0
    for k in range(N):
        fkr = fk(model, traj.q[k])
        A = cmm(model, traj.q[k], fkr)
        target = np.concatenate([traj.h[k], m * traj.rd[k]])
        mom = max(mom, float(np.max(np.abs(A @ traj.qd[k] - target))))
        com_p = max(com_p, float(np.max(np.abs(traj.r[k] - fkr.com))))
        for i in range(traj.n_contacts):
            con_p = max(
                con_p, float(np.max(np.abs(traj.rho[k, i] - fkr.contacts[i])))
            )
    out["momentum_match"] = mom
    out["com_position"] = com_p
    out["contact_position"] = con_p

    rate = acc = 0.0
    for k in range(N):
        tot = np.zeros(3)
        for i in range(traj.n_contacts):
            tot += np.cross(traj.rho[k, i] - traj.r[k], traj.f[k, i])
        rate = max(rate, float(np.max(np.abs(traj.hd[k] - tot))))
        fsum = traj.f[k].sum(axis=0)
        acc = max(
            acc,
            float(np.max(np.abs(traj.rdd[k] - model.gravity - fsum / m))),
        )
    out["momentum_rate"] = rate
    out["com_acceleration"] = acc

    out["edge_weight_sign"] = float(np.max(np.maximum(0.0, -traj.beta), initial=0.0))

    half = 0.5 * dt
    ints = {"integration_com": 0.0, "integration_com_velocity": 0.0,
            "integration_momentum": 0.0, "integration_posture": 0.0}
    for k in range(1, N):
        ints["integration_com"] = max(
            ints["integration_com"],
            float(np.max(np.abs(
                traj.r[k] - traj.r[k - 1] - half * (traj.rd[k] + traj.rd[k - 1])
            ))),
        )
        ints["integration_com_velocity"] = max(
            ints["integration_com_velocity"],
            float(np.max(np.abs(
                traj.rd[k] - traj.rd[k - 1] - half * (traj.rdd[k] + traj.rdd[k - 1])
            ))),
        )
        ints["integration_momentum"] = max(
            ints["integration_momentum"],
            float(np.max(np.abs(
                traj.h[k] - traj.h[k - 1] - half * (traj.hd[k] + traj.hd[k - 1])
            ))),
        )
        ints["integration_posture"] = max(
            ints["integration_posture"],
            float(np.max(np.abs(
                traj.q[k] - traj.q[k - 1] - dt * traj.qd[k]
            ))),
        )
    out.update(ints)

    if params is not None:
        V = friction_pyramid(np.array([0.0, 0.0, 1.0]), params.mu, traj.n_edges).T
        dec = 0.0
        for k in range(N):
            for i in range(traj.n_contacts):
                dec = max(dec, float(np.max(np.abs(
                    traj.f[k, i] - V @ traj.beta[k, i]
                ))))
        out["force_decomposition"] = dec
        dist = 0.0
        for k in range(N):
            for i in range(traj.n_contacts):
                dist = max(dist, params.xi_min - float(
                    np.linalg.norm(traj.r[k] - traj.rho[k, i])
                ))
        out["com_contact_distance"] = max(0.0, dist)
    if params is not None and schedule is not None:
        cap = travel = 0.0
        for k in range(N):
            for i in range(traj.n_contacts):
                fmag = float(np.linalg.norm(traj.f[k, i]))
                cap = max(cap, fmag - params.f_max * schedule.S[k, i])
                if k >= 1:
                    step = traj.rho[k, i] - traj.rho[k - 1, i]
                    if schedule.S[k, i] == 1:
                        travel = max(travel, float(np.linalg.norm(step)))
                    else:
                        travel = max(
                            travel, float(np.max(np.abs(step))) - params.D
                        )
        out["force_magnitude"] = max(0.0, cap)
        out["contact_travel"] = max(0.0, travel)
    return out


def save_plan(traj, path):
    """Write a trajectory as structured text; round-trips bit-identically."""
    def fmt(vec):
        return " ".join(repr(float(v)) for v in np.asarray(vec).ravel())

    lines = ["plan-v1"]
    lines.append(f"step_time {traj.step_time!r}")
    lines.append(f"knots {traj.n_knots}")
    lines.append(f"dof {traj.dof}")
    lines.append(f"contacts {traj.n_contacts}")
    lines.append(f"edges {traj.n_edges}")
    for k in range(traj.n_knots):
        lines.append(f"knot {k}")
        lines.append("t " + repr(float(traj.times[k])))
        lines.append("q " + fmt(traj.q[k]))
        lines.append("qd " + fmt(traj.qd[k]))
        lines.append("r " + fmt(traj.r[k]))
        lines.append("rd " + fmt(traj.rd[k]))
        lines.append("rdd " + fmt(traj.rdd[k]))
        lines.append("h " + fmt(traj.h[k]))
        lines.append("hd " + fmt(traj.hd[k]))
        for i in range(traj.n_contacts):
            lines.append(f"f {i} " + fmt(traj.f[k, i]))
            lines.append(f"rho {i} " + fmt(traj.rho[k, i]))
            lines.append(f"beta {i} " + fmt(traj.beta[k, i]))
    with open(path, "w") as fp:
        fp.write("\n".join(lines) + "\n")


def load_plan(path):
    """Read a trajectory written by save_plan."""
    with open(path, "r") as fp:
        lines = [ln.rstrip("\n") for ln in fp if ln.strip()]
    if not lines or lines[0] != "plan-v1":
        raise InvalidInputError(f"{path}: not a plan file")
    header = {}
    pos = 1
    while pos < len(lines) and not lines[pos].startswith("knot "):
        key, val = lines[pos].split(maxsplit=1)
        header[key] = val
        pos += 1
    try:
        step_time = float(header["step_time"])
        N = int(header["knots"])
        nq = int(header["dof"])
        C = int(header["contacts"])
        E = int(header["edges"])
    except (KeyError, ValueError) as e:
        raise InvalidInputError(f"{path}: malformed plan header: {e}") from e
    traj = PlanTrajectory(
        step_time=step_time, times=np.zeros(N),
        q=np.zeros((N, nq)), qd=np.zeros((N, nq)),
        r=np.zeros((N, 3)), rd=np.zeros((N, 3)), rdd=np.zeros((N, 3)),
        h=np.zeros((N, 3)), hd=np.zeros((N, 3)),
        f=np.zeros((N, C, 3)), rho=np.zeros((N, C, 3)), beta=np.zeros((N, C, E)),
    )
    flat = {"q": traj.q, "qd": traj.qd, "r": traj.r, "rd": traj.rd,
            "rdd": traj.rdd, "h": traj.h, "hd": traj.hd}
    contact = {"f": traj.f, "rho": traj.rho, "beta": traj.beta}
    k = -1
    for ln in lines[pos:]:
        parts = ln.split()
        tag = parts[0]
        if tag == "knot":
            k = int(parts[1])
            if not 0 <= k < N:
                raise InvalidInputError(f"{path}: knot index {k} out of range")
        elif tag == "t":
            traj.times[k] = float(parts[1])
        elif tag in flat:
            vec = np.array([float(v) for v in parts[1:]])
            if vec.size != flat[tag].shape[1]:
                raise InvalidInputError(f"{path}: bad {tag} length at knot {k}")
            flat[tag][k] = vec
        elif tag in contact:
            i = int(parts[1])
            vec = np.array([float(v) for v in parts[2:]])
            if vec.size != contact[tag].shape[2]:
                raise InvalidInputError(f"{path}: bad {tag} length at knot {k}")
            contact[tag][k, i] = vec
        else:
            raise InvalidInputError(f"{path}: unknown record {tag!r}")
    return traj
