"""Nonlinear program solver: SQP with an l1 merit line search.

Problem form: min f(x) subject to c_eq(x) = 0, c_in(x) >= 0 and variable
bounds. Callbacks return (value, gradient) for the cost and (values,
Jacobian) for each constraint family; Jacobians may be dense or sparse.

Each outer iteration linearizes the constraints, models the cost with either
the supplied cost Hessian or a damped BFGS estimate, and solves the step QP
with solve_qp. An infeasible or failed step QP is retried in elastic form
(l1 slack on every constraint) so the iteration always has a direction, and
a backtracking line search on the l1 merit function decides how far to go.
The merit penalty tracks the largest multiplier seen so the search direction
stays a descent direction for the merit.
"""

import logging
import time
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from ..errors import EvaluationError, InvalidInputError
from .qp import QpProblem, SolveReport, solve_qp

logger = logging.getLogger(__name__)


@dataclass
class NlpProblem:
    n: int
    cost: object               # x -> (f, grad)
    x0: np.ndarray = None
    eq: object = None          # x -> (c, J), c(x) = 0
    ineq: object = None        # x -> (c, J), c(x) >= 0
    lb: np.ndarray = None
    ub: np.ndarray = None
    cost_hess: object = None   # x -> (n, n) cost Hessian, dense or sparse


def _bounds(p):
    lb = np.full(p.n, -np.inf) if p.lb is None else np.asarray(p.lb, dtype=float)
    ub = np.full(p.n, np.inf) if p.ub is None else np.asarray(p.ub, dtype=float)
    if lb.size != p.n or ub.size != p.n:
        raise InvalidInputError("bound length does not match problem dimension")
    if np.any(lb > ub):
        raise InvalidInputError("lb exceeds ub")
    return lb, ub


def _eval_cost(p, x):
    f, grad = p.cost(x)
    grad = np.asarray(grad, dtype=float).ravel()
    if not np.isfinite(f) or not np.all(np.isfinite(grad)):
        raise EvaluationError("cost callback returned a non-finite value", x=x)
    if grad.size != p.n:
        raise InvalidInputError(f"cost gradient has size {grad.size}, expected {p.n}")
    return float(f), grad


def _eval_con(fun, x, name):
    if fun is None:
        return np.zeros(0), None
    c, J = fun(x)
    c = np.asarray(c, dtype=float).ravel()
    if not np.all(np.isfinite(c)):
        raise EvaluationError(f"{name} constraint callback returned non-finite values", x=x)
    if not sp.issparse(J):
        J = np.atleast_2d(np.asarray(J, dtype=float))
    return c, J


def _merit(f, ceq, cin, sigma):
    v = 0.0
    if ceq.size:
        v += float(np.sum(np.abs(ceq)))
    if cin.size:
        v += float(np.sum(np.maximum(0.0, -cin)))
    return f + sigma * v, v


def _sparse_any(*mats):
    return any(sp.issparse(m) for m in mats if m is not None)


def solve_nlp(p, max_iter=200, feas_tol=1e-6, opt_tol=1e-6, qp_max_iter=100, debug=False):
    """Solve an NlpProblem; returns a SolveReport.

    debug=True verifies the callbacks against central finite differences at
    the initial guess before iterating and raises on disagreement.
    """
    t0 = time.perf_counter()
    lb, ub = _bounds(p)
    if p.x0 is None:
        raise InvalidInputError("an initial guess is required")
    x = np.clip(np.asarray(p.x0, dtype=float).ravel(), lb, ub)
    if x.size != p.n:
        raise InvalidInputError(f"x0 has size {x.size}, expected {p.n}")
    if debug:
        rep = check_derivatives(p, x)
        if not rep["ok"]:
            raise InvalidInputError(
                f"callback derivatives disagree with finite differences: {rep}"
            )

    f, gf = _eval_cost(p, x)
    ceq, Jeq = _eval_con(p.eq, x, "equality")
    cin, Jin = _eval_con(p.ineq, x, "inequality")
    me, mi = ceq.size, cin.size

    B = p.cost_hess(x) if p.cost_hess is not None else np.eye(p.n)
    sigma = 1.0
    nu = np.zeros(me)
    mu = np.zeros(mi)
    have_mults = me == 0 and mi == 0
    status = "max-iter"
    it_done = 0
    warm_sets = None
    zero_steps = 0

    for it in range(1, max_iter + 1):
        it_done = it
        viol = 0.0
        if me:
            viol = max(viol, float(np.max(np.abs(ceq))))
        if mi:
            viol = max(viol, float(np.max(np.maximum(0.0, -cin))))
        if have_mults and viol <= feas_tol:
            gL = gf.copy()
            if me:
                gL += Jeq.T @ nu
            if mi:
                gL -= Jin.T @ mu
            pg = gL.copy()
            at_lb = x <= lb + 1e-12
            at_ub = x >= ub - 1e-12
            pg[at_lb] = np.minimum(gL[at_lb], 0.0)
            pg[at_ub] = np.maximum(gL[at_ub], 0.0)
            if float(np.max(np.abs(pg), initial=0.0)) <= opt_tol:
                status = "optimal"
                it_done = it - 1
                break

        # step QP in d = x_new - x
        rows = []
        row_lb = []
        row_ub = []
        if mi:
            rows.append(Jin)
            row_lb.append(-cin)
            row_ub.append(np.full(mi, np.inf))
        finite = np.isfinite(lb) | np.isfinite(ub)
        if np.any(finite):
            idx = np.flatnonzero(finite)
            eye = sp.eye(p.n, format="csr") if _sparse_any(B, Jeq, Jin) else np.eye(p.n)
            rows.append(eye[idx])
            row_lb.append(lb[idx] - x[idx])
            row_ub.append(ub[idx] - x[idx])
        if rows:
            stack = sp.vstack if _sparse_any(*rows) else np.vstack
            A_in = stack(rows)
            qlb = np.concatenate(row_lb)
            qub = np.concatenate(row_ub)
        else:
            A_in = qlb = qub = None
        qp = QpProblem(
            H=B,
            g=gf,
            A_eq=Jeq if me else None,
            b_eq=-ceq if me else None,
            A_in=A_in,
            lb=qlb,
            ub=qub,
        )
        qrep = solve_qp(qp, tol=feas_tol, max_iter=qp_max_iter, warm_sets=warm_sets)
        lin_infeas = 0.0
        if qrep.status != "optimal":
            logger.debug(
                "it %d: step QP %s (viol %.2e), retrying elastic",
                it, qrep.status, qrep.max_violation,
            )
            qrep, lin_infeas = _elastic_step(
                B, gf, ceq, Jeq, cin, Jin, lb - x, ub - x, 10.0 * sigma + 10.0,
                feas_tol, qp_max_iter,
            )
            if qrep is None:
                logger.debug("it %d: elastic step failed, stopping", it)
                break
        else:
            warm_sets = (qrep.active_lo, qrep.active_hi)
        d = qrep.x[: p.n]
        nu = qrep.nu_eq if (me and qrep.nu_eq is not None) else np.zeros(me)
        z = qrep.z_in if qrep.z_in is not None else np.zeros(0)
        mu = np.maximum(0.0, -z[:mi]) if mi else np.zeros(0)
        have_mults = True
        if float(np.max(np.abs(d), initial=0.0)) <= 1e-12 * (1.0 + float(np.max(np.abs(x)))):
            # converged step: let the top-of-loop test certify it
            zero_steps += 1
            if zero_steps >= 3:
                break
            continue
        zero_steps = 0

        lam_inf = 0.0
        if me:
            lam_inf = max(lam_inf, float(np.max(np.abs(nu), initial=0.0)))
        if mi:
            lam_inf = max(lam_inf, float(np.max(mu, initial=0.0)))
        if sigma < 1.1 * lam_inf:
            sigma = 2.0 * lam_inf

        phi0, v0 = _merit(f, ceq, cin, sigma)
        dBd = float(d @ (B @ d))
        pred = -(gf @ d) - 0.5 * dBd + sigma * (v0 - lin_infeas)
        if pred <= 0.0:
            pred = max(1e-16, abs(gf @ d) * 1e-8)

        step = 1.0
        accepted = False
        for _ in range(30):
            x_try = np.clip(x + step * d, lb, ub)
            f_try, g_try = _eval_cost(p, x_try)
            ceq_try, Jeq_try = _eval_con(p.eq, x_try, "equality")
            cin_try, Jin_try = _eval_con(p.ineq, x_try, "inequality")
            phi_try, _ = _merit(f_try, ceq_try, cin_try, sigma)
            if phi_try <= phi0 - 1e-4 * step * pred:
                accepted = True
                break
            step *= 0.5
        logger.debug(
            "it %d: viol %.2e cost %.4e |d| %.2e sigma %.1e step %s",
            it, viol, f, float(np.max(np.abs(d), initial=0.0)), sigma,
            ("%.1e" % step) if accepted else "rejected",
        )
        if not accepted:
            # no merit progress along the step: treat the iterate as stalled
            break

        gf_old = gf
        Jeq_old, Jin_old = Jeq, Jin
        x_new = x_try
        f, gf = f_try, g_try
        ceq, Jeq = ceq_try, Jeq_try
        cin, Jin = cin_try, Jin_try

        if p.cost_hess is not None:
            B = p.cost_hess(x_new)
        else:
            B = _bfgs_update(B, x_new - x, gf, gf_old, Jeq, Jeq_old, Jin, Jin_old, nu, mu)
        x = x_new

    viol = 0.0
    if me:
        viol = max(viol, float(np.max(np.abs(ceq))))
    if mi:
        viol = max(viol, float(np.max(np.maximum(0.0, -cin))))
    return SolveReport(
        status=status,
        iterations=it_done,
        x=x,
        max_violation=viol,
        cost=f,
        wall_time=time.perf_counter() - t0,
    )


def _elastic_step(B, gf, ceq, Jeq, cin, Jin, dlb, dub, rho, feas_tol, qp_max_iter):
    """l1-relaxed step QP: slacks on every constraint with linear penalty rho.

    Returns (report-with-d-in-prefix, linearized residual of the returned
    step) or (None, 0) when even the relaxed QP fails.
    """
    n = gf.size
    me, mi = ceq.size, cin.size
    ns = 2 * me + mi
    sparse = _sparse_any(B, Jeq, Jin)
    if sparse:
        Bx = sp.block_diag(
            [sp.csr_matrix(B) if not sp.issparse(B) else B, sp.eye(ns) * 0.0],
            format="csr",
        )
    else:
        Bx = np.zeros((n + ns, n + ns))
        Bx[:n, :n] = B
    gx = np.concatenate([gf, rho * np.ones(ns)])

    def widen(M, cols_before, cols_after, coeff_cols=None):
        if sp.issparse(M):
            left = sp.csr_matrix((M.shape[0], cols_before))
            right = sp.csr_matrix((M.shape[0], cols_after))
            mid = [M] if coeff_cols is None else [M, coeff_cols]
            return sp.hstack([left] + mid + [right], format="csr")
        left = np.zeros((M.shape[0], cols_before))
        right = np.zeros((M.shape[0], cols_after))
        mid = [M] if coeff_cols is None else [M, coeff_cols]
        return np.hstack([left] + mid + [right])

    A_eq = b_eq = None
    if me:
        sl = sp.hstack([sp.eye(me), -sp.eye(me)]) if sparse else np.hstack([np.eye(me), -np.eye(me)])
        A_eq = widen(Jeq, 0, mi, coeff_cols=sl)
        b_eq = -ceq

    rows = []
    row_lb = []
    row_ub = []
    if mi:
        sl = sp.eye(mi) if sparse else np.eye(mi)
        rows.append(widen(Jin, 0, 0, coeff_cols=widen(sl, 2 * me, 0)))
        row_lb.append(-cin)
        row_ub.append(np.full(mi, np.inf))
    eye_full = sp.eye(n + ns, format="csr") if sparse else np.eye(n + ns)
    rows.append(eye_full)
    row_lb.append(np.concatenate([dlb, np.zeros(ns)]))
    row_ub.append(np.concatenate([dub, np.full(ns, np.inf)]))
    stack = sp.vstack if sparse else np.vstack
    qp = QpProblem(
        H=Bx,
        g=gx,
        A_eq=A_eq,
        b_eq=b_eq,
        A_in=stack(rows),
        lb=np.concatenate(row_lb),
        ub=np.concatenate(row_ub),
    )
    rep = solve_qp(qp, tol=feas_tol, max_iter=qp_max_iter)
    if rep.status not in ("optimal", "max-iter") or not np.all(np.isfinite(rep.x)):
        return None, 0.0
    s = rep.x[n:]
    return rep, float(np.sum(np.abs(s)))


def _bfgs_update(B, s, gf, gf_old, Jeq, Jeq_old, Jin, Jin_old, nu, mu):
    """Powell-damped BFGS on the Lagrangian gradient difference."""
    sn = float(np.linalg.norm(s))
    if sn < 1e-14:
        return B

    def lag_grad(g, Je, Ji):
        gL = g.copy()
        if nu.size:
            gL += Je.T @ nu
        if mu.size:
            gL -= Ji.T @ mu
        return np.asarray(gL).ravel()

    y = lag_grad(gf, Jeq, Jin) - lag_grad(gf_old, Jeq_old, Jin_old)
    Bs = B @ s
    sBs = float(s @ Bs)
    sy = float(s @ y)
    if sBs <= 0.0:
        return B
    if sy < 0.2 * sBs:
        theta = 0.8 * sBs / (sBs - sy)
        y = theta * y + (1.0 - theta) * Bs
        sy = float(s @ y)
    if sy <= 1e-14:
        return B
    return B + np.outer(y, y) / sy - np.outer(Bs, Bs) / sBs


def check_derivatives(p, x=None, step=1e-6):
    """Compare callback gradients/Jacobians with central finite differences.

    Returns {'cost': rel, 'eq': rel, 'ineq': rel, 'ok': bool}; families not
    present report 0. Relative error is the max absolute discrepancy scaled
    by max(1, largest analytic entry).
    """
    lb, ub = _bounds(p)
    x = np.clip(np.asarray(p.x0 if x is None else x, dtype=float).ravel(), lb, ub)

    def fd_vec(fun, dim):
        F = np.zeros((dim, p.n))
        for j in range(p.n):
            e = np.zeros(p.n)
            e[j] = step
            hi = np.asarray(fun(x + e), dtype=float).ravel()
            lo = np.asarray(fun(x - e), dtype=float).ravel()
            F[:, j] = (hi - lo) / (2.0 * step)
        return F

    def rel(an, fd):
        scale = max(1.0, float(np.max(np.abs(an), initial=0.0)))
        return float(np.max(np.abs(an - fd), initial=0.0)) / scale

    out = {"cost": 0.0, "eq": 0.0, "ineq": 0.0}
    _, gf = _eval_cost(p, x)
    fd_g = fd_vec(lambda y: p.cost(y)[0], 1)[0]
    out["cost"] = rel(gf, fd_g)
    for name, fun in (("eq", p.eq), ("ineq", p.ineq)):
        if fun is None:
            continue
        c, J = _eval_con(fun, x, name)
        if sp.issparse(J):
            J = J.toarray()
        fd_J = fd_vec(lambda y: fun(y)[0], c.size)
        out[name] = rel(J, fd_J)
    out["ok"] = all(v < 1e-4 for v in (out["cost"], out["eq"], out["ineq"]))
    return out
