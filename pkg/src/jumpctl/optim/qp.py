"""Convex QP solver: active-set iteration with an interior-point fallback.

Problem form: min 0.5 x'Hx + g'x subject to A_eq x = b_eq and
lb <= A_in x <= ub (rows may be one-sided via +-inf). Variable bounds are
ordinary identity rows of A_in.

The primary engine guesses which inequality rows are clamped at which side,
solves that equality-constrained KKT system exactly, and re-guesses from the
multiplier and residual signs (a semismooth Newton step on the
complementarity conditions). Warm-started at an optimum it confirms the
guess in one or two solves, which is what the receding-horizon callers rely
on. The guess sequence can cycle on strongly coupled Hessians, so a revisit
of an earlier working set hands the problem to a predictor-corrector
interior-point solve; its converged point seeds one final active-set pass so
the returned solution still satisfies the clamped rows exactly.

Matrices may be dense ndarrays or scipy.sparse; the linear algebra
dispatches accordingly. The Hessian is lifted to be positive definite by
lam*I with lam = max(0, 1e-8 - lowest-eigenvalue estimate), which doubles as
the tie-break rule: among equally optimal points the solver returns the one
the Tikhonov term prefers, so reruns cannot wander across a flat valley.
"""

import time
from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from ..errors import InvalidInputError

REG_TARGET = 1e-8
_ACTIVE_TOL = 1e-9
_EIG_DENSE_MAX = 800
_IPM_MAX_ITER = 60


@dataclass
class QpProblem:
    H: object                  # (n, n) symmetric, ndarray or sparse
    g: np.ndarray
    A_eq: object = None
    b_eq: np.ndarray = None
    A_in: object = None
    lb: np.ndarray = None
    ub: np.ndarray = None
    warm_start: np.ndarray = None


@dataclass(frozen=True)
class SolveReport:
    status: str                # optimal | max-iter | infeasible
    iterations: int
    x: np.ndarray
    max_violation: float
    cost: float
    wall_time: float
    kkt_residual: float = np.nan
    nu_eq: np.ndarray = None   # equality multipliers
    z_in: np.ndarray = None    # inequality multipliers: >0 at ub, <0 at lb
    active_lo: np.ndarray = None
    active_hi: np.ndarray = None


def _as_2d(A, name, n):
    if A is None:
        return None
    if sp.issparse(A):
        A = A.tocsr()
    else:
        A = np.asarray(A, dtype=float)
        if A.ndim != 2:
            raise InvalidInputError(f"{name} must be a matrix, got ndim {A.ndim}")
    if A.shape[1] != n:
        raise InvalidInputError(f"{name} has {A.shape[1]} columns for {n} variables")
    return A


def _lambda_floor(H, n):
    """Regularizer weight from a lower estimate of the smallest eigenvalue."""
    if n == 0:
        return 0.0
    if sp.issparse(H):
        d = H.diagonal()
        off = H - sp.diags(d)
        if off.nnz == 0 or abs(off).max() == 0.0:
            est = float(np.min(d))
        elif n <= _EIG_DENSE_MAX:
            est = float(np.linalg.eigvalsh(H.toarray())[0])
        else:
            v0 = np.full(n, 1.0 / np.sqrt(n))
            try:
                ev = spla.eigsh(
                    H, k=1, which="SA", v0=v0, maxiter=10 * n, tol=1e-7,
                    return_eigenvectors=False,
                )
                est = float(ev[0]) - 1e-7 * (1.0 + abs(float(ev[0])))
            except spla.ArpackError:
                est = float(np.min(d - (np.asarray(np.abs(off).sum(axis=1)).ravel())))
    elif n <= _EIG_DENSE_MAX:
        est = float(np.linalg.eigvalsh(H)[0])
    else:
        d = np.diag(H)
        est = float(np.min(d - (np.abs(H).sum(axis=1) - np.abs(d))))
    return max(0.0, REG_TARGET - est)


class _Workspace:
    """Validated, normalized problem data shared by both engines."""

    def __init__(self, p):
        g = np.asarray(p.g, dtype=float).ravel()
        n = g.size
        H = p.H
        if sp.issparse(H):
            H = H.tocsr()
        else:
            H = np.asarray(H, dtype=float)
        if H.shape != (n, n):
            raise InvalidInputError(f"H shape {H.shape} for {n} variables")
        Hs = 0.5 * (H + H.T)
        A_eq = _as_2d(p.A_eq, "A_eq", n)
        b_eq = None if A_eq is None else np.asarray(p.b_eq, dtype=float).ravel()
        if A_eq is not None and b_eq.size != A_eq.shape[0]:
            raise InvalidInputError("b_eq length does not match A_eq rows")
        A_in = _as_2d(p.A_in, "A_in", n)
        if A_in is not None:
            lb = np.asarray(p.lb, dtype=float).ravel()
            ub = np.asarray(p.ub, dtype=float).ravel()
            m = A_in.shape[0]
            if lb.size != m or ub.size != m:
                raise InvalidInputError("lb/ub length does not match A_in rows")
            if np.any(lb > ub):
                raise InvalidInputError("lb exceeds ub on some inequality rows")
        else:
            lb = ub = None
            m = 0
        sparse = sp.issparse(Hs) or sp.issparse(A_eq) or sp.issparse(A_in)
        if sparse:
            Hs = sp.csr_matrix(Hs)
            A_eq = None if A_eq is None else sp.csr_matrix(A_eq)
            A_in = None if A_in is None else sp.csr_matrix(A_in)
        lam = _lambda_floor(Hs, n)
        if lam > 0.0:
            Hreg = Hs + lam * (sp.eye(n, format="csr") if sparse else np.eye(n))
        else:
            Hreg = Hs
        self.n, self.m = n, m
        self.g, self.Hs, self.Hreg = g, Hs, Hreg
        self.A_eq, self.b_eq = A_eq, b_eq
        self.A_in, self.lb, self.ub = A_in, lb, ub
        self.sparse = sparse
        self.me = 0 if A_eq is None else b_eq.size
        self.eq_keep = None

    def reduced_eq(self):
        """Indices of a well-conditioned independent subset of A_eq rows.

        Transcribed problems carry equality rows that are exact or near
        combinations of others (with consistent right-hand sides); keeping
        them makes the KKT system singular with unbounded multipliers.
        Computed once per solve, on demand.
        """
        if self.eq_keep is None:
            A = self.A_eq.toarray() if self.sparse else self.A_eq
            R, piv = scipy.linalg.qr(A.T, mode="r", pivoting=True)
            diag = np.abs(np.diag(R))
            rank = 0
            if diag.size and diag[0] > 0.0:
                rank = int(np.sum(diag > 1e-9 * diag[0]))
            self.eq_keep = np.sort(piv[:rank])
        return self.eq_keep

    def violation(self, x):
        viol = v_eq = 0.0
        if self.me:
            v_eq = float(np.max(np.abs(self.A_eq @ x - self.b_eq)))
            viol = v_eq
        if self.m:
            ax = self.A_in @ x
            viol = max(
                viol,
                float(np.max(ax - self.ub, initial=0.0)),
                float(np.max(self.lb - ax, initial=0.0)),
            )
        return viol, v_eq

    def cost(self, x):
        return float(0.5 * (x @ (self.Hs @ x)) + self.g @ x)


def _sparse_kkt(K, rhs, n, scale):
    """Factor and solve one sparse KKT system; returns (solution, residual).

    A singular or ill-conditioned factorization falls back to a dual-shifted
    quasi-definite system with iterative refinement against the true matrix.
    """
    try:
        sol = spla.splu(K, permc_spec="COLAMD").solve(rhs)
    except RuntimeError:
        sol = None
    resid = np.inf
    if sol is not None and np.all(np.isfinite(sol)):
        resid = float(np.max(np.abs(K @ sol - rhs)))
    if resid > 1e-9 * scale:
        shift = np.concatenate([np.zeros(n), -1e-10 * np.ones(K.shape[0] - n)])
        try:
            lu = spla.splu((K + sp.diags(shift)).tocsc(), permc_spec="COLAMD")
        except RuntimeError:
            lu = None
        if lu is not None:
            cand = lu.solve(rhs)
            for _ in range(4):
                r = rhs - K @ cand
                if float(np.max(np.abs(r))) <= 1e-12 * scale:
                    break
                cand = cand + lu.solve(r)
            cres = np.inf
            if np.all(np.isfinite(cand)):
                cres = float(np.max(np.abs(K @ cand - rhs)))
            if cres < resid:
                sol, resid = cand, cres
    if sol is None:
        sol = np.full(rhs.size, np.nan)
    return sol, resid


def _kkt_solve(w, C, d):
    """Solve the equality KKT system; returns (x, nu, mu, solver residual)."""
    n, me = w.n, w.me
    na = 0 if d is None else d.size
    rhs = np.concatenate(
        [-w.g] + ([w.b_eq] if me else []) + ([d] if na else [])
    )
    scale = 1.0 + (float(np.max(np.abs(rhs))) if rhs.size else 0.0)
    if w.sparse:
        def assemble(A_rows, b_rows):
            mats = A_rows + ([C] if na else [])
            if mats:
                Acat = sp.vstack(mats, format="csr")
                Kc = sp.bmat([[w.Hreg, Acat.T], [Acat, None]], format="csc")
            else:
                Kc = sp.csc_matrix(w.Hreg)
            rv = np.concatenate([-w.g] + b_rows + ([d] if na else []))
            return Kc, rv

        K, rhs = assemble([w.A_eq] if me else [], [w.b_eq] if me else [])
        sol, resid = _sparse_kkt(K, rhs, n, scale)
        if resid > 1e-9 * scale and me:
            # equality rows are (near-)dependent: retry on an independent
            # subset; dropped rows are rechecked through the violation test
            keep = w.reduced_eq()
            if keep.size < me:
                K2, rhs2 = assemble([w.A_eq[keep]], [w.b_eq[keep]])
                sol2, resid2 = _sparse_kkt(K2, rhs2, n, scale)
                if resid2 < resid:
                    nu_full = np.zeros(me)
                    if np.all(np.isfinite(sol2)):
                        nu_full[keep] = sol2[n : n + keep.size]
                    sol = np.concatenate(
                        [sol2[:n], nu_full, sol2[n + keep.size :]]
                    )
                    resid = resid2
        x = sol[:n]
        nu = sol[n : n + me] if me else None
        mu = sol[n + me :] if na else None
        return x, nu, mu, resid
    else:
        dim = n + me + na
        K = np.zeros((dim, dim))
        K[:n, :n] = w.Hreg
        row = n
        if me:
            K[row : row + me, :n] = w.A_eq
            K[:n, row : row + me] = w.A_eq.T
            row += me
        if na:
            K[row : row + na, :n] = C
            K[:n, row : row + na] = C.T
        try:
            sol = np.linalg.solve(K, rhs)
        except np.linalg.LinAlgError:
            sol = np.linalg.lstsq(K, rhs, rcond=None)[0]
        else:
            resid = np.inf
            if np.all(np.isfinite(sol)):
                resid = float(np.max(np.abs(K @ sol - rhs)))
            if resid > 1e-9 * scale:
                cand = np.linalg.lstsq(K, rhs, rcond=None)[0]
                if float(np.max(np.abs(K @ cand - rhs))) < resid:
                    sol = cand
    res = float(np.max(np.abs(K @ sol - rhs))) if rhs.size else 0.0
    x = sol[:n]
    nu = sol[n : n + me] if me else None
    mu = sol[n + me :] if na else None
    return x, nu, mu, res


def _pdas(w, lo, hi, tol, max_iter):
    """Semismooth active-set iteration from an initial working-set guess.

    Returns (outcome, payload, iterations): outcome 'optimal'/'infeasible'
    with a payload (x, nu, z, viol, kkt_res, lo, hi), or 'cycle'/'nonfinite'/
    'exhausted' with the best payload seen (possibly None).
    """
    m = w.m
    best = None
    seen = {(lo.tobytes(), hi.tobytes())}
    for it in range(1, max_iter + 1):
        if m:
            act = np.flatnonzero(lo | hi)
            C = w.A_in[act] if act.size else None
            d = np.where(lo[act], w.lb[act], w.ub[act]) if act.size else None
        else:
            act = np.zeros(0, dtype=int)
            C = d = None
        x, nu, mu, kkt_res = _kkt_solve(w, C, d)
        if not np.all(np.isfinite(x)):
            return "nonfinite", best, it
        z = np.zeros(m)
        if act.size:
            z[act] = mu
        viol, v_eq = w.violation(x)
        payload = (x, nu, z, viol, kkt_res, lo.copy(), hi.copy())
        if best is None or viol < best[3]:
            best = payload
        if w.me and v_eq > max(tol, 1e-8 * (1.0 + float(np.max(np.abs(w.b_eq), initial=0.0)))):
            return "infeasible", payload, it
        if not m:
            return "optimal", payload, it
        ax = w.A_in @ x
        new_hi = (z + (ax - w.ub)) > 0.0
        new_lo = (z + (ax - w.lb)) < 0.0
        if np.array_equal(new_hi, hi) and np.array_equal(new_lo, lo):
            return "optimal", payload, it
        key = (new_lo.tobytes(), new_hi.tobytes())
        if key in seen:
            return "cycle", best, it
        seen.add(key)
        hi, lo = new_hi, new_lo
    return "exhausted", best, max_iter


def _split_sides(w):
    """One-sided rows G x >= h from the finite sides of lb <= A_in x <= ub.

    Returns (G, h, side_row, side_sign) where side_row maps each one-sided
    row back to its A_in row and side_sign is -1 for a lb side, +1 for ub.
    """
    rows = []
    signs = []
    for i in range(w.m):
        if np.isfinite(w.lb[i]):
            rows.append(i)
            signs.append(-1)
        if np.isfinite(w.ub[i]):
            rows.append(i)
            signs.append(+1)
    side_row = np.array(rows, dtype=int)
    side_sign = np.array(signs, dtype=int)
    if side_row.size == 0:
        return None, None, side_row, side_sign
    A_sel = w.A_in[side_row]
    scale = sp.diags((-side_sign).astype(float)) if w.sparse else np.diag((-side_sign).astype(float))
    G = scale @ A_sel
    h = np.where(side_sign < 0, w.lb[side_row], -w.ub[side_row])
    return G, h, side_row, side_sign


def _ipm(w, tol):
    """Mehrotra predictor-corrector solve; returns (x, y, lam_sides, iters, sides).

    lam_sides are the nonnegative multipliers of the one-sided rows from
    _split_sides. Returns None for x when no finite inequality side exists.
    """
    G, h, side_row, side_sign = _split_sides(w)
    n, me = w.n, w.me
    mg = side_row.size
    if mg == 0:
        return None, None, None, 0, (side_row, side_sign)
    x, y, _, _ = _kkt_solve(w, None, None)
    if not np.all(np.isfinite(x)):
        x = np.zeros(n)
        y = np.zeros(me) if me else None
    s0 = G @ x - h
    s = np.maximum(s0, 1.0)
    lam = np.ones(mg)
    it = 0
    scale = 1.0 + float(np.max(np.abs(w.g), initial=0.0)) + float(np.max(np.abs(h), initial=0.0))
    for it in range(1, _IPM_MAX_ITER + 1):
        rd = w.Hreg @ x + w.g - G.T @ lam
        if me:
            rd = rd + w.A_eq.T @ y
            re = w.A_eq @ x - w.b_eq
        else:
            re = np.zeros(0)
        ri = G @ x - s - h
        mu = float(s @ lam) / mg
        resid = max(
            float(np.max(np.abs(rd))),
            float(np.max(np.abs(re), initial=0.0)),
            float(np.max(np.abs(ri))),
            mu,
        )
        if resid <= min(1e-9 * scale, 0.1 * tol):
            break
        dvec = lam / s
        if w.sparse:
            Hbar = w.Hreg + G.T @ sp.diags(dvec) @ G
            if me:
                K = sp.bmat(
                    [[Hbar, w.A_eq.T], [w.A_eq, -1e-12 * sp.eye(me)]], format="csc"
                )
            else:
                K = sp.csc_matrix(Hbar)
            lu = spla.splu(K, permc_spec="COLAMD")
            solve = lu.solve
        else:
            Hbar = w.Hreg + (G.T * dvec) @ G
            if me:
                K = np.zeros((n + me, n + me))
                K[:n, :n] = Hbar
                K[:n, n:] = w.A_eq.T
                K[n:, :n] = w.A_eq
                K[n:, n:] = -1e-12 * np.eye(me)
            else:
                K = Hbar
            try:
                lufac = np.linalg.inv(K)
            except np.linalg.LinAlgError:
                lufac = np.linalg.pinv(K)
            solve = lambda r: lufac @ r

        def step_dirs(comp_rhs):
            # comp_rhs is the target for lam*ds + s*dlam per side row
            rx = -rd - G.T @ (dvec * ri) + G.T @ (comp_rhs / s)
            rhs = np.concatenate([rx, -re]) if me else rx
            sol = solve(rhs)
            dx = sol[:n]
            dy = sol[n:] if me else None
            ds = G @ dx + ri
            dlam = (comp_rhs - lam * ds) / s
            return dx, dy, ds, dlam

        comp_aff = -s * lam
        dx_a, dy_a, ds_a, dlam_a = step_dirs(comp_aff)
        a_pri = _max_step(s, ds_a)
        a_dua = _max_step(lam, dlam_a)
        mu_aff = float((s + a_pri * ds_a) @ (lam + a_dua * dlam_a)) / mg
        sigma = (max(mu_aff, 0.0) / mu) ** 3 if mu > 0 else 0.1
        comp = -s * lam + sigma * mu - ds_a * dlam_a
        dx, dy, ds, dlam = step_dirs(comp)
        a_pri = 0.995 * _max_step(s, ds)
        a_dua = 0.995 * _max_step(lam, dlam)
        x = x + a_pri * dx
        s = s + a_pri * ds
        lam = lam + a_dua * dlam
        if me:
            y = y + a_dua * dy
        if not np.all(np.isfinite(x)) or not np.all(np.isfinite(s)):
            break
    return x, y, lam, it, (side_row, side_sign)


def _max_step(v, dv):
    neg = dv < 0
    if not np.any(neg):
        return 1.0
    return min(1.0, float(np.min(-v[neg] / dv[neg])))


def solve_qp(p, tol=1e-6, max_iter=100, warm_sets=None):
    """Solve a QpProblem; returns a SolveReport.

    warm_sets, when given, is a (lo, hi) pair of boolean masks over the
    inequality rows used as the initial working-set guess; otherwise the
    guess comes from p.warm_start, or starts empty.
    """
    t0 = time.perf_counter()
    w = _Workspace(p)
    m = w.m

    lo = np.zeros(m, dtype=bool)
    hi = np.zeros(m, dtype=bool)
    if warm_sets is not None and m:
        lo = np.asarray(warm_sets[0], dtype=bool).copy()
        hi = np.asarray(warm_sets[1], dtype=bool).copy()
        hi &= ~lo
    elif p.warm_start is not None and m:
        ax0 = w.A_in @ np.asarray(p.warm_start, dtype=float)
        lo = ax0 <= w.lb + _ACTIVE_TOL
        hi = (ax0 >= w.ub - _ACTIVE_TOL) & ~lo

    def report(status, iters, payload):
        x, nu, z, viol, kkt_res, lo_m, hi_m = payload
        return SolveReport(
            status=status,
            iterations=iters,
            x=x,
            max_violation=viol,
            cost=w.cost(x),
            wall_time=time.perf_counter() - t0,
            kkt_residual=kkt_res,
            nu_eq=nu,
            z_in=z,
            active_lo=lo_m,
            active_hi=hi_m,
        )

    outcome, payload, iters = _pdas(w, lo, hi, tol, max_iter)
    if outcome == "optimal":
        status = "optimal" if payload[3] <= tol else "max-iter"
        return report(status, iters, payload)
    if outcome == "infeasible":
        return report("infeasible", iters, payload)
    if outcome == "exhausted" and payload is not None:
        # ran out of the caller's budget without evidence of a cycle
        return report("max-iter", iters, payload)

    # a cycle (or a singular working set) means more of the same iteration
    # cannot help: interior-point fallback, then one exact active-set pass
    # seeded by its converged complementarity pattern
    x_ipm, y_ipm, lam, ipm_iters, (side_row, side_sign) = _ipm(w, tol)
    total = iters + ipm_iters
    if x_ipm is not None:
        lo2 = np.zeros(m, dtype=bool)
        hi2 = np.zeros(m, dtype=bool)
        ax = w.A_in @ x_ipm
        ax_sides = ax[side_row]
        s_vals = np.where(
            side_sign < 0, ax_sides - w.lb[side_row], w.ub[side_row] - ax_sides
        )
        active = lam > s_vals
        for j in np.flatnonzero(active):
            if side_sign[j] < 0:
                lo2[side_row[j]] = True
            else:
                hi2[side_row[j]] = not lo2[side_row[j]]
        outcome2, payload2, iters2 = _pdas(w, lo2, hi2, tol, 20)
        total += iters2
        if outcome2 == "optimal":
            status = "optimal" if payload2[3] <= tol else "max-iter"
            return report(status, total, payload2)
        if outcome2 == "infeasible":
            return report("infeasible", total, payload2)
        # fall back to the interior point itself
        z = np.zeros(m)
        for j in range(side_row.size):
            z[side_row[j]] += side_sign[j] * lam[j]
        viol, _ = w.violation(x_ipm)
        rd = w.Hreg @ x_ipm + w.g
        if w.me:
            rd = rd + w.A_eq.T @ y_ipm
        if m:
            rd = rd + w.A_in.T @ z
        kkt_res = float(np.max(np.abs(rd), initial=0.0))
        payload_ipm = (x_ipm, y_ipm, z, viol, kkt_res, lo2, hi2)
        scale = 1.0 + float(np.max(np.abs(w.g), initial=0.0))
        status = "optimal" if viol <= tol and kkt_res <= tol * scale else "max-iter"
        return report(status, total, payload_ipm)

    if payload is None:
        x0 = np.zeros(w.n) if p.warm_start is None else np.asarray(p.warm_start, dtype=float)
        payload = (x0, None, np.zeros(m), np.inf, np.inf, lo, hi)
    return report("max-iter", total, payload)
