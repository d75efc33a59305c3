"""Augmented-Lagrangian solver for smooth constrained minimization.

Handles equality constraints, inequality constraints (c_in(z) <= 0), and
box bounds on the variables.  Inequalities are lifted to equalities with
nonnegative slack variables; the resulting bound-constrained augmented
Lagrangian is minimized by a projected quasi-Newton inner loop whose
model combines the exact Gauss-Newton curvature of the penalty term with
a damped-BFGS estimate of the Lagrangian curvature.  Everything is
deterministic: same problem, start and options give bit-identical output.
"""

from __future__ import annotations

import enum
import sys
from dataclasses import dataclass, field
from typing import Callable

import numpy as np


class InvalidStart(Exception):
    """Objective or constraints are non-finite at the starting point."""


class SolveStatus(enum.Enum):
    CONVERGED = "Converged"
    MAX_ITER = "MaxIter"
    INFEASIBLE = "Infeasible"
    DIVERGED = "Diverged"


@dataclass
class NlpProblem:
    """A smooth NLP: min J(z) s.t. c_eq(z) = 0, c_in(z) <= 0, lb <= z <= ub.

    ``eval_stacked`` (optional) evaluates a (B, n) block of points in one
    call, returning (J (B,), c_eq (B, m_eq), c_in (B, m_in)); it is how
    finite-difference derivative sweeps stay cheap.  When absent, a loop
    over the scalar callables is used.
    """

    n: int
    m_eq: int
    m_in: int
    objective: Callable[[np.ndarray], float]
    c_eq: Callable[[np.ndarray], np.ndarray]
    c_in: Callable[[np.ndarray], np.ndarray]
    lb: np.ndarray
    ub: np.ndarray
    fd_step: float = 1e-7
    eval_stacked: Callable[[np.ndarray], tuple] | None = None

    def __post_init__(self):
        self.lb = np.asarray(self.lb, dtype=float)
        self.ub = np.asarray(self.ub, dtype=float)
        if self.lb.shape != (self.n,) or self.ub.shape != (self.n,):
            raise ValueError("bounds must have shape (n,)")
        if np.any(self.lb > self.ub):
            raise ValueError("need lb <= ub componentwise")
        if self.eval_stacked is None:
            self.eval_stacked = self._eval_loop

    def _eval_loop(self, Z: np.ndarray):
        Z = np.asarray(Z, dtype=float)
        B = Z.shape[0]
        J = np.empty(B)
        ceq = np.empty((B, self.m_eq))
        cin = np.empty((B, self.m_in))
        for i in range(B):
            J[i] = self.objective(Z[i])
            if self.m_eq:
                ceq[i] = np.asarray(self.c_eq(Z[i]), dtype=float)
            if self.m_in:
                cin[i] = np.asarray(self.c_in(Z[i]), dtype=float)
        return J, ceq, cin

    def eval_all(self, z: np.ndarray):
        J, ceq, cin = self.eval_stacked(np.asarray(z, float)[None, :])
        return float(J[0]), ceq[0], cin[0]

    def derivatives(self, z: np.ndarray):
        """Values and central-difference first derivatives at z.

        Central differences cost one extra evaluation sweep over forward
        ones but cut the derivative error by roughly two orders of
        magnitude, which is what lets a quasi-Newton method keep making
        progress once steps shrink below ~1e-5.

        Returns (J, c_eq, c_in, grad (n,), jac_eq (m_eq, n), jac_in (m_in, n)).
        """
        z = np.asarray(z, dtype=float)
        h = self.fd_step
        n = self.n
        Z = np.tile(z, (2 * n + 1, 1))
        Z[1 : n + 1] += h * np.eye(n)
        Z[n + 1 :] -= h * np.eye(n)
        J, Ceq, Cin = self.eval_stacked(Z)
        grad = (J[1 : n + 1] - J[n + 1 :]) / (2.0 * h)
        jac_eq = (Ceq[1 : n + 1] - Ceq[n + 1 :]).T / (2.0 * h)
        jac_in = (Cin[1 : n + 1] - Cin[n + 1 :]).T / (2.0 * h)
        return float(J[0]), Ceq[0], Cin[0], grad, jac_eq, jac_in


@dataclass(frozen=True)
class KktRecord:
    """First-order optimality residuals at a point.

    ``stationarity`` is the projected-gradient norm of the Lagrangian,
    scaled by 1 + the multiplier magnitude (so it is comparable across
    problems); violations are raw infinity norms.
    """

    stationarity: float
    eq_violation: float
    in_violation: float
    complementarity: float


@dataclass(frozen=True)
class OuterRecord:
    outer: int
    J: float
    eq_violation: float
    in_violation: float
    stationarity: float
    penalty: float
    inner_iterations: int


@dataclass
class NlpSolution:
    z_star: np.ndarray
    J_star: float
    kkt: KktRecord
    iterations: int
    status: SolveStatus
    lam_eq: np.ndarray
    lam_in: np.ndarray
    history: list[OuterRecord] = field(default_factory=list)


@dataclass(frozen=True)
class SolverOptions:
    rho0: float = 10.0
    rho_growth: float = 10.0
    rho_max: float = 1e7
    max_outer: int = 30
    max_inner: int = 500
    tol_eq: float = 1e-6
    tol_in: float = 1e-8
    tol_stat: float = 1e-4
    stall_violation: float = 1e-3
    stall_window: int = 5
    improve_factor: float = 0.5
    inner_tol0: float = 1e-2
    inner_tol_shrink: float = 0.3
    inner_tol_min: float = 5e-5
    sigma0: float = 1e-3
    sigma_min: float = 1e-10
    sigma_max: float = 1e8
    armijo_c1: float = 1e-4
    max_backtracks: int = 40
    lam_max: float = 1e10
    max_endgames: int = 8
    warm_violation: float = 1e-3
    rho_warm: float = 1e5
    verbose: bool = False


def _project(w, lo, hi):
    return np.minimum(np.maximum(w, lo), hi)


def _bound_scale(lb, ub):
    """Per-variable magnitude guess from the box; 1 where unbounded."""
    span = ub - lb
    s = np.where(np.isfinite(span), 0.5 * span, 1.0)
    return np.maximum(s, 1e-3)


class _InnerModel:
    """One outer iteration's augmented Lagrangian over (z, slacks).

    Value/gradient come exactly from the problem's finite-difference
    Jacobians; the curvature model is rho * Jw^T Jw (Gauss-Newton on the
    penalty) plus a Powell-damped BFGS matrix for the Lagrangian part,
    with the diagonal slack block eliminated by a Schur complement.
    """

    def __init__(self, problem: NlpProblem, lam_eq, lam_in, rho):
        self.p = problem
        self.lam_eq = lam_eq
        self.lam_in = lam_in
        self.rho = rho
        self.d_z = 1.0 / _bound_scale(problem.lb, problem.ub) ** 2

    def value(self, w):
        J, ceq, cin = self.p.eval_all(w[: self.p.n])
        return self.al_value(J, ceq, cin, w[self.p.n :])

    def al_value(self, J, ceq, cin, s):
        r = np.concatenate([ceq, cin + s])
        lam = np.concatenate([self.lam_eq, self.lam_in])
        return float(J + lam @ r + 0.5 * self.rho * (r @ r))

    def full_eval(self, w):
        """Value, AL gradient, Lagrangian z-gradient, Jacobians, raw values."""
        n = self.p.n
        z, s = w[:n], w[n:]
        J, ceq, cin, grad, jac_eq, jac_in = self.p.derivatives(z)
        y_eq = self.lam_eq + self.rho * ceq
        y_in = self.lam_in + self.rho * (cin + s)
        g_al_z = grad.copy()
        g_lag_z = grad.copy()
        if self.p.m_eq:
            g_al_z += jac_eq.T @ y_eq
            g_lag_z += jac_eq.T @ self.lam_eq
        if self.p.m_in:
            g_al_z += jac_in.T @ y_in
            g_lag_z += jac_in.T @ self.lam_in
        f = self.al_value(J, ceq, cin, s)
        return f, np.concatenate([g_al_z, y_in]), g_lag_z, jac_eq, jac_in, (J, ceq, cin)

    def step(self, w, g_al, B, jac_eq, jac_in, sigma):
        """Damped Gauss-Newton step on (z, s); None if factorization fails.

        Slacks pinned at their zero bound by the gradient are held there
        and their rows keep the full rho curvature; free slacks are
        eliminated through the Schur complement of H_ss = (rho + sigma)I,
        which leaves only rho*sigma/(rho+sigma) on their rows.  Treating
        active rows as free would model the penalty on an active
        constraint with curvature ~sigma instead of rho, producing huge
        overshooting steps along e.g. a tight friction cone.
        """
        n, m_in, rho = self.p.n, self.p.m_in, self.rho
        gz, gs = g_al[:n], g_al[n:]
        H = B + sigma * np.diag(self.d_z)
        if self.p.m_eq:
            H = H + rho * (jac_eq.T @ jac_eq)
        if not m_in:
            rhs = -gz
        else:
            s = w[n:]
            active = (s <= 1e-14) & (gs >= 0.0)
            free = ~active
            rhs = -gz
            if np.any(active):
                Ja = jac_in[active]
                H = H + rho * (Ja.T @ Ja)
            if np.any(free):
                Jf = jac_in[free]
                H = H + (rho * sigma / (rho + sigma)) * (Jf.T @ Jf)
                rhs = rhs + (rho / (rho + sigma)) * (Jf.T @ gs[free])
        try:
            L = np.linalg.cholesky(H)
        except np.linalg.LinAlgError:
            return None
        dz = np.linalg.solve(L.T, np.linalg.solve(L, rhs))
        if m_in:
            ds = np.zeros(m_in)
            if np.any(free):
                ds[free] = -(gs[free] + rho * (jac_in[free] @ dz)) / (rho + sigma)
            return np.concatenate([dz, ds])
        return dz


def _bfgs_update(B, s, y):
    """Powell-damped BFGS update keeping B positive semidefinite."""
    Bs = B @ s
    sBs = float(s @ Bs)
    sy = float(s @ y)
    if sBs > 0 and sy < 0.2 * sBs:
        theta = 0.8 * sBs / (sBs - sy)
        y = theta * y + (1.0 - theta) * Bs
        sy = float(s @ y)
    if sy <= 1e-12 * float(np.linalg.norm(s) * np.linalg.norm(y) + 1e-300):
        return B
    B = B + np.outer(y, y) / sy
    if sBs > 0:
        B = B - np.outer(Bs, Bs) / sBs
    return B


def _minimize_al(model: _InnerModel, w0, lo, hi, tol, max_iter, opts: SolverOptions):
    """Projected damped-Newton descent of the augmented Lagrangian.

    The curvature estimate B and the damping level restart fresh for each
    subproblem: secant pairs gathered under a different penalty weight
    mis-scale the new landscape badly enough to strangle the step size.

    Returns (w, (J, c_eq, c_in) at w, iterations used, B, sigma).
    """
    n = model.p.n
    w = _project(np.asarray(w0, dtype=float), lo, hi)
    f, g_al, g_lag, jac_eq, jac_in, raw = model.full_eval(w)
    B = np.zeros((n, n))
    scaled = False
    sigma = opts.sigma0
    it = 0
    while it < max_iter:
        pg = w - _project(w - g_al, lo, hi)
        if np.max(np.abs(pg), initial=0.0) <= tol:
            break
        it += 1

        accepted = None
        d = model.step(w, g_al, B, jac_eq, jac_in, sigma)
        for _ in range(8):
            if d is not None:
                alpha = 1.0
                for _ in range(opts.max_backtracks):
                    w_try = _project(w + alpha * d, lo, hi)
                    step = w_try - w
                    if not np.any(step):
                        break
                    f_try = model.value(w_try)
                    if np.isfinite(f_try) and f_try <= f + opts.armijo_c1 * (g_al @ step):
                        accepted = (w_try, alpha)
                        break
                    alpha *= 0.5
            if accepted is not None:
                break
            sigma = min(sigma * 100.0, opts.sigma_max)
            d = model.step(w, g_al, B, jac_eq, jac_in, sigma)
        if accepted is None:
            break

        w_new, alpha = accepted
        f_new, g_al_new, g_lag_new, jac_eq, jac_in, raw = model.full_eval(w_new)
        s_vec = (w_new - w)[:n]
        y_vec = g_lag_new - g_lag
        if not scaled:
            # Size the initial curvature from the first secant pair;
            # starting from zero leaves penalty-nullspace directions with
            # only the tiny damping term and the first steps overshoot by
            # orders of magnitude.
            sy = float(s_vec @ y_vec)
            if sy > 0.0:
                B = (float(y_vec @ y_vec) / sy) * np.eye(n)
                scaled = True
        B = _bfgs_update(B, s_vec, y_vec)
        if alpha == 1.0:
            sigma = max(sigma * 0.3, opts.sigma_min)
        elif alpha < 0.25:
            sigma = min(sigma * 10.0, opts.sigma_max)
        w, f, g_al, g_lag = w_new, f_new, g_al_new, g_lag_new
    return w, raw, it, B, sigma


def check_kkt(problem: NlpProblem, z, lam_eq, lam_in) -> KktRecord:
    """First-order residuals at (z, multipliers); pure function.

    Stationarity uses the gradient of the Lagrangian projected onto the
    variable box (identical to the plain gradient norm when no bound is
    active) and is scaled by 1 + the multiplier infinity norm.
    """
    z = np.asarray(z, dtype=float)
    lam_eq = np.asarray(lam_eq, dtype=float)
    lam_in = np.asarray(lam_in, dtype=float)
    _, ceq, cin, grad, jac_eq, jac_in = problem.derivatives(z)
    g_lag = grad.copy()
    if problem.m_eq:
        g_lag += jac_eq.T @ lam_eq
    if problem.m_in:
        g_lag += jac_in.T @ np.maximum(lam_in, 0.0)
    pg = z - _project(z - g_lag, problem.lb, problem.ub)
    scale = 1.0 + max(
        np.max(np.abs(lam_eq), initial=0.0), np.max(np.abs(lam_in), initial=0.0)
    )
    return KktRecord(
        stationarity=float(np.max(np.abs(pg), initial=0.0) / scale),
        eq_violation=float(np.max(np.abs(ceq), initial=0.0)),
        in_violation=float(np.max(cin, initial=0.0)) if problem.m_in else 0.0,
        complementarity=float(np.max(np.abs(lam_in * cin), initial=0.0))
        if problem.m_in
        else 0.0,
    )


def _certified_multipliers(problem: NlpProblem, z, act_tol=1e-6):
    """Least-squares multiplier estimate at z, or None.

    Minimizes |grad + Jeq^T y_eq + Jact^T y_act| over the coordinates
    strictly inside the box, with inequality rows limited to the
    near-active set and negative inequality multipliers pruned one at a
    time.  The penalty iteration's own multipliers converge slowly once
    the iterate is feasible (the update signal is then dominated by
    derivative noise), while this direct estimate is exact in one solve.
    """
    _, ceq, cin, grad, jac_eq, jac_in = problem.derivatives(z)
    interior = (z - problem.lb > 1e-9) & (problem.ub - z > 1e-9)
    if not np.any(interior):
        return None
    act = (
        np.where(cin >= -act_tol)[0] if problem.m_in else np.array([], dtype=int)
    )
    blocks = []
    if problem.m_eq:
        blocks.append(jac_eq[:, interior])
    if act.size:
        blocks.append(jac_in[act][:, interior])
    lam_eq = np.zeros(problem.m_eq)
    lam_in = np.zeros(problem.m_in)
    if not blocks:
        return lam_eq, lam_in
    A = np.vstack(blocks).T
    b = -grad[interior]
    keep = np.ones(A.shape[1], dtype=bool)
    for _ in range(act.size + 1):
        y = np.zeros(A.shape[1])
        y[keep], *_ = np.linalg.lstsq(A[:, keep], b, rcond=None)
        y_act = y[problem.m_eq :]
        bad = np.where(keep[problem.m_eq :] & (y_act < 0.0))[0]
        if not bad.size:
            lam_eq = y[: problem.m_eq]
            lam_in[act] = y_act
            return lam_eq, lam_in
        keep[problem.m_eq + bad[np.argmin(y_act[bad])]] = False
    return None


def _lagrangian_gradient(problem: NlpProblem, z, lam_eq, lam_in):
    _, ceq, cin, grad, jac_eq, jac_in = problem.derivatives(z)
    g = grad.copy()
    if problem.m_eq:
        g += jac_eq.T @ lam_eq
    if problem.m_in:
        g += jac_in.T @ np.maximum(lam_in, 0.0)
    return g, ceq, cin, jac_eq, jac_in


def _restore(problem: NlpProblem, z, budget=30, target=1e-9):
    """Project z back onto the constraint manifold (Levenberg-Marquardt).

    Minimizes |c_eq|^2 + |max(c_in, 0)|^2 with no objective term at all:
    the step lives purely in the row space of the constraint Jacobian, so
    whatever tangential progress the caller just made is preserved, and
    convergence is quadratic near the manifold.
    """
    z = z.copy()
    mu = 1e-10
    # Inequality rows join the residual once violated and then stay in,
    # driven to a slightly negative target; letting them drop back out
    # the moment they cross zero makes the active set chatter and traps
    # the iteration at a nonzero residual.
    sticky = np.zeros(problem.m_in, dtype=bool)
    margin = 1e-9
    for _ in range(budget):
        _, ceq, cin, _, jac_eq, jac_in = problem.derivatives(z)
        if problem.m_in:
            sticky |= cin > 0.0
        r = np.concatenate([ceq, cin[sticky] + margin])
        if r.size == 0 or (
            np.max(np.abs(ceq), initial=0.0) <= target
            and np.max(cin, initial=0.0) <= 0.0
        ):
            break
        Jr = np.vstack([jac_eq, jac_in[sticky]])
        v0 = float(r @ r)
        # Solve the damped step from the augmented least-squares system
        # rather than the normal equations: the constraint Jacobian turns
        # badly conditioned near heavily bound-active points and squaring
        # it loses the last decades of accuracy exactly when they matter.
        scale = max(float(np.mean(Jr * Jr)) * problem.n, 1e-300)
        eye = np.eye(problem.n)
        rhs = np.concatenate([-r, np.zeros(problem.n)])
        for _ in range(20):
            aug = np.vstack([Jr, np.sqrt(mu * scale) * eye])
            d = np.linalg.lstsq(aug, rhs, rcond=None)[0]
            z_try = np.clip(z + d, problem.lb, problem.ub)
            _, ceq_t, cin_t = problem.eval_all(z_try)
            r_t = np.concatenate([ceq_t, cin_t[sticky] + margin])
            if float(r_t @ r_t) < v0:
                z = z_try
                mu = max(mu * 0.1, 1e-12)
                break
            mu *= 10.0
        else:
            break
    return z


def _tangential_newton(problem: NlpProblem, z, lam_eq, lam_in, opts,
                       cycles=400, cg_iters=80):
    """Second-order endgame for feasible iterates that fail stationarity.

    Costs without a direct torque penalty leave the reduced Hessian
    nearly singular along whole families of input profiles; first-order
    descent creeps along those valleys indefinitely.  Each cycle here
    snaps coordinates onto the bounds they are converging to, takes a
    trust-region Newton-CG step in the null space of the active
    constraint Jacobian (Hessian-vector products by differencing the
    Lagrangian gradient), reprojects onto the constraint manifold, and
    re-estimates the multipliers.

    Returns (z, lam_eq, lam_in, kkt): the best certificate if it meets
    the stationarity tolerance, otherwise the lowest-objective feasible
    point reached — the valleys these costs carve are long, and handing
    real descent back to the outer loop beats clinging to whichever
    iterate happened to measure best.
    """
    lb, ub = problem.lb, problem.ub
    kkt0 = check_kkt(problem, z, lam_eq, lam_in)
    J_cur = float(problem.objective(z))
    best = (kkt0, z, lam_eq, lam_in, J_cur)
    walk = (J_cur, z, lam_eq, lam_in, kkt0)
    trust = 1.0
    rejects = 0
    for _ in range(cycles):
        g_L, ceq, cin, jac_eq, jac_in = _lagrangian_gradient(
            problem, z, lam_eq, lam_in
        )
        # Snap coordinates that have crawled against a bound and are
        # still being pushed outward; their bound multiplier absorbs the
        # gradient exactly there.  The window is generous because the
        # projected quasi-Newton iteration approaches a bound only
        # asymptotically; a wrong snap frees itself next cycle when the
        # gradient flips sign.  The snap lives only in the trial point —
        # a rejected cycle must not leave its displacement behind in the
        # walk state.
        snap_lo = (z - lb < 5e-3) & (g_L > 0.0)
        snap_hi = (ub - z < 5e-3) & (g_L < 0.0)
        z_base = np.where(snap_lo, lb, np.where(snap_hi, ub, z))
        free = ~(snap_lo | snap_hi)
        if not np.any(free):
            break

        rows = [jac_eq] if problem.m_eq else []
        if problem.m_in:
            strong = (cin >= -1e-7) & (lam_in > 1e-12)
            if np.any(strong):
                rows.append(jac_in[strong])
        A = np.vstack(rows)[:, free] if rows else None

        def project(v):
            if A is None:
                return v
            AAt = A @ A.T
            reg = 1e-12 * max(np.trace(AAt) / max(A.shape[0], 1), 1.0)
            y = np.linalg.solve(AAt + reg * np.eye(A.shape[0]), A @ v)
            return v - A.T @ y

        nf = int(np.count_nonzero(free))

        def hess_vec(v):
            nv = np.linalg.norm(v)
            if nv == 0.0:
                return np.zeros_like(v)
            h = 1e-3 / nv
            vz = np.zeros(problem.n)
            vz[free] = v
            gp, *_ = _lagrangian_gradient(problem, z_base + h * vz, lam_eq, lam_in)
            gm, *_ = _lagrangian_gradient(problem, z_base - h * vz, lam_eq, lam_in)
            return ((gp - gm) / (2.0 * h))[free]

        # Steihaug-truncated CG on the reduced quadratic model.
        g = project(g_L[free])
        d = np.zeros(nf)
        r = g.copy()
        p = -r
        r0 = np.linalg.norm(r)
        if r0 == 0.0:
            break
        for _ in range(min(cg_iters, nf)):
            Hp = project(hess_vec(p))
            pHp = float(p @ Hp)
            if pHp <= 1e-12 * float(p @ p):
                # Negative/zero curvature: ride the valley to the wall.
                tau = (trust - np.linalg.norm(d)) / max(np.linalg.norm(p), 1e-300)
                d = d + tau * p
                break
            alpha = float(r @ r) / pHp
            if np.linalg.norm(d + alpha * p) >= trust:
                tau = (trust - np.linalg.norm(d)) / max(np.linalg.norm(p), 1e-300)
                d = d + tau * p
                break
            d = d + alpha * p
            r_new = r + alpha * Hp
            if np.linalg.norm(r_new) <= 0.1 * r0:
                r = r_new
                break
            beta = float(r_new @ r_new) / float(r @ r)
            p = -r_new + beta * p
            r = r_new

        dz = np.zeros(problem.n)
        dz[free] = d
        # If reprojection fails from the full step (it can leave the
        # local basin), retry from fractions before giving up the cycle.
        accepted = False
        for frac in (1.0, 0.5, 0.25):
            z_try = np.clip(z_base + frac * dz, lb, ub)
            z_try = _restore(problem, z_try)
            est = _certified_multipliers(problem, z_try)
            if est is None:
                continue
            kkt_try = check_kkt(problem, z_try, est[0], est[1])
            ok = (
                kkt_try.eq_violation <= opts.tol_eq
                and kkt_try.in_violation <= opts.tol_in
            )
            J_try = float(problem.objective(z_try))
            if opts.verbose:
                print(
                    f"[nlp]   polish |d|={frac * np.linalg.norm(d):.2e} "
                    f"trust={trust:.1e} J={J_try:.8f} "
                    f"eq={kkt_try.eq_violation:.1e} "
                    f"stat={kkt_try.stationarity:.2e} "
                    f"snapped={int(np.count_nonzero(~free))}",
                    file=sys.stderr,
                )
            # Walk on objective descent (the stationarity residual barely
            # moves while traversing a flat valley); certify on
            # stationarity.
            if ok and (
                kkt_try.stationarity < best[0].stationarity
                or J_try < J_cur - 1e-12 * (1.0 + abs(J_cur))
            ):
                accepted = True
                break
        if accepted:
            rejects = 0
            if kkt_try.stationarity < best[0].stationarity:
                best = (kkt_try, z_try, est[0], est[1], J_try)
            if J_try < walk[0]:
                walk = (J_try, z_try, est[0], est[1], kkt_try)
            z, lam_eq, lam_in, J_cur = z_try, est[0], est[1], J_try
            trust = min(max(trust, np.linalg.norm(d)) * 3.0, 100.0)
            if kkt_try.stationarity <= opts.tol_stat:
                break
        else:
            rejects += 1
            trust *= 0.25
            if rejects >= 15 or trust < 1e-6:
                break
    kkt_b, z_b, le_b, li_b, J_b = best
    if kkt_b.stationarity <= opts.tol_stat or walk[0] >= J_b - 1e-9 * (
        1.0 + abs(J_b)
    ):
        return z_b, le_b, li_b, kkt_b
    J_w, z_w, le_w, li_w, kkt_w = walk
    return z_w, le_w, li_w, kkt_w


def solve(problem: NlpProblem, z0, opts: SolverOptions | None = None) -> NlpSolution:
    """Minimize the problem from z0 (projected into bounds if outside).

    Outer loop: classic augmented-Lagrangian multiplier updates with the
    penalty grown tenfold whenever feasibility fails to halve while still
    above tolerance.  Never raises after a finite start; the status field
    reports the outcome and the KKT record is attached regardless.
    """
    opts = opts or SolverOptions()
    m_in = problem.m_in
    z = _project(np.asarray(z0, dtype=float), problem.lb, problem.ub)

    J0, ceq, cin = problem.eval_all(z)
    if not (np.isfinite(J0) and np.all(np.isfinite(ceq)) and np.all(np.isfinite(cin))):
        raise InvalidStart("objective or constraints non-finite at the start point")

    lam_eq = np.zeros(problem.m_eq)
    lam_in = np.zeros(m_in)
    rho = opts.rho0
    # A start point already on the constraint manifold (warm start from a
    # solved neighbour) deserves multipliers estimated there and a penalty
    # stiff enough that the first subproblem cannot trade feasibility away
    # for objective: with zero multipliers and a soft penalty, a cost with
    # O(1) gradient happily drags the iterate to an infeasible local
    # minimum of the penalty that no later growth can escape.
    v0 = max(
        np.max(np.abs(ceq), initial=0.0),
        np.max(cin, initial=0.0),
    )
    if v0 <= opts.warm_violation:
        rho = max(rho, opts.rho_warm)
        est = _certified_multipliers(problem, z)
        if est is not None:
            lam_eq, lam_in = est
    lo = np.concatenate([problem.lb, np.zeros(m_in)])
    hi = np.concatenate([problem.ub, np.full(m_in, np.inf)])

    history: list[OuterRecord] = []
    violations: list[float] = []
    total_inner = 0
    endgames = 0
    status = SolveStatus.MAX_ITER
    kkt = check_kkt(problem, z, lam_eq, lam_in)
    v_prev = np.inf
    # Best iterate seen so far: feasible beats infeasible, then lower
    # objective (or lower violation while infeasible).  The outer
    # iteration is not monotone, so the final iterate can be worse than
    # an earlier one; the caller gets the best — which, short of full
    # convergence, is the deepest feasible descent (the most useful
    # point to warm-start from).
    best_key = (1, np.inf)
    best_pt = (z.copy(), lam_eq.copy(), lam_in.copy(), kkt)

    for outer in range(opts.max_outer):
        # Slacks start at their unconstrained optimum for the current
        # multipliers; the inner loop refines jointly with z.
        s = np.maximum(0.0, -cin - lam_in / rho)
        model = _InnerModel(problem, lam_eq, lam_in, rho)
        # The convergence test divides the Lagrangian gradient by
        # (1 + |lambda|_inf); the inner target must scale the same way or
        # the subproblems chase an absolute figure far below what the
        # multipliers make attainable.
        lam_scale = 1.0 + max(
            np.max(np.abs(lam_eq), initial=0.0),
            np.max(np.abs(lam_in), initial=0.0),
        )
        inner_tol = lam_scale * max(
            opts.inner_tol_min, opts.inner_tol0 * opts.inner_tol_shrink**outer
        )
        w, raw, inner_iters, _, _ = _minimize_al(
            model, np.concatenate([z, s]), lo, hi, inner_tol, opts.max_inner, opts
        )
        total_inner += inner_iters
        z, s = w[: problem.n], w[problem.n :]
        J, ceq, cin = raw

        lam_eq = np.clip(lam_eq + rho * ceq, -opts.lam_max, opts.lam_max)
        if m_in:
            lam_in = np.clip(lam_in + rho * (cin + s), 0.0, opts.lam_max)

        kkt = check_kkt(problem, z, lam_eq, lam_in)
        if (
            kkt.eq_violation <= opts.tol_eq
            and kkt.in_violation <= opts.tol_in
            and kkt.stationarity > opts.tol_stat
        ):
            # Feasible but the running multipliers do not certify
            # stationarity.  A direct least-squares estimate is exact
            # where the iterative update is noise-bound; adopt it when it
            # is strictly better — either it certifies convergence now or
            # it hands the next subproblem multipliers good enough that
            # only tangential polishing remains.
            est = _certified_multipliers(problem, z)
            if est is not None:
                kkt_est = check_kkt(problem, z, est[0], est[1])
                if kkt_est.stationarity < kkt.stationarity:
                    lam_eq, lam_in = est
                    kkt = kkt_est
            if kkt.stationarity > opts.tol_stat and endgames < opts.max_endgames:
                endgames += 1
                z2, le2, li2, kkt2 = _tangential_newton(
                    problem, z, lam_eq, lam_in, opts
                )
                J2 = float(problem.objective(z2))
                feas2 = (
                    kkt2.eq_violation <= opts.tol_eq
                    and kkt2.in_violation <= opts.tol_in
                )
                if feas2 and (
                    kkt2.stationarity < kkt.stationarity
                    or J2 < J - 1e-9 * (1.0 + abs(J))
                ):
                    z, lam_eq, lam_in, kkt = z2, le2, li2, kkt2
                    J, ceq, cin = problem.eval_all(z)
        violation = max(kkt.eq_violation, kkt.in_violation)
        feasible_now = (
            kkt.eq_violation <= opts.tol_eq and kkt.in_violation <= opts.tol_in
        )
        key = (0, J) if feasible_now else (1, violation)
        if key < best_key:
            best_key = key
            best_pt = (z.copy(), lam_eq.copy(), lam_in.copy(), kkt)
        history.append(
            OuterRecord(outer, J, kkt.eq_violation, kkt.in_violation,
                        kkt.stationarity, rho, inner_iters)
        )
        violations.append(violation)
        if opts.verbose:
            print(
                f"[nlp] outer {outer:2d}  J={J: .6e}  eq={kkt.eq_violation:.2e}  "
                f"in={kkt.in_violation:.2e}  stat={kkt.stationarity:.2e}  "
                f"rho={rho:.1e}  inner={inner_iters}",
                file=sys.stderr,
            )

        if not np.isfinite(J) or np.max(np.abs(z), initial=0.0) > 1e10:
            status = SolveStatus.DIVERGED
            break
        if (
            kkt.eq_violation <= opts.tol_eq
            and kkt.in_violation <= opts.tol_in
            and kkt.stationarity <= opts.tol_stat
        ):
            status = SolveStatus.CONVERGED
            break
        window = violations[-opts.stall_window :]
        if (
            len(window) == opts.stall_window
            and min(window) > opts.stall_violation
            and window[-1] > opts.improve_factor * window[0]
        ):
            status = SolveStatus.INFEASIBLE
            break
        # Grow the penalty only while meaningfully infeasible; once the
        # iterate reaches the constraint manifold, cool it back down.  A
        # large rho is pure poison there: curvature of the constraint
        # surface makes any tangential move cost ~rho * |d|^4 in penalty,
        # so descent along the manifold stalls long before stationarity
        # is reached, while the multiplier updates see only noise.
        if feasible_now:
            rho = max(rho / opts.rho_growth, opts.rho0)
        elif violation > opts.improve_factor * v_prev:
            rho = min(rho * opts.rho_growth, opts.rho_max)
        v_prev = violation

    if status is not SolveStatus.CONVERGED:
        z, lam_eq, lam_in, kkt = best_pt
    return NlpSolution(
        z_star=z,
        J_star=float(problem.objective(z)),
        kkt=kkt,
        iterations=total_inner,
        status=status,
        lam_eq=lam_eq,
        lam_in=lam_in,
        history=history,
    )
