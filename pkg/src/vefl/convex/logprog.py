"""Log-barrier interior-point solver for separable log-utility programs.

Solves

    minimize    sum_i c_i x_i - w_i log(1 + a_i x_i)
    subject to  lo <= x <= hi
                G @ x <= h
                F_k @ log(1 + a x) + D_k @ x >= r_k      (rate floors)

with w, a, F >= 0. This is the shape of every power-allocation subproblem
in the package: log rates, linear power prices and per-user or per-block
power budgets. Newton steps are taken on ``t f + barrier`` with ``t``
increased geometrically, and a phase-one problem finds a strictly feasible
start when the floors are not satisfied by the default start.
"""

from dataclasses import dataclass

import numpy as np


@dataclass
class LogProgram:
    c: np.ndarray
    w: np.ndarray
    a: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    G: np.ndarray = None
    h: np.ndarray = None
    F: np.ndarray = None
    D: np.ndarray = None
    r: np.ndarray = None

    def __post_init__(self):
        n = np.asarray(self.c).size
        self.c = np.asarray(self.c, float).ravel()
        self.w = np.broadcast_to(np.asarray(self.w, float), (n,)).copy()
        self.a = np.broadcast_to(np.asarray(self.a, float), (n,)).copy()
        self.lo = np.broadcast_to(np.asarray(self.lo, float), (n,)).copy()
        self.hi = np.broadcast_to(np.asarray(self.hi, float), (n,)).copy()
        self.G = np.zeros((0, n)) if self.G is None else np.atleast_2d(np.asarray(self.G, float))
        self.h = np.zeros(0) if self.h is None else np.asarray(self.h, float).ravel()
        self.F = np.zeros((0, n)) if self.F is None else np.atleast_2d(np.asarray(self.F, float))
        k = self.F.shape[0]
        self.D = np.zeros((k, n)) if self.D is None else np.atleast_2d(np.asarray(self.D, float))
        self.r = np.zeros(k) if self.r is None else np.asarray(self.r, float).ravel()
        if self.G.shape[0] == 0:
            self.G = self.G.reshape(0, n)
        if self.F.shape[0] == 0:
            self.F = self.F.reshape(0, n)
            self.D = self.D.reshape(0, n)

    @property
    def n(self):
        return self.c.size

    def objective(self, x):
        return float(self.c @ x - self.w @ np.log1p(self.a * x))

    def floor_values(self, x):
        return self.F @ np.log1p(self.a * x) + self.D @ x

    def max_violation(self, x):
        v = [np.max(self.lo - x, initial=0.0), np.max(x - self.hi, initial=0.0)]
        if self.G.shape[0]:
            v.append(np.max(self.G @ x - self.h, initial=0.0))
        if self.F.shape[0]:
            v.append(np.max(self.r - self.floor_values(x), initial=0.0))
        return float(max(v))


@dataclass
class LogProgramResult:
    x: np.ndarray
    fun: float
    status: str  # "optimal" or "infeasible"
    newton_steps: int
    t: float
    mult_lo: np.ndarray = None
    mult_hi: np.ndarray = None
    mult_rows: np.ndarray = None
    mult_floors: np.ndarray = None
    floor_margin: float = None

    def kkt_residual(self, prog: LogProgram, active_tol=1e-7):
        """Stationarity residual with non-negative multipliers on active constraints.

        Multipliers are fitted by non-negative least squares over the
        constraints whose slack is within ``active_tol`` (relative), so the
        value does not depend on how well the last barrier problem was
        centered.
        """
        return kkt_residual(prog, self.x, active_tol)


def kkt_residual(prog: LogProgram, x, active_tol=1e-7):
    from scipy.optimize import nnls

    x = np.asarray(x, float)
    q = 1.0 + prog.a * x
    grad = prog.c - prog.w * prog.a / q
    cols = []  # gradients of active constraints written as g(x) <= 0
    n = prog.n
    eye = np.eye(n)
    scale_x = max(1.0, float(np.max(np.abs(x))))
    for i in np.flatnonzero(x - prog.lo <= active_tol * scale_x):
        cols.append(-eye[i])
    fin = np.isfinite(prog.hi)
    for i in np.flatnonzero(fin & (prog.hi - x <= active_tol * scale_x)):
        cols.append(eye[i])
    if prog.G.shape[0]:
        sl = prog.h - prog.G @ x
        for k in np.flatnonzero(sl <= active_tol * np.maximum(1.0, np.abs(prog.h))):
            cols.append(prog.G[k])
    if prog.F.shape[0]:
        u = prog.floor_values(x) - prog.r
        jac = prog.F * (prog.a / q)[None, :] + prog.D
        for k in np.flatnonzero(u <= active_tol * np.maximum(1.0, np.abs(prog.r))):
            cols.append(-jac[k])
    if not cols:
        return float(np.linalg.norm(grad))
    J = np.array(cols).T
    _, res = nnls(J, -grad)
    return float(res)


class _PrimalDual:
    """Primal-dual interior-point iterations on the inequality form.

    Constraints are kept as blocks: lower bounds, finite upper bounds,
    linear rows and rate floors, each written as f_i(x) <= 0.
    """

    def __init__(self, prog: LogProgram):
        self.p = prog
        self.fin = np.isfinite(prog.hi)
        self.idx_hi = np.flatnonzero(self.fin)
        self.n = prog.n
        self.m = prog.n + self.idx_hi.size + prog.G.shape[0] + prog.F.shape[0]

    def fvals(self, x):
        p = self.p
        q = 1.0 + p.a * x
        f_lo = p.lo - x
        f_hi = x[self.idx_hi] - p.hi[self.idx_hi]
        f_g = p.G @ x - p.h
        if p.F.shape[0]:
            f_f = p.r - (p.F @ np.log(np.maximum(q, 1e-300)) + p.D @ x)
        else:
            f_f = np.zeros(0)
        return q, np.concatenate([f_lo, f_hi, f_g, f_f])

    def split(self, v):
        n, nh, ng = self.n, self.idx_hi.size, self.p.G.shape[0]
        return v[:n], v[n:n + nh], v[n + nh:n + nh + ng], v[n + nh + ng:]

    def jt_mul(self, x, q, v):
        """Df(x)^T v."""
        p = self.p
        v_lo, v_hi, v_g, v_f = self.split(v)
        out = -v_lo.copy()
        out[self.idx_hi] += v_hi
        if v_g.size:
            out += p.G.T @ v_g
        if v_f.size:
            jac = p.F * (p.a / q)[None, :] + p.D
            out -= jac.T @ v_f
        return out

    def j_mul(self, x, q, d):
        """Df(x) d."""
        p = self.p
        parts = [-d, d[self.idx_hi], p.G @ d]
        if p.F.shape[0]:
            jac = p.F * (p.a / q)[None, :] + p.D
            parts.append(-(jac @ d))
        else:
            parts.append(np.zeros(0))
        return np.concatenate(parts)

    def residuals(self, x, lam, t):
        p = self.p
        q, f = self.fvals(x)
        r_d = p.c - p.w * p.a / q + self.jt_mul(x, q, lam)
        r_c = -lam * f - 1.0 / t
        return q, f, r_d, r_c

    def step(self, x, lam, t):
        p = self.p
        q, f, r_d, r_c = self.residuals(x, lam, t)
        a2 = (p.a / q) ** 2
        dw = -lam / f  # positive weights
        w_lo, w_hi, w_g, w_f = self.split(dw)
        l_lo, l_hi, l_g, l_f = self.split(lam)
        hdiag = p.w * a2 + w_lo
        hdiag[self.idx_hi] += w_hi
        H = None
        if p.G.shape[0]:
            Gs = p.G * np.sqrt(w_g)[:, None]
            H = Gs.T @ Gs
        if p.F.shape[0]:
            hdiag = hdiag + (l_f @ p.F) * a2
            jac = p.F * (p.a / q)[None, :] + p.D
            Js = jac * np.sqrt(w_f)[:, None]
            H2 = Js.T @ Js
            H = H2 if H is None else H + H2
        rhs = -r_d - self.jt_mul(x, q, r_c / f)
        if H is None:
            dx = rhs / hdiag
        else:
            H[np.diag_indices_from(H)] += hdiag
            try:
                L = np.linalg.cholesky(H)
                dx = np.linalg.solve(L.T, np.linalg.solve(L, rhs))
            except np.linalg.LinAlgError:
                dx = np.linalg.lstsq(H, rhs, rcond=None)[0]
        dlam = (r_c - lam * self.j_mul(x, q, dx)) / f
        return dx, dlam, f, r_d, r_c

    def solve(self, x, lam, tol, max_iter, mu=10.0, stop=None):
        m = self.m
        it = 0
        while it < max_iter:
            q, f = self.fvals(x)
            gap = float(-f @ lam)
            t = mu * m / max(gap, 1e-300)
            dx, dlam, f, r_d, r_c = self.step(x, lam, t)
            if gap <= tol and np.linalg.norm(r_d) <= tol:
                break
            s = 1.0
            neg = dlam < 0
            if np.any(neg):
                s = min(1.0, 0.99 * np.min(-lam[neg] / dlam[neg]))
            res0 = np.sqrt(r_d @ r_d + r_c @ r_c)
            while True:
                x_new = x + s * dx
                q_new, f_new = self.fvals(x_new)
                if np.all(f_new < 0) and np.all(q_new > 0):
                    break
                s *= 0.5
                if s < 1e-14:
                    return x, lam, it, False
            while True:
                lam_new = lam + s * dlam
                _, _, rd_n, rc_n = self.residuals(x_new, lam_new, t)
                if np.sqrt(rd_n @ rd_n + rc_n @ rc_n) <= (1 - 0.01 * s) * res0:
                    break
                s *= 0.5
                if s < 1e-14:
                    return x, lam, it, False
                x_new = x + s * dx
            x, lam = x_new, lam_new
            it += 1
            if stop is not None and stop(x):
                break
        return x, lam, it, True

    def initial_duals(self, x):
        _, f = self.fvals(x)
        return 1.0 / (-f)


def _default_start(prog):
    span = np.where(np.isfinite(prog.hi), prog.hi - prog.lo, 1.0)
    if prog.G.shape[0] == 0:
        return prog.lo + 0.5 * span
    base = prog.G @ prog.lo
    room = prog.h - base
    if np.any(room <= 0):
        raise ValueError("no strictly feasible start for the linear constraints")
    for eps in (0.5, 0.25, 0.1, 1e-2, 1e-3, 1e-4, 1e-6, 1e-8):
        x = prog.lo + eps * span
        if np.all(prog.G @ x - base <= 0.5 * room):
            return x
    raise ValueError("no strictly feasible start for the linear constraints")


def _phase_one(prog, x0, tol):
    """Find a point with all floors strictly satisfied, or report the max-min margin."""
    n = prog.n
    k = prog.F.shape[0]
    s0 = float(np.max(prog.r - prog.floor_values(x0))) + 1.0
    big = abs(s0) + 10.0 * (1.0 + np.abs(prog.r).max())
    aux = LogProgram(
        c=np.concatenate([np.zeros(n), [1.0]]),
        w=np.zeros(n + 1),
        a=np.concatenate([prog.a, [0.0]]),
        lo=np.concatenate([prog.lo, [-big]]),
        hi=np.concatenate([prog.hi, [big]]),
        G=np.hstack([prog.G, np.zeros((prog.G.shape[0], 1))]),
        h=prog.h,
        F=np.hstack([prog.F, np.zeros((k, 1))]),
        D=np.hstack([prog.D, np.ones((k, 1))]),
        r=prog.r,
    )
    pd = _PrimalDual(aux)
    z = np.concatenate([x0, [s0]])
    z, _, it, _ = pd.solve(z, pd.initial_duals(z), tol, 200, stop=lambda z: z[-1] < -1e-6)
    return z[:n], bool(z[-1] < 0), it, float(-z[-1])


def solve_log_program(prog: LogProgram, tol=1e-9, x0=None, max_iter=200) -> LogProgramResult:
    """Primal-dual interior point. ``tol`` bounds the surrogate duality gap
    and the dual residual at exit.

    ``x0`` may be any strictly feasible point (e.g. a previous solution).
    If the floors cannot be met the result has ``status == "infeasible"``
    and ``x`` is the best point found by the phase-one problem, which
    maximizes the smallest floor margin.
    """
    pd = _PrimalDual(prog)
    steps = 0
    x = None
    if x0 is not None:
        x0 = np.asarray(x0, float)
        q, f = pd.fvals(x0)
        if np.all(f < 0) and np.all(q > 0):
            x = x0.copy()
    if x is None:
        x = _default_start(prog)
        q, f = pd.fvals(x)
        if not np.all(f < 0):
            x, ok, steps, margin = _phase_one(prog, x, tol)
            if not ok:
                return LogProgramResult(x, prog.objective(x), "infeasible", steps, 0.0,
                                        floor_margin=-margin)
    lam = pd.initial_duals(x)
    x, lam, it, _ = pd.solve(x, lam, tol, max_iter)
    steps += it
    ml, mh_fin, mg, mf = pd.split(lam)
    mh = np.zeros(prog.n)
    mh[pd.idx_hi] = mh_fin
    q, f = pd.fvals(x)
    res = LogProgramResult(x, prog.objective(x), "optimal", steps, float(-f @ lam), ml, mh, mg, mf)
    if prog.F.shape[0]:
        res.floor_margin = float(np.min(prog.floor_values(x) - prog.r))
    return res
