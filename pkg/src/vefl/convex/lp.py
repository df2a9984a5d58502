"""Dense revised simplex for small linear programs.

Problems are given as

    minimize    c @ x
    subject to  A_ub @ x <= b_ub
                A_eq @ x == b_eq
                lo <= x <= hi        (entries may be infinite)

and converted to standard form (equalities, non-negative variables) before a
two-phase revised simplex is run. The basis inverse is kept explicitly and
updated with a product-form pivot; it is refactored periodically.

Pivoting uses Dantzig pricing while progress is strict and falls back to
Bland's smallest-index rule as soon as a run of degenerate pivots shows up,
which rules out cycling. ``rule="bland"`` forces Bland's rule throughout.
"""

from dataclasses import dataclass, field

import numpy as np

from ..errors import Infeasible, Unbounded

DROP_TOL = 1e-9


@dataclass
class LinearProgram:
    c: np.ndarray
    A_ub: np.ndarray = None
    b_ub: np.ndarray = None
    A_eq: np.ndarray = None
    b_eq: np.ndarray = None
    lo: np.ndarray = None
    hi: np.ndarray = None

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float).ravel()
        n = self.c.size
        self.A_ub = np.zeros((0, n)) if self.A_ub is None else np.atleast_2d(np.asarray(self.A_ub, float))
        self.b_ub = np.zeros(0) if self.b_ub is None else np.asarray(self.b_ub, float).ravel()
        self.A_eq = np.zeros((0, n)) if self.A_eq is None else np.atleast_2d(np.asarray(self.A_eq, float))
        self.b_eq = np.zeros(0) if self.b_eq is None else np.asarray(self.b_eq, float).ravel()
        self.lo = np.zeros(n) if self.lo is None else np.asarray(self.lo, float).ravel().copy()
        self.hi = np.full(n, np.inf) if self.hi is None else np.asarray(self.hi, float).ravel().copy()
        if self.A_ub.shape[0] == 0:
            self.A_ub = self.A_ub.reshape(0, n)
        if self.A_eq.shape[0] == 0:
            self.A_eq = self.A_eq.reshape(0, n)
        if self.A_ub.shape != (self.b_ub.size, n) or self.A_eq.shape != (self.b_eq.size, n):
            raise ValueError("constraint shapes do not match the cost vector")
        if self.lo.size != n or self.hi.size != n:
            raise ValueError("bounds do not match the cost vector")
        if np.any(self.lo > self.hi):
            raise Infeasible("a variable has lower bound above its upper bound")

    @property
    def n(self):
        return self.c.size

    def is_feasible(self, x, tol=1e-7):
        x = np.asarray(x, float)
        ok = np.all(x >= self.lo - tol) and np.all(x <= self.hi + tol)
        if self.A_ub.shape[0]:
            ok = ok and np.all(self.A_ub @ x <= self.b_ub + tol)
        if self.A_eq.shape[0]:
            ok = ok and np.all(np.abs(self.A_eq @ x - self.b_eq) <= tol)
        return bool(ok)


@dataclass
class LPResult:
    x: np.ndarray
    fun: float
    iterations: int
    # marginal prices (non-negative for <= rows) of the original constraints
    duals_ub: np.ndarray = field(default=None)
    duals_eq: np.ndarray = field(default=None)
    # standard-form certificate: primal minus dual objective
    duality_gap: float = 0.0
    max_dual_infeasibility: float = 0.0


def _drop_tiny(A, rel=DROP_TOL):
    """Zero entries below ``rel`` times their row maximum; they carry no
    information at double precision and make bases near-singular."""
    if A.size == 0:
        return A
    big = np.abs(A).max(axis=1, keepdims=True)
    return np.where(np.abs(A) <= rel * big, 0.0, A)


def _row_scale(A):
    big = np.abs(A).max(axis=1) if A.size else np.zeros(A.shape[0])
    return np.where(big > 0, 1.0 / np.where(big > 0, big, 1.0), 1.0)


class _StandardForm:
    """x = offset + T @ y with 0 <= y <= ub, and A y = b, b >= 0.

    Finite upper bounds stay as bounds on y (handled by the bounded-variable
    ratio test) instead of becoming extra rows.
    """

    def __init__(self, lp):
        n = lp.n
        cols = []  # (original index, sign, width)
        offset = np.zeros(n)
        for j in range(n):
            lo, hi = lp.lo[j], lp.hi[j]
            if np.isfinite(lo):
                offset[j] = lo
                cols.append((j, 1.0, hi - lo))
            elif np.isfinite(hi):
                offset[j] = hi
                cols.append((j, -1.0, np.inf))
            else:
                cols.append((j, 1.0, np.inf))
                cols.append((j, -1.0, np.inf))
        ny = len(cols)
        T = np.zeros((n, ny))
        for k, (j, s, _) in enumerate(cols):
            T[j, k] = s
        self.T, self.offset = T, offset

        # equilibrate rows so pivot magnitudes are comparable across rows
        Aub, Aeq = _drop_tiny(lp.A_ub), _drop_tiny(lp.A_eq)
        rs = np.concatenate([_row_scale(Aub), _row_scale(Aeq)])
        m0 = Aub.shape[0]
        A_ub = (Aub @ T) * rs[:m0, None]
        b_ub = (lp.b_ub - lp.A_ub @ offset) * rs[:m0]
        A_eq = (Aeq @ T) * rs[m0:, None]
        b_eq = (lp.b_eq - lp.A_eq @ offset) * rs[m0:]
        self.row_scale = rs

        m_ub, m_eq = A_ub.shape[0], A_eq.shape[0]
        self.m_ub_orig = m_ub
        m = m_ub + m_eq
        A = np.zeros((m, ny + m_ub))
        A[:m_ub, :ny] = A_ub
        A[:m_ub, ny:] = np.eye(m_ub)
        A[m_ub:, :ny] = A_eq
        b = np.concatenate([b_ub, b_eq])
        sign = np.where(b < 0, -1.0, 1.0)
        A *= sign[:, None]
        b *= sign
        self.A, self.b, self.sign = A, b, sign
        self.c = np.concatenate([T.T @ lp.c, np.zeros(m_ub)])
        self.ub = np.concatenate([[w for _, _, w in cols], np.full(m_ub, np.inf)])
        self.ny, self.m_ub, self.m_eq = ny, m_ub, m_eq
        # rows whose slack has coefficient +1 can start with the slack basic
        self.slack_basic = [ny + i if sign[i] > 0 else -1 for i in range(m_ub)] + [-1] * m_eq

    def recover(self, y):
        return self.offset + self.T @ y[: self.ny]


# relative pivot tolerances, tried in order when a basis turns out singular
PIVOT_TOLS = (1e-7, 1e-5, 1e-3)


def _refactor(A, basis):
    return np.linalg.inv(A[:, basis])


def _pick_row(near, g, basis, use_bland):
    """Leaving row among ratio-test ties: smallest basic index under Bland's
    rule, otherwise the largest pivot magnitude."""
    if use_bland:
        return int(near[np.argmin(np.asarray(basis)[near])])
    return int(near[np.argmax(np.abs(g[near]))])


def _simplex(A, b, c, ub, basis, at_upper, rule, tol, max_iter, it0=0, pivot_tol=PIVOT_TOLS[0]):
    """Bounded-variable revised simplex from a primal feasible basis.

    Nonbasic variables sit at 0 or, when ``at_upper`` is set, at ``ub``.
    """
    m, nv = A.shape
    basis = list(basis)
    is_basic = np.zeros(nv, bool)
    is_basic[basis] = True
    B_inv = _refactor(A, basis)

    def basic_values():
        rhs = b - A[:, at_upper] @ ub[at_upper] if at_upper.any() else b
        return B_inv @ rhs

    x_B = basic_values()
    it = it0
    degenerate_run = 0
    since_refactor = 0
    use_bland = rule == "bland"
    ub_B = ub[basis]
    while True:
        if it - it0 >= max_iter:
            raise RuntimeError("simplex iteration limit reached")
        y = c[basis] @ B_inv
        d = c - y @ A
        # improving directions: increase from 0 (d < 0) or decrease from ub (d > 0)
        score = np.where(at_upper, d, -d)
        score[is_basic] = -np.inf
        cand = np.flatnonzero(score > tol)
        if cand.size == 0:
            return basis, B_inv, x_B, at_upper, it
        j = int(cand[0]) if use_bland else int(cand[np.argmax(score[cand])])
        sigma = -1.0 if at_upper[j] else 1.0
        u = B_inv @ A[:, j]
        g = sigma * u  # x_B moves by -t * g
        t_best = ub[j]  # bound flip of the entering variable
        r = -1
        to_upper = False
        # tiny pivots make the basis numerically singular
        ptol = max(tol, pivot_tol * float(np.abs(g).max(initial=0.0)))
        dec = g > ptol
        if np.any(dec):
            idx = np.flatnonzero(dec)
            ratios = x_B[idx] / g[idx]
            k = np.argmin(ratios)
            if ratios[k] < t_best - tol * max(1.0, abs(t_best) if np.isfinite(t_best) else 1.0):
                t_best = ratios[k]
                near = idx[ratios <= ratios[k] + tol * max(1.0, abs(ratios[k]))]
                r = _pick_row(near, g, basis, use_bland)
                to_upper = False
        inc = (g < -ptol) & np.isfinite(ub_B)
        if np.any(inc):
            idx = np.flatnonzero(inc)
            ratios = (ub_B[idx] - x_B[idx]) / -g[idx]
            k = np.argmin(ratios)
            if ratios[k] < t_best - tol * max(1.0, abs(ratios[k])):
                t_best = ratios[k]
                near = idx[ratios <= ratios[k] + tol * max(1.0, abs(ratios[k]))]
                r = _pick_row(near, g, basis, use_bland)
                to_upper = True
        if not np.isfinite(t_best):
            raise Unbounded("objective is unbounded below")
        t_best = max(t_best, 0.0)
        if t_best <= tol:
            degenerate_run += 1
            if degenerate_run > 5:
                use_bland = True
        else:
            degenerate_run = 0
            use_bland = rule == "bland"
        x_B = x_B - t_best * g
        if r < 0:
            # entering variable jumps to its other bound, basis unchanged
            at_upper[j] = not at_upper[j]
            it += 1
            continue
        leaving = basis[r]
        piv = B_inv[r] / u[r]
        B_inv -= np.outer(u, piv)
        B_inv[r] = piv
        x_B[r] = (ub[j] - t_best) if at_upper[j] else t_best
        at_upper[j] = False
        at_upper[leaving] = to_upper
        is_basic[leaving] = False
        is_basic[j] = True
        basis[r] = j
        ub_B = ub[basis]
        it += 1
        since_refactor += 1
        if since_refactor >= 50:
            B_inv = _refactor(A, basis)
            x_B = basic_values()
            since_refactor = 0
        np.clip(x_B, 0.0, ub_B, out=x_B)


def solve_lp(lp: LinearProgram, rule="auto", tol=1e-10, max_iter=50000) -> LPResult:
    """Solve ``lp`` with a two-phase bounded-variable revised simplex.

    Raises ``Infeasible`` or ``Unbounded``. If rounding leaves a singular
    basis the solve is repeated with a stricter pivot tolerance.
    """
    if rule not in ("auto", "bland"):
        raise ValueError(f"unknown pivot rule {rule!r}")
    for k, ptol in enumerate(PIVOT_TOLS):
        try:
            return _solve_once(lp, rule, tol, max_iter, ptol)
        except np.linalg.LinAlgError:
            if k == len(PIVOT_TOLS) - 1:
                raise


def _solve_once(lp, rule, tol, max_iter, pivot_tol):
    sf = _StandardForm(lp)
    A, b, c, ub = sf.A, sf.b, sf.c, sf.ub
    m, nv = A.shape
    if m == 0:
        y = np.where(c < 0, ub, 0.0)
        if np.any(~np.isfinite(y)):
            raise Unbounded("objective is unbounded below")
        x = sf.recover(y)
        return LPResult(x, float(lp.c @ x), 0, np.zeros(0), np.zeros(0))

    scale = max(1.0, np.abs(A).max(), np.abs(b).max())
    ftol = tol * scale

    art_rows = [i for i in range(m) if sf.slack_basic[i] < 0]
    n_art = len(art_rows)
    basis = []
    k = 0
    A1 = np.hstack([A, np.zeros((m, n_art))])
    for i in range(m):
        if sf.slack_basic[i] >= 0:
            basis.append(sf.slack_basic[i])
        else:
            A1[i, nv + k] = 1.0
            basis.append(nv + k)
            k += 1
    at_upper = np.zeros(nv + n_art, bool)
    it = 0
    keep_rows = np.ones(m, bool)
    if n_art:
        c1 = np.concatenate([np.zeros(nv), np.ones(n_art)])
        ub1 = np.concatenate([ub, np.full(n_art, np.inf)])
        basis, B_inv, x_B, at_upper, it = _simplex(A1, b, c1, ub1, basis, at_upper, rule, tol, max_iter,
                                                     pivot_tol=pivot_tol)
        infeas = float(c1[basis] @ x_B)
        if infeas > 1e3 * ftol:
            raise Infeasible(f"no feasible point (phase-one residual {infeas:.3g})")
        for r in range(m):
            if basis[r] >= nv:
                row = B_inv[r] @ A
                cand = [j for j in np.flatnonzero(np.abs(row) > 1e-7) if j not in basis]
                if cand:
                    j = int(cand[int(np.argmax(np.abs(row[cand])))])
                    u = B_inv @ A1[:, j]
                    piv = B_inv[r] / u[r]
                    B_inv -= np.outer(u, piv)
                    B_inv[r] = piv
                    basis[r] = j
                else:
                    keep_rows[r] = False  # redundant equality
        at_upper = at_upper[:nv].copy()
        if not keep_rows.all():
            A = A[keep_rows]
            b = b[keep_rows]
            basis = [bj for bj, kr in zip(basis, keep_rows) if kr]
    else:
        at_upper = at_upper[:nv].copy()
    for j in basis:
        at_upper[j] = False
    basis, B_inv, x_B, at_upper, it = _simplex(A, b, c, ub, basis, at_upper, rule, tol, max_iter, it,
                                                 pivot_tol=pivot_tol)

    # polish the vertex with a fresh factorization
    B = A[:, basis]
    rhs = b - A[:, at_upper] @ ub[at_upper] if at_upper.any() else b
    x_B = np.linalg.solve(B, rhs)
    y_std = np.where(at_upper, ub, 0.0)
    y_std[basis] = np.clip(x_B, 0.0, ub[basis])
    x = sf.recover(y_std)

    duals = np.linalg.solve(B.T, c[basis])
    red = c - A.T @ duals
    # nonbasic at upper must have red <= 0, at lower red >= 0
    dual_inf = np.where(at_upper, np.maximum(red, 0.0), np.maximum(-red, 0.0))
    dual_inf[basis] = 0.0
    full = np.zeros(m)
    full[keep_rows] = duals
    full *= sf.sign * sf.row_scale
    duals_ub = -full[: sf.m_ub_orig]
    duals_eq = -full[sf.m_ub:]
    primal = float(c @ y_std)
    # dual objective including the bound multipliers of variables at upper
    dual = float(b @ duals) + float(np.sum(np.minimum(red[at_upper], 0.0) * ub[at_upper]))
    return LPResult(
        x=x,
        fun=float(lp.c @ x),
        iterations=it,
        duals_ub=duals_ub,
        duals_eq=duals_eq,
        duality_gap=primal - dual,
        max_dual_infeasibility=float(dual_inf.max(initial=0.0)),
    )
