"""Projected-gradient solver for smooth convex programs over simple sets."""

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from ..errors import IterationLimit


def project_box(y, lo, hi):
    return np.clip(y, lo, hi)


def project_box_budget(y, lo, hi, budget, weights=None):
    """Euclidean projection onto {lo <= x <= hi, sum(x) <= budget}.

    Uses the sorted-breakpoint search for the budget multiplier, so the
    result is exact up to floating point. ``weights`` must be None (plain
    sum) in this implementation; weighted budgets go through Dykstra.
    """
    if weights is not None:
        raise NotImplementedError("weighted budgets: use project_dykstra")
    y = np.asarray(y, float)
    lo = np.broadcast_to(np.asarray(lo, float), y.shape)
    hi = np.broadcast_to(np.asarray(hi, float), y.shape)
    x = np.clip(y, lo, hi)
    if x.sum() <= budget:
        return x
    if lo.sum() > budget + 1e-12:
        raise ValueError("budget below the sum of lower bounds")
    # s(theta) = sum clip(y - theta, lo, hi) is non-increasing piecewise
    # linear with s(0) > budget >= s(max(y - lo)); the multiplier lies
    # between two consecutive breakpoints >= 0
    bps = np.concatenate([[0.0], y - lo, y - hi])
    bps = np.unique(bps[np.isfinite(bps) & (bps >= 0)])
    vals = np.array([np.clip(y - t, lo, hi).sum() for t in bps])
    k = int(np.searchsorted(-vals, -budget, side="left"))
    if k >= bps.size:
        theta = bps[-1]
    elif k == 0 or vals[k] == budget:
        theta = bps[k]
    else:
        t0, t1 = bps[k - 1], bps[k]
        v0, v1 = vals[k - 1], vals[k]
        theta = t0 + (v0 - budget) * (t1 - t0) / (v0 - v1)
    return np.clip(y - theta, lo, hi)


def project_halfspace(y, a, b):
    viol = a @ y - b
    if viol <= 0:
        return y
    return y - viol / (a @ a) * a


def project_dykstra(y, projections: Sequence[Callable], tol=1e-9, max_iter=10000):
    """Dykstra's alternating projections onto an intersection of convex sets."""
    x = np.asarray(y, float).copy()
    incs = [np.zeros_like(x) for _ in projections]
    for _ in range(max_iter):
        x_prev = x.copy()
        for i, proj in enumerate(projections):
            z = x + incs[i]
            x_new = proj(z)
            incs[i] = z - x_new
            x = x_new
        if np.linalg.norm(x - x_prev) <= tol:
            break
    return x


@dataclass
class SmoothConvexProgram:
    """minimize f(x) over a convex set given through its projection.

    ``fun`` returns ``(value, gradient)``.
    """

    fun: Callable
    project: Callable
    n: int


@dataclass
class SmoothResult:
    x: np.ndarray
    fun: float
    iterations: int
    converged: bool
    pg_norm: float
    history: list = field(default_factory=list)


def solve_smooth(prog: SmoothConvexProgram, x0, tol=1e-8, max_iter=5000,
                 armijo=1e-4, strict=False) -> SmoothResult:
    """Projected gradient with Barzilai-Borwein steps and monotone backtracking.

    Stops once the projected-gradient norm ``||x - P(x - grad)||`` drops
    below ``tol``. The objective history is non-increasing by construction.
    On exhausting ``max_iter`` the best iterate is returned with
    ``converged=False``; with ``strict=True`` an ``IterationLimit`` carrying
    that result is raised instead.
    """
    x = prog.project(np.asarray(x0, float))
    f, g = prog.fun(x)
    history = [f]
    step = 1.0
    x_old = g_old = None
    pg = np.linalg.norm(x - prog.project(x - g))
    it = 0
    while pg > tol and it < max_iter:
        if x_old is not None:
            s, yv = x - x_old, g - g_old
            sy = s @ yv
            step = (s @ s) / sy if sy > 1e-300 else step * 2.0
            step = float(np.clip(step, 1e-12, 1e12))
        while True:
            x_new = prog.project(x - step * g)
            f_new, g_new = prog.fun(x_new)
            if f_new <= f + armijo * (g @ (x_new - x)) or step < 1e-16:
                break
            step *= 0.5
        if f_new > f:  # numerical floor reached
            break
        x_old, g_old = x, g
        x, f, g = x_new, f_new, g_new
        history.append(f)
        pg = np.linalg.norm(x - prog.project(x - g))
        it += 1
    res = SmoothResult(x, float(f), it, bool(pg <= tol), float(pg), history)
    if strict and not res.converged:
        raise IterationLimit("projected gradient did not reach tolerance", res)
    return res
