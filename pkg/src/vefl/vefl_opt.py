"""Per-round client selection, local iteration and CPU frequency planning.

Each round the server chooses which vehicles train (partial participation)
or how much every vehicle trains (full participation), how many local
iterations ``l_v`` they run and at what CPU frequency ``eta_v``, so that

* every vehicle finishes computing and uploading before the round deadline
  and before it is expected to leave coverage,
* every vehicle stays within its energy budget,
* the total charge paid to vehicles stays within the round's money budget,

while maximizing the weighted number of local iterations.

The binary selection is relaxed to [0, 1] and pushed back to {0, 1} with a
difference-of-convex penalty  theta * sum(s - s^2), whose concave part is
replaced by its tangent at the previous iterate. Each step solves an LP with
the simplex solver from :mod:`vefl.convex.lp`. The result is rounded,
repaired, and its iteration counts are made integral.

Two constraint models are available:

``"exact"`` (default)
    Energy and charges grow with eta while the objective does not depend on
    it, so the frequency is eliminated at its smallest deadline-meeting
    value. Energy then becomes convex in l, and the time and energy limits
    reduce to a per-vehicle cap l~ <= cap * s. Charges enter through a
    piecewise-linear upper envelope, exact at the breakpoints. Every LP
    iterate is then feasible for the next LP.

``"taylor"``
    Time and energy are linearized around the previous iterate with first
    order Taylor expansions in (l~, eta) and a trust region on eta.
"""

import heapq
from dataclasses import dataclass, field
from itertools import combinations
from math import comb
from typing import List, Optional

import numpy as np

from .convex.lp import LinearProgram, solve_lp
from .cost import SlaTerms
from .errors import Infeasible, NoFeasiblePlan


@dataclass
class RoundBudget:
    money: float  # Xi
    deadline: float  # t_th, s
    desired_iters: int = 1  # l_des
    subset_size: int = 1  # |C|
    iter_bounds: tuple = (1, 20)  # (l_min, l_max)


@dataclass
class CandidatePool:
    """Vectorized per-vehicle inputs for one round."""

    eta_min: np.ndarray
    eta_max: np.ndarray
    p_max: np.ndarray
    energy_budget: np.ndarray
    cd: np.ndarray  # cycles per bit times dataset bits
    zeta_half: np.ndarray
    energy_price: np.ndarray
    fee: np.ndarray
    n_samples: np.ndarray  # dataset size used in the weights
    sojourn: np.ndarray  # lower bound on the time left in coverage, s
    tx_ttis: np.ndarray  # worst-case upload slots
    tti: float
    weights: np.ndarray = None  # aggregation weights p_v (full participation objective)

    @staticmethod
    def from_terms(terms: List[SlaTerms], n_samples, sojourn, tx_ttis, tti, weights=None):
        arr = lambda name: np.array([getattr(t, name) for t in terms], float)
        return CandidatePool(
            eta_min=arr("eta_min"), eta_max=arr("eta_max"), p_max=arr("p_max"),
            energy_budget=arr("energy_budget"),
            cd=arr("cycles_per_bit") * arr("dataset_bits"),
            zeta_half=arr("chip_capacitance"), energy_price=arr("energy_price"),
            fee=arr("participation_fee"), n_samples=np.asarray(n_samples, float),
            sojourn=np.asarray(sojourn, float), tx_ttis=np.asarray(tx_ttis, float), tti=tti,
            weights=None if weights is None else np.asarray(weights, float),
        )

    @property
    def size(self):
        return self.cd.size

    def compute_time(self, budget: RoundBudget):
        """Time left for computing once the worst-case upload is reserved."""
        return np.minimum(budget.deadline, self.sojourn) - self.tti * self.tx_ttis

    def compute_energy_left(self):
        return self.energy_budget - self.tti * self.p_max * self.tx_ttis

    def fixed_charge(self):
        """Fee plus the charge for worst-case upload energy."""
        return self.fee + self.energy_price * self.tti * self.p_max * self.tx_ttis

    def needed_freq(self, l, T):
        """Smallest allowed frequency finishing ``l`` iterations within ``T``."""
        with np.errstate(divide="ignore", invalid="ignore"):
            f = np.where(T > 0, np.asarray(l, float) * self.cd / np.maximum(T, 1e-300), np.inf)
        return np.maximum(self.eta_min, f)

    def energy(self, l, eta):
        return np.asarray(l, float) * self.zeta_half * self.cd * np.asarray(eta, float) ** 2


@dataclass
class SubproblemPoint:
    sel: np.ndarray
    l_tilde: np.ndarray
    l_raw: np.ndarray
    eta: np.ndarray


@dataclass
class RoundPlan:
    selected: np.ndarray  # bool
    iters: np.ndarray  # int, 0 when not training
    freqs: np.ndarray
    charges: np.ndarray  # upper-bound charge per vehicle (0 if not paid)
    objective: float
    theta: np.ndarray  # weights used in the objective
    surrogate_history: list = field(default_factory=list)
    descent_history: list = field(default_factory=list)
    relaxed_sel: np.ndarray = None
    sca_iterations: int = 0
    mode: str = "pdpc"

    @property
    def total_charge(self):
        return float(self.charges.sum())

    def to_record(self):
        return {
            "selected": np.flatnonzero(self.selected).tolist(),
            "iters": self.iters.tolist(),
            "freqs": [float(f) for f in self.freqs],
            "charges": [float(c) for c in self.charges],
            "objective": float(self.objective),
            "surrogate_history": [float(v) for v in self.surrogate_history],
            "sca_iterations": self.sca_iterations,
            "mode": self.mode,
        }


def theta_weights(lam_bar, n_samples, sojourn):
    """Selection weights mixing dataset share and sojourn share."""
    D = np.asarray(n_samples, float)
    T = np.asarray(sojourn, float)
    th = np.zeros(D.size)
    if lam_bar < 1:
        th += (1 - lam_bar) * D / D.sum()
    if lam_bar > 0:
        th += lam_bar * np.maximum(T, 0) / max(np.maximum(T, 0).sum(), 1e-300)
    return th


def iteration_caps(pool: CandidatePool, budget: RoundBudget):
    """Largest real iteration count per vehicle allowed by time and energy.

    Returns ``(cap, eta_at_cap)``. Time allows l <= T eta / cD (increasing
    in eta) and energy l <= E / (zeta/2 cD eta^2) (decreasing), so the best
    frequency is where the two meet, clipped to the allowed range.
    """
    T = pool.compute_time(budget)
    E = pool.compute_energy_left()
    ok = (T > 0) & (E > 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        eta_x = np.cbrt(np.where(ok, E / (pool.zeta_half * np.maximum(T, 1e-300)), 0.0))
    eta = np.clip(eta_x, pool.eta_min, pool.eta_max)
    l_time = np.where(ok, T * eta / pool.cd, 0.0)
    l_energy = np.where(ok, E / (pool.zeta_half * pool.cd * eta ** 2), 0.0)
    cap = np.minimum(np.minimum(l_time, l_energy), budget.iter_bounds[1])
    return np.maximum(cap, 0.0), eta


# first-order models of the time and energy constraints -----------------------

def taylor_time(l, eta, l0, eta0, cd):
    """Tangent of cD * l / eta at (l0, eta0)."""
    return cd * l0 / eta0 + cd / eta0 * (l - l0) - cd * l0 / eta0 ** 2 * (eta - eta0)


def taylor_energy(l, eta, l0, eta0, cd, zeta_half):
    """Tangent of (zeta/2) cD l eta^2 at (l0, eta0)."""
    k = zeta_half * cd
    return k * (l0 * eta0 ** 2 + eta0 ** 2 * (l - l0) + 2.0 * l0 * eta0 * (eta - eta0))


def time_iteration_bound(sel, eta, l0, eta0, T_avail, cd):
    """Iterations allowed by the linearized time constraint (solved for l)."""
    return (sel * T_avail + cd * l0 / eta0 ** 2 * (eta - eta0)) * eta0 / cd


def energy_iteration_bound(sel, eta, l0, eta0, E_avail, cd, zeta_half):
    """Iterations allowed by the linearized energy constraint (solved for l)."""
    k = zeta_half * cd
    return (sel * E_avail - 2.0 * k * l0 * eta0 * (eta - eta0)) / (k * eta0 ** 2)


# LP construction -------------------------------------------------------------

def _charge_envelope(pool, T, cap, v, n_breaks=6):
    """Lines (slope, intercept) of the chord envelope of the energy charge of
    vehicle ``v`` over [0, cap]. The charge is convex in l, so chords lie
    above it and match it at the breakpoints."""
    if cap <= 0:
        return [(0.0, 0.0)]
    ints = np.arange(0, int(np.floor(cap + 1e-9)) + 1, dtype=float)
    if ints[-1] < cap - 1e-9:
        ints = np.append(ints, cap)
    if ints.size > n_breaks:
        pick = np.unique(np.round(np.linspace(0, ints.size - 1, n_breaks)).astype(int))
        ints = ints[pick]
    if ints.size < 2:
        ints = np.array([0.0, cap])
    eta = np.maximum(pool.eta_min[v], ints * pool.cd[v] / max(T, 1e-300))
    money = pool.energy_price[v] * ints * pool.zeta_half[v] * pool.cd[v] * eta ** 2
    lines = []
    for a in range(ints.size - 1):
        dl = ints[a + 1] - ints[a]
        slope = (money[a + 1] - money[a]) / dl
        lines.append((slope, money[a] - slope * ints[a]))
    return lines


@dataclass
class _LPLayout:
    lp: LinearProgram
    V: int
    idx: np.ndarray  # eligible vehicles, in LP column order
    model: str
    money_scale: float

    def unpack(self, x):
        """Full-length (s, l~, w) vectors; ineligible vehicles get zeros."""
        n = self.idx.size
        out = []
        for blk in range(3):
            full = np.zeros(self.V)
            full[self.idx] = x[blk * n:(blk + 1) * n]
            out.append(full)
        return tuple(out)

    def pack(self, s, lt, w):
        return np.concatenate([s[self.idx], lt[self.idx], w[self.idx]])


def linearize_subproblem(point: SubproblemPoint, pool: CandidatePool, budget: RoundBudget,
                         gains, theta, eligible, lower_iters, cap, fixed_sel=None,
                         model="exact", trust=0.25, n_breaks=5):
    """LP data of one penalized step around ``point``.

    Columns are [s, l~, w] over the eligible vehicles, with w the charge
    epigraph ("exact") or the scaled frequency eta / eta_max ("taylor").
    ``gains`` are the objective weights per iteration and ``theta`` the
    penalty weight. ``fixed_sel`` pins every selection to 1 (full
    participation). Raw iterations of unselected vehicles do not enter any
    constraint or the objective, so they are not LP columns; they are set
    to l_min afterwards.
    """
    V = pool.size
    lmin, lmax = budget.iter_bounds
    idx = np.flatnonzero(eligible)
    n = idx.size
    nv = 3 * n
    S, L, W = 0, n, 2 * n
    c = np.zeros(nv)
    c[L:W] = -gains[idx]
    if fixed_sel is None and theta > 0:
        c[S:L] += theta * (1.0 - 2.0 * point.sel[idx])
    lo = np.zeros(nv)
    hi = np.zeros(nv)
    hi[S:L] = 1.0
    if fixed_sel is not None:
        lo[S:L] = 1.0
    ucap = np.minimum(lmax, cap[idx])
    hi[L:W] = ucap
    T = pool.compute_time(budget)[idx]
    E = pool.compute_energy_left()[idx]
    m0 = pool.fixed_charge()[idx]
    money_scale = max(1.0, budget.money)
    rows, rhs = [], []

    def row():
        r = np.zeros(nv)
        rows.append(r)
        return r

    if model == "exact":
        hi[W:] = np.inf
    else:
        em_all = pool.eta_max[idx]
        e0 = point.eta[idx] / em_all
        lo[W:] = np.maximum(pool.eta_min[idx] / em_all, e0 - trust)
        hi[W:] = np.maximum(np.minimum(1.0, e0 + trust), lo[W:])
    budget_row = np.zeros(nv)
    const = 0.0
    for k, v in enumerate(idx):
        s_i, l_i, w_i = S + k, L + k, W + k
        # l~ within [l_lower s, min(l_max, cap) s]
        r = row(); r[l_i] = 1.0; r[s_i] = -ucap[k]; rhs.append(0.0)
        r = row(); r[l_i] = -1.0; r[s_i] = lower_iters[v]; rhs.append(0.0)
        budget_row[s_i] += m0[k] / money_scale
        if model == "exact":
            for slope, icpt in _charge_envelope(pool, T[k], ucap[k], v, n_breaks):
                r = row(); r[l_i] = slope / money_scale; r[s_i] = icpt / money_scale
                r[w_i] = -1.0; rhs.append(0.0)
            budget_row[w_i] += 1.0
        else:
            em = pool.eta_max[v]
            l0, eta0 = point.l_tilde[v], point.eta[v]
            kk = pool.zeta_half[v] * pool.cd[v]
            # cD/eta0 l - cD l0/eta0^2 eta - s T <= -cD l0/eta0
            r = row(); r[l_i] = pool.cd[v] / eta0; r[w_i] = -pool.cd[v] * l0 / eta0 ** 2 * em
            r[s_i] = -T[k]; rhs.append(-pool.cd[v] * l0 / eta0)
            # k (eta0^2 l + 2 l0 eta0 eta) - s E <= 2 k l0 eta0^2
            r = row(); r[l_i] = kk * eta0 ** 2; r[w_i] = 2 * kk * l0 * eta0 * em
            r[s_i] = -E[k]; rhs.append(2 * kk * l0 * eta0 ** 2)
            price = pool.energy_price[v] / money_scale
            budget_row[l_i] += price * kk * eta0 ** 2
            budget_row[w_i] += price * 2 * kk * l0 * eta0 * em
            const += price * 2 * kk * l0 * eta0 ** 2
    rows.append(budget_row); rhs.append(budget.money / money_scale + const)
    if fixed_sel is None:
        r = row(); r[S:L] = 1.0; rhs.append(budget.subset_size)
    A = np.array(rows)
    keep = np.any(A != 0, axis=1)
    lp = LinearProgram(c=c, A_ub=A[keep], b_ub=np.array(rhs)[keep], lo=lo, hi=hi)
    return _LPLayout(lp, V, idx, model, money_scale)


# post-processing -------------------------------------------------------------

class _Evaluator:
    """Exact charges and feasibility of integer plans, tabulated for l = 0..l_max."""

    def __init__(self, pool, budget):
        self.pool, self.budget = pool, budget
        self.T = pool.compute_time(budget)
        self.E = pool.compute_energy_left()
        self.m0 = pool.fixed_charge()
        cap, _ = iteration_caps(pool, budget)
        self.cap_int = np.floor(cap + 1e-9).astype(int)
        lmax = int(budget.iter_bounds[1])
        ls = np.arange(lmax + 1, dtype=float)[None, :]
        with np.errstate(divide="ignore", invalid="ignore"):
            need = ls * pool.cd[:, None] / self.T[:, None]
        need = np.where(self.T[:, None] > 0, need, np.inf)
        eta = np.maximum(pool.eta_min[:, None], need)
        energy = ls * pool.zeta_half[:, None] * pool.cd[:, None] * np.where(np.isfinite(eta), eta, 0.0) ** 2
        self.freq_tab = eta
        self.charge_tab = np.where(ls > 0, self.m0[:, None] + pool.energy_price[:, None] * energy, 0.0)
        ok = ((ls <= self.cap_int[:, None]) & (eta <= pool.eta_max[:, None] * (1 + 1e-12))
              & (energy <= self.E[:, None] * (1 + 1e-12)))
        ok[:, 0] = True
        self.ok_tab = ok
        # largest l such that every l' <= l is feasible
        self.top = np.array([int(np.argmin(np.append(r, False))) - 1 for r in ok])

    def freq(self, v, l):
        return max(self.pool.eta_min[v], l * self.pool.cd[v] / self.T[v])

    def charge(self, v, l):
        return float(self.charge_tab[v, int(l)])

    def feasible_iter(self, v, l):
        if l <= 0:
            return True
        if l >= self.ok_tab.shape[1]:
            return False
        return bool(self.ok_tab[v, int(l)])


def _fill_iterations(ev, members, lower, gains, money_left):
    """Greedy integer increments by gain per extra charge.

    Charges are convex in l (linear below the deadline frequency, cubic
    above), so each vehicle's ratio only falls and a heap keeps the best.
    """
    ct = ev.charge_tab
    l = {v: int(lower[v]) for v in members}
    left = money_left - sum(ct[v, l[v]] for v in members)
    heap = []

    def push(v):
        nl = l[v] + 1
        if nl <= ev.top[v]:
            dc = ct[v, nl] - ct[v, l[v]]
            heapq.heappush(heap, (-gains[v] / max(dc, 1e-300), v, dc))

    for v in members:
        push(v)
    while heap:
        _, v, dc = heapq.heappop(heap)
        if dc > left + 1e-12:
            continue
        l[v] += 1
        left -= dc
        push(v)
    return l, left


def _plan_value(ev, members, lower, gains, money, start=None):
    """Best integer iterations for a fixed member set (greedy), or None."""
    if not members:
        return 0.0, {}
    ct = ev.charge_tab
    need = sum(ct[v, lower[v]] for v in members)
    if need > money + 1e-9:
        return None
    base = lower
    if start is not None:
        base = {v: max(lower[v], min(start.get(v, lower[v]), ev.top[v])) for v in members}
        while sum(ct[v, base[v]] for v in members) > money + 1e-9:
            v = max(members, key=lambda u: base[u] - lower[u])
            if base[v] <= lower[v]:
                break
            base[v] -= 1
    l, _ = _fill_iterations(ev, members, base, gains, money)
    return float(sum(gains[v] * l[v] for v in members)), l


def _exact_fill(ev, members, lower, gains, money, max_front=4096):
    """Optimal integer iterations for a fixed member set.

    Dynamic program over vehicles keeping the Pareto front of (charge,
    value) pairs. The front is thinned to ``max_front`` points by charge if
    it ever grows that large, which keeps every plan feasible but may lose
    optimality. Returns ``(value, {v: l})`` or None.
    """
    if not members:
        return 0.0, {}
    ct = ev.charge_tab
    cost = np.zeros(1)
    val = np.zeros(1)
    stages = []
    for v in members:
        ls = np.arange(int(lower[v]), int(ev.top[v]) + 1)
        if ls.size == 0:
            return None
        C = (cost[:, None] + ct[v, ls][None, :]).ravel()
        W = (val[:, None] + gains[v] * ls[None, :]).ravel()
        keep = np.flatnonzero(C <= money + 1e-9)
        if keep.size == 0:
            return None
        order = keep[np.lexsort((-W[keep], C[keep]))]
        Wo = W[order]
        best = np.maximum.accumulate(Wo)
        front = order[np.concatenate([[True], Wo[1:] > best[:-1]])]
        if front.size > max_front:
            front = front[np.linspace(0, front.size - 1, max_front).astype(int)]
        stages.append((front // ls.size, ls[front % ls.size]))
        cost, val = C[front], W[front]
    k = int(np.argmax(val))
    out = {}
    for v, (parent, lv) in zip(reversed(members), reversed(stages)):
        out[v] = int(lv[k])
        k = int(parent[k])
    return float(val.max()), out


def _order_key(theta, v):
    return (-theta[v], v)


def solve_vefl_round(pool: CandidatePool, budget: RoundBudget, mode="pdpc", lam_bar=0.5,
                     theta0=10.0, max_iters=30, tol=1e-6, model="exact", init="half",
                     local_search=True, seed_point: Optional[SubproblemPoint] = None) -> RoundPlan:
    """Plan one round. ``mode`` is "pdpc" (select a subset) or "fdpc" (all train).

    Raises ``NoFeasiblePlan`` when no vehicle can be paid for or none can
    finish even the minimum number of iterations in time.
    """
    V = pool.size
    lmin, lmax = budget.iter_bounds
    cap, eta_cap = iteration_caps(pool, budget)
    lower = np.minimum(max(budget.desired_iters, lmin), np.floor(cap + 1e-9))
    lower = np.maximum(lower, lmin)
    ev = _Evaluator(pool, budget)
    timely = (pool.compute_time(budget) > 0) & (pool.compute_energy_left() > 0) & (ev.cap_int >= lmin)
    if mode == "fdpc":
        if pool.weights is None:
            raise ValueError("full participation needs aggregation weights")
        theta = pool.weights.copy()
    else:
        theta = theta_weights(lam_bar, pool.n_samples, pool.sojourn)
    affordable = np.array([ev.charge(v, int(lower[v])) <= budget.money + 1e-9 for v in range(V)])
    eligible = timely & affordable
    if not eligible.any():
        binding = "deadline" if not timely.any() else "budget"
        raise NoFeasiblePlan(f"no vehicle can participate ({binding})", binding=binding)
    lower_i = {v: int(lower[v]) for v in range(V)}

    lcap = np.where(eligible, np.minimum(lmax, cap), 0.0)
    scale = max(float(np.max(theta * lcap)), 1e-300)
    gains = theta / scale

    history, descent = [], []
    if mode == "fdpc":
        members = list(np.flatnonzero(eligible))
        point = SubproblemPoint(np.ones(V), lcap.copy(), lcap.copy(), eta_cap.copy())
        lay = linearize_subproblem(point, pool, budget, gains, 0.0, eligible, lower, cap,
                                   fixed_sel=True, model="exact")
        try:
            res = solve_lp(lay.lp)
        except Infeasible:
            raise NoFeasiblePlan("money budget cannot pay every vehicle", binding="budget")
        history.append(res.fun)
        _, lt, _ = lay.unpack(res.x)
        start = {v: int(np.floor(lt[v] + 1e-7)) for v in members}
        val = _plan_value(ev, members, lower_i, gains, budget.money, start)
        if val is None:
            raise NoFeasiblePlan("money budget cannot pay every vehicle", binding="budget")
        obj, l = val
        sel = np.zeros(V, bool)
        sel[members] = True
        relaxed = sel.astype(float)
        n_it = 1
    else:
        if seed_point is None:
            if init == "half":
                s0 = np.where(eligible, 0.5, 0.0)
            else:
                s0 = np.where(eligible, min(1.0, budget.subset_size / max(eligible.sum(), 1)), 0.0)
            point = SubproblemPoint(s0, lcap * s0, lcap * s0 + lmin * (1 - s0),
                                    np.where(eligible, eta_cap, pool.eta_min))
        else:
            point = seed_point
        point.eta = np.clip(point.eta, pool.eta_min, pool.eta_max)
        point.l_tilde = np.maximum(point.l_tilde, 1e-3 * eligible)
        n_it = 0
        for i in range(1, max_iters + 1):
            th = theta0 + i
            lay = linearize_subproblem(point, pool, budget, gains, th, eligible, lower, cap, model=model)
            const = th * float(np.sum(point.sel[eligible] ** 2))
            try:
                res = solve_lp(lay.lp)
            except Infeasible:
                raise NoFeasiblePlan("relaxed round problem is infeasible", binding="budget")
            s, lt, w = lay.unpack(res.x)
            lr = lt + lmin * (1.0 - s)
            # value of the same surrogate at the expansion point
            if model == "exact":
                x_prev = _epigraph_fill(lay, lay.pack(point.sel, point.l_tilde, w))
                if lay.lp.is_feasible(x_prev, tol=1e-7):
                    descent.append((float(lay.lp.c @ x_prev) + const, res.fun + const))
            history.append(res.fun + const)
            eta_new = w * pool.eta_max if model == "taylor" else pool.needed_freq(np.maximum(lt, 1e-9), pool.compute_time(budget))
            new = SubproblemPoint(np.clip(s, 0, 1), lt, lr, np.clip(eta_new, pool.eta_min, pool.eta_max))
            move = float(np.max(np.abs(new.sel - point.sel)))
            point = new
            n_it = i
            binary = np.all(np.minimum(point.sel, 1 - point.sel) <= 1e-3)
            if i >= 2 and move <= tol and binary:
                break
        relaxed = point.sel.copy()
        sel_set = _round_and_repair(relaxed, theta, eligible, budget, ev, lower_i, gains)
        if not sel_set:
            raise NoFeasiblePlan("no subset satisfies the money budget", binding="budget")
        start = {v: int(np.floor(point.l_tilde[v] + 1e-7)) for v in sel_set}
        val = _plan_value(ev, sel_set, lower_i, gains, budget.money, start)
        obj, l = val
        if local_search:
            sel_set, obj, l = _swap_search(sel_set, obj, l, theta, eligible, budget, ev, lower_i, gains)
        sel = np.zeros(V, bool)
        sel[list(sel_set)] = True

    iters = np.zeros(V, int)
    freqs = pool.eta_min.copy()
    charges = np.zeros(V)
    for v, lv in l.items():
        iters[v] = lv
        freqs[v] = ev.freq(v, lv)
        charges[v] = ev.charge(v, lv)
    return RoundPlan(selected=sel, iters=iters, freqs=freqs, charges=charges,
                     objective=float(np.sum(theta * iters)), theta=theta,
                     surrogate_history=history, descent_history=descent,
                     relaxed_sel=relaxed, sca_iterations=n_it, mode=mode)


def _epigraph_fill(lay, x):
    """Raise the charge epigraph variables of ``x`` to their smallest feasible value."""
    x = x.copy()
    n = lay.idx.size
    A, b = lay.lp.A_ub, lay.lp.b_ub
    w_idx = np.arange(2 * n, 3 * n)
    x[w_idx] = 0.0
    for k in range(A.shape[0]):
        wv = np.flatnonzero(A[k, w_idx] < 0)
        if wv.size == 1:
            j = w_idx[wv[0]]
            rest = A[k] @ x - A[k, j] * x[j]
            need = (rest - b[k]) / -A[k, j]
            x[j] = max(x[j], need)
    return x


def _round_and_repair(relaxed, theta, eligible, budget, ev, lower, gains):
    """Threshold at 0.5, then drop or add vehicles until the plan is feasible."""
    order = sorted(np.flatnonzero(eligible), key=lambda v: _order_key(theta, v))
    chosen = [v for v in order if relaxed[v] >= 0.5]
    # too many, or too expensive: drop the weakest
    def cost(vs):
        return sum(ev.charge(v, lower[v]) for v in vs)
    while chosen and (len(chosen) > budget.subset_size or cost(chosen) > budget.money + 1e-9):
        chosen.sort(key=lambda v: _order_key(theta, v))
        chosen.pop()
    # room left: add the strongest that still fit
    for v in order:
        if len(chosen) >= budget.subset_size:
            break
        if v not in chosen and cost(chosen + [v]) <= budget.money + 1e-9:
            chosen.append(v)
    return sorted(chosen)


def _swap_search(members, obj, l, theta, eligible, budget, ev, lower, gains, max_passes=6, n_polish=2,
                 max_pair_moves=500):
    """Best-improvement search over removals, additions and swaps.

    A move takes ``k_out`` members out and ``k_in`` outsiders in. Single
    moves (1, 0), (0, 1) and (1, 1) are always tried; (1, 2) and (2, 1)
    reach sets whose one-move neighbours are all over budget, and are
    tried when they number at most ``max_pair_moves``. Candidates are
    scored with the fast greedy fill; at the end the incumbent and the
    best few sets of the last pass are re-solved with the exact per-set
    program.
    """
    members = sorted(members)
    pool_idx = [v for v in np.flatnonzero(eligible)]
    scored = {}
    for _ in range(max_passes):
        outside = [v for v in pool_idx if v not in members]
        moves = [(1, 0), (0, 1), (1, 1)]
        for kk in ((1, 2), (2, 1)):
            if _n_moves(len(members), len(outside), *kk) <= max_pair_moves:
                moves.append(kk)
        candidates = []
        for k_out, k_in in moves:
            size = len(members) - k_out + k_in
            if not 1 <= size <= budget.subset_size:
                continue
            for drop in combinations(members, k_out):
                keep = [x for x in members if x not in drop]
                for add in combinations(outside, k_in):
                    candidates.append(sorted(keep + list(add)))
        scored = {}
        best = None
        for cand in candidates:
            val = _plan_value(ev, cand, lower, gains, budget.money)
            if val is None:
                continue
            scored[tuple(cand)] = val[0]
            if val[0] > obj * (1 + 1e-9) + 1e-12 and (best is None or val[0] > best[1][0]):
                best = (cand, val)
        if best is None:
            break
        members, (obj, l) = best
    scored.pop(tuple(members), None)
    short = [list(c) for c, _ in sorted(scored.items(), key=lambda kv: -kv[1])[:n_polish]]
    for cand in [members] + short:
        val = _exact_fill(ev, cand, lower, gains, budget.money)
        if val is not None and val[0] > obj * (1 + 1e-12):
            members, (obj, l) = cand, val
    return members, obj, l


def _n_moves(n_in, n_out, k_out, k_in):
    return comb(n_in, k_out) * comb(n_out, k_in)


def exhaustive_round(pool: CandidatePool, budget: RoundBudget, lam_bar=0.5):
    """Reference optimum by enumeration of subsets and integer iterations.

    Only meant for small pools; returns ``(objective, members, iters)`` with
    the objective sum_v Theta_v l_v.
    """
    V = pool.size
    theta = theta_weights(lam_bar, pool.n_samples, pool.sojourn)
    ev = _Evaluator(pool, budget)
    lmin, lmax = budget.iter_bounds
    cap, _ = iteration_caps(pool, budget)
    lower = np.maximum(np.minimum(max(budget.desired_iters, lmin), np.floor(cap + 1e-9)), lmin).astype(int)
    options = {}
    for v in range(V):
        opts = []
        for lv in range(lower[v], min(lmax, ev.cap_int[v]) + 1):
            if ev.feasible_iter(v, lv):
                opts.append((lv, ev.charge(v, lv)))
        options[v] = opts
    best = (0.0, (), {})
    for k in range(1, budget.subset_size + 1):
        for subset in combinations(range(V), k):
            if any(not options[v] for v in subset):
                continue
            best = _enumerate_iters(subset, options, theta, budget.money, best)
    return best


def _enumerate_iters(subset, options, theta, money, best):
    def rec(i, spent, val, chosen):
        nonlocal best
        if i == len(subset):
            if val > best[0] + 1e-12:
                best = (val, tuple(subset), dict(chosen))
            return
        v = subset[i]
        for lv, ch in options[v]:
            if spent + ch > money + 1e-9:
                break
            chosen[v] = lv
            rec(i + 1, spent + ch, val + theta[v] * lv, chosen)
        chosen.pop(v, None)
    rec(0, 0.0, 0.0, {})
    return best
