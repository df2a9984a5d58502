"""Online uplink phase: payload queues, EDF scheduling and per-slot pRB/power control.

The server drains the remaining model payload of every selected vehicle
over the upload window. In each slot it

1. schedules at most Z vehicles by earliest deadline (:func:`edf_schedule`),
2. computes the minimum rate each scheduled vehicle needs to finish in time
   (:func:`min_rate_requirement`),
3. allocates pRBs and powers minimizing the drift-plus-penalty utility
   C * beta * sum(P) - sum_v r_v (C + kappa Q_v), where beta is the running
   energy efficiency (bits per joule-second) of the round.

With a single scheduled vehicle the power problem is a water-filling with
a rate floor and a power budget, solved in closed form. With several, the
pRB indicators are relaxed and driven to {0, 1} by a difference-of-convex
penalty theta * sum(I - I^2) whose concave part is linearized at the
previous iterate. For fixed lifted powers P~ = I * P the best relaxed
indicators are known in closed form (each I >= P~ / P_max, leftover share
of a pRB to its smallest penalty coefficient), so every convexified step
reduces to a separable log program in P~ that the interior-point kernel in
:mod:`vefl.convex.logprog` solves exactly.
"""

import logging
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .convex.logprog import LogProgram, _default_start, solve_log_program
from .errors import ExpiredDeadline, InfeasibleRateFloor, InfeasibleSlot
from .radio import RadioConfig

log = logging.getLogger(__name__)

LN2 = np.log(2.0)


# queues and efficiency tracking ----------------------------------------------

@dataclass
class PayloadQueue:
    """Remaining payload Q_v(t) in bits of every selected vehicle."""

    remaining: np.ndarray
    payload_total: float

    @staticmethod
    def full(n, payload_total):
        return PayloadQueue(np.full(n, float(payload_total)), float(payload_total))

    def copy(self):
        return PayloadQueue(self.remaining.copy(), self.payload_total)


def update_queue(q: PayloadQueue, rates, kappa) -> PayloadQueue:
    """Q(t+1) = max(Q(t) - kappa r(t), 0)."""
    r = np.asarray(rates, float)
    if np.any(r < 0):
        raise ValueError("rates must be non-negative")
    return PayloadQueue(np.maximum(q.remaining - kappa * r, 0.0), q.payload_total)


def success_probability(q_final, payload_total):
    """Delivered share of the payload, 1 - Q / S."""
    return 1.0 - np.asarray(q_final, float) / float(payload_total)


@dataclass
class EeTracker:
    """Running energy efficiency of the round: summed rates over summed powers."""

    cum_rate: float = 0.0
    cum_power: float = 0.0

    @property
    def ratio(self):
        return self.cum_rate / self.cum_power if self.cum_power > 0 else 0.0

    def record(self, rates, powers):
        self.cum_rate += float(np.sum(rates))
        self.cum_power += float(np.sum(powers))

    def reset(self):
        self.cum_rate = 0.0
        self.cum_power = 0.0


@dataclass
class LyapunovConfig:
    control: float = 1.0  # C
    penalty_base: float = 10.0  # theta_0, relative to the normalized utility
    max_iters: int = 20  # J
    tol: float = 1e-4  # epsilon^prec on the relaxed indicators
    bound_const: float = 0.0  # last computed drift constant (diagnostic only)

    def __post_init__(self):
        if not self.control >= 0:
            raise ValueError("control parameter C must be non-negative")
        if not self.bound_const >= 0:
            raise ValueError("bound constant must be non-negative")


def auto_control(kappa, payload_total):
    """C = kappa * S: makes C comparable to kappa * Q at the window start,
    so the efficiency and backlog terms of the utility stay within one order
    of magnitude of each other."""
    return float(kappa * payload_total)


@dataclass
class SlotAllocation:
    """Decisions of one slot over the selected vehicles (rows) and pRBs (cols)."""

    scheduled: np.ndarray  # vehicle indices
    prb_assign: np.ndarray  # (n, Z) 0/1
    powers: np.ndarray  # (n, Z) W
    lifted_powers: np.ndarray  # (n, Z) I * P
    relaxed_floors: List[int] = field(default_factory=list)
    shortfall: dict = field(default_factory=dict)
    surrogate_history: List[float] = field(default_factory=list)
    relaxed_assign: Optional[np.ndarray] = None
    iterations: int = 0

    @staticmethod
    def empty(n, Z):
        z = np.zeros((n, Z))
        return SlotAllocation(np.zeros(0, int), z.astype(int), z.copy(), z.copy())

    def check(self, p_max, tol=1e-9):
        """Raise ``AssertionError`` when a structural constraint is violated."""
        A, P, Pt = self.prb_assign, self.powers, self.lifted_powers
        pm = np.broadcast_to(np.asarray(p_max, float), (A.shape[0],))[:, None]
        assert np.all((A == 0) | (A == 1))
        if self.scheduled.size:
            assert np.all(A.sum(axis=0) == 1), "each pRB goes to exactly one vehicle"
            off = np.setdiff1d(np.arange(A.shape[0]), self.scheduled)
            assert np.all(A[off] == 0), "pRBs only to scheduled vehicles"
        assert self.scheduled.size <= A.shape[1]
        assert np.all(P >= -tol) and np.all(P <= pm * (1 + tol) + tol)
        assert np.all(Pt.sum(axis=1) <= pm[:, 0] * (1 + tol) + tol)
        assert np.allclose(Pt, A * P, atol=tol)

    def rates(self, gains, radio: RadioConfig):
        snr = self.lifted_powers * gains / radio.noise_per_prb
        return radio.effective_bandwidth * np.sum(np.log2(1.0 + snr), axis=1)


# scheduling and rate floors --------------------------------------------------

def edf_schedule(candidates, deadlines, Z, backlog=None):
    """Earliest-deadline-first pick of at most Z vehicles.

    Ties go to the larger backlog, then to the lower index. ``deadlines`` and
    ``backlog`` are indexed by vehicle.
    """
    cand = [int(v) for v in candidates]
    if len(cand) <= Z:
        return sorted(cand)
    d = np.asarray(deadlines, float)
    q = np.zeros(d.size) if backlog is None else np.asarray(backlog, float)
    order = sorted(cand, key=lambda v: (d[v], -q[v], v))
    return sorted(order[:Z])


def min_rate_requirement(q_prev, window_end, t, n_selected, Z, kappa):
    """Smallest rate keeping the vehicle on track to empty its queue by ``window_end``.

    With at most Z selected vehicles each one can be served in every
    remaining slot; otherwise EDF guarantees only a Z / n share of them.
    """
    if q_prev <= 0:
        return 0.0
    slots = window_end - t
    # The discount applies to the remaining window, floor((Z/n) (end - t)).
    # Applying it to the window end alone, floor((Z/n) end) - t, is not a
    # slot count: with end = 1000, t = 983 and Z/n = 1/3 the first reading
    # gives floor(17/3) = 5 guaranteed slots, the second 333 - 983 < 0.
    if n_selected > Z:
        slots = int(np.floor(Z / n_selected * slots))
    if slots <= 0:
        raise ExpiredDeadline(f"no slot left before {window_end} at slot {t}")
    return float(q_prev / (kappa * slots))


def time_to_deadline(window_end, t):
    return window_end - t


# utility ---------------------------------------------------------------------

def slot_utility(alloc: SlotAllocation, gains, queues: PayloadQueue, ee: EeTracker,
                 cfg: LyapunovConfig, radio: RadioConfig, kappa=None):
    """C beta sum P~ - omega' sum_v [sum_z log2(1 + P~ g / noise)] (C + kappa Q_v)."""
    kappa = radio.tti if kappa is None else kappa
    return utility_from_powers(alloc.lifted_powers, gains, queues.remaining, ee.ratio, cfg.control,
                               radio, kappa)


def utility_from_powers(P, gains, Q, beta, C, radio: RadioConfig, kappa):
    P = np.asarray(P, float)
    rate = np.sum(np.log2(1.0 + P * gains / radio.noise_per_prb), axis=1)
    weight = C + kappa * np.asarray(Q, float)
    return float(C * beta * P.sum() - radio.effective_bandwidth * rate @ weight)


def utility_gradient(P, gains, Q, beta, C, radio: RadioConfig, kappa):
    """Gradient of :func:`utility_from_powers` with respect to the powers."""
    a = gains / radio.noise_per_prb
    weight = (C + kappa * np.asarray(Q, float))[:, None]
    return C * beta - radio.effective_bandwidth * weight * a / (LN2 * (1.0 + a * P))


# single vehicle: closed-form water-filling -----------------------------------

def _level_for_power(inv_a, budget):
    """Water level L with sum (L - 1/a)^+ = budget."""
    s = np.sort(inv_a)
    csum = np.cumsum(s)
    for k in range(s.size, 0, -1):
        L = (budget + csum[k - 1]) / k
        if L >= s[k - 1]:
            return float(L)
    return float(s[0] + budget)


def _level_for_rate(a, target):
    """Water level L with sum log2(max(a L, 1)) = target (in bits per Hz)."""
    if target <= 0:
        return 0.0
    s = np.sort(a)[::-1]
    lsum = np.cumsum(np.log2(s))
    for k in range(1, s.size + 1):
        L = 2.0 ** ((target - lsum[k - 1]) / k)
        upper = 1.0 / s[k] if k < s.size else np.inf
        if L <= upper * (1 + 1e-15):
            return float(L)
    return float(L)


def _single_power(a, weight, price, p_max, floor_bits):
    """Closed-form optimum of  price sum P - weight sum log2(1 + a P)
    subject to sum P <= p_max and sum log2(1 + a P) >= floor_bits.

    Returns ``(P, feasible)``; when the floor is out of reach the floor is
    dropped and the utility optimum is returned with ``feasible=False``.
    """
    a = np.asarray(a, float)
    P = np.zeros(a.size)
    good = a > 0
    if not good.any():
        return P, floor_bits <= 0
    inv = 1.0 / a[good]
    L_budget = _level_for_power(inv, p_max)
    if weight <= 0:
        L_util = 0.0
    elif price <= 0:
        L_util = np.inf
    else:
        L_util = weight / (LN2 * price)
    L_floor = _level_for_rate(a[good], floor_bits)
    feasible = L_floor <= L_budget * (1 + 1e-12)
    L = min(L_budget, max(L_util, L_floor)) if feasible else min(L_budget, L_util)
    P[good] = np.maximum(L - inv, 0.0)
    tot = P.sum()
    if tot > p_max:
        P *= p_max / tot
    return P, bool(feasible)


def single_cv_program(a, weight, price, p_max, floor_bits):
    """The same problem as a :class:`LogProgram` (natural log form)."""
    Z = a.size
    F = None
    r = None
    if floor_bits > 0:
        F = np.ones((1, Z)) / (LN2 * floor_bits)
        r = np.ones(1)
    return LogProgram(c=np.full(Z, price), w=np.full(Z, weight / LN2), a=a, lo=np.zeros(Z),
                      hi=np.full(Z, p_max), G=np.ones((1, Z)), h=np.array([p_max]), F=F, r=r)


def solve_single_cv_power(v, gains, queues: PayloadQueue, ee: EeTracker, cfg: LyapunovConfig,
                          radio: RadioConfig, p_max, r_min=0.0, kappa=None, prbs=None,
                          method="closed", strict=False):
    """Powers of vehicle ``v`` over ``prbs`` (all pRBs by default).

    ``gains`` is the (n, Z) array of MRC gains ||h||^2 and ``r_min`` the rate
    floor in bit/s. Returns the length-Z power vector. When even full power
    misses the floor the vehicle transmits at the utility optimum; with
    ``strict`` an ``InfeasibleRateFloor`` is raised instead.
    """
    kappa = radio.tti if kappa is None else kappa
    Z = gains.shape[1]
    prbs = np.arange(Z) if prbs is None else np.asarray(prbs, int)
    out = np.zeros(Z)
    if prbs.size == 0:
        if r_min > 0 and strict:
            raise InfeasibleRateFloor(f"vehicle {v} has no pRB but needs {r_min:.4g} bit/s")
        return out
    a = gains[v, prbs] / radio.noise_per_prb
    bw = radio.effective_bandwidth
    weight = bw * (cfg.control + kappa * queues.remaining[v])
    price = cfg.control * ee.ratio
    floor_bits = r_min / bw
    if method == "closed":
        P, ok = _single_power(a, weight, price, p_max, floor_bits)
    else:
        res = solve_log_program(single_cv_program(a, weight, price, p_max, floor_bits))
        ok = res.status == "optimal"
        if not ok:
            res = solve_log_program(single_cv_program(a, weight, price, p_max, 0.0))
        P = np.clip(res.x, 0.0, p_max)
    if not ok:
        short = r_min - bw * float(np.sum(np.log2(1.0 + a * P)))
        if strict:
            raise InfeasibleRateFloor(f"vehicle {v} misses its rate floor by {short:.4g} bit/s")
        log.info("vehicle %d misses its rate floor by %.4g bit/s", v, short)
    out[prbs] = P
    return out


# several vehicles: penalized SCA over the pRB indicators ----------------------

def _reduced_program(a, w, price, pen, p_max, floors, bw):
    """Log program in x = P~ / P_max for fixed penalty coefficients ``pen``.

    a, w, pen: (m, Z). ``floors`` in bit/s per vehicle (0 = none).
    """
    m, Z = a.shape
    n = m * Z
    As = (a * p_max[:, None]).ravel()
    G = np.zeros((Z + m, n))
    for z in range(Z):
        G[z, z::Z] = 1.0
    for i in range(m):
        G[Z + i, i * Z:(i + 1) * Z] = 1.0
    rows = np.flatnonzero(floors > 0)
    F = np.zeros((rows.size, n))
    for k, i in enumerate(rows):
        F[k, i * Z:(i + 1) * Z] = bw / (LN2 * floors[i])
    c = (price * p_max[:, None] + pen).ravel()
    return LogProgram(c=c, w=w.ravel() / LN2, a=As, lo=np.zeros(n), hi=np.ones(n), G=G,
                      h=np.ones(Z + m), F=F if rows.size else None,
                      r=np.ones(rows.size) if rows.size else None)


def _indicators(x, d):
    """Best relaxed indicators for lifted share ``x`` and penalty slopes ``d``."""
    I = x.copy()
    left = np.maximum(1.0 - x.sum(axis=0), 0.0)
    m, Z = x.shape
    for z in range(Z):
        dz = d[:, z]
        best = np.flatnonzero(dz <= dz.min() + 1e-12)
        k = best[np.argmax(x[best, z])]
        I[k, z] += left[z]
    return np.clip(I, 0.0, 1.0)


def solve_prb_power(scheduled, gains, queues: PayloadQueue, ee: EeTracker, cfg: LyapunovConfig,
                    radio: RadioConfig, p_max, r_min=None, deadlines=None, kappa=None,
                    max_iters=None, tol=None, theta0=None, strict=False,
                    local_search=True) -> SlotAllocation:
    """Joint pRB assignment and power control of the scheduled vehicles.

    ``gains`` and the returned arrays cover every selected vehicle (rows);
    only ``scheduled`` rows receive resources. ``r_min`` holds rate floors
    in bit/s and ``deadlines`` the remaining slots, used to pick which
    floors to drop first (latest deadline) when they cannot all be met.
    """
    kappa = radio.tti if kappa is None else kappa
    J = cfg.max_iters if max_iters is None else max_iters
    tol = cfg.tol if tol is None else tol
    theta0 = cfg.penalty_base if theta0 is None else theta0
    n, Z = gains.shape
    sched = np.array(sorted(int(v) for v in scheduled), int)
    if sched.size > Z:
        raise ValueError("more scheduled vehicles than pRBs")
    p_max = np.broadcast_to(np.asarray(p_max, float), (n,)).copy()
    r_min = np.zeros(n) if r_min is None else np.asarray(r_min, float).copy()
    deadlines = np.zeros(n) if deadlines is None else np.asarray(deadlines, float)
    alloc = SlotAllocation.empty(n, Z)
    if sched.size == 0:
        return alloc
    alloc.scheduled = sched
    bw = radio.effective_bandwidth
    if sched.size == 1:
        v = int(sched[0])
        P = solve_single_cv_power(v, gains, queues, ee, cfg, radio, p_max[v], r_min[v], kappa)
        _finish(alloc, v, np.arange(Z), P, r_min, gains, radio)
        return alloc

    m = sched.size
    a = gains[sched] / radio.noise_per_prb
    Q = queues.remaining[sched]
    scale = bw * (cfg.control + kappa * float(Q.max()))
    scale = scale if scale > 0 else 1.0
    w = np.repeat((bw * (cfg.control + kappa * Q) / scale)[:, None], Z, axis=1)
    price = cfg.control * ee.ratio / scale
    floors = r_min[sched].copy()

    # drop floors, latest deadline first, until the relaxation is feasible
    order = sorted(range(m), key=lambda i: (-deadlines[sched[i]], Q[i], -i))
    relaxed = []
    while True:
        prog = _reduced_program(a, w, price, np.zeros((m, Z)), p_max[sched], floors, bw)
        res = solve_log_program(prog)
        if res.status == "optimal":
            break
        nxt = next(i for i in order if floors[i] > 0)
        floors[nxt] = 0.0
        relaxed.append(int(sched[nxt]))

    # binary start: round the relaxation, improve it by pRB moves, and drop
    # the floors no pRB map found here can meet
    I_rel = _indicators(np.clip(res.x.reshape(m, Z), 0.0, 1.0), np.zeros((m, Z)))
    args = (sched, gains, queues, ee, cfg, radio, p_max, kappa)
    owner = _round_assignment(I_rel, Q, floors)
    if local_search:
        owner = _move_search(owner, *args, floors)
    for i in order:
        if floors[i] > 0 and not _meets_floor(owner, i, *args, floors):
            floors[i] = 0.0
            relaxed.append(int(sched[i]))
    if relaxed:
        log.info("rate floors relaxed for vehicles %s", relaxed)
        alloc.relaxed_floors = relaxed
        if strict:
            raise InfeasibleSlot(f"rate floors of {relaxed} cannot be met jointly")

    # normalize so that the steepest marginal utility (zero power, in units
    # of x = P~ / P_max) equals one; theta is measured on that scale
    unit = float(np.max(w * a * p_max[sched][:, None])) / LN2
    if unit > 0:
        w = w / unit
        price = price / unit
    pm = p_max[sched][:, None]
    I = np.zeros((m, Z))
    I[owner, np.arange(Z)] = 1.0
    x = np.zeros((m, Z))
    for i, v in enumerate(sched):
        prbs = np.flatnonzero(owner == i)
        P = solve_single_cv_power(int(v), gains, queues, ee, cfg, radio, p_max[v], floors[i], kappa, prbs)
        x[i] = P / p_max[v]
    history = []
    it = 0
    for j in range(1, J + 1):
        theta = theta0 + j
        d = theta * (1.0 - 2.0 * I)
        # for fixed x the indicators cost sum (d - min_v d) x + const per pRB
        pen = d - d.min(axis=0, keepdims=True)
        prog = _reduced_program(a, w, price, pen, p_max[sched], floors, bw)
        res = solve_log_program(prog, x0=0.9 * x.ravel() + 0.1 * _default_start(prog))
        if res.status != "optimal":
            break
        x = np.clip(res.x.reshape(m, Z), 0.0, 1.0)
        newI = _indicators(x, d)
        # surrogate: utility + theta (sum I - H(I; I_prev)) at the new point
        Pt = x * pm
        sur = (price * float(Pt.sum()) - float(np.sum(w * np.log2(1.0 + a * Pt)))
               + theta * float(np.sum(newI - 2.0 * I * newI + I ** 2)))
        history.append(sur)
        move = float(np.max(np.abs(newI - I)))
        I = newI
        it = j
        binary = np.all(np.minimum(I, 1.0 - I) <= 1e-3)
        if binary and move <= tol:
            break
    alloc.surrogate_history = history
    alloc.relaxed_assign = np.zeros((n, Z))
    alloc.relaxed_assign[sched] = I
    alloc.iterations = it

    final = _round_assignment(I, Q, floors)
    if np.any(final != owner) and (_assignment_value(final, *args, floors)
                                   < _assignment_value(owner, *args, floors)):
        owner = final
    for i, v in enumerate(sched):
        prbs = np.flatnonzero(owner == i)
        P = solve_single_cv_power(int(v), gains, queues, ee, cfg, radio, p_max[v], floors[i], kappa, prbs)
        _finish(alloc, int(v), prbs, P, r_min, gains, radio)
    return alloc


def _cv_value(owner, i, sched, gains, queues, ee, cfg, radio, p_max, kappa, floors):
    """(missed floor, utility) of vehicle ``i`` on its pRBs at optimal power."""
    prbs = np.flatnonzero(owner == i)
    if prbs.size == 0:
        return int(floors[i] > 0), 0.0
    v = sched[i]
    bw = radio.effective_bandwidth
    a = gains[v, prbs] / radio.noise_per_prb
    weight = bw * (cfg.control + kappa * queues.remaining[v])
    price = cfg.control * ee.ratio
    P, ok = _single_power(a, weight, price, p_max[v], floors[i] / bw)
    return int(not ok), price * P.sum() - weight * float(np.sum(np.log2(1.0 + a * P)))


def _assignment_value(owner, *args):
    """Utility of a pRB map with optimal per-vehicle powers; floor misses
    rank first so that maps meeting more floors are preferred."""
    vals = [_cv_value(owner, i, *args) for i in range(args[0].size)]
    return sum(v[0] for v in vals), sum(v[1] for v in vals)


def _move_search(owner, *args, max_passes=4):
    """First-improvement search over moving a single pRB to another vehicle
    and exchanging the owners of two pRBs.

    Exchanges matter when every vehicle must keep its only pRB, where no
    single move is an improvement. Each step changes two vehicles, so
    per-vehicle values are cached.
    """
    m = args[0].size
    Z = owner.size
    vals = [_cv_value(owner, i, *args) for i in range(m)]

    def better(cand, o, i):
        vo, vi = _cv_value(cand, o, *args), _cv_value(cand, i, *args)
        old = (vals[o][0] + vals[i][0], vals[o][1] + vals[i][1])
        new = (vo[0] + vi[0], vo[1] + vi[1])
        tot = abs(sum(v[1] for v in vals))
        ok = new[0] < old[0] or (new[0] == old[0] and new[1] < old[1] - 1e-12 * tot)
        return ok, vo, vi

    for _ in range(max_passes):
        improved = False
        for z in range(Z):
            for i in range(m):
                o = owner[z]
                if i == o:
                    continue
                cand = owner.copy()
                cand[z] = i
                ok, vo, vi = better(cand, o, i)
                if ok:
                    owner, improved = cand, True
                    vals[o], vals[i] = vo, vi
        for z1 in range(Z):
            for z2 in range(z1 + 1, Z):
                o, i = owner[z1], owner[z2]
                if o == i:
                    continue
                cand = owner.copy()
                cand[z1], cand[z2] = i, o
                ok, vo, vi = better(cand, o, i)
                if ok:
                    owner, improved = cand, True
                    vals[o], vals[i] = vo, vi
        if not improved:
            break
    return owner


def _meets_floor(owner, i, *args):
    return _cv_value(owner, i, *args)[0] == 0 and np.any(owner == i)


def _round_assignment(I, Q, floors):
    """pRB z to the vehicle with the largest relaxed indicator, then make sure
    every vehicle with data or a floor holds at least one pRB."""
    m, Z = I.shape
    owner = np.argmax(I, axis=0)
    need = [i for i in range(m) if Q[i] > 0 or floors[i] > 0]
    for i in sorted(need, key=lambda i: -floors[i]):
        if np.any(owner == i):
            continue
        counts = np.bincount(owner, minlength=m)
        donors = [z for z in range(Z) if counts[owner[z]] >= 2]
        if not donors:
            break
        z = max(donors, key=lambda z: (I[i, z], -z))
        owner[z] = i
    return owner


def _finish(alloc, v, prbs, P, r_min, gains, radio):
    alloc.prb_assign[v, prbs] = 1
    alloc.powers[v] = P
    alloc.lifted_powers[v] = alloc.prb_assign[v] * P
    if r_min[v] > 0:
        got = radio.effective_bandwidth * float(np.sum(np.log2(1.0 + alloc.lifted_powers[v] * gains[v] / radio.noise_per_prb)))
        if got < r_min[v] * (1 - 1e-9):
            alloc.shortfall[int(v)] = float(r_min[v] - got)


# drift bound -----------------------------------------------------------------

def drift_constant(gains, p_max, radio: RadioConfig, kappa=None):
    """varpi = kappa^2 omega'^2 / ln(2)^2 * sum_v sum_z P_max g / noise."""
    kappa = radio.tti if kappa is None else kappa
    pm = np.broadcast_to(np.asarray(p_max, float), (gains.shape[0],))[:, None]
    bw = radio.effective_bandwidth
    return float(kappa ** 2 * bw ** 2 / LN2 ** 2 * np.sum(pm * gains / radio.noise_per_prb))


def drift_penalty_bound(alloc: SlotAllocation, gains, queues: PayloadQueue, ee: EeTracker,
                        cfg: LyapunovConfig, radio: RadioConfig, p_max, kappa=None):
    """Realized one-slot drift plus penalty and its upper bound.

    lhs = L(Q(t+1)) - L(Q(t)) + C(-sum r + beta sum P),
    rhs = varpi - kappa sum r Q + C(-sum r + beta sum P).
    """
    kappa = radio.tti if kappa is None else kappa
    r = alloc.rates(gains, radio)
    Q = queues.remaining
    Qn = np.maximum(Q - kappa * r, 0.0)
    pen = cfg.control * (-r.sum() + ee.ratio * alloc.lifted_powers.sum())
    lhs = 0.5 * float(Qn @ Qn - Q @ Q) + pen
    varpi = drift_constant(gains, p_max, radio, kappa)
    cfg.bound_const = varpi
    rhs = varpi - kappa * float(r @ Q) + pen
    return lhs, rhs


# baseline ----------------------------------------------------------------------

def equal_power_allocation(scheduled, n, Z, p_max) -> SlotAllocation:
    """pRBs dealt round-robin to the scheduled vehicles, each spreading its
    full power budget equally over the pRBs it received."""
    alloc = SlotAllocation.empty(n, Z)
    sched = np.array(sorted(int(v) for v in scheduled), int)
    if sched.size == 0:
        return alloc
    if sched.size > Z:
        raise ValueError("more scheduled vehicles than pRBs")
    p_max = np.broadcast_to(np.asarray(p_max, float), (n,))
    alloc.scheduled = sched
    for z in range(Z):
        alloc.prb_assign[sched[z % sched.size], z] = 1
    share = alloc.prb_assign.sum(axis=1)
    for v in sched:
        alloc.powers[v] = alloc.prb_assign[v] * p_max[v] / share[v]
    alloc.lifted_powers = alloc.powers.copy()
    return alloc
