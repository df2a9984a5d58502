"""Quick self-checks behind ``vefl verify``.

Each check draws its own small random instances and returns
``(name, passed, detail)``. They are reduced versions of the property
tests in the test suite, meant to run in a few seconds on an installed
package.
"""

import itertools

import numpy as np

from .. import rat_opt
from ..convex import LinearProgram, check_gradient, solve_lp
from ..fl import AggregationInputs, aggregate_fdpc, aggregate_pdpc, local_objective
from ..mobility import CoverageGeometry, IdmParams, RoadConfig, generate_trace, sojourn_lower_bound
from ..radio import RadioConfig, sample_channel, channel_gain


def check_sojourn(rng, duration=300.0):
    geom = CoverageGeometry(500.0)
    bad = total = 0
    for u in (11.18, 20.12):
        tr = generate_trace(duration, RoadConfig(arrival_rate=0.5, initial_vehicles=20), IdmParams(u_max=u),
                            geom, rng)
        for k in range(0, len(tr.frames), 50):
            for v, (x, y, _) in tr.frames[k].items():
                if v in tr.exit_times:
                    total += 1
                    bad += sojourn_lower_bound(x, y, u, geom) > tr.exit_times[v] - tr.times[k] + 1e-9
    return "sojourn lower bound", bad == 0, f"{bad} violations in {total} samples"


def check_aggregation(rng, trials=4000, V=5, M=3):
    w = rng.normal(size=M)
    deltas = rng.normal(size=(V, M))
    p = rng.dirichlet(np.ones(V))
    ps = rng.uniform(0.3, 1.0, V)
    target = w + p @ deltas
    full = np.zeros(M)
    part = np.zeros(M)
    q = 0.6
    for _ in range(trials):
        succ = rng.random(V) < ps
        full += aggregate_fdpc(AggregationInputs(w, deltas, p, succ, ps))
        sel = rng.random(V) < q
        part += aggregate_pdpc(AggregationInputs(w, deltas, p, succ, ps, selected=sel, q=q))
    err = max(np.linalg.norm(full / trials - target), np.linalg.norm(part / trials - target))
    err /= np.linalg.norm(p @ deltas)
    return "aggregation unbiasedness", err < 0.1, f"relative error {err:.3g}"


def check_drift_bound(rng, slots=200):
    radio = RadioConfig(tti=5e-3)
    cfg = rat_opt.LyapunovConfig(control=1.0)
    n, Z = 4, radio.prb_count
    S = 33000.0
    q = rat_opt.PayloadQueue.full(n, S)
    ee = rat_opt.EeTracker()
    worst = -np.inf
    for _ in range(slots):
        g = channel_gain(sample_channel(rng.uniform(50, 500, n), radio, rng))
        owner = rng.integers(0, n, Z)
        alloc = rat_opt.SlotAllocation.empty(n, Z)
        alloc.scheduled = np.unique(owner)
        alloc.prb_assign[owner, np.arange(Z)] = 1
        P = rng.dirichlet(np.ones(Z), n) * 0.2 * rng.random((n, 1))
        alloc.powers = P * alloc.prb_assign
        alloc.lifted_powers = alloc.powers.copy()
        lhs, rhs = rat_opt.drift_penalty_bound(alloc, g, q, ee, cfg, radio, 0.2)
        worst = max(worst, lhs - rhs)
        r = alloc.rates(g, radio)
        ee.record(r, alloc.powers)
        q = rat_opt.update_queue(q, r, radio.tti)
        if not q.remaining.any():
            q = rat_opt.PayloadQueue.full(n, S)
    return "drift-plus-penalty bound", worst <= 1e-9, f"max lhs - rhs {worst:.3g}"


def check_gradients(rng):
    X = rng.normal(size=(20, 4))
    y = rng.integers(0, 3, 20)
    anchor = rng.normal(size=15)
    e1 = check_gradient(lambda w: local_objective(w, X, y, anchor, 0.1, 3)[0],
                        lambda w: local_objective(w, X, y, anchor, 0.1, 3)[1], rng.normal(size=15))
    radio = RadioConfig(tti=5e-3)
    g = channel_gain(sample_channel(rng.uniform(50, 500, 3), radio, rng))
    Q = rng.uniform(0, 3e4, 3)
    f = lambda P: rat_opt.utility_from_powers(P.reshape(g.shape), g, Q, 1e5, 10.0, radio, radio.tti)
    df = lambda P: rat_opt.utility_gradient(P.reshape(g.shape), g, Q, 1e5, 10.0, radio, radio.tti).ravel()
    scale = abs(f(np.full(g.size, 0.01)))
    e2 = check_gradient(lambda P: f(P) / scale, lambda P: df(P) / scale, np.full(g.size, 0.01), h=1e-7)
    worst = max(e1, e2)
    return "gradient checks", worst <= 1e-4, f"max relative error {worst:.3g}"


def _enumerate_vertices(A, b):
    n = A.shape[1]
    best = None
    for rows in itertools.combinations(range(A.shape[0]), n):
        M = A[list(rows)]
        if abs(np.linalg.det(M)) < 1e-12:
            continue
        x = np.linalg.solve(M, b[list(rows)])
        if np.all(A @ x <= b + 1e-9):
            yield x
    return best


def check_lp(rng, n_inst=20):
    worst = 0.0
    for _ in range(n_inst):
        n = int(rng.integers(2, 4))
        A = rng.normal(size=(4, n))
        b = rng.uniform(1, 3, 4)
        c = rng.normal(size=n)
        lo, hi = np.zeros(n), np.full(n, 5.0)
        res = solve_lp(LinearProgram(c, A_ub=A, b_ub=b, lo=lo, hi=hi))
        Af = np.vstack([A, np.eye(n), -np.eye(n)])
        bf = np.concatenate([b, hi, -lo])
        best = min(c @ x for x in _enumerate_vertices(Af, bf))
        worst = max(worst, abs(res.fun - best) / max(1.0, abs(best)))
    return "LP vs vertex enumeration", worst <= 1e-8, f"max objective gap {worst:.3g}"


CHECKS = (check_sojourn, check_aggregation, check_drift_bound, check_gradients, check_lp)


def run_checks(seed=0):
    rng = np.random.default_rng(seed)
    return [chk(rng) for chk in CHECKS]
