"""Acceptance suite: one PASS/FAIL line per criterion.

Run with ``pytest tests/test_acceptance.py -v`` (the lines are printed even
when output is captured) or ``python3 tests/test_acceptance.py``. Criteria
6 to 8 share one multi-seed simulation sweep, built once per module.
"""

import sys
import time

import numpy as np
import pytest

from oracles import (brute_force_2x2, check_plan, grid_round_oracle, pool_of, random_instance, vertex_optimum,
                     water_filling)
from vefl.convex import (LinearProgram, LogProgram, SmoothConvexProgram, check_gradient, project_box_budget,
                         solve_log_program, solve_lp, solve_smooth)
from vefl.errors import NoFeasiblePlan
from vefl.fl import AggregationInputs, aggregate_fdpc, aggregate_pdpc, local_objective
from vefl.mobility import CoverageGeometry, IdmParams, RoadConfig, generate_trace, sojourn_lower_bound
from vefl.radio import RadioConfig, channel_gain, sample_channel
from vefl.rat_opt import (EeTracker, LyapunovConfig, PayloadQueue, SlotAllocation, auto_control,
                          drift_penalty_bound, min_rate_requirement, slot_utility, solve_prb_power,
                          update_queue, utility_from_powers, utility_gradient)
from vefl.sim import build_scenario, load_config
from vefl.sim.export import export_metrics
from vefl.sim.harness import Simulation
from vefl.vefl_opt import RoundBudget, solve_vefl_round

RADIO = RadioConfig(tti=5e-3)
KAPPA = RADIO.tti
S = 32_000.0
SEEDS = (0, 1, 2, 3, 4)
# reduced slot count: 5 ms slots, 1000 per round
SWEEP = {"radio.tti": 5e-3, "rounds": 100, "fleet.target_size": 30, "fleet.u_max": 20.12, "data.alpha": 0.1}


def report(capsys, n, ok, detail, elapsed, limit):
    fast = elapsed <= limit
    with capsys.disabled():
        print(f"\n{'PASS' if ok and fast else 'FAIL'} criterion {n}: {detail} [{elapsed:.1f} s, limit {limit} s]")
    assert ok, detail
    assert fast, f"took {elapsed:.1f} s"


def slot_instance(rng, m, Z=10):
    g = channel_gain(sample_channel(rng.uniform(50, 500, m), RADIO, rng, n_prb=Z))
    q = PayloadQueue(rng.uniform(0, S, m), S)
    ee = EeTracker(float(rng.uniform(0, 1e8)), 1.0)
    return g, q, ee, LyapunovConfig(control=auto_control(KAPPA, S))


def test_c01_sojourn_soundness(capsys):
    t0 = time.time()
    rng = np.random.default_rng(101)
    geom = CoverageGeometry(500.0)
    # per speed: (horizon s, mobility step s, initial vehicles, arrivals per s)
    setups = {0.45: (1500.0, 1.0, 150, 0.1), 11.18: (300.0, 0.1, 60, 0.5), 20.12: (200.0, 0.1, 60, 0.8)}
    need = 334
    n_traj = checks = bad = 0
    for u, (dur, dt, n0, rate) in setups.items():
        got = 0
        while got < need:
            tr = generate_trace(dur, RoadConfig(arrival_rate=rate, initial_vehicles=n0, dt=dt),
                                IdmParams(u_max=u), geom, rng)
            seen = set()
            for k, frame in enumerate(tr.frames):
                for v, (x, y, _) in frame.items():
                    if v not in tr.exit_times:
                        continue
                    # every trajectory from its first snapshot, then every 10th
                    if v in seen and k % 10:
                        continue
                    seen.add(v)
                    checks += 1
                    bad += sojourn_lower_bound(x, y, u, geom) > tr.exit_times[v] - tr.times[k] + 1e-9
            got += len(seen)
        n_traj += got
    elapsed = time.time() - t0
    report(capsys, 1, bad == 0 and n_traj >= 1000,
           f"{bad} violations over {n_traj} trajectories ({checks} time points)", elapsed, 30)


def test_c02_aggregation_unbiased(capsys):
    t0 = time.time()
    rng = np.random.default_rng(102)
    V, M, trials, q = 10, 20, 10_000, 0.5
    w = rng.normal(size=M)
    deltas = rng.normal(1.0, 0.5, size=(V, M))
    p = rng.dirichlet(np.ones(V))
    ps = rng.uniform(0.5, 1.0, V)
    target = p @ deltas
    full = np.zeros(M)
    part = np.zeros(M)
    for _ in range(trials):
        succ = rng.random(V) < ps
        full += aggregate_fdpc(AggregationInputs(w, deltas, p, succ, ps)) - w
        sel = rng.random(V) < q
        part += aggregate_pdpc(AggregationInputs(w, deltas, p, succ, ps, selected=sel, q=q)) - w
    ef = np.linalg.norm(full / trials - target) / np.linalg.norm(target)
    ep = np.linalg.norm(part / trials - target) / np.linalg.norm(target)
    report(capsys, 2, ef <= 0.02 and ep <= 0.02,
           f"relative L2 error full {ef:.4f}, partial {ep:.4f} over {trials} trials", time.time() - t0, 60)


def test_c03_drift_bound(capsys):
    t0 = time.time()
    rng = np.random.default_rng(103)
    n, Z, p_max = 4, RADIO.prb_count, 0.2
    cfg = LyapunovConfig(control=auto_control(KAPPA, S))
    q = PayloadQueue.full(n, S)
    ee = EeTracker()
    worst = -np.inf
    for _ in range(1000):
        g = channel_gain(sample_channel(rng.uniform(50, 500, n), RADIO, rng))
        owner = rng.integers(0, n, Z)
        alloc = SlotAllocation.empty(n, Z)
        alloc.scheduled = np.unique(owner)
        alloc.prb_assign[owner, np.arange(Z)] = 1
        # random split of a random share of each vehicle's power budget
        P = rng.dirichlet(np.ones(Z), n) * p_max * rng.random((n, 1))
        alloc.powers = P * alloc.prb_assign
        alloc.lifted_powers = alloc.powers.copy()
        alloc.check(p_max)
        lhs, rhs = drift_penalty_bound(alloc, g, q, ee, cfg, RADIO, p_max)
        worst = max(worst, lhs - rhs)
        r = alloc.rates(g, RADIO)
        ee.record(r, alloc.powers)
        q = update_queue(q, r, KAPPA)
        if not q.remaining.any():
            q = PayloadQueue.full(n, S)
    report(capsys, 3, worst <= 1e-9, f"max drift minus bound {worst:.3g} over 1000 slots", time.time() - t0, 60)


def test_c04_sca_monotone_and_binary(capsys):
    t0 = time.time()
    rng = np.random.default_rng(104)
    worst_up, worst_frac, n2 = 0.0, 0.0, 0
    while n2 < 50:
        V = int(rng.integers(3, 16))
        terms, n, soj, tx, tti = random_instance(rng, V)
        money = float(rng.uniform(25, 40) * max(1, V // 3))
        try:
            plan = solve_vefl_round(pool_of(terms, n, soj, tx, tti),
                                    RoundBudget(money=money, deadline=5.0, subset_size=max(1, V // 3)))
        except NoFeasiblePlan:
            continue
        n2 += 1
        h = np.array(plan.surrogate_history)
        worst_up = max(worst_up, float(np.max(np.diff(h) / np.maximum(1.0, np.abs(h[:-1])), initial=0.0)))
        worst_frac = max(worst_frac, float(np.max(np.minimum(plan.relaxed_sel, 1 - plan.relaxed_sel))))
    for _ in range(50):
        m = int(rng.integers(2, 11))
        g, q, ee, cfg = slot_instance(rng, m)
        r_min = np.array([min_rate_requirement(q.remaining[i], 20, 0, m, 10, KAPPA) for i in range(m)])
        alloc = solve_prb_power(range(m), g, q, ee, cfg, RADIO, 0.2, r_min * rng.uniform(0, 1.5),
                                deadlines=rng.integers(1, 20, m))
        h = np.array(alloc.surrogate_history)
        worst_up = max(worst_up, float(np.max(np.diff(h) / np.maximum(1.0, np.abs(h[:-1])), initial=0.0)))
        I = alloc.relaxed_assign[alloc.scheduled]
        worst_frac = max(worst_frac, float(np.max(np.minimum(I, 1 - I))))
    report(capsys, 4, worst_up <= 1e-6 and worst_frac <= 1e-3,
           f"largest relative surrogate increase {worst_up:.2g}, largest distance to binary {worst_frac:.2g} "
           f"(50 round plans, 50 slot allocations)", time.time() - t0, 300)


def test_c05_tiny_instance_optimality(capsys):
    t0 = time.time()
    rng = np.random.default_rng(105)
    same, worst, n_inst = 0, 0.0, 0
    while n_inst < 50:
        terms, n, soj, tx, tti = random_instance(rng, 4)
        money = float(rng.uniform(25, 60))
        ref = grid_round_oracle(terms, n, soj, tx, tti, money, 5.0, 2)
        if ref[0] == 0.0:
            continue
        n_inst += 1
        plan = solve_vefl_round(pool_of(terms, n, soj, tx, tti), RoundBudget(money=money, deadline=5.0, subset_size=2))
        check_plan(plan, terms, soj, tx, tti, money, 5.0, 2)
        same += set(np.flatnonzero(plan.selected)) == set(ref[1])
        worst = max(worst, (ref[0] - plan.objective) / ref[0])
    worst_slot = 0.0
    for _ in range(10):
        g, q, ee, cfg = slot_instance(rng, 2, Z=2)
        alloc = solve_prb_power([0, 1], g, q, ee, cfg, RADIO, 0.2)
        u = slot_utility(alloc, g, q, ee, cfg, RADIO)
        best = brute_force_2x2(g, q, ee, cfg, RADIO, KAPPA)
        worst_slot = max(worst_slot, (u - best) / abs(best))
    ok = same >= 45 and worst <= 0.02 and worst_slot <= 0.02
    report(capsys, 5, ok, f"subset match {same}/50, worst objective gap {worst:.2%}, "
                          f"worst 2x2 slot gap {worst_slot:.2%}", time.time() - t0, 600)


@pytest.fixture(scope="module")
def sweep():
    """final accuracy, records and wall time per (variant, seed)."""
    variants = {"FDPC0": ("FDPC", {"fl.lambda": 0.0}), "FDPC1": ("FDPC", {"fl.lambda": 1.0}),
                "PDPC": ("PDPC", {}), "FedProx": ("FedProxBaseline", {})}
    out = {}
    for seed in SEEDS:
        base = load_config(overrides={**SWEEP, "seed": seed}, env={})
        sc = build_scenario(base)
        for name, (mode, extra) in variants.items():
            t = time.time()
            recs = Simulation(base.replace(mode=mode, **extra), sc).run()
            out[name, seed] = (recs, time.time() - t)
    return out


def test_c06_pdpc_delivery(capsys, sweep):
    runs = [sweep["PDPC", s] for s in SEEDS[:3]]
    rounds = [r for recs, _ in runs for r in recs if r.status == "ok"]
    skipped = sum(r.status != "ok" for recs, _ in runs for r in recs)
    frac = np.mean([r.all_delivered for r in rounds]) if rounds else 0.0
    elapsed = sum(t for _, t in runs)
    report(capsys, 6, frac >= 0.99 and len(rounds) > 0,
           f"p_suc = 1 for every selected vehicle in {frac:.2%} of {len(rounds)} rounds "
           f"({skipped} rounds without a feasible plan)", elapsed, 600)


def test_c07_trends(capsys, sweep):
    final = {name: np.array([sweep[name, s][0][-1].accuracy for s in SEEDS])
             for name in ("FDPC0", "FDPC1", "PDPC", "FedProx")}
    m = {k: float(v.mean()) for k, v in final.items()}
    sd = float(final["FDPC1"].std(ddof=1))
    lam_ok = m["FDPC1"] >= m["FDPC0"]
    band_ok = abs(m["PDPC"] - m["FDPC1"]) <= 2 * sd
    base_ok = m["FedProx"] <= m["FDPC1"]
    elapsed = sum(t for _, t in sweep.values())
    report(capsys, 7, lam_ok and band_ok and base_ok,
           f"FDPC lambda=1 {m['FDPC1']:.4f} vs lambda=0 {m['FDPC0']:.4f}; PDPC {m['PDPC']:.4f} in "
           f"[{m['FDPC1'] - 2 * sd:.4f}, {m['FDPC1'] + 2 * sd:.4f}]; FedProx {m['FedProx']:.4f}", elapsed, 1200)


def _cdf_dominates(cheap, dear):
    """F_cheap(x) >= F_dear(x) at every x."""
    cheap, dear = np.sort(cheap), np.sort(dear)
    xs = np.union1d(cheap, dear)
    Fc = np.searchsorted(cheap, xs, side="right") / cheap.size
    Fd = np.searchsorted(dear, xs, side="right") / dear.size
    return bool(np.all(Fc >= Fd))


def test_c08_cost_ordering(capsys, sweep):
    t0 = time.time()
    costs = {name: np.array([r.total_cost for s in SEEDS for r in sweep[name, s][0] if r.status == "ok"])
             for name in ("PDPC", "FDPC1")}
    over = 0
    n_rounds = 0
    for name in ("FDPC0", "FDPC1", "PDPC"):
        for s in SEEDS:
            for r in sweep[name, s][0]:
                if r.status != "ok":
                    continue
                n_rounds += 1
                over += float(r.plan.charges.sum()) > r.budget or r.total_cost > r.budget
    dom = _cdf_dominates(costs["PDPC"], costs["FDPC1"])
    report(capsys, 8, dom and over == 0,
           f"PDPC cost CDF {'dominates' if dom else 'does not dominate'} FDPC (median {np.median(costs['PDPC']):.1f} "
           f"vs {np.median(costs['FDPC1']):.1f}); {over} of {n_rounds} optimized rounds over budget",
           time.time() - t0, 1200)


def test_c09_numerical_hygiene(capsys):
    t0 = time.time()
    rng = np.random.default_rng(109)
    grad_err = 0.0
    for _ in range(10):
        X = rng.normal(size=(40, 6))
        y = rng.integers(0, 4, 40)
        anchor = rng.normal(size=28)
        f = lambda w: local_objective(w, X, y, anchor, 0.05, 4)
        grad_err = max(grad_err, check_gradient(lambda w: f(w)[0], lambda w: f(w)[1], rng.normal(size=28)))
        g = channel_gain(sample_channel(rng.uniform(50, 500, 3), RADIO, rng))
        Q = rng.uniform(0, S, 3)
        beta, C = float(rng.uniform(1e4, 1e7)), auto_control(KAPPA, S)
        P0 = rng.uniform(0.005, 0.02, g.size)
        scale = abs(utility_from_powers(P0.reshape(g.shape), g, Q, beta, C, RADIO, KAPPA))
        u = lambda P: utility_from_powers(P.reshape(g.shape), g, Q, beta, C, RADIO, KAPPA) / scale
        du = lambda P: utility_gradient(P.reshape(g.shape), g, Q, beta, C, RADIO, KAPPA).ravel() / scale
        grad_err = max(grad_err, check_gradient(u, du, P0, h=1e-7))
    lp_err = 0.0
    for _ in range(100):
        nv, mc = 5, 8
        A = rng.normal(size=(mc, nv))
        b = rng.uniform(0.5, 3.0, mc)
        c = rng.normal(size=nv)
        hi = rng.uniform(1.0, 5.0, nv)
        res = solve_lp(LinearProgram(c, A_ub=A, b_ub=b, lo=np.zeros(nv), hi=hi))
        best = vertex_optimum(c, np.vstack([A, np.eye(nv), -np.eye(nv)]), np.concatenate([b, hi, np.zeros(nv)]))
        lp_err = max(lp_err, abs(res.fun - best) / max(1.0, abs(best)))
    wf_err = 0.0
    for _ in range(20):
        k = int(rng.integers(2, 9))
        a = rng.uniform(0.05, 20.0, k)
        budget = float(rng.uniform(0.1, 5.0))
        ref = water_filling(a, budget)
        prog = LogProgram(c=np.zeros(k), w=np.ones(k), a=a, lo=np.zeros(k), hi=np.full(k, np.inf),
                          G=np.ones((1, k)), h=np.array([budget]))
        wf_err = max(wf_err, float(np.max(np.abs(solve_log_program(prog).x - ref))))
        sm = SmoothConvexProgram(lambda x: (-float(np.sum(np.log1p(a * x))), -a / (1 + a * x)),
                                 lambda v: project_box_budget(v, 0.0, np.inf, budget), k)
        wf_err = max(wf_err, float(np.max(np.abs(solve_smooth(sm, np.zeros(k), tol=1e-12, max_iter=20000).x - ref))))
    ok = grad_err <= 1e-4 and lp_err <= 1e-8 and wf_err <= 1e-5
    report(capsys, 9, ok, f"gradient error {grad_err:.2g}, LP gap {lp_err:.2g} on 100 LPs, "
                          f"water-filling error {wf_err:.2g}", time.time() - t0, 120)


def test_c10_determinism(capsys, tmp_path):
    t0 = time.time()
    cfg = load_config(overrides={"rounds": 5, "fleet.target_size": 10, "radio.tti": 5e-3, "seed": 77}, env={})
    blobs = []
    for d in ("a", "b"):
        export_metrics(Simulation(cfg).run(), tmp_path / d)
        blobs.append((tmp_path / d / "rounds.csv").read_bytes())
    report(capsys, 10, blobs[0] == blobs[1] and len(blobs[0]) > 0,
           f"rounds.csv byte-identical across two runs ({len(blobs[0])} bytes)", time.time() - t0, 60)


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
