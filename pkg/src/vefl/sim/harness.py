"""End-to-end rounds: selection, local training, slotted upload, aggregation.

Every round k starts at slot k * slots_per_round. The server collects the
vehicles in coverage, plans participation (optimized or baseline), the
participants train locally, and their updates are drained slot by slot
through EDF scheduling and per-slot pRB/power control. Updates delivered
before the vehicle's deadline are aggregated; the rest are lost.
"""

import logging
import math
import time
import warnings
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .. import rat_opt
from ..cost import (PayloadSpec, SlaTerms, deadline_slot, default_chip_capacitance,
                    payload_bits, tx_start_slot, worst_case_tx_ttis)
from ..errors import ExpiredDeadline, NoFeasiblePlan, PositionOutsideCoverage
from ..fl import (AggregationInputs, ClientDataset, ModelParams, accuracy, aggregate_fdpc,
                  aggregate_pdpc, aggregation_weights, cross_entropy, dissimilarity_estimate,
                  feature_scales, inexactness, local_train, make_gaussian_pool, partition_dirichlet,
                  sample_from_means, smoothness_estimate, theorem1_bound)
from ..mobility import CoverageGeometry, IdmParams, RoadConfig, generate_trace, sojourn_lower_bound
from ..radio import RadioConfig, fading_quantile, realize_channel, worst_case_snr
from ..vefl_opt import CandidatePool, RoundBudget, RoundPlan, solve_vefl_round
from .config import RunConfig

log = logging.getLogger(__name__)


@dataclass
class RoundRecord:
    k: int
    status: str  # "ok" or "skipped"
    reason: str = ""
    pool: List[int] = field(default_factory=list)  # vehicle ids in coverage
    plan: Optional[RoundPlan] = None
    budget: float = 0.0
    participants: List[int] = field(default_factory=list)  # ids that trained and uploaded
    p_success: List[float] = field(default_factory=list)  # per participant
    delays: List[float] = field(default_factory=list)  # realized completion time, s
    energies: List[float] = field(default_factory=list)  # realized compute + tx energy, J
    costs: List[float] = field(default_factory=list)  # realized charges of paid vehicles
    planned_cost: float = 0.0  # sum of upper-bound charges
    accuracy: float = float("nan")
    train_loss: float = float("nan")
    beta_bar: float = 0.0
    tx_slots: int = 0
    lemma_gap: float = float("-inf")  # max over slots of lhs - rhs
    theorem_lhs: float = float("nan")  # realized loss change
    theorem_rhs: float = float("nan")
    clamped: int = 0
    slots: list = field(default_factory=list)

    @property
    def n_success(self):
        return int(sum(p >= 1.0 for p in self.p_success))

    @property
    def all_delivered(self):
        return self.status == "ok" and all(p >= 1.0 for p in self.p_success)

    @property
    def total_cost(self):
        return float(sum(self.costs))


@dataclass
class Scenario:
    """Everything drawn once per run: traffic, data and service terms."""

    trace: object
    vehicles: List[int]
    datasets: dict  # vid -> ClientDataset
    terms: dict  # vid -> SlaTerms
    test: tuple
    radio: RadioConfig
    geom: CoverageGeometry
    fading_q: float
    smoothness: float
    n_features: int
    n_classes: int


def _streams(seed):
    names = ("mobility", "data", "sla", "fading", "channel")
    return dict(zip(names, (np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(len(names)))))


def radio_from(cfg: RunConfig):
    return RadioConfig(prb_count=cfg["radio.prb_count"], prb_bandwidth=cfg["radio.prb_bandwidth"],
                       antennas=cfg["radio.antennas"], tti=cfg["radio.tti"],
                       overhead_fraction=cfg["radio.overhead_fraction"],
                       pathloss_exponent=cfg["radio.pathloss_exponent"],
                       pathloss_ref_db=cfg["radio.pathloss_ref_db"],
                       shadowing_db=cfg["radio.shadowing_db"])


def build_scenario(cfg: RunConfig) -> Scenario:
    rng = _streams(cfg["seed"])
    radio = radio_from(cfg)
    geom = CoverageGeometry(cfg["fleet.coverage_radius"])
    u_max = cfg["fleet.u_max"]
    rate = cfg["fleet.arrival_rate"]
    if rate is None:
        # vehicles stay about 2R / u_max seconds
        rate = cfg["fleet.target_size"] * u_max / (2.0 * geom.radius)
    road = RoadConfig(n_lanes=cfg["fleet.lanes"], lane_width=cfg["fleet.lane_width"],
                      offset=cfg["fleet.lane_offset"], two_way=cfg["fleet.two_way"],
                      arrival_rate=rate, initial_vehicles=cfg["fleet.target_size"], dt=cfg["fleet.dt"])
    horizon = (cfg["rounds"] + 1) * cfg.slots_per_round * radio.tti
    trace = generate_trace(horizon, road, IdmParams(u_max=u_max), geom, rng["mobility"])
    vids = trace.unique_vehicles()

    d, K = cfg["data.n_features"], cfg["data.n_classes"]
    n_pool = cfg["data.samples_per_vehicle"] * len(vids)
    X, y, means = make_gaussian_pool(n_pool, d, K, rng["data"], cfg["data.separation"], cfg["data.noise"],
                                     cfg["data.condition"])
    parts = partition_dirichlet(y, len(vids), cfg["data.alpha"], rng["data"])
    bps = cfg["data.bits_per_sample"]
    datasets = {v: ClientDataset(X[idx], y[idx], idx.size * bps) for v, idx in zip(vids, parts)}
    test = sample_from_means(means, cfg["data.test_samples"], rng["data"], cfg["data.noise"],
                             feature_scales(d, cfg["data.condition"]))

    ref_bits = cfg["data.samples_per_vehicle"] * bps
    terms = {}
    for v in vids:
        u = lambda key: float(rng["sla"].uniform(*cfg[key]))
        eta_min, eta_max = u("sla.eta_min"), u("sla.eta_max")
        c = u("sla.cycles_per_bit")
        terms[v] = SlaTerms(
            eta_min=eta_min, eta_max=eta_max, p_max=cfg["sla.p_max"],
            energy_budget=u("sla.energy_budget"), dataset_bits=datasets[v].bits,
            cycles_per_bit=c,
            chip_capacitance=default_chip_capacitance(c, ref_bits, eta_max, cfg["sla.reference_joules"],
                                                      cfg["sla.reference_iters"]),
            energy_price=u("sla.energy_price"), participation_fee=u("sla.fee"))
    fq = fading_quantile(radio, cfg["radio.worst_quantile"], rng=rng["fading"])
    L = smoothness_estimate(X)
    return Scenario(trace, vids, datasets, terms, test, radio, geom, fq, L, d, K)


def fedprox_plan(pool: CandidatePool, budget: RoundBudget) -> RoundPlan:
    """Equal budget share per vehicle, maximum CPU frequency, and the
    largest iteration count fitting time, energy and the share."""
    V = pool.size
    lmin, lmax = budget.iter_bounds
    share = budget.money / V
    T = pool.compute_time(budget)
    E = pool.compute_energy_left()
    eta = pool.eta_max
    e_iter = pool.zeta_half * pool.cd * eta ** 2
    with np.errstate(divide="ignore", invalid="ignore"):
        l_time = np.where(T > 0, np.floor(T * eta / pool.cd + 1e-9), 0)
        l_energy = np.where(E > 0, np.floor(E / e_iter + 1e-9), 0)
        money = (share - pool.fixed_charge()) / pool.energy_price
        l_money = np.where(money > 0, np.floor(money / e_iter + 1e-9), 0)
    iters = np.minimum(np.minimum(np.minimum(l_time, l_energy), l_money), lmax).astype(int)
    iters[iters < lmin] = 0
    sel = iters > 0
    if not sel.any():
        raise NoFeasiblePlan("equal shares pay for no vehicle", binding="budget")
    charges = np.where(sel, pool.fixed_charge() + pool.energy_price * iters * e_iter, 0.0)
    theta = pool.weights if pool.weights is not None else np.full(V, 1.0 / V)
    return RoundPlan(selected=sel, iters=iters, freqs=np.where(sel, eta, pool.eta_min), charges=charges,
                     objective=float(np.sum(theta * iters)), theta=theta, mode="fedprox")


class Simulation:
    def __init__(self, cfg: RunConfig, scenario: Optional[Scenario] = None):
        self.cfg = cfg
        self.sc = scenario if scenario is not None else build_scenario(cfg)
        self.chan_rng = _streams(cfg["seed"])["channel"]
        self.mode = cfg["mode"]
        self.radio = self.sc.radio
        self.S = payload_bits(PayloadSpec((self.sc.n_features + 1) * self.sc.n_classes, cfg["radio.fpp_bits"]))
        self.step = cfg["fl.step_scale"] / (self.sc.smoothness + cfg["fl.prox_mu"])
        ctl = cfg["lyapunov.control"]
        ctl = rat_opt.auto_control(self.radio.tti, self.S) if ctl == "auto" else float(ctl)
        self.lyap = rat_opt.LyapunovConfig(control=ctl, penalty_base=cfg["lyapunov.penalty_base"],
                                           max_iters=cfg["lyapunov.max_iters"], tol=cfg["lyapunov.tol"])
        self.model = ModelParams.zeros(self.sc.n_features, self.sc.n_classes)

    # planning ----------------------------------------------------------------

    def _pool(self, k):
        cfg, sc = self.cfg, self.sc
        t0 = k * cfg.slots_per_round
        frame = sc.trace.pool_at(t0 * self.radio.tti)
        ids, soj = [], []
        for v in sorted(frame):
            x, y, _ = frame[v]
            try:
                soj.append(sojourn_lower_bound(x, y, sc.trace.u_max, sc.geom))
            except PositionOutsideCoverage:
                continue
            ids.append(v)
        return ids, np.array(soj)

    def _subset_size(self, V):
        if self.cfg["fl.subset_size"] is not None:
            return int(min(V, self.cfg["fl.subset_size"]))
        return max(1, int(round(self.cfg["fl.subset_fraction"] * V)))

    def plan_round(self, k, ids, soj):
        cfg, sc, radio = self.cfg, self.sc, self.radio
        V = len(ids)
        partial = self.mode == "PDPC"
        share_n = self._subset_size(V) if partial else V
        snr = worst_case_snr(sc.geom.radius, cfg["sla.p_max"] / radio.prb_count, radio, sc.fading_q)
        ttis = worst_case_tx_ttis(self.S, snr, radio.tti, radio.prb_bandwidth, radio.overhead_fraction,
                                  radio.prb_count, share_n)
        lam = 0.0 if self.mode == "FedProxBaseline" else cfg["fl.lambda"]
        n = np.array([sc.datasets[v].size for v in ids], float)
        weights = aggregation_weights(lam, n, soj)
        pool = CandidatePool.from_terms([sc.terms[v] for v in ids], n, soj, np.full(V, ttis),
                                        radio.tti, weights=weights)
        money = cfg["budget.money"] if cfg["budget.money"] is not None else cfg["budget.per_vehicle"] * V
        budget = RoundBudget(money=money, deadline=cfg["round.duration"], desired_iters=cfg["fl.desired_iters"],
                             subset_size=self._subset_size(V), iter_bounds=(cfg["fl.iter_min"], cfg["fl.iter_max"]))
        if self.mode == "FedProxBaseline":
            plan = fedprox_plan(pool, budget)
        else:
            plan = solve_vefl_round(pool, budget, mode="pdpc" if partial else "fdpc",
                                    lam_bar=cfg["fl.lambda_bar"], theta0=cfg["solver.penalty_base"],
                                    max_iters=cfg["solver.max_iters"], tol=cfg["solver.tol"],
                                    model=cfg["solver.model"])
        return plan, pool, budget, weights

    # uplink ------------------------------------------------------------------

    def upload(self, k, ids, soj, pool, plan, rec: RoundRecord):
        """Drain the payload queues of the participants; returns final queues."""
        cfg, radio, sc = self.cfg, self.radio, self.sc
        kappa, Z = radio.tti, radio.prb_count
        t0 = k * cfg.slots_per_round
        t1 = t0 + cfg.slots_per_round
        part = np.flatnonzero(plan.iters > 0)
        n = part.size
        tau = np.zeros(n, int)
        end = np.zeros(n, int)
        for j, i in enumerate(part):
            with warnings.catch_warnings(record=True) as caught:
                warnings.simplefilter("always")
                tau[j] = tx_start_slot(t0, t1, soj[i], int(pool.tx_ttis[i]), kappa, cfg["round.duration"])
            rec.clamped += len(caught)
            end[j] = deadline_slot(t0, t1, soj[i], kappa)
        queues = rat_opt.PayloadQueue.full(n, self.S)
        failed = np.zeros(n, bool)
        finish = np.full(n, -1, int)
        tx_energy = np.zeros(n)
        ee = rat_opt.EeTracker()
        check = cfg["output.check_bounds"]
        keep = cfg["output.slot_log"]
        t = int(tau.min()) if n else t1
        while t < t1:
            live = (~failed) & (queues.remaining > 0) & (t < end)
            if not live.any():
                break
            active = np.flatnonzero(live & (tau <= t))
            if active.size == 0:
                t = int(tau[live].min())
                continue
            # positions at the slot start; a vehicle that left drops out
            dist = []
            for j in active:
                p = sc.trace.position_at(ids[part[j]], t * kappa)
                dist.append(np.inf if p is None else math.hypot(*p))
            dist = np.array(dist)
            gone = ~np.isfinite(dist)
            if gone.any():
                failed[active[gone]] = True
                active, dist = active[~gone], dist[~gone]
                if active.size == 0:
                    t += 1
                    continue
            m = active.size
            Q = rat_opt.PayloadQueue(queues.remaining[active].copy(), self.S)
            left = end[active] - t
            sched = rat_opt.edf_schedule(list(range(m)), left, Z, backlog=Q.remaining)
            r_min = np.zeros(m)
            keep_s = []
            for i in sched:
                try:
                    r_min[i] = rat_opt.min_rate_requirement(Q.remaining[i], end[active[i]], t, m, Z, kappa)
                    keep_s.append(i)
                except ExpiredDeadline:
                    failed[active[i]] = True
            sched = keep_s
            gains = realize_channel(dist, radio, self.chan_rng).gains
            if self.mode == "EqualPowerBaseline":
                alloc = rat_opt.equal_power_allocation(sched, m, Z, cfg["sla.p_max"])
            else:
                alloc = rat_opt.solve_prb_power(sched, gains, Q, ee, self.lyap, radio, cfg["sla.p_max"],
                                                r_min=r_min, deadlines=left, kappa=kappa)
            rates = alloc.rates(gains, radio)
            gap = float("nan")
            if check:
                lhs, rhs = rat_opt.drift_penalty_bound(alloc, gains, Q, ee, self.lyap, radio,
                                                       cfg["sla.p_max"], kappa)
                gap = lhs - rhs
                rec.lemma_gap = max(rec.lemma_gap, gap)
            util = rat_opt.slot_utility(alloc, gains, Q, ee, self.lyap, radio, kappa)
            newQ = rat_opt.update_queue(Q, rates, kappa).remaining
            ee.record(rates, alloc.powers)
            queues.remaining[active] = newQ
            tx_energy[active] += kappa * alloc.powers.sum(axis=1)
            done = active[(newQ <= 0) & (finish[active] < 0)]
            finish[done] = t
            rec.tx_slots += 1
            if keep:
                rec.slots.append({
                    "k": k, "slot": t, "active": [int(ids[part[j]]) for j in active],
                    "scheduled": [int(ids[part[active[i]]]) for i in alloc.scheduled],
                    "prb_owner": [int(ids[part[active[i]]]) for i in np.argmax(alloc.prb_assign, axis=0)]
                    if alloc.scheduled.size else [],
                    "power": alloc.powers.sum(axis=1).tolist(), "rate": rates.tolist(),
                    "rate_floor": r_min.tolist(), "queue": newQ.tolist(), "beta": ee.ratio,
                    "utility": util, "bound_gap": gap, "shortfall": len(alloc.shortfall),
                })
            t += 1
        rec.beta_bar = ee.ratio
        return part, queues, failed, finish, tx_energy, t0

    # round -------------------------------------------------------------------

    def run_round(self, k) -> RoundRecord:
        cfg, sc = self.cfg, self.sc
        ids, soj = self._pool(k)
        rec = RoundRecord(k=k, status="ok", pool=[int(v) for v in ids])
        if not ids:
            rec.status, rec.reason = "skipped", "empty"
            return self._evaluate(rec)
        try:
            plan, pool, budget, weights = self.plan_round(k, ids, soj)
        except NoFeasiblePlan as exc:
            rec.status, rec.reason = "skipped", f"infeasible:{exc.binding}"
            return self._evaluate(rec)
        rec.plan, rec.budget = plan, budget.money
        rec.planned_cost = plan.total_charge
        V = len(ids)
        datasets = [sc.datasets[v] for v in ids]
        w0 = self.model
        deltas = np.zeros((V, w0.dim))
        gamma = 0.0
        for i in np.flatnonzero(plan.iters > 0):
            new = local_train(w0, datasets[i], plan.iters[i], self.step, cfg["fl.prox_mu"])
            deltas[i] = new.vector - w0.vector
            gamma = max(gamma, inexactness(new.vector, datasets[i], w0.vector, cfg["fl.prox_mu"], sc.n_classes))

        part, queues, failed, finish, tx_energy, t0 = self.upload(k, ids, soj, pool, plan, rec)
        p_suc = np.clip(rat_opt.success_probability(queues.remaining, self.S), 0.0, 1.0)
        ok = queues.remaining <= 0
        kappa = self.radio.tti
        rec.participants = [int(ids[i]) for i in part]
        rec.p_success = [float(p) for p in p_suc]
        for j, i in enumerate(part):
            term = sc.terms[ids[i]]
            t_cmp = plan.iters[i] * pool.cd[i] / plan.freqs[i]
            rec.delays.append(float((finish[j] + 1 - t0) * kappa) if ok[j] else float("inf"))
            e = float(plan.iters[i] * pool.zeta_half[i] * pool.cd[i] * plan.freqs[i] ** 2 + tx_energy[j])
            rec.energies.append(e)
            # deadline ledger: delivered updates finished in time and after computing
            if ok[j]:
                lim = min(cfg["round.duration"], soj[i])
                if rec.delays[-1] > lim + 1e-9 or (finish[j] + 1 - t0) * kappa < t_cmp - 1e-9:
                    raise AssertionError(f"vehicle {ids[i]} delivered outside its window")
        paid = np.flatnonzero(plan.charges > 0)
        e_real = np.zeros(V)
        e_real[part] = rec.energies
        for i in paid:
            t = sc.terms[ids[i]]
            rec.costs.append(float(t.energy_price * e_real[i] + t.participation_fee))

        succ = np.zeros(V, bool)
        succ[part] = ok
        ps = np.zeros(V)
        ps[part] = p_suc
        inp = AggregationInputs(w0.vector, deltas, weights, succ, ps)
        if self.mode == "PDPC":
            inp.selected = plan.selected
            inp.q = self._subset_size(V) / V
            vec = aggregate_pdpc(inp)
        else:
            vec = aggregate_fdpc(inp)

        # one-round loss change against the convergence bound
        before = self._train_loss(w0.vector, datasets, weights)
        B, g2 = dissimilarity_estimate(w0.vector, datasets, weights, sc.n_classes)
        self.model = ModelParams(vec, w0.n_features, w0.n_classes)
        after = self._train_loss(vec, datasets, weights)
        rec.theorem_lhs = after - before
        if succ.any():
            q = inp.q if self.mode == "PDPC" else 1.0
            rec.theorem_rhs = theorem1_bound(B, gamma, sc.smoothness + cfg["fl.prox_mu"], cfg["fl.prox_mu"],
                                             weights[succ], q, ps[succ], g2)
        rec.train_loss = after
        return self._evaluate(rec)

    def _train_loss(self, w, datasets, weights):
        return float(sum(p * cross_entropy(w, d.features, d.labels, self.sc.n_classes)[0]
                         for p, d in zip(weights, datasets)))

    def _evaluate(self, rec):
        X, y = self.sc.test
        rec.accuracy = accuracy(self.model, X, y)
        return rec

    def run(self):
        records = []
        for k in range(self.cfg["rounds"]):
            rec = self.run_round(k)
            if rec.status != "ok":
                log.info("round %d skipped: %s", k, rec.reason)
            records.append(rec)
        return records


def run_simulation(cfg: RunConfig, scenario: Optional[Scenario] = None) -> List[RoundRecord]:
    """Run all rounds of ``cfg`` and return one record per round."""
    cfg.validate()
    return Simulation(cfg, scenario).run()


def run_baseline_fedprox(cfg: RunConfig, scenario: Optional[Scenario] = None) -> List[RoundRecord]:
    if cfg["mode"] != "FedProxBaseline":
        raise ValueError("run_baseline_fedprox needs mode FedProxBaseline")
    return run_simulation(cfg, scenario)


def timed_run(cfg: RunConfig, scenario: Optional[Scenario] = None):
    t = time.perf_counter()
    recs = run_simulation(cfg, scenario)
    return recs, time.perf_counter() - t
