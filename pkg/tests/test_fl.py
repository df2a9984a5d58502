import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from vefl.convex import check_gradient
from vefl.errors import DegenerateWeights, DimensionMismatch, ZeroSelectionProbability, ZeroSuccessProbability
from vefl.fl import (AggregationInputs, ClientDataset, ModelParams, aggregate_fdpc, aggregate_pdpc,
                     aggregation_weights, cross_entropy, inexactness, local_objective, local_train,
                     make_gaussian_pool, partition_dirichlet, smoothness_estimate, theorem1_bound)


@pytest.fixture(scope="module")
def pool():
    rng = np.random.default_rng(0)
    X, y, _ = make_gaussian_pool(600, 6, 4, rng, separation=1.0)
    return X, y


def _entropy(counts):
    p = counts / counts.sum()
    p = p[p > 0]
    return float(-(p * np.log(p)).sum())


def test_partition_single_client_is_whole_pool(pool):
    _, y = pool
    parts = partition_dirichlet(y, 1, 0.1, np.random.default_rng(1))
    assert len(parts) == 1
    assert np.array_equal(parts[0], np.arange(y.size))


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 25), st.floats(0.05, 100.0), st.integers(0, 10_000))
def test_partition_is_disjoint_cover(n_clients, alpha, seed):
    y = np.arange(300) % 5
    parts = partition_dirichlet(y, n_clients, alpha, np.random.default_rng(seed))
    joined = np.concatenate(parts)
    assert np.array_equal(np.sort(joined), np.arange(300))
    assert all(p.size >= 1 for p in parts)


def test_partition_large_alpha_is_near_uniform():
    # seed-averaged per-client label histograms against uniform
    y = np.arange(20_000) % 10
    hist = np.zeros((5, 10))
    for seed in range(10):
        parts = partition_dirichlet(y, 5, 1e3, np.random.default_rng(seed))
        for k, p in enumerate(parts):
            hist[k] += np.bincount(y[p], minlength=10) / p.size / 10
    assert np.max(np.abs(hist - 0.1) / 0.1) < 0.10


def test_partition_small_alpha_is_skewed():
    y = np.arange(5000) % 10
    ent = {}
    for alpha in (0.1, 10.0):
        vals = []
        for seed in range(10):
            parts = partition_dirichlet(y, 10, alpha, np.random.default_rng(seed))
            vals += [_entropy(np.bincount(y[p], minlength=10)) for p in parts]
        ent[alpha] = np.mean(vals)
    assert ent[0.1] < ent[10.0]


def test_local_objective_reductions(pool):
    X, y = pool
    rng = np.random.default_rng(2)
    w = rng.normal(size=7 * 4)
    anchor = rng.normal(size=7 * 4)
    f0, g0 = local_objective(w, X, y, anchor, 0.0, 4)
    fc, gc = cross_entropy(w, X, y, 4)
    assert f0 == fc and np.array_equal(g0, gc)
    f1, g1 = local_objective(w, X, y, w.copy(), 0.5, 4)
    assert f1 == pytest.approx(fc) and np.allclose(g1, gc)


def test_local_objective_gradient(pool):
    X, y = pool
    rng = np.random.default_rng(3)
    anchor = rng.normal(size=28)
    for _ in range(10):
        w = rng.normal(size=28)
        err = check_gradient(lambda v: local_objective(v, X, y, anchor, 0.1, 4)[0],
                             lambda v: local_objective(v, X, y, anchor, 0.1, 4)[1], w, rng=rng)
        assert err <= 1e-4


def test_dimension_mismatch(pool):
    X, y = pool
    with pytest.raises(DimensionMismatch):
        cross_entropy(np.zeros(10), X, y, 4)
    with pytest.raises(DimensionMismatch):
        local_objective(np.zeros(28), X, y, np.zeros(27), 0.1, 4)


def _client(X, y):
    return ClientDataset(X, y, bits=float(X.size * 32))


def test_local_train_zero_step(pool):
    X, y = pool
    g = ModelParams(np.random.default_rng(4).normal(size=28), 6, 4)
    out = local_train(g, _client(X, y), 5, 0.0, 0.1)
    assert np.array_equal(out.vector, g.vector)


def test_local_train_descends_and_is_inexact(pool):
    X, y = pool
    mu = 0.05
    L = smoothness_estimate(X) + mu
    g = ModelParams(np.random.default_rng(5).normal(size=28) * 0.3, 6, 4)
    data = _client(X, y)
    prev = local_objective(g.vector, X, y, g.vector, mu, 4)[0]
    losses = []
    for l in range(1, 16):
        w = local_train(g, data, l, 0.9 / L, mu)
        losses.append(local_objective(w.vector, X, y, g.vector, mu, 4)[0])
    assert losses[0] < prev
    assert np.all(np.diff(losses) < 0)
    for l in (1, 5, 15):
        w = local_train(g, data, l, 0.9 / L, mu)
        assert inexactness(w.vector, data, g.vector, mu, 4) <= 1.0


def test_model_checkpoint_round_trip():
    m = ModelParams(np.random.default_rng(6).normal(size=28), 6, 4)
    back = ModelParams.from_bytes(m.to_bytes(64))
    assert np.array_equal(back.vector, m.vector)
    back32 = ModelParams.from_bytes(m.to_bytes(32))
    assert np.allclose(back32.vector, m.vector, rtol=1e-6)
    with pytest.raises(ValueError):
        ModelParams.from_bytes(b"XXXX" + m.to_bytes()[4:])


def test_aggregation_weight_examples():
    assert aggregation_weights(0.0, [1, 3], [5, 9]) == pytest.approx([0.25, 0.75])
    assert aggregation_weights(1.0, [1, 3, 8], [2, 2, 2]) == pytest.approx([1 / 3] * 3)
    assert aggregation_weights(0.5, [1, 3], [2, 2]) == pytest.approx([0.375, 0.625])
    with pytest.raises(DegenerateWeights):
        aggregation_weights(1.0, [1, 2], [0, 0])


@given(st.floats(0, 1), st.lists(st.floats(1, 100), min_size=1, max_size=10), st.data())
def test_aggregation_weights_simplex(lam, D, data):
    T = data.draw(st.lists(st.floats(0.1, 100), min_size=len(D), max_size=len(D)))
    p = aggregation_weights(lam, D, T)
    assert p.sum() == pytest.approx(1.0)
    assert np.all(p >= 0)


def _inputs(V=4, M=3, seed=0):
    rng = np.random.default_rng(seed)
    return rng.normal(size=M), rng.normal(size=(V, M)), rng.dirichlet(np.ones(V))


def test_fdpc_single_success():
    w, d, _ = _inputs(1)
    out = aggregate_fdpc(AggregationInputs(w, d, np.ones(1), np.array([True]), np.ones(1)))
    assert np.allclose(out, w + d[0])


def test_fdpc_all_failures():
    w, d, p = _inputs()
    out = aggregate_fdpc(AggregationInputs(w, d, p, np.zeros(4, bool), np.full(4, 0.5)))
    assert np.array_equal(out, w)


def test_pdpc_full_selection_equals_fdpc():
    w, d, p = _inputs()
    ps = np.array([0.9, 0.5, 1.0, 0.7])
    succ = np.array([True, False, True, True])
    a = aggregate_fdpc(AggregationInputs(w, d, p, succ, ps))
    b = aggregate_pdpc(AggregationInputs(w, d, p, succ, ps, selected=np.ones(4, bool), q=1.0))
    assert np.allclose(a, b)


def test_pdpc_no_selected_success():
    w, d, p = _inputs()
    out = aggregate_pdpc(AggregationInputs(w, d, p, np.array([True, True, False, False]), np.ones(4),
                                           selected=np.array([False, False, True, True]), q=0.5))
    assert np.array_equal(out, w)


def test_zero_probability_errors():
    w, d, p = _inputs()
    with pytest.raises(ZeroSuccessProbability):
        aggregate_fdpc(AggregationInputs(w, d, p, np.ones(4, bool), np.zeros(4)))
    with pytest.raises(ZeroSelectionProbability):
        aggregate_pdpc(AggregationInputs(w, d, p, np.ones(4, bool), np.ones(4), q=0.0))


def test_monte_carlo_unbiased():
    rng = np.random.default_rng(8)
    w, d, p = _inputs(5, 4, seed=8)
    ps = rng.uniform(0.4, 1.0, 5)
    target = w + p @ d
    trials = 10_000
    acc_f = np.zeros(4)
    acc_p = np.zeros(4)
    eq = np.full(5, 0.2)
    target_eq = w + eq @ d
    for _ in range(trials):
        succ = rng.random(5) < ps
        acc_f += aggregate_fdpc(AggregationInputs(w, d, p, succ, ps))
        sel = np.zeros(5, bool)
        sel[rng.choice(5, 2, replace=False)] = True
        acc_p += aggregate_pdpc(AggregationInputs(w, d, eq, succ, ps, selected=sel, q=0.4))
    scale_f = np.linalg.norm(p @ d)
    scale_p = np.linalg.norm(eq @ d)
    assert np.linalg.norm(acc_f / trials - target) / scale_f < 0.02
    assert np.linalg.norm(acc_p / trials - target_eq) / scale_p < 0.02


def test_theorem_bound_examples():
    assert theorem1_bound(1.0, 0.0, 1.0, 2.0, np.ones(4), 1.0, np.ones(4), 0.0) == 0.0
    # (1/2)(1 + (1/4) 4) 4
    assert theorem1_bound(1.0, 0.0, 1.0, 2.0, np.ones(4), 1.0, np.ones(4), 4.0) == pytest.approx(4.0)


@given(st.lists(st.floats(0.05, 0.95), min_size=3, max_size=3), st.integers(0, 2), st.floats(0.01, 0.5))
def test_theorem_bound_decreasing_in_success(ps, idx, bump):
    ps = np.array(ps)
    lo = theorem1_bound(1.2, 0.3, 2.0, 0.5, np.full(3, 1 / 3), 0.5, ps, 1.0)
    up = ps.copy()
    up[idx] = min(1.0, up[idx] + bump)
    if up[idx] > ps[idx]:
        assert theorem1_bound(1.2, 0.3, 2.0, 0.5, np.full(3, 1 / 3), 0.5, up, 1.0) < lo
