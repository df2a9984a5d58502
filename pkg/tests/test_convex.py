import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import linprog

from vefl.convex import (LinearProgram, LogProgram, SmoothConvexProgram, check_gradient, kkt_residual,
                         project_box, project_box_budget, solve_log_program, solve_lp, solve_smooth)
from oracles import vertex_optimum, water_filling
from vefl.errors import Infeasible, Unbounded


def random_lp(rng, n=5, m=8):
    A = rng.normal(size=(m, n))
    b = rng.uniform(0.5, 3.0, m)
    c = rng.normal(size=n)
    hi = rng.uniform(1.0, 5.0, n)
    return LinearProgram(c, A_ub=A, b_ub=b, lo=np.zeros(n), hi=hi)


def test_lp_single_bound():
    res = solve_lp(LinearProgram([1.0], A_ub=[[-1.0]], b_ub=[-3.0]))
    assert res.x == pytest.approx([3.0])
    assert res.fun == pytest.approx(3.0)


def test_lp_equality_system():
    rng = np.random.default_rng(0)
    A = rng.normal(size=(4, 4))
    x_true = rng.uniform(-2, 2, 4)
    lp = LinearProgram(rng.normal(size=4), A_eq=A, b_eq=A @ x_true, lo=np.full(4, -np.inf), hi=np.full(4, np.inf))
    assert solve_lp(lp).x == pytest.approx(np.linalg.solve(A, A @ x_true), abs=1e-9)


def test_lp_matches_vertex_enumeration():
    rng = np.random.default_rng(1)
    worst = 0.0
    for _ in range(100):
        lp = random_lp(rng)
        n = lp.n
        Af = np.vstack([lp.A_ub, np.eye(n), -np.eye(n)])
        bf = np.concatenate([lp.b_ub, lp.hi, -lp.lo])
        best = vertex_optimum(lp.c, Af, bf)
        res = solve_lp(lp)
        assert lp.is_feasible(res.x)
        worst = max(worst, abs(res.fun - best) / max(1.0, abs(best)))
    assert worst <= 1e-8


def test_lp_matches_highs_with_equalities():
    rng = np.random.default_rng(2)
    for _ in range(50):
        n = int(rng.integers(3, 9))
        x0 = rng.uniform(0, 1, n)
        A_ub = rng.normal(size=(n + 2, n))
        A_eq = rng.normal(size=(2, n))
        lp = LinearProgram(rng.normal(size=n), A_ub=A_ub, b_ub=A_ub @ x0 + rng.uniform(0, 1, n + 2),
                           A_eq=A_eq, b_eq=A_eq @ x0, lo=np.zeros(n), hi=np.full(n, 2.0))
        ref = linprog(lp.c, A_ub=lp.A_ub, b_ub=lp.b_ub, A_eq=lp.A_eq, b_eq=lp.b_eq,
                      bounds=list(zip(lp.lo, lp.hi)), method="highs")
        res = solve_lp(lp)
        assert res.fun == pytest.approx(ref.fun, rel=1e-7, abs=1e-9)
        assert abs(res.duality_gap) <= 1e-7 * max(1.0, abs(res.fun))


def test_lp_bland_rule_agrees():
    rng = np.random.default_rng(3)
    for _ in range(20):
        lp = random_lp(rng)
        assert solve_lp(lp, rule="bland").fun == pytest.approx(solve_lp(lp).fun, abs=1e-9)


def test_lp_infeasible_and_unbounded():
    with pytest.raises(Infeasible):
        solve_lp(LinearProgram([1.0], A_ub=[[1.0], [-1.0]], b_ub=[1.0, -2.0]))
    with pytest.raises(Unbounded):
        solve_lp(LinearProgram([-1.0, 0.0], A_ub=[[0.0, 1.0]], b_ub=[1.0]))


def test_smooth_quadratic_interior():
    target = np.array([0.3, -0.2, 0.7])
    prog = SmoothConvexProgram(lambda x: (float((x - target) @ (x - target)), 2 * (x - target)),
                               lambda y: project_box(y, -1.0, 1.0), 3)
    res = solve_smooth(prog, np.zeros(3))
    assert res.x == pytest.approx(target, abs=1e-6)
    assert np.all(np.diff(res.history) <= 0)


def test_smooth_active_bound_kkt():
    prog = SmoothConvexProgram(lambda x: (float((x[0] - 3.0) ** 2), np.array([2 * (x[0] - 3.0)])),
                               lambda y: project_box(y, 0.0, 1.0), 1)
    res = solve_smooth(prog, np.array([0.2]))
    assert res.x[0] == pytest.approx(1.0)
    # at an active upper bound the gradient points outwards: multiplier -grad >= 0
    grad = 2 * (res.x[0] - 3.0)
    assert -grad >= 0


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(0.05, 20.0), min_size=2, max_size=8), st.floats(0.1, 5.0))
def test_smooth_matches_water_filling(a, budget):
    a = np.array(a)
    prog = SmoothConvexProgram(lambda x: (-float(np.sum(np.log1p(a * x))), -a / (1 + a * x)),
                               lambda y: project_box_budget(y, 0.0, np.inf, budget), a.size)
    res = solve_smooth(prog, np.zeros(a.size), tol=1e-12, max_iter=20000)
    assert res.x == pytest.approx(water_filling(a, budget), abs=1e-5)


@given(st.lists(st.floats(-5, 5), min_size=1, max_size=10), st.lists(st.floats(0, 3), min_size=1, max_size=10),
       st.floats(0.0, 10.0))
def test_box_budget_projection_is_feasible_and_optimal(y, hi, budget):
    n = min(len(y), len(hi))
    y, hi = np.array(y[:n]), np.array(hi[:n])
    x = project_box_budget(y, 0.0, hi, budget)
    assert np.all(x >= -1e-12) and np.all(x <= hi + 1e-12)
    assert x.sum() <= budget + 1e-9
    # no feasible random point is closer to y
    rng = np.random.default_rng(0)
    for _ in range(20):
        z = rng.uniform(0, 1, n) * hi
        if z.sum() > budget:
            z *= budget / z.sum()
        assert np.linalg.norm(x - y) <= np.linalg.norm(z - y) + 1e-9


def test_gradient_check_linear():
    c = np.array([1.0, -2.0, 3.5])
    assert check_gradient(lambda x: float(c @ x), lambda x: c, np.ones(3)) <= 1e-10


def test_gradient_check_logistic_and_negative_control():
    rng = np.random.default_rng(4)
    X = rng.normal(size=(30, 5))
    y = rng.integers(0, 2, 30) * 2 - 1

    def f(w):
        return float(np.mean(np.log1p(np.exp(-y * (X @ w)))))

    def g(w):
        s = -y / (1 + np.exp(y * (X @ w)))
        return X.T @ s / X.shape[0]

    for _ in range(5):
        w = rng.normal(size=5)
        assert check_gradient(f, g, w) <= 1e-4
        assert check_gradient(f, lambda v: g(v) * 1.5 + 0.1, w) > 1e-2


def test_log_program_matches_water_filling():
    rng = np.random.default_rng(5)
    for _ in range(10):
        a = rng.uniform(0.1, 10.0, 6)
        budget = float(rng.uniform(0.5, 3.0))
        prog = LogProgram(c=np.zeros(6), w=np.ones(6), a=a, lo=np.zeros(6), hi=np.full(6, np.inf),
                          G=np.ones((1, 6)), h=np.array([budget]))
        res = solve_log_program(prog)
        assert res.x == pytest.approx(water_filling(a, budget), abs=1e-6)
        assert kkt_residual(prog, res.x) <= 1e-6
