from __future__ import annotations

import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings, strategies as st

from mpcplan.milp import (
    BINARY,
    CONTINUOUS,
    EQ,
    GE,
    INTEGER,
    LE,
    MAX,
    MIN,
    BruteForceRefused,
    MilpModel,
    ModelError,
    SolveLimits,
    branch_and_bound,
    brute_force,
    domain_size,
    evaluate,
    simplex_solve,
    solve_highs,
    solve_mip,
    to_lp_text,
)

from instances import random_model


def knapsack() -> MilpModel:
    m = MilpModel("knap")
    x = m.add_var("x", BINARY)
    y = m.add_var("y", BINARY)
    m.add_constraint({x: 3, y: 2}, LE, 4)
    m.set_objective({x: 5, y: 4}, MAX)
    return m


# -- simplex ---------------------------------------------------------------------


def test_simplex_box():
    m = MilpModel()
    x, y = m.add_var("x", ub=2), m.add_var("y", ub=2)
    m.add_constraint({x: 1}, LE, 1)
    m.add_constraint({y: 1}, LE, 1)
    m.set_objective({x: 1, y: 1}, MAX)
    sol = simplex_solve(m)
    assert sol.status == "optimal"
    assert sol.objective == pytest.approx(2)
    assert sol.values[x] == pytest.approx(1) and sol.values[y] == pytest.approx(1)


def test_simplex_infeasible_bounds():
    m = MilpModel()
    x = m.add_var("x", ub=1)
    m.add_constraint({x: 1}, GE, 3)
    m.set_objective({x: 1}, MIN)
    assert simplex_solve(m).status == "infeasible"


def test_simplex_vertex_oracle():
    m = MilpModel()
    a, b = m.add_var("a", ub=10), m.add_var("b", ub=10)
    m.add_constraint({a: 1, b: 1}, LE, 4)
    m.add_constraint({a: 1}, LE, 2)
    m.set_objective({a: 3, b: 2}, MAX)
    sol = simplex_solve(m)
    # vertices of {a+b<=4, a<=2, a,b>=0}: (0,0) (2,0) (2,2) (0,4)
    best = max(3 * va + 2 * vb for va, vb in [(0, 0), (2, 0), (2, 2), (0, 4)])
    assert sol.objective == pytest.approx(best) == 10
    assert (sol.values[a], sol.values[b]) == pytest.approx((2, 2))


def test_simplex_rejects_malformed():
    m = MilpModel()
    m.add_var("x", ub=float("inf"))
    with pytest.raises(ModelError):
        simplex_solve(m)
    m2 = MilpModel()
    m2.add_var("x")
    m2.add_constraint({5: 1.0}, LE, 1)
    with pytest.raises(ModelError):
        simplex_solve(m2)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10**6), st.integers(1, 8), st.integers(1, 6))
def test_simplex_matches_scipy_lp(seed, n, m_rows):
    from scipy.optimize import linprog

    model = random_model(seed, 0, 0, n, m_rows)
    d = model.dense()
    ub_rows = [i for i, s in enumerate(d.senses) if s != EQ]
    sign = np.array([1.0 if d.senses[i] == LE else -1.0 for i in ub_rows])
    eq_rows = [i for i, s in enumerate(d.senses) if s == EQ]
    ref = linprog(-d.c, A_ub=(d.A[ub_rows] * sign[:, None]) if ub_rows else None,
                  b_ub=(d.b[ub_rows] * sign) if ub_rows else None,
                  A_eq=d.A[eq_rows] if eq_rows else None, b_eq=d.b[eq_rows] if eq_rows else None,
                  bounds=list(zip(d.lb, d.ub)), method="highs")
    got = simplex_solve(model)
    if ref.status == 2:
        assert got.status == "infeasible"
    else:
        assert got.status == "optimal"
        assert got.objective == pytest.approx(-ref.fun, abs=1e-6)
        assert evaluate(model, got.values).feasible


# -- branch and bound ----------------------------------------------------------------


def test_knapsack_all_engines():
    m = knapsack()
    # 4-point enumeration: (0,0)=0 (1,0)=5 (0,1)=4 (1,1) infeasible
    for sol in (branch_and_bound(m), brute_force(m), solve_highs(m)):
        assert sol.status == "optimal"
        assert sol.objective == 5
        assert (sol.values[0], sol.values[1]) == (1, 0)


def test_all_continuous_equals_simplex():
    m = next(m for m in (random_model(s, 0, 0, 5, 4) for s in range(100))
             if simplex_solve(m).status == "optimal")
    lp, mip = simplex_solve(m), branch_and_bound(m)
    assert mip.status == "optimal"
    assert mip.objective == pytest.approx(lp.objective, abs=1e-9)
    assert mip.nodes_explored == 1


def test_contradictory_binary_infeasible():
    m = MilpModel()
    x = m.add_var("x", BINARY)
    m.add_constraint({x: 1}, GE, 1)
    m.add_constraint({x: 1}, LE, 0)
    m.set_objective({x: 1})
    assert branch_and_bound(m).status == "infeasible"
    assert solve_highs(m).status == "infeasible"
    assert brute_force(m).status == "infeasible"


def test_single_binary_brute_force():
    m = MilpModel()
    x = m.add_var("x", BINARY)
    m.set_objective({x: 7}, MAX)
    sol = brute_force(m)
    assert sol.objective == 7 and sol.values[x] == 1


def test_mixed_two_binaries_two_continuous():
    m = MilpModel()
    b1, b2 = m.add_var("b1", BINARY), m.add_var("b2", BINARY)
    c1, c2 = m.add_var("c1", ub=3), m.add_var("c2", ub=3)
    m.add_constraint({c1: 1, b1: -3}, LE, 0)
    m.add_constraint({c2: 1, b2: -3}, LE, 0)
    m.add_constraint({c1: 1, c2: 1}, LE, 4.5)
    m.set_objective({c1: 2, c2: 1.5, b1: -1, b2: -2}, MAX)
    oracle = brute_force(m)
    # b1=b2=1: 2*3 + 1.5*1.5 - 3 = 5.25; b1 only: 6 - 1 = 5
    assert oracle.objective == pytest.approx(5.25)
    assert branch_and_bound(m).objective == pytest.approx(oracle.objective, abs=1e-9)


def test_brute_force_refuses_large_domain():
    m = MilpModel()
    for i in range(21):
        m.add_var(f"x{i}", BINARY)
    m.set_objective({0: 1})
    assert domain_size(m) == 1 << 21
    with pytest.raises(BruteForceRefused) as err:
        brute_force(m, max_points=1 << 20)
    assert str(1 << 21) in str(err.value)


def test_node_limit_reports_incumbent_or_nothing():
    m = random_model(11, 12, 0, 0, 6)
    sol = branch_and_bound(m, SolveLimits(max_nodes=1))
    assert sol.status in ("optimal", "feasible-incumbent", "limit-reached-no-incumbent", "infeasible")
    assert sol.nodes_explored <= 1
    if sol.status == "feasible-incumbent":
        assert sol.bound_gap > 0 and evaluate(m, sol.values).feasible


def test_solve_limits_validated():
    with pytest.raises(ValueError):
        SolveLimits(max_nodes=0)
    with pytest.raises(ValueError):
        SolveLimits(engine="cplex")
    assert solve_mip(knapsack(), SolveLimits(engine="native")).objective == 5


# -- evaluate and LP text --------------------------------------------------------


def test_evaluate_examples():
    m = knapsack()
    ok = evaluate(m, {0: 1, 1: 0})
    assert ok.feasible and ok.objective == 5
    bad = evaluate(m, {0: 1, 1: 1})
    assert not bad.feasible
    assert [(i, s) for i, _, s in bad.violations] == [(0, -1)]
    empty = MilpModel()
    v = empty.add_var("v", ub=3)
    assert evaluate(empty, {v: 2.5}).feasible
    with pytest.raises(ModelError):
        evaluate(m, {0: 1})


def test_lp_text_dump():
    text = to_lp_text(knapsack())
    assert text.startswith("\\ knap\nMaximize")
    assert " c0: 3 x + 2 y <= 4" in text
    assert "Binary\n x y" in text


# -- properties -------------------------------------------------------------------


@settings(max_examples=80, deadline=None, suppress_health_check=[HealthCheck.too_slow])
@given(st.integers(0, 10**6), st.integers(1, 12), st.integers(1, 6), st.sampled_from([MAX, MIN]))
def test_bnb_matches_brute_force(seed, n_bin, n_cons, sense):
    m = random_model(seed, n_bin, 0, 0, n_cons, sense)
    oracle = brute_force(m)
    sol = branch_and_bound(m)
    assert sol.status in ("optimal", "infeasible")
    assert sol.status == oracle.status
    if sol.status == "optimal":
        assert abs(sol.objective - oracle.objective) <= 1e-9
        assert evaluate(m, sol.values).feasible


@settings(max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow])
@given(st.integers(0, 10**6), st.integers(0, 4), st.integers(1, 3), st.integers(1, 3))
def test_mixed_models_match_oracle(seed, n_bin, n_int, n_cont):
    m = random_model(seed, n_bin, n_int, n_cont, 4)
    oracle = brute_force(m)
    for sol in (branch_and_bound(m), solve_highs(m)):
        assert sol.status == oracle.status
        if sol.has_solution:
            assert sol.objective == pytest.approx(oracle.objective, abs=1e-6)
            assert evaluate(m, sol.values).feasible


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**6), st.integers(1, 10), st.sampled_from([MAX, MIN]))
def test_relaxation_bounds_mip(seed, n_bin, sense):
    m = random_model(seed, n_bin, 1, 1, 4, sense)
    lp, mip = simplex_solve(m), branch_and_bound(m)
    if mip.status == "optimal":
        if sense == MAX:
            assert lp.objective >= mip.objective - 1e-6
        else:
            assert lp.objective <= mip.objective + 1e-6


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10**6))
def test_bnb_deterministic(seed):
    m = random_model(seed, 10, 2, 2, 5)
    a, b = branch_and_bound(m), branch_and_bound(m)
    assert repr(a) == repr(b)


@pytest.mark.parametrize("seed", [62, 133, 877, 1052, 1079, 1132, 2076])
def test_highs_exact_on_presolve_traps(seed):
    # instances where HiGHS presolve once returned a wrong optimum or claimed infeasibility
    rs = np.random.default_rng(seed)
    m = random_model(seed, int(rs.integers(0, 5)), int(rs.integers(1, 4)), int(rs.integers(1, 4)), 4)
    oracle = brute_force(m)
    sol = solve_highs(m)
    assert sol.status == oracle.status == "optimal"
    assert sol.objective == pytest.approx(oracle.objective, abs=1e-6)
