from __future__ import annotations

from dataclasses import replace

import pytest
from hypothesis import HealthCheck, given, settings, strategies as st

from mpcplan.capacity import (
    CapInput,
    CapacityPlan,
    FacilityStatus,
    PlanningError,
    build_cap_model,
    due_month,
    initial_cap_input,
    module_cost,
    open_runs,
    plan_from_dict,
    plan_smoothness,
    plan_to_dict,
    solve_cap,
)
from mpcplan.core import CostParams, FacilitySite, Location, Project, RollingConfig, StrategyLimits, ValidationError
from mpcplan.milp import SolveLimits, brute_force, evaluate

from conftest import make_scenario
from instances import tiny_cap_input

NATIVE = SolveLimits(engine="native")


def single_site(project: Project, rent=1000.0, cost=None, site_xy=(0, 0), initial=0, max_fractals=8,
                **kw) -> CapInput:
    s = make_scenario(
        locations=[Location("LF", 0, 0), Location(project.site, *site_xy)],
        facilities=[FacilitySite("F", "LF", "existing", max_fractals, 0, rent)],
        projects=[project],
        cost=cost or CostParams(production_cost_per_module=100, mpc_commission_cost=500,
                                mpc_decommission_cost=300),
        initial={"F": initial} if initial else {},
        **kw,
    )
    return initial_cap_input(s)


def test_structural_count_one_site_one_project():
    inp = single_site(Project("P", "S", 40, 1e6, 8, (10,)))
    cm = build_cap_model(inp, 3)
    assert (len(cm.o), len(cm.m), len(cm.a), len(cm.y)) == (3, 3, 3, 3)
    assert cm.w == {}  # existing sites are never commissioned
    assert sorted(t for (_, t) in cm.y) == [0, 1, 2]


def test_zero_projects_keeps_everything_closed():
    s = make_scenario(locations=[Location("LF", 0, 0)], facilities=[FacilitySite("F", "LF", "existing", 8, 0, 1000)])
    plan = solve_cap(initial_cap_input(s), 3)
    assert plan.objective_value == 0
    assert not any(plan.open.values())
    assert plan.accepted == {}


def test_distance_penalty_in_objective():
    cost = CostParams(distance_threshold_x=100, distance_penalty_per_mile_module=7, production_cost_per_module=100,
                      truck_cost_per_mile=3)
    inp = single_site(Project("P", "S", 40, 1e6, 8, (10,)), cost=cost, site_xy=(120, 0))
    cm = build_cap_model(inp, 3)
    coef = dict(cm.model.objective)[cm.a["P", "F", 0]]
    # production 100 + transport 120*3 + penalty (120-100)*7
    assert coef == pytest.approx(-(100 + 360 + 20 * 7))
    assert module_cost(inp.scenario, "P", "F") == pytest.approx((100, 360, 140))


def test_profitable_project_accepted_with_commitment_floor():
    inp = single_site(Project("P", "S", 40, 1e6, 0, (10,)), max_fractals=2)
    plan = solve_cap(inp, 4)
    assert plan.accepted == {"P": 0}
    assert [plan.open["F", t] for t in range(4)] == [True, True, True, False]
    assert plan.mpc_target["F", 0] == 1  # 40 modules = one MPC for four weeks
    assert sum(q for (p, f, t), q in plan.assignment.items()) == 40
    cm = build_cap_model(inp, 4)
    oracle = brute_force(cm.model, max_points=1 << 40, relaxed=cm.flow_vars)
    assert plan.objective_value == pytest.approx(oracle.objective, abs=1e-6)


def test_unprofitable_project_rejected():
    inp = single_site(Project("P", "S", 40, 10.0, 0, (10,)))
    plan = solve_cap(inp, 3)
    cm = build_cap_model(inp, 3)
    assert brute_force(cm.model, max_points=1 << 40, relaxed=cm.flow_vars).objective == 0
    assert plan.accepted == {} and plan.assignment == {} and plan.objective_value == 0


def test_max_open_one_of_two_identical_sites():
    s = make_scenario(
        locations=[Location("L1", 0, 0), Location("L2", 0, 0), Location("S", 10, 0)],
        facilities=[FacilitySite("F1", "L1", "existing", 8, 0, 100), FacilitySite("F2", "L2", "existing", 8, 0, 100)],
        projects=[Project("P", "S", 200, 1e7, 0, (50,))],
        limits=StrategyLimits(max_open_facilities=1),
    )
    plan = solve_cap(initial_cap_input(s), 3)
    for t in range(3):
        assert plan.open["F1", t] + plan.open["F2", t] == 1


def test_due_month_window():
    s = single_site(Project("P", "S", 40, 1e6, 8, (10, 20))).scenario
    p = s.projects[0]
    # slowest rate 10 -> erection weeks 8..11 -> month 2
    assert due_month(p, s, 0, 12) == 2
    assert due_month(p, s, 1, 12) == 1
    assert due_month(p, s, 5, 12) == 11  # overdue: whole horizon
    assert due_month(replace(p, target_start_week=200), s, 0, 12) == 11


def test_candidate_site_commissioned_once():
    s = make_scenario(
        locations=[Location("LN", 0, 0), Location("S", 5, 0)],
        facilities=[FacilitySite("N", "LN", "candidate-new", 8, 5000, 100)],
        projects=[Project("P", "S", 40, 1e6, 0, (10,))],
    )
    plan = solve_cap(initial_cap_input(s), 4)
    assert plan.commissioned == {"N": 0}
    assert plan.cost_breakdown["commissioning"] == 5000
    # already commissioned and still committed: no new commissioning, forced open
    again = replace(initial_cap_input(s), current_open_status={"N": FacilityStatus(True, 2, True)})
    cm = build_cap_model(again, 4)
    assert cm.w == {}
    assert cm.model.variables[cm.o["N", 1]].lb == 1


def test_already_accepted_must_complete():
    inp = replace(single_site(Project("P", "S", 40, 10.0, 0, (10,))), already_accepted=frozenset({"P"}),
                  carried_unfinished_demand={"P": 30})
    plan = solve_cap(inp, 3)
    assert plan.accepted == {}
    assert sum(plan.assignment.values()) == 30
    assert plan.cost_breakdown["revenue"] == 0


def test_infeasible_names_strategy_limits():
    base = single_site(Project("P", "S", 40, 1e6, 0, (10,)), limits=StrategyLimits(max_open_facilities=0))
    inp = replace(base, already_accepted=frozenset({"P"}))
    with pytest.raises(PlanningError, match="strategy limits"):
        solve_cap(inp, 3)


def test_invalid_input_rejected():
    inp = single_site(Project("P", "S", 40, 1e6, 0, (10,)))
    with pytest.raises(ValidationError):
        build_cap_model(inp, 2)  # shorter than the commitment window
    with pytest.raises(ValidationError):
        build_cap_model(replace(inp, carried_unfinished_demand={"P": 41}), 3)
    with pytest.raises(ValidationError):
        build_cap_model(replace(inp, current_mpc_counts={"F": 9}), 3)


def _plan(m_values, initial=0):
    return CapacityPlan(0, len(m_values), {}, {}, {}, {}, {("F", t): v for t, v in enumerate(m_values)}, {}, {},
                        {"F": initial}, 0.0, {})


@pytest.mark.parametrize("m,initial,expected", [((3,) * 5, 0, 3), ((2, 2, 2), 2, 0), ((0, 4, 0), 0, 8)])
def test_plan_smoothness(m, initial, expected):
    plan = _plan(m, initial)
    plan.open.update({("F", t): True for t in range(len(m))})
    assert plan_smoothness(plan) == expected


def test_open_runs():
    assert open_runs({0: True, 1: True, 2: False, 3: True}) == [(0, 2), (3, 1)]
    assert open_runs({}) == []


def test_plan_round_trip():
    plan = solve_cap(single_site(Project("P", "S", 40, 1e6, 0, (10,))), 4)
    doc = plan_to_dict(plan)
    assert doc["schema"] == "mpc-capplan/1"
    assert plan_from_dict(doc) == plan


@pytest.mark.parametrize("seed", [1, 2, 3, 6])
def test_oracle_equivalence_both_engines(seed):
    inp = tiny_cap_input(seed)
    cm = build_cap_model(inp, 3)
    oracle = brute_force(cm.model, max_points=1 << 40, relaxed=cm.flow_vars)
    assert solve_cap(inp, 3).objective_value == pytest.approx(oracle.objective, abs=1e-6)
    assert solve_cap(inp, 3, NATIVE).objective_value == pytest.approx(oracle.objective, abs=1e-6)


def check_plan_invariants(plan: CapacityPlan, inp: CapInput) -> None:
    s = inp.scenario
    cap_month = s.cost_params.mpc_daily_rate * s.cost_params.production_days_per_week * 4
    C = s.rolling_config.commitment_months
    for (p, f, t), q in plan.assignment.items():
        assert plan.open[f, t], "assignment to a closed facility"
    for f in plan.facilities():
        for t in plan.months():
            load = sum(q for (p, g, tt), q in plan.assignment.items() if g == f and tt == t)
            assert load <= plan.mpc_target[f, t] * cap_month
            assert 0 <= plan.mpc_target[f, t] <= s.facility(f).max_fractals
        runs = open_runs({t: plan.open[f, t] for t in plan.months()})
        end = plan.start_month + plan.horizon
        for start, length in runs:
            was_open = inp.status(f).open and start == plan.start_month
            if start + length < end and not was_open:
                assert length >= C
    for p in plan.accepted:
        assert sum(q for (pp, _, _), q in plan.assignment.items() if pp == p) == inp.remaining(p)


@settings(max_examples=25, deadline=None, suppress_health_check=[HealthCheck.too_slow])
@given(st.integers(0, 10**6), st.integers(3, 6))
def test_plan_invariants(seed, horizon):
    inp = tiny_cap_input(seed)
    plan = solve_cap(inp, horizon)
    check_plan_invariants(plan, inp)
    assert plan.objective_value == pytest.approx(
        plan.cost_breakdown["revenue"] - sum(v for k, v in plan.cost_breakdown.items() if k != "revenue"))


@settings(max_examples=15, deadline=None, suppress_health_check=[HealthCheck.too_slow])
@given(st.integers(0, 10**6))
def test_adding_project_never_hurts(seed):
    inp = tiny_cap_input(seed)
    s = inp.scenario
    extra = Project("PX", s.projects[0].site, 20, 5000.0, 4, (10,))
    bigger = replace(inp, scenario=replace(s, projects=s.projects + (extra,)))
    assert solve_cap(bigger, 3).objective_value >= solve_cap(inp, 3).objective_value - 1e-6


def test_solution_is_feasible_point():
    inp = tiny_cap_input(4)
    cm = build_cap_model(inp, 3)
    from mpcplan.milp import solve_mip

    sol = solve_mip(cm.model)
    assert evaluate(cm.model, sol.values).feasible


@pytest.mark.parametrize("seed", [30, 34, 38])
def test_flow_relaxation_is_exact_on_micro_instances(seed):
    cm = build_cap_model(tiny_cap_input(seed), 3)
    full = brute_force(cm.model, max_points=1 << 40)
    relaxed = brute_force(cm.model, max_points=1 << 40, relaxed=cm.flow_vars)
    assert full.status == relaxed.status == "optimal"
    assert full.objective == pytest.approx(relaxed.objective, abs=1e-9)
