from __future__ import annotations

import json
from dataclasses import replace

import pytest
from hypothesis import given, settings, strategies as st

from mpcplan.core import CostParams, FacilitySite, Location, Project, RollingConfig, validate_scenario
from mpcplan.harness import (
    COST_CATEGORIES,
    CSV_COLUMNS,
    ExtractionError,
    GenSpec,
    cost_report,
    fixed_rate_baseline,
    generate_scenario,
    genspec_from_dict,
    genspec_to_dict,
    monthly_max,
    mpc_series,
    nearest_facility_miles,
    reference_genspec,
    reference_scenario,
    series_csv,
    total_variation,
)
from mpcplan.rolling import TRACE_SCHEMA

from conftest import make_scenario


def test_generation_deterministic():
    spec = GenSpec(seed=99)
    assert generate_scenario(spec) == generate_scenario(spec)
    assert generate_scenario(spec) != generate_scenario(replace(spec, seed=100))


def test_zero_projects_valid():
    s = generate_scenario(GenSpec(n_projects=0))
    assert s.projects == () and validate_scenario(s) == []


def test_desk_scale_rolling_config():
    rc = generate_scenario(reference_genspec()).rolling_config
    assert (rc.end_day, rc.T_l_months, rc.T_s_weeks, rc.S_l_days, rc.S_s_days) == (560, 12, 13, 28, 7)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 6), st.integers(0, 15))
def test_generated_scenarios_valid_and_clustered(seed, nf, npj):
    spec = GenSpec(seed=seed, n_facilities=nf, n_existing=min(2, nf), n_projects=npj)
    s = generate_scenario(spec)
    assert validate_scenario(s) == []
    for p in s.projects:
        assert nearest_facility_miles(s, p) <= s.cost_params.distance_threshold_x


def test_genspec_round_trip_and_check():
    spec = reference_genspec()
    doc = json.loads(json.dumps(genspec_to_dict(spec)))
    assert genspec_from_dict(doc) == spec
    with pytest.raises(Exception):
        generate_scenario(replace(spec, demand_range=(10, 5)))


def test_bundled_reference_matches_generator():
    assert reference_scenario() == generate_scenario(reference_genspec())
    ref = reference_scenario()
    assert len(ref.facility_sites) <= 6 and len(ref.projects) <= 15


def baseline_scenario(projects):
    return make_scenario(
        locations=[Location("S", 0, 0)],
        projects=projects,
        rolling=RollingConfig(end_day=70),
        cost=CostParams(mpc_daily_rate=2, production_days_per_week=5),
    )


def test_baseline_single_project():
    # 8/day over 5 days = 40/week; 80 modules -> 2 active weeks of ceil(8/2) = 4 MPCs
    series = fixed_rate_baseline(baseline_scenario([Project("A", "S", 80, 1, 2, (10,))]), 8)
    assert series == [0, 0, 4, 4, 0, 0, 0, 0, 0, 0]


def test_baseline_overlap_and_empty():
    two = baseline_scenario([Project("A", "S", 80, 1, 2, (10,)), Project("B", "S", 120, 1, 3, (10,))])
    assert fixed_rate_baseline(two, 8)[:6] == [0, 0, 4, 8, 4, 4]
    assert fixed_rate_baseline(baseline_scenario([]), 8) == [0] * 10
    with pytest.raises(ValueError):
        fixed_rate_baseline(two, 0)


def test_monthly_helpers():
    assert monthly_max([1, 3, 2, 0, 5, 5], 4) == [3, 5]
    assert total_variation([2, 2, 5, 1]) == 2 + 3 + 4
    assert total_variation([2, 2], start=2) == 0


def fake_trace(production, located=3, end_day=7, weekly_rate_events=1):
    events = [
        {"day": 0, "kind": "cap-solve", "committed": {"fleet_total": 5, "costs": {"revenue": 1000.0}}},
        {"day": 0, "kind": "res-solve", "committed": {
            "week": 0, "mpcs": {"F": located},
            "production": [{"project": "P", "facility": "F", "modules": production}] if production else [],
            "costs": {"mpc_commission": 500.0}}},
    ]
    return {"schema": TRACE_SCHEMA, "events": events,
            "config": {"end_day": end_day, "S_l_days": 28, "S_s_days": 7, "days_per_month": 28,
                       "weeks_per_month": 4}}


SERIES_SCENARIO = make_scenario(locations=[Location("S", 0, 0)], rolling=RollingConfig(end_day=7),
                                facilities=[FacilitySite("F", "S", "existing")])


@pytest.mark.parametrize("production,on_duty", [(0, 0), (10, 1), (11, 2)])
def test_series_on_duty(production, on_duty):
    (pt,) = mpc_series(fake_trace(production), SERIES_SCENARIO)
    assert (pt.res_mpcs, pt.on_duty_mpcs, pt.idle_mpcs, pt.cap_estimate_mpcs) == (3, on_duty, 3 - on_duty, 5)


def test_series_rejects_truncated_and_inconsistent():
    with pytest.raises(ExtractionError, match="truncated"):
        mpc_series(fake_trace(0, end_day=14), SERIES_SCENARIO)
    with pytest.raises(ExtractionError):
        mpc_series({"schema": TRACE_SCHEMA, "events": []}, SERIES_SCENARIO)
    with pytest.raises(ExtractionError):
        mpc_series({"schema": "mpc-trace/0"}, SERIES_SCENARIO)
    with pytest.raises(ExtractionError, match="on-duty"):
        mpc_series(fake_trace(31, located=3), SERIES_SCENARIO)


def test_csv_layout():
    text = series_csv(mpc_series(fake_trace(10), SERIES_SCENARIO))
    assert text.splitlines() == [",".join(CSV_COLUMNS), "0,0,5,3,1,2"]


def test_cost_report_examples():
    empty = cost_report({"events": []})
    assert empty.total == 0 and set(empty.categories) == set(COST_CATEGORIES)
    rep = cost_report(fake_trace(0))
    assert rep.categories["mpc_commission"] == 500
    assert sum(v for k, v in rep.categories.items() if k != "mpc_commission") == 0
    assert rep.revenue == 1000 and rep.profit == 500
    assert rep.to_dict()["schema"] == "mpc-costs/1"
    bad = fake_trace(0)
    bad["events"][1]["committed"]["costs"]["bribes"] = 1.0
    with pytest.raises(ExtractionError):
        cost_report(bad)


@given(st.lists(st.dictionaries(st.sampled_from(COST_CATEGORIES), st.floats(0, 1e6)), max_size=20))
def test_cost_report_reconciles(cost_dicts):
    trace = {"events": [{"day": i, "kind": "res-solve", "committed": {"costs": c}} for i, c in enumerate(cost_dicts)]}
    rep = cost_report(trace)
    assert sum(rep.categories.values()) == pytest.approx(rep.total, rel=1e-12, abs=1e-6)
