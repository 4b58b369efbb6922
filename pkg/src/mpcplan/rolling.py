"""Clocked rolling-horizon driver interleaving the CAP and RES solves."""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from typing import Any

from .capacity import (
    CapacityPlan,
    CapInput,
    FacilityStatus,
    PlanningError,
    build_cap_model,
    module_cost,
    solve_cap,
)
from .core import DAYS_PER_WEEK, RollingConfig, Scenario, ValidationError, scenario_to_dict, validate_scenario
from .milp import SolveLimits
from .resource import (
    ResInput,
    ResourcePlan,
    ResourcePlanningError,
    build_res_model,
    choose_erection_rate,
    cumulative_erection,
    solve_res,
)

TRACE_SCHEMA = "mpc-trace/1"

CAP_SOLVE, RES_SOLVE, MONTHLY_SYNC = "cap-solve", "res-solve", "monthly-sync"


class StepError(RuntimeError):
    def __init__(self, day: int, stage: str, cause: Exception):
        super().__init__(f"day {day}, {stage}: {cause}")
        self.day = day
        self.stage = stage
        self.cause = cause


class ConsistencyError(RuntimeError):
    pass


@dataclass
class EcosystemState:
    scenario: Scenario
    day: int = 0
    accepted: dict[str, int] = field(default_factory=dict)  # project -> acceptance month
    open_status: dict[str, bool] = field(default_factory=dict)
    commit_left: dict[str, int] = field(default_factory=dict)  # months after the current one forced open
    commissioned: set[str] = field(default_factory=set)
    mpc_positions: dict[str, int] = field(default_factory=dict)
    produced: dict[str, int] = field(default_factory=dict)
    erection_rate: dict[str, int] = field(default_factory=dict)
    allowed_pairs: set[tuple[str, str]] = field(default_factory=set)
    # what CAP sees; refreshed only by monthly_sync
    cap_remaining: dict[str, int] = field(default_factory=dict)
    cap_mpc_counts: dict[str, int] = field(default_factory=dict)
    last_cap: CapacityPlan | None = None
    last_res: ResourcePlan | None = None
    events: list[dict[str, Any]] = field(default_factory=list)
    commit_log: list[dict[str, Any]] = field(default_factory=list)

    def remaining(self, project_id: str) -> int:
        return self.scenario.project(project_id).modules_total - self.produced.get(project_id, 0)

    def rate(self, project_id: str) -> int:
        return self.erection_rate.get(project_id, min(self.scenario.project(project_id).erection_rates))

    def due_through(self, project_id: str, week: int) -> int:
        p = self.scenario.project(project_id)
        return cumulative_erection(p.modules_total, self.rate(project_id), p.target_start_week, week)

    def net_position(self, project_id: str, week: int) -> int:
        """Inventory (positive) or backlog (negative) at the start of ``week``."""
        return self.produced.get(project_id, 0) - self.due_through(project_id, week - 1)

    def clone(self) -> "EcosystemState":
        scenario = self.scenario
        dup = copy.deepcopy(
            EcosystemState(**{**self.__dict__, "scenario": None, "last_cap": None, "last_res": None,
                              "events": [], "commit_log": []}))
        dup.scenario = scenario
        dup.last_cap, dup.last_res = self.last_cap, self.last_res
        dup.events = list(self.events)
        dup.commit_log = list(self.commit_log)
        return dup


def initial_state(scenario: Scenario) -> EcosystemState:
    problems = validate_scenario(scenario)
    if scenario.rolling_config.end_day == 0:
        # a zero-length run is legal here and just yields an empty trace
        problems = [v for v in problems if v.path != "rolling_config.end_day"]
    if problems:
        raise ValidationError("; ".join(str(v) for v in problems))
    pos = {f.id: int(scenario.initial_mpc_positions.get(f.id, 0)) for f in scenario.facility_sites}
    return EcosystemState(
        scenario=scenario,
        open_status={fid: n > 0 for fid, n in pos.items()},
        commit_left=dict.fromkeys(pos, 0),
        mpc_positions=dict(pos),
        produced={p.id: 0 for p in scenario.projects},
        cap_remaining={p.id: p.modules_total for p in scenario.projects},
        cap_mpc_counts=dict(pos),
    )


# -- CAP branch ----------------------------------------------------------------


def _cap_input(state: EcosystemState, month: int) -> CapInput:
    status = {
        fid: FacilityStatus(open=state.open_status[fid], remaining_commitment=state.commit_left[fid],
                            commissioned=fid in state.commissioned)
        for fid in state.open_status
    }
    return CapInput(
        scenario=state.scenario,
        current_month=month,
        carried_unfinished_demand=dict(state.cap_remaining),
        current_mpc_counts=dict(state.cap_mpc_counts),
        current_open_status=status,
        already_accepted=frozenset(state.accepted),
    )


def _run_cap(state: EcosystemState, config: RollingConfig, limits: SolveLimits, dump=None) -> None:
    s = state.scenario
    month = state.day // config.days_per_month
    inp = _cap_input(state, month)
    if dump is not None:
        dump("cap", state.day, build_cap_model(inp, config.T_l_months).model)
    plan = solve_cap(inp, config.T_l_months, limits)
    newly = sorted(p for p, t in plan.accepted.items() if t == month)
    for pid in newly:
        state.accepted[pid] = month
    opened_now = {}
    for f in s.facility_sites:
        is_open = plan.open[f.id, month]
        if is_open and not state.open_status[f.id]:
            state.commit_left[f.id] = config.commitment_months - 1
        elif is_open:
            state.commit_left[f.id] = max(state.commit_left[f.id] - 1, 0)
        else:
            state.commit_left[f.id] = 0
        state.open_status[f.id] = is_open
        opened_now[f.id] = is_open
    commissioned = sorted(f for f, t in plan.commissioned.items() if t == month)
    state.commissioned.update(commissioned)
    state.allowed_pairs.update((p, f) for (p, f, _), q in plan.assignment.items() if q > 0)
    state.last_cap = plan
    mpcs = {f.id: plan.mpc_target[f.id, month] for f in s.facility_sites}
    costs = {
        "revenue": sum(s.project(p).revenue for p in newly),
        "commissioning": sum(s.facility(f).commissioning_cost for f in commissioned),
        "rent": sum(s.facility(f).monthly_rent for f, o in opened_now.items() if o),
    }
    state.events.append({
        "day": state.day,
        "kind": CAP_SOLVE,
        "status": plan.status,
        "objective": plan.objective_value,
        "committed": {
            "month": month,
            "accepted": newly,
            "open": dict(sorted(opened_now.items())),
            "commissioned": commissioned,
            "mpcs": dict(sorted(mpcs.items())),
            "fleet_total": sum(mpcs.values()),
            "assignment": [
                {"project": p, "facility": f, "modules": q}
                for (p, f, t), q in sorted(plan.assignment.items()) if t == month
            ],
            "costs": costs,
        },
    })
    state.commit_log.append({"stage": "cap", "day": state.day, "window_start": month,
                             "T": config.T_l_months, "L": 1, "released": config.T_l_months - 1})


# -- RES branch ----------------------------------------------------------------


def _open_forecast(state: EcosystemState, config: RollingConfig, week: int, horizon: int) -> dict:
    """Committed open status for the current month, the latest CAP plan's beyond it."""
    cur_month = week // config.weeks_per_month
    plan = state.last_cap
    out = {}
    for f in state.scenario.facility_sites:
        for w in range(week, week + horizon):
            m = w // config.weeks_per_month
            if m == cur_month or plan is None:
                out[f.id, w] = state.open_status[f.id]
            else:
                m = min(m, plan.start_month + plan.horizon - 1)
                out[f.id, w] = plan.open[f.id, m]
    return out


def _res_input(state: EcosystemState, config: RollingConfig, week: int) -> ResInput:
    active = [p for p in sorted(state.accepted) if state.remaining(p) > 0]
    return ResInput(
        scenario=state.scenario,
        current_week=week,
        open_facilities=_open_forecast(state, config, week, config.T_s_weeks),
        allowed_pairs=frozenset(state.allowed_pairs),
        mpc_positions=dict(state.mpc_positions),
        cap_fleet_guidance=dict(state.last_cap.mpc_target) if state.last_cap else {},
        remaining_demand={p: state.remaining(p) for p in active},
        chosen_erection_rate={p: state.rate(p) for p in active},
        inventory_start={p: max(state.net_position(p, week), 0) for p in active},
        backlog_start={p: max(-state.net_position(p, week), 0) for p in active},
    )


def _pick_rates(state: EcosystemState, config: RollingConfig, week: int, limits: SolveLimits) -> None:
    """Re-evaluate erection rates of accepted projects that have not started erecting."""
    s = state.scenario
    for pid in sorted(state.accepted):
        p = s.project(pid)
        if len(p.erection_rates) < 2 or p.target_start_week <= week or state.remaining(pid) <= 0:
            continue
        inp = _res_input(state, config, week)
        state.erection_rate[pid] = choose_erection_rate(p, inp, config.T_s_weeks, limits)


def _run_res(state: EcosystemState, config: RollingConfig, limits: SolveLimits, pick_rates: bool,
             dump=None) -> ResourcePlan:
    s = state.scenario
    cp = s.cost_params
    week = state.day // DAYS_PER_WEEK
    if pick_rates:
        _pick_rates(state, config, week, limits)
    inp = _res_input(state, config, week)
    if dump is not None:
        dump("res", state.day, build_res_model(inp, config.T_s_weeks).model)
    plan = solve_res(inp, config.T_s_weeks, limits)
    state.last_res = plan

    mpcs = {f.id: plan.mpc_location[f.id, week] for f in s.facility_sites}
    leases = {f.id: plan.leases[f.id, week] for f in s.facility_sites}
    returns = {f.id: plan.returns[f.id, week] for f in s.facility_sites}
    relocs = {(f, g): n for (f, g, w), n in plan.relocations.items() if w == week}
    production = {(p, f): q for (p, f, w), q in plan.production.items() if w == week}
    dist = {}
    for f, g in relocs:
        dist[f, g] = s.facility_distance(f, s.facility(g).location)

    costs = dict.fromkeys(("mpc_commission", "mpc_decommission", "mpc_rent", "relocation_transport",
                           "production", "transport", "distance_penalty", "storage", "lateness"), 0.0)
    costs["mpc_commission"] = cp.mpc_commission_cost * sum(leases.values())
    costs["mpc_decommission"] = cp.mpc_decommission_cost * sum(returns.values())
    costs["mpc_rent"] = cp.mpc_weekly_rent * sum(mpcs.values())
    costs["relocation_transport"] = sum(
        n * dist[k] * cp.trucks_per_mpc * cp.truck_cost_per_mile for k, n in relocs.items())
    for (p, f), q in production.items():
        unit_prod, unit_trans, unit_pen = module_cost(s, p, f)
        costs["production"] += unit_prod * q
        costs["transport"] += unit_trans * q
        costs["distance_penalty"] += unit_pen * q
        state.produced[p] += q
        if state.produced[p] > s.project(p).modules_total:
            raise ConsistencyError(f"project {p} overproduced at week {week}")

    inventory, backlog = {}, {}
    for pid in sorted(state.accepted):
        net = state.net_position(pid, week + 1)
        inventory[pid], backlog[pid] = max(net, 0), max(-net, 0)
    costs["storage"] = cp.storage_cost_per_module_week * sum(inventory.values())
    costs["lateness"] = cp.lateness_cost_per_module_week * sum(backlog.values())
    state.mpc_positions = dict(mpcs)

    state.events.append({
        "day": state.day,
        "kind": RES_SOLVE,
        "status": plan.status,
        "objective": plan.objective_value,
        "committed": {
            "week": week,
            "mpcs": dict(sorted(mpcs.items())),
            "leases": dict(sorted(leases.items())),
            "returns": dict(sorted(returns.items())),
            "relocations": [{"from": f, "to": g, "mpcs": n} for (f, g), n in sorted(relocs.items())],
            "production": [{"project": p, "facility": f, "modules": q} for (p, f), q in sorted(production.items())],
            "inventory": inventory,
            "backlog": backlog,
            "erection_rates": {p: state.rate(p) for p in sorted(state.accepted)},
            "costs": costs,
        },
    })
    state.commit_log.append({"stage": "res", "day": state.day, "window_start": week,
                             "T": config.T_s_weeks, "L": 1, "released": config.T_s_weeks - 1})
    return plan


def monthly_sync(state: EcosystemState, res_plan: ResourcePlan | None = None) -> EcosystemState:
    """Hand the realized demand and fleet over to the next CAP input."""
    s = state.scenario
    remaining = {}
    for p in s.projects:
        rem = state.remaining(p.id)
        if rem < 0:
            raise ConsistencyError(f"negative residual demand for {p.id}")
        remaining[p.id] = rem
    if res_plan is not None:
        week = res_plan.start_week
        positions = {f.id: res_plan.mpc_location[f.id, week] for f in s.facility_sites}
        if positions != state.mpc_positions:
            raise ConsistencyError("sync plan disagrees with the committed MPC positions")
    state.cap_remaining = remaining
    state.cap_mpc_counts = dict(state.mpc_positions)
    week = state.day // DAYS_PER_WEEK
    state.events.append({
        "day": state.day,
        "kind": MONTHLY_SYNC,
        "committed": {
            "remaining": dict(sorted(remaining.items())),
            "produced": dict(sorted(state.produced.items())),
            "net_position": {p: state.net_position(p, week + 1) for p in sorted(state.accepted)},
            "mpcs": dict(sorted(state.mpc_positions.items())),
        },
    })
    return state


def step(state: EcosystemState, config: RollingConfig, limits: SolveLimits, dump=None) -> EcosystemState:
    """Advance one tick; ``dump(stage, day, model)`` sees every model before it is solved."""
    if state.day >= config.end_day:
        raise ValueError(f"day {state.day} is not before end_day {config.end_day}")
    state = state.clone()
    t = state.day
    if t % config.S_l_days == 0:
        try:
            _run_cap(state, config, limits, dump)
        except (PlanningError, ValidationError) as exc:
            raise StepError(t, "cap", exc) from exc
    if t % config.S_s_days == 0:
        monthly = t % config.days_per_month == 0
        try:
            plan = _run_res(state, config, limits, pick_rates=monthly, dump=dump)
        except (ResourcePlanningError, ValidationError, ConsistencyError) as exc:
            raise StepError(t, "res", exc) from exc
        if monthly:
            try:
                monthly_sync(state, plan)
            except ConsistencyError as exc:
                raise StepError(t, "sync", exc) from exc
    state.day = t + config.tick_days
    return state


def config_dict(config: RollingConfig) -> dict[str, Any]:
    return {
        "tick_days": config.tick_days,
        "S_l_days": config.S_l_days,
        "S_s_days": config.S_s_days,
        "T_l_months": config.T_l_months,
        "T_s_weeks": config.T_s_weeks,
        "end_day": config.end_day,
        "commitment_months": config.commitment_months,
        "weeks_per_month": config.weeks_per_month,
        "days_per_month": config.days_per_month,
    }


def run(scenario: Scenario, limits: SolveLimits | None = None, progress=None, dump=None) -> dict[str, Any]:
    """Roll from day 0 to ``end_day`` and return the trace document."""
    limits = limits or SolveLimits()
    config = scenario.rolling_config
    state = initial_state(scenario)
    while state.day < config.end_day:
        n = len(state.events)
        state = step(state, config, limits, dump)
        if progress is not None:
            for e in state.events[n:]:
                progress(e)
    return trace_document(scenario, limits, state)


def trace_document(scenario: Scenario, limits: SolveLimits, state: EcosystemState) -> dict[str, Any]:
    return {
        "schema": TRACE_SCHEMA,
        "scenario": scenario.name,
        "seed": scenario.seed,
        "config": config_dict(scenario.rolling_config),
        "limits": {"max_nodes": limits.max_nodes, "max_seconds": limits.max_seconds,
                   "relative_gap_target": limits.relative_gap_target, "engine": limits.engine},
        "initial_mpcs": {f.id: int(scenario.initial_mpc_positions.get(f.id, 0)) for f in scenario.facility_sites},
        "modules_total": {p.id: p.modules_total for p in scenario.projects},
        "events": state.events,
        "commit_log": state.commit_log,
        "scenario_data": scenario_to_dict(scenario),
    }
