"""Monthly capacity-planning MIP: project selection, facility open periods,
project-to-facility assignment and MPC fleet targets."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Any, Mapping

from .core import (
    Scenario,
    ValidationError,
    check_schema,
    distance_penalty,
    validate_scenario,
    weekly_mpc_rate,
)
from .milp import (
    BINARY,
    EQ,
    INTEGER,
    LE,
    MAX,
    MilpModel,
    MipSolution,
    SolveLimits,
    solve_mip,
)

CAPPLAN_SCHEMA = "mpc-capplan/1"

COST_KEYS = (
    "commissioning",
    "rent",
    "mpc_commission",
    "mpc_decommission",
    "production",
    "transport",
    "distance_penalty",
)


class PlanningError(RuntimeError):
    pass


@dataclass(frozen=True)
class FacilityStatus:
    open: bool = False
    remaining_commitment: int = 0  # months from the current one that must stay open
    commissioned: bool = False  # candidate-new sites only: commissioning already paid


@dataclass(frozen=True)
class CapInput:
    scenario: Scenario
    current_month: int = 0
    carried_unfinished_demand: Mapping[str, int] = field(default_factory=dict)
    current_mpc_counts: Mapping[str, int] = field(default_factory=dict)
    current_open_status: Mapping[str, FacilityStatus] = field(default_factory=dict)
    already_accepted: frozenset[str] = frozenset()

    def remaining(self, project_id: str) -> int:
        if project_id in self.carried_unfinished_demand:
            return int(self.carried_unfinished_demand[project_id])
        return self.scenario.project(project_id).modules_total

    def status(self, facility_id: str) -> FacilityStatus:
        return self.current_open_status.get(facility_id, FacilityStatus())


def initial_cap_input(scenario: Scenario) -> CapInput:
    """Input for the very first solve: MPC-hosting existing sites count as open."""
    status = {}
    for f in scenario.facility_sites:
        hosting = scenario.initial_mpc_positions.get(f.id, 0) > 0
        status[f.id] = FacilityStatus(open=hosting)
    return CapInput(
        scenario=scenario,
        current_mpc_counts=dict(scenario.initial_mpc_positions),
        current_open_status=status,
    )


def validate_cap_input(inp: CapInput, horizon_months: int) -> None:
    s = inp.scenario
    problems = [str(v) for v in validate_scenario(s)]
    rc = s.rolling_config
    if horizon_months < rc.commitment_months:
        problems.append(f"horizon {horizon_months} shorter than commitment window {rc.commitment_months}")
    known_p = {p.id for p in s.projects}
    known_f = {f.id for f in s.facility_sites}
    for pid, rem in inp.carried_unfinished_demand.items():
        if pid not in known_p:
            problems.append(f"unfinished demand for unknown project {pid!r}")
        elif not 0 <= rem <= s.project(pid).modules_total:
            problems.append(f"remaining demand {rem} of {pid!r} outside [0, modules_total]")
    for pid in inp.already_accepted:
        if pid not in known_p:
            problems.append(f"accepted project {pid!r} unknown")
    for fid, count in inp.current_mpc_counts.items():
        if fid not in known_f:
            problems.append(f"MPC count for unknown facility {fid!r}")
        elif not 0 <= count <= s.facility(fid).max_fractals:
            problems.append(f"MPC count {count} at {fid!r} outside [0, max_fractals]")
    for fid in inp.current_open_status:
        if fid not in known_f:
            problems.append(f"open status for unknown facility {fid!r}")
    if problems:
        raise ValidationError("; ".join(problems))


def module_cost(scenario: Scenario, project_id: str, facility_id: str) -> tuple[float, float, float]:
    """Per-module (production, transport, distance penalty) cost of serving a project from a facility."""
    cp = scenario.cost_params
    d = scenario.facility_distance(facility_id, scenario.project(project_id).site)
    transport = d * cp.truck_cost_per_mile / cp.modules_per_truck
    return cp.production_cost_per_module, transport, distance_penalty(d, cp)


def due_month(project, scenario: Scenario, current_month: int, horizon: int) -> int:
    """Last horizon month (relative) in which the project's modules may be produced.

    That is the month in which erection at the slowest allowed rate ends; an
    overdue project, or one ending beyond the horizon, gets the whole horizon.
    """
    rc = scenario.rolling_config
    slowest = min(project.erection_rates)
    end_week = project.target_start_week + -(-project.modules_total // slowest) - 1
    rel = end_week // rc.weeks_per_month - current_month
    if rel < 0 or rel >= horizon:
        return horizon - 1
    return rel


@dataclass
class CapModel:
    """A built CAP model plus the variable index needed to read a solution back."""

    model: MilpModel
    inp: CapInput
    horizon: int
    y: dict[tuple[str, int], int]
    o: dict[tuple[str, int], int]
    w: dict[tuple[str, int], int]
    a: dict[tuple[str, str, int], int]
    m: dict[tuple[str, int], int]
    l: dict[tuple[str, int], int]
    r: dict[tuple[str, int], int]
    flow_vars: frozenset[int]  # a, l, r: totally unimodular once y, o, w, m are fixed


def build_cap_model(inp: CapInput, horizon_months: int, stretch_accepted: bool = False) -> CapModel:
    """Build the CAP MIP. ``stretch_accepted`` lets already-accepted projects use
    the whole horizon instead of their due-month window."""
    validate_cap_input(inp, horizon_months)
    s = inp.scenario
    cp = s.cost_params
    sl = s.strategy_limits
    C = s.rolling_config.commitment_months
    cap_month = weekly_mpc_rate(cp) * s.rolling_config.weeks_per_month
    H = horizon_months
    T = range(H)
    cm = inp.current_month
    md = MilpModel(name=f"CAP(month={cm}, T={H})")
    obj: dict[int, float] = {}

    def add_obj(vid: int, coef: float) -> None:
        if coef:
            obj[vid] = obj.get(vid, 0.0) + coef

    y: dict[tuple[str, int], int] = {}
    o: dict[tuple[str, int], int] = {}
    w: dict[tuple[str, int], int] = {}
    a: dict[tuple[str, str, int], int] = {}
    m: dict[tuple[str, int], int] = {}
    l: dict[tuple[str, int], int] = {}
    r: dict[tuple[str, int], int] = {}

    # projects in play: accepted with work left, or not yet accepted and acceptable within the horizon
    accepted = [p for p in s.projects if p.id in inp.already_accepted and inp.remaining(p.id) > 0]
    candidates = [
        p for p in s.projects
        if p.id not in inp.already_accepted and p.earliest_accept_month <= cm + H - 1 and inp.remaining(p.id) > 0
    ]
    projects = accepted + candidates
    first_month = {p.id: 0 for p in accepted}
    last_month = {p.id: due_month(p, s, cm, H) for p in projects}
    if stretch_accepted:
        last_month.update({p.id: H - 1 for p in accepted})
    for p in candidates:
        first_month[p.id] = max(0, p.earliest_accept_month - cm)
    candidates = [p for p in candidates if first_month[p.id] <= last_month[p.id]]
    projects = accepted + candidates
    for p in candidates:
        for t in range(first_month[p.id], last_month[p.id] + 1):
            y[p.id, t] = md.add_var(f"y[{p.id},{t}]", BINARY)
            add_obj(y[p.id, t], p.revenue)

    for f in s.facility_sites:
        st = inp.status(f.id)
        needs_commission = f.kind == "candidate-new" and not st.commissioned
        for t in T:
            fixed_open = t < st.remaining_commitment
            o[f.id, t] = md.add_var(f"o[{f.id},{t}]", BINARY, lb=1 if fixed_open else 0)
            add_obj(o[f.id, t], -f.monthly_rent)
            if needs_commission:
                w[f.id, t] = md.add_var(f"w[{f.id},{t}]", BINARY)
                add_obj(w[f.id, t], -f.commissioning_cost)
            m[f.id, t] = md.add_var(f"m[{f.id},{t}]", INTEGER, 0, f.max_fractals)
            l[f.id, t] = md.add_var(f"l[{f.id},{t}]", INTEGER, 0, f.max_fractals)
            r[f.id, t] = md.add_var(f"r[{f.id},{t}]", INTEGER, 0, f.max_fractals)
            add_obj(l[f.id, t], -cp.mpc_commission_cost)
            add_obj(r[f.id, t], -cp.mpc_decommission_cost)
        for p in projects:
            rem = inp.remaining(p.id)
            unit = sum(module_cost(s, p.id, f.id))
            for t in range(first_month[p.id], last_month[p.id] + 1):
                ub = min(rem, f.max_fractals * cap_month)
                a[p.id, f.id, t] = md.add_var(f"a[{p.id},{f.id},{t}]", INTEGER, 0, ub)
                add_obj(a[p.id, f.id, t], -unit)

    # (1) accept at most once
    for p in candidates:
        md.add_constraint({y[p.id, t]: 1 for t in range(first_month[p.id], last_month[p.id] + 1)}, LE, 1,
                          f"accept_once[{p.id}]")

    for f in s.facility_sites:
        st = inp.status(f.id)
        prev_open = 1 if st.open else 0
        for t in T:
            # (2) assignment only to open facilities
            for p in projects:
                if (p.id, f.id, t) in a:
                    av = a[p.id, f.id, t]
                    ub = md.variables[av].ub
                    md.add_constraint({av: 1, o[f.id, t]: -ub}, LE, 0, f"assign_open[{p.id},{f.id},{t}]")
            # (3) monthly throughput of the located fleet
            terms = {a[p.id, f.id, t]: 1 for p in projects if (p.id, f.id, t) in a}
            terms[m[f.id, t]] = -cap_month
            md.add_constraint(terms, LE, 0, f"capacity[{f.id},{t}]")
            # (4) fleet only at open facilities, at most max_fractals
            md.add_constraint({m[f.id, t]: 1, o[f.id, t]: -f.max_fractals}, LE, 0, f"fleet_open[{f.id},{t}]")
            # (5) fleet flow
            if t == 0:
                md.add_constraint({m[f.id, 0]: 1, l[f.id, 0]: -1, r[f.id, 0]: 1}, EQ,
                                  inp.current_mpc_counts.get(f.id, 0), f"fleet_flow[{f.id},0]")
            else:
                md.add_constraint({m[f.id, t]: 1, m[f.id, t - 1]: -1, l[f.id, t]: -1, r[f.id, t]: 1}, EQ, 0,
                                  f"fleet_flow[{f.id},{t}]")
            # (6) an opening in month t keeps the site open for the commitment window
            for j in range(1, C):
                if t + j >= H:
                    break
                if t == 0:
                    md.add_constraint({o[f.id, 0]: 1, o[f.id, j]: -1}, LE, prev_open, f"commit[{f.id},0,{j}]")
                else:
                    md.add_constraint({o[f.id, t]: 1, o[f.id, t - 1]: -1, o[f.id, t + j]: -1}, LE, 0,
                                      f"commit[{f.id},{t},{j}]")
        # (7) candidate-new sites open only after their single commissioning
        if (f.id, 0) in w:
            for t in T:
                terms = {o[f.id, t]: 1}
                for tau in range(t + 1):
                    terms[w[f.id, tau]] = -1
                md.add_constraint(terms, LE, 0, f"commissioned[{f.id},{t}]")
            md.add_constraint({w[f.id, t]: 1 for t in T}, LE, 1, f"commission_once[{f.id}]")

    # (8) demand completion, no production before acceptance
    for p in projects:
        rem = inp.remaining(p.id)
        window = range(first_month[p.id], last_month[p.id] + 1)
        terms = {a[p.id, f.id, t]: 1 for f in s.facility_sites for t in window}
        if p.id in inp.already_accepted:
            md.add_constraint(terms, EQ, rem, f"complete[{p.id}]")
            continue
        for t in window:
            terms[y[p.id, t]] = -rem
        md.add_constraint(terms, EQ, 0, f"complete[{p.id}]")
        for t in window:
            row = {a[p.id, f.id, t]: 1 for f in s.facility_sites}
            for tau in range(first_month[p.id], t + 1):
                row[y[p.id, tau]] = -rem
            md.add_constraint(row, LE, 0, f"after_accept[{p.id},{t}]")

    # (9) strategy limits
    for t in T:
        ys = {y[p.id, t]: 1 for p in candidates if (p.id, t) in y}
        if ys:
            md.add_constraint(ys, LE, sl.max_new_projects_per_month, f"max_new_projects[{t}]")
        ws = {w[f.id, t]: 1 for f in s.facility_sites if (f.id, t) in w}
        if ws:
            md.add_constraint(ws, LE, sl.max_new_facilities_per_month, f"max_new_facilities[{t}]")
        md.add_constraint({o[f.id, t]: 1 for f in s.facility_sites}, LE, sl.max_open_facilities,
                          f"max_open[{t}]")

    md.set_objective(obj, MAX)
    flow = frozenset(list(a.values()) + list(l.values()) + list(r.values()))
    return CapModel(md, inp, H, y, o, w, a, m, l, r, flow)


@dataclass
class CapacityPlan:
    start_month: int
    horizon: int
    accepted: dict[str, int]  # newly accepted project -> absolute month
    open: dict[tuple[str, int], bool]
    commissioned: dict[str, int]  # candidate-new facility -> commissioning month
    assignment: dict[tuple[str, str, int], int]
    mpc_target: dict[tuple[str, int], int]
    leases: dict[tuple[str, int], int]
    returns: dict[tuple[str, int], int]
    initial_mpc: dict[str, int]
    objective_value: float
    cost_breakdown: dict[str, float]
    status: str = "optimal"
    bound_gap: float = 0.0
    nodes_explored: int = 0

    @property
    def revenue(self) -> float:
        return self.cost_breakdown["revenue"]

    def facilities(self) -> list[str]:
        return sorted({f for f, _ in self.open})

    def months(self) -> range:
        return range(self.start_month, self.start_month + self.horizon)

    def fleet(self, month: int) -> int:
        return sum(v for (f, t), v in self.mpc_target.items() if t == month)


def extract_plan(cm: CapModel, sol: MipSolution) -> CapacityPlan:
    s = cm.inp.scenario
    start = cm.inp.current_month
    v = sol.values

    def iv(vid):
        return int(round(v[vid]))

    accepted = {pid: start + t for (pid, t), vid in cm.y.items() if iv(vid) == 1}
    opened = {(fid, start + t): iv(vid) == 1 for (fid, t), vid in cm.o.items()}
    commissioned = {fid: start + t for (fid, t), vid in cm.w.items() if iv(vid) == 1}
    assignment = {(p, f, start + t): iv(vid) for (p, f, t), vid in cm.a.items() if iv(vid) > 0}
    target = {(f, start + t): iv(vid) for (f, t), vid in cm.m.items()}
    leases = {(f, start + t): iv(vid) for (f, t), vid in cm.l.items()}
    returns = {(f, start + t): iv(vid) for (f, t), vid in cm.r.items()}

    cp = s.cost_params
    costs = dict.fromkeys(("revenue",) + COST_KEYS, 0.0)
    costs["revenue"] = sum(s.project(p).revenue for p in accepted)
    costs["commissioning"] = sum(s.facility(f).commissioning_cost for f in commissioned)
    costs["rent"] = sum(s.facility(f).monthly_rent for (f, _), is_open in opened.items() if is_open)
    costs["mpc_commission"] = cp.mpc_commission_cost * sum(leases.values())
    costs["mpc_decommission"] = cp.mpc_decommission_cost * sum(returns.values())
    for (p, f, _), q in assignment.items():
        prod, trans, pen = module_cost(s, p, f)
        costs["production"] += prod * q
        costs["transport"] += trans * q
        costs["distance_penalty"] += pen * q
    objective = costs["revenue"] - sum(costs[k] for k in COST_KEYS)
    return CapacityPlan(
        start_month=start,
        horizon=cm.horizon,
        accepted=accepted,
        open=opened,
        commissioned=commissioned,
        assignment=assignment,
        mpc_target=target,
        leases=leases,
        returns=returns,
        initial_mpc={f.id: int(cm.inp.current_mpc_counts.get(f.id, 0)) for f in s.facility_sites},
        objective_value=objective,
        cost_breakdown=costs,
        status=sol.status,
        bound_gap=sol.bound_gap,
        nodes_explored=sol.nodes_explored,
    )


def _diagnose_infeasible(inp: CapInput, horizon: int, limits: SolveLimits) -> str:
    loose = replace(inp.scenario, strategy_limits=replace(
        inp.scenario.strategy_limits,
        max_new_projects_per_month=10**6, max_new_facilities_per_month=10**6, max_open_facilities=10**6))
    relaxed = replace(inp, scenario=loose)
    sol = solve_mip(build_cap_model(relaxed, horizon).model, limits)
    if sol.status != "infeasible":
        sl = inp.scenario.strategy_limits
        return (f"strategy limits too tight for committed demand "
                f"(max_open_facilities={sl.max_open_facilities}, "
                f"max_new_facilities_per_month={sl.max_new_facilities_per_month})")
    return "committed demand exceeds the fleet capacity reachable within the horizon"


def solve_cap(inp: CapInput, horizon: int, limits: SolveLimits | None = None) -> CapacityPlan:
    limits = limits or SolveLimits()
    cm = build_cap_model(inp, horizon)
    sol = solve_mip(cm.model, limits)
    if sol.status == "infeasible" and inp.already_accepted:
        # carried work no longer fits its due windows; let it run late
        cm = build_cap_model(inp, horizon, stretch_accepted=True)
        sol = solve_mip(cm.model, limits)
    if sol.status == "infeasible":
        raise PlanningError(f"CAP month {inp.current_month} infeasible: {_diagnose_infeasible(inp, horizon, limits)}")
    if not sol.has_solution:
        raise PlanningError(f"CAP month {inp.current_month}: no feasible plan found within limits")
    return extract_plan(cm, sol)


def plan_smoothness(plan: CapacityPlan) -> int:
    """Total magnitude of month-to-month fleet changes, starting from the initial fleet."""
    total = 0
    for f in plan.facilities():
        prev = plan.initial_mpc.get(f, 0)
        for t in plan.months():
            cur = plan.mpc_target.get((f, t), 0)
            total += abs(cur - prev)
            prev = cur
    return total


def open_runs(open_by_month: Mapping[int, bool]) -> list[tuple[int, int]]:
    """Maximal runs of consecutive open months as (first month, length)."""
    runs = []
    start = None
    months = sorted(open_by_month)
    for t in months:
        if open_by_month[t] and start is None:
            start = t
        if not open_by_month[t] and start is not None:
            runs.append((start, t - start))
            start = None
    if start is not None:
        runs.append((start, months[-1] + 1 - start))
    return runs


# -- serialization -----------------------------------------------------------


def plan_to_dict(plan: CapacityPlan) -> dict[str, Any]:
    return {
        "schema": CAPPLAN_SCHEMA,
        "start_month": plan.start_month,
        "horizon": plan.horizon,
        "status": plan.status,
        "bound_gap": plan.bound_gap,
        "nodes_explored": plan.nodes_explored,
        "accepted": [{"project": p, "month": t} for p, t in sorted(plan.accepted.items())],
        "commissioned": [{"facility": f, "month": t} for f, t in sorted(plan.commissioned.items())],
        "facility_months": [
            {
                "facility": f,
                "month": t,
                "open": plan.open[(f, t)],
                "mpc_target": plan.mpc_target.get((f, t), 0),
                "leases": plan.leases.get((f, t), 0),
                "returns": plan.returns.get((f, t), 0),
            }
            for f, t in sorted(plan.open)
        ],
        "assignment": [
            {"project": p, "facility": f, "month": t, "modules": q}
            for (p, f, t), q in sorted(plan.assignment.items())
        ],
        "initial_mpc": dict(sorted(plan.initial_mpc.items())),
        "objective_value": plan.objective_value,
        "cost_breakdown": dict(plan.cost_breakdown),
    }


def plan_from_dict(doc: Mapping[str, Any]) -> CapacityPlan:
    check_schema(doc, CAPPLAN_SCHEMA)
    fm = doc["facility_months"]
    return CapacityPlan(
        start_month=doc["start_month"],
        horizon=doc["horizon"],
        accepted={e["project"]: e["month"] for e in doc["accepted"]},
        open={(e["facility"], e["month"]): e["open"] for e in fm},
        commissioned={e["facility"]: e["month"] for e in doc["commissioned"]},
        assignment={(e["project"], e["facility"], e["month"]): e["modules"] for e in doc["assignment"]},
        mpc_target={(e["facility"], e["month"]): e["mpc_target"] for e in fm},
        leases={(e["facility"], e["month"]): e["leases"] for e in fm},
        returns={(e["facility"], e["month"]): e["returns"] for e in fm},
        initial_mpc=dict(doc["initial_mpc"]),
        objective_value=doc["objective_value"],
        cost_breakdown=dict(doc["cost_breakdown"]),
        status=doc.get("status", "optimal"),
        bound_gap=doc.get("bound_gap", 0.0),
        nodes_explored=doc.get("nodes_explored", 0),
    )
