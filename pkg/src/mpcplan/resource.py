"""Weekly resource-deployment MIP: MPC location, relocation, lease/return,
production, inventory and backlog against project erection schedules."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Any, Iterable, Mapping

from .core import Scenario, ValidationError, check_schema, distance, weekly_mpc_rate
from .milp import (
    CONTINUOUS,
    EQ,
    INTEGER,
    LE,
    MIN,
    MilpModel,
    MipSolution,
    SolveLimits,
    solve_mip,
)

RESPLAN_SCHEMA = "mpc-resplan/1"

COST_KEYS = ("storage", "lateness", "relocation_transport", "commission", "decommission", "rent")


class ResourcePlanningError(RuntimeError):
    pass


def cumulative_erection(total: int, rate: int, start_week: int, week: int) -> int:
    """Modules scheduled for erection in weeks ``start_week .. week`` inclusive."""
    if week < start_week or total <= 0:
        return 0
    return min(total, rate * (week - start_week + 1))


def erection_demand(project, rate: int, week: int, remaining: int | None = None) -> int:
    """Modules the site erects in ``week`` under a constant-rate schedule.

    ``remaining`` is the size of the schedule (defaults to the project's
    total demand); the schedule starts at the project's target start week.
    """
    if rate < 1:
        raise ValueError("erection rate must be >= 1")
    total = project.modules_total if remaining is None else remaining
    start = project.target_start_week
    return cumulative_erection(total, rate, start, week) - cumulative_erection(total, rate, start, week - 1)


def relocation_arcs(facilities: Iterable, scenario: Scenario, limit: float) -> list[tuple[str, str, float]]:
    """Ordered facility pairs within ``limit`` miles of each other."""
    if limit < 0:
        raise ValueError("relocation limit must be >= 0")
    facs = list(facilities)
    arcs = []
    for f in facs:
        for g in facs:
            if f.id == g.id:
                continue
            d = distance(f.location, g.location, scenario)
            if d <= limit:
                arcs.append((f.id, g.id, d))
    return arcs


@dataclass(frozen=True)
class ResInput:
    scenario: Scenario
    current_week: int = 0
    open_facilities: Mapping[tuple[str, int], bool] = field(default_factory=dict)  # (facility, abs week)
    allowed_pairs: frozenset[tuple[str, str]] = frozenset()  # (project, facility)
    mpc_positions: Mapping[str, int] = field(default_factory=dict)
    cap_fleet_guidance: Mapping[tuple[str, int], int] = field(default_factory=dict)
    remaining_demand: Mapping[str, int] = field(default_factory=dict)
    chosen_erection_rate: Mapping[str, int] = field(default_factory=dict)
    inventory_start: Mapping[str, int] = field(default_factory=dict)
    backlog_start: Mapping[str, int] = field(default_factory=dict)
    relocation_limit: float | None = None  # overrides cost_params.relocation_distance_limit

    def is_open(self, facility_id: str, week: int) -> bool:
        return bool(self.open_facilities.get((facility_id, week), False))

    def rate(self, project_id: str) -> int:
        if project_id in self.chosen_erection_rate:
            return int(self.chosen_erection_rate[project_id])
        return min(self.scenario.project(project_id).erection_rates)

    def limit(self) -> float:
        if self.relocation_limit is not None:
            return self.relocation_limit
        return self.scenario.cost_params.relocation_distance_limit


def validate_res_input(inp: ResInput, horizon_weeks: int) -> None:
    s = inp.scenario
    problems = []
    if horizon_weeks < 1:
        problems.append("horizon must be >= 1 week")
    known_p = {p.id for p in s.projects}
    known_f = {f.id for f in s.facility_sites}
    for fid, count in inp.mpc_positions.items():
        if fid not in known_f:
            problems.append(f"MPC position at unknown facility {fid!r}")
        elif not 0 <= count <= s.facility(fid).max_fractals:
            problems.append(f"{count} MPCs at {fid!r} outside [0, max_fractals]")
    for pid, rem in inp.remaining_demand.items():
        if pid not in known_p:
            problems.append(f"remaining demand for unknown project {pid!r}")
        elif rem < 0:
            problems.append(f"remaining demand of {pid!r} is negative")
    for pid, fid in inp.allowed_pairs:
        if pid not in known_p or fid not in known_f:
            problems.append(f"allowed pair ({pid!r}, {fid!r}) references unknown ids")
    for pid, rate in inp.chosen_erection_rate.items():
        if pid not in known_p:
            problems.append(f"erection rate for unknown project {pid!r}")
        elif rate < 1:
            problems.append(f"erection rate of {pid!r} must be >= 1")
    for name in ("inventory_start", "backlog_start"):
        for pid, q in getattr(inp, name).items():
            if q < 0:
                problems.append(f"{name}[{pid}] is negative")
    if problems:
        raise ValidationError("; ".join(problems))


@dataclass
class ResModel:
    model: MilpModel
    inp: ResInput
    horizon: int
    projects: list[str]
    demand: dict[tuple[str, int], int]
    arcs: list[tuple[str, str, float]]
    u: dict[tuple[str, int], int]
    l: dict[tuple[str, int], int]
    r: dict[tuple[str, int], int]
    reloc: dict[tuple[str, str, int], int]
    prod: dict[tuple[str, str, int], int]
    s: dict[tuple[str, int], int]
    b: dict[tuple[str, int], int]
    flow_vars: frozenset[int]  # everything except u: totally unimodular once u is fixed (single project)


def build_res_model(inp: ResInput, horizon_weeks: int) -> ResModel:
    validate_res_input(inp, horizon_weeks)
    sc = inp.scenario
    cp = sc.cost_params
    rate = weekly_mpc_rate(cp)
    H = horizon_weeks
    cw = inp.current_week
    md = MilpModel(name=f"RES(week={cw}, T={H})")
    obj: dict[int, float] = {}

    def add_obj(vid, coef):
        if coef:
            obj[vid] = obj.get(vid, 0.0) + coef

    projects = sorted(pid for pid, rem in inp.remaining_demand.items() if rem > 0)
    demand = {}
    for pid in projects:
        p = sc.project(pid)
        for w in range(H):
            demand[pid, w] = erection_demand(p, inp.rate(pid), cw + w)

    facs = list(sc.facility_sites)
    arcs = relocation_arcs(facs, sc, inp.limit())
    u, l, r, s, b = {}, {}, {}, {}, {}
    reloc, prod = {}, {}
    for f in facs:
        for w in range(H):
            cap = f.max_fractals if inp.is_open(f.id, cw + w) else 0
            u[f.id, w] = md.add_var(f"u[{f.id},{w}]", INTEGER, 0, cap)
            l[f.id, w] = md.add_var(f"l[{f.id},{w}]", INTEGER, 0, f.max_fractals)
            r[f.id, w] = md.add_var(f"r[{f.id},{w}]", INTEGER, 0, f.max_fractals)
            add_obj(u[f.id, w], cp.mpc_weekly_rent)
            add_obj(l[f.id, w], cp.mpc_commission_cost)
            add_obj(r[f.id, w], cp.mpc_decommission_cost)
    max_f = {f.id: f.max_fractals for f in facs}
    for fid, gid, d in arcs:
        for w in range(H):
            if not inp.is_open(gid, cw + w):
                continue
            reloc[fid, gid, w] = md.add_var(f"reloc[{fid},{gid},{w}]", INTEGER, 0, min(max_f[fid], max_f[gid]))
            add_obj(reloc[fid, gid, w], d * cp.trucks_per_mpc * cp.truck_cost_per_mile)
    for pid in projects:
        rem = int(inp.remaining_demand[pid])
        s0 = int(inp.inventory_start.get(pid, 0))
        b0 = int(inp.backlog_start.get(pid, 0))
        due = sum(demand[pid, w] for w in range(H))
        for w in range(H):
            for f in facs:
                if (pid, f.id) in inp.allowed_pairs and inp.is_open(f.id, cw + w):
                    prod[pid, f.id, w] = md.add_var(f"prod[{pid},{f.id},{w}]", INTEGER, 0,
                                                    min(rem, rate * f.max_fractals))
            s[pid, w] = md.add_var(f"s[{pid},{w}]", CONTINUOUS, 0, s0 + rem)
            b[pid, w] = md.add_var(f"b[{pid},{w}]", CONTINUOUS, 0, b0 + due)
            add_obj(s[pid, w], cp.storage_cost_per_module_week)
            add_obj(b[pid, w], cp.lateness_cost_per_module_week)

    for f in facs:
        for w in range(H):
            terms = {u[f.id, w]: 1, l[f.id, w]: -1, r[f.id, w]: 1}
            for (a, g, ww), vid in reloc.items():
                if ww != w:
                    continue
                if g == f.id:
                    terms[vid] = terms.get(vid, 0) - 1
                elif a == f.id:
                    terms[vid] = terms.get(vid, 0) + 1
            if w == 0:
                md.add_constraint(terms, EQ, int(inp.mpc_positions.get(f.id, 0)), f"flow[{f.id},0]")
            else:
                terms[u[f.id, w - 1]] = -1
                md.add_constraint(terms, EQ, 0, f"flow[{f.id},{w}]")
            cap_terms = {vid: 1 for (pid, fid, ww), vid in prod.items() if fid == f.id and ww == w}
            if cap_terms:
                cap_terms[u[f.id, w]] = -rate
                md.add_constraint(cap_terms, LE, 0, f"capacity[{f.id},{w}]")

    for pid in projects:
        s0 = int(inp.inventory_start.get(pid, 0))
        b0 = int(inp.backlog_start.get(pid, 0))
        for w in range(H):
            terms = {s[pid, w]: 1, b[pid, w]: -1}
            for f in facs:
                if (pid, f.id, w) in prod:
                    terms[prod[pid, f.id, w]] = -1
            if w == 0:
                md.add_constraint(terms, EQ, s0 - b0 - demand[pid, 0], f"balance[{pid},0]")
            else:
                terms[s[pid, w - 1]] = -1
                terms[b[pid, w - 1]] = 1
                md.add_constraint(terms, EQ, -demand[pid, w], f"balance[{pid},{w}]")
        total = {vid: 1 for (p, _, _), vid in prod.items() if p == pid}
        if total:
            md.add_constraint(total, LE, int(inp.remaining_demand[pid]), f"total[{pid}]")

    md.set_objective(obj, MIN)
    flow = frozenset(list(l.values()) + list(r.values()) + list(reloc.values()) + list(prod.values()))
    return ResModel(md, inp, H, projects, demand, arcs, u, l, r, reloc, prod, s, b, flow)


@dataclass
class ResourcePlan:
    start_week: int
    horizon: int
    mpc_location: dict[tuple[str, int], int]
    relocations: dict[tuple[str, str, int], int]
    leases: dict[tuple[str, int], int]
    returns: dict[tuple[str, int], int]
    production: dict[tuple[str, str, int], int]
    inventory: dict[tuple[str, int], float]
    backlog: dict[tuple[str, int], float]
    demand: dict[tuple[str, int], int]
    initial_positions: dict[str, int]
    erection_rates: dict[str, int]
    objective_value: float
    cost_breakdown: dict[str, float]
    status: str = "optimal"
    bound_gap: float = 0.0
    nodes_explored: int = 0

    def weeks(self) -> range:
        return range(self.start_week, self.start_week + self.horizon)

    def facilities(self) -> list[str]:
        return sorted({f for f, _ in self.mpc_location})

    def fleet(self, week: int) -> int:
        return sum(v for (f, w), v in self.mpc_location.items() if w == week)

    def produced_at(self, facility_id: str, week: int) -> int:
        return sum(q for (p, f, w), q in self.production.items() if f == facility_id and w == week)


def extract_res_plan(rm: ResModel, sol: MipSolution) -> ResourcePlan:
    inp = rm.inp
    sc = inp.scenario
    cp = sc.cost_params
    cw = inp.current_week
    v = sol.values

    def iv(vid):
        return int(round(v[vid]))

    u = {(f, cw + w): iv(vid) for (f, w), vid in rm.u.items()}
    leases = {(f, cw + w): iv(vid) for (f, w), vid in rm.l.items()}
    returns = {(f, cw + w): iv(vid) for (f, w), vid in rm.r.items()}
    reloc = {(f, g, cw + w): iv(vid) for (f, g, w), vid in rm.reloc.items() if iv(vid) > 0}
    production = {(p, f, cw + w): iv(vid) for (p, f, w), vid in rm.prod.items() if iv(vid) > 0}
    # inventory/backlog recomputed from integral production so s*b = 0 holds exactly
    inventory, backlog = {}, {}
    for pid in rm.projects:
        net = int(inp.inventory_start.get(pid, 0)) - int(inp.backlog_start.get(pid, 0))
        for w in range(rm.horizon):
            net += sum(q for (p, _, ww), q in production.items() if p == pid and ww == cw + w)
            net -= rm.demand[pid, w]
            inventory[pid, cw + w] = float(max(net, 0))
            backlog[pid, cw + w] = float(max(-net, 0))
    dist = {(f, g): d for f, g, d in rm.arcs}
    costs = {
        "storage": cp.storage_cost_per_module_week * sum(inventory.values()),
        "lateness": cp.lateness_cost_per_module_week * sum(backlog.values()),
        "relocation_transport": sum(
            n * dist[f, g] * cp.trucks_per_mpc * cp.truck_cost_per_mile for (f, g, _), n in reloc.items()),
        "commission": cp.mpc_commission_cost * sum(leases.values()),
        "decommission": cp.mpc_decommission_cost * sum(returns.values()),
        "rent": cp.mpc_weekly_rent * sum(u.values()),
    }
    return ResourcePlan(
        start_week=cw,
        horizon=rm.horizon,
        mpc_location=u,
        relocations=reloc,
        leases=leases,
        returns=returns,
        production=production,
        inventory=inventory,
        backlog=backlog,
        demand={(p, cw + w): q for (p, w), q in rm.demand.items()},
        initial_positions={f.id: int(inp.mpc_positions.get(f.id, 0)) for f in sc.facility_sites},
        erection_rates={p: inp.rate(p) for p in rm.projects},
        objective_value=sum(costs.values()),
        cost_breakdown=costs,
        status=sol.status,
        bound_gap=sol.bound_gap,
        nodes_explored=sol.nodes_explored,
    )


def solve_res(inp: ResInput, horizon: int, limits: SolveLimits | None = None) -> ResourcePlan:
    rm = build_res_model(inp, horizon)
    sol = solve_mip(rm.model, limits or SolveLimits())
    if sol.status == "infeasible":
        # backlog absorbs any shortfall, so this means a modelling bug
        raise ResourcePlanningError(f"RES week {inp.current_week}: model infeasible (internal error)")
    if not sol.has_solution:
        raise ResourcePlanningError(f"RES week {inp.current_week}: no feasible plan found within limits")
    return extract_res_plan(rm, sol)


def choose_erection_rate(project, inp: ResInput, horizon: int, limits: SolveLimits | None = None) -> int:
    """Erection rate with the cheapest RES objective; ties go to the lowest rate."""
    rates = sorted(project.erection_rates)
    if len(rates) == 1:
        return rates[0]
    best_rate, best_obj = rates[0], None
    for rate in rates:
        trial = replace(inp, chosen_erection_rate={**inp.chosen_erection_rate, project.id: rate})
        obj = solve_res(trial, horizon, limits).objective_value
        if best_obj is None or obj < best_obj - 1e-6 * max(1.0, abs(best_obj)):
            best_rate, best_obj = rate, obj
    return best_rate


def flow_residuals(plan: ResourcePlan) -> list[tuple[str, int, int]]:
    """(facility, week, residual) for every week where MPC flow does not balance."""
    bad = []
    for f in plan.facilities():
        prev = plan.initial_positions.get(f, 0)
        for w in plan.weeks():
            inflow = sum(n for (a, g, ww), n in plan.relocations.items() if g == f and ww == w)
            outflow = sum(n for (a, g, ww), n in plan.relocations.items() if a == f and ww == w)
            expect = prev + plan.leases[f, w] - plan.returns[f, w] + inflow - outflow
            if expect != plan.mpc_location[f, w]:
                bad.append((f, w, plan.mpc_location[f, w] - expect))
            prev = plan.mpc_location[f, w]
    return bad


# -- serialization -----------------------------------------------------------


def res_plan_to_dict(plan: ResourcePlan) -> dict[str, Any]:
    return {
        "schema": RESPLAN_SCHEMA,
        "start_week": plan.start_week,
        "horizon": plan.horizon,
        "status": plan.status,
        "bound_gap": plan.bound_gap,
        "nodes_explored": plan.nodes_explored,
        "facility_weeks": [
            {"facility": f, "week": w, "mpcs": n, "leases": plan.leases[f, w], "returns": plan.returns[f, w]}
            for (f, w), n in sorted(plan.mpc_location.items())
        ],
        "relocations": [
            {"from": f, "to": g, "week": w, "mpcs": n} for (f, g, w), n in sorted(plan.relocations.items())
        ],
        "production": [
            {"project": p, "facility": f, "week": w, "modules": q} for (p, f, w), q in sorted(plan.production.items())
        ],
        "project_weeks": [
            {"project": p, "week": w, "demand": plan.demand[p, w], "inventory": plan.inventory[p, w],
             "backlog": plan.backlog[p, w]}
            for (p, w) in sorted(plan.inventory)
        ],
        "initial_positions": dict(sorted(plan.initial_positions.items())),
        "erection_rates": dict(sorted(plan.erection_rates.items())),
        "objective_value": plan.objective_value,
        "cost_breakdown": dict(plan.cost_breakdown),
    }


def res_plan_from_dict(doc: Mapping[str, Any]) -> ResourcePlan:
    check_schema(doc, RESPLAN_SCHEMA)
    fw = doc["facility_weeks"]
    pw = doc["project_weeks"]
    return ResourcePlan(
        start_week=doc["start_week"],
        horizon=doc["horizon"],
        mpc_location={(e["facility"], e["week"]): e["mpcs"] for e in fw},
        relocations={(e["from"], e["to"], e["week"]): e["mpcs"] for e in doc["relocations"]},
        leases={(e["facility"], e["week"]): e["leases"] for e in fw},
        returns={(e["facility"], e["week"]): e["returns"] for e in fw},
        production={(e["project"], e["facility"], e["week"]): e["modules"] for e in doc["production"]},
        inventory={(e["project"], e["week"]): e["inventory"] for e in pw},
        backlog={(e["project"], e["week"]): e["backlog"] for e in pw},
        demand={(e["project"], e["week"]): e["demand"] for e in pw},
        initial_positions=dict(doc["initial_positions"]),
        erection_rates=dict(doc["erection_rates"]),
        objective_value=doc["objective_value"],
        cost_breakdown=dict(doc["cost_breakdown"]),
        status=doc.get("status", "optimal"),
        bound_gap=doc.get("bound_gap", 0.0),
        nodes_explored=doc.get("nodes_explored", 0),
    )
