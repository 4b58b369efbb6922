"""Scenario generation, the fixed-rate baseline, and series / cost extraction from traces."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass, field, fields
from importlib import resources
from typing import Any, Mapping, Sequence

import numpy as np

from .core import (
    CostParams,
    FacilitySite,
    Location,
    Project,
    RollingConfig,
    Scenario,
    StrategyLimits,
    ValidationError,
    check_schema,
    distance,
    load_scenario,
    weekly_mpc_rate,
)

GENSPEC_SCHEMA = "mpc-genspec/1"
COSTS_SCHEMA = "mpc-costs/1"
CSV_COLUMNS = ("week", "baseline", "cap_estimate", "located", "on_duty", "idle")
REFERENCE_NAME = "southeast-20mo"


class ExtractionError(ValueError):
    pass


@dataclass(frozen=True)
class GenSpec:
    seed: int = 20240
    name: str = "generated"
    n_facilities: int = 5
    n_existing: int = 2
    n_projects: int = 12
    extent_miles: float = 400.0
    demand_range: tuple[int, int] = (60, 240)
    revenue_per_module_range: tuple[float, float] = (9000.0, 12000.0)
    erection_rate_options: tuple[int, ...] = (10, 15, 20)
    max_rates_per_project: int = 2
    start_week_range: tuple[int, int] = (6, 56)
    accept_lead_months: int = 2
    max_fractals: int = 8
    commissioning_cost_range: tuple[float, float] = (40000.0, 80000.0)
    monthly_rent_range: tuple[float, float] = (8000.0, 15000.0)
    initial_mpcs_per_existing: int = 2
    cost_params: CostParams = field(default_factory=lambda: CostParams(
        distance_threshold_x=100.0,
        distance_penalty_per_mile_module=5.0,
        mpc_daily_rate=2,
        production_days_per_week=5,
        mpc_commission_cost=6000.0,
        mpc_decommission_cost=4000.0,
        mpc_weekly_rent=600.0,
        production_cost_per_module=3000.0,
        truck_cost_per_mile=3.0,
        trucks_per_mpc=2,
        modules_per_truck=1,
        storage_cost_per_module_week=40.0,
        lateness_cost_per_module_week=900.0,
        relocation_distance_limit=250.0,
    ))
    strategy_limits: StrategyLimits = field(default_factory=lambda: StrategyLimits(
        max_new_projects_per_month=3, max_new_facilities_per_month=1, max_open_facilities=4))
    rolling_config: RollingConfig = field(default_factory=RollingConfig)

    def check(self) -> None:
        for name in ("demand_range", "revenue_per_module_range", "start_week_range",
                     "commissioning_cost_range", "monthly_rent_range"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ValidationError(f"genspec.{name}: empty range {lo}..{hi}")
        if not self.erection_rate_options:
            raise ValidationError("genspec.erection_rate_options: empty")
        if not 0 <= self.n_existing <= self.n_facilities:
            raise ValidationError("genspec.n_existing must be within [0, n_facilities]")
        if self.n_projects > 0 and self.n_facilities == 0:
            raise ValidationError("genspec: projects need at least one facility site")


def genspec_to_dict(spec: GenSpec) -> dict[str, Any]:
    doc = asdict(spec)
    doc["schema"] = GENSPEC_SCHEMA
    return doc


def genspec_from_dict(doc: Mapping[str, Any]) -> GenSpec:
    check_schema(doc, GENSPEC_SCHEMA)
    kwargs: dict[str, Any] = {}
    nested = {"cost_params": CostParams, "strategy_limits": StrategyLimits, "rolling_config": RollingConfig}
    for f in fields(GenSpec):
        if f.name not in doc:
            continue
        val = doc[f.name]
        if f.name in nested:
            val = nested[f.name](**val)
        elif isinstance(val, list):
            val = tuple(val)
        kwargs[f.name] = val
    return GenSpec(**kwargs)


def generate_scenario(spec: GenSpec) -> Scenario:
    """Seeded synthetic scenario; each project site lies within the distance
    threshold of at least one facility site."""
    spec.check()
    rng = np.random.default_rng(spec.seed)
    cp = spec.cost_params
    ext = spec.extent_miles
    locations: list[Location] = []
    facilities: list[FacilitySite] = []
    for i in range(spec.n_facilities):
        fid = f"F{i + 1}"
        x, y = rng.uniform(0, ext, size=2)
        locations.append(Location(f"L-{fid}", round(float(x), 1), round(float(y), 1)))
        existing = i < spec.n_existing
        facilities.append(FacilitySite(
            id=fid,
            location=f"L-{fid}",
            kind="existing" if existing else "candidate-new",
            max_fractals=spec.max_fractals,
            commissioning_cost=0.0 if existing else float(round(rng.uniform(*spec.commissioning_cost_range), -2)),
            monthly_rent=float(round(rng.uniform(*spec.monthly_rent_range), -2)),
        ))
    projects: list[Project] = []
    radius = 0.8 * cp.distance_threshold_x
    for i in range(spec.n_projects):
        pid = f"P{i + 1:02d}"
        anchor = locations[int(rng.integers(spec.n_facilities))]
        ang = rng.uniform(0, 2 * math.pi)
        rad = radius * math.sqrt(rng.uniform())
        locations.append(Location(f"L-{pid}", round(anchor.x_miles + rad * math.cos(ang), 1),
                                  round(anchor.y_miles + rad * math.sin(ang), 1)))
        modules = int(rng.integers(spec.demand_range[0], spec.demand_range[1] + 1))
        start = int(rng.integers(spec.start_week_range[0], spec.start_week_range[1] + 1))
        n_rates = int(rng.integers(1, spec.max_rates_per_project + 1))
        rates = sorted(int(r) for r in rng.choice(spec.erection_rate_options,
                                                  size=min(n_rates, len(spec.erection_rate_options)),
                                                  replace=False))
        per_module = rng.uniform(*spec.revenue_per_module_range)
        start_month = start // spec.rolling_config.weeks_per_month
        projects.append(Project(
            id=pid,
            site=f"L-{pid}",
            modules_total=modules,
            revenue=float(round(per_module * modules, -2)),
            target_start_week=start,
            erection_rates=tuple(rates),
            earliest_accept_month=max(0, start_month - spec.accept_lead_months),
        ))
    initial = {f.id: spec.initial_mpcs_per_existing for f in facilities
               if f.kind == "existing" and spec.initial_mpcs_per_existing > 0}
    return Scenario(
        name=spec.name,
        seed=spec.seed,
        locations=tuple(locations),
        projects=tuple(projects),
        facility_sites=tuple(facilities),
        cost_params=cp,
        strategy_limits=spec.strategy_limits,
        rolling_config=spec.rolling_config,
        initial_mpc_positions=initial,
    )


def reference_genspec() -> GenSpec:
    return GenSpec(seed=20240521, name=REFERENCE_NAME)


def reference_scenario() -> Scenario:
    """The bundled reference scenario (generated from :func:`reference_genspec`)."""
    ref = resources.files("mpcplan") / "data" / f"{REFERENCE_NAME}.json"
    with resources.as_file(ref) as path:
        return load_scenario(path)


# -- baseline ----------------------------------------------------------------


def n_weeks(scenario: Scenario) -> int:
    rc = scenario.rolling_config
    return math.ceil(rc.end_day / 7)


def fixed_rate_baseline(scenario: Scenario, rate_modules_per_day: int = 8) -> list[int]:
    """Weekly MPCs needed when every project is produced at a fixed daily rate.

    Each project occupies ``ceil(rate / mpc_daily_rate)`` MPCs from its target
    start week until its demand is produced at that rate.
    """
    if rate_modules_per_day < 1:
        raise ValueError("rate must be >= 1")
    cp = scenario.cost_params
    per_project = math.ceil(rate_modules_per_day / cp.mpc_daily_rate)
    weekly_output = rate_modules_per_day * cp.production_days_per_week
    series = [0] * n_weeks(scenario)
    for p in scenario.projects:
        active = math.ceil(p.modules_total / weekly_output)
        for w in range(p.target_start_week, min(len(series), p.target_start_week + active)):
            series[w] += per_project
    return series


def monthly_max(series: Sequence[int], weeks_per_month: int) -> list[int]:
    return [max(series[i:i + weeks_per_month]) for i in range(0, len(series), weeks_per_month)]


def total_variation(values: Sequence[float], start: float = 0.0) -> float:
    tv = 0.0
    prev = start
    for v in values:
        tv += abs(v - prev)
        prev = v
    return tv


# -- trace extraction --------------------------------------------------------


@dataclass(frozen=True)
class SeriesPoint:
    week: int
    baseline_mpcs: int
    cap_estimate_mpcs: int
    res_mpcs: int
    on_duty_mpcs: int
    idle_mpcs: int


def _events(trace: Mapping[str, Any], kind: str) -> list[Mapping[str, Any]]:
    return [e for e in trace["events"] if e["kind"] == kind]


def check_complete(trace: Mapping[str, Any]) -> None:
    from .rolling import TRACE_SCHEMA

    try:
        check_schema(trace, TRACE_SCHEMA)
        cfg = trace["config"]
        end, s_l, s_s = cfg["end_day"], cfg["S_l_days"], cfg["S_s_days"]
        events = trace["events"]
    except (KeyError, TypeError) as exc:
        raise ExtractionError(f"trace is missing {exc}") from exc
    except ValueError as exc:
        raise ExtractionError(str(exc)) from exc
    cap_days = [e["day"] for e in events if e["kind"] == "cap-solve"]
    res_days = [e["day"] for e in events if e["kind"] == "res-solve"]
    if cap_days != list(range(0, end, s_l)) or res_days != list(range(0, end, s_s)):
        raise ExtractionError(
            f"trace is truncated: {len(cap_days)} cap-solves and {len(res_days)} res-solves "
            f"for end_day {end}, expected {len(range(0, end, s_l))} and {len(range(0, end, s_s))}")


def mpc_series(trace: Mapping[str, Any], scenario: Scenario) -> list[SeriesPoint]:
    check_complete(trace)
    rate = weekly_mpc_rate(scenario.cost_params)
    baseline = fixed_rate_baseline(scenario, 8)
    cap_by_month = {e["day"] // trace["config"]["days_per_month"]: e["committed"]["fleet_total"]
                    for e in _events(trace, "cap-solve")}
    wpm = trace["config"]["weeks_per_month"]
    out = []
    for e in _events(trace, "res-solve"):
        week = e["committed"]["week"]
        located = sum(e["committed"]["mpcs"].values())
        by_fac: dict[str, int] = {}
        for rec in e["committed"]["production"]:
            by_fac[rec["facility"]] = by_fac.get(rec["facility"], 0) + rec["modules"]
        on_duty = sum(math.ceil(q / rate) for q in by_fac.values())
        if on_duty > located:
            raise ExtractionError(f"week {week}: on-duty {on_duty} exceeds located {located}")
        out.append(SeriesPoint(
            week=week,
            baseline_mpcs=baseline[week] if week < len(baseline) else 0,
            cap_estimate_mpcs=cap_by_month[week // wpm],
            res_mpcs=located,
            on_duty_mpcs=on_duty,
            idle_mpcs=located - on_duty,
        ))
    return out


def series_csv(points: Sequence[SeriesPoint]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for p in points:
        writer.writerow([p.week, p.baseline_mpcs, p.cap_estimate_mpcs, p.res_mpcs, p.on_duty_mpcs, p.idle_mpcs])
    return buf.getvalue()


COST_CATEGORIES = (
    "commissioning",
    "rent",
    "mpc_commission",
    "mpc_decommission",
    "mpc_rent",
    "relocation_transport",
    "production",
    "transport",
    "distance_penalty",
    "storage",
    "lateness",
)


@dataclass(frozen=True)
class CostBreakdown:
    categories: dict[str, float]
    total: float
    revenue: float

    @property
    def profit(self) -> float:
        return self.revenue - self.total

    def to_dict(self) -> dict[str, Any]:
        return {
            "schema": COSTS_SCHEMA,
            "categories": {k: round(v, 6) for k, v in self.categories.items()},
            "total": round(self.total, 6),
            "revenue": round(self.revenue, 6),
            "profit": round(self.profit, 6),
        }


def cost_report(trace: Mapping[str, Any]) -> CostBreakdown:
    """Sum the committed costs recorded in a trace; released suffixes never appear there."""
    cats = dict.fromkeys(COST_CATEGORIES, 0.0)
    revenue = 0.0
    for e in trace.get("events", []):
        committed = e.get("committed") or {}
        for k, v in committed.get("costs", {}).items():
            if k == "revenue":
                revenue += v
            elif k in cats:
                cats[k] += v
            else:
                raise ExtractionError(f"unknown cost category {k!r} at day {e.get('day')}")
    return CostBreakdown(cats, sum(cats.values()), revenue)


def nearest_facility_miles(scenario: Scenario, project: Project) -> float:
    return min(distance(f.location, project.site, scenario) for f in scenario.facility_sites)


def relocation_showcase() -> tuple["ResInput", int]:
    """A small RES instance where moving idle MPCs beats leasing fresh ones.

    Site F1 holds three idle MPCs; the project may only be served from F2,
    40 miles away, and leasing is expensive while trucking is cheap.
    """
    from .resource import ResInput

    scenario = Scenario(
        name="relocation-showcase",
        locations=(Location("L1", 0.0, 0.0), Location("L2", 40.0, 0.0), Location("LS", 45.0, 10.0)),
        projects=(Project("P1", "LS", 60, 500000.0, 0, (20,)),),
        facility_sites=(FacilitySite("F1", "L1", "existing", 4, 0.0, 0.0),
                        FacilitySite("F2", "L2", "existing", 4, 0.0, 0.0)),
        cost_params=CostParams(mpc_commission_cost=5000.0, mpc_decommission_cost=3000.0, mpc_weekly_rent=300.0,
                               truck_cost_per_mile=2.0, storage_cost_per_module_week=20.0,
                               lateness_cost_per_module_week=800.0, relocation_distance_limit=100.0),
        initial_mpc_positions={"F1": 3},
    )
    horizon = 3
    inp = ResInput(
        scenario=scenario,
        open_facilities={(f, w): True for f in ("F1", "F2") for w in range(horizon)},
        allowed_pairs=frozenset({("P1", "F2")}),
        mpc_positions={"F1": 3},
        remaining_demand={"P1": 60},
        chosen_erection_rate={"P1": 20},
    )
    return inp, horizon
