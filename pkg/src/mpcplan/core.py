"""Domain types, scenario validation, distance and calendar arithmetic.

Every downstream stage (capacity planning, resource deployment, the rolling
driver and the harness) consumes a :class:`Scenario`. All types here are
frozen dataclasses; operations are pure.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Mapping

SCENARIO_SCHEMA = "mpc-scenario/1"

DAYS_PER_WEEK = 7


class ValidationError(ValueError):
    """Raised when a scenario or an input references something that does not exist."""


class SchemaError(ValueError):
    """Raised when a document carries the wrong (or no) schema version."""

    def __init__(self, found: Any, expected: str, path: str | None = None):
        where = f"{path}: " if path else ""
        super().__init__(f"{where}schema version {found!r} not supported, expected {expected!r}")
        self.found = found
        self.expected = expected
        self.path = path


def check_schema(doc: Mapping[str, Any], expected: str, path: str | None = None) -> None:
    found = doc.get("schema") if isinstance(doc, Mapping) else None
    if found != expected:
        raise SchemaError(found, expected, path)


@dataclass(frozen=True)
class Location:
    id: str
    x_miles: float
    y_miles: float


@dataclass(frozen=True)
class DistanceModel:
    """Euclidean over planar coordinates, or an explicit symmetric matrix.

    ``matrix`` maps ``(a, b)`` to miles; one orientation per pair is enough,
    lookups are symmetric.
    """

    mode: str = "euclidean"
    matrix: Mapping[tuple[str, str], float] | None = None

    def __post_init__(self):
        if self.mode not in ("euclidean", "explicit-matrix"):
            raise ValidationError(f"unknown distance mode {self.mode!r}")


@dataclass(frozen=True)
class Project:
    id: str
    site: str
    modules_total: int
    revenue: float
    target_start_week: int
    erection_rates: tuple[int, ...]
    earliest_accept_month: int = 0


@dataclass(frozen=True)
class FacilitySite:
    id: str
    location: str
    kind: str  # "existing" | "candidate-new"
    max_fractals: int = 8
    commissioning_cost: float = 0.0
    monthly_rent: float = 0.0


@dataclass(frozen=True)
class CostParams:
    distance_threshold_x: float = 100.0
    distance_penalty_per_mile_module: float = 1.0
    mpc_daily_rate: int = 2
    production_days_per_week: int = 5
    mpc_commission_cost: float = 0.0
    mpc_decommission_cost: float = 0.0
    mpc_weekly_rent: float = 0.0
    production_cost_per_module: float = 0.0
    truck_cost_per_mile: float = 0.0
    trucks_per_mpc: int = 2
    modules_per_truck: int = 1
    storage_cost_per_module_week: float = 0.0
    lateness_cost_per_module_week: float = 0.0
    relocation_distance_limit: float = 100.0


@dataclass(frozen=True)
class StrategyLimits:
    max_new_projects_per_month: int = 100
    max_new_facilities_per_month: int = 100
    max_open_facilities: int = 100


@dataclass(frozen=True)
class RollingConfig:
    tick_days: int = 1
    S_l_days: int = 28
    S_s_days: int = 7
    T_l_months: int = 12
    T_s_weeks: int = 13
    end_day: int = 560
    commitment_months: int = 3
    weeks_per_month: int = 4

    @property
    def days_per_month(self) -> int:
        return self.weeks_per_month * DAYS_PER_WEEK


@dataclass(frozen=True)
class Scenario:
    locations: tuple[Location, ...]
    projects: tuple[Project, ...]
    facility_sites: tuple[FacilitySite, ...]
    cost_params: CostParams = field(default_factory=CostParams)
    strategy_limits: StrategyLimits = field(default_factory=StrategyLimits)
    rolling_config: RollingConfig = field(default_factory=RollingConfig)
    distance_model: DistanceModel = field(default_factory=DistanceModel)
    initial_mpc_positions: Mapping[str, int] = field(default_factory=dict)
    seed: int = 0
    name: str = ""

    def location(self, loc_id: str) -> Location:
        for loc in self.locations:
            if loc.id == loc_id:
                return loc
        raise ValidationError(f"unknown location {loc_id!r}")

    def project(self, project_id: str) -> Project:
        for p in self.projects:
            if p.id == project_id:
                return p
        raise ValidationError(f"unknown project {project_id!r}")

    def facility(self, facility_id: str) -> FacilitySite:
        for f in self.facility_sites:
            if f.id == facility_id:
                return f
        raise ValidationError(f"unknown facility {facility_id!r}")

    def facility_distance(self, facility_id: str, other_location: str) -> float:
        return distance(self.facility(facility_id).location, other_location, self)


def distance(a: str, b: str, scenario: Scenario) -> float:
    """Miles between two location ids under the scenario's distance model."""
    locs = {loc.id: loc for loc in scenario.locations}
    for loc_id in (a, b):
        if loc_id not in locs:
            raise ValidationError(f"unknown location {loc_id!r}")
    if a == b:
        return 0.0
    model = scenario.distance_model
    if model.mode == "euclidean":
        la, lb = locs[a], locs[b]
        return math.hypot(la.x_miles - lb.x_miles, la.y_miles - lb.y_miles)
    matrix = model.matrix or {}
    if (a, b) in matrix:
        return float(matrix[(a, b)])
    if (b, a) in matrix:
        return float(matrix[(b, a)])
    raise ValidationError(f"distance matrix has no entry for ({a!r}, {b!r})")


def distance_penalty(d: float, params: CostParams) -> float:
    """Per-module penalty for shipping ``d`` miles: linear beyond the threshold."""
    return max(0.0, d - params.distance_threshold_x) * params.distance_penalty_per_mile_module


def weekly_mpc_rate(params: CostParams) -> int:
    return params.mpc_daily_rate * params.production_days_per_week


def month_of_week(week: int, config: RollingConfig) -> int:
    return week // config.weeks_per_month


@dataclass(frozen=True)
class Violation:
    path: str
    message: str

    def __str__(self) -> str:
        return f"{self.path}: {self.message}"


def _finite(v: Any) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v)


def validate_scenario(s: Scenario) -> list[Violation]:
    """Check every invariant of the scenario types; an empty list means valid."""
    out: list[Violation] = []

    def bad(path: str, msg: str) -> None:
        out.append(Violation(path, msg))

    loc_ids: set[str] = set()
    for i, loc in enumerate(s.locations):
        path = f"locations[{i}]"
        if loc.id in loc_ids:
            bad(path, f"duplicate location id {loc.id!r}")
        loc_ids.add(loc.id)
        if not (_finite(loc.x_miles) and _finite(loc.y_miles)):
            bad(path, f"location {loc.id!r} has non-finite coordinates")

    dm = s.distance_model
    if dm.mode == "explicit-matrix":
        matrix = dm.matrix or {}
        for (a, b), d in sorted(matrix.items()):
            path = f"distance_model.matrix[{a},{b}]"
            if a not in loc_ids or b not in loc_ids:
                bad(path, "entry references unknown location")
            if not _finite(d) or d < 0:
                bad(path, f"distance {d!r} must be finite and nonnegative")
            if a == b and d != 0:
                bad(path, "diagonal entry must be zero")
            if (b, a) in matrix and matrix[(b, a)] != d:
                bad(path, "matrix is not symmetric")

    project_ids: set[str] = set()
    for i, p in enumerate(s.projects):
        path = f"projects[{i}]"
        if p.id in project_ids:
            bad(path, f"duplicate project id {p.id!r}")
        project_ids.add(p.id)
        if p.site not in loc_ids:
            bad(path, f"project {p.id!r} references unknown site {p.site!r}")
        if not isinstance(p.modules_total, int) or p.modules_total < 1:
            bad(path, f"project {p.id!r} modules_total must be a positive integer")
        if not _finite(p.revenue) or p.revenue < 0:
            bad(path, f"project {p.id!r} revenue must be nonnegative")
        if p.target_start_week < 0:
            bad(path, f"project {p.id!r} target_start_week must be >= 0")
        if p.earliest_accept_month < 0:
            bad(path, f"project {p.id!r} earliest_accept_month must be >= 0")
        if not p.erection_rates:
            bad(path, f"project {p.id!r} needs at least one erection rate")
        for r in p.erection_rates:
            if not isinstance(r, int) or r < 1:
                bad(path, f"project {p.id!r} erection rate {r!r} must be an integer >= 1")

    fac_ids: set[str] = set()
    for i, f in enumerate(s.facility_sites):
        path = f"facility_sites[{i}]"
        if f.id in fac_ids:
            bad(path, f"duplicate facility id {f.id!r}")
        fac_ids.add(f.id)
        if f.location not in loc_ids:
            bad(path, f"facility {f.id!r} references unknown location {f.location!r}")
        if f.kind not in ("existing", "candidate-new"):
            bad(path, f"facility {f.id!r} has unknown kind {f.kind!r}")
        if not isinstance(f.max_fractals, int) or f.max_fractals < 1:
            bad(path, f"facility {f.id!r} max_fractals must be >= 1")
        if f.kind == "existing" and f.commissioning_cost != 0:
            bad(path, f"existing facility {f.id!r} must have zero commissioning cost")
        for name in ("commissioning_cost", "monthly_rent"):
            v = getattr(f, name)
            if not _finite(v) or v < 0:
                bad(path, f"facility {f.id!r} {name} must be nonnegative")

    cp = s.cost_params
    for name, v in asdict(cp).items():
        if not _finite(v) or v < 0:
            bad(f"cost_params.{name}", f"{v!r} must be finite and nonnegative")
    for name in ("mpc_daily_rate", "production_days_per_week", "trucks_per_mpc", "modules_per_truck"):
        if getattr(cp, name) < 1:
            bad(f"cost_params.{name}", "must be >= 1")
    if cp.distance_threshold_x <= 0:
        bad("cost_params.distance_threshold_x", "must be > 0")

    for name, v in asdict(s.strategy_limits).items():
        if not isinstance(v, int) or v < 0:
            bad(f"strategy_limits.{name}", f"{v!r} must be a nonnegative integer")

    rc = s.rolling_config
    for name, v in asdict(rc).items():
        if not isinstance(v, int) or v < 1:
            if not (name == "end_day" and isinstance(v, int) and v >= 0):
                bad(f"rolling_config.{name}", f"{v!r} must be a positive integer")
    if rc.S_s_days >= 1 and rc.S_l_days % rc.S_s_days != 0:
        bad("rolling_config.S_s_days", "must divide S_l_days")
    if rc.T_l_months < rc.commitment_months:
        bad("rolling_config.T_l_months", "CAP horizon shorter than the commitment window")
    if rc.end_day <= 0:
        bad("rolling_config.end_day", "must be > 0")

    for fid, count in sorted(s.initial_mpc_positions.items()):
        path = f"initial_mpc_positions[{fid}]"
        if fid not in fac_ids:
            bad(path, f"unknown facility {fid!r}")
            continue
        if not isinstance(count, int) or count < 0:
            bad(path, f"count {count!r} must be a nonnegative integer")
            continue
        cap = next(f.max_fractals for f in s.facility_sites if f.id == fid)
        if count > cap:
            bad(path, f"{count} MPCs exceed max_fractals {cap} of facility {fid!r}")
    return out


# -- serialization -----------------------------------------------------------


def scenario_to_dict(s: Scenario) -> dict[str, Any]:
    dm = s.distance_model
    dm_doc: dict[str, Any] = {"mode": dm.mode}
    if dm.matrix is not None:
        dm_doc["matrix"] = [
            {"a": a, "b": b, "miles": float(d)} for (a, b), d in sorted(dm.matrix.items())
        ]
    return {
        "schema": SCENARIO_SCHEMA,
        "name": s.name,
        "seed": s.seed,
        "locations": [asdict(loc) for loc in s.locations],
        "distance_model": dm_doc,
        "projects": [dict(asdict(p), erection_rates=list(p.erection_rates)) for p in s.projects],
        "facility_sites": [asdict(f) for f in s.facility_sites],
        "cost_params": asdict(s.cost_params),
        "strategy_limits": asdict(s.strategy_limits),
        "rolling_config": asdict(s.rolling_config),
        "initial_mpc_positions": dict(sorted(s.initial_mpc_positions.items())),
    }


def scenario_from_dict(doc: Mapping[str, Any], path: str | None = None) -> Scenario:
    check_schema(doc, SCENARIO_SCHEMA, path)
    try:
        dm_doc = doc.get("distance_model", {"mode": "euclidean"})
        matrix = None
        if dm_doc.get("matrix") is not None:
            matrix = {(e["a"], e["b"]): float(e["miles"]) for e in dm_doc["matrix"]}
        return Scenario(
            name=doc.get("name", ""),
            seed=int(doc.get("seed", 0)),
            locations=tuple(Location(**loc) for loc in doc["locations"]),
            distance_model=DistanceModel(mode=dm_doc["mode"], matrix=matrix),
            projects=tuple(
                Project(**dict(p, erection_rates=tuple(p["erection_rates"]))) for p in doc["projects"]
            ),
            facility_sites=tuple(FacilitySite(**f) for f in doc["facility_sites"]),
            cost_params=CostParams(**doc.get("cost_params", {})),
            strategy_limits=StrategyLimits(**doc.get("strategy_limits", {})),
            rolling_config=RollingConfig(**doc.get("rolling_config", {})),
            initial_mpc_positions=dict(doc.get("initial_mpc_positions", {})),
        )
    except (KeyError, TypeError) as exc:
        where = f"{path}: " if path else ""
        raise ValidationError(f"{where}malformed scenario document ({exc})") from exc


def dump_json(doc: Any) -> str:
    """Canonical JSON text: sorted keys, fixed separators, trailing newline."""
    return json.dumps(doc, sort_keys=True, indent=1, separators=(",", ": ")) + "\n"


def save_scenario(s: Scenario, path: str | Path) -> None:
    Path(path).write_text(dump_json(scenario_to_dict(s)))


def load_scenario(path: str | Path) -> Scenario:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: not valid JSON ({exc})") from exc
    return scenario_from_dict(doc, str(path))
