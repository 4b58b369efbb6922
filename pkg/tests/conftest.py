from __future__ import annotations

import pytest

from mpcplan.core import CostParams, FacilitySite, Location, Project, RollingConfig, Scenario, StrategyLimits


def make_scenario(projects=(), facilities=(), locations=(), cost=None, limits=None, rolling=None,
                  initial=None, **kw) -> Scenario:
    return Scenario(
        locations=tuple(locations),
        projects=tuple(projects),
        facility_sites=tuple(facilities),
        cost_params=cost or CostParams(),
        strategy_limits=limits or StrategyLimits(),
        rolling_config=rolling or RollingConfig(),
        initial_mpc_positions=dict(initial or {}),
        **kw,
    )


@pytest.fixture
def two_site_scenario() -> Scenario:
    """One project next to facility A; facility B 50 miles east."""
    return make_scenario(
        locations=[Location("LA", 0, 0), Location("LB", 50, 0), Location("S1", 0, 10)],
        facilities=[FacilitySite("A", "LA", "existing", 8, 0, 1000),
                    FacilitySite("B", "LB", "candidate-new", 8, 5000, 1000)],
        projects=[Project("P1", "S1", 40, 200_000, 4, (10,))],
        cost=CostParams(mpc_commission_cost=500, mpc_decommission_cost=300, mpc_weekly_rent=50,
                        production_cost_per_module=100, truck_cost_per_mile=3,
                        storage_cost_per_module_week=5, lateness_cost_per_module_week=80),
        initial={"A": 1},
    )


ACCEPTANCE_LINES: dict[int, str] = {}


def record_criterion(number: int, passed: bool, title: str, detail: str) -> None:
    ACCEPTANCE_LINES[number] = f"[{'PASS' if passed else 'FAIL'}] criterion {number:>2}: {title} ({detail})"


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[n])
