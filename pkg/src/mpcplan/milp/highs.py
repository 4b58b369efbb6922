"""HiGHS backend (through scipy) behind the same MipSolution contract."""

from __future__ import annotations

import warnings

import numpy as np
from scipy.optimize import Bounds, LinearConstraint, milp

from .bnb import branch_and_bound
from .model import EQ, GE, LE, MAX, MilpModel, MipSolution, SolveLimits


def solve_highs(model: MilpModel, limits: SolveLimits | None = None) -> MipSolution:
    limits = limits or SolveLimits()
    dense = model.dense()
    sign = -1.0 if dense.sense == MAX else 1.0
    senses = np.array(dense.senses)
    # solve in x - lb so every finite lower bound is zero; the bundled HiGHS
    # has mishandled negative integer bounds
    shift = np.where(np.isfinite(dense.lb), dense.lb, 0.0)
    constraints = []
    if dense.A.shape[0]:
        row_shift = dense.A @ shift
        lo = np.where(senses == LE, -np.inf, dense.b - row_shift)
        hi = np.where(senses == GE, np.inf, dense.b - row_shift)
        constraints.append(LinearConstraint(dense.A, lo, hi))
    options = {
        "time_limit": float(limits.max_seconds),
        "node_limit": int(limits.max_nodes),
        "mip_rel_gap": float(limits.relative_gap_target),
        # presolve occasionally reports a suboptimal or infeasible "optimum"
        # on small mixed models; exactness matters more than speed here
        "presolve": False,
        "mip_feasibility_tolerance": 1e-9,
    }
    with warnings.catch_warnings():
        # scipy forwards options it does not know verbatim, with a warning
        warnings.simplefilter("ignore", RuntimeWarning)
        res = milp(
            sign * dense.c,
            constraints=constraints,
            integrality=dense.is_int.astype(int),
            bounds=Bounds(dense.lb - shift, dense.ub - shift),
            options=options,
        )
    nodes = int(getattr(res, "mip_node_count", 0) or 0)
    if res.status == 2:
        return MipSolution("infeasible", {}, float("nan"), nodes, float("inf"))
    if res.x is None:
        return MipSolution("limit-reached-no-incumbent", {}, float("nan"), nodes, float("inf"))
    x = np.where(dense.is_int, np.round(res.x), res.x) + shift + 0.0
    obj = float(dense.c @ x) + dense.constant
    gap = float(getattr(res, "mip_gap", 0.0) or 0.0)
    status = "optimal" if res.status == 0 else "feasible-incumbent"
    return MipSolution(status, {i: float(v) for i, v in enumerate(x)}, obj, nodes, gap)


def solve_mip(model: MilpModel, limits: SolveLimits | None = None) -> MipSolution:
    """Dispatch on ``limits.engine``: ``"native"`` branch-and-bound or ``"highs"``."""
    limits = limits or SolveLimits()
    if limits.engine == "native":
        return branch_and_bound(model, limits)
    if limits.engine == "highs":
        return solve_highs(model, limits)
    raise ValueError(f"unknown engine {limits.engine!r}")


__all__ = ["solve_highs", "solve_mip", "EQ"]
