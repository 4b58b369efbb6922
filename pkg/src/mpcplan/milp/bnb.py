"""Best-bound branch-and-bound over the warm-started simplex tableau."""

from __future__ import annotations

import heapq
import math
import time
from dataclasses import dataclass

import numpy as np

from .model import INT_TOL, MilpModel, MipSolution, SolveLimits
from .simplex import relaxation_tableau


@dataclass
class _Node:
    bound: float  # parent LP objective, min form
    lb: np.ndarray
    ub: np.ndarray
    basis: np.ndarray
    at_upper: np.ndarray


def _branch_var(x: np.ndarray, is_int: np.ndarray) -> int | None:
    """Most fractional integer variable; ties go to the lowest id."""
    frac = np.abs(x - np.round(x))
    frac[~is_int] = 0.0
    if frac.max(initial=0.0) <= INT_TOL:
        return None
    dist = np.abs((x - np.floor(x)) - 0.5)
    dist[~is_int | (frac <= INT_TOL)] = np.inf
    return int(np.argmin(dist))


def _rel_gap(incumbent: float, bound: float) -> float:
    return max(0.0, incumbent - bound) / max(1.0, abs(incumbent))


def branch_and_bound(model: MilpModel, limits: SolveLimits | None = None) -> MipSolution:
    """Solve ``model`` to optimality or until a limit is hit.

    Nodes are taken in best-bound order; after branching, the child on the
    rounding side of the fractional value is processed immediately on the
    live tableau (plunging) and its sibling is queued with a basis snapshot.
    """
    limits = limits or SolveLimits()
    if model.n_vars == 0:
        raise ValueError("model has no variables")
    tab, dense, sign = relaxation_tableau(model)
    is_int = dense.is_int
    # objective known to be integral on integral points: bounds can be rounded up
    integral_obj = bool(
        np.all(np.abs(dense.c - np.round(dense.c)) < 1e-12) and np.all(dense.c[~is_int] == 0)
    )

    def finish(status, x, inc, bound, nodes):
        if x is None:
            return MipSolution(status, {}, float("nan"), nodes, float("inf"))
        xr = np.where(is_int, np.round(x), x)
        obj = float(dense.c @ xr) + dense.constant
        gap = _rel_gap(inc, bound)
        return MipSolution(status, {i: float(v) for i, v in enumerate(xr)}, obj, nodes, gap)

    start = time.perf_counter()
    incumbent = math.inf
    best_x: np.ndarray | None = None
    heap: list[tuple[float, int, _Node]] = []
    seq = 0
    nodes = 0
    lb = dense.lb.copy()
    ub = dense.ub.copy()
    live = True  # the tableau currently holds the node described by lb/ub
    node_bound = -math.inf

    def prune_tol(inc):
        return 1e-9 * max(1.0, abs(inc))

    def effective(bound):
        return math.ceil(bound - 1e-6) if integral_obj else bound

    while True:
        if not live:
            while heap and effective(heap[0][0]) >= incumbent - prune_tol(incumbent):
                heapq.heappop(heap)
            if not heap:
                break
            if best_x is not None and _rel_gap(incumbent, heap[0][0]) <= limits.relative_gap_target:
                return finish("optimal", best_x, incumbent, heap[0][0], nodes)
            if best_x is None:
                # no incumbent yet: depth-first, newest open node
                k = max(range(len(heap)), key=lambda i: heap[i][1])
                node = heap[k][2]
                heap[k] = heap[-1]
                heap.pop()
                heapq.heapify(heap)
            else:
                _, _, node = heapq.heappop(heap)
            lb, ub, node_bound = node.lb, node.ub, node.bound
            tab.set_bounds(lb, ub)
            tab.restore(node.basis, node.at_upper)
            live = True

        if nodes >= limits.max_nodes or time.perf_counter() - start > limits.max_seconds:
            global_bound = min([node_bound] + [h[0] for h in heap])
            if best_x is None:
                return finish("limit-reached-no-incumbent", None, incumbent, global_bound, nodes)
            return finish("feasible-incumbent", best_x, incumbent, global_bound, nodes)

        tab.set_bounds(lb, ub)
        status = tab.solve()
        nodes += 1
        if status != "optimal":
            live = False
            continue
        x = tab.solution()
        obj = float(tab.c[: tab.n] @ x)
        if effective(obj) >= incumbent - prune_tol(incumbent):
            live = False
            continue
        j = _branch_var(x, is_int)
        if j is None:
            incumbent = obj
            best_x = x.copy()
            live = False
            if heap:
                global_bound = min(h[0] for h in heap)
                if _rel_gap(incumbent, global_bound) <= limits.relative_gap_target:
                    return finish("optimal", best_x, incumbent, global_bound, nodes)
            continue
        lo_val = math.floor(x[j])
        hi_val = lo_val + 1
        down_ub = ub.copy()
        down_ub[j] = lo_val
        up_lb = lb.copy()
        up_lb[j] = hi_val
        basis, at_upper = tab.snapshot()
        go_up = x[j] - lo_val >= 0.5
        if go_up:
            sibling = _Node(obj, lb.copy(), down_ub, basis, at_upper)
            lb = up_lb
        else:
            sibling = _Node(obj, up_lb, ub.copy(), basis, at_upper)
            ub = down_ub
        heapq.heappush(heap, (obj, seq, sibling))
        seq += 1
        node_bound = obj

    if best_x is None:
        return MipSolution("infeasible", {}, float("nan"), nodes, float("inf"))
    return finish("optimal", best_x, incumbent, incumbent, nodes)
