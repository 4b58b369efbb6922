"""Exhaustive-enumeration oracle for tiny models.

Integer variables are enumerated in id order. A partial assignment is only
extended with values that keep every row satisfiable given the bounds of
the still-free variables, so the walk visits exactly the feasible integer
points (plus dead ends); no objective bounding is used. Continuous
variables, and integer variables the caller marks as ``relaxed``, are
resolved at each leaf by an LP solved with HiGHS, independently of the
in-house simplex.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.optimize import linprog

from .model import EQ, GE, INT_TOL, LE, MAX, MilpModel, MipSolution

DENSE_LIMIT = 1 << 18


class BruteForceRefused(ValueError):
    def __init__(self, count: int, max_points: int):
        super().__init__(f"integer domain has {count} points, more than max_points={max_points}")
        self.count = count
        self.max_points = max_points


class OracleError(RuntimeError):
    """A relaxed integer variable came back fractional from a leaf LP."""


def domain_size(model: MilpModel, relaxed: frozenset[int] = frozenset()) -> int:
    total = 1
    for v in model.variables:
        if v.is_integer and v.id not in relaxed:
            total *= max(0, math.floor(v.ub + INT_TOL) - math.ceil(v.lb - INT_TOL) + 1)
    return total


def brute_force(model: MilpModel, max_points: int = 1 << 20, relaxed=()) -> MipSolution:
    relaxed = frozenset(relaxed)
    count = domain_size(model, relaxed)
    if count > max_points:
        raise BruteForceRefused(count, max_points)
    dense = model.dense()
    n = model.n_vars
    sign = -1.0 if dense.sense == MAX else 1.0
    c = sign * dense.c  # min form
    enum = [j for j in range(n) if dense.is_int[j] and j not in relaxed]
    free = [j for j in range(n) if j not in set(enum)]
    lo = np.ceil(dense.lb - INT_TOL)
    hi = np.floor(dense.ub + INT_TOL)
    if not free and count <= DENSE_LIMIT:
        best = _dense_sweep(dense, c, enum, lo, hi)
    else:
        best = _dfs(dense, c, enum, free, lo, hi, relaxed)
    best_val, best_x, visited = best
    if best_x is None:
        return MipSolution("infeasible", {}, float("nan"), visited, 0.0)
    obj = float(dense.c @ best_x) + dense.constant
    return MipSolution("optimal", {i: float(v) for i, v in enumerate(best_x)}, obj, visited, 0.0)


def _row_ok(act: np.ndarray, b: np.ndarray, senses, tol: float = 1e-9) -> np.ndarray:
    ok = np.ones(act.shape, dtype=bool)
    for i, s in enumerate(senses):
        scale = tol * (1.0 + abs(b[i]))
        if s == LE:
            ok[..., i] = act[..., i] <= b[i] + scale
        elif s == GE:
            ok[..., i] = act[..., i] >= b[i] - scale
        else:
            ok[..., i] = np.abs(act[..., i] - b[i]) <= scale
    return ok


def _dense_sweep(dense, c, enum, lo, hi):
    ranges = [np.arange(lo[j], hi[j] + 1) for j in enum]
    if any(r.size == 0 for r in ranges):
        return math.inf, None, 0
    if enum:
        grids = np.meshgrid(*ranges, indexing="ij")
        pts = np.stack([g.ravel() for g in grids], axis=1)
    else:
        pts = np.zeros((1, 0))
    A = dense.A[:, enum]
    act = pts @ A.T
    feasible = _row_ok(act, dense.b, dense.senses).all(axis=1) if dense.A.shape[0] else np.ones(len(pts), bool)
    if not feasible.any():
        return math.inf, None, len(pts)
    vals = pts @ c[enum]
    vals = np.where(feasible, vals, np.inf)
    k = int(np.argmin(vals))  # first minimiser in lexicographic order
    x = np.zeros(dense.A.shape[1])
    x[enum] = pts[k]
    x += 0.0
    return float(vals[k]), x, len(pts)


def _dfs(dense, c, enum, free, lo, hi, relaxed):
    A, b, senses = dense.A, dense.b, dense.senses
    m, n = A.shape
    K = len(enum)
    lb, ub = dense.lb, dense.ub
    cmin = np.minimum(A * lb, A * ub)
    cmax = np.maximum(A * lb, A * ub)
    free_min = cmin[:, free].sum(axis=1) if free else np.zeros(m)
    free_max = cmax[:, free].sum(axis=1) if free else np.zeros(m)
    suf_min = np.zeros((K + 1, m))
    suf_max = np.zeros((K + 1, m))
    suf_min[K], suf_max[K] = free_min, free_max
    for k in range(K - 1, -1, -1):
        j = enum[k]
        suf_min[k] = suf_min[k + 1] + cmin[:, j]
        suf_max[k] = suf_max[k + 1] + cmax[:, j]
    is_le = np.array([s == LE for s in senses], dtype=bool)
    is_ge = np.array([s == GE for s in senses], dtype=bool)
    is_eq = np.array([s == EQ for s in senses], dtype=bool)
    cols = [np.flatnonzero(A[:, j]) for j in enum]
    eps = 1e-9

    leaf = _LeafSolver(dense, c, free, relaxed) if free else None
    best = [math.inf, None]
    visited = [0]
    x = np.zeros(n)

    def value_range(k, act):
        j = enum[k]
        rows = cols[k]
        lo_k, hi_k = lo[j], hi[j]
        if rows.size:
            a = A[rows, j]
            rmin = act[rows] + suf_min[k + 1, rows]
            rmax = act[rows] + suf_max[k + 1, rows]
            br = b[rows]
            upper_rows = is_le[rows] | is_eq[rows]  # a*x <= b - rmin
            lower_rows = is_ge[rows] | is_eq[rows]  # a*x >= b - rmax
            with np.errstate(divide="ignore"):
                cap = (br - rmin) / a
                floor_ = (br - rmax) / a
            pos = a > 0
            tol = eps * (1.0 + np.abs(br))
            for mask, bound, is_upper in (
                (upper_rows & pos, cap, True),
                (upper_rows & ~pos, cap, False),
                (lower_rows & pos, floor_, False),
                (lower_rows & ~pos, floor_, True),
            ):
                if mask.any():
                    if is_upper:
                        hi_k = min(hi_k, math.floor(float((bound[mask] + tol[mask] / np.abs(a[mask])).min())))
                    else:
                        lo_k = max(lo_k, math.ceil(float((bound[mask] - tol[mask] / np.abs(a[mask])).max())))
        return int(lo_k), int(hi_k)

    def visit(k, act, partial):
        visited[0] += 1
        if k == K:
            if leaf is None:
                if not _row_ok(act, b, senses).all():
                    return
                val = partial
                if val < best[0] - 1e-9 * max(1.0, abs(val)):
                    best[0], best[1] = val, x.copy()
                return
            res = leaf.solve(act)
            if res is None:
                return
            val, xf = res
            val += partial
            if val < best[0] - 1e-9 * max(1.0, abs(val)):
                best[0] = val
                y = x.copy()
                y[free] = xf
                best[1] = y
            return
        # cheap whole-row check before narrowing the next variable
        rmin = act + suf_min[k]
        rmax = act + suf_max[k]
        tol = 1e-9 * (1.0 + np.abs(b))
        if np.any(is_le & (rmin > b + tol)) or np.any(is_ge & (rmax < b - tol)) or np.any(
            is_eq & ((rmin > b + tol) | (rmax < b - tol))
        ):
            return
        j = enum[k]
        lo_k, hi_k = value_range(k, act)
        col = A[:, j]
        for v in range(lo_k, hi_k + 1):
            x[j] = v
            visit(k + 1, act + col * v, partial + c[j] * v)
        x[j] = 0.0

    visit(0, np.zeros(m), 0.0)
    return best[0], best[1], visited[0]


class _LeafSolver:
    """LP over the free variables for a fixed integer assignment (HiGHS dual simplex)."""

    def __init__(self, dense, c, free, relaxed):
        A = dense.A[:, free]
        self.c = c[free]
        self.free = free
        self.relaxed_mask = np.array([j in relaxed for j in free], dtype=bool)
        le = [i for i, s in enumerate(dense.senses) if s == LE]
        ge = [i for i, s in enumerate(dense.senses) if s == GE]
        eq = [i for i, s in enumerate(dense.senses) if s == EQ]
        self.ub_rows = le + ge
        self.ub_sign = np.array([1.0] * len(le) + [-1.0] * len(ge))
        self.eq_rows = eq
        self.A_ub = A[self.ub_rows] * self.ub_sign[:, None] if self.ub_rows else None
        self.A_eq = A[eq] if eq else None
        self.b = dense.b
        self.bounds = list(zip(dense.lb[free], dense.ub[free]))
        # rows without free variables are settled by the integer part alone
        touched = np.any(A != 0, axis=1)
        self.pure = np.flatnonzero(~touched)
        self.pure_senses = [dense.senses[i] for i in self.pure]
        self.mixed = np.flatnonzero(touched)
        self.cache: dict[bytes, tuple[float, np.ndarray] | None] = {}

    def solve(self, act):
        if self.pure.size and not _row_ok(act[self.pure], self.b[self.pure], self.pure_senses).all():
            return None
        rhs = self.b - act
        # leaves that differ only in pure-integer variables share one LP
        key = np.round(rhs[self.mixed], 9).tobytes()
        if key not in self.cache:
            self.cache[key] = self._solve(rhs)
        return self.cache[key]

    def _solve(self, rhs):
        b_ub = rhs[self.ub_rows] * self.ub_sign if self.ub_rows else None
        b_eq = rhs[self.eq_rows] if self.eq_rows else None
        res = linprog(self.c, A_ub=self.A_ub, b_ub=b_ub, A_eq=self.A_eq, b_eq=b_eq,
                      bounds=self.bounds, method="highs-ds")
        if res.status == 2:
            return None
        if res.status != 0:
            raise OracleError(f"leaf LP failed: {res.message}")
        xf = res.x
        if self.relaxed_mask.any():
            xr = xf[self.relaxed_mask]
            if np.any(np.abs(xr - np.round(xr)) > 1e-6):
                raise OracleError("relaxed integer variable is fractional at a leaf vertex")
            xf = xf.copy()
            xf[self.relaxed_mask] = np.round(xr)
        return float(self.c @ xf), xf
