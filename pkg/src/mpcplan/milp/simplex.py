"""Dense bounded-variable simplex.

Every row gets a slack column so that ``A x + s = b``; the slack bounds
encode the row sense. Structural variables are all finitely bounded, so
putting each one at the bound favoured by its cost gives a dual-feasible
slack basis. The LP is then solved by the dual simplex method, followed by
a primal cleanup pass if round-off leaves a reduced cost of the wrong sign.

The same tableau is reused by branch-and-bound: tightening a bound keeps
the basis dual feasible, so a child node resumes from its parent's basis.
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import lu_factor, lu_solve

from .model import EQ, GE, LE, MAX, LpSolution, MilpModel

PIVOT_TOL = 1e-9
REFACTOR_EVERY = 100
# consecutive degenerate pivots before switching to Bland's rule
BLAND_AFTER = 50


class SimplexError(RuntimeError):
    pass


class Tableau:
    """Full tableau ``T = B^-1 [A | I]`` with bound-status bookkeeping.

    Works in minimisation form; ``c`` is the min-form structural cost.
    """

    def __init__(self, A: np.ndarray, b: np.ndarray, senses, c: np.ndarray,
                 lb: np.ndarray, ub: np.ndarray):
        m, n = A.shape
        self.m, self.n = m, n
        N = n + m
        self.M = np.hstack([A, np.eye(m)])
        self.b = np.asarray(b, dtype=float).copy()
        self.lo = np.empty(N)
        self.up = np.empty(N)
        self.lo[:n] = lb
        self.up[:n] = ub
        for i, sense in enumerate(senses):
            if sense == LE:
                self.lo[n + i], self.up[n + i] = 0.0, np.inf
            elif sense == GE:
                self.lo[n + i], self.up[n + i] = -np.inf, 0.0
            else:
                self.lo[n + i], self.up[n + i] = 0.0, 0.0
        self.c = np.concatenate([np.asarray(c, dtype=float), np.zeros(m)])
        scale = max(1.0, float(np.abs(self.c).max()) if N else 1.0)
        self.dual_tol = 1e-9 * scale
        self.primal_tol = 1e-7
        self.basis = np.arange(n, n + m)
        self.is_basic = np.zeros(N, dtype=bool)
        self.is_basic[n:] = True
        self.at_upper = np.zeros(N, dtype=bool)
        self.at_upper[:n] = self.c[:n] < 0
        self.T = self.M.copy()
        self.beta = self.b.copy()
        self.d = self.c.copy()
        self.iterations = 0
        self._since_refactor = 0

    # -- state ---------------------------------------------------------------

    def snapshot(self) -> tuple[np.ndarray, np.ndarray]:
        return self.basis.copy(), self.at_upper.copy()

    def restore(self, basis: np.ndarray, at_upper: np.ndarray) -> None:
        self.basis = basis.copy()
        self.at_upper = at_upper.copy()
        self.is_basic[:] = False
        self.is_basic[self.basis] = True
        self.refactor()

    def set_bounds(self, lb: np.ndarray, ub: np.ndarray) -> None:
        self.lo[: self.n] = lb
        self.up[: self.n] = ub

    def refactor(self) -> None:
        lu = lu_factor(self.M[:, self.basis])
        self.T = lu_solve(lu, self.M)
        self.beta = lu_solve(lu, self.b)
        self.T[:, self.basis] = np.eye(self.m)
        self.d = self.c - self.c[self.basis] @ self.T
        self.d[self.basis] = 0.0
        self._since_refactor = 0

    def nonbasic_values(self) -> np.ndarray:
        x = np.where(self.at_upper, self.up, self.lo)
        x[self.is_basic] = 0.0
        return x

    def basic_values(self) -> np.ndarray:
        return self.beta - self.T @ self.nonbasic_values()

    def solution(self) -> np.ndarray:
        x = self.nonbasic_values()
        x[self.basis] = self.basic_values()
        return x[: self.n]

    # -- pivoting ------------------------------------------------------------

    def _pivot(self, r: int, q: int) -> None:
        T = self.T
        piv = T[r, q]
        T[r] /= piv
        self.beta[r] /= piv
        col = T[:, q].copy()
        col[r] = 0.0
        rows = np.flatnonzero(col)
        if rows.size:
            T[rows] -= np.outer(col[rows], T[r])
            self.beta[rows] -= col[rows] * self.beta[r]
        T[:, q] = 0.0
        T[r, q] = 1.0
        self.d -= self.d[q] * T[r]
        self.d[q] = 0.0
        leaving = self.basis[r]
        self.basis[r] = q
        self.is_basic[leaving] = False
        self.is_basic[q] = True
        self.iterations += 1
        self._since_refactor += 1
        if self._since_refactor >= REFACTOR_EVERY:
            self.refactor()

    def _movable(self) -> np.ndarray:
        return ~self.is_basic & (self.up > self.lo)

    def dual_simplex(self, max_iter: int) -> str:
        degenerate = 0
        for _ in range(max_iter):
            xB = self.basic_values()
            loB = self.lo[self.basis]
            upB = self.up[self.basis]
            below = loB - xB
            above = xB - upB
            viol = np.maximum(below, above)
            tol = self.primal_tol * (1.0 + np.abs(np.where(below > above, loB, upB)))
            tol = np.where(np.isfinite(tol), tol, self.primal_tol)
            bad = viol > tol
            if not bad.any():
                return "optimal"
            bland = degenerate >= BLAND_AFTER
            if bland:
                cand = np.flatnonzero(bad)
                r = int(cand[np.argmin(self.basis[cand])])
            else:
                r = int(np.argmax(np.where(bad, viol, -np.inf)))
            row = self.T[r]
            movable = self._movable()
            if below[r] > above[r]:
                elig = movable & ((~self.at_upper & (row < -PIVOT_TOL)) | (self.at_upper & (row > PIVOT_TOL)))
                to_upper = False
            else:
                elig = movable & ((~self.at_upper & (row > PIVOT_TOL)) | (self.at_upper & (row < -PIVOT_TOL)))
                to_upper = True
            cand = np.flatnonzero(elig)
            if cand.size == 0:
                return "infeasible"
            ratios = np.abs(self.d[cand]) / np.abs(row[cand])
            best = ratios.min()
            ties = cand[ratios <= best + 1e-12 * max(1.0, best)]
            if bland:
                q = int(ties.min())
            else:
                q = int(ties[np.argmax(np.abs(row[ties]))])
            degenerate = degenerate + 1 if best <= self.dual_tol else 0
            leaving = self.basis[r]
            self._pivot(r, q)
            self.at_upper[leaving] = to_upper
        raise SimplexError("dual simplex iteration limit reached")

    def primal_simplex(self, max_iter: int) -> str:
        degenerate = 0
        for _ in range(max_iter):
            movable = self._movable()
            d = self.d
            elig = movable & ((~self.at_upper & (d < -self.dual_tol)) | (self.at_upper & (d > self.dual_tol)))
            cand = np.flatnonzero(elig)
            if cand.size == 0:
                return "optimal"
            bland = degenerate >= BLAND_AFTER
            q = int(cand.min()) if bland else int(cand[np.argmax(np.abs(d[cand]))])
            sigma = -1.0 if self.at_upper[q] else 1.0
            xB = self.basic_values()
            g = -sigma * self.T[:, q]
            loB = self.lo[self.basis]
            upB = self.up[self.basis]
            limit = np.full(self.m, np.inf)
            dec = g < -PIVOT_TOL
            inc = g > PIVOT_TOL
            with np.errstate(invalid="ignore"):
                limit[dec] = (xB[dec] - loB[dec]) / -g[dec]
                limit[inc] = (upB[inc] - xB[inc]) / g[inc]
            limit = np.where(np.isnan(limit), np.inf, np.maximum(limit, 0.0))
            flip = self.up[q] - self.lo[q]
            theta = limit.min() if self.m else np.inf
            if flip <= theta:
                if not np.isfinite(flip):
                    return "unbounded"
                self.at_upper[q] = not self.at_upper[q]
                degenerate = 0
                continue
            if not np.isfinite(theta):
                return "unbounded"
            ties = np.flatnonzero(limit <= theta + 1e-12)
            if bland:
                r = int(ties[np.argmin(self.basis[ties])])
            else:
                r = int(ties[np.argmax(np.abs(g[ties]))])
            degenerate = degenerate + 1 if theta <= self.primal_tol else 0
            leaving = self.basis[r]
            to_upper = bool(g[r] > 0)
            self._pivot(r, q)
            self.at_upper[leaving] = to_upper
        raise SimplexError("primal simplex iteration limit reached")

    def solve(self) -> str:
        """Re-optimise from the current basis; returns the LP status."""
        if np.any(self.lo[: self.n] > self.up[: self.n] + 1e-9):
            return "infeasible"
        max_iter = 50 * (self.m + self.n) + 1000
        for _ in range(5):
            status = self.dual_simplex(max_iter)
            if status != "optimal":
                return status
            status = self.primal_simplex(max_iter)
            if status != "optimal":
                return status
            if self._consistent():
                return "optimal"
            self.refactor()
        return "optimal"

    def _consistent(self) -> bool:
        xB = self.basic_values()
        loB = self.lo[self.basis]
        upB = self.up[self.basis]
        tol = 10 * self.primal_tol * (1.0 + np.abs(np.where(np.isfinite(loB), loB, 0.0)))
        if np.any(xB < loB - tol) or np.any(xB - upB > tol):
            return False
        x = self.nonbasic_values()
        x[self.basis] = xB
        resid = self.M @ x - self.b
        return bool(np.all(np.abs(resid) <= 1e-6 * (1.0 + np.abs(self.b))))

    def objective(self) -> float:
        return float(self.c[: self.n] @ self.solution())


def relaxation_tableau(model: MilpModel):
    dense = model.dense()
    sign = -1.0 if dense.sense == MAX else 1.0
    tab = Tableau(dense.A, dense.b, dense.senses, sign * dense.c, dense.lb, dense.ub)
    return tab, dense, sign


def simplex_solve(model: MilpModel) -> LpSolution:
    """Solve the LP relaxation of ``model`` (integrality dropped)."""
    tab, dense, sign = relaxation_tableau(model)
    status = tab.solve()
    if status != "optimal":
        return LpSolution(status, {}, float("nan"), tab.iterations)
    x = tab.solution()
    obj = float(dense.c @ x) + dense.constant
    return LpSolution("optimal", {i: float(v) for i, v in enumerate(x)}, obj, tab.iterations)


__all__ = ["Tableau", "SimplexError", "simplex_solve", "relaxation_tableau", "EQ", "GE", "LE"]
