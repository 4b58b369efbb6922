"""Bounded integer/continuous linear models and solver result types."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np

FEAS_TOL = 1e-6
INT_TOL = 1e-6

CONTINUOUS = "continuous"
INTEGER = "integer"
BINARY = "binary"

LE, EQ, GE = "<=", "=", ">="
MAX, MIN = "max", "min"


class ModelError(ValueError):
    """Malformed model: unknown variable, infinite bound, bad sense."""


@dataclass(frozen=True)
class Variable:
    id: int
    name: str
    kind: str
    lb: float
    ub: float

    @property
    def is_integer(self) -> bool:
        return self.kind != CONTINUOUS


@dataclass(frozen=True)
class Constraint:
    terms: tuple[tuple[int, float], ...]
    sense: str
    rhs: float
    name: str = ""


@dataclass
class MilpModel:
    """A linear model over finitely bounded variables.

    Built incrementally with :meth:`add_var` / :meth:`add_constraint` /
    :meth:`set_objective`; treat it as read-only once handed to a solver.
    """

    name: str = ""
    variables: list[Variable] = field(default_factory=list)
    constraints: list[Constraint] = field(default_factory=list)
    objective: tuple[tuple[int, float], ...] = ()
    sense: str = MAX
    objective_constant: float = 0.0

    def add_var(self, name: str, kind: str = CONTINUOUS, lb: float = 0.0, ub: float = 1.0) -> int:
        if kind == BINARY:
            lb, ub = max(0.0, lb), min(1.0, ub)
        vid = len(self.variables)
        self.variables.append(Variable(vid, name, kind, float(lb), float(ub)))
        return vid

    def add_constraint(self, terms: Mapping[int, float] | Iterable[tuple[int, float]],
                       sense: str, rhs: float, name: str = "") -> int:
        items = terms.items() if isinstance(terms, Mapping) else terms
        merged: dict[int, float] = {}
        for vid, coef in items:
            merged[vid] = merged.get(vid, 0.0) + float(coef)
        cid = len(self.constraints)
        self.constraints.append(Constraint(tuple(merged.items()), sense, float(rhs), name))
        return cid

    def set_objective(self, terms: Mapping[int, float] | Iterable[tuple[int, float]],
                      sense: str = MAX, constant: float = 0.0) -> None:
        items = terms.items() if isinstance(terms, Mapping) else terms
        merged: dict[int, float] = {}
        for vid, coef in items:
            merged[vid] = merged.get(vid, 0.0) + float(coef)
        self.objective = tuple(merged.items())
        self.sense = sense
        self.objective_constant = float(constant)

    @property
    def n_vars(self) -> int:
        return len(self.variables)

    def var_by_name(self, name: str) -> Variable:
        for v in self.variables:
            if v.name == name:
                return v
        raise KeyError(name)

    def check(self) -> None:
        n = self.n_vars
        for v in self.variables:
            if v.kind not in (CONTINUOUS, INTEGER, BINARY):
                raise ModelError(f"variable {v.name!r}: unknown kind {v.kind!r}")
            if not (math.isfinite(v.lb) and math.isfinite(v.ub)):
                raise ModelError(f"variable {v.name!r}: bounds must be finite")
        for c in self.constraints:
            if c.sense not in (LE, EQ, GE):
                raise ModelError(f"constraint {c.name!r}: unknown sense {c.sense!r}")
            if not math.isfinite(c.rhs):
                raise ModelError(f"constraint {c.name!r}: rhs must be finite")
            for vid, coef in c.terms:
                if not 0 <= vid < n:
                    raise ModelError(f"constraint {c.name!r}: unknown variable id {vid}")
                if not math.isfinite(coef):
                    raise ModelError(f"constraint {c.name!r}: non-finite coefficient")
        if self.sense not in (MAX, MIN):
            raise ModelError(f"unknown objective sense {self.sense!r}")
        for vid, coef in self.objective:
            if not 0 <= vid < n:
                raise ModelError(f"objective: unknown variable id {vid}")
            if not math.isfinite(coef):
                raise ModelError("objective: non-finite coefficient")

    # dense views used by the solvers

    def dense(self) -> "DenseForm":
        self.check()
        n, m = self.n_vars, len(self.constraints)
        A = np.zeros((m, n))
        b = np.zeros(m)
        senses = []
        for i, con in enumerate(self.constraints):
            for vid, coef in con.terms:
                A[i, vid] += coef
            b[i] = con.rhs
            senses.append(con.sense)
        c = np.zeros(n)
        for vid, coef in self.objective:
            c[vid] += coef
        lb = np.array([v.lb for v in self.variables], dtype=float)
        ub = np.array([v.ub for v in self.variables], dtype=float)
        is_int = np.array([v.is_integer for v in self.variables], dtype=bool)
        return DenseForm(A, b, tuple(senses), c, lb, ub, is_int, self.sense, self.objective_constant)


@dataclass(frozen=True)
class DenseForm:
    A: np.ndarray
    b: np.ndarray
    senses: tuple[str, ...]
    c: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    is_int: np.ndarray
    sense: str
    constant: float


@dataclass(frozen=True)
class LpSolution:
    status: str  # optimal | infeasible | unbounded
    values: dict[int, float]
    objective: float
    iterations: int = 0


@dataclass(frozen=True)
class MipSolution:
    status: str  # optimal | feasible-incumbent | infeasible | limit-reached-no-incumbent
    values: dict[int, float]
    objective: float
    nodes_explored: int = 0
    bound_gap: float = 0.0

    @property
    def has_solution(self) -> bool:
        return self.status in ("optimal", "feasible-incumbent")


@dataclass(frozen=True)
class SolveLimits:
    max_nodes: int = 20000
    max_seconds: float = 30.0
    relative_gap_target: float = 1e-6
    engine: str = "highs"  # "native" | "highs"; only read by solve_mip

    def __post_init__(self):
        if self.max_nodes <= 0 or self.max_seconds <= 0 or self.relative_gap_target <= 0:
            raise ValueError("solve limits must be positive")
        if self.engine not in ("native", "highs"):
            raise ValueError(f"unknown engine {self.engine!r}")


@dataclass(frozen=True)
class Evaluation:
    feasible: bool
    violations: list[tuple[int, str, float]]  # (constraint index, name, slack)
    objective: float


def evaluate(model: MilpModel, point: Mapping[int, float]) -> Evaluation:
    """Objective and constraint slacks of ``point``; negative slack means violated.

    Variable bounds and integrality are checked too and reported with
    constraint index -1.
    """
    missing = [v.id for v in model.variables if v.id not in point]
    if missing:
        raise ModelError(f"point is missing variables {missing[:5]}")
    violations: list[tuple[int, str, float]] = []
    for i, con in enumerate(model.constraints):
        act = sum(coef * point[vid] for vid, coef in con.terms)
        if con.sense == LE:
            slack = con.rhs - act
        elif con.sense == GE:
            slack = act - con.rhs
        else:
            slack = -abs(act - con.rhs)
        if slack < -FEAS_TOL * max(1.0, abs(con.rhs)):
            violations.append((i, con.name, slack))
    for v in model.variables:
        x = point[v.id]
        if x < v.lb - FEAS_TOL or x > v.ub + FEAS_TOL:
            violations.append((-1, f"bound:{v.name}", min(x - v.lb, v.ub - x)))
        elif v.is_integer and abs(x - round(x)) > INT_TOL:
            violations.append((-1, f"integrality:{v.name}", -abs(x - round(x))))
    obj = model.objective_constant + sum(coef * point[vid] for vid, coef in model.objective)
    return Evaluation(not violations, violations, obj)


def _fmt_terms(terms, names) -> str:
    parts = []
    for vid, coef in terms:
        if coef == 0:
            continue
        sign = "-" if coef < 0 else "+"
        mag = abs(coef)
        parts.append(f"{sign} {names[vid]}" if mag == 1 else f"{sign} {mag:g} {names[vid]}")
    if not parts:
        return "0"
    text = " ".join(parts)
    return text[2:] if text.startswith("+ ") else text


def to_lp_text(model: MilpModel) -> str:
    """Human-readable CPLEX-LP-style dump for cross-checking by hand."""
    names = [v.name.replace(" ", "_") or f"x{v.id}" for v in model.variables]
    lines = ["\\ " + (model.name or "model"), "Maximize" if model.sense == MAX else "Minimize"]
    lines.append(" obj: " + _fmt_terms(model.objective, names))
    lines.append("Subject To")
    for i, con in enumerate(model.constraints):
        label = con.name.replace(" ", "_") or f"c{i}"
        lines.append(f" {label}: {_fmt_terms(con.terms, names)} {con.sense} {con.rhs:g}")
    lines.append("Bounds")
    for v, nm in zip(model.variables, names):
        lines.append(f" {v.lb:g} <= {nm} <= {v.ub:g}")
    generals = [nm for v, nm in zip(model.variables, names) if v.kind == INTEGER]
    binaries = [nm for v, nm in zip(model.variables, names) if v.kind == BINARY]
    if generals:
        lines.append("General")
        lines.append(" " + " ".join(generals))
    if binaries:
        lines.append("Binary")
        lines.append(" " + " ".join(binaries))
    lines.append("End")
    return "\n".join(lines) + "\n"
