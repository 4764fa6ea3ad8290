"""Thin conic-program container over cvxpy, solved with Clarabel.

A :class:`ConicProgram` keeps the cvxpy problem together with a name map for
its variables and parameters so subproblem builders can compile once and be
re-solved with new data.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import cvxpy as cp
import numpy as np

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
NUMERICAL_FAILURE = "numerical-failure"

RESIDUAL_TOL = 1e-7
SOLVER = cp.CLARABEL
SOLVER_OPTS = {"tol_feas": 1e-10, "tol_gap_abs": 1e-10, "tol_gap_rel": 1e-10}


class SolverError(RuntimeError):
    """The backend failed in a way that should not be retried silently."""


@dataclass
class ConicProgram:
    problem: cp.Problem
    variables: dict
    parameters: dict = field(default_factory=dict)
    name: str = ""
    compiled: bool = False

    def set(self, **values) -> "ConicProgram":
        for key, value in values.items():
            self.parameters[key].value = value
        return self


@dataclass
class ConicSolution:
    status: str
    values: dict
    objective: float
    residual: float = float("nan")
    info: str = ""


def max_residual(problem: cp.Problem) -> float:
    worst = 0.0
    for con in problem.constraints:
        viol = con.violation()
        worst = max(worst, float(np.max(viol)) if np.size(viol) else 0.0)
    return worst


def solve_conic(prog: ConicProgram) -> ConicSolution:
    """Solve and classify as optimal / infeasible / numerical-failure.

    cvxpy's first solve of a parametrized problem compiles it and takes a
    slightly different numerical path from later solves. That difference is
    amplified by the accept/reject logic of the AO drivers, so the first
    solve is run once and discarded to make results independent of history.
    """
    if not prog.compiled:
        try:
            prog.problem.solve(solver=SOLVER, **SOLVER_OPTS)
        except cp.error.SolverError:
            pass
        prog.compiled = True
    try:
        prog.problem.solve(solver=SOLVER, **SOLVER_OPTS)
    except cp.error.SolverError as exc:
        return ConicSolution(NUMERICAL_FAILURE, {}, float("nan"), info=str(exc))
    status = prog.problem.status
    if status in (cp.INFEASIBLE, cp.INFEASIBLE_INACCURATE):
        return ConicSolution(INFEASIBLE, {}, float("nan"), info=status)
    if status not in (cp.OPTIMAL, cp.OPTIMAL_INACCURATE):
        return ConicSolution(NUMERICAL_FAILURE, {}, float("nan"), info=status)
    residual = max_residual(prog.problem)
    values = {name: np.array(v.value) for name, v in prog.variables.items()}
    if not residual <= RESIDUAL_TOL:
        return ConicSolution(NUMERICAL_FAILURE, values, float(prog.problem.value), residual,
                             info=f"{status}; primal residual {residual:.3e}")
    return ConicSolution(OPTIMAL, values, float(prog.problem.value), residual, info=status)


def dump_conic(prog: ConicProgram, path) -> None:
    """Write the compiled standard form: maximize -c^T x s.t. b - A x in K.

    Sections: ``c`` (dense), ``A`` as ``row col value`` triplets, ``b``
    (dense) and a ``cones`` line listing the block sizes in row order.
    """
    data, _, _ = prog.problem.get_problem_data(SOLVER)
    c, A, b = data["c"], data["A"].tocoo(), data["b"]
    dims = data["dims"]
    lines = [f"# {prog.name or 'conic program'}",
             f"size {A.shape[0]} {A.shape[1]}",
             "c " + " ".join(repr(float(x)) for x in c),
             "b " + " ".join(repr(float(x)) for x in b),
             f"cones zero={dims.zero} nonneg={dims.nonneg} soc={list(dims.soc)} exp={dims.exp}",
             "A"]
    lines += [f"{i} {j} {float(v)!r}" for i, j, v in zip(A.row, A.col, A.data)]
    Path(path).write_text("\n".join(lines) + "\n")
