"""Linear programming layer: LP container, solvers and cut-based functions."""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .highs import HighsModel
from .polyhedral import EmptyCutSetError, PolyhedralFunction, add_cut
from .program import (
    EQ,
    GE,
    LE,
    LinearProgram,
    LpError,
    LpSolution,
    NumericalFailure,
    complementarity_residual,
    primal_residual,
)
from .simplex import solve_simplex

BACKENDS = ("highs", "simplex")


class SimplexModel:
    """Same interface as :class:`HighsModel`, re-solving from scratch each time
    with the bundled simplex."""

    def __init__(self, lp: LinearProgram):
        self.lp = lp.with_rhs(lp.rhs)

    @property
    def num_rows(self) -> int:
        return self.lp.num_rows

    def set_rhs(self, rows, values) -> None:
        self.lp.rhs[np.asarray(rows, dtype=int)] = values

    def add_rows(self, A, senses, rhs) -> None:
        lp = self.lp
        self.lp = LinearProgram(
            lp.c, sp.vstack([lp.A, sp.csr_matrix(A)]).tocsr(),
            np.concatenate([lp.senses, np.asarray(senses, dtype="<U1")]),
            np.concatenate([lp.rhs, np.asarray(rhs, dtype=float)]),
            lp.lb, lp.ub, lp.offset,
        )

    def get_basis(self):
        return None

    def set_basis(self, basis) -> None:
        pass

    def restart(self, basis=None) -> None:
        pass

    def solve(self) -> LpSolution:
        return solve_simplex(self.lp)


def make_model(lp: LinearProgram, backend: str = "highs"):
    if backend == "highs":
        return HighsModel(lp)
    if backend == "simplex":
        return SimplexModel(lp)
    raise ValueError(f"unknown LP backend {backend!r}; expected one of {BACKENDS}")


def solve(lp: LinearProgram, backend: str = "simplex") -> LpSolution:
    """One-shot solve; the bundled simplex is the default reference solver."""
    return make_model(lp, backend).solve()


__all__ = [
    "BACKENDS", "EQ", "GE", "LE", "EmptyCutSetError", "HighsModel", "LinearProgram", "LpError",
    "LpSolution", "NumericalFailure", "PolyhedralFunction", "SimplexModel", "add_cut",
    "complementarity_residual", "make_model", "primal_residual", "solve", "solve_simplex",
]
