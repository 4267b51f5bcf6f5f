"""Persistent HiGHS model behind the same interface as the bundled simplex."""

from __future__ import annotations

import highspy
import numpy as np
import scipy.sparse as sp

from .program import GE, LE, LinearProgram, LpError, LpSolution

_INF = highspy.kHighsInf
_STATUS = {
    highspy.HighsModelStatus.kOptimal: "optimal",
    highspy.HighsModelStatus.kInfeasible: "infeasible",
    highspy.HighsModelStatus.kUnbounded: "unbounded",
}


# worker threads each HiGHS instance may use (0 lets HiGHS decide)
_THREADS = 0


def set_threads(n: int) -> None:
    """Thread count for HiGHS instances created from now on."""
    global _THREADS
    if n < 0:
        raise ValueError("thread count must be nonnegative")
    _THREADS = int(n)


def _row_bounds(senses, rhs):
    lo = np.where(senses == LE, -_INF, rhs)
    hi = np.where(senses == GE, _INF, rhs)
    return lo, hi


class HighsModel:
    """Keeps one HiGHS instance alive so right-hand-side changes and added rows
    re-solve from the previous basis."""

    def __init__(self, lp: LinearProgram):
        self.senses = lp.senses.copy()
        self.rhs = lp.rhs.copy()
        self.offset = lp.offset
        self.num_vars = lp.num_vars
        h = highspy.Highs()
        h.setOptionValue("output_flag", False)
        h.setOptionValue("presolve", "off")
        h.setOptionValue("solver", "simplex")
        if _THREADS:
            h.setOptionValue("threads", _THREADS)
        model = highspy.HighsLp()
        model.num_col_ = lp.num_vars
        model.num_row_ = lp.num_rows
        model.col_cost_ = lp.c
        model.col_lower_ = np.where(np.isfinite(lp.lb), lp.lb, -_INF)
        model.col_upper_ = np.where(np.isfinite(lp.ub), lp.ub, _INF)
        lo, hi = _row_bounds(self.senses, self.rhs)
        model.row_lower_ = lo
        model.row_upper_ = hi
        csc = sp.csc_matrix(lp.A)
        model.a_matrix_.format_ = highspy.MatrixFormat.kColwise
        model.a_matrix_.start_ = csc.indptr
        model.a_matrix_.index_ = csc.indices
        model.a_matrix_.value_ = csc.data
        model.offset_ = lp.offset
        # a warning only reports dropped coefficients below the solver's threshold
        if h.passModel(model) == highspy.HighsStatus.kError:
            raise LpError("HiGHS rejected the model")
        self._h = h

    @property
    def num_rows(self) -> int:
        return len(self.rhs)

    def set_rhs(self, rows: np.ndarray, values: np.ndarray) -> None:
        rows = np.asarray(rows, dtype=np.int32)
        values = np.asarray(values, dtype=float)
        self.rhs[rows] = values
        lo, hi = _row_bounds(self.senses[rows], values)
        self._h.changeRowsBounds(len(rows), rows, lo, hi)

    def add_rows(self, A: sp.csr_matrix, senses, rhs) -> None:
        A = sp.csr_matrix(A)
        senses = np.asarray(senses, dtype="<U1")
        rhs = np.asarray(rhs, dtype=float)
        lo, hi = _row_bounds(senses, rhs)
        self._h.addRows(A.shape[0], lo, hi, A.nnz, A.indptr[:-1].astype(np.int32),
                        A.indices.astype(np.int32), A.data)
        self.senses = np.concatenate([self.senses, senses])
        self.rhs = np.concatenate([self.rhs, rhs])

    def get_basis(self):
        return self._h.getBasis()

    def set_basis(self, basis) -> None:
        self._h.setBasis(basis)

    def basis_status(self) -> tuple[np.ndarray, np.ndarray]:
        """Column and row statuses as small integers (lower, basic, upper, zero)."""
        b = self._h.getBasis()
        return (np.fromiter((int(v) for v in b.col_status), dtype=np.int8, count=self.num_vars),
                np.fromiter((int(v) for v in b.row_status), dtype=np.int8, count=self.num_rows))

    def restart(self, basis=None) -> None:
        """Drop all solver state so the next solve depends only on the model
        and ``basis``."""
        self._h.clearSolver()
        if basis is not None:
            self._h.setBasis(basis)

    def solve(self) -> LpSolution:
        h = self._h
        h.run()
        status = _STATUS.get(h.getModelStatus())
        if status is None:
            if h.getModelStatus() == highspy.HighsModelStatus.kUnboundedOrInfeasible:
                status = "infeasible"
            else:
                raise LpError(f"HiGHS returned {h.modelStatusToString(h.getModelStatus())}")
        if status != "optimal":
            return LpSolution(status)
        sol = h.getSolution()
        info = h.getInfo()
        return LpSolution(
            status="optimal",
            x=np.array(sol.col_value),
            objective=float(info.objective_function_value),
            duals=np.array(sol.row_dual),
            reduced_costs=np.array(sol.col_dual),
            iterations=int(info.simplex_iteration_count),
        )
