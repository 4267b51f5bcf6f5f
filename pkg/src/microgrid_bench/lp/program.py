from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp

LE, EQ, GE = "<", "=", ">"
_SENSE_TEXT = {LE: "<=", EQ: "=", GE: ">="}


class LpError(RuntimeError):
    pass


class NumericalFailure(LpError):
    pass


@dataclass
class LinearProgram:
    """``min c.x + offset`` subject to ``A x (<,=,>) rhs`` and ``lb <= x <= ub``."""

    c: np.ndarray
    A: sp.csr_matrix
    senses: np.ndarray
    rhs: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    offset: float = 0.0
    var_names: list[str] | None = None
    row_names: list[str] | None = None

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float)
        self.A = sp.csr_matrix(self.A, dtype=float)
        self.senses = np.asarray(self.senses, dtype="<U1")
        self.rhs = np.asarray(self.rhs, dtype=float)
        self.lb = np.asarray(self.lb, dtype=float)
        self.ub = np.asarray(self.ub, dtype=float)
        n = len(self.c)
        m = self.A.shape[0]
        if self.A.shape[1] != n:
            raise ValueError(f"matrix has {self.A.shape[1]} columns, expected {n}")
        if len(self.senses) != m or len(self.rhs) != m:
            raise ValueError("senses and rhs must have one entry per row")
        if len(self.lb) != n or len(self.ub) != n:
            raise ValueError("bounds must have one entry per variable")
        if np.any(self.lb > self.ub):
            raise ValueError("inconsistent variable bounds")
        if not set(np.unique(self.senses)) <= {LE, EQ, GE}:
            raise ValueError("row senses must be '<', '=' or '>'")

    @property
    def num_vars(self) -> int:
        return len(self.c)

    @property
    def num_rows(self) -> int:
        return self.A.shape[0]

    def with_rhs(self, rhs: np.ndarray) -> LinearProgram:
        return replace(self, rhs=np.asarray(rhs, dtype=float).copy())

    def row_bounds(self) -> tuple[np.ndarray, np.ndarray]:
        lo = np.where(self.senses == LE, -np.inf, self.rhs)
        hi = np.where(self.senses == GE, np.inf, self.rhs)
        return lo, hi

    def to_text(self) -> str:
        """Human-readable dump.

        Grammar, one item per line::

            minimize <coef> <var> + ... + <offset>
            row <name>: <coef> <var> + ... <sense> <rhs>
            bound <lb> <= <var> <= <ub>
            end
        """
        vn = self.var_names or [f"x{j}" for j in range(self.num_vars)]
        rn = self.row_names or [f"r{i}" for i in range(self.num_rows)]
        lines = ["minimize " + " + ".join(f"{float(v)!r} {vn[j]}" for j, v in enumerate(self.c) if v != 0.0)
                 + f" + {float(self.offset)!r}"]
        A = self.A
        for i in range(self.num_rows):
            sl = slice(A.indptr[i], A.indptr[i + 1])
            terms = " + ".join(f"{float(v)!r} {vn[j]}" for j, v in zip(A.indices[sl], A.data[sl]))
            lines.append(f"row {rn[i]}: {terms or '0'} {_SENSE_TEXT[self.senses[i]]} {float(self.rhs[i])!r}")
        for j in range(self.num_vars):
            lines.append(f"bound {float(self.lb[j])!r} <= {vn[j]} <= {float(self.ub[j])!r}")
        lines.append("end")
        return "\n".join(lines) + "\n"


@dataclass
class LpSolution:
    status: str
    x: np.ndarray = field(default_factory=lambda: np.empty(0))
    objective: float = float("nan")
    # d objective / d rhs for every row
    duals: np.ndarray = field(default_factory=lambda: np.empty(0))
    reduced_costs: np.ndarray = field(default_factory=lambda: np.empty(0))
    iterations: int = 0

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"


def primal_residual(lp: LinearProgram, x: np.ndarray) -> float:
    """Largest violation of rows and bounds at ``x``."""
    ax = lp.A @ x
    lo, hi = lp.row_bounds()
    viol = np.concatenate([
        np.maximum(lo - ax, 0.0), np.maximum(ax - hi, 0.0),
        np.maximum(lp.lb - x, 0.0), np.maximum(x - lp.ub, 0.0),
    ])
    return float(viol.max(initial=0.0))


def complementarity_residual(lp: LinearProgram, sol: LpSolution) -> float:
    """Largest |dual * row slack| over the rows."""
    slack = lp.A @ sol.x - lp.rhs
    return float(np.max(np.abs(sol.duals * slack), initial=0.0))
