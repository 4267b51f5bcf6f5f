from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .program import LinearProgram


class LpBuilder:
    """Incremental assembly of a :class:`LinearProgram` by named variables and rows."""

    def __init__(self):
        self.cost: list[float] = []
        self.lb: list[float] = []
        self.ub: list[float] = []
        self.var_names: list[str] = []
        self._ri: list[int] = []
        self._cj: list[int] = []
        self._v: list[float] = []
        self.senses: list[str] = []
        self.rhs: list[float] = []
        self.row_names: list[str] = []

    def var(self, name: str, lb: float = 0.0, ub: float = np.inf, cost: float = 0.0) -> int:
        self.cost.append(cost)
        self.lb.append(lb)
        self.ub.append(ub)
        self.var_names.append(name)
        return len(self.cost) - 1

    def row(self, terms, sense: str, rhs: float, name: str = "") -> int:
        i = len(self.rhs)
        for j, v in terms:
            if v != 0.0:
                self._ri.append(i)
                self._cj.append(j)
                self._v.append(v)
        self.senses.append(sense)
        self.rhs.append(rhs)
        self.row_names.append(name or f"r{i}")
        return i

    def build(self) -> LinearProgram:
        m, n = len(self.rhs), len(self.cost)
        A = sp.csr_matrix((self._v, (self._ri, self._cj)), shape=(m, n))
        return LinearProgram(np.array(self.cost), A, np.array(self.senses, dtype="<U1"),
                             np.array(self.rhs), np.array(self.lb), np.array(self.ub),
                             var_names=list(self.var_names), row_names=list(self.row_names))
