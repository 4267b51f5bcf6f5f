"""Reuse of optimal bases across right-hand sides.

For a family ``min c.x  s.t.  A x (<=,=,>=) r0 + R p,  lb <= x <= ub`` the
cost, matrix and bounds do not depend on ``p``. A basis that was optimal for
one ``p`` stays dual feasible for every ``p``; where its basic solution is
also primal feasible it is optimal. Each stored basis therefore gives the
solution as an affine function of ``p`` on its own region, and a membership
test is a handful of array operations that vectorize over many points.

Lookups are written so that the answer for one point never depends on the
other points of the batch: everything is expanded around a fixed nominal
``p_bar`` and the deviation ``p - p_bar`` is accumulated column by column in a
fixed order with elementwise operations (no BLAS products, whose rounding
can change with the batch shape). Columns where a point equals ``p_bar`` add
exact zeros, so which columns vary elsewhere in the batch does not matter.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .program import EQ, GE, LE, LinearProgram

LOWER, BASIC, UPPER, ZERO = 0, 1, 2, 3


class _Region:
    __slots__ = ("key", "basic_cols", "lo", "hi", "v0", "vp", "row_sense", "g0", "gp", "y0", "yp")

    def at(self, base: np.ndarray, slope: np.ndarray, D: np.ndarray, cols: np.ndarray) -> np.ndarray:
        """``base + slope @ d`` for every row ``d`` of ``D``, summed over ``cols`` in order."""
        out = np.broadcast_to(base, (len(D), len(base))).copy()
        for k in cols:
            out += D[:, k, None] * slope[None, :, k]
        return out


class BasisCache:
    """Optimal bases of one LP family, searched in insertion order.

    ``outputs`` is a ``(q, n)`` matrix; lookups return ``outputs @ x``.
    ``nominal`` is the expansion point ``p_bar`` (zeros by default); choose the
    parameter value most points share.
    """

    def __init__(self, lp: LinearProgram, r0: np.ndarray, R: np.ndarray, outputs: np.ndarray,
                 tolerance: float = 1e-9, max_regions: int = 64, nominal=None):
        self.A = sp.csr_matrix(lp.A)
        self.lb, self.ub = lp.lb, lp.ub
        self.senses = lp.senses
        self.r0 = np.asarray(r0, dtype=float)
        self.R = np.asarray(R, dtype=float)
        self.L = np.asarray(outputs, dtype=float)
        self.nominal = np.zeros(self.R.shape[1]) if nominal is None else np.asarray(nominal, dtype=float).copy()
        self.tol = tolerance
        self.max_regions = max_regions
        self.regions: list[_Region] = []
        self._keys: set[bytes] = set()
        self.frozen = False

    @property
    def dim(self) -> int:
        return self.R.shape[1]

    def __len__(self) -> int:
        return len(self.regions)

    def freeze(self) -> None:
        self.frozen = True

    def add(self, col_status: np.ndarray, row_status: np.ndarray) -> bool:
        """Store a basis; returns False for duplicates, singular bases, a full or frozen cache."""
        if self.frozen or len(self.regions) >= self.max_regions:
            return False
        col_status = np.asarray(col_status, dtype=np.int8)
        row_status = np.asarray(row_status, dtype=np.int8)
        key = col_status.tobytes() + row_status.tobytes()
        if key in self._keys:
            return False
        bc = np.flatnonzero(col_status == BASIC)
        nc = np.flatnonzero(col_status != BASIC)
        br = np.flatnonzero(row_status == BASIC)
        nr = np.flatnonzero(row_status != BASIC)
        if len(bc) != len(nr):
            return False
        n = self.A.shape[1]
        xn = np.zeros(len(nc))
        st = col_status[nc]
        lbn, ubn = self.lb[nc], self.ub[nc]
        xn = np.where(st == UPPER, ubn, np.where(st == ZERO, 0.0, lbn))
        xn = np.where(np.isfinite(xn), xn, 0.0)
        A_nr = self.A[nr]
        rhs0 = self.r0[nr] - A_nr[:, nc] @ xn
        rhsp = self.R[nr]
        if len(bc):
            K = A_nr[:, bc].tocsc()
            try:
                lu = spla.splu(K)
            except RuntimeError:
                return False
            sol = lu.solve(np.column_stack([rhs0, rhsp]))
            if not np.all(np.isfinite(sol)):
                return False
        else:
            sol = np.zeros((0, 1 + self.dim))
        x0 = np.zeros(n)
        xp = np.zeros((n, self.dim))
        x0[nc] = xn
        x0[bc] = sol[:, 0]
        xp[bc] = sol[:, 1:]
        reg = _Region()
        reg.key = key
        reg.basic_cols = bc
        reg.lo, reg.hi = self.lb[bc], self.ub[bc]
        # values at the nominal point plus slopes
        pb = self.nominal
        reg.vp = xp[bc]
        reg.v0 = x0[bc] + reg.vp @ pb
        A_br = self.A[br]
        reg.row_sense = self.senses[br]
        reg.gp = np.asarray(A_br @ xp) - self.R[br]
        reg.g0 = A_br @ x0 - self.r0[br] + reg.gp @ pb
        reg.yp = self.L @ xp
        reg.y0 = self.L @ x0 + reg.yp @ pb
        self.regions.append(reg)
        self._keys.add(key)
        return True

    def _feasible(self, reg: _Region, D: np.ndarray, cols: np.ndarray) -> np.ndarray:
        tol = self.tol
        ok = np.ones(len(D), dtype=bool)
        if len(reg.v0):
            v = reg.at(reg.v0, reg.vp, D, cols)
            scale = tol * np.maximum(1.0, np.abs(v))
            ok &= np.all((v >= reg.lo - scale) & (v <= reg.hi + scale), axis=1)
        if len(reg.g0):
            g = reg.at(reg.g0, reg.gp, D, cols)
            scale = tol * np.maximum(1.0, np.abs(g))
            le = reg.row_sense == LE
            ge = reg.row_sense == GE
            eq = reg.row_sense == EQ
            bad = (le & (g > scale)) | (ge & (g < -scale)) | (eq & (np.abs(g) > scale))
            ok &= ~np.any(bad, axis=1)
        return ok

    def lookup(self, P) -> tuple[np.ndarray, np.ndarray]:
        """For each row of ``P``: index of the first region containing it
        (``-1`` if none) and the outputs there (``nan`` for misses)."""
        P = np.atleast_2d(np.asarray(P, dtype=float))
        D = P - self.nominal
        cols = np.flatnonzero(np.any(D != 0.0, axis=0))
        idx = np.full(len(P), -1)
        Y = np.full((len(P), self.L.shape[0]), np.nan)
        todo = np.arange(len(P))
        for j, reg in enumerate(self.regions):
            if not len(todo):
                break
            ok = self._feasible(reg, D[todo], cols)
            hit = todo[ok]
            idx[hit] = j
            Y[hit] = reg.at(reg.y0, reg.yp, D[hit], cols)
            todo = todo[~ok]
        return idx, Y
