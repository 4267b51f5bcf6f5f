"""Dense bounded-variable primal simplex with dual extraction.

Two phases with artificial variables. Pricing is Dantzig's rule, switching to
Bland's rule after a run of degenerate pivots, so the pivot sequence (and the
returned vertex) is a deterministic function of the input.
"""

from __future__ import annotations

import numpy as np

from .program import GE, LE, LinearProgram, LpSolution, NumericalFailure

OPT_TOL = 1e-9
FEAS_TOL = 1e-9
PIVOT_TOL = 1e-11
DEGENERATE_STREAK = 25
REFACTOR_EVERY = 40

_AT_LOWER, _AT_UPPER, _FREE, _BASIC = 0, 1, 2, 3


class _Tableau:
    def __init__(self, M, b, lo, hi, x, basis, status):
        self.M = M
        self.b = b
        self.lo = lo
        self.hi = hi
        self.x = x
        self.basis = basis
        self.status = status
        self.iterations = 0
        self.refactor()

    def refactor(self):
        self.Binv = np.linalg.inv(self.M[:, self.basis])
        self.since_refactor = 0
        self.recompute_basics()

    def recompute_basics(self):
        xn = self.x.copy()
        xn[self.basis] = 0.0
        self.x[self.basis] = self.Binv @ (self.b - self.M @ xn)

    def run(self, cost, max_iter):
        degenerate = 0
        M, lo, hi, x = self.M, self.lo, self.hi, self.x
        while True:
            if self.iterations >= max_iter:
                raise NumericalFailure(f"simplex exceeded {max_iter} pivots")
            y = self.Binv.T @ cost[self.basis]
            d = cost - M.T @ y
            st = self.status
            movable = (st != _BASIC) & (hi > lo)
            up = movable & (st != _AT_UPPER) & (d < -OPT_TOL)
            down = movable & (st != _AT_LOWER) & (d > OPT_TOL)
            cand = np.flatnonzero(up | down)
            if cand.size == 0:
                return "optimal"
            if degenerate >= DEGENERATE_STREAK:
                j = int(cand[0])
            else:
                j = int(cand[np.argmax(np.abs(d[cand]))])
            direction = 1.0 if up[j] else -1.0

            alpha = self.Binv @ M[:, j]
            delta = -direction * alpha
            xb = x[self.basis]
            lob, hib = lo[self.basis], hi[self.basis]
            ratios = np.full(len(self.basis), np.inf)
            dec = delta < -PIVOT_TOL
            inc = delta > PIVOT_TOL
            with np.errstate(invalid="ignore"):
                ratios[dec] = np.maximum(xb[dec] - lob[dec], 0.0) / -delta[dec]
                ratios[inc] = np.maximum(hib[inc] - xb[inc], 0.0) / delta[inc]
            ratios[np.isnan(ratios)] = np.inf
            flip = hi[j] - lo[j]
            theta = ratios.min(initial=np.inf)
            if not np.isfinite(theta) and not np.isfinite(flip):
                return "unbounded"
            self.iterations += 1
            if flip <= theta:
                x[j] = hi[j] if direction > 0 else lo[j]
                self.status[j] = _AT_UPPER if direction > 0 else _AT_LOWER
                x[self.basis] = xb + flip * delta
                degenerate = 0
                continue
            ties = np.flatnonzero(ratios <= theta + 1e-12)
            if degenerate >= DEGENERATE_STREAK:
                r = int(ties[np.argmin(np.asarray(self.basis)[ties])])
            else:
                r = int(ties[np.argmax(np.abs(alpha[ties]))])
            degenerate = degenerate + 1 if theta <= 1e-12 else 0
            leaving = self.basis[r]
            x[self.basis] = xb + theta * delta
            x[j] = x[j] + direction * theta
            x[leaving] = lob[r] if delta[r] < 0 else hib[r]
            self.status[leaving] = _AT_LOWER if delta[r] < 0 else _AT_UPPER
            self.status[j] = _BASIC
            self.basis[r] = j
            self._pivot(r, alpha)

    def _pivot(self, r, alpha):
        self.since_refactor += 1
        if self.since_refactor >= REFACTOR_EVERY:
            self.refactor()
            return
        Binv = self.Binv
        Binv[r] /= alpha[r]
        col = alpha.copy()
        col[r] = 0.0
        Binv -= np.outer(col, Binv[r])
        self.recompute_basics()


def _initial_value(lo, hi):
    if np.isfinite(lo):
        return lo, _AT_LOWER
    if np.isfinite(hi):
        return hi, _AT_UPPER
    return 0.0, _FREE


def solve_simplex(lp: LinearProgram, max_iter: int | None = None) -> LpSolution:
    m, n = lp.num_rows, lp.num_vars
    A = lp.A.toarray()
    if max_iter is None:
        max_iter = 50 * (m + n) + 1000
    s_lo = np.where(lp.senses == LE, 0.0, np.where(lp.senses == GE, -np.inf, 0.0))
    s_hi = np.where(lp.senses == GE, 0.0, np.where(lp.senses == LE, np.inf, 0.0))

    x = np.zeros(n + m)
    status = np.empty(n + m, dtype=int)
    for j in range(n):
        x[j], status[j] = _initial_value(lp.lb[j], lp.ub[j])
    resid = lp.rhs - A @ x[:n]

    art_rows, art_sign = [], []
    basis = []
    for i in range(m):
        if s_lo[i] - FEAS_TOL <= resid[i] <= s_hi[i] + FEAS_TOL:
            x[n + i] = resid[i]
            status[n + i] = _BASIC
            basis.append(n + i)
        else:
            sv = min(max(resid[i], s_lo[i]), s_hi[i])
            x[n + i] = sv
            status[n + i] = _AT_LOWER if sv == s_lo[i] else _AT_UPPER
            art_rows.append(i)
            art_sign.append(1.0 if resid[i] - sv > 0 else -1.0)
            basis.append(n + m + len(art_rows) - 1)
    na = len(art_rows)
    M = np.zeros((m, n + m + na))
    M[:, :n] = A
    M[:, n:n + m] = np.eye(m)
    for k, (i, sgn) in enumerate(zip(art_rows, art_sign)):
        M[i, n + m + k] = sgn
    lo = np.concatenate([lp.lb, s_lo, np.zeros(na)])
    hi = np.concatenate([lp.ub, s_hi, np.full(na, np.inf)])
    x = np.concatenate([x, np.zeros(na)])
    status = np.concatenate([status, np.full(na, _BASIC)])
    for k, i in enumerate(art_rows):
        x[n + m + k] = abs(resid[i] - x[n + i])

    tab = _Tableau(M, lp.rhs.copy(), lo, hi, x, basis, status)
    if na:
        cost1 = np.zeros(n + m + na)
        cost1[n + m:] = 1.0
        tab.run(cost1, max_iter)
        tab.refactor()
        infeas = float(tab.x[n + m:].sum())
        if infeas > 1e-7 * max(1.0, float(np.abs(lp.rhs).max(initial=0.0))):
            return LpSolution("infeasible", iterations=tab.iterations)
        tab.hi[n + m:] = 0.0
        _drive_out_artificials(tab, n + m)

    cost2 = np.concatenate([lp.c, np.zeros(m + na)])
    outcome = tab.run(cost2, max_iter)
    if outcome == "unbounded":
        return LpSolution("unbounded", iterations=tab.iterations)
    tab.refactor()
    y = tab.Binv.T @ cost2[tab.basis]
    d = cost2 - tab.M.T @ y
    z = tab.x[:n].copy()
    return LpSolution(
        status="optimal",
        x=z,
        objective=float(lp.c @ z + lp.offset),
        duals=y,
        reduced_costs=d[:n],
        iterations=tab.iterations,
    )


def _drive_out_artificials(tab: _Tableau, first_art: int) -> None:
    for r, var in enumerate(list(tab.basis)):
        if var < first_art:
            continue
        row = tab.Binv[r] @ tab.M[:, :first_art]
        nonbasic = tab.status[:first_art] != _BASIC
        cand = np.flatnonzero(nonbasic & (np.abs(row) > 1e-9))
        if cand.size == 0:
            continue
        j = int(cand[np.argmax(np.abs(row[cand]))])
        alpha = tab.Binv @ tab.M[:, j]
        tab.status[var] = _AT_LOWER
        tab.x[var] = 0.0
        tab.status[j] = _BASIC
        tab.basis[r] = j
        tab._pivot(r, alpha)
