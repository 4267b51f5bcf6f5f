from __future__ import annotations

import numpy as np

from ..lp import LpError, make_model
from ..lp.parametric import BasisCache
from ..lp.program import LinearProgram
from ..physical import Control
from .base import Policy, PolicyContext


class LpFamily:
    """Solver for ``lp`` with right-hand side ``r0 + R @ p``, returning ``outputs @ x``.

    Every solve restarts from the basis of a nominal solve, so the answer at
    ``p`` does not depend on earlier calls. While ``recording`` is set, the
    optimal bases met are stored in a :class:`BasisCache`; once frozen, points
    inside a stored region are answered from the cache.
    """

    def __init__(self, lp: LinearProgram, R: np.ndarray, outputs: np.ndarray, backend: str = "highs",
                 nominal=None, max_regions: int = 64):
        self.r0 = lp.rhs.copy()
        self.R = np.asarray(R, dtype=float)
        self.rows = np.arange(lp.num_rows)
        self.model = make_model(lp, backend)
        if nominal is not None:
            self.model.set_rhs(self.rows, self.rhs(nominal))
        self.model.solve()
        self.basis = self.model.get_basis()
        self.cache = BasisCache(lp, self.r0, self.R, outputs, max_regions=max_regions, nominal=nominal)
        self.recording = False
        self.can_record = hasattr(self.model, "basis_status")

    def rhs(self, p) -> np.ndarray:
        return self.r0 + self.R @ np.asarray(p, dtype=float)

    def solve(self, p):
        self.model.restart(self.basis)
        self.model.set_rhs(self.rows, self.rhs(p))
        sol = self.model.solve()
        if not sol.optimal:
            raise LpError(f"policy LP is {sol.status}")
        if self.recording and self.can_record:
            self.cache.add(*self.model.basis_status())
        return sol

    def outputs(self, P) -> np.ndarray:
        P = np.atleast_2d(np.asarray(P, dtype=float))
        if self.cache.frozen and len(self.cache):
            idx, Y = self.cache.lookup(P)
        else:
            idx, Y = np.full(len(P), -1), np.empty((len(P), self.cache.L.shape[0]))
        for i in np.flatnonzero(idx < 0):
            Y[i] = self.cache.L @ self.solve(P[i]).x
        return Y


class FamilyPolicy(Policy):
    """Policy whose decision at step ``t`` is read off one parametric LP.

    Subclasses provide ``_build_family(t)`` and ``parameters(t, states,
    histories)``; the LP outputs are the three controls.
    """

    def __init__(self):
        self._families: dict[int, LpFamily] = {}
        self.recording = False
        self.frozen = False

    def _build_family(self, t: int) -> LpFamily:
        raise NotImplementedError

    def parameters(self, t: int, states: np.ndarray, histories: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def family(self, t: int) -> LpFamily:
        fam = self._families.get(t)
        if fam is None:
            fam = self._families[t] = self._build_family(t)
            fam.recording = self.recording
            if self.frozen:
                fam.cache.freeze()
        return fam

    def start_recording(self) -> None:
        self.recording = True
        for fam in self._families.values():
            fam.recording = True

    def freeze(self) -> None:
        """Stop recording bases; from now on cached regions answer first."""
        self.recording, self.frozen = False, True
        for fam in self._families.values():
            fam.recording = False
            fam.cache.freeze()

    @property
    def cached_regions(self) -> int:
        return sum(len(f.cache) for f in self._families.values())

    def decide_batch(self, t: int, states: np.ndarray, histories: np.ndarray, previous=None) -> np.ndarray:
        return self.family(t).outputs(self.parameters(t, states, histories))

    def decide(self, ctx: PolicyContext) -> Control:
        P = self.parameters(ctx.t, np.asarray(ctx.state, dtype=float)[None], np.asarray(ctx.history)[None])
        return Control(*(float(v) for v in self.family(ctx.t).outputs(P)[0]))
