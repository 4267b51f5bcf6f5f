from __future__ import annotations

import numpy as np

from ..problem import MicrogridProblem
from ..sddp import STATE_DIM, DiscreteDistribution, StageLayout, TrainedValueFunctions
from ..uncertainty import Ar1Model, lloyd_max_quantize
from .cached import FamilyPolicy, LpFamily

ONLINE_MODES = ("offline", "ar_conditioned")


class ConditionedDistributions:
    """Online laws ``alpha_t * w_t + beta_t + residual atoms``.

    The residuals of the AR(1) fit are quantized once per step, so atoms move
    with the last observation while the weights stay fixed.
    """

    def __init__(self, ar: Ar1Model, atoms: int = 10, seed=0):
        self.ar = ar
        self.residual = [lloyd_max_quantize(ar.residuals[:, t], atoms, seed=[seed, t])
                         for t in range(ar.horizon)]

    def weights(self, t: int) -> np.ndarray:
        return self.residual[t].weights

    def atoms(self, t: int, w_t) -> np.ndarray:
        """Atoms after observing ``w_t`` (shape ``(S, 2)``), or for a batch of
        observations ``(n, 2)`` (shape ``(n, S, 2)``)."""
        if w_t is None:
            base = self.ar.means[t]
        else:
            base = self.ar.alpha[t] * np.asarray(w_t, dtype=float) + self.ar.beta[t]
        atoms = base[..., None, :] + self.residual[t].atoms
        atoms[..., 1] = np.maximum(atoms[..., 1], 0.0)
        return atoms

    def distribution(self, t: int, w_t) -> DiscreteDistribution:
        return DiscreteDistribution(self.atoms(t, w_t), self.weights(t))


class SddpPolicy(FamilyPolicy):
    """One-step look-ahead with the trained cuts as cost-to-go.

    With ``online="offline"`` the stage law is the quantized law used during
    training; with ``"ar_conditioned"`` it is re-centred on the AR(1)
    prediction from the last observation. The stage LP is parametrized by the
    state and the atoms.
    """

    name = "sddp"

    def __init__(self, problem: MicrogridProblem, vfs: TrainedValueFunctions,
                 dists: list[DiscreteDistribution], online: str = "offline",
                 conditioned: ConditionedDistributions | None = None, backend: str = "highs"):
        super().__init__()
        if online not in ONLINE_MODES:
            raise ValueError(f"unknown online mode {online!r}; expected one of {ONLINE_MODES}")
        if online == "ar_conditioned" and conditioned is None:
            raise ValueError("the conditioned mode needs ConditionedDistributions")
        if vfs.horizon != problem.horizon or len(dists) != problem.horizon:
            raise ValueError("value functions and distributions must cover the problem horizon")
        self.problem = problem
        self.vfs = vfs
        self.dists = dists
        self.online = online
        self.conditioned = conditioned
        self.backend = backend

    def distribution(self, t: int, history: np.ndarray) -> DiscreteDistribution:
        if self.online == "offline":
            return self.dists[t]
        return self.conditioned.distribution(t, history[-1] if t > 0 else None)

    def _weights(self, t: int) -> np.ndarray:
        return self.dists[t].weights if self.online == "offline" else self.conditioned.weights(t)

    def _build_family(self, t: int) -> LpFamily:
        lay = StageLayout(self.problem, t, self._weights(t))
        S = lay.num_atoms
        lp = lay.build(np.zeros(STATE_DIM), np.zeros((S, 2)), self.vfs[t + 1])
        R = np.zeros((lp.num_rows, STATE_DIM + 2 * S))
        R[: lay.base_rows, :STATE_DIM] = lay.R
        cols = STATE_DIM + 2 * np.arange(S)
        R[lay.import_rows, cols] = 1.0
        R[lay.tank_rows, cols + 1] = -self.problem.grid.delta_hours
        L = np.zeros((3, lp.num_vars))
        L[0, lay.c], L[0, lay.d], L[1, lay.fw], L[2, lay.fh] = 1.0, -1.0, 1.0, 1.0
        nominal_atoms = self.dists[t].atoms if self.online == "offline" else self.conditioned.atoms(t, None)
        nominal = np.concatenate([np.asarray(self.problem.x0, dtype=float), nominal_atoms.ravel()])
        return LpFamily(lp, R, L, self.backend, nominal)

    def parameters(self, t: int, states: np.ndarray, histories: np.ndarray) -> np.ndarray:
        states = np.asarray(states, dtype=float)
        n = len(states)
        if self.online == "offline":
            atoms = np.broadcast_to(self.dists[t].atoms.ravel(), (n, 2 * len(self.dists[t])))
        else:
            w = np.asarray(histories)[:, -1] if t > 0 else None
            atoms = self.conditioned.atoms(t, w).reshape(n if t > 0 else 1, -1)
            atoms = np.broadcast_to(atoms, (n, atoms.shape[1]))
        return np.hstack([states, atoms])
