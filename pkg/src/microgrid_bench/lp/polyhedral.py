from __future__ import annotations

import numpy as np


class EmptyCutSetError(ValueError):
    pass


class PolyhedralFunction:
    """Maximum of affine functions ``<lambda_j, x> + beta_j``.

    With no cut the function carries no lower bound; evaluating it raises.
    """

    def __init__(self, dim: int = 4, cuts=()):
        self.dim = dim
        self._lam = np.empty((0, dim))
        self._beta = np.empty(0)
        for lam, beta in cuts:
            self.add_cut(lam, beta)

    def __len__(self) -> int:
        return len(self._beta)

    @property
    def lambdas(self) -> np.ndarray:
        return self._lam

    @property
    def betas(self) -> np.ndarray:
        return self._beta

    def cuts(self):
        return [(self._lam[j].copy(), float(self._beta[j])) for j in range(len(self))]

    def add_cut(self, lam, beta: float) -> PolyhedralFunction:
        lam = np.asarray(lam, dtype=float).reshape(self.dim)
        beta = float(beta)
        if not (np.all(np.isfinite(lam)) and np.isfinite(beta)):
            raise ValueError("cut coefficients must be finite")
        self._lam = np.vstack([self._lam, lam])
        self._beta = np.append(self._beta, beta)
        return self

    def evaluate(self, x) -> float:
        if not len(self):
            raise EmptyCutSetError("polyhedral function has no cut")
        return float(np.max(self._lam @ np.asarray(x, dtype=float) + self._beta))

    def evaluate_many(self, xs) -> np.ndarray:
        if not len(self):
            raise EmptyCutSetError("polyhedral function has no cut")
        return np.max(np.asarray(xs, dtype=float) @ self._lam.T + self._beta, axis=1)

    def copy(self) -> PolyhedralFunction:
        out = PolyhedralFunction(self.dim)
        out._lam = self._lam.copy()
        out._beta = self._beta.copy()
        return out


def add_cut(pf: PolyhedralFunction, lam, beta: float) -> PolyhedralFunction:
    """Return a new function equal to ``max(pf, <lam, .> + beta)``."""
    return pf.copy().add_cut(lam, beta)
