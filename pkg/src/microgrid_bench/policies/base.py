from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass

import numpy as np

from ..physical import Control, State


@dataclass(frozen=True)
class PolicyContext:
    """What a policy may see at step ``t``: the current state, the noise
    observed so far (``history[k]`` is the noise revealed after step ``k``) and
    its own previous decision."""

    t: int
    state: State
    history: np.ndarray
    previous_control: Control | None = None

    def __post_init__(self):
        if len(self.history) != self.t:
            raise ValueError(f"history must hold {self.t} observations, got {len(self.history)}")

    @property
    def last_observation(self) -> np.ndarray | None:
        return self.history[-1] if self.t > 0 else None


class Policy(ABC):
    name: str = "policy"

    @abstractmethod
    def decide(self, ctx: PolicyContext) -> Control:
        ...

    def __call__(self, ctx: PolicyContext) -> Control:
        return self.decide(ctx)

    def decide_batch(self, t: int, states: np.ndarray, histories: np.ndarray,
                     previous: np.ndarray | None = None) -> np.ndarray:
        """Decisions for many scenarios at the same step, shape ``(n, 3)``."""
        out = np.empty((len(states), 3))
        for i, x in enumerate(states):
            prev = None if previous is None else Control(*previous[i])
            out[i] = self.decide(PolicyContext(t, State(*x), histories[i], prev))
        return out
