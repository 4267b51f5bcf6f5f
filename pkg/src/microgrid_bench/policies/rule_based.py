from __future__ import annotations

from ..physical import Control
from ..problem import MicrogridProblem, admissible_box
from .base import Policy, PolicyContext


class RuleBasedPolicy(Policy):
    """Hand-written rules.

    * tank: full power while the stock is below ``tank_target``;
    * heater: on below the setpoint, off above setpoint + ``margin``,
      unchanged in between;
    * battery: with the last observed net demand plus the tank and heater
      loads just decided, store any surplus and otherwise discharge to cover
      the load. Idle at the first step, where nothing has been observed.
    """

    name = "rule_based"

    def __init__(self, problem: MicrogridProblem, margin: float = 1.0, tank_target: float | None = None):
        if margin < 0:
            raise ValueError("margin must be nonnegative")
        self.problem = problem
        self.margin = margin
        self.tank_target = problem.x0.h if tank_target is None else tank_target

    def decide(self, ctx: PolicyContext) -> Control:
        p, grid = self.problem.params, self.problem.grid
        x = ctx.state
        box = admissible_box(x, p, grid)
        f_w = p.fw_max if x.h < self.tank_target else 0.0
        setpoint = self.problem.costs.temp_setpoint[ctx.t]
        if x.theta_i < setpoint:
            f_h = p.fh_max
        elif x.theta_i > setpoint + self.margin:
            f_h = 0.0
        else:
            prev = ctx.previous_control
            f_h = p.fh_max if prev is not None and prev.f_h > 0 else 0.0
        f_w = min(max(f_w, box.lower.f_w), box.upper.f_w)
        f_b = 0.0
        w = ctx.last_observation
        if w is not None:
            load = float(w[0]) + f_w + f_h
            if load < 0:
                f_b = min(-load, box.upper.f_b)
            else:
                f_b = -min(load, -box.lower.f_b)
        return box.clip(Control(f_b, f_w, f_h))
