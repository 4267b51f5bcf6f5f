"""Online policies sharing the ``decide(PolicyContext) -> Control`` interface."""

from .base import Policy, PolicyContext
from .mpc import ArForecaster, HorizonLayout, MpcPolicy, PerfectForecast, clairvoyant_cost
from .rule_based import RuleBasedPolicy
from .sddp_policy import ONLINE_MODES, ConditionedDistributions, SddpPolicy

__all__ = [
    "ONLINE_MODES", "ArForecaster", "ConditionedDistributions", "HorizonLayout", "MpcPolicy",
    "PerfectForecast", "Policy", "PolicyContext", "RuleBasedPolicy", "SddpPolicy", "clairvoyant_cost",
]
