"""Microgrid energy-management benchmark: SDDP, MPC and rule-based policies."""

__version__ = "0.1.0"
