"""Experiment configuration read from a TOML file.

Every section maps onto one dataclass; unknown keys are errors. Parameters
with no published value live here with their defaults so that a run's
assumptions are all visible in one file.
"""

from __future__ import annotations

import hashlib
import json
import sys
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from .physical import PhysicalParams, TimeGrid
from .presets import PRESETS, get_preset
from .problem import CostParams, MicrogridProblem
from .sddp import SddpConfig

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

POLICY_NAMES = ("sddp", "sddp_ar", "mpc", "rule_based")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class CostConfig:
    on_peak: float = 0.15
    off_peak: float = 0.09
    peak_start: float = 7.0
    peak_end: float = 23.0
    discomfort_price: float = 0.05
    setpoint_day: float = 19.0
    setpoint_night: float = 16.0
    kappa: float = 0.5
    unserved_penalty: float = 5.0

    def build(self, grid: TimeGrid) -> CostParams:
        return CostParams.default(grid, self.on_peak, self.off_peak, (self.peak_start, self.peak_end),
                                  self.discomfort_price, self.setpoint_day, self.setpoint_night,
                                  self.kappa, self.unserved_penalty)


@dataclass(frozen=True)
class ScenarioConfig:
    n_optimization: int = 1000
    n_assessment: int = 1000
    # solar noise sd grows linearly from sigma_0 at t=0 to sigma_T at the horizon
    sigma_0: float = 0.0
    sigma_T: float = 0.0
    # demands fixed to their means (noise then only comes from solar)
    deterministic_demand: bool = False
    el_sigma: float = 0.35
    el_corr: float = 0.7
    atoms: int = 10


@dataclass(frozen=True)
class PolicyConfig:
    names: tuple[str, ...] = ("sddp", "mpc", "rule_based")
    rule_margin: float = 1.0
    # optimization scenarios rolled out to collect optimal LP bases before assessment
    record_scenarios: int = 200
    chunk_size: int = 1024


@dataclass(frozen=True)
class SweepConfig:
    sigma_T: tuple[float, ...] = (0.0, 0.05, 0.1, 0.2)
    sigma_0: float = 0.0
    n_optimization: int = 1000
    n_assessment: int = 10000
    deterministic_demand: bool = True
    policies: tuple[str, ...] = ("sddp", "mpc")


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int = 0
    preset: str = "summer"
    output_dir: str = "results"
    run: str = ""
    grid: TimeGrid = field(default_factory=TimeGrid)
    physical: PhysicalParams = field(default_factory=PhysicalParams)
    costs: CostConfig = field(default_factory=CostConfig)
    scenarios: ScenarioConfig = field(default_factory=ScenarioConfig)
    sddp: SddpConfig = field(default_factory=SddpConfig)
    policies: PolicyConfig = field(default_factory=PolicyConfig)
    sweep: SweepConfig = field(default_factory=SweepConfig)

    def __post_init__(self):
        validate(self)

    @property
    def run_name(self) -> str:
        return self.run or self.preset

    def problem(self) -> MicrogridProblem:
        preset = get_preset(self.preset)
        return MicrogridProblem(self.physical, self.costs.build(self.grid), self.grid,
                                preset.weather(self.grid), preset.initial_state(self.physical, self.grid))

    def to_dict(self) -> dict:
        return asdict(self)

    def digest(self) -> str:
        """SHA-256 of the canonical JSON form of the configuration."""
        text = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()


_SECTIONS = {
    "grid": TimeGrid,
    "physical": PhysicalParams,
    "costs": CostConfig,
    "scenarios": ScenarioConfig,
    "sddp": SddpConfig,
    "policies": PolicyConfig,
    "sweep": SweepConfig,
}


def _coerce(cls, name: str, value, where: str):
    """Convert TOML values to the field's type (arrays become tuples, ints floats)."""
    default = getattr(cls(), name)
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{where}.{name} must be a boolean")
        return value
    if isinstance(default, tuple):
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"{where}.{name} must be an array")
        return tuple(value)
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where}.{name} must be a number")
        return float(value)
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{where}.{name} must be an integer")
        return value
    if isinstance(default, str) and not isinstance(value, str):
        raise ConfigError(f"{where}.{name} must be a string")
    return value


def _section(cls, data, where: str):
    if not isinstance(data, dict):
        raise ConfigError(f"[{where}] must be a table")
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"unknown key {where}.{unknown[0]} (known: {', '.join(sorted(known))})")
    values = {k: _coerce(cls, k, v, where) for k, v in data.items()}
    try:
        return cls(**values)
    except (TypeError, ValueError) as err:
        raise ConfigError(f"[{where}]: {err}") from err


def from_dict(data: dict) -> ExperimentConfig:
    top = {f.name for f in fields(ExperimentConfig)}
    unknown = sorted(set(data) - top)
    if unknown:
        raise ConfigError(f"unknown key {unknown[0]} (known: {', '.join(sorted(top))})")
    kwargs = {}
    for name, value in data.items():
        if name in _SECTIONS:
            kwargs[name] = _section(_SECTIONS[name], value, name)
        else:
            kwargs[name] = _coerce(ExperimentConfig, name, value, "config")
    try:
        return ExperimentConfig(**kwargs)
    except (TypeError, ValueError) as err:
        if isinstance(err, ConfigError):
            raise
        raise ConfigError(str(err)) from err


def load_config(path: str | Path) -> ExperimentConfig:
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except OSError as err:
        raise ConfigError(f"cannot read {path}: {err}") from err
    except tomllib.TOMLDecodeError as err:
        raise ConfigError(f"{path}: {err}") from err
    return from_dict(data)


def with_overrides(cfg: ExperimentConfig, **changes) -> ExperimentConfig:
    return replace(cfg, **changes)


def validate(cfg: ExperimentConfig) -> None:
    if cfg.preset not in PRESETS:
        raise ConfigError(f"preset must be one of {sorted(PRESETS)}, got {cfg.preset!r}")
    if cfg.seed < 0:
        raise ConfigError("seed must be nonnegative")
    if cfg.grid.horizon_steps * cfg.grid.delta_hours > 24.0 + 1e-9:
        raise ConfigError("the horizon must fit in one day")
    sc = cfg.scenarios
    if sc.n_optimization < 2 or sc.n_assessment < 2:
        raise ConfigError("scenarios.n_optimization and n_assessment must be at least 2")
    if sc.sigma_0 < 0 or sc.sigma_T < 0 or sc.el_sigma < 0:
        raise ConfigError("noise levels must be nonnegative")
    if not -1.0 < sc.el_corr < 1.0:
        raise ConfigError("scenarios.el_corr must lie in (-1, 1)")
    if sc.atoms < 1:
        raise ConfigError("scenarios.atoms must be at least 1")
    s = cfg.sddp
    if s.max_iterations < 1 or s.ub_eval_scenarios < 2 or s.ub_check_period < 1 or s.forward_passes_per_iteration < 1:
        raise ConfigError("sddp iteration and sample counts must be positive (ub_eval_scenarios >= 2)")
    if s.gap_tolerance <= 0:
        raise ConfigError("sddp.gap_tolerance must be positive")
    if s.ub_statistic not in ("ci_lower", "mean"):
        raise ConfigError("sddp.ub_statistic must be 'ci_lower' or 'mean'")
    if s.backend not in ("highs", "simplex"):
        raise ConfigError("sddp.backend must be 'highs' or 'simplex'")
    p = cfg.policies
    for names, where in ((p.names, "policies.names"), (cfg.sweep.policies, "sweep.policies")):
        bad = [n for n in names if n not in POLICY_NAMES]
        if bad:
            raise ConfigError(f"{where}: unknown policy {bad[0]!r}; expected names from {POLICY_NAMES}")
        if not names or len(set(names)) != len(names):
            raise ConfigError(f"{where} must list distinct policies")
    if p.record_scenarios < 0 or p.chunk_size < 1 or p.rule_margin < 0:
        raise ConfigError("policies.record_scenarios, chunk_size and rule_margin must be nonnegative (chunk_size >= 1)")
    sw = cfg.sweep
    if not sw.sigma_T or any(v < 0 for v in sw.sigma_T) or sw.sigma_0 < 0:
        raise ConfigError("sweep.sigma_T must be a nonempty list of nonnegative levels")
    if sw.n_optimization < 2 or sw.n_assessment < 2:
        raise ConfigError("sweep scenario counts must be at least 2")
