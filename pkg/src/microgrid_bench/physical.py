"""Discrete-time plant: battery, hot-water tank and R6C2 thermal envelope.

Stocks are in kWh and powers in kW; the step length used for stocks is in
hours. The thermal network is integrated in SI units (seconds, watts) and
converted at the boundary.
"""

from __future__ import annotations

import csv
import functools
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np
from scipy.linalg import expm

WATER_HEAT_CAPACITY_KJ_PER_KG_K = 4.186


def tank_capacity_kwh(volume_l: float, useful_delta_k: float) -> float:
    """Usable energy of a water tank for a given temperature swing."""
    return volume_l * WATER_HEAT_CAPACITY_KJ_PER_KG_K * useful_delta_k / 3600.0


@dataclass(frozen=True)
class TimeGrid:
    delta_hours: float = 0.25
    horizon_steps: int = 96
    start_step: int = 0

    def __post_init__(self):
        if not self.delta_hours > 0:
            raise ValueError(f"delta_hours must be positive, got {self.delta_hours}")
        if self.horizon_steps < 1:
            raise ValueError(f"horizon_steps must be >= 1, got {self.horizon_steps}")

    @property
    def delta_seconds(self) -> float:
        return self.delta_hours * 3600.0

    @property
    def steps_per_day(self) -> int:
        return int(round(24.0 / self.delta_hours))

    def hour_of_day(self, t: int) -> float:
        return ((self.start_step + t) * self.delta_hours) % 24.0


@dataclass(frozen=True)
class PhysicalParams:
    rho_c: float = 0.95
    rho_d: float = 0.95
    b_min: float = 0.0
    b_max: float = 3.0
    h_max: float = tank_capacity_kwh(120.0, 50.0)
    beta_h: float = 0.9
    fb_max: float = 3.0
    fw_max: float = 3.0
    fh_max: float = 3.0
    # R6C2 envelope (SI)
    r_i: float = 4.81e-4
    r_s: float = 2.94e-4
    r_m: float = 4.51e-3
    r_e: float = 1.48e-4
    r_v: float = 4.51e-3
    r_f: float = 2.00e-2
    c_i: float = 8.30e7
    c_m: float = 5.85e6
    gamma: float = 0.5
    panel_area_m2: float = 20.0
    panel_yield: float = 0.15
    # "exact": zero-order-hold exponential step; "euler": one explicit Euler step
    thermal_scheme: str = "exact"

    def __post_init__(self):
        for name in ("rho_c", "rho_d", "beta_h"):
            v = getattr(self, name)
            if not 0.0 < v <= 1.0:
                raise ValueError(f"{name} must lie in (0, 1], got {v}")
        for name in ("r_i", "r_s", "r_m", "r_e", "r_v", "r_f", "c_i", "c_m"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be strictly positive")
        if not self.b_min < self.b_max:
            raise ValueError("b_min must be smaller than b_max")
        if not self.h_max > 0:
            raise ValueError("h_max must be positive")
        for name in ("fb_max", "fw_max", "fh_max"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError("gamma must lie in [0, 1]")
        if self.thermal_scheme not in ("exact", "euler"):
            raise ValueError(f"unknown thermal_scheme {self.thermal_scheme!r}")


class State(NamedTuple):
    b: float
    h: float
    theta_w: float
    theta_i: float


class Control(NamedTuple):
    f_b: float = 0.0
    f_w: float = 0.0
    f_h: float = 0.0


class Uncertainty(NamedTuple):
    d_el_net: float = 0.0
    d_th: float = 0.0


class Exogenous(NamedTuple):
    theta_e: float = 0.0
    phi_int: float = 0.0
    phi_ext: float = 0.0


@dataclass(frozen=True)
class WeatherTrace:
    theta_e: np.ndarray
    phi_int: np.ndarray
    phi_ext: np.ndarray

    def __post_init__(self):
        n = len(self.theta_e)
        if len(self.phi_int) != n or len(self.phi_ext) != n:
            raise ValueError("weather arrays must share one length")

    def __len__(self) -> int:
        return len(self.theta_e)

    def at(self, t: int) -> Exogenous:
        return Exogenous(float(self.theta_e[t]), float(self.phi_int[t]), float(self.phi_ext[t]))

    @classmethod
    def constant(cls, steps: int, theta_e: float = 15.0, phi_int: float = 0.0,
                 phi_ext: float = 0.0) -> WeatherTrace:
        return cls(np.full(steps, theta_e), np.full(steps, phi_int), np.full(steps, phi_ext))

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["step", "theta_e", "phi_int", "phi_ext"])
            for t in range(len(self)):
                w.writerow([t, repr(float(self.theta_e[t])), repr(float(self.phi_int[t])),
                            repr(float(self.phi_ext[t]))])

    @classmethod
    def from_csv(cls, path: str | Path, horizon_steps: int | None = None) -> WeatherTrace:
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        rows.sort(key=lambda r: int(r["step"]))
        trace = cls(np.array([float(r["theta_e"]) for r in rows]),
                    np.array([float(r["phi_int"]) for r in rows]),
                    np.array([float(r["phi_ext"]) for r in rows]))
        if horizon_steps is not None and len(trace) != horizon_steps:
            raise ValueError(f"weather trace has {len(trace)} steps, expected {horizon_steps}")
        return trace


def battery_step(b: float, f_b: float, params: PhysicalParams, grid: TimeGrid) -> float:
    if f_b >= 0.0:
        return b + grid.delta_hours * params.rho_c * f_b
    return b + grid.delta_hours * f_b / params.rho_d


def tank_step(h: float, f_w: float, d_th: float, params: PhysicalParams, grid: TimeGrid) -> float:
    return h + grid.delta_hours * (params.beta_h * f_w - d_th)


def thermal_rates(params: PhysicalParams) -> tuple[np.ndarray, np.ndarray]:
    """Continuous-time matrices of the R6C2 envelope.

    Returns ``(A, B)`` with ``d(theta_w, theta_i)/dt = A @ theta + B @ v`` where
    ``v = (theta_e, heater W, phi_int W, phi_ext W)``.
    """
    p = params
    g_is = 1.0 / (p.r_i + p.r_s)
    g_me = 1.0 / (p.r_m + p.r_e)
    g_vf = 1.0 / p.r_v + 1.0 / p.r_f
    A = np.array([
        [-(g_is + g_me) / p.c_m, g_is / p.c_m],
        [g_is / p.c_i, -(g_is + g_vf) / p.c_i],
    ])
    B = np.array([
        [g_me / p.c_m, p.gamma / p.c_m, p.r_i / (p.r_i + p.r_s) / p.c_m, p.r_e / (p.r_e + p.r_m) / p.c_m],
        [g_vf / p.c_i, (1.0 - p.gamma) / p.c_i, p.r_s / (p.r_i + p.r_s) / p.c_i, 0.0],
    ])
    return A, B


@functools.lru_cache(maxsize=64)
def thermal_map(params: PhysicalParams, delta_seconds: float) -> tuple[np.ndarray, np.ndarray]:
    """Discrete affine step ``theta' = M @ theta + N @ v`` with heater in W.

    Inputs are held constant over the step. The exact scheme uses the
    zero-order-hold exponential; the Euler scheme is ``I + dt A``, ``dt B``.
    """
    A, B = thermal_rates(params)
    if params.thermal_scheme == "euler":
        M, N = np.eye(2) + delta_seconds * A, delta_seconds * B
    else:
        big = np.zeros((6, 6))
        big[:2, :2] = A
        big[:2, 2:] = B
        E = expm(big * delta_seconds)
        M, N = E[:2, :2], E[:2, 2:]
    M.setflags(write=False)
    N.setflags(write=False)
    return M, N


def thermal_step(theta_w: float, theta_i: float, f_h: float, exo: Exogenous,
                 params: PhysicalParams, grid: TimeGrid) -> tuple[float, float]:
    M, N = thermal_map(params, grid.delta_seconds)
    th_e, phi_int, phi_ext = exo
    q = 1e3 * f_h
    w = M[0, 0] * theta_w + M[0, 1] * theta_i + N[0, 0] * th_e + N[0, 1] * q + N[0, 2] * phi_int + N[0, 3] * phi_ext
    i = M[1, 0] * theta_w + M[1, 1] * theta_i + N[1, 0] * th_e + N[1, 1] * q + N[1, 2] * phi_int + N[1, 3] * phi_ext
    return float(w), float(i)


def dynamics(x: State, u: Control, w: Uncertainty, exo: Exogenous,
             params: PhysicalParams, grid: TimeGrid) -> State:
    """Next state without any clamping of the stocks."""
    theta_w, theta_i = thermal_step(x.theta_w, x.theta_i, u.f_h, exo, params, grid)
    return State(
        battery_step(x.b, u.f_b, params, grid),
        tank_step(x.h, u.f_w, w.d_th, params, grid),
        theta_w,
        theta_i,
    )


def solar_power_kw(irradiance_w_m2: np.ndarray, params: PhysicalParams) -> np.ndarray:
    return np.asarray(irradiance_w_m2) * params.panel_area_m2 * params.panel_yield / 1e3


def dynamics_jacobian(x: State, u: Control, params: PhysicalParams, grid: TimeGrid) -> tuple[np.ndarray, np.ndarray]:
    """Closed-form ``(d x'/d x, d x'/d u)`` of :func:`dynamics`, shapes ``(4, 4)`` and ``(4, 3)``.

    The battery slope takes the branch of the sign of ``f_b`` (charging at 0).
    """
    dt = grid.delta_hours
    M, N = thermal_map(params, grid.delta_seconds)
    jx = np.zeros((4, 4))
    jx[0, 0] = jx[1, 1] = 1.0
    jx[2:, 2:] = M
    ju = np.zeros((4, 3))
    ju[0, 0] = dt * params.rho_c if u.f_b >= 0.0 else dt / params.rho_d
    ju[1, 1] = dt * params.beta_h
    ju[2:, 2] = 1e3 * N[:, 1]
    return jx, ju
