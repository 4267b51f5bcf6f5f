"""Multistage problem data: load balance, stage and final costs, admissible controls."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .physical import Control, PhysicalParams, State, TimeGrid, Uncertainty, WeatherTrace, dynamics, thermal_map

STOCK_TOLERANCE = 1e-6


class InfeasibleStateError(ValueError):
    pass


@dataclass(frozen=True)
class CostParams:
    price_elec: np.ndarray
    price_discomfort: np.ndarray
    temp_setpoint: np.ndarray
    kappa: float = 0.5
    # only used inside optimization models, as the price of the slack keeping h >= 0
    unserved_penalty: float = 5.0

    def __post_init__(self):
        n = len(self.price_elec)
        if len(self.price_discomfort) != n or len(self.temp_setpoint) != n:
            raise ValueError("cost arrays must share one length")
        if np.any(np.asarray(self.price_elec) < 0) or np.any(np.asarray(self.price_discomfort) < 0):
            raise ValueError("prices must be nonnegative")
        if self.kappa < 0 or self.unserved_penalty < 0:
            raise ValueError("kappa and unserved_penalty must be nonnegative")

    def __len__(self) -> int:
        return len(self.price_elec)

    @classmethod
    def default(cls, grid: TimeGrid, on_peak: float = 0.15, off_peak: float = 0.09,
                peak_hours: tuple[float, float] = (7.0, 23.0), discomfort_price: float = 0.05,
                setpoint_day: float = 19.0, setpoint_night: float = 16.0,
                kappa: float = 0.5, unserved_penalty: float = 5.0) -> CostParams:
        hours = np.array([grid.hour_of_day(t) for t in range(grid.horizon_steps)])
        on = (hours >= peak_hours[0]) & (hours < peak_hours[1])
        return cls(
            price_elec=np.where(on, on_peak, off_peak),
            price_discomfort=np.full(grid.horizon_steps, discomfort_price),
            temp_setpoint=np.where(on, setpoint_day, setpoint_night),
            kappa=kappa,
            unserved_penalty=unserved_penalty,
        )

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["step", "price_elec", "price_discomfort", "temp_setpoint"])
            for t in range(len(self)):
                w.writerow([t, repr(float(self.price_elec[t])), repr(float(self.price_discomfort[t])),
                            repr(float(self.temp_setpoint[t]))])

    @classmethod
    def from_csv(cls, path: str | Path, kappa: float = 0.5, unserved_penalty: float = 5.0) -> CostParams:
        with open(path, newline="") as fh:
            rows = sorted(csv.DictReader(fh), key=lambda r: int(r["step"]))
        return cls(
            np.array([float(r["price_elec"]) for r in rows]),
            np.array([float(r["price_discomfort"]) for r in rows]),
            np.array([float(r["temp_setpoint"]) for r in rows]),
            kappa=kappa,
            unserved_penalty=unserved_penalty,
        )


@dataclass(frozen=True)
class MicrogridProblem:
    """Everything a policy or an optimizer needs to know about one day."""

    params: PhysicalParams
    costs: CostParams
    grid: TimeGrid
    weather: WeatherTrace
    x0: State
    # penalty on the discharge variable removing charge/discharge ties in LPs
    discharge_tiebreak: float = 1e-9

    def __post_init__(self):
        T = self.grid.horizon_steps
        if len(self.costs) != T or len(self.weather) != T:
            raise ValueError(f"cost and weather arrays must have {T} steps")

    @property
    def horizon(self) -> int:
        return self.grid.horizon_steps


@dataclass(frozen=True)
class AdmissibleBox:
    lower: Control
    upper: Control

    def contains(self, u: Control, tol: float = 1e-7) -> bool:
        return all(lo - tol <= v <= hi + tol for lo, v, hi in zip(self.lower, u, self.upper))

    def clip(self, u: Control) -> Control:
        return Control(*(min(max(v, lo), hi) for lo, v, hi in zip(self.lower, u, self.upper)))


def net_import(u: Control, w: Uncertainty) -> float:
    """Power drawn from the network; negative values are wasted surplus."""
    return u.f_b + u.f_w + u.f_h + w.d_el_net


def stage_cost(x: State, u: Control, w: Uncertainty, t: int, costs: CostParams, grid: TimeGrid) -> float:
    energy = costs.price_elec[t] * grid.delta_hours * max(0.0, net_import(u, w))
    discomfort = costs.price_discomfort[t] * max(0.0, costs.temp_setpoint[t] - x.theta_i)
    return float(energy + discomfort)


def final_cost(x_T: State, x_0: State, kappa: float) -> float:
    """Penalty on the battery and tank stocks ending below their initial level."""
    return kappa * (max(0.0, x_0.b - x_T.b) + max(0.0, x_0.h - x_T.h))


def final_cost_cuts(x_0: State, kappa: float) -> list[tuple[np.ndarray, float]]:
    """The final cost written exactly as a maximum of four affine functions."""
    cuts = []
    for kb in (0.0, kappa):
        for kh in (0.0, kappa):
            lam = np.array([-kb, -kh, 0.0, 0.0])
            cuts.append((lam, kb * x_0.b + kh * x_0.h))
    return cuts


def battery_bounds(b: float, params: PhysicalParams, grid: TimeGrid) -> tuple[float, float]:
    dt = grid.delta_hours
    lo = max(-params.fb_max, -params.rho_d * (b - params.b_min) / dt)
    hi = min(params.fb_max, (params.b_max - b) / (dt * params.rho_c))
    return min(lo, 0.0), max(hi, 0.0)


def admissible_box(x: State, params: PhysicalParams, grid: TimeGrid, d_th_max: float = 0.0) -> AdmissibleBox:
    """Control bounds keeping the next battery and tank stocks admissible.

    The tank upper bound assumes no hot-water draw. ``d_th_max`` is the largest
    draw the tank lower bound must withstand; when it cannot be met even at
    full heating the lower bound saturates at ``fw_max``.
    """
    p = params
    if not (p.b_min - STOCK_TOLERANCE <= x.b <= p.b_max + STOCK_TOLERANCE):
        raise InfeasibleStateError(f"battery stock {x.b} outside [{p.b_min}, {p.b_max}]")
    if not (-STOCK_TOLERANCE <= x.h <= p.h_max + STOCK_TOLERANCE):
        raise InfeasibleStateError(f"tank stock {x.h} outside [0, {p.h_max}]")
    dt = grid.delta_hours
    fb_lo, fb_hi = battery_bounds(x.b, p, grid)
    fw_hi = min(p.fw_max, max(0.0, (p.h_max - x.h) / (dt * p.beta_h)))
    fw_lo = min(fw_hi, max(0.0, (dt * d_th_max - x.h) / (dt * p.beta_h)))
    return AdmissibleBox(Control(fb_lo, fw_lo, 0.0), Control(fb_hi, fw_hi, p.fh_max))


def advance(problem: MicrogridProblem, x: State, u: Control, w: Uncertainty, t: int) -> tuple[State, float]:
    """Simulated transition: the tank is clamped to ``[0, h_max]``.

    Returns the next state and the hot-water energy (kWh) left unserved by
    the clamp at zero.
    """
    p = problem.params
    nxt = dynamics(x, u, w, problem.weather.at(t), p, problem.grid)
    h, unserved = nxt.h, 0.0
    if h < 0.0:
        unserved, h = -h, 0.0
    elif h > p.h_max:
        h = p.h_max
    b = min(max(nxt.b, p.b_min), p.b_max)
    return State(b, h, nxt.theta_w, nxt.theta_i), unserved


# Array versions of the simulation formulas for a batch of scenarios (rows).
# They repeat the scalar arithmetic operation by operation so that batch and
# single-scenario rollouts agree to the last bit.

def admissible_bounds_batch(X: np.ndarray, params: PhysicalParams, grid: TimeGrid) -> tuple[np.ndarray, np.ndarray]:
    """Lower and upper control bounds, shape ``(n, 3)`` each, for states ``X`` (no hot-water draw)."""
    p = params
    b, h = X[:, 0], X[:, 1]
    bad_b = ~((p.b_min - STOCK_TOLERANCE <= b) & (b <= p.b_max + STOCK_TOLERANCE))
    bad_h = ~((-STOCK_TOLERANCE <= h) & (h <= p.h_max + STOCK_TOLERANCE))
    if np.any(bad_b | bad_h):
        i = int(np.flatnonzero(bad_b | bad_h)[0])
        raise InfeasibleStateError(f"row {i}: stocks (b={b[i]}, h={h[i]}) outside the admissible set")
    dt = grid.delta_hours
    fb_lo = np.minimum(np.maximum(-p.fb_max, -p.rho_d * (b - p.b_min) / dt), 0.0)
    fb_hi = np.maximum(np.minimum(p.fb_max, (p.b_max - b) / (dt * p.rho_c)), 0.0)
    fw_hi = np.minimum(p.fw_max, np.maximum(0.0, (p.h_max - h) / (dt * p.beta_h)))
    fw_lo = np.minimum(fw_hi, np.maximum(0.0, (dt * 0.0 - h) / (dt * p.beta_h)))
    n = len(X)
    lower = np.column_stack([fb_lo, fw_lo, np.zeros(n)])
    upper = np.column_stack([fb_hi, fw_hi, np.full(n, p.fh_max)])
    return lower, upper


def net_import_batch(U: np.ndarray, W: np.ndarray) -> np.ndarray:
    return U[:, 0] + U[:, 1] + U[:, 2] + W[:, 0]


def stage_cost_batch(X: np.ndarray, U: np.ndarray, W: np.ndarray, t: int, costs: CostParams,
                     grid: TimeGrid) -> np.ndarray:
    energy = costs.price_elec[t] * grid.delta_hours * np.maximum(0.0, net_import_batch(U, W))
    discomfort = costs.price_discomfort[t] * np.maximum(0.0, costs.temp_setpoint[t] - X[:, 3])
    return energy + discomfort


def final_cost_batch(X: np.ndarray, x_0: State, kappa: float) -> np.ndarray:
    return kappa * (np.maximum(0.0, x_0.b - X[:, 0]) + np.maximum(0.0, x_0.h - X[:, 1]))


def advance_batch(problem: MicrogridProblem, X: np.ndarray, U: np.ndarray, W: np.ndarray,
                  t: int) -> tuple[np.ndarray, np.ndarray]:
    """Batch form of :func:`advance`: next states ``(n, 4)`` and unserved energy ``(n,)``."""
    p, dt = problem.params, problem.grid.delta_hours
    b, h, tw, ti = X.T
    fb, fw, fh = U.T
    b_next = np.where(fb >= 0.0, b + dt * p.rho_c * fb, b + dt * fb / p.rho_d)
    h_next = h + dt * (p.beta_h * fw - W[:, 1])
    M, N = thermal_map(p, problem.grid.delta_seconds)
    th_e, phi_int, phi_ext = problem.weather.at(t)
    q = 1e3 * fh
    tw_next = M[0, 0] * tw + M[0, 1] * ti + N[0, 0] * th_e + N[0, 1] * q + N[0, 2] * phi_int + N[0, 3] * phi_ext
    ti_next = M[1, 0] * tw + M[1, 1] * ti + N[1, 0] * th_e + N[1, 1] * q + N[1, 2] * phi_int + N[1, 3] * phi_ext
    unserved = np.where(h_next < 0.0, -h_next, 0.0)
    h_next = np.minimum(np.maximum(h_next, 0.0), p.h_max)
    b_next = np.minimum(np.maximum(b_next, p.b_min), p.b_max)
    return np.column_stack([b_next, h_next, tw_next, ti_next]), unserved
