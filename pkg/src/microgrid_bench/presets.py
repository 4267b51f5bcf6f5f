"""Synthetic winter, spring and summer days.

Mean outdoor temperatures and daily photovoltaic energy follow three typical
French days; the shapes (sinusoidal temperature, ``sin^2`` irradiance between
sunrise and sunset) are synthetic.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .physical import PhysicalParams, State, TimeGrid, WeatherTrace, solar_power_kw, thermal_rates
from .uncertainty import DemandProfile, SolarNoiseModel, solar_profile, step_hours

# panel used to convert the daily PV energy of a preset into irradiance
REFERENCE_PANEL_M2 = 20.0
REFERENCE_PANEL_YIELD = 0.15


@dataclass(frozen=True)
class DayPreset:
    name: str
    mean_temp: float
    pv_kwh: float
    sunrise: float
    sunset: float
    temp_amplitude: float = 4.0

    def irradiance(self, grid: TimeGrid) -> np.ndarray:
        """Irradiance (W/m^2) giving ``pv_kwh`` on the reference panel."""
        kw = solar_profile(grid, self.pv_kwh, self.sunrise, self.sunset)
        return kw * 1e3 / (REFERENCE_PANEL_M2 * REFERENCE_PANEL_YIELD)

    def outdoor_temperature(self, grid: TimeGrid) -> np.ndarray:
        h = step_hours(grid)
        return self.mean_temp - self.temp_amplitude * np.cos(2 * np.pi * (h - 3.0) / 24.0)

    def weather(self, grid: TimeGrid, window_m2: float = 4.0, window_gain: float = 0.5,
                wall_m2: float = 40.0, wall_absorptance: float = 0.5) -> WeatherTrace:
        irr = self.irradiance(grid)
        return WeatherTrace(self.outdoor_temperature(grid), window_m2 * window_gain * irr,
                            wall_m2 * wall_absorptance * irr)

    def solar(self, grid: TimeGrid, params: PhysicalParams, sigma_0: float = 0.0,
              sigma_T: float = 0.0) -> SolarNoiseModel:
        return SolarNoiseModel(solar_power_kw(self.irradiance(grid), params), sigma_0, sigma_T)

    def demand_profile(self, grid: TimeGrid, params: PhysicalParams, sigma_0: float = 0.0,
                       sigma_T: float = 0.0, **kwargs) -> DemandProfile:
        return DemandProfile.synthetic(grid, self.solar(grid, params, sigma_0, sigma_T), **kwargs)

    def initial_state(self, params: PhysicalParams, grid: TimeGrid, theta_i: float = 18.0,
                      battery_fraction: float = 0.5, tank_fraction: float = 0.6) -> State:
        """Half-charged battery, partly filled tank, wall at its steady
        temperature between indoor and outdoor air."""
        A, B = thermal_rates(params)
        theta_e = float(self.outdoor_temperature(grid)[0])
        # wall row at rest with the heater off and no radiation
        theta_w = -(A[0, 1] * theta_i + B[0, 0] * theta_e) / A[0, 0]
        b = params.b_min + battery_fraction * (params.b_max - params.b_min)
        return State(b, tank_fraction * params.h_max, float(theta_w), theta_i)


PRESETS = {
    "winter": DayPreset("winter", mean_temp=3.3, pv_kwh=8.4, sunrise=7.75, sunset=18.25),
    "spring": DayPreset("spring", mean_temp=10.1, pv_kwh=14.8, sunrise=7.25, sunset=20.25),
    "summer": DayPreset("summer", mean_temp=14.1, pv_kwh=23.3, sunrise=6.0, sunset=21.75),
}


def get_preset(name: str) -> DayPreset:
    try:
        return PRESETS[name]
    except KeyError:
        raise ValueError(f"unknown day preset {name!r}; expected one of {sorted(PRESETS)}") from None
