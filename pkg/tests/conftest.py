import numpy as np
import pytest

from microgrid_bench.physical import PhysicalParams, State, TimeGrid, WeatherTrace
from microgrid_bench.presets import get_preset
from microgrid_bench.problem import CostParams, MicrogridProblem
from microgrid_bench.sddp import DiscreteDistribution

TOY_PRICES = [0.09, 0.09, 0.15, 0.15]
TOY_ATOMS = [-1.0, 0.5, 1.2]
TOY_PROBS = [0.3, 0.4, 0.3]


def battery_only_problem(prices=TOY_PRICES, kappa=0.12, b0=1.0) -> MicrogridProblem:
    """Lossless 2 kWh battery with hourly steps; tank and heater are switched off."""
    T = len(prices)
    grid = TimeGrid(delta_hours=1.0, horizon_steps=T)
    params = PhysicalParams(rho_c=1.0, rho_d=1.0, b_max=2.0, fb_max=1.5, fw_max=0.0, fh_max=0.0, h_max=1.0)
    costs = CostParams(np.array(prices, dtype=float), np.zeros(T), np.zeros(T), kappa=kappa)
    return MicrogridProblem(params, costs, grid, WeatherTrace.constant(T), State(b0, 0.0, 15.0, 15.0))


def toy_distribution() -> DiscreteDistribution:
    return DiscreteDistribution(np.array([[a, 0.0] for a in TOY_ATOMS]), np.array(TOY_PROBS))


def preset_problem(name="summer", grid=None, params=None) -> MicrogridProblem:
    grid = grid or TimeGrid()
    params = params or PhysicalParams()
    preset = get_preset(name)
    return MicrogridProblem(params, CostParams.default(grid), grid, preset.weather(grid),
                            preset.initial_state(params, grid))


@pytest.fixture
def toy_problem():
    return battery_only_problem()


@pytest.fixture(scope="session")
def summer_problem():
    return preset_problem("summer")


@pytest.fixture(scope="session")
def short_problem():
    """Summer afternoon, 12 steps of 15 minutes."""
    grid = TimeGrid(horizon_steps=12, start_step=48)
    params = PhysicalParams()
    preset = get_preset("summer")
    full = TimeGrid()
    w = preset.weather(full)
    weather = WeatherTrace(w.theta_e[48:60], w.phi_int[48:60], w.phi_ext[48:60])
    costs = CostParams.default(grid)
    return MicrogridProblem(params, costs, grid, weather, preset.initial_state(params, full))
