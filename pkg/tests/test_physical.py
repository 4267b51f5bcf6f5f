import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from microgrid_bench.physical import (Control, Exogenous, PhysicalParams, State, TimeGrid, Uncertainty,
                                      WeatherTrace, battery_step, dynamics, dynamics_jacobian, solar_power_kw,
                                      tank_capacity_kwh, tank_step, thermal_map, thermal_rates, thermal_step)
from oracles import rk4_thermal

P = PhysicalParams()
G = TimeGrid()


def test_grid_defaults():
    assert G.delta_hours == 0.25 and G.horizon_steps == 96
    assert G.delta_seconds == 900.0
    assert G.hour_of_day(95) == 23.75


@pytest.mark.parametrize("kwargs", [dict(delta_hours=0.0), dict(horizon_steps=0)])
def test_grid_rejects_bad_values(kwargs):
    with pytest.raises(ValueError):
        TimeGrid(**kwargs)


@pytest.mark.parametrize("kwargs", [
    dict(rho_c=0.0), dict(rho_d=1.5), dict(beta_h=0.0), dict(r_i=0.0), dict(c_m=-1.0),
    dict(b_min=3.0, b_max=3.0), dict(fw_max=-1.0), dict(gamma=1.2), dict(thermal_scheme="rk4"),
])
def test_params_reject_invalid(kwargs):
    with pytest.raises(ValueError):
        PhysicalParams(**kwargs)


def test_tank_capacity_from_volume():
    assert tank_capacity_kwh(120.0, 50.0) == pytest.approx(6.9767, abs=1e-4)
    assert P.h_max == tank_capacity_kwh(120.0, 50.0)


def test_battery_step_examples():
    assert battery_step(1.0, 0.0, P, G) == 1.0
    assert battery_step(1.0, 1.0, P, G) == pytest.approx(1.2375, abs=1e-12)
    assert battery_step(1.0, -1.0, P, G) == pytest.approx(1 - 0.25 / 0.95, abs=1e-12)


def test_tank_step_examples():
    assert tank_step(3.0, 0.0, 0.0, P, G) == 3.0
    assert tank_step(3.0, 2.0, 0.0, P, G) == pytest.approx(3.45, abs=1e-12)
    assert tank_step(3.0, 0.0, 4.0, P, G) == pytest.approx(2.0, abs=1e-12)


@settings(max_examples=100, deadline=None)
@given(b=st.floats(0.0, 3.0), f=st.floats(-3.0, 3.0))
def test_battery_slopes(b, f):
    eps = 1e-4
    if f >= 0:
        slope = (battery_step(b, f + eps, P, G) - battery_step(b, f, P, G)) / eps
        assert slope == pytest.approx(G.delta_hours * P.rho_c, rel=1e-6)
    elif f <= -eps:
        slope = (battery_step(b, f, P, G) - battery_step(b, f - eps, P, G)) / eps
        assert slope == pytest.approx(G.delta_hours / P.rho_d, rel=1e-6)


@given(q=st.floats(0.01, 1.0))
def test_round_trip_loses_energy(q):
    b = 1.0
    charged = battery_step(b, q / G.delta_hours, P, G)
    # discharge exactly what brings the stock back to b
    f = -(charged - b) * P.rho_d / G.delta_hours
    assert battery_step(charged, f, P, G) == pytest.approx(b, abs=1e-12)
    assert -f < q / G.delta_hours
    lossless = PhysicalParams(rho_c=1.0, rho_d=1.0)
    charged = battery_step(b, q / G.delta_hours, lossless, G)
    assert (charged - b) / G.delta_hours == pytest.approx(q / G.delta_hours)


def test_uniform_temperature_is_fixed_point():
    for scheme in ("exact", "euler"):
        p = PhysicalParams(thermal_scheme=scheme)
        w, i = thermal_step(15.0, 15.0, 0.0, Exogenous(15.0, 0.0, 0.0), p, G)
        assert w == pytest.approx(15.0, abs=1e-12) and i == pytest.approx(15.0, abs=1e-12)


def test_euler_arithmetic():
    p = PhysicalParams(thermal_scheme="euler")
    tw, ti, te, fh, pint, pext = 15.0, 20.0, 5.0, 1.5, 300.0, 200.0
    dt = G.delta_seconds
    w = tw + dt / p.c_m * ((ti - tw) / (p.r_i + p.r_s) + (te - tw) / (p.r_m + p.r_e) + p.gamma * fh * 1e3
                           + p.r_i / (p.r_i + p.r_s) * pint + p.r_e / (p.r_e + p.r_m) * pext)
    i = ti + dt / p.c_i * ((tw - ti) / (p.r_i + p.r_s) + (te - ti) / p.r_v + (te - ti) / p.r_f
                           + (1 - p.gamma) * fh * 1e3 + p.r_s / (p.r_i + p.r_s) * pint)
    out = thermal_step(tw, ti, fh, Exogenous(te, pint, pext), p, G)
    assert out[0] == pytest.approx(w, rel=1e-12)
    assert out[1] == pytest.approx(i, rel=1e-12)


@pytest.mark.parametrize("scheme", ["exact", "euler"])
def test_wall_ignores_heater_when_gamma_zero(scheme):
    p = PhysicalParams(gamma=0.0, thermal_scheme=scheme)
    exo = Exogenous(5.0, 0.0, 0.0)
    cold = thermal_step(15.0, 20.0, 0.0, exo, p, G)
    hot = thermal_step(15.0, 20.0, 3.0, exo, p, G)
    if scheme == "euler":
        assert hot[0] == cold[0]
    else:
        # within one step heat reaching the air leaks into the wall; the direct term is gone
        A, B = thermal_rates(p)
        assert B[0, 1] == 0.0
        assert hot[0] - cold[0] < 0.15 * (hot[1] - cold[1])
    assert hot[1] > cold[1]


def test_exact_step_matches_rk4_reference():
    A, B = thermal_rates(P)
    theta, v = np.array([15.0, 20.0]), np.array([5.0, 0.0, 0.0, 0.0])
    ref = rk4_thermal(theta, v, A, B, 900.0, 900)
    out = thermal_step(15.0, 20.0, 0.0, Exogenous(5.0, 0.0, 0.0), P, G)
    assert np.max(np.abs(np.array(out) - ref)) < 0.05


def test_dynamics_composes_substeps():
    x, u, w = State(1.0, 3.0, 15.0, 20.0), Control(1.0, 2.0, 1.0), Uncertainty(0.5, 4.0)
    exo = Exogenous(5.0, 100.0, 50.0)
    nxt = dynamics(x, u, w, exo, P, G)
    assert nxt.b == battery_step(1.0, 1.0, P, G)
    assert nxt.h == tank_step(3.0, 2.0, 4.0, P, G)
    assert (nxt.theta_w, nxt.theta_i) == thermal_step(15.0, 20.0, 1.0, exo, P, G)


def test_dynamics_rest_is_fixed_point():
    x = State(1.0, 3.0, 15.0, 15.0)
    assert dynamics(x, Control(), Uncertainty(), Exogenous(15.0, 0.0, 0.0), P, G) == pytest.approx(x)


def _fd_jacobian(fun, z, eps):
    base = np.asarray(fun(z))
    J = np.empty((len(base), len(z)))
    for k in range(len(z)):
        dz = np.zeros(len(z))
        dz[k] = eps
        J[:, k] = (np.asarray(fun(z + dz)) - np.asarray(fun(z - dz))) / (2 * eps)
    return J


@settings(max_examples=50, deadline=None)
@given(st.tuples(st.floats(0.1, 2.9), st.floats(0.1, 6.0), st.floats(-10, 40), st.floats(-10, 40),
                 st.floats(0.05, 3.0), st.floats(0.0, 3.0), st.floats(0.0, 3.0), st.booleans()))
def test_dynamics_jacobian_matches_finite_differences(v):
    b, h, tw, ti, fb, fw, fh, charge = v
    fb = fb if charge else -fb
    exo, w = Exogenous(5.0, 200.0, 100.0), Uncertainty(0.3, 1.0)
    x, u = State(b, h, tw, ti), Control(fb, fw, fh)
    jx, ju = dynamics_jacobian(x, u, P, G)
    eps = 1e-4
    fx = _fd_jacobian(lambda z: dynamics(State(*z), u, w, exo, P, G), np.array(x), eps)
    # central differences stay on one branch of the battery kink since |f_b| >= 0.05
    fu = _fd_jacobian(lambda z: dynamics(x, Control(*z), w, exo, P, G), np.array(u), eps)
    np.testing.assert_allclose(fx, jx, rtol=1e-6, atol=1e-9)
    np.testing.assert_allclose(fu, ju, rtol=1e-6, atol=1e-9)


@settings(max_examples=30, deadline=None)
@given(st.tuples(*(st.floats(-40, 40) for _ in range(3)), st.floats(0, 5), st.floats(0, 1000), st.floats(0, 1000)))
def test_thermal_step_is_affine(v):
    tw, ti, te, fh, pint, pext = v
    exo = Exogenous(te, pint, pext)
    M, N = thermal_map(P, G.delta_seconds)
    out = np.array(thermal_step(tw, ti, fh, exo, P, G))
    lin = M @ [tw, ti] + N @ [te, 1e3 * fh, pint, pext]
    np.testing.assert_allclose(out, lin, rtol=1e-9, atol=1e-9)


def test_weather_trace_round_trip(tmp_path):
    w = WeatherTrace(np.linspace(0, 5, 4), np.arange(4.0), np.ones(4))
    path = tmp_path / "weather.csv"
    w.to_csv(path)
    back = WeatherTrace.from_csv(path, horizon_steps=4)
    np.testing.assert_array_equal(back.theta_e, w.theta_e)
    with pytest.raises(ValueError):
        WeatherTrace.from_csv(path, horizon_steps=5)


def test_weather_lengths_must_match():
    with pytest.raises(ValueError):
        WeatherTrace(np.zeros(3), np.zeros(4), np.zeros(3))


def test_solar_power_scales_with_panel():
    assert solar_power_kw(np.array([1000.0]), P)[0] == pytest.approx(20 * 0.15)
