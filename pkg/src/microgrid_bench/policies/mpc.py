"""Deterministic look-ahead over the remaining horizon."""

from __future__ import annotations

import numpy as np

from ..lp import EQ, GE, LE, LpError, make_model
from ..lp.builder import LpBuilder
from ..lp.program import LinearProgram
from ..physical import Control, thermal_map
from ..problem import MicrogridProblem
from ..uncertainty import Ar1Model, mpc_forecast
from .cached import FamilyPolicy, LpFamily


class HorizonLayout:
    """LP over steps ``t0 .. T-1`` for a given forecast of the noise.

    The current state and the forecast enter right-hand sides only. Every
    step carries the same rows as the stage LP of the stochastic method with
    a single atom, and the final cost is written with two epigraph variables.
    """

    def __init__(self, problem: MicrogridProblem, t0: int):
        p, costs, grid = problem.params, problem.costs, problem.grid
        T = problem.horizon
        if not 0 <= t0 < T:
            raise ValueError(f"t0 must lie in [0, {T})")
        self.problem, self.t0 = problem, t0
        n = self.steps = T - t0
        dt = grid.delta_hours
        M, N = thermal_map(p, grid.delta_seconds)
        kappa = costs.kappa

        bld = LpBuilder()
        self.c, self.d, self.fw, self.fh = [], [], [], []
        self.e, self.s, self.delta = [], [], []
        self.b, self.h, self.tw, self.ti = [], [], [], []
        for k in range(n):
            t = t0 + k
            self.c.append(bld.var(f"charge[{t}]", 0.0, p.fb_max))
            self.d.append(bld.var(f"discharge[{t}]", 0.0, p.fb_max, problem.discharge_tiebreak))
            self.fw.append(bld.var(f"f_w[{t}]", 0.0, p.fw_max))
            self.fh.append(bld.var(f"f_h[{t}]", 0.0, p.fh_max))
            self.delta.append(bld.var(f"discomfort[{t}]", 0.0, np.inf, costs.price_discomfort[t]))
            self.e.append(bld.var(f"import[{t}]", 0.0, np.inf, dt * costs.price_elec[t]))
            self.s.append(bld.var(f"unserved[{t}]", 0.0, np.inf, dt * costs.unserved_penalty))
            self.b.append(bld.var(f"b[{t + 1}]", p.b_min, p.b_max))
            self.h.append(bld.var(f"h[{t + 1}]", 0.0, np.inf))
            self.tw.append(bld.var(f"theta_w[{t + 1}]", -np.inf, np.inf))
            self.ti.append(bld.var(f"theta_i[{t + 1}]", -np.inf, np.inf))
        self.kb = bld.var("final_b", 0.0, np.inf, 1.0)
        self.kh = bld.var("final_h", 0.0, np.inf, 1.0)

        # per step rows in a fixed order; rows of the first step get the state
        rows = {name: [] for name in ("battery", "charge_max", "discharge_max", "fill_max", "tank",
                                      "wall", "indoor", "discomfort", "import")}
        self._exo = np.zeros((n, 2))
        for k in range(n):
            t = t0 + k
            c, d, fw, fh = self.c[k], self.d[k], self.fw[k], self.fh[k]
            prev = k > 0
            bp = [(self.b[k - 1], -1.0)] if prev else []
            rows["battery"].append(bld.row([(self.b[k], 1.0), (c, -dt * p.rho_c), (d, dt / p.rho_d)] + bp,
                                           EQ, 0.0, f"battery[{t}]"))
            bq = [(self.b[k - 1], 1.0 / (dt * p.rho_c))] if prev else []
            rows["charge_max"].append(bld.row([(c, 1.0), (d, -1.0)] + bq, LE, p.b_max / (dt * p.rho_c),
                                              f"charge_max[{t}]"))
            bq = [(self.b[k - 1], p.rho_d / dt)] if prev else []
            rows["discharge_max"].append(bld.row([(c, 1.0), (d, -1.0)] + bq, GE, p.rho_d * p.b_min / dt,
                                                 f"discharge_max[{t}]"))
            hq = [(self.h[k - 1], 1.0 / (dt * p.beta_h))] if prev else []
            rows["fill_max"].append(bld.row([(fw, 1.0)] + hq, LE, p.h_max / (dt * p.beta_h), f"fill_max[{t}]"))
            hq = [(self.h[k - 1], -1.0)] if prev else []
            rows["tank"].append(bld.row([(self.h[k], 1.0), (fw, -dt * p.beta_h), (self.s[k], -dt)] + hq,
                                        EQ, 0.0, f"tank[{t}]"))
            exo = problem.weather.at(t)
            self._exo[k] = N @ np.array([exo.theta_e, 0.0, exo.phi_int, exo.phi_ext])
            tq = [(self.tw[k - 1], -M[0, 0]), (self.ti[k - 1], -M[0, 1])] if prev else []
            rows["wall"].append(bld.row([(self.tw[k], 1.0), (fh, -1e3 * N[0, 1])] + tq, EQ, self._exo[k, 0],
                                        f"wall[{t}]"))
            tq = [(self.tw[k - 1], -M[1, 0]), (self.ti[k - 1], -M[1, 1])] if prev else []
            rows["indoor"].append(bld.row([(self.ti[k], 1.0), (fh, -1e3 * N[1, 1])] + tq, EQ, self._exo[k, 1],
                                          f"indoor[{t}]"))
            tq = [(self.ti[k - 1], 1.0)] if prev else []
            rows["discomfort"].append(bld.row([(self.delta[k], 1.0)] + tq, GE, costs.temp_setpoint[t],
                                              f"discomfort[{t}]"))
            rows["import"].append(bld.row([(self.e[k], 1.0), (c, -1.0), (d, 1.0), (fw, -1.0), (fh, -1.0)],
                                          GE, 0.0, f"import[{t}]"))
        x0 = problem.x0
        self.final_b = bld.row([(self.kb, 1.0), (self.b[-1], kappa)], GE, kappa * x0.b, "final_b")
        self.final_h = bld.row([(self.kh, 1.0), (self.h[-1], kappa)], GE, kappa * x0.h, "final_h")
        self.rows = {k: np.array(v) for k, v in rows.items()}
        self.lp_base = bld.build()

        # right-hand side = r0 + R @ x + noise terms
        m = self.lp_base.num_rows
        R = np.zeros((m, 4))
        r = self.rows
        R[r["battery"][0], 0] = 1.0
        R[r["charge_max"][0], 0] = -1.0 / (dt * p.rho_c)
        R[r["discharge_max"][0], 0] = -p.rho_d / dt
        R[r["fill_max"][0], 1] = -1.0 / (dt * p.beta_h)
        R[r["tank"][0], 1] = 1.0
        R[r["wall"][0], 2:] = M[0]
        R[r["indoor"][0], 2:] = M[1]
        R[r["discomfort"][0], 3] = -1.0
        self.R = R
        self.r0 = self.lp_base.rhs.copy()
        self._dt = dt

    def rhs(self, x, forecast) -> np.ndarray:
        forecast = np.asarray(forecast, dtype=float).reshape(self.steps, 2)
        out = self.r0 + self.R @ np.asarray(x, dtype=float)
        out[self.rows["import"]] += forecast[:, 0]
        out[self.rows["tank"]] -= self._dt * forecast[:, 1]
        return out

    def build(self, x, forecast) -> LinearProgram:
        return self.lp_base.with_rhs(self.rhs(x, forecast))

    def first_control(self, xs: np.ndarray) -> Control:
        return Control(float(xs[self.c[0]] - xs[self.d[0]]), float(xs[self.fw[0]]), float(xs[self.fh[0]]))

    def controls(self, xs: np.ndarray) -> np.ndarray:
        c, d = xs[self.c], xs[self.d]
        return np.column_stack([c - d, xs[self.fw], xs[self.fh]])


def clairvoyant_cost(problem: MicrogridProblem, scenario: np.ndarray, backend: str = "highs") -> float:
    """Optimal cost of the whole day with the realized noise known in advance."""
    lay = HorizonLayout(problem, 0)
    sol = make_model(lay.build(problem.x0, scenario), backend).solve()
    if not sol.optimal:
        raise LpError(f"clairvoyant LP is {sol.status}")
    return sol.objective


class ArForecaster:
    """AR(1) one step ahead, then the per-step means of the fitting scenarios."""

    def __init__(self, ar: Ar1Model):
        self.ar = ar

    def forecast(self, t: int, history: np.ndarray) -> np.ndarray:
        return mpc_forecast(self.ar, t, history[-1] if t > 0 else None)

    def nominal(self, t: int) -> np.ndarray:
        return mpc_forecast(self.ar, t)

    def forecast_batch(self, t: int, histories: np.ndarray) -> np.ndarray:
        out = np.repeat(mpc_forecast(self.ar, t)[None], len(histories), axis=0)
        if t > 0:
            out[:, 0] = self.ar.predict(t, np.asarray(histories)[:, -1])
        return out


class PerfectForecast:
    """Oracle forecaster returning the realized scenario (testing only)."""

    def __init__(self, scenario: np.ndarray):
        self.scenario = np.asarray(scenario, dtype=float)

    def forecast(self, t: int, history: np.ndarray) -> np.ndarray:
        return self.scenario[t:]

    def nominal(self, t: int) -> np.ndarray:
        return self.scenario[t:]


class MpcPolicy(FamilyPolicy):
    """Solves the deterministic tail problem and applies its first decision.

    The look-ahead LP at step ``t`` is parametrized by the state and the
    whole forecast.
    """

    name = "mpc"

    def __init__(self, problem: MicrogridProblem, forecaster, backend: str = "highs"):
        super().__init__()
        self.problem = problem
        self.forecaster = forecaster
        self.backend = backend

    def _build_family(self, t: int) -> LpFamily:
        lay = HorizonLayout(self.problem, t)
        lp = lay.build(np.zeros(4), np.zeros((lay.steps, 2)))
        R = np.zeros((lp.num_rows, 4 + 2 * lay.steps))
        R[:, :4] = lay.R
        cols = 4 + 2 * np.arange(lay.steps)
        R[lay.rows["import"], cols] = 1.0
        R[lay.rows["tank"], cols + 1] = -self.problem.grid.delta_hours
        L = np.zeros((3, lp.num_vars))
        L[0, lay.c[0]], L[0, lay.d[0]], L[1, lay.fw[0]], L[2, lay.fh[0]] = 1.0, -1.0, 1.0, 1.0
        nominal_fn = getattr(self.forecaster, "nominal", None)
        nominal = nominal_fn(t) if nominal_fn is not None else np.zeros((lay.steps, 2))
        fam = LpFamily(lp, R, L, self.backend, np.concatenate([np.asarray(self.problem.x0), nominal.ravel()]))
        fam.layout = lay
        return fam

    def parameters(self, t: int, states: np.ndarray, histories: np.ndarray) -> np.ndarray:
        batch = getattr(self.forecaster, "forecast_batch", None)
        if batch is not None:
            fc = batch(t, histories)
        else:
            fc = np.array([self.forecaster.forecast(t, h) for h in histories])
        return np.hstack([np.asarray(states, dtype=float), fc.reshape(len(fc), -1)])

    def plan(self, t: int, x, forecast):
        """Full look-ahead solution at step ``t`` (layout and LP solution)."""
        fam = self.family(t)
        sol = fam.solve(np.concatenate([np.asarray(x, dtype=float), np.asarray(forecast).ravel()]))
        return fam.layout, sol
