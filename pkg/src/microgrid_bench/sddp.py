"""Stochastic dual dynamic programming on the microgrid problem.

Each stage LP decides ``(c, d, f_w, f_h)`` before the noise is known and keeps
one copy of the noise-dependent variables per atom of the stage distribution.
The incoming state only enters right-hand sides, so the duals of those rows
give a subgradient of the stage value in the state.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .lp import EQ, GE, LE, LpError, PolyhedralFunction, make_model
from .lp.builder import LpBuilder
from .lp.program import LinearProgram
from .physical import Control, State, Uncertainty, thermal_map
from .problem import MicrogridProblem, advance, final_cost, final_cost_cuts, stage_cost

STATE_DIM = 4
FORMAT_HEADER = "microgrid-bench value functions v1"
# cut slopes below this are dropped from LP rows, as HiGHS would do anyway
TINY_COEFFICIENT = 1e-9


class InfeasibleSubproblemError(LpError):
    pass


@dataclass(frozen=True)
class DiscreteDistribution:
    """Finite distribution over ``(d_el_net, d_th)`` pairs."""

    atoms: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        atoms = np.array(self.atoms, dtype=float).reshape(-1, 2)
        weights = np.array(self.weights, dtype=float).reshape(-1)
        if len(atoms) == 0:
            raise ValueError("a distribution needs at least one atom")
        if len(weights) != len(atoms):
            raise ValueError("one weight per atom is required")
        if np.any(weights < 0) or abs(weights.sum() - 1.0) > 1e-9:
            raise ValueError("weights must be nonnegative and sum to one")
        if np.any(atoms[:, 1] < 0):
            raise ValueError("hot-water demand atoms must be nonnegative")
        atoms.setflags(write=False)
        weights.setflags(write=False)
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "weights", weights)

    @classmethod
    def point(cls, w) -> DiscreteDistribution:
        return cls(np.asarray(w, dtype=float).reshape(1, 2), np.ones(1))

    def __len__(self) -> int:
        return len(self.weights)

    def mean(self) -> np.ndarray:
        return self.weights @ self.atoms

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        return self.atoms[rng.choice(len(self), p=self.weights)]


@dataclass(frozen=True)
class SddpConfig:
    max_iterations: int = 300
    gap_tolerance: float = 1e-3
    ub_eval_scenarios: int = 300
    ub_check_period: int = 10
    rng_seed: int = 0
    forward_passes_per_iteration: int = 1
    # "ci_lower" compares the lower end of the 95% interval of the simulated
    # cost with the lower bound, "mean" compares the sample mean itself
    ub_statistic: str = "ci_lower"
    backend: str = "highs"

    def __post_init__(self):
        if not self.gap_tolerance > 0:
            raise ValueError("gap_tolerance must be positive")
        for name in ("max_iterations", "ub_eval_scenarios", "ub_check_period", "forward_passes_per_iteration"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be at least 1")
        if self.ub_statistic not in ("ci_lower", "mean"):
            raise ValueError(f"unknown ub_statistic {self.ub_statistic!r}")


class StageLayout:
    """Column and row layout of the stage-``t`` LP for a fixed atom count.

    Rows: battery balance, two net battery-power rows, tank filling limit, two
    thermal rows, discomfort epigraph, then per atom an import epigraph row and
    a tank balance row, then the cut rows (one per cut and atom).
    """

    def __init__(self, problem: MicrogridProblem, t: int, weights: np.ndarray):
        p, costs, grid = problem.params, problem.costs, problem.grid
        dt = grid.delta_hours
        self.problem, self.t = problem, t
        self.weights = np.asarray(weights, dtype=float)
        S = self.num_atoms = len(self.weights)
        M, N = thermal_map(p, grid.delta_seconds)
        self._M = M
        exo = problem.weather.at(t)
        v = np.array([exo.theta_e, 0.0, exo.phi_int, exo.phi_ext])
        self._exo = N @ v

        bld = LpBuilder()
        self.c = bld.var("charge", 0.0, p.fb_max)
        self.d = bld.var("discharge", 0.0, p.fb_max, problem.discharge_tiebreak)
        self.fw = bld.var("f_w", 0.0, p.fw_max)
        self.fh = bld.var("f_h", 0.0, p.fh_max)
        self.delta = bld.var("discomfort", 0.0, np.inf, costs.price_discomfort[t])
        self.b_next = bld.var("b_next", p.b_min, p.b_max)
        self.tw_next = bld.var("theta_w_next", -np.inf, np.inf)
        self.ti_next = bld.var("theta_i_next", -np.inf, np.inf)
        self.e, self.s, self.h_next, self.rho = [], [], [], []
        for i, pi in enumerate(self.weights):
            self.e.append(bld.var(f"import[{i}]", 0.0, np.inf, pi * dt * costs.price_elec[t]))
            self.s.append(bld.var(f"unserved[{i}]", 0.0, np.inf, pi * dt * costs.unserved_penalty))
            self.h_next.append(bld.var(f"h_next[{i}]", 0.0, np.inf))
            self.rho.append(bld.var(f"rho[{i}]", -np.inf, np.inf, pi))

        c, d, fw, fh = self.c, self.d, self.fw, self.fh
        bld.row([(self.b_next, 1.0), (c, -dt * p.rho_c), (d, dt / p.rho_d)], EQ, 0.0, "battery")
        bld.row([(c, 1.0), (d, -1.0)], LE, 0.0, "net_charge_max")
        bld.row([(c, 1.0), (d, -1.0)], GE, 0.0, "net_discharge_max")
        bld.row([(fw, 1.0)], LE, 0.0, "tank_fill_max")
        bld.row([(self.tw_next, 1.0), (fh, -1e3 * N[0, 1])], EQ, 0.0, "thermal_wall")
        bld.row([(self.ti_next, 1.0), (fh, -1e3 * N[1, 1])], EQ, 0.0, "thermal_indoor")
        bld.row([(self.delta, 1.0)], GE, 0.0, "discomfort")
        for i in range(S):
            bld.row([(self.e[i], 1.0), (c, -1.0), (d, 1.0), (fw, -1.0), (fh, -1.0)], GE, 0.0, f"import[{i}]")
            bld.row([(self.h_next[i], 1.0), (fw, -dt * p.beta_h), (self.s[i], -dt)], EQ, 0.0, f"tank[{i}]")
        self.base_rows = len(bld.rhs)
        self.lp_base = bld.build()

        # rhs = r0 + R @ x + atom terms
        m = self.base_rows
        R = np.zeros((m, STATE_DIM))
        r0 = np.zeros(m)
        R[0, 0] = 1.0
        R[1, 0], r0[1] = -1.0 / (dt * p.rho_c), p.b_max / (dt * p.rho_c)
        R[2, 0], r0[2] = -p.rho_d / dt, p.rho_d * p.b_min / dt
        R[3, 1], r0[3] = -1.0 / (dt * p.beta_h), p.h_max / (dt * p.beta_h)
        R[4, 2:], r0[4] = M[0], self._exo[0]
        R[5, 2:], r0[5] = M[1], self._exo[1]
        R[6, 3], r0[6] = -1.0, costs.temp_setpoint[t]
        self.import_rows = 7 + 2 * np.arange(S)
        self.tank_rows = self.import_rows + 1
        R[self.tank_rows, 1] = 1.0
        self.R, self.r0 = R, r0

    def rhs(self, x, atoms) -> np.ndarray:
        atoms = np.asarray(atoms, dtype=float).reshape(self.num_atoms, 2)
        r = self.r0 + self.R @ np.asarray(x, dtype=float)
        r[self.import_rows] += atoms[:, 0]
        r[self.tank_rows] -= self.problem.grid.delta_hours * atoms[:, 1]
        return r

    def cut_rows(self, lambdas, betas):
        """Rows ``rho_i - <lam, x_next_i> >= beta`` for every cut and atom."""
        lambdas = np.asarray(lambdas, dtype=float).reshape(-1, STATE_DIM)
        betas = np.asarray(betas, dtype=float).reshape(-1)
        S, n = self.num_atoms, self.lp_base.num_vars
        rows, cols, vals = [], [], []
        k = 0
        for lam, _ in zip(lambdas, betas):
            for i in range(S):
                for j, v in ((self.rho[i], 1.0), (self.b_next, -lam[0]), (self.h_next[i], -lam[1]),
                             (self.tw_next, -lam[2]), (self.ti_next, -lam[3])):
                    if abs(v) > TINY_COEFFICIENT:
                        rows.append(k)
                        cols.append(j)
                        vals.append(v)
                k += 1
        A = sp.csr_matrix((vals, (rows, cols)), shape=(k, n))
        return A, np.full(k, GE), np.repeat(betas, S)

    def build(self, x, atoms, v_next: PolyhedralFunction) -> LinearProgram:
        A_cut, senses, rhs = self.cut_rows(v_next.lambdas, v_next.betas)
        lp = self.lp_base
        return LinearProgram(
            lp.c, sp.vstack([lp.A, A_cut]).tocsr(), np.concatenate([lp.senses, senses]),
            np.concatenate([self.rhs(x, atoms), rhs]), lp.lb, lp.ub,
            var_names=lp.var_names,
            row_names=lp.row_names + [f"cut{j}[{i}]" for j in range(len(v_next)) for i in range(self.num_atoms)],
        )

    def control(self, xs: np.ndarray) -> Control:
        return Control(float(xs[self.c] - xs[self.d]), float(xs[self.fw]), float(xs[self.fh]))


def stage_subproblem(problem: MicrogridProblem, t: int, x, dist: DiscreteDistribution,
                     v_next: PolyhedralFunction) -> LinearProgram:
    """The stage-``t`` LP at state ``x`` as a standalone program."""
    return StageLayout(problem, t, dist.weights).build(x, dist.atoms, v_next)


@dataclass
class StageSolution:
    control: Control
    value: float
    subgradient: np.ndarray
    primal: np.ndarray


class StageModel:
    """Persistent solver instance of one stage LP whose cuts grow over time."""

    def __init__(self, problem: MicrogridProblem, t: int, dist: DiscreteDistribution,
                 v_next: PolyhedralFunction, backend: str = "highs"):
        self.layout = StageLayout(problem, t, dist.weights)
        self.atoms = dist.atoms
        self.model = make_model(self.layout.build(problem.x0, dist.atoms, v_next), backend)
        self._rows = np.arange(self.layout.base_rows)

    def add_cuts(self, lambdas, betas) -> None:
        A, senses, rhs = self.layout.cut_rows(lambdas, betas)
        self.model.add_rows(A, senses, rhs)

    def solve(self, x, atoms=None) -> StageSolution:
        lay = self.layout
        atoms = self.atoms if atoms is None else atoms
        self.model.set_rhs(self._rows, lay.rhs(x, atoms))
        sol = self.model.solve()
        if not sol.optimal:
            raise InfeasibleSubproblemError(f"stage {lay.t} LP is {sol.status} at state {tuple(x)}")
        lam = lay.R.T @ sol.duals[: lay.base_rows]
        return StageSolution(lay.control(sol.x), sol.objective, lam, sol.x)


@dataclass
class TrainingLogRow:
    iteration: int
    lb: float
    ub: float
    gap: float


@dataclass
class TrainedValueFunctions:
    """Lower approximations ``V_0 .. V_T``; ``V_T`` is the final cost."""

    functions: list[PolyhedralFunction]
    log: list[TrainingLogRow] = field(default_factory=list)
    status: str = "untrained"

    @property
    def horizon(self) -> int:
        return len(self.functions) - 1

    def __getitem__(self, t: int) -> PolyhedralFunction:
        return self.functions[t]

    @property
    def lower_bound(self) -> float:
        return self.log[-1].lb if self.log else math.nan

    def save(self, path: str | Path) -> None:
        """Text layout: header line, ``steps <T+1>``, then per step a line
        ``step <t> cuts <k>`` followed by ``k`` lines ``l_b l_h l_w l_i beta``."""
        with open(path, "w") as fh:
            fh.write(FORMAT_HEADER + "\n")
            fh.write(f"steps {len(self.functions)}\n")
            for t, pf in enumerate(self.functions):
                fh.write(f"step {t} cuts {len(pf)}\n")
                for lam, beta in zip(pf.lambdas, pf.betas):
                    fh.write(" ".join(repr(float(v)) for v in (*lam, beta)) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> TrainedValueFunctions:
        with open(path) as fh:
            lines = [ln.strip() for ln in fh if ln.strip()]
        if not lines or lines[0] != FORMAT_HEADER:
            raise ValueError(f"{path}: not a value-function file of this version")
        n_steps = int(lines[1].split()[1])
        pos, functions = 2, []
        for t in range(n_steps):
            tag, t_read, _, k = lines[pos].split()
            if tag != "step" or int(t_read) != t:
                raise ValueError(f"{path}: malformed step header {lines[pos]!r}")
            pos += 1
            pf = PolyhedralFunction(STATE_DIM)
            for _ in range(int(k)):
                vals = [float(v) for v in lines[pos].split()]
                pf.add_cut(vals[:STATE_DIM], vals[STATE_DIM])
                pos += 1
            functions.append(pf)
        return cls(functions, status="loaded")

    def write_log(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["iteration", "lb", "ub", "gap"])
            for row in self.log:
                w.writerow([row.iteration, repr(row.lb), repr(row.ub), repr(row.gap)])


@dataclass
class Trajectory:
    states: list[State]
    controls: list[Control]
    costs: list[float]
    unserved: list[float]

    @property
    def total_cost(self) -> float:
        return float(sum(self.costs))


def initial_value_functions(problem: MicrogridProblem) -> list[PolyhedralFunction]:
    T = problem.horizon
    vfs = [PolyhedralFunction(STATE_DIM, [(np.zeros(STATE_DIM), 0.0)]) for _ in range(T)]
    vfs.append(PolyhedralFunction(STATE_DIM, final_cost_cuts(problem.x0, problem.costs.kappa)))
    return vfs


def forward_pass(models: list[StageModel], problem: MicrogridProblem, scenario: np.ndarray,
                 x0: State | None = None) -> Trajectory:
    """Roll the current cut policy along ``scenario`` (row ``t`` is the noise
    revealed after the decision at ``t``). Costs include the unserved-hot-water
    penalty and, as the last entry, the final cost."""
    x = problem.x0 if x0 is None else x0
    states, controls, costs, unserved = [x], [], [], []
    for t, model in enumerate(models):
        u = model.solve(x).control
        w = Uncertainty(*scenario[t])
        cost = stage_cost(x, u, w, t, problem.costs, problem.grid)
        x, lost = advance(problem, x, u, w, t)
        states.append(x)
        controls.append(u)
        costs.append(cost + problem.costs.unserved_penalty * lost)
        unserved.append(lost)
    costs.append(final_cost(x, problem.x0, problem.costs.kappa))
    return Trajectory(states, controls, costs, unserved)


def _is_duplicate(pf: PolyhedralFunction, lam: np.ndarray, beta: float) -> bool:
    if not len(pf):
        return False
    diff = np.abs(pf.lambdas - lam).max(axis=1) + np.abs(pf.betas - beta)
    return bool(np.any(diff < 1e-12))


def backward_pass(models: list[StageModel], vfs: list[PolyhedralFunction],
                  trajectories: list[Trajectory]) -> list[PolyhedralFunction]:
    """Add one cut per visited state to every ``V_t``, ``t = T-1 .. 0``.

    ``models[t]`` must carry the cuts of ``vfs[t+1]``; new cuts of ``vfs[t]`` are
    pushed into ``models[t-1]`` before moving one step back.
    """
    T = len(models)
    for t in range(T - 1, -1, -1):
        new = []
        for traj in trajectories:
            x = np.asarray(traj.states[t], dtype=float)
            sol = models[t].solve(x)
            lam = sol.subgradient
            beta = sol.value - float(lam @ x)
            if not _is_duplicate(vfs[t], lam, beta):
                vfs[t].add_cut(lam, beta)
                new.append((lam, beta))
        if new and t > 0:
            lams, betas = zip(*new)
            models[t - 1].add_cuts(np.array(lams), np.array(betas))
    return vfs


def sample_scenarios(dists: list[DiscreteDistribution], n: int, rng: np.random.Generator) -> np.ndarray:
    """``n`` stagewise-independent scenarios, shape ``(n, T, 2)``."""
    out = np.empty((n, len(dists), 2))
    for t, dist in enumerate(dists):
        idx = rng.choice(len(dist), size=n, p=dist.weights)
        out[:, t] = dist.atoms[idx]
    return out


def _gap(lb: float, costs: np.ndarray, statistic: str) -> tuple[float, float]:
    ub = float(np.mean(costs))
    ref = ub
    if statistic == "ci_lower" and len(costs) > 1:
        ref = ub - 1.96 * float(np.std(costs, ddof=1)) / math.sqrt(len(costs))
    denom = abs(ub) if ub != 0 else 1.0
    return ub, (ref - lb) / denom


def build_stage_models(problem: MicrogridProblem, dists: list[DiscreteDistribution],
                       vfs: list[PolyhedralFunction], backend: str = "highs") -> list[StageModel]:
    return [StageModel(problem, t, dists[t], vfs[t + 1], backend) for t in range(problem.horizon)]


def train(problem: MicrogridProblem, dists: list[DiscreteDistribution], config: SddpConfig = SddpConfig(),
          ub_scenarios: np.ndarray | None = None, progress=None) -> TrainedValueFunctions:
    """Alternate forward and backward passes until the gap test passes.

    The upper-bound scenarios are drawn once from ``dists`` (unless given) and
    reused at every check. ``progress``, if given, is called with each log row.
    """
    T = problem.horizon
    if len(dists) != T:
        raise ValueError(f"need {T} stage distributions, got {len(dists)}")
    rng = np.random.default_rng(config.rng_seed)
    if ub_scenarios is None:
        ub_scenarios = sample_scenarios(dists, config.ub_eval_scenarios, np.random.default_rng([config.rng_seed, 1]))
    vfs = initial_value_functions(problem)
    models = build_stage_models(problem, dists, vfs, config.backend)
    log: list[TrainingLogRow] = []
    status = "max_iterations"
    x0 = np.asarray(problem.x0, dtype=float)
    for k in range(1, config.max_iterations + 1):
        scen = sample_scenarios(dists, config.forward_passes_per_iteration, rng)
        trajs = [forward_pass(models, problem, s) for s in scen]
        backward_pass(models, vfs, trajs)
        lb = vfs[0].evaluate(x0)
        ub, gap = math.nan, math.nan
        if k % config.ub_check_period == 0 or k == config.max_iterations:
            costs = np.array([forward_pass(models, problem, s).total_cost for s in ub_scenarios])
            ub, gap = _gap(lb, costs, config.ub_statistic)
        row = TrainingLogRow(k, lb, ub, gap)
        log.append(row)
        if progress is not None:
            progress(row)
        if gap < config.gap_tolerance:
            status = "converged"
            break
    return TrainedValueFunctions(vfs, log, status)
