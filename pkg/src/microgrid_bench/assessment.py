"""Closed-loop simulation of policies on assessment scenarios and their comparison."""

from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .physical import Control, State, Uncertainty
from .policies.base import Policy, PolicyContext
from .problem import (InfeasibleStateError, MicrogridProblem, admissible_bounds_batch, admissible_box, advance,
                      advance_batch, final_cost, final_cost_batch, net_import, net_import_batch, stage_cost,
                      stage_cost_batch)

Z95 = 1.96


class PolicyInfeasibilityError(RuntimeError):
    """A policy returned a control outside the admissible set."""

    def __init__(self, message: str, scenario_id: int | None = None, step: int | None = None):
        super().__init__(message)
        self.scenario_id = scenario_id
        self.step = step


@dataclass
class SimulationResult:
    states: np.ndarray
    controls: np.ndarray
    uncertainties: np.ndarray
    net_imports: np.ndarray
    stage_costs: np.ndarray
    final_cost: float
    unserved: np.ndarray
    decision_seconds: np.ndarray

    @property
    def total_cost(self) -> float:
        return float(np.sum(self.stage_costs) + self.final_cost)

    @property
    def unserved_events(self) -> int:
        return int(np.count_nonzero(self.unserved > 0))


def simulate(policy: Policy, scenario: np.ndarray, problem: MicrogridProblem, x0: State | None = None,
             scenario_id: int | None = None, tolerance: float = 1e-6) -> SimulationResult:
    """Roll ``policy`` along ``scenario``; row ``t`` is revealed after the decision at ``t``.

    The policy only ever receives a read-only copy of the rows already revealed.
    """
    scenario = np.asarray(scenario, dtype=float)
    T = problem.horizon
    if scenario.shape != (T, 2):
        raise ValueError(f"scenario must have shape ({T}, 2)")
    x = problem.x0 if x0 is None else x0
    states, controls, nets, costs, lost, secs = [x], [], [], [], [], []
    prev = None
    for t in range(T):
        history = scenario[:t].copy()
        history.setflags(write=False)
        ctx = PolicyContext(t, x, history, prev)
        tic = time.perf_counter()
        u = Control(*(float(v) for v in policy.decide(ctx)))
        secs.append(time.perf_counter() - tic)
        try:
            box = admissible_box(x, problem.params, problem.grid)
        except InfeasibleStateError as err:
            raise PolicyInfeasibilityError(str(err), scenario_id, t) from err
        if not box.contains(u, tolerance):
            raise PolicyInfeasibilityError(
                f"{policy.name}: control {tuple(u)} outside [{tuple(box.lower)}, {tuple(box.upper)}] "
                f"at step {t}, state {tuple(x)}", scenario_id, t)
        w = Uncertainty(*scenario[t])
        nets.append(net_import(u, w))
        costs.append(stage_cost(x, u, w, t, problem.costs, problem.grid))
        x, unserved = advance(problem, x, u, w, t)
        states.append(x)
        controls.append(u)
        lost.append(unserved)
        prev = u
    return SimulationResult(
        np.array(states), np.array(controls), scenario.copy(), np.array(nets), np.array(costs),
        final_cost(x, problem.x0, problem.costs.kappa), np.array(lost), np.array(secs),
    )


@dataclass
class BatchResult:
    """Rollouts of one policy on many scenarios, stored as arrays.

    ``states`` has shape ``(n, T+1, 4)``, ``controls`` ``(n, T, 3)`` and the
    per-step arrays ``(n, T)``.
    """

    states: np.ndarray
    controls: np.ndarray
    uncertainties: np.ndarray
    net_imports: np.ndarray
    stage_costs: np.ndarray
    final_costs: np.ndarray
    unserved: np.ndarray
    decision_seconds: np.ndarray

    def __len__(self) -> int:
        return len(self.final_costs)

    def result(self, i: int) -> SimulationResult:
        return SimulationResult(self.states[i], self.controls[i], self.uncertainties[i], self.net_imports[i],
                                self.stage_costs[i], float(self.final_costs[i]), self.unserved[i],
                                self.decision_seconds[i])

    @property
    def total_costs(self) -> np.ndarray:
        # row by row, so each total is summed exactly as SimulationResult.total_cost does
        return np.array([float(np.sum(c) + f) for c, f in zip(self.stage_costs, self.final_costs)])

    @property
    def unserved_events(self) -> int:
        return int(np.count_nonzero(self.unserved > 0))


def simulate_batch(policy: Policy, scenarios: np.ndarray, problem: MicrogridProblem, chunk_size: int = 1024,
                   tolerance: float = 1e-6, first_id: int = 0) -> BatchResult:
    """:func:`simulate` for many scenarios at once, advancing all of them step by step.

    Scenarios are processed in consecutive chunks of ``chunk_size``; at step
    ``t`` the policy receives the states and read-only histories ``[:, :t]``
    of one chunk. Decision time is the batch time divided by the chunk size.
    """
    scenarios = np.asarray(scenarios, dtype=float)
    T = problem.horizon
    if scenarios.ndim != 3 or scenarios.shape[1:] != (T, 2):
        raise ValueError(f"scenarios must have shape (n, {T}, 2)")
    n = len(scenarios)
    states = np.empty((n, T + 1, 4))
    controls = np.empty((n, T, 3))
    nets = np.empty((n, T))
    costs = np.empty((n, T))
    lost = np.empty((n, T))
    secs = np.empty((n, T))
    x0 = np.asarray(problem.x0, dtype=float)
    for start in range(0, n, chunk_size):
        sl = slice(start, min(n, start + chunk_size))
        m = sl.stop - sl.start
        view = scenarios[sl]
        view.setflags(write=False)
        X = np.repeat(x0[None], m, axis=0)
        states[sl, 0] = X
        prev = None
        for t in range(T):
            tic = time.perf_counter()
            U = np.asarray(policy.decide_batch(t, X, view[:, :t], prev), dtype=float)
            secs[sl, t] = (time.perf_counter() - tic) / m
            try:
                lower, upper = admissible_bounds_batch(X, problem.params, problem.grid)
            except InfeasibleStateError as err:
                raise PolicyInfeasibilityError(str(err), None, t) from err
            bad = np.any((U < lower - tolerance) | (U > upper + tolerance), axis=1)
            if np.any(bad):
                i = int(np.flatnonzero(bad)[0])
                raise PolicyInfeasibilityError(
                    f"{policy.name}: control {tuple(U[i])} outside [{tuple(lower[i])}, {tuple(upper[i])}] "
                    f"at step {t}, state {tuple(X[i])}", first_id + sl.start + i, t)
            W = view[:, t]
            nets[sl, t] = net_import_batch(U, W)
            costs[sl, t] = stage_cost_batch(X, U, W, t, problem.costs, problem.grid)
            X, lost[sl, t] = advance_batch(problem, X, U, W, t)
            states[sl, t + 1] = X
            controls[sl, t] = U
            prev = U
    finals = final_cost_batch(states[:, T], problem.x0, problem.costs.kappa)
    return BatchResult(states, controls, scenarios.copy(), nets, costs, finals, lost, secs)


def record_bases(policy: Policy, scenarios: np.ndarray, problem: MicrogridProblem, chunk_size: int = 64) -> int:
    """Roll ``policy`` on ``scenarios`` while it stores the optimal bases it meets, then freeze it.

    Only meaningful for policies built on parametric LPs (see
    :class:`~microgrid_bench.policies.cached.FamilyPolicy`); returns the
    number of stored bases. A frozen policy answers from the stored bases
    where they are optimal and solves the LP otherwise, so its decisions do
    not depend on which scenarios it is later asked about.
    """
    if not hasattr(policy, "start_recording"):
        return 0
    scenarios = np.asarray(scenarios, dtype=float)
    _, first = np.unique(scenarios, axis=0, return_index=True)
    scenarios = scenarios[np.sort(first)]
    policy.start_recording()
    try:
        simulate_batch(policy, scenarios, problem, chunk_size=chunk_size)
    finally:
        policy.freeze()
    return policy.cached_regions


def confidence_halfwidth(std: float, n: int) -> float:
    return Z95 * std / math.sqrt(n)


@dataclass
class PolicyStats:
    mean: float
    std: float
    ci: float
    online_ms: float
    unserved_events: int


def summarize(costs) -> tuple[float, float, float]:
    """Mean, sample standard deviation and 95% half-width, by a two-pass loop."""
    costs = np.asarray(costs, dtype=float)
    n = len(costs)
    mean = float(np.sum(costs) / n)
    std = float(math.sqrt(np.sum((costs - mean) ** 2) / (n - 1))) if n > 1 else 0.0
    return mean, std, confidence_halfwidth(std, n)


def beat_fraction(a, b) -> float:
    """Share of scenarios where ``a`` is cheaper than ``b``; ties count half."""
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    return float((np.sum(a < b) + 0.5 * np.sum(a == b)) / len(a))


@dataclass
class BenchmarkReport:
    policies: list[str]
    costs: np.ndarray
    stats: dict[str, PolicyStats]
    offline_seconds: dict[str, float] = field(default_factory=dict)
    results: dict[str, list[SimulationResult]] = field(default_factory=dict)

    def index(self, name: str) -> int:
        try:
            return self.policies.index(name)
        except ValueError:
            raise KeyError(f"unknown policy {name!r}; report has {self.policies}") from None

    def cost_of(self, name: str) -> np.ndarray:
        return self.costs[self.index(name)]

    def difference(self, a: str, b: str) -> np.ndarray:
        return self.cost_of(a) - self.cost_of(b)

    def beat_fraction(self, a: str, b: str) -> float:
        return beat_fraction(self.cost_of(a), self.cost_of(b))

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["policy", "mean_cost", "std", "ci", "unserved_events"])
            for name in self.policies:
                s = self.stats[name]
                w.writerow([name, repr(s.mean), repr(s.std), repr(s.ci), s.unserved_events])

    def timing(self) -> dict[str, dict[str, float]]:
        """Offline seconds and online milliseconds per decision, per policy.

        Kept out of the CSV files, which are meant to be identical across reruns.
        """
        return {name: {"offline_s": float(self.offline_seconds.get(name, 0.0)),
                       "online_ms": float(self.stats[name].online_ms)} for name in self.policies}

    def write_pairwise_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["policy_a", "policy_b", "mean_difference", "beat_fraction"])
            for a in self.policies:
                for b in self.policies:
                    if a != b:
                        w.writerow([a, b, repr(float(np.mean(self.difference(a, b)))), repr(self.beat_fraction(a, b))])

    def write_trajectories(self, path: str | Path, limit: int | None = None) -> None:
        """One row per policy, scenario and step; ``limit`` caps the scenarios written."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["policy", "scenario_id", "step", "b", "h", "theta_w", "theta_i",
                        "f_b", "f_w", "f_h", "f_ne", "cost"])
            for name in self.policies:
                for n, res in enumerate(self.results.get(name, [])[:limit]):
                    for t in range(len(res.controls)):
                        w.writerow([name, n, t, *(repr(float(v)) for v in res.states[t]),
                                    *(repr(float(v)) for v in res.controls[t]),
                                    repr(float(res.net_imports[t])), repr(float(res.stage_costs[t]))])


def benchmark(policies: dict[str, Policy], scenarios: np.ndarray, problem: MicrogridProblem,
              offline_seconds: dict[str, float] | None = None, keep_results: bool = False,
              progress=None, chunk_size: int = 1024, dedupe: bool = False) -> BenchmarkReport:
    """Paired comparison: every policy runs on the same scenarios.

    With ``dedupe`` each distinct scenario is simulated once and its cost
    copied to all its duplicates (policies are deterministic).
    """
    scenarios = np.asarray(scenarios, dtype=float)
    if len(scenarios) < 2:
        raise ValueError("benchmark needs at least two scenarios")
    if dedupe:
        unique, first, inverse = np.unique(scenarios, axis=0, return_index=True, return_inverse=True)
        # keep first-appearance order so chunking does not depend on sorting
        order = np.argsort(first)
        run_set = scenarios[first[order]]
        rank = np.empty_like(order)
        rank[order] = np.arange(len(order))
        mapping = rank[inverse.ravel()]
        ids = first[order]
    else:
        run_set, mapping, ids = scenarios, np.arange(len(scenarios)), np.arange(len(scenarios))
    names = list(policies)
    costs = np.empty((len(names), len(scenarios)))
    stats, results = {}, {}
    for i, name in enumerate(names):
        try:
            batch = simulate_batch(policies[name], run_set, problem, chunk_size=chunk_size)
        except PolicyInfeasibilityError as err:
            if err.scenario_id is not None:
                err.scenario_id = int(ids[err.scenario_id])
            err.args = (f"scenario {err.scenario_id}: {err.args[0]}",)
            raise
        costs[i] = batch.total_costs[mapping]
        mean, std, ci = summarize(costs[i])
        events = int(np.count_nonzero(batch.unserved > 0, axis=1)[mapping].sum())
        stats[name] = PolicyStats(mean, std, ci, 1e3 * float(np.mean(batch.decision_seconds)), events)
        results[name] = [batch.result(int(k)) for k in mapping] if keep_results else []
        if progress is not None:
            progress(name, len(batch))
    return BenchmarkReport(names, costs, stats, dict(offline_seconds or {}), results)


@dataclass
class SweepRow:
    sigma_T: float
    policy: str
    mean_cost: float
    ci: float


def uncertainty_sweep(levels, run_level) -> list[SweepRow]:
    """Benchmark at each noise level.

    ``run_level(sigma_T)`` regenerates scenarios, rebuilds the policies and
    returns their :class:`BenchmarkReport`; one row per (level, policy).
    """
    levels = [float(v) for v in levels]
    if any(v < 0 for v in levels):
        raise ValueError("noise levels must be nonnegative")
    rows = []
    for sigma in levels:
        report = run_level(sigma)
        for name in report.policies:
            st = report.stats[name]
            rows.append(SweepRow(sigma, name, st.mean, st.ci))
    return rows


def write_sweep_csv(path: str | Path, rows: list[SweepRow]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["sigma_T", "policy", "mean_cost", "ci"])
        for r in rows:
            w.writerow([repr(r.sigma_T), r.policy, repr(r.mean_cost), repr(r.ci)])


@dataclass
class Histogram:
    edges: np.ndarray
    counts: np.ndarray
    beat_fraction: float

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["bin_left", "bin_right", "count"])
            for lo, hi, c in zip(self.edges[:-1], self.edges[1:], self.counts):
                w.writerow([repr(float(lo)), repr(float(hi)), int(c)])
            w.writerow(["beat_fraction", repr(self.beat_fraction), ""])


def cost_difference_histogram(report: BenchmarkReport, policy_a: str, policy_b: str, bins: int = 30) -> Histogram:
    """Histogram of per-scenario ``cost_a - cost_b``."""
    diff = report.difference(policy_a, policy_b)
    lo, hi = float(diff.min()), float(diff.max())
    if hi - lo < 1e-12:
        lo, hi = lo - 0.5, hi + 0.5
    counts, edges = np.histogram(diff, bins=bins, range=(lo, hi))
    return Histogram(edges, counts, report.beat_fraction(policy_a, policy_b))
