import csv

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import battery_only_problem
from microgrid_bench.assessment import (BenchmarkReport, PolicyInfeasibilityError, benchmark, beat_fraction,
                                        confidence_halfwidth, cost_difference_histogram, record_bases, simulate,
                                        simulate_batch, summarize, uncertainty_sweep, write_sweep_csv)
from microgrid_bench.physical import Control
from microgrid_bench.policies import ArForecaster, MpcPolicy, Policy, RuleBasedPolicy
from microgrid_bench.problem import CostParams, MicrogridProblem, admissible_box
from microgrid_bench.uncertainty import fit_ar1
from oracles import naive_stats


class Idle(Policy):
    name = "idle"

    def decide(self, ctx):
        return admissible_box(ctx.state, self.problem.params, self.problem.grid).clip(Control(0.0, 0.0, 0.0))

    def __init__(self, problem):
        self.problem = problem


class Peeking(Policy):
    """Tries to read the row that has not been revealed yet."""

    name = "peek"

    def decide(self, ctx):
        assert not ctx.history.flags.writeable
        return Control(0.0, 0.0, 0.0)


class Greedy(Policy):
    name = "greedy"

    def decide(self, ctx):
        return Control(100.0, 0.0, 0.0)


def random_scenarios(problem, n, seed):
    rng = np.random.default_rng(seed)
    T = problem.horizon
    return np.stack([rng.normal(0.3, 0.8, (n, T)), np.abs(rng.normal(0.1, 0.1, (n, T)))], axis=2)


def test_zero_prices_give_zero_cost(short_problem):
    T = short_problem.horizon
    free = MicrogridProblem(short_problem.params, CostParams(np.zeros(T), np.zeros(T), np.zeros(T), kappa=0.0),
                            short_problem.grid, short_problem.weather, short_problem.x0)
    for s in random_scenarios(free, 5, 0):
        assert simulate(RuleBasedPolicy(free), s, free).total_cost == 0.0


def test_total_is_stage_costs_plus_final(short_problem):
    s = random_scenarios(short_problem, 1, 1)[0]
    res = simulate(RuleBasedPolicy(short_problem), s, short_problem)
    assert res.total_cost == pytest.approx(sum(res.stage_costs) + res.final_cost, rel=1e-15)
    assert res.states.shape == (short_problem.horizon + 1, 4)
    np.testing.assert_array_equal(res.uncertainties, s)


def test_rule_based_hand_trace():
    # battery-only toy, b0 = 1: idle, then follow the previous net demand
    prob = battery_only_problem()
    s = np.array([[0.5, 0.0], [-1.0, 0.0], [1.2, 0.0], [0.5, 0.0]])
    res = simulate(RuleBasedPolicy(prob), s, prob)
    np.testing.assert_allclose(res.controls[:, 0], [0.0, -0.5, 1.0, -1.2], atol=1e-12)
    np.testing.assert_allclose(res.states[:, 0], [1.0, 1.0, 0.5, 1.5, 0.3], atol=1e-12)
    np.testing.assert_allclose(res.stage_costs, [0.045, 0.0, 0.33, 0.0], atol=1e-12)
    assert res.final_cost == pytest.approx(0.084, abs=1e-12)
    assert res.total_cost == pytest.approx(0.459, abs=1e-12)


def test_history_is_read_only(toy_problem):
    simulate(Peeking(), np.zeros((4, 2)), toy_problem)


def test_inadmissible_control_is_reported(toy_problem):
    with pytest.raises(PolicyInfeasibilityError) as err:
        simulate(Greedy(), np.zeros((4, 2)), toy_problem, scenario_id=7)
    assert err.value.scenario_id == 7 and err.value.step == 0


def test_benchmark_reports_the_original_scenario_id(toy_problem):
    scen = np.zeros((5, 4, 2))
    with pytest.raises(PolicyInfeasibilityError) as err:
        benchmark({"greedy": Greedy()}, scen, toy_problem)
    assert err.value.scenario_id == 0


def test_wrong_scenario_shape(toy_problem):
    with pytest.raises(ValueError):
        simulate(Idle(toy_problem), np.zeros((3, 2)), toy_problem)


def test_confidence_halfwidth_value():
    assert confidence_halfwidth(1.0, 1000) == pytest.approx(0.06198, abs=5e-6)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-1e3, 1e3), min_size=2, max_size=200))
def test_summary_matches_plain_loops(values):
    got = summarize(values)
    ref = naive_stats(values)
    scale = max(1.0, max(abs(v) for v in values))
    for a, b in zip(got, ref):
        assert a == pytest.approx(b, abs=1e-9 * scale)


def test_beat_fraction_ties_count_half():
    a = np.array([1.0, 2.0, 3.0, 4.0])
    assert beat_fraction(a, a) == 0.5
    assert beat_fraction(a, a + 1) == 1.0
    assert beat_fraction(a, np.array([1.0, 1.0, 5.0, 5.0])) == pytest.approx(0.625)


def test_identical_policies_split_evenly(short_problem):
    scen = random_scenarios(short_problem, 20, 2)
    rep = benchmark({"a": RuleBasedPolicy(short_problem), "b": RuleBasedPolicy(short_problem)}, scen, short_problem)
    assert rep.beat_fraction("a", "b") == 0.5
    np.testing.assert_array_equal(rep.difference("a", "b"), 0.0)


def test_report_files(short_problem, tmp_path):
    scen = random_scenarios(short_problem, 10, 3)
    rep = benchmark({"rule_based": RuleBasedPolicy(short_problem), "idle": Idle(short_problem)}, scen,
                    short_problem, keep_results=True)
    rep.write_csv(tmp_path / "r.csv")
    rows = list(csv.DictReader(open(tmp_path / "r.csv")))
    assert [r["policy"] for r in rows] == ["rule_based", "idle"]
    assert float(rows[0]["mean_cost"]) == rep.stats["rule_based"].mean
    rep.write_pairwise_csv(tmp_path / "p.csv")
    assert len(list(csv.DictReader(open(tmp_path / "p.csv")))) == 2
    rep.write_trajectories(tmp_path / "t.csv", limit=3)
    lines = open(tmp_path / "t.csv").read().splitlines()
    assert len(lines) == 1 + 2 * 3 * short_problem.horizon
    assert set(rep.timing()) == {"rule_based", "idle"}


def test_histogram():
    rep = BenchmarkReport(["a", "b"], np.array([[1.0, 2.0, 3.0, 4.0], [1.5, 2.0, 2.0, 5.0]]), {})
    h = cost_difference_histogram(rep, "a", "b", bins=4)
    assert h.counts.sum() == 4
    np.testing.assert_allclose(h.edges, [-1.0, -0.5, 0.0, 0.5, 1.0])
    np.testing.assert_array_equal(h.counts, [1, 1, 1, 1])
    assert h.beat_fraction == pytest.approx(0.625)
    same = cost_difference_histogram(rep, "a", "a", bins=2)
    assert same.counts.sum() == 4
    with pytest.raises(KeyError):
        cost_difference_histogram(rep, "a", "rule")


def test_batch_equals_single_rollouts(short_problem):
    scen = random_scenarios(short_problem, 17, 4)
    for pol in (RuleBasedPolicy(short_problem), MpcPolicy(short_problem, ArForecaster(fit_ar1(scen)))):
        batch = simulate_batch(pol, scen, short_problem, chunk_size=5)
        for i, s in enumerate(scen):
            one = simulate(pol, s, short_problem)
            r = batch.result(i)
            np.testing.assert_array_equal(r.states, one.states)
            np.testing.assert_array_equal(r.controls, one.controls)
            np.testing.assert_array_equal(r.stage_costs, one.stage_costs)
            assert r.total_cost == one.total_cost


def test_batch_equals_single_with_a_frozen_cache(short_problem):
    scen = random_scenarios(short_problem, 40, 6)
    pol = MpcPolicy(short_problem, ArForecaster(fit_ar1(scen[:20])))
    assert record_bases(pol, scen[:20], short_problem) > 0
    batch = simulate_batch(pol, scen[20:], short_problem, chunk_size=7)
    for i, s in enumerate(scen[20:]):
        np.testing.assert_array_equal(batch.result(i).controls, simulate(pol, s, short_problem).controls)


def test_dedupe_copies_costs(short_problem):
    base = random_scenarios(short_problem, 4, 5)
    scen = base[[0, 1, 0, 2, 3, 1, 0]]
    pols = {"rule_based": RuleBasedPolicy(short_problem)}
    a = benchmark(pols, scen, short_problem)
    b = benchmark(pols, scen, short_problem, dedupe=True)
    np.testing.assert_array_equal(a.costs, b.costs)
    assert a.stats["rule_based"].mean == b.stats["rule_based"].mean


def test_benchmark_needs_two_scenarios(short_problem):
    with pytest.raises(ValueError):
        benchmark({"r": RuleBasedPolicy(short_problem)}, random_scenarios(short_problem, 1, 0), short_problem)


def test_sweep_rows_and_csv(short_problem, tmp_path):
    def run(sigma):
        scen = random_scenarios(short_problem, 4, int(sigma * 10))
        return benchmark({"rule_based": RuleBasedPolicy(short_problem), "idle": Idle(short_problem)}, scen,
                         short_problem)

    rows = uncertainty_sweep([0.0, 0.1], run)
    assert [(r.sigma_T, r.policy) for r in rows] == [(0.0, "rule_based"), (0.0, "idle"),
                                                     (0.1, "rule_based"), (0.1, "idle")]
    write_sweep_csv(tmp_path / "s.csv", rows)
    assert open(tmp_path / "s.csv").readline().strip() == "sigma_T,policy,mean_cost,ci"
    with pytest.raises(ValueError):
        uncertainty_sweep([-0.1], run)
