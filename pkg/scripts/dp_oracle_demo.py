"""SDDP against exhaustive dynamic programming on a 4-step battery toy.

Prints the lower bound after each iteration next to the DP value, then the
exact expected cost of the trained policy over all 81 scenarios.
"""

import itertools

import numpy as np

from microgrid_bench.assessment import simulate
from microgrid_bench.physical import PhysicalParams, State, TimeGrid, WeatherTrace
from microgrid_bench.policies import SddpPolicy
from microgrid_bench.problem import CostParams, MicrogridProblem
from microgrid_bench.sddp import DiscreteDistribution, SddpConfig, train

PRICES = [0.09, 0.09, 0.15, 0.15]
ATOMS = [-1.0, 0.5, 1.2]
PROBS = [0.3, 0.4, 0.3]
KAPPA = 0.12


def dp_value(b0=1.0, b_max=2.0, fb_max=1.5, step=0.01):
    levels = np.round(np.arange(0, b_max + step / 2, step), 10)
    moves = np.round(np.arange(-fb_max, fb_max + step / 2, step), 10)
    value = KAPPA * np.maximum(0.0, b0 - levels)
    for price in reversed(PRICES):
        nxt = np.empty_like(value)
        for k, b in enumerate(levels):
            f = moves[(b + moves >= -1e-9) & (b + moves <= b_max + 1e-9)]
            stage = sum(p * price * np.maximum(0.0, f + d) for d, p in zip(ATOMS, PROBS))
            nxt[k] = np.min(stage + value[np.rint((b + f) / step).astype(int)])
        value = nxt
    return value[int(round(b0 / step))]


if __name__ == "__main__":
    T = len(PRICES)
    grid = TimeGrid(delta_hours=1.0, horizon_steps=T)
    params = PhysicalParams(rho_c=1.0, rho_d=1.0, b_max=2.0, fb_max=1.5, fw_max=0.0, fh_max=0.0, h_max=1.0)
    costs = CostParams(np.array(PRICES), np.zeros(T), np.zeros(T), kappa=KAPPA)
    prob = MicrogridProblem(params, costs, grid, WeatherTrace.constant(T), State(1.0, 0.0, 15.0, 15.0))
    dists = [DiscreteDistribution(np.array([[a, 0.0] for a in ATOMS]), np.array(PROBS))] * T

    exact = dp_value()
    vfs = train(prob, dists, SddpConfig(max_iterations=30, gap_tolerance=1e-9, ub_eval_scenarios=50))
    for row in vfs.log:
        print(f"iteration {row.iteration:3d}  lower bound {row.lb:.6f}  (DP {exact:.6f})")
    policy = SddpPolicy(prob, vfs, dists)
    expected = 0.0
    for idx in itertools.product(range(len(ATOMS)), repeat=T):
        scen = np.array([[ATOMS[i], 0.0] for i in idx])
        expected += np.prod([PROBS[i] for i in idx]) * simulate(policy, scen, prob).total_cost
    print(f"policy expected cost {expected:.6f}, DP {exact:.6f}")
