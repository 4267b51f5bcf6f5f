"""Independent reference computations used by the tests."""

from __future__ import annotations

import itertools

import numpy as np


def battery_dp(prices, atoms, probs, b0, b_max, fb_max, kappa, step=0.01):
    """Tabular DP for a lossless battery with hourly steps.

    Decision ``f`` is taken before the net demand ``d`` is seen; the stage
    cost is ``price * max(0, f + d)`` and the final cost ``kappa * (b0 - b)^+``.
    Works on integer multiples of ``step`` so the grid arithmetic is exact.
    Returns ``(values, controls)`` with ``values[t][k]`` the cost-to-go at
    ``b = k * step``.
    """
    nb = int(round(b_max / step)) + 1
    nf = int(round(fb_max / step))
    b = np.arange(nb) * step
    f_idx = np.arange(-nf, nf + 1)
    f = f_idx * step
    atoms = np.asarray(atoms, dtype=float)
    probs = np.asarray(probs, dtype=float)
    T = len(prices)
    values = [None] * (T + 1)
    controls = [None] * T
    values[T] = kappa * np.maximum(0.0, b0 - b)
    # expected stage cost of each control, independent of the stock
    for t in reversed(range(T)):
        stage = prices[t] * (np.maximum(0.0, f[:, None] + atoms[None, :]) @ probs)
        nxt = np.arange(nb)[:, None] + f_idx[None, :]
        ok = (nxt >= 0) & (nxt < nb)
        total = np.where(ok, stage[None, :] + values[t + 1][np.clip(nxt, 0, nb - 1)], np.inf)
        k = np.argmin(total, axis=1)
        values[t] = total[np.arange(nb), k]
        controls[t] = f[k]
    return values, controls


def enumerate_scenarios(atoms, probs, T):
    """All ``len(atoms)**T`` atom sequences with their probabilities."""
    atoms = np.asarray(atoms, dtype=float)
    for idx in itertools.product(range(len(atoms)), repeat=T):
        yield atoms[list(idx)], float(np.prod([probs[i] for i in idx]))


def vertex_enumeration(c, A, senses, rhs, lb, ub):
    """Minimum of a small LP by visiting every basic solution.

    Equality rows and every bound are turned into hyperplanes; each choice of
    ``n`` independent hyperplanes gives a candidate vertex. Returns ``None``
    when no vertex is feasible. Assumes the LP is bounded and ``lb``/``ub``
    finite.
    """
    c = np.asarray(c, dtype=float)
    A = np.asarray(A, dtype=float)
    n = len(c)
    planes, values = [], []
    for i in range(len(rhs)):
        planes.append(A[i])
        values.append(rhs[i])
    eye = np.eye(n)
    for j in range(n):
        planes += [eye[j], eye[j]]
        values += [lb[j], ub[j]]
    planes, values = np.array(planes), np.array(values)
    senses = np.asarray(senses)
    rhs = np.asarray(rhs, dtype=float)
    combos = np.array(list(itertools.combinations(range(len(planes)), n)), dtype=int)
    best = None
    for chunk in np.array_split(combos, max(1, len(combos) // 4096)):
        M = planes[chunk]
        ok = np.abs(np.linalg.det(M)) >= 1e-10
        if not ok.any():
            continue
        x = np.linalg.solve(M[ok], values[chunk[ok]][..., None])[..., 0]
        feasible = np.all((x >= lb - 1e-9) & (x <= ub + 1e-9), axis=1)
        if len(A):
            ax = x @ A.T
            feasible &= np.all(np.where(senses == "<", ax <= rhs + 1e-9, True), axis=1)
            feasible &= np.all(np.where(senses == ">", ax >= rhs - 1e-9, True), axis=1)
            feasible &= np.all(np.where(senses == "=", np.abs(ax - rhs) <= 1e-9, True), axis=1)
        if feasible.any():
            v = float((x[feasible] @ c).min())
            best = v if best is None else min(best, v)
    return best


def rk4_thermal(theta, v, A, B, seconds, substeps):
    """Fine-step RK4 integration of ``d theta/dt = A theta + B v`` with ``v`` held."""
    theta = np.asarray(theta, dtype=float)
    h = seconds / substeps
    drive = B @ np.asarray(v, dtype=float)

    def rate(th):
        return A @ th + drive

    for _ in range(substeps):
        k1 = rate(theta)
        k2 = rate(theta + 0.5 * h * k1)
        k3 = rate(theta + 0.5 * h * k2)
        k4 = rate(theta + h * k3)
        theta = theta + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    return theta


def ar1_lstsq(x, y):
    """Least-squares slope and intercept of ``y`` on ``x`` through ``numpy.linalg.lstsq``."""
    X = np.column_stack([x, np.ones_like(x)])
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    return float(coef[0]), float(coef[1])


def naive_stats(values):
    """Mean, sample standard deviation and 95% half-width by plain loops."""
    n = len(values)
    mean = 0.0
    for v in values:
        mean += v
    mean /= n
    ss = 0.0
    for v in values:
        ss += (v - mean) ** 2
    std = (ss / (n - 1)) ** 0.5
    return mean, std, 1.96 * std / n ** 0.5


def random_lp(rng, max_vars=6, max_rows=10, eq_share=0.15):
    """Small bounded LP with integer-ish data and mixed row senses."""
    from microgrid_bench.lp import LinearProgram

    n = int(rng.integers(1, max_vars + 1))
    m = int(rng.integers(0, max_rows + 1))
    A = rng.integers(-4, 5, size=(m, n)).astype(float)
    senses = rng.choice(["<", ">", "="], size=m, p=[(1 - eq_share) / 2, (1 - eq_share) / 2, eq_share])
    x_ref = rng.uniform(-1, 2, n)
    rhs = A @ x_ref + np.where(senses == "<", 1.0, np.where(senses == ">", -1.0, 0.0)) * rng.uniform(0, 2, m)
    # sometimes drop feasibility on purpose
    if m and rng.random() < 0.1:
        rhs = rhs + rng.normal(0, 5, m)
    lb = -rng.uniform(0.5, 3, n)
    ub = rng.uniform(0.5, 3, n) + 1.0
    c = rng.integers(-5, 6, n).astype(float)
    return LinearProgram(c, A.reshape(m, n), senses, np.round(rhs, 3), lb, ub)
