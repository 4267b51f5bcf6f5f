import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from microgrid_bench.lp import (GE, LE, EmptyCutSetError, LinearProgram, PolyhedralFunction, add_cut,
                                complementarity_residual, make_model, primal_residual, solve)
from microgrid_bench.lp.builder import LpBuilder
from microgrid_bench.lp.parametric import BasisCache
from oracles import random_lp, vertex_enumeration


def lp_of(c, A, senses, rhs, lb, ub):
    return LinearProgram(np.array(c, float), np.array(A, float).reshape(len(rhs), len(c)), np.array(senses),
                         np.array(rhs, float), np.array(lb, float), np.array(ub, float))


@pytest.mark.parametrize("backend", ["simplex", "highs"])
def test_maximize_posed_as_minimize(backend):
    sol = make_model(lp_of([-1.0], [[1.0]], [LE], [1.0], [0.0], [np.inf]), backend).solve()
    assert sol.optimal
    assert sol.x[0] == pytest.approx(1.0) and sol.objective == pytest.approx(-1.0)


@pytest.mark.parametrize("backend", ["simplex", "highs"])
def test_covering_row_dual(backend):
    sol = make_model(lp_of([1.0, 1.0], [[1.0, 1.0]], [GE], [1.0], [0, 0], [1, 1]), backend).solve()
    assert sol.objective == pytest.approx(1.0)
    assert sol.duals[0] == pytest.approx(1.0)


@pytest.mark.parametrize("backend", ["simplex", "highs"])
def test_infeasible_and_unbounded(backend):
    infeasible = lp_of([1.0], [[1.0], [1.0]], [GE, LE], [2.0, 1.0], [0.0], [10.0])
    assert make_model(infeasible, backend).solve().status == "infeasible"
    unbounded = lp_of([-1.0], [[1.0]], [GE], [0.0], [0.0], [np.inf])
    assert make_model(unbounded, backend).solve().status == "unbounded"


def test_program_validation():
    with pytest.raises(ValueError):
        lp_of([1.0, 1.0], [[1.0]], [LE], [1.0], [0, 0], [1, 1])
    with pytest.raises(ValueError):
        lp_of([1.0], [[1.0]], [LE], [1.0], [2.0], [1.0])
    with pytest.raises(ValueError):
        lp_of([1.0], [[1.0]], ["!"], [1.0], [0.0], [1.0])
    with pytest.raises(ValueError):
        make_model(lp_of([1.0], [[1.0]], [LE], [1.0], [0.0], [1.0]), "cplex")


def test_builder_and_text_dump():
    b = LpBuilder()
    x = b.var("x", 0.0, 4.0, 1.0)
    y = b.var("y", cost=2.0)
    b.row([(x, 1.0), (y, 1.0)], GE, 3.0, "demand")
    lp = b.build()
    assert lp.num_vars == 2 and lp.num_rows == 1
    text = lp.to_text()
    assert "row demand: 1.0 x + 1.0 y >= 3.0" in text and text.endswith("end\n")
    sol = solve(lp)
    assert sol.objective == pytest.approx(3.0)


@settings(max_examples=150, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_backends_agree_on_random_lps(seed):
    lp = random_lp(np.random.default_rng(seed))
    a, b = solve(lp, "simplex"), solve(lp, "highs")
    assert a.status == b.status
    if a.optimal:
        assert a.objective == pytest.approx(b.objective, abs=1e-7, rel=1e-9)
        for s in (a, b):
            assert primal_residual(lp, s.x) <= 1e-7
            assert complementarity_residual(lp, s) <= 1e-7


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_simplex_matches_vertex_enumeration(seed):
    lp = random_lp(np.random.default_rng(seed), max_vars=4, max_rows=6)
    ref = vertex_enumeration(lp.c, lp.A.toarray(), lp.senses, lp.rhs, lp.lb, lp.ub)
    sol = solve(lp)
    if ref is None:
        assert sol.status == "infeasible"
    else:
        assert sol.optimal and sol.objective == pytest.approx(ref, abs=1e-7)


def test_highs_rhs_update_and_added_rows():
    lp = lp_of([1.0, 1.0], [[1.0, 1.0]], [GE], [1.0], [0, 0], [5, 5])
    m = make_model(lp, "highs")
    assert m.solve().objective == pytest.approx(1.0)
    m.set_rhs([0], [2.5])
    assert m.solve().objective == pytest.approx(2.5)
    m.add_rows(sp.csr_matrix([[1.0, 0.0]]), np.array([GE]), np.array([3.0]))
    assert m.solve().objective == pytest.approx(3.0)


def test_polyhedral_examples():
    f = PolyhedralFunction(4, [((1, 0, 0, 0), 0.0), ((-1, 0, 0, 0), 2.0)])
    assert f.evaluate([0.5, 9, 9, 9]) == pytest.approx(1.5)
    g = PolyhedralFunction(4, [((0, 0, 0, 0), 3.0)])
    assert g.evaluate([5, -2, 1, 0]) == 3.0
    with pytest.raises(EmptyCutSetError):
        PolyhedralFunction(4).evaluate(np.zeros(4))
    with pytest.raises(ValueError):
        PolyhedralFunction(4).add_cut([np.nan, 0, 0, 0], 0.0)


@settings(max_examples=50)
@given(st.integers(0, 2**32 - 1))
def test_polyhedral_matches_naive_max(seed):
    rng = np.random.default_rng(seed)
    cuts = [(rng.normal(size=4), rng.normal()) for _ in range(100)]
    f = PolyhedralFunction(4, cuts)
    xs = rng.normal(size=(20, 4))
    naive = [max(float(l @ x + b) for l, b in cuts) for x in xs]
    np.testing.assert_allclose(f.evaluate_many(xs), naive, rtol=0, atol=1e-12)
    # duplicate and dominated cuts leave the values alone
    g = add_cut(add_cut(f, *cuts[0]), np.zeros(4), min(naive) - 100.0)
    np.testing.assert_array_equal(g.evaluate_many(xs), f.evaluate_many(xs))
    assert len(f) == 100 and len(g) == 102
    # a cut lying above at one point sets the value there
    x = xs[0]
    h = add_cut(f, np.ones(4), naive[0] + 1.0 - np.sum(x))
    assert h.evaluate(x) == pytest.approx(naive[0] + 1.0)


def _family(seed):
    """Random bounded LP whose rhs moves with a 2-d parameter."""
    rng = np.random.default_rng(seed)
    n, m = 5, 6
    A = rng.normal(size=(m, n))
    lp = lp_of(rng.normal(size=n), A, [LE] * 4 + [GE] * 2, A @ rng.uniform(0, 1, n) + np.r_[np.ones(4), -np.ones(2)],
               np.zeros(n), np.full(n, 3.0))
    R = rng.normal(scale=0.3, size=(m, 2))
    return lp, R


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_basis_cache_reproduces_lp_solutions(seed):
    lp, R = _family(seed)
    L = np.eye(lp.num_vars)
    model = make_model(lp, "highs")
    cache = BasisCache(lp, lp.rhs, R, L)
    rng = np.random.default_rng(seed + 1)
    P = rng.normal(scale=0.5, size=(30, 2))
    values = []
    for p in P:
        model.set_rhs(np.arange(lp.num_rows), lp.rhs + R @ p)
        sol = model.solve()
        values.append(sol.objective if sol.optimal else None)
        if sol.optimal:
            cache.add(*model.basis_status())
    cache.freeze()
    idx, Y = cache.lookup(P)
    for k, p in enumerate(P):
        if idx[k] >= 0:
            # a stored basis that is primal feasible at p is optimal there
            assert values[k] is not None
            assert lp.c @ Y[k] == pytest.approx(values[k], abs=1e-7)
            assert primal_residual(lp.with_rhs(lp.rhs + R @ p), Y[k]) <= 1e-7
        else:
            assert values[k] is None


def test_basis_cache_ignores_duplicates_and_respects_freeze():
    lp, R = _family(3)
    model = make_model(lp, "highs")
    assert model.solve().optimal
    cache = BasisCache(lp, lp.rhs, R, np.eye(lp.num_vars))
    status = model.basis_status()
    assert cache.add(*status) is True
    assert cache.add(*status) is False
    cache.freeze()
    assert len(cache) == 1 and cache.add(*status) is False


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_basis_cache_answers_do_not_depend_on_the_batch(seed):
    lp, R = _family(seed)
    rng = np.random.default_rng(seed + 2)
    nominal = rng.normal(scale=0.2, size=2)
    cache = BasisCache(lp, lp.rhs, R, np.eye(lp.num_vars), nominal=nominal)
    model = make_model(lp, "highs")
    for p in rng.normal(scale=0.5, size=(20, 2)):
        model.set_rhs(np.arange(lp.num_rows), lp.rhs + R @ p)
        if model.solve().optimal:
            cache.add(*model.basis_status())
    # some points share the nominal value in one coordinate, as most points do in practice
    P = nominal + rng.normal(scale=0.5, size=(12, 2)) * (rng.random((12, 2)) < 0.6)
    idx, Y = cache.lookup(P)
    for k in range(len(P)):
        for batch in (P[k:k + 1], P[[k, (k + 1) % len(P)]], P[::-1]):
            pos = int(np.flatnonzero(np.all(batch == P[k], axis=1))[0])
            i, y = cache.lookup(batch)
            assert i[pos] == idx[k]
            np.testing.assert_array_equal(y[pos], Y[k])
