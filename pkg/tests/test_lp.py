import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from stationforge.lp import (
    HighsSolver,
    LinearProgram,
    SimplexSolver,
    SizeLimit,
    dump_lp,
    enumerate_vertices,
    load_lp,
    simplex,
    solve,
)


def lp(c, A, senses, b, lo=None, hi=None):
    return LinearProgram(np.array(c, float), np.array(A, float), tuple(senses), np.array(b, float),
                         None if lo is None else np.array(lo, float), None if hi is None else np.array(hi, float))


EXAMPLES = {
    "max_x": (lp([-1], [[1]], ["<="], [1]), "optimal", -1.0),
    "edge": (lp([-1, -1], [[1, 1]], ["<="], [1]), "optimal", -1.0),
    "infeasible": (lp([1], [[1], [1]], [">=", "<="], [2, 1]), "infeasible", None),
    "unbounded": (lp([-1], [[1]], [">="], [0]), "unbounded", None),
}


@pytest.mark.parametrize("name", EXAMPLES)
@pytest.mark.parametrize("method", [simplex, enumerate_vertices, HighsSolver()])
def test_examples(name, method):
    prob, status, obj = EXAMPLES[name]
    sol = method(prob)
    assert sol.status == status
    if obj is not None:
        assert sol.objective == pytest.approx(obj, abs=1e-9)
        assert prob.is_feasible(sol.x)


def test_infeasibility_names_rows():
    prob = LinearProgram(np.array([1.0]), np.array([[1.0], [1.0]]), (">=", "<="), np.array([2.0, 1.0]),
                         row_names=("need", "cap"))
    sol = simplex(prob)
    assert sol.status == "infeasible"
    assert set(sol.infeasible_rows) <= {"need", "cap"} and sol.infeasible_rows


def random_lp(rng, n_max=5, m_max=8):
    n = int(rng.integers(1, n_max + 1))
    m = int(rng.integers(1, m_max + 1))
    A = rng.integers(-5, 6, (m, n)).astype(float)
    b = rng.integers(-5, 10, m).astype(float)
    c = rng.integers(-5, 6, n).astype(float)
    senses = tuple(rng.choice(["<=", "=", ">="], m, p=[0.6, 0.1, 0.3]))
    lo = np.where(rng.random(n) < 0.2, -np.inf, 0.0)
    hi = np.where(rng.random(n) < 0.3, rng.integers(1, 5, n).astype(float), np.inf)
    return LinearProgram(c, A, senses, b, lo, hi)


def dual_objective(prob, sol):
    d = sol.reduced_costs
    bound_part = sum(d[j] * (prob.lo[j] if d[j] > 0 else prob.hi[j]) for j in range(prob.n_vars) if abs(d[j]) > 1e-9)
    return prob.b @ sol.duals + bound_part


def check_against_oracle(prob):
    s = simplex(prob)
    o = enumerate_vertices(prob)
    assert s.status == o.status
    if s.optimal:
        assert abs(s.objective - o.objective) <= 1e-6 * (1 + abs(o.objective))
        assert prob.is_feasible(s.x)
        assert abs(dual_objective(prob, s) - s.objective) <= 1e-6 * (1 + abs(s.objective))
    return s.status


def test_oracle_agreement_500():
    rng = np.random.default_rng(2024)
    statuses = [check_against_oracle(random_lp(rng)) for _ in range(500)]
    assert statuses.count("optimal") > 100  # the sample exercises all three outcomes
    assert "infeasible" in statuses and "unbounded" in statuses


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_simplex_matches_highs(seed):
    prob = random_lp(np.random.default_rng(seed), 8, 10)
    s, h = simplex(prob), HighsSolver()(prob)
    assert s.status == h.status
    if s.optimal:
        assert s.objective == pytest.approx(h.objective, rel=1e-7, abs=1e-7)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.01, 100))
def test_cost_scaling(seed, lam):
    prob = random_lp(np.random.default_rng(seed))
    scaled = LinearProgram(prob.c * lam, prob.A, prob.senses, prob.b, prob.lo, prob.hi)
    a, b = simplex(prob), simplex(scaled)
    assert a.status == b.status
    if a.optimal:
        assert b.objective == pytest.approx(lam * a.objective, rel=1e-7, abs=1e-7)


def test_complementary_slackness():
    rng = np.random.default_rng(5)
    for _ in range(200):
        prob = random_lp(rng)
        sol = simplex(prob)
        if not sol.optimal:
            continue
        slack = prob.A @ sol.x - prob.b
        assert np.max(np.abs(slack * sol.duals)) <= 1e-6


def test_solver_does_not_mutate_input():
    prob = random_lp(np.random.default_rng(0))
    A, b, c = prob.A.copy(), prob.b.copy(), prob.c.copy()
    simplex(prob)
    assert np.array_equal(A, prob.A) and np.array_equal(b, prob.b) and np.array_equal(c, prob.c)


def test_solver_seam():
    prob = EXAMPLES["edge"][0]
    assert solve(prob).objective == pytest.approx(-1)
    assert solve(prob, HighsSolver()).objective == pytest.approx(-1)
    assert solve(prob, SimplexSolver()).objective == pytest.approx(-1)


def test_oracle_size_limit():
    prob = LinearProgram(np.zeros(11), np.ones((1, 11)), ("<=",), np.ones(1))
    with pytest.raises(SizeLimit):
        enumerate_vertices(prob)


def test_dump_round_trip(tmp_path):
    rng = np.random.default_rng(9)
    for _ in range(20):
        prob = random_lp(rng)
        text = dump_lp(prob)
        back = load_lp(text)
        assert np.array_equal(back.A, prob.A) and np.array_equal(back.b, prob.b)
        assert np.array_equal(back.lo, prob.lo) and np.array_equal(back.hi, prob.hi)
        assert back.senses == prob.senses
        assert simplex(back).status == simplex(prob).status
