import numpy as np
import pytest
from scipy.optimize import linprog

from drfh.lp import EQ, GE, LE, LpError, LpProblem, solve_lp


def test_textbook_max():
    # max 3x + 5y; x <= 4, 2y <= 12, 3x + 2y <= 18 -> (2, 6), 36
    res = solve_lp(LpProblem([3, 5], [[1, 0], [0, 2], [3, 2]], [LE, LE, LE], [4, 12, 18]))
    np.testing.assert_allclose(res.x, [2, 6], atol=1e-12)
    assert res.objective == pytest.approx(36)


def test_equality_and_ge():
    # max x + y subject to x + y = 1 and 0.3 <= x <= 0.5
    res = solve_lp(LpProblem([1, 1], [[1, 1], [1, 0], [1, 0]], [EQ, GE, LE], [1, 0.3, 0.5]))
    assert res.objective == pytest.approx(1)
    assert 0.3 - 1e-12 <= res.x[0] <= 0.5 + 1e-12


def test_infeasible_and_unbounded():
    with pytest.raises(LpError) as exc:
        solve_lp(LpProblem([1], [[1], [1]], [LE, GE], [1, 2]))
    assert exc.value.status == "infeasible"
    with pytest.raises(LpError) as exc:
        solve_lp(LpProblem([1, 0], [[0, 1]], [LE], [1]))
    assert exc.value.status == "unbounded"


def test_bounds_and_negative_rhs():
    # max -x with x >= 2 given as -x <= -2, plus an explicit upper bound
    res = solve_lp(LpProblem([-1], [[-1]], [LE], [-2], lower=[0], upper=[5]))
    assert res.x[0] == pytest.approx(2)
    res = solve_lp(LpProblem([1], [[1]], [LE], [10], lower=[1], upper=[3]))
    assert res.x[0] == pytest.approx(3)


def test_rejects_bad_shapes():
    with pytest.raises(ValueError):
        LpProblem([1, 1], [[1]], [LE], [1])
    with pytest.raises(ValueError):
        LpProblem([1], [[np.inf]], [LE], [1])
    with pytest.raises(ValueError):
        LpProblem([1], [[1]], ["<"], [1])


def test_degenerate_cycling_example():
    # Beale's example cycles under the textbook rule; Bland's rule terminates
    c = [0.75, -150, 0.02, -6]
    A = [[0.25, -60, -0.04, 9], [0.5, -90, -0.02, 3], [0, 0, 1, 0]]
    res = solve_lp(LpProblem(c, A, [LE] * 3, [0, 0, 1]))
    assert res.objective == pytest.approx(0.05)


def test_matches_scipy_on_random_programs():
    rng = np.random.default_rng(7)
    for _ in range(300):
        nv, nr = rng.integers(1, 7), rng.integers(1, 7)
        A = rng.uniform(-1, 1, (nr, nv))
        b = rng.uniform(-0.5, 1.5, nr)
        senses = list(rng.choice([LE, GE, EQ], nr, p=[0.6, 0.25, 0.15]))
        c = rng.uniform(-1, 1, nv)
        A_ub = np.array([A[i] if s == LE else -A[i] for i, s in enumerate(senses) if s != EQ]).reshape(-1, nv)
        b_ub = np.array([b[i] if s == LE else -b[i] for i, s in enumerate(senses) if s != EQ])
        eq = [i for i, s in enumerate(senses) if s == EQ]
        ref = linprog(-c, A_ub=A_ub if len(A_ub) else None, b_ub=b_ub if len(b_ub) else None,
                      A_eq=A[eq] if eq else None, b_eq=b[eq] if eq else None,
                      bounds=[(0, 3)] * nv, method="highs")
        prob = LpProblem(c, A, senses, b, upper=[3] * nv)
        if ref.status == 2:
            with pytest.raises(LpError):
                solve_lp(prob)
            continue
        assert ref.status == 0
        res = solve_lp(prob)
        assert res.objective == pytest.approx(-ref.fun, abs=1e-7)
