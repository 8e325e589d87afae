import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from wheelleg.qp import QPInfeasibleError, QuadProblem, solve_qp
from wheelleg.verify import enumerate_qp, random_qp


def test_scalar_bound():
    res = solve_qp(QuadProblem([[1.0]], [0.0], C_I=[[-1.0]], d_I=[-1.0]))
    assert res.x[0] == pytest.approx(1.0, abs=1e-12)
    assert res.active_set == (0,)
    assert res.multipliers_ineq[0] == pytest.approx(1.0, abs=1e-12)


def test_unconstrained_is_newton_step():
    rng = np.random.default_rng(0)
    G = rng.normal(size=(6, 6))
    H = G @ G.T + np.eye(6)
    g = rng.normal(size=6)
    res = solve_qp(QuadProblem(H, g))
    np.testing.assert_allclose(res.x, -np.linalg.solve(H, g), atol=1e-10)


def test_equality_constrained():
    H = np.eye(2)
    res = solve_qp(QuadProblem(H, [0.0, 0.0], C_E=[[1.0, 1.0]], d_E=[2.0]))
    np.testing.assert_allclose(res.x, [1.0, 1.0], atol=1e-12)


def test_infeasible_detected():
    with pytest.raises(QPInfeasibleError):
        solve_qp(QuadProblem(np.eye(1), [0.0], C_I=[[1.0], [-1.0]], d_I=[-1.0, -1.0]))


def test_bad_input():
    with pytest.raises(ValueError):
        QuadProblem(np.array([[1.0, 2.0], [0.0, 1.0]]), [0.0, 0.0])
    with pytest.raises(ValueError):
        QuadProblem(np.eye(2), [0.0, 0.0], C_I=[[1.0, 0.0]], d_I=[1.0, 2.0])


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_matches_enumeration_and_kkt(seed):
    p = random_qp(np.random.default_rng(seed))
    res = solve_qp(p)
    f_ref, _ = enumerate_qp(p)
    assert abs(res.objective - f_ref) <= 1e-6 * max(1.0, abs(f_ref))
    stat, feas, comp = res.kkt_residuals(p)
    assert stat < 1e-8 and feas < 1e-9 and comp < 1e-8
    assert np.all(res.multipliers_ineq >= -1e-12)
