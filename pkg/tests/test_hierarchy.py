import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from wheelleg.hierarchy import TaskLevel, solve_hierarchy, stack_tasks
from wheelleg.qp import QuadProblem, solve_qp
from wheelleg.verify import _level_cost, _perturbed, random_stack


def test_strict_priority_conflicting_scalars():
    sol = solve_hierarchy([TaskLevel([[1.0]], [0.0]), TaskLevel([[1.0]], [1.0])])
    assert sol.x[0] == pytest.approx(0.0, abs=1e-12)
    assert sol.eq_residuals[1] == pytest.approx(1.0)


def test_single_level_matches_plain_qp():
    """One level: weighted least squares plus weighted inequality slacks,
    ``min |W (A x - b)|^2 + |W_in v|^2  s.t.  D x - f <= v``."""
    rng = np.random.default_rng(0)
    n = 5
    A = rng.normal(size=(7, n))
    b = rng.normal(size=7)
    w = rng.uniform(0.5, 2.0, size=7)
    D = rng.normal(size=(3, n))
    f = rng.uniform(0.1, 1.0, size=3)
    w_in = rng.uniform(0.5, 2.0, size=3)
    sol = solve_hierarchy([TaskLevel(A, b, D, f, w, w_in)])
    Aw = w[:, None] * A
    H = np.zeros((n + 3, n + 3))
    H[:n, :n] = Aw.T @ Aw
    H[n:, n:] = np.diag(w_in ** 2)
    g = np.concatenate([-Aw.T @ (w * b), np.zeros(3)])
    ref = solve_qp(QuadProblem(H, g, C_I=np.hstack([D, -np.eye(3)]), d_I=f))
    np.testing.assert_allclose(sol.x, ref.x[:n], atol=1e-9)
    np.testing.assert_allclose(sol.ineq_slacks[0], np.maximum(ref.x[n:], 0.0), atol=1e-9)
    assert sol.eq_residuals[0] == pytest.approx(np.linalg.norm(w * (A @ sol.x - b)), abs=1e-9)


def test_single_level_feasible_inequalities_are_hard():
    rng = np.random.default_rng(1)
    A = rng.normal(size=(2, 4))
    b = rng.normal(size=2)
    D = rng.normal(size=(2, 4))
    f = D @ np.linalg.lstsq(A, b, rcond=None)[0] + 1.0      # slack at the LS optimum
    sol = solve_hierarchy([TaskLevel(A, b, D, f)])
    assert np.all(D @ sol.x <= f + 1e-12)
    assert sol.eq_residuals[0] < 1e-9 and np.all(sol.ineq_slacks[0] == 0)


def test_infeasible_inequalities_become_minimal_slacks():
    # x <= -1 and x >= 1 cannot both hold: the lower level gets the violation
    sol = solve_hierarchy([TaskLevel(D=[[1.0]], f=[-1.0]), TaskLevel(D=[[-1.0]], f=[-1.0]),
                           TaskLevel([[1.0]], [5.0])])
    assert sol.x[0] == pytest.approx(-1.0, abs=1e-9)
    assert sol.ineq_slacks[1][0] == pytest.approx(2.0, abs=1e-9)


def test_inequality_at_higher_priority_bounds_lower_task():
    sol = solve_hierarchy([TaskLevel(D=[[1.0, 0.0]], f=[0.5]), TaskLevel(np.eye(2), [2.0, 3.0])])
    np.testing.assert_allclose(sol.x, [0.5, 3.0], atol=1e-9)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_lower_levels_never_change_higher_residuals(seed):
    rng = np.random.default_rng(seed)
    levels = random_stack(rng, n=int(rng.integers(3, 7)))
    base = solve_hierarchy(levels)
    pert = solve_hierarchy(levels[:2] + [_perturbed(levels[2], rng)])
    for k in (0, 1):
        assert abs(_level_cost(levels[k], pert, k) - _level_cost(levels[k], base, k)) < 1e-9


def test_stack_tasks_concatenates_rows():
    a = TaskLevel([[1.0, 0.0]], [1.0], names=[("a", 0, 1)])
    b = TaskLevel([[0.0, 1.0], [1.0, 1.0]], [2.0, 3.0], w_eq=2.0, names=[("b", 0, 2)])
    s = stack_tasks([a, b])
    assert s.A.shape == (3, 2)
    assert s.names == [("a", 0, 1), ("b", 1, 2)]
    np.testing.assert_allclose(s.w_eq, [1.0, 2.0, 2.0])


def test_bad_levels():
    with pytest.raises(ValueError):
        solve_hierarchy([])
    with pytest.raises(ValueError):
        TaskLevel([[1.0]], [0.0], w_eq=[-1.0])
