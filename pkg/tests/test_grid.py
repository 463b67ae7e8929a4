"""Brute-force grid search: winners, lower-level structure, degenerate inputs."""

import numpy as np
import pytest

from bilevelkit.grid import GridUnsupported, run_grid
from bilevelkit.problem import fixture, load_problem


def test_grid_p1_finds_interior_optimum():
    p1 = fixture("P1")
    result = run_grid(p1, x_range=(0.5, 2.5), y_range=(0.0, 3.0), step=0.01)
    assert result.best_x[0] == pytest.approx(1.5, abs=0.02)
    assert result.best_y[0] == pytest.approx(1.5, abs=0.02)
    assert result.best_upper_value == pytest.approx(1.75, abs=0.01)
    assert result.feasible_x_count == 201
    selected = [m for m in result.local_minimizers if m.selected]
    assert len(selected) == 1
    assert selected[0].upper_feasible


def test_grid_p3_reports_both_lower_minimizers():
    p3 = fixture("P3")
    result = run_grid(
        p3, x_range=(-1.5, 1.5), y_range=(-1.5, 1.5), step=0.01, feas_tol=1e-7
    )
    # winner is the touch point (0, -1); marginally feasible neighbors at
    # x = +-0.01 tie on the upper value and lose on constraint violation
    assert result.best_x[0] == pytest.approx(0.0, abs=1e-12)
    assert result.best_y[0] == pytest.approx(-1.0, abs=1e-3)
    assert result.best_upper_value == pytest.approx(-1.0, abs=1e-3)

    ys = sorted(m.y[0] for m in result.local_minimizers)
    assert any(abs(v + 1.0) < 0.02 for v in ys)
    assert any(abs(v - 1.0) < 0.02 for v in ys)

    low = next(m for m in result.local_minimizers if m.y[0] < 0)
    high = next(m for m in result.local_minimizers if m.y[0] > 0)
    assert low.selected and not high.selected
    assert low.isolated and not high.isolated
    assert low.upper_feasible and high.upper_feasible
    assert low.f_value == pytest.approx(1.0, abs=1e-3)
    assert high.f_value == pytest.approx(1.0, abs=1e-3)
    assert high.upper_value == pytest.approx(1.0, abs=1e-3)


def test_grid_p4_inequality_boundary():
    p4 = fixture("P4")
    result = run_grid(p4, x_range=(-2.0, 1.0), y_range=(-1.0, 2.0), step=0.01)
    assert result.best_x[0] == pytest.approx(-1.0, abs=0.02)
    assert result.best_y[0] == pytest.approx(0.0, abs=0.02)
    assert result.best_upper_value == pytest.approx(0.0, abs=1e-3)


def test_grid_handles_two_by_two_with_equality_band():
    p2 = fixture("P2")
    result = run_grid(p2, x_range=(-0.2, 0.2), y_range=(0.0, 1.0), step=0.05)
    assert np.abs(result.best_x).max() <= 0.1
    assert result.best_upper_value == pytest.approx(0.25, abs=0.05)
    assert abs(result.best_y.sum() - 1.0) <= 0.1  # inside the equality band


def test_grid_rejects_high_dimensions():
    wide_x = load_problem(
        """
dims n=3 m=1
upper.objective x1 + x2 + x3 + y1
lower.objective y1^2
"""
    )
    with pytest.raises(GridUnsupported):
        run_grid(wide_x, (-1, 1), (-1, 1), 0.5)
    wide_y = load_problem(
        """
dims n=1 m=3
upper.objective x1
lower.objective y1^2 + y2^2 + y3^2
"""
    )
    with pytest.raises(GridUnsupported):
        run_grid(wide_y, (-1, 1), (-1, 1), 0.5)


def test_grid_rejects_bad_step_and_range():
    p1 = fixture("P1")
    with pytest.raises(ValueError):
        run_grid(p1, (0, 1), (0, 1), 0.0)
    with pytest.raises(ValueError):
        run_grid(p1, (1, 0), (0, 1), 0.1)


def test_grid_no_feasible_point():
    problem = load_problem(
        """
dims n=1 m=1
upper.objective x1
lower.objective y1
lower.ineq y1^2 + 1
"""
    )
    with pytest.raises(RuntimeError, match="no feasible point"):
        run_grid(problem, (-1, 1), (-1, 1), 0.25)


def test_grid_flat_basin_reported_once():
    problem = load_problem(
        """
dims n=1 m=1
upper.objective y1
lower.objective 0
lower.ineq y1^2 - 1
"""
    )
    result = run_grid(problem, (-0.5, 0.5), (-2.0, 2.0), 0.1)
    assert len(result.local_minimizers) == 1
    assert result.local_minimizers[0].selected
    assert result.best_y[0] == pytest.approx(-1.0, abs=0.1)
    assert result.best_upper_value == pytest.approx(-1.0, abs=0.1)


def test_grid_upper_feasibility_filters_winner():
    problem = load_problem(
        """
dims n=1 m=1
upper.objective y1
upper.ineq -y1 + 0.5
lower.objective 0
lower.ineq y1^2 - 1
"""
    )
    # F prefers y = -1 but the upper constraint requires y >= 0.5
    result = run_grid(problem, (-0.5, 0.5), (-2.0, 2.0), 0.1)
    assert result.best_y[0] >= 0.5 - 1e-9
    assert result.best_upper_value == pytest.approx(0.5, abs=0.1)
