import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from hetsar.splines import (bspline_basis, bspline_knots, build_smooth_term,
                            center_basis, difference_penalty, evaluate_smooth)


def cox_de_boor(x, knots, degree, i):
    """Direct recursive B-spline evaluation, independent of the production path."""
    if degree == 0:
        # right-closed on the last interval so the basis sums to one at the end
        if knots[i] <= x < knots[i + 1]:
            return 1.0
        if x == knots[-1] and knots[i] < knots[i + 1] <= knots[-1] \
                and knots[i + 1] == knots[-1]:
            return 1.0
        return 0.0
    left = 0.0
    if knots[i + degree] != knots[i]:
        left = (x - knots[i]) / (knots[i + degree] - knots[i]) \
            * cox_de_boor(x, knots, degree - 1, i)
    right = 0.0
    if knots[i + degree + 1] != knots[i + 1]:
        right = (knots[i + degree + 1] - x) / (knots[i + degree + 1] - knots[i + 1]) \
            * cox_de_boor(x, knots, degree - 1, i + 1)
    return left + right


class TestBSplineBasis:
    def test_degree_zero_is_indicator_basis(self):
        x = np.array([0.125, 0.375, 0.625, 0.875])
        B = bspline_basis(np.concatenate([[0.0], x, [1.0]]), 4, degree=0)
        mid = B[1:-1]
        assert_allclose(mid, np.eye(4))

    def test_partition_of_unity(self):
        rng = np.random.default_rng(2)
        x = rng.uniform(-3.0, 7.0, 200)
        B = bspline_basis(x, 12, degree=3)
        assert_allclose(B.sum(axis=1), 1.0, atol=1e-10)
        assert B.min() >= 0.0 and B.max() <= 1.0 + 1e-12

    def test_matches_independent_cox_de_boor_recursion(self):
        x = np.linspace(0.0, 1.0, 41)  # hits every interior knot
        num_basis, degree = 9, 3
        knots = bspline_knots(0.0, 1.0, num_basis, degree)
        B = bspline_basis(x, num_basis, degree, knots=knots)
        expected = np.array([[cox_de_boor(xi, knots, degree, i)
                              for i in range(num_basis)] for xi in x])
        assert_allclose(B, expected, atol=1e-12)

    def test_constant_x_rejected(self):
        with pytest.raises(ValueError, match="constant"):
            bspline_basis(np.full(10, 2.0), 6, degree=3)

    def test_num_basis_not_above_degree_rejected(self):
        with pytest.raises(ValueError, match="exceed"):
            bspline_basis(np.linspace(0, 1, 10), 3, degree=3)

    @settings(max_examples=20, deadline=None)
    @given(st.integers(0, 3), st.integers(0, 8), st.integers(10, 60))
    def test_partition_of_unity_property(self, degree, extra, n):
        num_basis = degree + 1 + extra
        x = np.random.default_rng(n).uniform(0.0, 5.0, n)
        if np.ptp(x) == 0:
            return
        B = bspline_basis(x, num_basis, degree=degree)
        assert B.shape == (n, num_basis)
        assert_allclose(B.sum(axis=1), 1.0, atol=1e-10)


class TestDifferencePenalty:
    def test_hand_multiplied_4_by_2(self):
        G = difference_penalty(4, order=2)
        expected = np.array([[1.0, -2.0, 1.0, 0.0],
                             [-2.0, 5.0, -4.0, 1.0],
                             [1.0, -4.0, 5.0, -2.0],
                             [0.0, 1.0, -2.0, 1.0]])
        assert_allclose(G, expected)

    def test_polynomial_null_space(self):
        G = difference_penalty(9, order=2)
        assert_allclose(G @ np.ones(9), 0.0, atol=1e-12)
        assert_allclose(G @ np.arange(9.0), 0.0, atol=1e-12)

    def test_psd_with_null_space_dimension_two(self):
        G = difference_penalty(10, order=2)
        eigvals = np.linalg.eigvalsh(G)
        assert eigvals.min() >= -1e-12
        assert (np.abs(eigvals) < 1e-10).sum() == 2

    @pytest.mark.parametrize("order", [1, 2, 3])
    def test_rank_matches_order(self, order):
        G = difference_penalty(12, order=order)
        assert np.linalg.matrix_rank(G, tol=1e-10) == 12 - order
        assert_allclose(G, G.T)

    def test_order_at_least_num_basis_rejected(self):
        with pytest.raises(ValueError):
            difference_penalty(4, order=4)


class TestCenterBasis:
    def test_constant_column(self):
        B = np.column_stack([np.full(5, 3.0), np.arange(5.0)])
        centered, offsets = center_basis(B)
        assert_allclose(centered[:, 0], 0.0)
        assert offsets[0] == 3.0

    def test_idempotent_on_centered_data(self):
        B = np.random.default_rng(0).normal(size=(20, 4))
        centered, _ = center_basis(B)
        again, offsets = center_basis(centered)
        assert_allclose(offsets, 0.0, atol=1e-15)
        assert_allclose(again, centered)

    def test_reconstruction(self):
        B = np.random.default_rng(1).normal(size=(30, 6))
        centered, offsets = center_basis(B)
        assert_allclose(centered + offsets, B)


class TestEvaluateSmooth:
    @pytest.fixture()
    def term(self):
        x = np.random.default_rng(4).uniform(0.0, 1.0, 80)
        return x, build_smooth_term(x, "x", num_basis=10)

    def test_zero_coef_gives_zero_function(self, term):
        _, t = term
        grid = np.linspace(*t.span, 25)
        assert_allclose(evaluate_smooth(t, np.zeros(10), grid), 0.0)

    def test_training_grid_consistency(self, term):
        x, t = term
        coef = np.random.default_rng(5).normal(size=10)
        assert_allclose(evaluate_smooth(t, coef, x), t.basis @ coef, atol=1e-12)

    def test_linear_in_coef(self, term):
        _, t = term
        rng = np.random.default_rng(6)
        a, b = rng.normal(size=(2, 10))
        grid = np.linspace(*t.span, 15)
        assert_allclose(evaluate_smooth(t, a + 2.0 * b, grid),
                        evaluate_smooth(t, a, grid) + 2.0 * evaluate_smooth(t, b, grid),
                        atol=1e-12)

    def test_no_extrapolation(self, term):
        _, t = term
        with pytest.raises(ValueError, match="span"):
            evaluate_smooth(t, np.zeros(10), np.array([t.span[1] + 0.1]))

    def test_huge_penalty_shrinks_to_affine(self):
        rng = np.random.default_rng(7)
        x = rng.uniform(0.0, 1.0, 150)
        y = 1.5 + 2.0 * x + rng.normal(0, 0.05, 150)
        t = build_smooth_term(x, "x", num_basis=12)
        B = t.basis + t.offsets      # uncentered keeps the intercept in-span
        psi = 1e12
        coef = np.linalg.solve(B.T @ B + psi * t.penalty, B.T @ y)
        grid = np.linspace(0.02, 0.98, 30)
        values = t.basis_at(grid, centered=False) @ coef
        second_diff = np.diff(values, n=2)
        assert np.abs(second_diff).max() < 1e-6
