"""Rank statistics: tie-averaged ranks, Spearman, linear-fit R^2."""

import numpy as np
import pytest

from neuralogram.errors import ShapeError
from neuralogram.ranking import linear_fit_r2, spearman, tie_average_ranks


def brute_force_ranks(values):
    """Average the 1-based sorted positions of each tie group."""
    values = np.asarray(values, dtype=np.float64)
    order = np.argsort(values, kind="stable")
    ranks = np.empty(len(values))
    pos = 0
    while pos < len(values):
        group = [order[pos]]
        while (pos + len(group) < len(values)
               and values[order[pos + len(group)]] == values[order[pos]]):
            group.append(order[pos + len(group)])
        avg = pos + (len(group) + 1) / 2.0
        for idx in group:
            ranks[idx] = avg
        pos += len(group)
    return ranks


class TestTieAverageRanks:
    def test_distinct_values(self):
        ranks = tie_average_ranks(np.array([30.0, 10.0, 20.0]))
        assert np.array_equal(ranks, [3.0, 1.0, 2.0])

    def test_tied_pair_shares_average(self):
        ranks = tie_average_ranks(np.array([5.0, 1.0, 5.0, 0.0]))
        assert np.array_equal(ranks, [3.5, 2.0, 3.5, 1.0])

    def test_matches_brute_force_with_heavy_ties(self):
        rng = np.random.default_rng(7)
        for _ in range(50):
            values = rng.integers(0, 6, size=rng.integers(2, 40)).astype(float)
            assert np.array_equal(tie_average_ranks(values),
                                  brute_force_ranks(values))

    def test_rank_sum_is_invariant(self):
        rng = np.random.default_rng(8)
        values = rng.normal(size=101)
        assert tie_average_ranks(values).sum() == 101 * 102 / 2

    def test_rejects_matrix(self):
        with pytest.raises(ShapeError):
            tie_average_ranks(np.zeros((2, 2)))


class TestSpearman:
    def test_identical_order_is_exactly_one(self):
        for m in (2, 3, 4, 5, 9, 50, 500):
            x = np.arange(m, dtype=float)
            assert spearman(x, 2.0 * x + 3.0) == 1.0

    def test_reversed_order_is_exactly_minus_one(self):
        for m in (2, 5, 17, 200):
            x = np.arange(m, dtype=float)
            assert spearman(x, -x) == -1.0

    def test_monotone_nonlinear_map_is_one(self):
        x = np.linspace(-3, 3, 40)
        assert spearman(x, np.exp(x)) == 1.0

    def test_known_tied_example(self):
        # ranks of y are [1, 2, 3, 4.5, 4.5]; Pearson against [1..5]
        x = np.array([1.0, 2.0, 3.0, 4.0, 5.0])
        y = np.array([5.0, 6.0, 7.0, 8.0, 8.0])
        rx = np.array([1.0, 2, 3, 4, 5])
        ry = np.array([1.0, 2, 3, 4.5, 4.5])
        dx, dy = rx - rx.mean(), ry - ry.mean()
        expected = np.dot(dx, dy) / np.sqrt(np.dot(dx, dx) * np.dot(dy, dy))
        assert spearman(x, y) == pytest.approx(expected, abs=1e-12)

    def test_constant_input_scores_zero(self):
        assert spearman(np.ones(10), np.arange(10.0)) == 0.0
        assert spearman(np.arange(10.0), np.ones(10)) == 0.0

    def test_permutation_null_is_centered_and_bounded(self):
        rng = np.random.default_rng(11)
        x = np.arange(100, dtype=float)
        rhos = [spearman(x, rng.permutation(x)) for _ in range(200)]
        assert abs(np.mean(rhos)) < 0.05          # null mean ~ 0, sd ~ 0.1
        assert np.max(np.abs(rhos)) < 0.5

    def test_result_never_leaves_unit_interval(self):
        rng = np.random.default_rng(12)
        for _ in range(100):
            n = rng.integers(2, 30)
            r = spearman(rng.normal(size=n), rng.normal(size=n))
            assert -1.0 <= r <= 1.0

    def test_shape_validation(self):
        with pytest.raises(ShapeError):
            spearman(np.arange(3.0), np.arange(4.0))
        with pytest.raises(ShapeError):
            spearman(np.array([1.0]), np.array([2.0]))


class TestLinearFitR2:
    def test_exact_line_scores_one(self):
        x = np.arange(50, dtype=float)
        assert linear_fit_r2(x, 2.0 * x - 7.0) == pytest.approx(1.0, abs=1e-12)

    def test_constant_target_scores_one(self):
        assert linear_fit_r2(np.arange(5.0), np.full(5, 3.3)) == 1.0

    def test_matches_normal_equations_oracle(self):
        rng = np.random.default_rng(13)
        for _ in range(20):
            x = rng.normal(size=30)
            y = 1.5 * x + rng.normal(size=30)
            # closed-form least squares residual
            a = np.cov(x, y, bias=True)[0, 1] / np.var(x)
            b = y.mean() - a * x.mean()
            resid = y - (a * x + b)
            expected = 1.0 - resid @ resid / ((y - y.mean()) @ (y - y.mean()))
            assert linear_fit_r2(x, y) == pytest.approx(expected, abs=1e-9)

    def test_noise_scores_near_zero(self):
        rng = np.random.default_rng(14)
        r2 = linear_fit_r2(np.arange(2000.0), rng.normal(size=2000))
        assert r2 < 0.01

    def test_shape_validation(self):
        with pytest.raises(ShapeError):
            linear_fit_r2(np.arange(3.0), np.arange(4.0))
