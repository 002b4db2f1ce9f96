"""Tests for the augmented Dickey-Fuller statistic."""

import unittest

import numpy as np

from lemole.adf import adf_design, adf_statistic, ols, p_bucket, schwert_lag
from lemole.errors import SeriesTooShort, SingularRegression
from lemole.synthetic import random_walk, white_noise


class TestAdf(unittest.TestCase):
    """Test cases for the ADF regression."""

    def test_white_noise_is_stationary(self):
        result = adf_statistic(white_noise(2000, seed=3))
        self.assertEqual(result.p_bucket, "<0.01")
        self.assertTrue(result.stationary_at_5pct)
        self.assertEqual(result.lag_order, schwert_lag(2000))

    def test_drifting_random_walk_is_not(self):
        result = adf_statistic(random_walk(2000, seed=3, drift=1.0))
        self.assertEqual(result.p_bucket, ">=0.10")
        self.assertFalse(result.stationary_at_5pct)

    def test_pure_random_walk_is_not(self):
        result = adf_statistic(random_walk(2000, seed=3))
        self.assertEqual(result.p_bucket, ">=0.10")
        self.assertFalse(result.stationary_at_5pct)

    def test_residuals_orthogonal_to_regressors(self):
        design, response = adf_design(random_walk(2000, seed=5), lag=schwert_lag(2000))
        _, _, residuals = ols(design, response)
        self.assertGreater(np.max(np.abs(residuals)), 0.1)
        bound = 1e-9 * np.linalg.norm(design, axis=0) * np.linalg.norm(residuals)
        self.assertTrue(np.all(np.abs(design.T @ residuals) <= bound))

    def test_walk_scores_above_noise(self):
        walk = adf_statistic(random_walk(2000, seed=4)).statistic
        noise = adf_statistic(white_noise(2000, seed=4)).statistic
        self.assertGreater(walk, noise)

    def test_schwert_lag(self):
        self.assertEqual(schwert_lag(100), 12)
        self.assertEqual(schwert_lag(2000), 25)

    def test_lag_is_capped_for_short_series(self):
        result = adf_statistic(white_noise(20, seed=1))
        self.assertEqual(result.lag_order, 8)

    def test_p_buckets(self):
        self.assertEqual(p_bucket(-4.0), "<0.01")
        self.assertEqual(p_bucket(-3.0), "<0.05")
        self.assertEqual(p_bucket(-2.7), "<0.10")
        self.assertEqual(p_bucket(-1.0), ">=0.10")

    def test_design_matrix(self):
        x = np.array([1.0, 3.0, 2.0, 5.0, 4.0])
        design, response = adf_design(x, lag=1)
        np.testing.assert_array_equal(response, [-1.0, 3.0, -1.0])
        np.testing.assert_array_equal(design[:, 1], [3.0, 2.0, 5.0])
        np.testing.assert_array_equal(design[:, 2], [2.0, -1.0, 3.0])

    def test_ols_recovers_coefficients(self):
        rng = np.random.default_rng(0)
        design = np.column_stack([np.ones(50), rng.standard_normal(50)])
        beta, covariance, residuals = ols(design, design @ np.array([2.0, -3.0]))
        np.testing.assert_allclose(beta, [2.0, -3.0], atol=1e-10)
        self.assertLess(np.max(np.abs(residuals)), 1e-10)

    def test_errors(self):
        with self.assertRaises(SeriesTooShort):
            adf_statistic(np.arange(19.0))
        with self.assertRaises(SingularRegression):
            adf_statistic(np.ones(50), max_lag=0)


if __name__ == "__main__":
    unittest.main()
