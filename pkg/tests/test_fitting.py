import sys
import unittest
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parents[1]))

from errors import NonPositiveValue
from utils.fitting import fit_power_law
from utils.resampling import systematic_resample


class TestPowerLaw(unittest.TestCase):
    def test_recovers_exponent(self):
        lams = np.array([16.0, 64.0, 256.0, 1024.0, 4096.0])
        fit = fit_power_law(lams, 7.0 * lams**-0.5)
        self.assertAlmostEqual(fit.exponent, -0.5, places=12)
        self.assertAlmostEqual(fit.coefficient, 7.0, places=10)
        self.assertAlmostEqual(fit.r_squared, 1.0, places=12)
        self.assertEqual(fit.points, 5)
        np.testing.assert_allclose(fit.predict([100.0]), [0.7])

    def test_reports_residuals_and_pairs(self):
        xs = [1.0, 2.0, 4.0, 8.0]
        ys = [3.0, 6.0, 12.0, 30.0]
        fit = fit_power_law(xs, ys)
        self.assertEqual(fit.pairs, tuple(zip(xs, ys)))
        self.assertAlmostEqual(fit.intercept, np.log(fit.coefficient), places=12)
        slope, intercept = np.polyfit(np.log(xs), np.log(ys), 1)
        residual = np.log(ys) - (slope * np.log(xs) + intercept)
        self.assertAlmostEqual(fit.max_residual, float(np.max(np.abs(residual))), places=12)
        self.assertGreater(fit.max_residual, 0.0)
        self.assertEqual(fit._asdict()["points"], 4)

    def test_exact_data_has_no_residual(self):
        fit = fit_power_law([1, 10, 100, 1000], [2, 20, 200, 2000])
        self.assertAlmostEqual(fit.exponent, 1.0, places=12)
        self.assertAlmostEqual(fit.intercept, np.log(2.0), places=12)
        self.assertLess(fit.max_residual, 1e-12)

    def test_flat_data(self):
        fit = fit_power_law([1, 2, 3, 4], [5, 5, 5, 5])
        self.assertAlmostEqual(fit.exponent, 0.0, places=12)
        self.assertEqual(fit.r_squared, 1.0)

    def test_rejects_nonpositive(self):
        with self.assertRaises(NonPositiveValue):
            fit_power_law([1, 2, 3, 4], [1.0, 0.0, 2.0, 3.0])

    def test_rejects_short_or_mismatched(self):
        with self.assertRaises(ValueError):
            fit_power_law([1, 2, 3], [1, 2, 3])
        with self.assertRaises(ValueError):
            fit_power_law([1, 2, 3, 4], [1, 2, 3])


class TestResampling(unittest.TestCase):
    def test_small_measure_unchanged(self):
        idx, masses = systematic_resample(np.array([1.0, 0.0, 2.0]), 10, seed=0)
        np.testing.assert_array_equal(idx, [0, 2])
        np.testing.assert_array_equal(masses, [1.0, 2.0])

    def test_preserves_total(self):
        rng = np.random.default_rng(2)
        masses = rng.uniform(0, 1, 5000)
        idx, new = systematic_resample(masses, 300, seed=9)
        self.assertLessEqual(len(idx), 300)
        self.assertTrue(np.all(np.diff(idx) > 0))
        self.assertAlmostEqual(new.sum(), masses.sum(), places=9)

    def test_seeded(self):
        masses = np.random.default_rng(3).uniform(0, 1, 1000)
        a = systematic_resample(masses, 100, seed=4)
        b = systematic_resample(masses, 100, seed=4)
        np.testing.assert_array_equal(a[0], b[0])

    def test_no_mass(self):
        with self.assertRaises(ValueError):
            systematic_resample(np.zeros(4), 2, seed=0)


if __name__ == "__main__":
    unittest.main()
