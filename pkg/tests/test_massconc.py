import math
import sys
import unittest
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parents[1]))

from eigenmodel import make_gaussian_beam, make_torus_mode, sample
from errors import EmptyRegionSup
from manifold import build_grid, default_resolution
from massconc import (
    half_ball_collection,
    log_delta_grid,
    lp_norm,
    retention,
    tube_mass_profile,
)
from nodal import extract_nodal_set


def sine(k=1, n=48, phase=0.0):
    e = make_torus_mode([(k, 0, 1.0, phase)])
    return sample(e, build_grid(e.manifold, n))


class TestLpNorm(unittest.TestCase):
    def test_sine_norms(self):
        f = sine(n=96)
        self.assertAlmostEqual(lp_norm(f, p=2.0), math.sqrt(2 * math.pi**2), places=10)
        self.assertAlmostEqual(lp_norm(f, p=math.inf), 1.0, places=12)
        self.assertAlmostEqual(lp_norm(f, p=1.0), 8 * math.pi, delta=1e-3 * 8 * math.pi)

    def test_regions(self):
        f = sine()
        positive = f.values > 0
        by_mask = lp_norm(f, positive, 2.0)
        by_index = lp_norm(f, np.nonzero(positive)[0], 2.0)
        self.assertAlmostEqual(by_mask, by_index, places=12)
        self.assertAlmostEqual(by_mask, math.pi, places=10)

    def test_empty_region(self):
        f = sine()
        empty = np.zeros(f.grid.node_count, dtype=bool)
        self.assertEqual(lp_norm(f, empty, 2.0), 0.0)
        with self.assertRaises(EmptyRegionSup):
            lp_norm(f, empty, math.inf)


class TestRetention(unittest.TestCase):
    def setUp(self):
        self.f = sine(k=2, n=60, phase=0.3)
        self.ng = extract_nodal_set(self.f)

    def test_zero_width_keeps_everything(self):
        for report in retention(self.f, self.ng, [0.0], [1.0, 2.0, math.inf]):
            self.assertAlmostEqual(report.ratio_total[0], 1.0, places=12)

    def test_split_and_monotone(self):
        deltas = log_delta_grid(self.ng, count=10)
        for report in retention(self.f, self.ng, deltas, [1.0, 2.0, 4.0]):
            self.assertLessEqual(report.split_defect(), 1e-12)
            self.assertTrue(np.all(np.diff(report.ratio_total) <= 1e-15))
            self.assertTrue(np.all(report.ratio_pos <= report.ratio_total + 1e-15))

    def test_rows(self):
        report = retention(self.f, self.ng, [0.1, 0.2], [2.0])[0]
        rows = report.rows("torus_sine", None)
        self.assertEqual(len(rows), 2)
        self.assertAlmostEqual(rows[1]["delta_sqrtlambda"], 0.4)
        self.assertEqual(rows[0]["p"], 2.0)

    def test_sup_over_covered_manifold(self):
        with self.assertRaises(EmptyRegionSup):
            retention(self.f, self.ng, [10.0], [math.inf])

    def test_delta_grid(self):
        deltas = log_delta_grid(self.ng, count=8, lo=0.05)
        self.assertEqual(len(deltas), 8)
        self.assertAlmostEqual(deltas[0] * 2, 0.05)
        self.assertLess(deltas[-1], self.ng.distances.max())
        with self.assertRaises(ValueError):
            log_delta_grid(self.ng, lo=0.5, hi=0.1)


class TestTubeMass(unittest.TestCase):
    def test_profile(self):
        f = sine(n=96)
        ng = extract_nodal_set(f)
        profile = tube_mass_profile(f, ng, 2.0, [0.0, 0.5, 1.0, math.pi / 2 + 1e-9])
        fraction = profile.fraction()
        self.assertTrue(np.all(np.diff(profile.mass) >= 0))
        self.assertAlmostEqual(fraction[-1], 1.0, places=12)
        # Two strips of half-width 0.5 around x = 0 and x = pi
        self.assertAlmostEqual(fraction[1], (1 - math.sin(1.0)) / math.pi, delta=0.01)

    def test_infinite_p(self):
        f = sine()
        with self.assertRaises(ValueError):
            tube_mass_profile(f, extract_nodal_set(f), math.inf)

    def test_scale_free_in_lambda(self):
        # 48 nodes per wavelength keeps the node pattern identical across k
        widths = []
        for k in (2, 4, 8):
            f = sine(k=k, n=48 * k)
            ng = extract_nodal_set(f)
            fraction = tube_mass_profile(f, ng, 2.0, [1.0 / k]).fraction()[0]
            kept = retention(f, ng, [1.0 / k], [2.0])[0].ratio_total[0]
            widths.append((fraction, kept))
        for fraction, kept in widths[1:]:
            self.assertAlmostEqual(fraction, widths[0][0], delta=1e-9)
            self.assertAlmostEqual(kept, widths[0][1], delta=1e-9)
        # strips of half-width 1/k around the 2k nodal lines
        expected = (2 - math.sin(2.0)) / math.pi
        self.assertAlmostEqual(widths[0][0], expected, delta=0.03)
        self.assertAlmostEqual(widths[0][1], math.sqrt(1 - widths[0][0]), places=9)

    def test_beam_keeps_mass_outside_unit_tube(self):
        for degree in (8, 16, 32):
            e = make_gaussian_beam(degree)
            f = sample(e, build_grid(e.manifold, default_resolution(e.manifold, e.eigenvalue)))
            ng = extract_nodal_set(f)
            delta = 1.0 / degree
            kept = retention(f, ng, [delta], [4.0])[0].ratio_total[0]
            fraction = tube_mass_profile(f, ng, 4.0, [delta]).fraction()[0]
            self.assertGreaterEqual(kept, 0.3, msg=f"degree={degree}")
            self.assertLessEqual(fraction, 0.7, msg=f"degree={degree}")
            self.assertAlmostEqual(kept**4, 1 - fraction, places=9)


class TestHalfBalls(unittest.TestCase):
    def setUp(self):
        self.f = sine()
        self.ng = extract_nodal_set(self.f)

    def test_both_signs(self):
        collected = half_ball_collection(
            self.f, self.ng, np.array([[math.pi, math.pi]]), 1.5, np.array([True])
        )
        self.assertEqual(collected.balls_used, 2)
        self.assertAlmostEqual(collected.pos_fraction, collected.neg_fraction, places=9)
        self.assertGreater(collected.min_clearance, 0.0)
        self.assertEqual(collected.skipped, [])

    def test_one_sign_missing(self):
        collected = half_ball_collection(
            self.f, self.ng, np.array([[math.pi / 2, math.pi]]), 1.0, np.array([True])
        )
        self.assertEqual(collected.balls_used, 1)
        self.assertEqual(collected.neg_fraction, 0.0)
        self.assertEqual(len(collected.skipped), 1)

    def test_bad_balls_ignored(self):
        collected = half_ball_collection(
            self.f, self.ng, np.array([[math.pi, math.pi]]), 1.5, np.array([False])
        )
        self.assertEqual(collected.balls_used, 0)
        self.assertEqual(collected.mass_fraction, 0.0)


if __name__ == "__main__":
    unittest.main()
