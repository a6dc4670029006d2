import math
import sys
import unittest
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parents[1]))

from eigenmodel import (
    default_resolution,
    evaluate,
    from_descriptor,
    gamma_norm_ratio,
    gradient,
    gradient_bound_ratio,
    gradients,
    lattice_points,
    make_gaussian_beam,
    make_sphere_harmonic,
    make_torus_mode,
    mean_zero_defect,
    random_torus_combination,
    residual_check,
    sample,
    to_descriptor,
    values,
)
from errors import DegenerateEigenfunction, MixedEigenvalue, PoleGradient
from manifold import ManifoldModel, build_grid


class TestTorusModes(unittest.TestCase):
    def test_sine_mode(self):
        e = make_torus_mode([(3, 0)])
        self.assertEqual(e.eigenvalue, 9.0)
        self.assertEqual(e.label, "sin3x")
        self.assertAlmostEqual(evaluate(e, (math.pi / 6, 1.0)), 1.0, places=12)
        np.testing.assert_allclose(gradient(e, (0.0, 0.0)), [3.0, 0.0], atol=1e-12)

    def test_mixed_eigenvalue(self):
        with self.assertRaises(MixedEigenvalue):
            make_torus_mode([(1, 0), (0, 2)])

    def test_degenerate_inputs(self):
        with self.assertRaises(DegenerateEigenfunction):
            make_torus_mode([])
        with self.assertRaises(DegenerateEigenfunction):
            make_torus_mode([(0, 0)])
        with self.assertRaises(DegenerateEigenfunction):
            make_torus_mode([(2, 0, 0.0, 0.0)])

    def test_lattice_points(self):
        self.assertEqual(lattice_points(25), [(0, 5), (3, -4), (3, 4), (4, -3), (4, 3), (5, 0)])
        self.assertEqual(lattice_points(3), [])

    def test_random_combination_is_seeded(self):
        a = random_torus_combination(25, seed=7)
        b = random_torus_combination(25, seed=7)
        c = random_torus_combination(25, seed=8)
        pts = np.random.default_rng(0).uniform(0, 2 * math.pi, size=(50, 2))
        self.assertEqual(a.eigenvalue, 25.0)
        self.assertEqual(a.seed, 7)
        np.testing.assert_array_equal(values(a, pts), values(b, pts))
        self.assertFalse(np.allclose(values(a, pts), values(c, pts)))

    def test_random_combination_needs_lattice_point(self):
        with self.assertRaises(DegenerateEigenfunction):
            random_torus_combination(3, seed=0)

    def test_rectangular_torus_eigenvalue(self):
        m = ManifoldModel.flat_torus(math.pi, 2 * math.pi)
        e = make_torus_mode([(1, 2)], m)
        self.assertAlmostEqual(e.eigenvalue, 4.0 + 4.0)


class TestSphereFamilies(unittest.TestCase):
    def test_gaussian_beam(self):
        e = make_gaussian_beam(8)
        self.assertEqual(e.eigenvalue, 72.0)
        self.assertAlmostEqual(evaluate(e, (math.pi / 2, 0.0)), 1.0, places=12)
        self.assertEqual(e.label, "beam8")

    def test_zonal_harmonic_value(self):
        e = make_sphere_harmonic(1, 0)
        self.assertAlmostEqual(evaluate(e, (0.0, 0.0)), math.sqrt(3 / (4 * math.pi)), places=12)

    def test_orthonormal(self):
        grid = build_grid(ManifoldModel.round_sphere(), 64)
        for degree, order in ((3, 2), (4, -1), (2, 0)):
            f = sample(make_sphere_harmonic(degree, order), grid)
            self.assertAlmostEqual(float(np.dot(grid.weights, f.values**2)), 1.0, delta=1e-2)

    def test_order_exceeds_degree(self):
        with self.assertRaises(ValueError):
            make_sphere_harmonic(2, 3)

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(4)
        pts = np.column_stack([rng.uniform(0.3, 2.8, 10), rng.uniform(0, 2 * math.pi, 10)])
        step = 1e-6
        for e in (make_sphere_harmonic(4, 2), make_sphere_harmonic(3, -1), make_sphere_harmonic(5, 0), make_gaussian_beam(6)):
            g = gradients(e, pts)
            d_theta = (values(e, pts + [step, 0]) - values(e, pts - [step, 0])) / (2 * step)
            d_phi = (values(e, pts + [0, step]) - values(e, pts - [0, step])) / (2 * step)
            np.testing.assert_allclose(g[:, 0], d_theta, atol=1e-6)
            np.testing.assert_allclose(g[:, 1], d_phi / np.sin(pts[:, 0]), atol=1e-6)

    def test_pole_gradient(self):
        e = make_sphere_harmonic(2, 1)
        with self.assertRaises(PoleGradient):
            gradients(e, np.array([[0.0, 0.0]]))
        limit = gradients(e, np.array([[0.0, 0.0]]), at_pole="limit")
        self.assertTrue(np.all(np.isfinite(limit)))
        zonal = gradients(make_sphere_harmonic(2, 0), np.array([[0.0, 0.0]]))
        np.testing.assert_allclose(zonal, 0.0, atol=1e-12)

    def test_gamma_norm_ratio(self):
        # ||beam_l||_2^2 = pi^{3/2} Gamma(l+1) / Gamma(l+3/2)
        e = make_gaussian_beam(8)
        f = sample(e, build_grid(e.manifold, 96))
        self.assertAlmostEqual(gamma_norm_ratio(f, 8, 2.0), math.pi**1.5, delta=1e-2 * math.pi**1.5)

    def test_gamma_norm_ratio_independent_of_degree(self):
        for p in (1.0, 2.0, 4.0):
            ratios = []
            for degree in (8, 16, 32):
                e = make_gaussian_beam(degree)
                f = sample(e, build_grid(e.manifold, default_resolution(e)))
                ratios.append(gamma_norm_ratio(f, degree, p))
            self.assertLessEqual(max(ratios) / min(ratios) - 1.0, 0.05, msg=f"p={p}")


class TestChecks(unittest.TestCase):
    def test_residual_passes_at_default_resolution(self):
        e = make_torus_mode([(4, 0)])
        report = residual_check(e, build_grid(e.manifold, default_resolution(e)))
        self.assertTrue(report.passed)
        self.assertEqual(report.resolution, 48)

    def test_sphere_residual_is_second_order(self):
        for e in (make_sphere_harmonic(4, 2), make_gaussian_beam(4)):
            coarse = residual_check(e, build_grid(e.manifold, 48)).relative_residual
            fine = residual_check(e, build_grid(e.manifold, 96)).relative_residual
            self.assertGreaterEqual(coarse / fine, 3.5, msg=e.label)
            self.assertLessEqual(coarse / fine, 4.5, msg=e.label)

    def test_residual_fails_when_under_resolved(self):
        e = make_torus_mode([(4, 0)])
        report = residual_check(e, build_grid(e.manifold, 16))
        self.assertFalse(report.passed)
        self.assertAlmostEqual(report.relative_residual, 1 - 2 * (16 / (2 * math.pi)) ** 2 / 16, places=6)

    def test_gradient_bound(self):
        e = make_torus_mode([(3, 0)])
        self.assertAlmostEqual(gradient_bound_ratio(e, build_grid(e.manifold, 36)), 1.0, places=12)

    def test_mean_zero(self):
        e = random_torus_combination(25, seed=1)
        f = sample(e, build_grid(e.manifold, 60))
        self.assertLessEqual(mean_zero_defect(f), 1e-8)
        beam = make_gaussian_beam(5)
        self.assertLessEqual(mean_zero_defect(sample(beam, build_grid(beam.manifold, 30))), 1e-8)

    def test_descriptor_round_trip(self):
        for e in (random_torus_combination(50, seed=2), make_sphere_harmonic(3, -2), make_gaussian_beam(4)):
            restored = from_descriptor(to_descriptor(e))
            self.assertEqual(restored, e)


if __name__ == "__main__":
    unittest.main()
