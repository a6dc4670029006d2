import math
import sys
import unittest
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parents[1]))

from errors import EmptyBall, ResolutionTooCoarse
from manifold import (
    EDGE_DIAGONAL,
    EDGE_POLAR,
    ManifoldModel,
    build_grid,
    default_resolution,
    geodesic_distance,
    metric_ball,
    triangle_defect,
)


class TestManifoldModel(unittest.TestCase):
    def setUp(self):
        self.torus = ManifoldModel.flat_torus()
        self.sphere = ManifoldModel.round_sphere()

    def test_torus_distance_wraps(self):
        d = geodesic_distance(self.torus, (0.1, 0.0), (2 * math.pi - 0.1, 0.0))
        self.assertAlmostEqual(d, 0.2, places=12)

    def test_torus_distance_diagonal(self):
        d = geodesic_distance(self.torus, (0.0, 0.0), (3.0, 4.0))
        dx = min(3.0, 2 * math.pi - 3.0)
        dy = min(4.0, 2 * math.pi - 4.0)
        self.assertAlmostEqual(d, math.hypot(dx, dy), places=12)

    def test_sphere_antipodes(self):
        d = geodesic_distance(self.sphere, (0.0, 0.0), (math.pi, 0.0))
        self.assertAlmostEqual(d, math.pi, places=12)

    def test_sphere_quarter_circle(self):
        d = geodesic_distance(self.sphere, (math.pi / 2, 0.0), (math.pi / 2, math.pi / 2))
        self.assertAlmostEqual(d, math.pi / 2, places=12)

    def test_sphere_radius_scales_distance(self):
        big = ManifoldModel.round_sphere(3.0)
        d = geodesic_distance(big, (0.0, 0.0), (math.pi / 2, 1.0))
        self.assertAlmostEqual(d, 1.5 * math.pi, places=12)

    def test_area_and_diameter(self):
        self.assertAlmostEqual(self.torus.area, 4 * math.pi**2)
        self.assertAlmostEqual(self.sphere.area, 4 * math.pi)
        self.assertAlmostEqual(self.torus.diameter, math.pi * math.sqrt(2))
        self.assertAlmostEqual(self.sphere.diameter, math.pi)

    def test_triangle_inequality(self):
        for m in (self.torus, self.sphere, ManifoldModel.flat_torus(2.0, 5.0)):
            self.assertLessEqual(triangle_defect(m, 1000, seed=3), 1e-12)

    def test_reduce_fundamental_domain(self):
        p = self.torus.reduce([-0.5, 7.0])
        np.testing.assert_allclose(p, [2 * math.pi - 0.5, 7.0 - 2 * math.pi])

    def test_invalid_dimensions(self):
        with self.assertRaises(ValueError):
            ManifoldModel.flat_torus(-1.0, 1.0)


class TestSampleGrid(unittest.TestCase):
    def test_torus_weights_exact(self):
        m = ManifoldModel.flat_torus()
        grid = build_grid(m, 32)
        self.assertEqual(grid.node_count, 32 * 32)
        self.assertAlmostEqual(grid.weights.sum(), m.area, places=10)

    def test_sphere_weights_sum_to_area(self):
        m = ManifoldModel.round_sphere()
        for n in (16, 32):
            grid = build_grid(m, n)
            self.assertEqual(grid.shape, (n, 2 * n))
            self.assertLess(abs(grid.weights.sum() - m.area), 1e-10)

    def test_sphere_excludes_poles(self):
        grid = build_grid(ManifoldModel.round_sphere(), 16)
        self.assertGreater(grid.nodes[:, 0].min(), 0.0)
        self.assertLess(grid.nodes[:, 0].max(), math.pi)

    def test_too_coarse(self):
        with self.assertRaises(ResolutionTooCoarse):
            build_grid(ManifoldModel.flat_torus(), 4)
        grid = build_grid(ManifoldModel.flat_torus(), 4, min_resolution=4)
        self.assertEqual(grid.node_count, 16)

    def test_torus_stencil(self):
        grid = build_grid(ManifoldModel.flat_torus(), 16)
        # 4 undirected edges per node: right, down and two diagonals
        self.assertEqual(len(grid.edges), 4 * grid.node_count)
        h = 2 * math.pi / 16
        diagonal = grid.edge_kind == EDGE_DIAGONAL
        np.testing.assert_allclose(grid.edge_lengths[~diagonal], h)
        np.testing.assert_allclose(grid.edge_lengths[diagonal], h * math.sqrt(2))

    def test_sphere_polar_edges(self):
        grid = build_grid(ManifoldModel.round_sphere(), 8)
        polar = grid.edge_kind == EDGE_POLAR
        self.assertEqual(int(polar.sum()), 2 * 8)
        # Across the pole: twice the colatitude of the first ring
        np.testing.assert_allclose(grid.edge_lengths[polar], math.pi / 8, rtol=1e-12)

    def test_ball_monotone(self):
        grid = build_grid(ManifoldModel.round_sphere(), 24)
        center = (1.0, 2.0)
        previous = set()
        for r in np.linspace(0.2, 2.5, 8):
            current = set(grid.ball(center, r).tolist())
            self.assertTrue(previous <= current)
            previous = current

    def test_ball_contents(self):
        m = ManifoldModel.flat_torus()
        grid = build_grid(m, 32)
        ball = metric_ball(m, grid, (1.0, 1.0), 0.7)
        d = m.distance(grid.nodes, np.array([1.0, 1.0]))
        np.testing.assert_array_equal(ball, np.nonzero(d <= 0.7)[0])

    def test_ball_whole_manifold(self):
        m = ManifoldModel.round_sphere()
        grid = build_grid(m, 12)
        self.assertEqual(len(grid.ball((0.3, 0.3), 4.0)), grid.node_count)

    def test_ball_below_mesh(self):
        grid = build_grid(ManifoldModel.flat_torus(), 16)
        with self.assertRaises(EmptyBall):
            grid.ball((0.0, 0.0), 0.1 * grid.spacing)

    def test_default_resolution(self):
        m = ManifoldModel.flat_torus()
        # sin 8x: wavelength 2 pi / 8, 12 nodes each over 2 pi
        self.assertEqual(default_resolution(m, 64.0), 96)
        self.assertEqual(default_resolution(m, 1.0), 12)
        self.assertEqual(default_resolution(m, 0.01), 8)


if __name__ == "__main__":
    unittest.main()
