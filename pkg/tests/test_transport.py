import math
import sys
import unittest
from pathlib import Path
from unittest import mock

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parents[1]))

from eigenmodel import ScalarField, make_torus_mode, sample
from errors import EmptySignedRegion, NonZeroMean, NotConverged, OneSignedField
from manifold import ManifoldModel, build_grid
from nodal import extract_nodal_set
from transport import (
    LATTICE_DISTORTION,
    DiscreteMeasure,
    TransportMethod,
    TransportResult,
    annealing_schedule,
    default_witness_radius,
    lipschitz_witness,
    signed_measures,
    solve_w1,
    uncertainty_product,
    w1_dense_exact,
    w1_exact,
    w1_oracle_1d,
    w1_oracle_lp,
    w1_sine_closed_form,
    w1_sinkhorn,
)


def sine(k, n):
    e = make_torus_mode([(k, 0)])
    return e, sample(e, build_grid(e.manifold, n))


def point_pair(grid, a, b, mass=1.0):
    mu = DiscreteMeasure(grid.nodes[[a]], [mass], [a])
    nu = DiscreteMeasure(grid.nodes[[b]], [mass], [b])
    return mu, nu


class TestMeasures(unittest.TestCase):
    def test_sine_totals(self):
        _, f = sine(3, 72)
        mu, nu = signed_measures(f)
        self.assertAlmostEqual(mu.total, 4 * math.pi, delta=1e-2 * 4 * math.pi)
        self.assertAlmostEqual(mu.total, nu.total, delta=1e-12 * mu.total)
        self.assertLess(abs(mu.imbalance), 1e-9)

    def test_one_signed(self):
        grid = build_grid(ManifoldModel.flat_torus(), 16)
        f = ScalarField(grid, 1.0 + 0.5 * np.sin(grid.nodes[:, 0]), 1.0, "shifted")
        with self.assertRaises(OneSignedField):
            signed_measures(f)

    def test_validation(self):
        with self.assertRaises(ValueError):
            DiscreteMeasure([[0.0, 0.0], [1.0, 1.0]], [1.0, -0.5])
        with self.assertRaises(ValueError):
            DiscreteMeasure([[0.0, 0.0]], [0.0])
        grid = build_grid(ManifoldModel.flat_torus(), 16)
        with self.assertRaises(ValueError):
            DiscreteMeasure([[0.01, 0.0]], [1.0]).on_nodes(grid)

    def test_on_nodes_snaps(self):
        grid = build_grid(ManifoldModel.flat_torus(), 16)
        masses = DiscreteMeasure(grid.nodes[[5, 5, 9]], [1.0, 2.0, 0.5]).on_nodes(grid)
        self.assertEqual(masses[5], 3.0)
        self.assertEqual(masses[9], 0.5)
        self.assertEqual(masses.sum(), 3.5)


class TestExactFlow(unittest.TestCase):
    def setUp(self):
        self.m = ManifoldModel.flat_torus()
        self.grid = build_grid(self.m, 16)
        self.h = 2 * math.pi / 16
        self.n2 = self.grid.shape[1]

    def test_axis_dipole(self):
        mu, nu = point_pair(self.grid, 0, 3 * self.n2, mass=2.5)
        result = w1_exact(mu, nu, self.m, self.grid)
        self.assertEqual(result.method, TransportMethod.EXACT_FLOW)
        self.assertAlmostEqual(result.value, 2.5 * 3 * self.h, places=9)
        self.assertEqual(result.diagnostics["divergence_residual"], 0.0)

    def test_diagonal_dipole(self):
        mu, nu = point_pair(self.grid, 0, 2 * self.n2 + 2)
        self.assertAlmostEqual(w1_exact(mu, nu, self.m, self.grid).value, 2 * math.sqrt(2) * self.h, places=9)

    def test_knight_move_within_distortion(self):
        mu, nu = point_pair(self.grid, 0, 2 * self.n2 + 1)
        value = w1_exact(mu, nu, self.m, self.grid).value
        true = math.sqrt(5) * self.h
        self.assertGreaterEqual(value, true)
        self.assertLessEqual(value, LATTICE_DISTORTION * true)

    def test_identical_measures(self):
        mu, _ = point_pair(self.grid, 7, 9)
        self.assertEqual(w1_exact(mu, mu, self.m, self.grid).value, 0.0)

    def test_homogeneity(self):
        _, f = sine(2, 24)
        mu, nu = signed_measures(f)
        base = w1_exact(mu, nu, f.grid.manifold, f.grid).value
        tripled = w1_exact(mu.scaled(3.0), nu.scaled(3.0), f.grid.manifold, f.grid).value
        self.assertAlmostEqual(tripled, 3 * base, delta=1e-9 * base)

    def test_matches_oracle(self):
        _, f = sine(1, 48)
        mu, nu = signed_measures(f)
        exact = w1_exact(mu, nu, f.grid.manifold, f.grid)
        profile = np.sin(2 * math.pi * np.arange(48) / 48)
        self.assertAlmostEqual(exact.value, w1_oracle_1d(profile), delta=1e-6 * exact.value)
        self.assertAlmostEqual(exact.value, 8 * math.pi, delta=1e-2 * 8 * math.pi)
        self.assertLessEqual(exact.marginal_err, 1e-6)

    def test_matches_oracle_at_higher_frequency(self):
        _, f = sine(8, 192)
        mu, nu = signed_measures(f)
        exact = w1_exact(mu, nu, f.grid.manifold, f.grid)
        profile = np.sin(8 * 2 * math.pi * np.arange(192) / 192)
        self.assertAlmostEqual(exact.value, w1_oracle_1d(profile), delta=1e-5 * exact.value)
        self.assertAlmostEqual(exact.value, w1_sine_closed_form(8), delta=1e-2 * math.pi)


class TestOracle(unittest.TestCase):
    def test_closed_form(self):
        self.assertAlmostEqual(w1_sine_closed_form(1), 8 * math.pi)
        self.assertAlmostEqual(w1_sine_closed_form(4), 2 * math.pi)

    def test_oracle_converges_to_closed_form(self):
        for k in (1, 3):
            x = 2 * math.pi * np.arange(4096) / 4096
            self.assertAlmostEqual(w1_oracle_1d(np.sin(k * x)), w1_sine_closed_form(k), delta=1e-5 * w1_sine_closed_form(k))

    def test_lp_agrees(self):
        rng = np.random.default_rng(11)
        g = rng.standard_normal(64)
        g -= g.mean()
        self.assertAlmostEqual(w1_oracle_lp(g), w1_oracle_1d(g), delta=1e-9 * w1_oracle_1d(g))

    def test_nonzero_mean(self):
        with self.assertRaises(NonZeroMean):
            w1_oracle_1d(np.ones(32))
        with self.assertRaises(NonZeroMean):
            w1_oracle_lp(np.ones(32))


class TestDenseEngines(unittest.TestCase):
    def setUp(self):
        self.m = ManifoldModel.flat_torus()

    def test_two_atoms(self):
        mu = DiscreteMeasure([[0.0, 0.0]], [1.0])
        nu = DiscreteMeasure([[1.0, 0.0]], [1.0])
        self.assertAlmostEqual(w1_dense_exact(mu, nu, self.m).value, 1.0, places=12)
        result = w1_sinkhorn(mu, nu, self.m, stages=3)
        self.assertAlmostEqual(result.value, 1.0, places=9)
        self.assertEqual(len(result.diagnostics["stage_eps"]), 3)

    def test_dense_matches_flow(self):
        _, f = sine(1, 24)
        mu, nu = signed_measures(f)
        flow = w1_exact(mu, nu, self.m, f.grid).value
        dense = w1_dense_exact(mu, nu, self.m).value
        self.assertAlmostEqual(dense, flow, delta=1e-6 * flow)

    def test_sinkhorn_bounds_dense_from_above(self):
        rng = np.random.default_rng(5)
        mu = DiscreteMeasure(rng.uniform(0, 2 * math.pi, (30, 2)), rng.uniform(0.5, 1.5, 30))
        nu = DiscreteMeasure(rng.uniform(0, 2 * math.pi, (30, 2)), rng.uniform(0.5, 1.5, 30))
        nu = nu.scaled(mu.total / nu.total)
        dense = w1_dense_exact(mu, nu, self.m).value
        entropic = w1_sinkhorn(mu, nu, self.m, epsilon=0.2, max_iter=20000)
        self.assertGreaterEqual(entropic.value, dense * (1 - 1e-3))
        self.assertAlmostEqual(entropic.epsilon, 0.2)
        self.assertLessEqual(entropic.marginal_err, 1e-4)

    def test_sinkhorn_not_converged(self):
        rng = np.random.default_rng(6)
        mu = DiscreteMeasure(rng.uniform(0, 2 * math.pi, (40, 2)), rng.uniform(0.5, 1.5, 40))
        nu = DiscreteMeasure(rng.uniform(0, 2 * math.pi, (40, 2)), rng.uniform(0.5, 1.5, 40))
        nu = nu.scaled(mu.total / nu.total)
        with self.assertRaises(NotConverged):
            w1_sinkhorn(mu, nu, self.m, epsilon=1e-4, max_iter=1, stages=1)
        with self.assertRaises(ValueError):
            w1_sinkhorn(mu, nu, self.m, epsilon=0.0)

    def test_schedule(self):
        schedule = annealing_schedule(2.0, 4, start=0.5, end=0.005)
        self.assertAlmostEqual(schedule[0], 1.0)
        self.assertAlmostEqual(schedule[-1], 0.01)
        self.assertTrue(np.all(np.diff(schedule) < 0))
        np.testing.assert_allclose(annealing_schedule(2.0, 1), [0.01])


class TestWitness(unittest.TestCase):
    def setUp(self):
        _, self.f = sine(2, 48)
        self.ng = extract_nodal_set(self.f)

    def test_weak_duality(self):
        witness = lipschitz_witness(self.ng, self.f)
        exact = solve_w1("exact", self.f, self.ng)
        self.assertGreater(witness.lower_bound, 0.0)
        self.assertLessEqual(witness.lower_bound, exact.value * (1 + 1e-9))
        self.assertLessEqual(witness.lipschitz, 1.0 + 1e-6)

    def test_values_on_signed_regions(self):
        witness = lipschitz_witness(self.ng, self.f)
        R = default_witness_radius(self.ng)
        far = self.ng.distances > R / 2
        values = witness.values.values
        self.assertEqual(witness.scale, 1.0)
        np.testing.assert_allclose(values[far & (self.f.values > 0)], R / 4)
        np.testing.assert_allclose(values[far & (self.f.values < 0)], -R / 4)

    def test_rescaled_when_too_steep(self):
        with mock.patch("transport.edge_lipschitz", return_value=1.5):
            witness = lipschitz_witness(self.ng, self.f)
        R = witness.radius
        far = self.ng.distances > R / 2
        self.assertAlmostEqual(witness.scale, 1 / 1.5)
        np.testing.assert_allclose(witness.values.values[far & (self.f.values > 0)], R / 6)

    def test_radius_too_large(self):
        with self.assertRaises(EmptySignedRegion):
            lipschitz_witness(self.ng, self.f, R=4.0)

    def test_as_transport_result(self):
        result = solve_w1("witness", self.f, self.ng)
        self.assertEqual(result.method, TransportMethod.DUAL_WITNESS)
        self.assertEqual(result.value, result.lower_bound)
        self.assertEqual(result.duality_gap, 0.0)


class TestDispatchAndUncertainty(unittest.TestCase):
    def test_unknown_engine(self):
        _, f = sine(1, 24)
        with self.assertRaises(ValueError):
            solve_w1("teleport", f, extract_nodal_set(f))

    def test_result_json(self):
        result = TransportResult(TransportMethod.SINKHORN, 1.5, lower_bound=1.25, seed=3, atoms=10)
        data = result.to_json()
        self.assertEqual(data["method"], "sinkhorn")
        self.assertEqual(data["atoms"], 10)
        self.assertEqual(result.duality_gap, 0.25)
        self.assertIsNone(TransportResult(TransportMethod.EXACT_FLOW, 1.0).duality_gap)

    def test_product_is_scale_invariant(self):
        e, f = sine(2, 24)
        ng = extract_nodal_set(f)
        base = uncertainty_product(e, f, ng)
        scaled = f.scaled(5.0)
        other = uncertainty_product(e, scaled, extract_nodal_set(scaled))
        self.assertAlmostEqual(other.product, base.product, delta=1e-9 * base.product)
        self.assertAlmostEqual(other.l1_norm, 5 * base.l1_norm, delta=1e-9 * other.l1_norm)
        self.assertAlmostEqual(base.nodal_length, 8 * math.pi, places=9)

    def test_product_for_sine(self):
        # W1 = 8 pi / k over an L^1 norm of 8 pi, times a nodal length of 4 pi k
        e, f = sine(3, 72)
        result = uncertainty_product(e, f, extract_nodal_set(f))
        self.assertAlmostEqual(result.product, 4 * math.pi, delta=2e-2 * 4 * math.pi)


if __name__ == "__main__":
    unittest.main()
