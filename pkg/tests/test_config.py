import math
import os
import sys
import tempfile
import unittest
from pathlib import Path
from unittest import mock

from pydantic import ValidationError

sys.path.insert(0, str(Path(__file__).resolve().parents[1]))

import config as config_module
from config import (
    ExperimentConfig,
    LabSettings,
    Numerics,
    apply_numerics,
    load_experiment_config,
    numerics,
    numerics_override,
    parse_experiment_config,
)
from errors import ConfigInvalid, ResolutionTooCoarse

PAYLOADS = Path(__file__).parent / "payloads"


class TestExperimentConfig(unittest.TestCase):
    def test_default_file(self):
        config = load_experiment_config()
        self.assertEqual(config.family.kind, "torus_sine")
        self.assertEqual(config.family.values, [2, 4, 8])
        self.assertTrue(math.isinf(config.ps[-1]))
        self.assertEqual(config.transport.engine, "exact")

    def test_payload(self):
        config = load_experiment_config(PAYLOADS / "small_torus.json")
        self.assertEqual(config.d_values, [4, 8])
        self.assertEqual(config.deltas.count, 6)

    def test_ps_round_trip(self):
        config = parse_experiment_config({"ps": [2, "inf", "Infinity"]})
        self.assertEqual(config.ps[0], 2.0)
        self.assertTrue(all(math.isinf(p) for p in config.ps[1:]))
        self.assertEqual(config.model_dump(mode="json")["ps"], [2.0, "inf", "inf"])
        again = parse_experiment_config(config.model_dump())
        self.assertEqual(again.ps, config.ps)

    def test_d_values_sorted(self):
        self.assertEqual(parse_experiment_config({"d_values": [10, 4, 6]}).d_values, [4, 6, 10])

    def test_empty_range(self):
        with self.assertRaises(ConfigInvalid) as ctx:
            load_experiment_config(PAYLOADS / "empty_range.json")
        self.assertTrue(any(m.startswith("family.values") for m in ctx.exception.messages))

    def test_family_manifold_mismatch(self):
        with self.assertRaises(ConfigInvalid) as ctx:
            load_experiment_config(PAYLOADS / "family_mismatch.json")
        self.assertIn("does not live on manifold", " ".join(ctx.exception.messages))

    def test_bad_p(self):
        with self.assertRaises(ConfigInvalid):
            parse_experiment_config({"ps": [0.5]})

    def test_unknown_field(self):
        with self.assertRaises(ConfigInvalid):
            parse_experiment_config({"family": {"kind": "torus_sine", "colour": "red"}})

    def test_resolution_rule(self):
        config = ExperimentConfig()
        # sin 32x on the 2 pi torus: 32 wavelengths of 12 nodes
        self.assertEqual(config.grid_resolution(32.0**2), 384)
        self.assertEqual(config.grid_resolution(0.01), 8)
        self.assertEqual(config.eigenvalue_of(3), 9.0)
        self.assertEqual(config.largest_eigenvalue(), 32.0**2)

    def test_resolution_rule_matches_manifold(self):
        from manifold import ManifoldModel, default_resolution

        config = parse_experiment_config(
            {"manifold": {"kind": "round_sphere"}, "family": {"kind": "gaussian_beam", "values": [16]}}
        )
        lam = config.eigenvalue_of(16)
        self.assertEqual(config.grid_resolution(lam), default_resolution(ManifoldModel.round_sphere(), lam))
        # the max_resolution rule uses the same count
        parse_experiment_config({"family": {"values": [32]}, "resolution": {"max_resolution": 384}})
        with self.assertRaises(ConfigInvalid):
            parse_experiment_config({"family": {"values": [32]}, "resolution": {"max_resolution": 383}})

    def test_resolution_above_max(self):
        with self.assertRaises(ConfigInvalid) as ctx:
            parse_experiment_config({"family": {"values": [100]}, "resolution": {"max_resolution": 256}})
        self.assertIn("max_resolution", " ".join(ctx.exception.messages))

    def test_override_skips_resolution_rule(self):
        config = parse_experiment_config(
            {"family": {"values": [100]}, "resolution": {"max_resolution": 256, "override": 64}}
        )
        self.assertEqual(config.resolution.override, 64)

    def test_sphere_eigenvalues(self):
        config = parse_experiment_config(
            {"manifold": {"kind": "round_sphere", "radius": 2.0}, "family": {"kind": "gaussian_beam", "values": [4]}}
        )
        self.assertAlmostEqual(config.eigenvalue_of(4), 5.0)

    def test_harmonic_order_checked(self):
        with self.assertRaises(ConfigInvalid):
            parse_experiment_config(
                {"manifold": {"kind": "round_sphere"}, "family": {"kind": "sphere_harmonic", "values": [2], "order": 3}}
            )

    def test_missing_and_malformed_files(self):
        with self.assertRaises(ConfigInvalid) as ctx:
            load_experiment_config(PAYLOADS / "missing.json")
        self.assertIn("file not found", ctx.exception.messages[0])
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "broken.json"
            path.write_text("{not json")
            with self.assertRaises(ConfigInvalid) as ctx:
                load_experiment_config(path)
            self.assertIn("invalid JSON", ctx.exception.messages[0])
            path.write_text("[1, 2]")
            with self.assertRaises(ConfigInvalid):
                load_experiment_config(path)


class TestNumerics(unittest.TestCase):
    def tearDown(self):
        apply_numerics(Numerics())

    def test_apply_swaps_active_values(self):
        before = numerics.current
        apply_numerics(Numerics(residual_tolerance=0.05, multiplicity_cap=20))
        self.assertEqual(numerics.residual_tolerance, 0.05)
        self.assertIs(config_module.numerics, numerics)
        self.assertEqual(config_module.numerics.multiplicity_cap, 20)
        # the previous frozen instance is untouched
        self.assertEqual(before.residual_tolerance, 0.03)
        self.assertIsNot(numerics.current, before)

    def test_active_values_stay_frozen(self):
        with self.assertRaises(ValidationError):
            numerics.current.zero_band = 1.0

    def test_seen_by_importing_modules(self):
        import manifold

        apply_numerics(Numerics(min_grid_resolution=20))
        with self.assertRaises(ResolutionTooCoarse):
            manifold.build_grid(manifold.ManifoldModel.flat_torus(), 16)

    def test_override_restores(self):
        with numerics_override(zero_band=1e-9) as active:
            self.assertEqual(active.zero_band, 1e-9)
            self.assertEqual(numerics.zero_band, 1e-9)
        self.assertEqual(numerics.zero_band, 1e-12)
        with self.assertRaises(ValidationError):
            with numerics_override(neighbour_radius=0.5):
                pass
        self.assertEqual(numerics.neighbour_radius, 0.25)

    def test_neighbour_scale_must_fit_lift_cap(self):
        with self.assertRaises(ValidationError):
            Numerics(lift_radius_cap=0.5)
        Numerics(lift_radius_cap=0.5, neighbour_radius=0.125)
        with self.assertRaises(ConfigInvalid):
            parse_experiment_config({"numerics": {"neighbour_constant": 8.0}})

    def test_config_carries_numerics(self):
        config = parse_experiment_config({"numerics": {"zero_band": 1e-10}})
        self.assertEqual(config.numerics.zero_band, 1e-10)
        with self.assertRaises(ConfigInvalid):
            parse_experiment_config({"numerics": {"no_such_knob": 1}})


class TestSettings(unittest.TestCase):
    def test_jobs_from_environment(self):
        with mock.patch.dict(os.environ, {"NODALLAB_JOBS": "3"}):
            self.assertEqual(LabSettings().jobs, 3)

    def test_default_jobs(self):
        with mock.patch.dict(os.environ, {}, clear=True):
            self.assertEqual(LabSettings(_env_file=None).jobs, 1)


if __name__ == "__main__":
    unittest.main()
