import json
import logging
import sys
import tempfile
import unittest
from pathlib import Path
from unittest import mock

from click.testing import CliRunner

sys.path.insert(0, str(Path(__file__).resolve().parents[1]))

from config import Numerics, apply_numerics
from main import cli

PAYLOADS = Path(__file__).parent / "payloads"


class TestCli(unittest.TestCase):
    def setUp(self):
        self.runner = CliRunner()
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)
        self.out = Path(self.tmp.name)

    def tearDown(self):
        apply_numerics(Numerics())
        root = logging.getLogger()
        for handler in list(root.handlers):
            if getattr(handler, "_nodallab", False):
                root.removeHandler(handler)
                handler.close()

    def invoke(self, *args):
        return self.runner.invoke(cli, list(args))

    def test_lists_subcommands(self):
        result = self.invoke("--help")
        self.assertEqual(result.exit_code, 0)
        for name in ("scan-w1", "scan-tube-mass", "scan-doubling", "scan-uncertainty", "verify"):
            self.assertIn(name, result.output)

    def test_scan_w1_writes_reports(self):
        result = self.invoke(
            "scan-w1", "--config", str(PAYLOADS / "small_torus.json"), "--out", str(self.out)
        )
        self.assertEqual(result.exit_code, 0, result.output)
        self.assertIn("scan-w1: 4 rows, 0 errors", result.output)
        self.assertIn("w1_vs_lambda: slope", result.output)
        self.assertTrue((self.out / "scan_w1.w1.csv").exists())
        summary = json.loads((self.out / "scan_w1.summary.json").read_text())
        self.assertEqual(summary["rows"], {"w1": 4})
        self.assertTrue((self.out / "logs" / "experiments.log").exists())

    def test_json_format_and_seed_override(self):
        result = self.invoke(
            "scan-w1",
            "--config", str(PAYLOADS / "small_torus.json"),
            "--out", str(self.out),
            "--format", "json",
            "--seed", "7",
        )
        self.assertEqual(result.exit_code, 0, result.output)
        self.assertTrue((self.out / "scan_w1.w1.json").exists())
        summary = json.loads((self.out / "scan_w1.summary.json").read_text())
        self.assertEqual(summary["config"]["seed"], 7)

    def test_invalid_config_exits_2(self):
        result = self.invoke(
            "scan-w1", "--config", str(PAYLOADS / "empty_range.json"), "--out", str(self.out)
        )
        self.assertEqual(result.exit_code, 2)
        self.assertIn("config error: family.values", result.stderr)
        self.assertFalse((self.out / "scan_w1.w1.csv").exists())

    def test_missing_config_exits_2(self):
        result = self.invoke("verify", "--config", str(self.out / "absent.json"))
        self.assertEqual(result.exit_code, 2)
        self.assertIn("config error", result.stderr)

    def test_negative_seed_rejected(self):
        result = self.invoke("scan-w1", "--seed", "-1")
        self.assertEqual(result.exit_code, 2)

    def test_verify_passes(self):
        result = self.invoke(
            "verify", "--config", str(PAYLOADS / "verify_torus.json"), "--out", str(self.out)
        )
        self.assertEqual(result.exit_code, 0, result.output)
        self.assertIn("[PASS] csv schema", result.output)
        self.assertNotIn("[FAIL]", result.output)
        summary = json.loads((self.out / "verify.summary.json").read_text())
        self.assertTrue(summary["passed"])
        geometry = json.loads((self.out / "verify.geometry.json").read_text())
        self.assertEqual(geometry["torus_sine=2"]["domain_count"], 4)
        self.assertTrue(geometry["torus_sine=4"]["segments"])

    def test_verify_fails_on_tampered_witness(self):
        with mock.patch("transport.edge_lipschitz", return_value=1.5):
            result = self.invoke(
                "verify", "--config", str(PAYLOADS / "verify_torus.json"), "--out", str(self.out)
            )
        self.assertEqual(result.exit_code, 1)
        self.assertIn("[FAIL] torus_sine=2: witness Lipschitz", result.output)
        summary = json.loads((self.out / "verify.summary.json").read_text())
        self.assertFalse(summary["passed"])


if __name__ == "__main__":
    unittest.main()
