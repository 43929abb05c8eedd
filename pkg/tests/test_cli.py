from __future__ import annotations

import csv
import json
import logging
import math
import tempfile
import unittest
from pathlib import Path
from unittest import mock

from typer.testing import CliRunner

from prabhakarcalculus import __main__ as cli_main
from prabhakarcalculus.__main__ import app


class TestCli(unittest.TestCase):
    log = logging.getLogger(__name__)
    log.setLevel(logging.WARNING)
    logging.basicConfig()

    def setUp(self):
        self.runner = CliRunner()
        self.tmp = tempfile.TemporaryDirectory()
        self.dir = Path(self.tmp.name)

    def tearDown(self):
        self.tmp.cleanup()

    def invoke(self, *args: str, env: dict | None = None):
        return self.runner.invoke(app, list(args), env=env)

    def read_csv(self, path: Path) -> list[dict]:
        with open(path, newline="", encoding="utf-8") as file:
            return list(csv.DictReader(file))

    def test_eval_mlf(self):
        out = self.dir / "mlf.csv"
        result = self.invoke(
            "eval-mlf", "--alpha", "1", "--beta", "1", "--gamma", "1", "--z", "0", "--z", "1", "--out", str(out)
        )
        self.assertEqual(result.exit_code, 0, result.output)
        rows = self.read_csv(out)
        self.assertEqual([row["flag"] for row in rows], ["", ""])
        self.assertEqual(float(rows[0]["value"]), 1.0)
        self.assertAlmostEqual(float(rows[1]["value"]), math.e, delta=1e-14)

    def test_eval_mlf_flags_nonconvergence(self):
        out = self.dir / "mlf.csv"
        result = self.invoke("eval-mlf", "--z", "0.5", "--z", "50", "--out", str(out), env={"FC_MAX_TERMS": "5"})
        self.assertEqual(result.exit_code, 0, result.output)
        rows = self.read_csv(out)
        self.assertEqual(rows[0]["flag"], "")
        self.assertEqual(rows[1]["flag"], "NonConvergence")
        self.assertEqual(rows[1]["value"], "nan")

    def test_eval_mlf_flags_cancellation(self):
        out = self.dir / "mlf.csv"
        result = self.invoke("eval-mlf", "--alpha", "0.5", "--z", "-5", "--z", "-0.5", "--out", str(out))
        self.assertEqual(result.exit_code, 0, result.output)
        rows = self.read_csv(out)
        self.assertEqual([row["flag"] for row in rows], ["Cancellation", ""])

    def test_eval_mlf_json(self):
        out = self.dir / "mlf.json"
        result = self.invoke(
            "eval-mlf", "--z-from", "0", "--z-to", "1", "--z-steps", "3", "--format", "json", "--out", str(out)
        )
        self.assertEqual(result.exit_code, 0, result.output)
        envelope = json.loads(out.read_text())
        self.assertEqual([row["z"] for row in envelope["result"]], [0.0, 0.5, 1.0])
        self.assertEqual(envelope["metadata"]["alpha"], 1.0)

    def test_invalid_params_exit_code(self):
        result = self.invoke("eval-mlf", "--alpha=-1", "--out", str(self.dir / "x.csv"))
        self.assertEqual(result.exit_code, 2)

    def test_invalid_environment_exit_code(self):
        result = self.invoke("eval-mlf", "--out", str(self.dir / "x.csv"), env={"FC_MAX_TERMS": "many"})
        self.assertEqual(result.exit_code, 2)

    def test_apply_integral_of_power(self):
        out = self.dir / "apply.csv"
        result = self.invoke(
            "apply",
            "--op", "integral",
            "--function", "power:r=1",
            "--beta", "0.5",
            "--x-from", "0.25",
            "--x-to", "1",
            "--x-steps", "4",
            "--out", str(out),
        )  # fmt: skip
        self.assertEqual(result.exit_code, 0, result.output)
        rows = self.read_csv(out)
        self.assertEqual(len(rows), 4)
        for row in rows:
            x = float(row["x"])
            self.assertAlmostEqual(float(row["exact"]), x**1.5 / math.gamma(2.5), delta=1e-14)
            self.assertLessEqual(float(row["defect"]), 1e-8)

    def test_apply_series(self):
        series = self.dir / "f.json"
        series.write_text(json.dumps({"alpha": 1.0, "delta": 0.5, "terms": [{"coeff": 1.0, "mu": 2.5, "gamma": 0.5}]}))
        out = self.dir / "apply.csv"
        result = self.invoke(
            "apply", "--op", "pr-derivative", "--series", f"@{series}", "--beta", "0.5", "--gamma", "0.25",
            "--x-steps", "2", "--out", str(out),
        )  # fmt: skip
        self.assertEqual(result.exit_code, 0, result.output)
        for row in self.read_csv(out):
            self.assertLessEqual(float(row["defect"]), 1e-8)

    def test_apply_exact_series_feeds_back(self):
        # The exact integral from the metadata, differentiated with the same kernel, returns x
        first = self.dir / "integral.json"
        kernel = ("--beta", "0.5", "--gamma", "0.25", "--delta", "-0.5", "--x-from", "0.25", "--x-to", "1")
        result = self.invoke(
            "apply", "--op", "integral", "--function", "power:r=1", *kernel, "--x-steps", "4",
            "--format", "json", "--out", str(first),
        )  # fmt: skip
        self.assertEqual(result.exit_code, 0, result.output)
        exact = json.loads(first.read_text())["metadata"]["exact"]
        series = self.dir / "exact.json"
        series.write_text(json.dumps(exact))
        out = self.dir / "derivative.csv"
        result = self.invoke(
            "apply", "--op", "pr-derivative", "--series", f"@{series}", *kernel, "--x-steps", "4", "--out", str(out)
        )
        self.assertEqual(result.exit_code, 0, result.output)
        rows = self.read_csv(out)
        self.assertEqual(len(rows), 4)
        for row in rows:
            self.assertAlmostEqual(float(row["exact"]), float(row["x"]), delta=1e-12)
            self.assertLessEqual(float(row["defect"]), 1e-8)

    def test_apply_needs_one_input(self):
        result = self.invoke("apply", "--function", "power:r=1", "--series", "{}", "--out", str(self.dir / "x.csv"))
        self.assertEqual(result.exit_code, 2)
        result = self.invoke("apply", "--out", str(self.dir / "x.csv"))
        self.assertEqual(result.exit_code, 2)

    def test_solve_ivp(self):
        config = self.dir / "ivp.json"
        config.write_text(
            json.dumps(
                {
                    "alpha": 1.0,
                    "beta": 0.5,
                    "gamma": 0.0,
                    "delta": 0.0,
                    "beta_i": [0.0],
                    "theta_i": [0.0],
                    "lambda": -1.0,
                    "forcing": None,
                    "a": [1.0],
                }
            )
        )
        out = self.dir / "ivp.csv"
        result = self.invoke("solve-ivp", "--config", str(config), "--x-steps", "3", "--out", str(out))
        self.assertEqual(result.exit_code, 0, result.output)
        rows = self.read_csv(out)
        self.assertEqual(len(rows), 3)
        for row in rows:
            self.assertLessEqual(abs(float(row["residual"])), 1e-10)

    def test_solve_ivp_bad_config(self):
        config = self.dir / "ivp.json"
        config.write_text("{")
        result = self.invoke("solve-ivp", "--config", str(config), "--out", str(self.dir / "x.csv"))
        self.assertEqual(result.exit_code, 2)

    def test_solve_heat(self):
        config = self.dir / "heat.json"
        config.write_text(
            json.dumps(
                {
                    "alpha": 1.0,
                    "beta": 0.5,
                    "gamma": 0.0,
                    "delta": 0.0,
                    "beta_i": [0.25],
                    "theta_i": [0.5],
                    "k_tilde": 0.05,
                    "L": 4.0,
                    "N": 8,
                    "u0": {"kind": "gaussian", "params": {"sigma": 0.5}},
                    "times": [0.25, 0.5],
                }
            )
        )
        out = self.dir / "heat.csv"
        result = self.invoke("solve-heat", "--config", str(config), "--job-count", "1", "--out", str(out))
        self.assertEqual(result.exit_code, 0, result.output)
        rows = self.read_csv(out)
        self.assertEqual(len(rows), 16)
        self.assertEqual(list(rows[0]), ["x", "t", "u"])
        self.assertEqual(sorted({float(row["t"]) for row in rows}), [0.25, 0.5])
        # --t replaces the times of the file
        result = self.invoke("solve-heat", "--config", str(config), "--t", "1", "--job-count", "1", "--out", str(out))
        self.assertEqual(result.exit_code, 0, result.output)
        self.assertEqual({float(row["t"]) for row in self.read_csv(out)}, {1.0})

    def test_verify(self):
        out = self.dir / "verify.csv"
        result = self.invoke("verify", "--suite", "semigroup", "--cases", "2", "--job-count", "1", "--out", str(out))
        self.assertEqual(result.exit_code, 0, result.output)
        rows = self.read_csv(out)
        self.assertEqual([row["passed"] for row in rows], ["true", "true"])

    def test_verify_report_dir(self):
        reports = self.dir / "reports"
        with mock.patch.object(cli_main, "FC_REPORT_DIR", reports):
            result = self.invoke(
                "verify", "--suite", "semigroup", "--cases", "2", "--job-count", "1", "--format", "json",
                "--report-dir", "--out", str(self.dir / "verify.json"),
            )  # fmt: skip
        self.assertEqual(result.exit_code, 0, result.output)
        report = json.loads((reports / "semigroup_seed0.json").read_text())
        self.assertEqual(report["metadata"]["cases"], 2)

    def test_verify_failure_exit_code(self):
        out = self.dir / "verify.csv"
        result = self.invoke(
            "verify", "--suite", "semigroup", "--cases", "2", "--tol=-1", "--job-count", "1", "--out", str(out)
        )
        self.assertEqual(result.exit_code, 4)

    def test_verify_unknown_suite(self):
        result = self.invoke("verify", "--suite", "nonsense", "--job-count", "1", "--out", str(self.dir / "x.csv"))
        self.assertEqual(result.exit_code, 2)


if __name__ == "__main__":
    unittest.main()
