from __future__ import annotations

import json
import logging
import math
import tempfile
import unittest
from pathlib import Path

import numpy as np

from prabhakarcalculus import verify
from prabhakarcalculus.exceptions import InvalidParams
from prabhakarcalculus.typing_utils import ValueRange


class TestDraws(unittest.TestCase):
    log = logging.getLogger(__name__)
    log.setLevel(logging.WARNING)
    logging.basicConfig()

    def test_dyadic_values(self):
        rng = np.random.default_rng(3)
        value_range = ValueRange(-0.5, 0.75)
        for _ in range(200):
            value = verify.dyadic(rng, value_range)
            self.assertTrue(value_range.contains(value))
            self.assertEqual(value * verify.DYADIC_STEPS, round(value * verify.DYADIC_STEPS))
        for _ in range(50):
            self.assertGreater(verify.dyadic(rng, ValueRange(0.0, 1.0), open_low=True), 0.0)

    def test_dyadic_rejects_draws_past_the_range(self):
        # Width 0.75 / 256 rounds to one step, which lands above hi
        narrow = ValueRange(0.0, 0.75 / verify.DYADIC_STEPS)
        with self.assertRaises(InvalidParams):
            verify.dyadic(np.random.default_rng(0), narrow, open_low=True)

    def test_draw_spec_is_valid(self):
        rng = np.random.default_rng(7)
        for _ in range(20):
            try:
                spec = verify.draw_spec(rng)
            except InvalidParams:
                # beta above the level count
                continue
            self.assertIn(spec.n, (1, 2, 3))
            self.assertGreaterEqual(spec.inner_order, 0.0)

    def test_single_initial_value_draws(self):
        rng = np.random.default_rng(11)
        drawn = 0
        while drawn < 5:
            try:
                spec = verify.draw_spec(rng, levels=(1, 2), single_initial_value=True)
            except InvalidParams:
                continue
            self.assertEqual(spec.initial_count, 1)
            drawn += 1

    def test_defect(self):
        self.assertEqual(verify.defect(1.0, 1.0), 0.0)
        self.assertEqual(verify.defect(3.0, 1.0), 0.5)
        self.assertFalse(verify.defect(math.nan, 1.0) <= 1.0)


class TestSuites(unittest.TestCase):
    def test_every_suite_passes(self):
        for suite in verify.SUITES:
            with self.subTest(suite=suite):
                report = verify.run_suite(suite, seed=0, cases=3)
                failing = [(r.case, r.defect, r.note) for r in report.results if not r.passed]
                self.assertTrue(report.passed, failing)
                self.assertEqual([r.case for r in report.results], [0, 1, 2])
                self.assertLessEqual(report.max_defect, verify.SUITE_TOLERANCES[suite])

    def test_reproducible(self):
        first = verify.run_suite("semigroup", seed=5, cases=4)
        second = verify.run_suite("semigroup", seed=5, cases=4)
        self.assertEqual(first.to_csv(), second.to_csv())
        third = verify.run_suite("semigroup", seed=6, cases=4)
        self.assertNotEqual(first.to_csv(), third.to_csv())

    def test_case_independent_of_count(self):
        short = verify.run_suite("reductions", seed=1, cases=2)
        long = verify.run_suite("reductions", seed=1, cases=4)
        self.assertEqual(short.results[1].params, long.results[1].params)

    def test_negative_tolerance_fails(self):
        report = verify.run_suite("semigroup", seed=0, cases=2, tolerance=-1.0)
        self.assertFalse(report.passed)
        self.assertEqual(report.failures, 2)

    def test_unknown_suite(self):
        with self.assertRaises(InvalidParams):
            verify.run_suite("nonsense")
        with self.assertRaises(InvalidParams):
            verify.run_suite("semigroup", cases=0)

    def test_report_formats(self):
        report = verify.run_suite("semigroup", seed=2, cases=2)
        lines = report.to_csv().splitlines()
        self.assertEqual(lines[0], ",".join(verify.SuiteReport.HEADER))
        self.assertEqual(len(lines), 3)
        envelope = json.loads(report.to_json())
        self.assertEqual(envelope["metadata"]["suite"], "semigroup")
        self.assertEqual(envelope["metadata"]["failures"], 0)
        self.assertEqual(len(envelope["result"]), 2)
        self.assertEqual(envelope["warnings"], [])

    def test_write_report(self):
        report = verify.run_suite("semigroup", seed=0, cases=1)
        with tempfile.TemporaryDirectory() as tmp:
            path = verify.write_report(report, Path(tmp) / "reports", "json")
            self.assertEqual(path.name, "semigroup_seed0.json")
            self.assertEqual(json.loads(path.read_text())["metadata"]["cases"], 1)


if __name__ == "__main__":
    unittest.main()
