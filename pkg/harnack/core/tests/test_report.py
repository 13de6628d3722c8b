import csv
import json
import os
import tempfile
import unittest

import numpy

from harnack.core.manager import CheckOutcome, ScenarioResult, ScenarioRunner
from harnack.core.report import format_cell, jsonable, RunReport, TABLE_HEADER
from harnack.core.scenario import parse_scenario

SMALL = {
    "id": "small_flat",
    "manifold": {"model": "flat_torus", "parameters": {"resolution": [16, 16]}},
    "liyau": {"p": 2, "alpha": 0.5},
    "solver": {"dt_time": 0.05, "t_max_time": 0.2},
    "checks": ["claim", "gronwall"],
}


class ConversionTests(unittest.TestCase):
    def test_jsonable(self):
        value = jsonable({"a": numpy.float64("nan"), 1: (numpy.int64(3), numpy.bool_(True)),
                          "b": numpy.arange(2), "c": float("inf"), "d": "text"})
        self.assertEqual(value, {"a": None, "1": [3, True], "b": [0, 1], "c": None,
                                 "d": "text"})
        self.assertIsInstance(value["1"][0], int)

    def test_format_cell(self):
        self.assertEqual(format_cell(None), "")
        self.assertEqual(format_cell(True), "true")
        self.assertEqual(format_cell(0.1), "0.10000000000000001")
        self.assertEqual(format_cell(numpy.float64(2.5)), "2.5")
        self.assertEqual(format_cell(7), "7")


class RunReportTests(unittest.TestCase):
    def test_failures(self):
        failed = ScenarioResult(id="x", checks={
            "li_yau": CheckOutcome(status=CheckOutcome.FAILED, negative_control=False,
                                   reports=[], error=None),
            "claim": CheckOutcome(status=CheckOutcome.FLAGGED, negative_control=True,
                                  reports=[], error=None)})
        report = RunReport([failed])
        self.assertEqual(report.failures(), ["x/li_yau"])
        self.assertTrue(report.failed)
        self.assertEqual(str(report), "RunReport(1 scenarios, 1 failures)")

    def test_write_is_deterministic(self):
        scenario = parse_scenario(SMALL)
        contents = []
        with tempfile.TemporaryDirectory(prefix="harnack-test-") as tmpdir:
            for attempt in range(2):
                output = os.path.join(tmpdir, str(attempt))
                report = RunReport(ScenarioRunner().run_all([scenario]))
                paths = report.write(output)
                self.assertEqual([os.path.basename(p) for p in paths],
                                 ["report.json", "table.csv", "timings.json"])
                files = []
                for path in paths[:2]:
                    with open(path) as fin:
                        files.append(fin.read())
                contents.append(files)
            with open(os.path.join(tmpdir, "0", "table.csv")) as fin:
                rows = list(csv.reader(fin))
            with open(os.path.join(tmpdir, "0", "timings.json")) as fin:
                timings = json.load(fin)
        self.assertEqual(contents[0], contents[1])
        document = json.loads(contents[0][0])
        self.assertEqual(document["schema_version"], 1)
        self.assertEqual(document["status"], "passed")
        self.assertEqual(document["tool"]["name"], "harnack-verify")
        self.assertEqual(document["failures"], [])
        checks = document["scenarios"][0]["checks"]
        self.assertEqual(sorted(checks), ["claim", "gronwall"])
        self.assertEqual(checks["claim"]["status"], "passed")
        self.assertNotIn("timings", document["scenarios"][0])
        self.assertEqual(tuple(rows[0]), TABLE_HEADER)
        self.assertEqual({row[0] for row in rows[1:]}, {"small_flat"})
        self.assertEqual({row[1] for row in rows[1:]}, {"claim", "structural", "gronwall"})
        self.assertIn("small_flat", timings["scenarios"])
        self.assertIn("metrics", timings)


if __name__ == "__main__":
    unittest.main()
