"""Report files: report.json, table.csv and timings.json."""
import csv
import json
import logging
import math
import os
from typing import Iterator, List, Sequence

import numpy

from harnack.core import __version__
from harnack.core.manager import ScenarioResult
from harnack.core.metrics import solver_metrics

SCHEMA_VERSION = 1
TABLE_HEADER = ("scenario", "check", "x", "y", "t", "lhs", "rhs", "margin", "violated")
REPORT_FILE = "report.json"
TABLE_FILE = "table.csv"
TIMINGS_FILE = "timings.json"


def jsonable(value):
    """
    Convert numpy scalars and arrays, tuples and non-finite floats into plain JSON values.

    NaN and infinities become None.
    """
    if isinstance(value, dict):
        return {str(key): jsonable(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [jsonable(item) for item in value]
    if isinstance(value, numpy.ndarray):
        return jsonable(value.tolist())
    if isinstance(value, (bool, numpy.bool_)):
        return bool(value)
    if isinstance(value, (int, numpy.integer)):
        return int(value)
    if isinstance(value, (float, numpy.floating)):
        value = float(value)
        return value if math.isfinite(value) else None
    return value


def format_cell(value) -> str:
    """Format a table cell: floats with 17 significant digits, None as an empty string."""
    if value is None:
        return ""
    if isinstance(value, (bool, numpy.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, numpy.floating)):
        return "%.17g" % value
    return str(value)


class RunReport:
    """Results of a run and their serialization."""

    _log = logging.getLogger("RunReport")

    def __init__(self, results: Sequence[ScenarioResult], command: str = "verify",
                 calibrations: Sequence[dict] = ()):
        """
        Initialize a new instance of RunReport.

        :param results: Scenario results; sorted by id on output.
        :param command: Name of the CLI command which produced the results.
        :param calibrations: Summaries of the calibration models available to the run.
        """
        self.results = sorted(results, key=lambda result: result["id"])
        self.command = command
        self.calibrations = list(calibrations)

    def __str__(self) -> str:
        """Summarize RunReport as a string."""
        return "RunReport(%d scenarios, %d failures)" % (len(self.results),
                                                         len(self.failures()))

    def failures(self) -> List[str]:
        """Return "scenario/check" of every check which fails the run."""
        return ["%s/%s" % (result["id"], name) for result in self.results
                for name, outcome in sorted(result["checks"].items())
                if outcome.counts_as_failure]

    @property
    def failed(self) -> bool:
        return bool(self.failures())

    def to_dict(self) -> dict:
        """Build the structured report; it never contains timings."""
        scenarios = []
        for result in self.results:
            checks = {}
            for name, outcome in sorted(result["checks"].items()):
                checks[name] = {
                    "status": outcome["status"],
                    "negative_control": outcome["negative_control"],
                    "error": outcome["error"],
                    "reports": [report.summary() for report in outcome["reports"]],
                }
            scenarios.append({
                "id": result["id"],
                "description": result["description"],
                "constants": result["constants"],
                "k": result["k"],
                "hypothesis_satisfied": result["hypothesis_satisfied"],
                "negative_control": result["negative_control"],
                "provenance": result["provenance"],
                "checks": checks,
            })
        return jsonable({
            "schema_version": SCHEMA_VERSION,
            "tool": {"name": "harnack-verify", "version": __version__},
            "command": self.command,
            "calibrations": self.calibrations,
            "status": "failed" if self.failed else "passed",
            "failures": self.failures(),
            "scenarios": scenarios,
        })

    def rows(self) -> Iterator[tuple]:
        """Yield the flat table rows in scenario, check and report order."""
        for result in self.results:
            for name, outcome in sorted(result["checks"].items()):
                for report in outcome["reports"]:
                    for row in report.rows():
                        yield (result["id"], report.name) + tuple(row)

    def timings(self) -> dict:
        """Return the wall times per scenario and the solver metrics summaries."""
        return jsonable({
            "scenarios": {result["id"]: result["timings"] for result in self.results},
            "metrics": solver_metrics().summary(),
        })

    def write(self, output: str) -> List[str]:
        """
        Write report.json, table.csv and timings.json.

        :param output: Directory, created if missing.
        :return: Paths of the written files.
        """
        os.makedirs(output, exist_ok=True)
        paths = [os.path.join(output, name) for name in (REPORT_FILE, TABLE_FILE, TIMINGS_FILE)]
        with open(paths[0], "w") as fout:
            json.dump(self.to_dict(), fout, indent=2, sort_keys=True, allow_nan=False)
            fout.write("\n")
        with open(paths[1], "w", newline="") as fout:
            writer = csv.writer(fout, lineterminator="\n")
            writer.writerow(TABLE_HEADER)
            count = 0
            for row in self.rows():
                writer.writerow([format_cell(cell) for cell in row])
                count += 1
        with open(paths[2], "w") as fout:
            json.dump(self.timings(), fout, indent=2, sort_keys=True, allow_nan=False)
            fout.write("\n")
        self._log.info("wrote %d table rows and %d scenario reports to %s", count,
                       len(self.results), output)
        return paths
