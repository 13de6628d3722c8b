import io
import json
import logging
import sys
import tempfile
import unittest
from unittest import mock

from harnack.core import slogging
from harnack.core.cmdline import create_parser


class SloggingTests(unittest.TestCase):
    def setUp(self):
        logging.basicConfig()
        root = logging.getLogger()
        self.handler_backup = root.handlers[0]
        self.level_backup = root.level

    def tearDown(self):
        root = logging.getLogger()
        root.handlers[0] = self.handler_backup
        root.setLevel(self.level_backup)

    def test_cli_structured_stage_timings(self):
        create_parser().parse_args(["--log-structured", "list"])
        backup = sys.stdout
        sys.stdout = buffer = io.StringIO()
        try:
            with slogging.log_duration(logging.getLogger("ScenarioRunner"),
                                       "scenario flat_torus"):
                pass
        finally:
            sys.stdout = backup
        obj = json.loads(buffer.getvalue())
        self.assertEqual(obj["level"], "info")
        self.assertTrue(obj["msg"].startswith("scenario flat_torus took "), obj["msg"])
        self.assertTrue(obj["source"].startswith("slogging.py:"), obj["source"])
        self.assertIn("time", obj)

    def test_cli_log_level(self):
        create_parser().parse_args(["--log-level", "WARNING", "list"])
        self.assertEqual(logging.getLogger().level, logging.WARNING)
        log = logging.getLogger("ScenarioContext")
        self.assertFalse(log.isEnabledFor(logging.INFO))

    def test_config(self):
        slogging.setup("INFO", True, "XXX.yml")
        with tempfile.NamedTemporaryFile() as f:
            f.write(b"ScenarioRunner: INFO\nScenarioContext: WARNING\nrefinement: INFO\n")
            f.flush()
            slogging.setup("INFO", True, f.name)

    def test_log_duration(self):
        log = logging.getLogger("test_log_duration")
        with mock.patch("harnack.core.slogging.time.perf_counter", side_effect=[10.0, 12.5]):
            with self.assertLogs(log, "INFO") as logs:
                with slogging.log_duration(log, "heat") as elapsed:
                    pass
        self.assertEqual(elapsed, [2.5])
        self.assertEqual(logs.output, ["INFO:test_log_duration:heat took 2.5 seconds"])

    def test_log_duration_on_error(self):
        log = logging.getLogger("test_log_duration")
        with self.assertLogs(log, "INFO") as logs:
            with self.assertRaises(ZeroDivisionError):
                with slogging.log_duration(log, "w") as elapsed:
                    1 / 0
        self.assertEqual(len(elapsed), 1)
        self.assertTrue(logs.output[0].startswith("INFO:test_log_duration:w took"))


if __name__ == "__main__":
    unittest.main()
