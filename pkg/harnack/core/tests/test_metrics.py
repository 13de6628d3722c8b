import threading
import unittest

from prometheus_client import CollectorRegistry, generate_latest
import requests

from harnack.core.metrics import (ConfidentCounter, PreciseFloat, record_event, solver_metrics,
                                  SolverMetrics)


def parse_exposition(data: str) -> dict:
    metrics = {}
    for line in data.split("\n"):
        if line.startswith("#") or line.startswith("python") or line.startswith("process_") \
                or not line:
            continue
        name, value = line.split(" ")
        metrics[name] = float(value)
    return metrics


class ConfidentCounterTests(unittest.TestCase):
    def test_kahan_algorithm(self):
        metric = ConfidentCounter("test_data_kahan", "running counters",
                                  registry=CollectorRegistry())
        # 2^52: the spacing of doubles is exactly 1 here
        origin = brute_sum = 4503599627370496
        metric += origin
        val = 0.001
        for _ in range(1000):
            brute_sum += val
            metric += val

        metric_val = metric.collect()[0].samples[1].value
        self.assertEqual(metric_val, origin + 1.)
        self.assertNotEqual(brute_sum, origin + 1)

    def test_summary(self):
        metric = ConfidentCounter("test_summary_counter", "running counters",
                                  registry=CollectorRegistry())
        self.assertEqual(metric.summary(), {"count": 0, "sum": 0.0, "mean": 0.0, "std": 0.0})
        metric += 4
        metric += 6
        self.assertEqual(metric.summary(), {"count": 2, "sum": 10.0, "mean": 5.0, "std": 1.0})

    def test_multithread(self):
        x = PreciseFloat()
        threads = []

        def bump():
            nonlocal x
            for _ in range(1000):
                x += 1

        for _ in range(100):
            t = threading.Thread(target=bump)
            t.start()
            threads.append(t)

        for i in range(100):
            threads[i].join()
        self.assertEqual(x.get(), 100 * 1000)
        x.set(3)
        self.assertEqual(x.get(), 3)


class SolverMetricsTests(unittest.TestCase):
    def setUp(self):
        self.registry = CollectorRegistry()
        self.metrics = SolverMetrics(self.registry)

    def test_filter_metric_name(self):
        self.assertEqual(self.metrics._adjust_metric_name("heat.substeps"), "heat:substeps")
        with self.assertRaises(ValueError):
            self.metrics._adjust_metric_name("!AM!?wilto%.")

    def test_submit_rolling_stats(self):
        name = "test_rolling_stats"
        self.metrics.submit_event(key=name, value=4)
        self.metrics.submit_event(key=name, value=6)
        exposed = parse_exposition(generate_latest(self.registry).decode())
        self.assertEqual(exposed["%s_count" % name], 2)
        self.assertEqual(exposed["%s_sum" % name], 10)
        self.assertEqual(exposed["%s_sum_of_squares" % name], 52)
        self.assertEqual(self.metrics.summary()[name]["mean"], 5)

    def test_serve(self):
        self.metrics.submit_event("picard.iterations", 3)
        self.metrics.serve("localhost", 8013)
        self.assertIn("localhost:8013", str(self.metrics))
        response = requests.get("http://localhost:8013")
        self.assertEqual(response.status_code, 200)
        exposed = parse_exposition(response.content.decode())
        self.assertEqual(exposed["picard:iterations_sum"], 3)

    def test_unregistered(self):
        metrics = SolverMetrics(None)
        metrics.submit_event("a_float", 3.5)
        self.assertEqual(metrics.summary()["a_float"]["sum"], 3.5)
        with self.assertRaises(ValueError):
            metrics.serve("localhost", 8014)


class RecordEventTests(unittest.TestCase):
    def test_send_new_scalar(self):
        name = "test_record_event_scalar"
        record_event(name, 3.1)
        record_event(name, 5.1)
        self.assertIs(solver_metrics(), solver_metrics())
        summary = solver_metrics().summary()[name]
        self.assertEqual(summary["count"], 2)
        self.assertAlmostEqual(summary["sum"], 8.2)


if __name__ == "__main__":
    unittest.main()
