import math
import re
from threading import Lock
from typing import Dict, Optional, Union

from prometheus_client import CollectorRegistry, start_http_server
from prometheus_client.metrics import MetricWrapperBase


REGISTRY = CollectorRegistry()
_solver_metrics = None
_solver_metrics_lock = Lock()


class PreciseFloat:
    """A floating-point accumulator.

    Additions use Kahan compensated summation, so adding millions of tiny solver residuals
    to a large running total loses nothing. Thread safe.
    """

    def __init__(self):
        """Initialize a new instance of PreciseFloat."""
        self._value = 0.0
        self._aux = 0.0
        self._lock = Lock()

    def __iadd__(self, amount):
        """Increase the value by the given amount. Thread safe. No precision loss."""
        with self._lock:
            val = self._value
            y = amount - self._aux
            t = val + y
            self._aux = (t - val) - y
            self._value = t
        return self

    def set(self, value):
        """Set the value to the given amount. Thread safe."""
        with self._lock:
            self._aux = 0.0
            self._value = value

    def get(self):
        """Read the current value. Thread safe."""
        with self._lock:
            return self._value


class ConfidentCounter(MetricWrapperBase):
    """Prometheus counter which tracks the number of events, their sum and sum of squares.

    That is enough to report the rolling mean and the standard deviation of a solver
    statistic, e.g. the number of Picard iterations per slab.
    """

    _type = "counter"

    def __iadd__(self, amount):
        """Add a new observation."""
        self._count += 1
        self._sum += amount
        self._sum_of_squares += amount ** 2
        return self

    def _metric_init(self):
        self._count = PreciseFloat()
        self._sum = PreciseFloat()
        self._sum_of_squares = PreciseFloat()

    def _child_samples(self):
        return (
            ("_count", {}, self._count.get()),
            ("_sum", {}, self._sum.get()),
            ("_sum_of_squares", {}, self._sum_of_squares.get()),
        )

    def summary(self) -> Dict[str, float]:
        """
        Summarize the observations.

        :return: Dictionary with "count", "sum", "mean" and "std" keys.
        """
        count = self._count.get()
        total = self._sum.get()
        if count == 0:
            return {"count": 0, "sum": 0.0, "mean": 0.0, "std": 0.0}
        mean = total / count
        variance = max(self._sum_of_squares.get() / count - mean ** 2, 0.0)
        return {"count": int(count), "sum": total, "mean": mean, "std": math.sqrt(variance)}


class SolverMetrics:
    """Keep the solver statistics and optionally expose them to Prometheus."""

    _valid_name_regex = r"[a-zA-Z_:][a-zA-Z0-9_:]*"

    def __init__(self, registry: Optional[CollectorRegistry] = REGISTRY):
        """
        Initialize a new instance of SolverMetrics.

        :param registry: Prometheus registry where the counters are registered. None means \
                         the counters are not registered anywhere.
        """
        self._registry = registry
        self._metrics = {}
        self._metrics_lock = Lock()
        self._server_address = None

    def __str__(self) -> str:
        """Summarize SolverMetrics as a string."""
        return "SolverMetrics(%d metrics, exporter=%s)" % (
            len(self._metrics), self._server_address)

    @property
    def metrics(self) -> dict:
        """Return the metrics recorded so far."""
        return self._metrics

    def serve(self, host: str, port: int):
        """
        Start the Prometheus HTTP exporter.

        :param host: Address where the exporter will be accessible.
        :param port: Port where the exporter will be accessible.
        :return: None
        """
        if self._registry is None:
            raise ValueError("cannot serve metrics which are not registered")
        start_http_server(port=port, addr=host, registry=self._registry)
        self._server_address = "%s:%d" % (host, port)

    def _adjust_metric_name(self, name: str) -> str:
        orig_name = name
        name = name.replace(".", ":")
        if not re.fullmatch(self._valid_name_regex, name):
            raise ValueError("%s is an invalid event name" % orig_name)
        return name

    def submit_event(self, key: str, value: Union[int, float, bool], description: str = ""):
        """
        Register an event by a key and with a numeric value.

        :param key: Identifier of the event. Dots are allowed and become colons.
        :param value: Value of the event.
        :param description: Description of the event. Only used when the metric is new.
        :return: None
        """
        key = self._adjust_metric_name(key)
        with self._metrics_lock:
            if key not in self._metrics:
                self._metrics[key] = ConfidentCounter(
                    key, description, registry=self._registry)
            metric = self._metrics[key]
        metric += float(value)

    def summary(self) -> Dict[str, Dict[str, float]]:
        """Return the summaries of all the metrics sorted by name."""
        with self._metrics_lock:
            items = sorted(self._metrics.items())
        return {key: metric.summary() for key, metric in items}


def solver_metrics() -> SolverMetrics:
    """Return the process-wide SolverMetrics instance, creating it on the first call."""
    global _solver_metrics
    with _solver_metrics_lock:
        if _solver_metrics is None:
            _solver_metrics = SolverMetrics()
    return _solver_metrics


def record_event(key: str, value: Union[int, float, bool], description: str = ""):
    """Register an event by a key and with a numeric value.

    If the key does not exist, it creates a new metric.

    :param key: Identifier of the event, e.g. "heat.substeps".
    :param value: Value of the event.
    :param description: Additional description of the event. Only used when creating a new event.
    :return: None
    """
    solver_metrics().submit_event(key=key, value=value, description=description)
