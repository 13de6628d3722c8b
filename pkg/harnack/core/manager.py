import copy
import logging
from concurrent.futures import ThreadPoolExecutor
import threading
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy

from harnack.core import __version__
from harnack.core.checks import registry
from harnack.core.curvature import k_norm, ric_minus_field, sample_centers
from harnack.core.geometry import ball, Ball, build_manifold, DiscreteManifold
from harnack.core.heat import j_from_w, KernelCache, ScalarTimeField, solve_heat, solve_w_direct
from harnack.core.metrics import record_event
from harnack.core.scenario import DEFAULT_C, DEFAULT_KAPPA, Scenario
from harnack.core.slogging import log_duration

LEMMA_CHECKS = ("curvature", "volume_doubling", "sobolev", "gaussian_bound", "cutoff",
                "scaling")
# numerical failures inside one check which must not abort the run
CHECK_ERRORS = (ArithmeticError, LookupError, RuntimeError, ValueError,
                numpy.linalg.LinAlgError)


def initial_data(scenario: Scenario, m: DiscreteManifold, origin: int) -> numpy.ndarray:
    """
    Build the positive initial value of the heat solve.

    :param scenario: Scenario with the "initial" section.
    :param m: The manifold.
    :param origin: Center O.
    :return: (N,) positive values.
    """
    initial = scenario.initial
    kind = initial["kind"]
    if kind == "gaussian":
        width = initial["width_time"]
        d2 = m.distances_from(origin) ** 2
        return numpy.exp(-d2 / (4 * width)) / (4 * numpy.pi * width) + initial["floor"]
    if kind == "constant":
        return numpy.full(m.size, float(initial["value"]))
    if kind == "eigenfunction":
        (lx, ly), (mx, my) = m.spec.side_lengths, initial["mode"]
        x, y = m.coordinates.T
        return initial["offset"] + numpy.sin(2 * numpy.pi * (mx * x / lx + my * y / ly))
    raise ValueError("unsupported initial data kind %r" % kind)


class ScenarioContext:
    """
    Lazily computed fields of one scenario shared by all its checks.

    Every field is computed once; `with_constants()` returns a view with other C and kappa \
    which shares the computed fields because none of them depends on the constants.
    """

    _log = logging.getLogger("ScenarioContext")

    def __init__(self, scenario: Scenario, C: float = DEFAULT_C, kappa: float = DEFAULT_KAPPA,
                 workers: int = 1, kernel_cache: Optional[KernelCache] = None,
                 constants_source: str = "default"):
        """
        Initialize a new instance of ScenarioContext.

        :param scenario: Validated scenario.
        :param C: Structural constant unless the scenario fixes it.
        :param kappa: Smallness threshold unless the scenario fixes it.
        :param workers: Number of threads for the curvature norms.
        :param kernel_cache: Kernel stack cache of the Duhamel solver.
        :param constants_source: Where C and kappa come from, recorded in the reports.
        """
        self.scenario = scenario
        self.params = scenario.params(C, kappa)
        self.constants_source = "scenario" if scenario.has_fixed_constants else \
            constants_source
        self.workers = workers
        self.kernel_cache = kernel_cache
        self.timings = {}  # type: Dict[str, float]
        self._values = {}
        self._lock = threading.RLock()

    def __str__(self) -> str:
        """Summarize ScenarioContext as a string."""
        return "ScenarioContext(%s, C=%g, kappa=%g, computed=%s)" % (
            self.scenario.id, self.params.C, self.params.kappa, sorted(self._values))

    def with_constants(self, C: float, kappa: float,
                       constants_source: str = "calibration") -> "ScenarioContext":
        """Return a context with other constants which shares the computed fields."""
        other = copy.copy(self)
        other.params = self.scenario.params(C, kappa)
        other.constants_source = "scenario" if self.scenario.has_fixed_constants else \
            constants_source
        return other

    def _lazy(self, key: str, builder: Callable):
        with self._lock:
            if key not in self._values:
                with log_duration(self._log, "%s %s" % (self.scenario.id, key)) as elapsed:
                    self._values[key] = builder()
                self.timings[key] = elapsed[0]
                record_event("manager.stage.%s.seconds" % key, elapsed[0])
            return self._values[key]

    @property
    def manifold(self) -> DiscreteManifold:
        return self._lazy("manifold", lambda: build_manifold(self.scenario.spec))

    @property
    def origin(self) -> int:
        return self._lazy("origin",
                          lambda: self.manifold.nearest_vertex(self.scenario.origin_chart))

    @property
    def times(self) -> numpy.ndarray:
        return self._lazy("times", self.scenario.times)

    @property
    def V(self) -> numpy.ndarray:
        """|Ric^-| on every vertex."""
        return self._lazy("curvature_field", lambda: ric_minus_field(
            self.scenario.spec, self.manifold, norm=self.scenario.liyau["curvature_norm"]))

    @property
    def curvature_centers(self) -> numpy.ndarray:
        return self._lazy("curvature_centers", lambda: sample_centers(
            self.manifold, self.scenario.solver["curvature_samples"]))

    def _k(self, r: float) -> float:
        return k_norm(self.manifold, self.V, self.params.p, r, centers=self.curvature_centers,
                      workers=self.workers).value

    @property
    def k_unit(self) -> float:
        """k(p, 1), the quantity of the smallness hypothesis."""
        return self._lazy("k_unit", lambda: self._k(1.0))

    @property
    def k_value(self) -> float:
        """k(p, r) at the scenario radius."""
        if self.params.r == 1:
            return self.k_unit
        return self._lazy("k_scale", lambda: self._k(self.params.r))

    @property
    def hypothesis_satisfied(self) -> bool:
        return self.k_unit <= self.params.kappa

    @property
    def negative_control(self) -> bool:
        """Marked scenarios or a broken smallness hypothesis excuse the hypothesis checks."""
        return self.scenario.negative_control or not self.hypothesis_satisfied

    @property
    def w_ball(self) -> Ball:
        return self._lazy("w_ball", lambda: ball(self.manifold, self.origin, self.params.r))

    @property
    def u(self) -> ScalarTimeField:
        return self._lazy("heat", lambda: solve_heat(
            self.manifold, initial_data(self.scenario, self.manifold, self.origin), self.times,
            max_substep=self.scenario.solver["max_substep_time"]))

    @property
    def w(self) -> ScalarTimeField:
        solver = self.scenario.solver
        return self._lazy("w", lambda: solve_w_direct(
            self.manifold, self.w_ball, self.V, self.params.a, self.times,
            max_substep=solver["max_substep_time"], dt_floor=solver["dt_floor_time"]))

    @property
    def J(self) -> ScalarTimeField:
        return self._lazy("J", lambda: j_from_w(self.w, self.params.a))

    def constants(self) -> dict:
        """Return the resolved constants of the run."""
        params = self.params
        result = dict(params._asdict(), source=self.constants_source)
        if 0 < params.alpha < 1:
            result.update(delta=params.delta, a=params.a)
        return result

    def provenance(self) -> dict:
        """Return versions, seed and grid; never timings, the report must be reproducible."""
        spec = self.scenario.spec
        return {
            "version": __version__,
            "numpy": numpy.__version__,
            "seed": self.scenario.seed,
            "source": self.scenario.source,
            "spec": dict(spec._asdict()),
            "fingerprint": spec.fingerprint(),
            "vertices": self.manifold.size,
        }


class CheckOutcome(dict):
    """Status and reports of one check on one scenario."""

    PASSED = "passed"
    FAILED = "failed"
    FLAGGED = "flagged"
    MISSED = "missed"
    ERROR = "error"

    @property
    def counts_as_failure(self) -> bool:
        """Negative controls never fail the run."""
        return self["status"] in (self.FAILED, self.ERROR, self.MISSED) and \
            not self["negative_control"]


def evaluate_check(context: ScenarioContext, name: str) -> CheckOutcome:
    """
    Run one registered check on the scenario context and classify the outcome.

    Only hypothesis-bearing checks are excused when the scenario breaks the smallness \
    hypothesis; a report may also carry its own broken hypothesis (the classical bound). \
    Errors are never excused.

    :param context: Scenario context.
    :param name: Registered check name.
    :return: CheckOutcome with "status", "negative_control", "reports" and "error".
    """
    log = logging.getLogger("manager")
    cls = registry()[name]
    expected_to_flag = cls.negative_control
    excused = cls.hypothesis_bearing and context.negative_control
    try:
        reports = cls(context).run()
    except CHECK_ERRORS as e:
        log.error("%s/%s raised %s: %s", context.scenario.id, name, type(e).__name__, e)
        record_event("manager.check.errors", 1)
        return CheckOutcome(status=CheckOutcome.ERROR, negative_control=False, reports=[],
                            error="%s: %s" % (type(e).__name__, e))
    for report in reports:
        if excused:
            report.hypothesis_satisfied = False
        report.negative_control = report.negative_control or expected_to_flag or excused or \
            not report.hypothesis_satisfied
    failing = [report for report in reports if not report.passed]
    if expected_to_flag:
        status = CheckOutcome.FLAGGED if failing else CheckOutcome.MISSED
        # a miss is only excused when the scenario breaks the hypothesis
        negative = excused
    elif not failing:
        status, negative = CheckOutcome.PASSED, excused
    elif all(report.negative_control for report in failing):
        status, negative = CheckOutcome.FLAGGED, True
    else:
        status, negative = CheckOutcome.FAILED, False
    record_event("manager.check.violations",
                 sum(report.violation_count for report in reports))
    log.info("%s/%s: %s", context.scenario.id, name, status)
    return CheckOutcome(status=status, negative_control=negative, reports=reports, error=None)


class ScenarioResult(dict):
    """Everything the report needs about one scenario."""

    @property
    def failed(self) -> bool:
        return any(outcome.counts_as_failure for outcome in self["checks"].values())


class ScenarioRunner:
    """
    Runs the checks of several scenarios, in parallel over the scenarios.

    The constants come from the scenario, then from the calibration model matching (n, p, alpha), \
    then from the defaults.
    """

    _log = logging.getLogger("ScenarioRunner")

    def __init__(self, calibrations: Sequence["harnack.core.calibration.CalibrationModel"] = (),
                 threads: int = 1, deterministic: bool = False,
                 kernel_cache: Optional[KernelCache] = None,
                 only: Optional[Sequence[str]] = None):
        """
        Initialize a new instance of ScenarioRunner.

        :param calibrations: Calibrated constants, one model per (n, p, alpha).
        :param threads: Number of worker threads.
        :param deterministic: Use a single worker everywhere.
        :param kernel_cache: Kernel stack cache shared by the scenarios.
        :param only: Restrict the checks to these names.
        """
        self.calibrations = list(calibrations)
        self.threads = 1 if deterministic else max(1, threads)
        self.kernel_cache = kernel_cache
        self.only = None if only is None else frozenset(only)

    def __str__(self) -> str:
        """Summarize ScenarioRunner as a string."""
        return "ScenarioRunner(threads=%d, calibrations=[%s])" % (
            self.threads, "; ".join(model.dump() for model in self.calibrations))

    def resolve_constants(self, scenario: Scenario) -> Tuple[float, float, str]:
        """Return (C, kappa, source) for the scenario before its own overrides."""
        for model in self.calibrations:
            if model.matches(scenario.liyau["n"], scenario.liyau["p"], scenario.liyau["alpha"]):
                return model.C, model.kappa, "calibration"
        return DEFAULT_C, DEFAULT_KAPPA, "default"

    def context(self, scenario: Scenario) -> ScenarioContext:
        """Create the lazily evaluated context of the scenario with the resolved constants."""
        C, kappa, source = self.resolve_constants(scenario)
        return ScenarioContext(scenario, C, kappa, workers=self.threads,
                               kernel_cache=self.kernel_cache, constants_source=source)

    def checks_of(self, scenario: Scenario) -> List[str]:
        return [name for name in scenario.checks if self.only is None or name in self.only]

    def run(self, scenario: Scenario) -> ScenarioResult:
        """
        Run all the requested checks of one scenario.

        :param scenario: Validated scenario.
        :return: ScenarioResult.
        """
        context = self.context(scenario)
        self._log.info("running %s", context)
        outcomes = {}
        with log_duration(self._log, "scenario %s" % scenario.id) as elapsed:
            for name in self.checks_of(scenario):
                with log_duration(self._log, "%s/%s" % (scenario.id, name)) as check_elapsed:
                    outcomes[name] = evaluate_check(context, name)
                context.timings["check.%s" % name] = check_elapsed[0]
        context.timings["total"] = elapsed[0]
        record_event("manager.scenarios", 1)
        return ScenarioResult(
            id=scenario.id, description=scenario.description, constants=context.constants(),
            k={"k_unit": context.k_unit, "k_scale": context.k_value},
            hypothesis_satisfied=context.hypothesis_satisfied,
            negative_control=context.negative_control, checks=outcomes,
            provenance=context.provenance(), timings=dict(context.timings))

    def run_all(self, scenarios: Iterable[Scenario]) -> List[ScenarioResult]:
        """
        Run the scenarios on the worker threads.

        :return: Results sorted by scenario id, independent of the completion order.
        """
        scenarios = list(scenarios)
        if self.threads == 1 or len(scenarios) == 1:
            results = [self.run(scenario) for scenario in scenarios]
        else:
            with ThreadPoolExecutor(max_workers=self.threads) as executor:
                results = list(executor.map(self.run, scenarios))
        return sorted(results, key=lambda result: result["id"])

