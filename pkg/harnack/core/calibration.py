"""Empirical calibration of the structural constant C and the smallness threshold kappa."""
import logging
import math
from typing import Iterable, List, Optional, Sequence, Tuple

from modelforge import Model
import numpy

from harnack.core import __version__
from harnack.core.checks import ClaimCheck, GronwallCheck, LiYauCheck
from harnack.core.manager import ScenarioContext
from harnack.core.metrics import record_event
from harnack.core.scenario import Scenario

DEFAULT_GRID = numpy.logspace(-3, 3, 61)
CALIBRATED_CHECKS = (GronwallCheck, ClaimCheck, LiYauCheck)


class CalibrationError(RuntimeError):
    """No constant on the grid makes the suite pass."""


class CalibrationModel(Model):
    """
    Calibrated (C, kappa) for one (n, p, alpha) together with the per-member results.
    """

    NAME = "harnack-calibration"
    VENDOR = "harnack"
    DESCRIPTION = "Structural constant C and smallness threshold kappa of the Li-Yau bound."

    def construct(self, C: float, kappa: float, n: int, p: float, alpha: float,
                  grid: Sequence[float], members: Sequence[str], k: Sequence[float],
                  C_min: Sequence[float]) -> "CalibrationModel":
        """
        Fill the model.

        :param C: Calibrated structural constant.
        :param kappa: Calibrated smallness threshold.
        :param n: Dimension.
        :param p: Curvature exponent.
        :param alpha: Gradient weight.
        :param grid: Scanned values of C.
        :param members: Scenario ids of the suite.
        :param k: k(p, 1) of every member.
        :param C_min: Smallest passing C of every member, NaN if none passes.
        :return: self
        """
        self.C = float(C)
        self.kappa = float(kappa)
        self.n = int(n)
        self.p = float(p)
        self.alpha = float(alpha)
        self.grid = numpy.asarray(grid, dtype=float)
        self.members = list(members)
        self.k = numpy.asarray(k, dtype=float)
        self.C_min = numpy.asarray(C_min, dtype=float)
        return self

    def dump(self) -> str:
        """
        Satisfy the upstream's abstract method.

        :return: summary text of the model.
        """
        return "C=%g kappa=%g for n=%d p=%g alpha=%g over %d members" % (
            self.C, self.kappa, self.n, self.p, self.alpha, len(self.members))

    def save(self, output, series: Optional[str] = "harnack", deps: Iterable = tuple(),
             create_missing_dirs: bool = True):
        """
        Serialize the model to a file.

        :param output: Path to the file or a file object.
        :param series: Name of the model series.
        :param deps: List of the dependencies.
        :param create_missing_dirs: create missing directories in output path if the output is a \
                                    path.
        :return: self
        """
        return super().save(output=output, series=series, deps=deps,
                            create_missing_dirs=create_missing_dirs)

    def matches(self, n: int, p: float, alpha: float) -> bool:
        """Return True if the constants were calibrated for these parameters."""
        return n == self.n and math.isclose(p, self.p) and math.isclose(alpha, self.alpha)

    @property
    def admitted(self) -> numpy.ndarray:
        return numpy.isfinite(self.C_min)

    def summary(self) -> dict:
        """Return the constants and the members as plain values for the reports."""
        return {
            "C": self.C, "kappa": self.kappa, "n": self.n, "p": self.p, "alpha": self.alpha,
            "members": [{"id": member, "k": float(k), "C_min": float(c)}
                        for member, k, c in zip(self.members, self.k, self.C_min)],
        }

    def _generate_tree(self) -> dict:
        return {"C": self.C, "kappa": self.kappa, "n": self.n, "p": self.p,
                "alpha": self.alpha, "grid": self.grid, "members": self.members, "k": self.k,
                "C_min": self.C_min}

    def _load_tree(self, tree: dict):
        self.construct(C=tree["C"], kappa=tree["kappa"], n=tree["n"], p=tree["p"],
                       alpha=tree["alpha"], grid=tree["grid"], members=tree["members"],
                       k=tree["k"], C_min=tree["C_min"])


def passes(context: ScenarioContext) -> Tuple[bool, float]:
    """
    Evaluate the calibrated checks.

    :return: Whether every report passes and the worst relative margin.
    """
    worst = math.inf
    ok = True
    for cls in CALIBRATED_CHECKS:
        for report in cls(context).run():
            ok &= report.passed
            worst = min(worst, report.worst_margin)
    return ok, worst


def smallest_passing(context: ScenarioContext, grid: Sequence[float]
                     ) -> Tuple[Optional[float], float]:
    """
    Find the smallest C on the ascending grid which passes with kappa = k(p, 1) of the member.

    All three checks only get easier as C grows, so the search bisects the grid.

    :return: The constant or None and the worst margin at the largest grid value.
    """
    kappa = context.k_unit
    ok, worst = passes(context.with_constants(grid[-1], kappa))
    if not ok:
        return None, worst
    low, high = -1, len(grid) - 1
    while high - low > 1:
        middle = (low + high) // 2
        if passes(context.with_constants(grid[middle], kappa))[0]:
            high = middle
        else:
            low = middle
    return float(grid[high]), worst


def calibrate_constants(scenarios: Sequence[Scenario], grid: Sequence[float] = DEFAULT_GRID,
                        threads: int = 1) -> CalibrationModel:
    """
    Calibrate (C, kappa) on a suite of scenarios which share (n, p, alpha).

    Every member gets the smallest grid C which passes with kappa equal to its own k(p, 1). \
    C of the suite is the largest of them over the admitted members and kappa is the largest \
    admitted k(p, 1).

    :param scenarios: Suite of scenarios with analytically known curvature.
    :param grid: Candidate values of C.
    :param threads: Number of threads for the curvature norms.
    :return: CalibrationModel.
    :raise CalibrationError: if a member with k(p, 1) <= kappa passes for no C on the grid.
    """
    log = logging.getLogger("calibration")
    if not scenarios:
        raise ValueError("the calibration suite is empty")
    grid = numpy.sort(numpy.asarray(grid, dtype=float))
    if len(grid) == 0 or grid[0] <= 0:
        raise ValueError("the grid of C must be non-empty and positive")
    keys = {(s.liyau["n"], float(s.liyau["p"]), float(s.liyau["alpha"])) for s in scenarios}
    if len(keys) != 1:
        raise ValueError("the suite mixes (n, p, alpha): %s" % sorted(keys))
    (n, p, alpha), = keys
    ids, ks, c_mins, worst = [], [], [], []  # type: List[str], List[float], List[float], list
    for scenario in sorted(scenarios, key=lambda s: s.id):
        context = ScenarioContext(scenario, workers=threads)
        c_min, margin = smallest_passing(context, grid)
        log.info("%s: k(p, 1)=%.6g, smallest C=%s", scenario.id, context.k_unit, c_min)
        record_event("calibration.members", 1)
        ids.append(scenario.id)
        ks.append(context.k_unit)
        c_mins.append(math.nan if c_min is None else c_min)
        worst.append(margin)
    ks, c_mins = numpy.array(ks), numpy.array(c_mins)
    admitted = numpy.isfinite(c_mins)
    if not admitted.any():
        index = int(numpy.argmin(worst))
        raise CalibrationError(
            "no C in [%g, %g] passes any member; worst offender %s with margin %.6g at C=%g" %
            (grid[0], grid[-1], ids[index], worst[index], grid[-1]))
    kappa = float(ks[admitted].max())
    rejected = numpy.flatnonzero(~admitted & (ks <= kappa))
    if len(rejected):
        index = int(rejected[numpy.argmin(numpy.array(worst)[rejected])])
        raise CalibrationError(
            "%s has k(p, 1)=%.6g <= kappa=%.6g but fails for every C up to %g; "
            "worst margin %.6g" % (ids[index], ks[index], kappa, grid[-1], worst[index]))
    for index in numpy.flatnonzero(~admitted):
        log.warning("%s is excluded: k(p, 1)=%.6g and no C on the grid passes", ids[index],
                    ks[index])
    C = float(c_mins[admitted].max())
    model = CalibrationModel().construct(C=C, kappa=kappa, n=n, p=p, alpha=alpha, grid=grid,
                                         members=ids, k=ks, C_min=c_mins)
    model.derive([int(part) for part in __version__.split(".")])
    log.info("calibrated %s", model.dump())
    return model
