"""Checks run on a scenario: the main bound, the proof ingredients and the lemmas."""
import logging
from typing import Dict, List, Type, Union

import numpy
import stringcase

from harnack.core.curvature import rescaling_diagnostic, sample_centers
from harnack.core.geometry import ball, measure_anisotropy
from harnack.core.heat import dirichlet_heat_kernel, solve_w_direct, solve_w_duhamel
from harnack.core.lemmas import (build_cutoff, check_sobolev, check_volume_doubling,
                                 fit_gaussian_bound, LemmaReport, MIN_GAUSSIAN_SAMPLES,
                                 sobolev_ratio, sobolev_test_suite)
from harnack.core.liyau import (BoundReport, check_classical, check_li_yau, gronwall_envelope,
                                j_lower_bound, parabolic_rescale, structural_margin,
                                structural_residual)

Report = Union[BoundReport, LemmaReport]
CORRUPTION_AMPLITUDE = 0.1
SCALING_FACTORS = (0.5, 1.0, 2.0)
SCALING_TOLERANCE = 1e-12
SCALING_CENTERS = 64
# strictly positive fields must stay at or above the smallest normal float
POSITIVE_FLOOR = float(numpy.finfo(float).tiny)
_registry = {}  # type: Dict[str, Type["Check"]]


class Check:
    """
    Interface of all the checks. A check reads the lazily computed fields of a scenario \
    context and returns one or more reports.

    `negative_control` marks checks which are expected to flag violations.
    `hypothesis_bearing` marks checks which are excused when the scenario breaks the \
    smallness hypothesis.
    """

    version = None  # type: int
    name = None  # type: str
    description = None  # type: str
    negative_control = False
    hypothesis_bearing = False

    def __init__(self, context: "harnack.core.manager.ScenarioContext"):
        """
        Initialize a new instance of Check.

        :param context: Scenario context with the manifold, the solutions and the constants.
        """
        for attr_name in ("version", "name", "description"):
            if getattr(self, attr_name) is None:
                raise ValueError("%s attribute is expected to be set for class %s" % (
                    attr_name, type(self)))
        self.context = context
        self._log = logging.getLogger(type(self).__name__)

    def run(self) -> List[Report]:
        """
        Evaluate the check.

        :return: Reports, each with its own name.
        """
        raise NotImplementedError


def register_check(cls: Type[Check]) -> Type[Check]:
    """Add the check class to the registry under the snake case name of the class."""
    cls.name = stringcase.snakecase(cls.__name__[:-len("Check")])
    _registry[cls.name] = cls
    return cls


def registry() -> Dict[str, Type[Check]]:
    """Return all the registered checks by name."""
    return dict(_registry)


def _origin_record(context, **fields) -> dict:
    x, y = context.manifold.coordinates[context.origin]
    return dict(fields, x=float(x), y=float(y))


@register_check
class LiYauCheck(Check):
    version = 1
    description = "Main bound with the closed-form lower bound of J on B(O, r/2)."
    hypothesis_bearing = True

    def run(self) -> List[Report]:
        ctx = self.context
        solver = ctx.scenario.solver
        return [check_li_yau(ctx.manifold, ctx.u, ctx.params, ctx.k_unit, ctx.origin, J=ctx.J,
                             t_min=ctx.scenario.t_min, t_max=solver["t_max_time"],
                             relative_tolerance=solver["relative_tolerance"],
                             scheme_error=solver["scheme_error"])]


def checkerboard(context) -> numpy.ndarray:
    """Return +1/-1 alternating over the chart grid, 0 on the pole."""
    n1, n2 = context.manifold.shape
    i, j = numpy.indices((n1, n2))
    pattern = numpy.zeros(context.manifold.size)
    pattern[:n1 * n2] = (1 - 2 * ((i + j) % 2)).ravel()
    return pattern


@register_check
class LiYauCorruptedCheck(Check):
    version = 1
    description = "The main bound on u multiplied by a sign-flipping perturbation must flag."
    hypothesis_bearing = True
    negative_control = True

    def run(self) -> List[Report]:
        ctx = self.context
        solver = ctx.scenario.solver
        corrupted = ctx.u.replace_values(
            ctx.u.values * (1 + CORRUPTION_AMPLITUDE * checkerboard(ctx)), "heat+corruption")
        report = check_li_yau(ctx.manifold, corrupted, ctx.params, ctx.k_unit, ctx.origin,
                              t_min=ctx.scenario.t_min, t_max=solver["t_max_time"],
                              relative_tolerance=solver["relative_tolerance"],
                              scheme_error=solver["scheme_error"])
        report.name = "li_yau_corrupted"
        report.negative_control = True
        return [report]


@register_check
class ClassicalCheck(Check):
    version = 1
    description = "Classical bound under Ric >= -K, the optimal one when K = 0."

    def run(self) -> List[Report]:
        ctx = self.context
        solver = ctx.scenario.solver
        K = ctx.scenario.liyau["classical_K"]
        report = check_classical(ctx.manifold, ctx.u, K, ctx.scenario.classical_alpha,
                                 ctx.origin, radius=ctx.params.r / 2, t_min=ctx.scenario.t_min,
                                 t_max=solver["t_max_time"],
                                 relative_tolerance=solver["relative_tolerance"],
                                 scheme_error=solver["scheme_error"])
        lowest = float(ctx.V.max())
        report.hypothesis_satisfied = bool(lowest <= K * (1 + 1e-9) + 1e-12)
        report.diagnostics["max_ric_minus"] = lowest
        return [report]


@register_check
class WSolversCheck(Check):
    version = 1
    description = "Direct implicit w solve against the Duhamel Picard solve."

    def run(self) -> List[Report]:
        ctx = self.context
        solver = ctx.scenario.solver
        region = ball(ctx.manifold, ctx.origin, solver["duhamel_radius_length"])
        args = (ctx.manifold, region, ctx.V, ctx.params.a, ctx.times)
        kwargs = {"max_substep": solver["max_substep_time"], "dt_floor": solver["dt_floor_time"]}
        direct = solve_w_direct(*args, **kwargs)
        duhamel = solve_w_duhamel(
            *args, tolerance=solver["picard_tolerance"],
            max_iterations=solver["picard_max_iterations"], mode=solver["duhamel_mode"],
            cache=ctx.kernel_cache, **kwargs)
        members = region.members
        reference = direct.values[:, members]
        difference = numpy.abs(duhamel.values[:, members] - reference) / reference
        report = BoundReport("w_solvers", members, ctx.manifold.coordinates[members], ctx.times,
                             difference, solver["cross_tolerance"], variant="sup_relative")
        stats = duhamel.stats
        report.diagnostics = {
            "sup_relative_difference": float(difference.max()),
            "picard_iterations": stats["iterations"],
            "slab": stats["slab"],
            "mode": stats["mode"],
            "dt": stats["dt"],
            "lag_split": stats["lag_split"],
        }
        monotone = LemmaReport("picard_monotone", [_origin_record(
            ctx, lhs=0.0 if stats["monotone"] else 1.0, rhs=0.0)])
        return [report, monotone]


@register_check
class MaximumPrincipleCheck(Check):
    version = 1
    description = "w >= 1, 0 < J <= 1, positive heat solutions, nonincreasing kernel mass."

    def run(self) -> List[Report]:
        ctx = self.context
        members = ctx.w_ball.members
        w = ctx.w.values[:, members]
        J = ctx.J.values[:, members]
        kernel = dirichlet_heat_kernel(ctx.manifold, ctx.w_ball, ctx.origin, ctx.times,
                                       max_substep=ctx.scenario.solver["max_substep_time"])
        mass = kernel.mass(ctx.manifold.weights)
        increase = float(numpy.diff(mass).max()) if len(mass) > 1 else 0.0
        records = [
            _origin_record(ctx, property="w_at_least_one", lhs=float(1 - w.min()), rhs=1e-8),
            _origin_record(ctx, property="J_at_most_one", lhs=float(J.max()), rhs=1.0),
            _origin_record(ctx, property="J_positive", lhs=POSITIVE_FLOOR, rhs=float(J.min())),
            _origin_record(ctx, property="heat_positive", lhs=POSITIVE_FLOOR,
                           rhs=float(ctx.u.values.min())),
            _origin_record(ctx, property="kernel_mass_at_most_one", lhs=float(mass.max()),
                           rhs=1.0 + 1e-12),
            _origin_record(ctx, property="kernel_mass_nonincreasing", lhs=increase, rhs=1e-12),
        ]
        report = LemmaReport("maximum_principle", records)
        # observed on the built-in models, not implied by the equation
        report.diagnostics["J_nonincreasing_in_time"] = bool(
            (numpy.diff(J, axis=0) <= 1e-12).all())
        report.diagnostics["heat_min"] = float(ctx.u.values.min())
        return [report]


@register_check
class GronwallCheck(Check):
    version = 1
    description = "Running sup of w against the closed-form exponential envelope."
    hypothesis_bearing = True

    def run(self) -> List[Report]:
        ctx = self.context
        w = ctx.w.values[:, ctx.w_ball.members]
        running_sup = numpy.maximum.accumulate(w.max(axis=1))
        envelope = gronwall_envelope(ctx.times, ctx.k_value, ctx.params)
        origin = numpy.array([ctx.origin])
        report = BoundReport("gronwall", origin, ctx.manifold.coordinates[origin], ctx.times,
                             running_sup[:, None], envelope[:, None], variant="running_sup")
        report.envelope = running_sup
        report.diagnostics = {"k": ctx.k_value, "w_deviation": float(numpy.abs(w - 1).max()),
                              "final_envelope": float(envelope[-1])}
        return [report]


@register_check
class ClaimCheck(Check):
    version = 1
    description = "Closed-form lower bound of J below the solved J, structural inequality."
    hypothesis_bearing = True

    def run(self) -> List[Report]:
        ctx = self.context
        members = ctx.w_ball.members
        J = ctx.J.values[:, members]
        lower = numpy.broadcast_to(j_lower_bound(ctx.times, ctx.params)[:, None], J.shape)
        claim = BoundReport("claim", members, ctx.manifold.coordinates[members], ctx.times,
                            lower, J, tolerance=1e-12, variant="lower_bound")
        margin = structural_margin(J, ctx.params)
        residual = structural_residual(ctx.params.alpha, ctx.params.n)
        structural = LemmaReport("structural", [
            _origin_record(ctx, property="structural_margin", lhs=float(-margin.min()),
                           rhs=1e-14),
            _origin_record(ctx, property="identity_residual", lhs=abs(residual), rhs=1e-14),
        ])
        return [claim, structural]


@register_check
class CurvatureCheck(Check):
    version = 1
    description = "Integral curvature norms, the smallness hypothesis and the rescaling ratio."
    hypothesis_bearing = True

    def run(self) -> List[Report]:
        ctx = self.context
        p = ctx.params.p
        report = LemmaReport("curvature", [_origin_record(
            ctx, property="hypothesis", lhs=ctx.k_unit, rhs=ctx.params.kappa)])
        report.diagnostics = {
            "k_unit": ctx.k_unit,
            "k_scale": ctx.k_value,
            "max_ric_minus": float(ctx.V.max()),
            "norm": ctx.scenario.liyau["curvature_norm"],
            "rescaling": rescaling_diagnostic(ctx.manifold, ctx.V, p,
                                              centers=ctx.curvature_centers),
        }
        if ctx.manifold.spec.kind == "flat_torus":
            report.diagnostics["graph_anisotropy"] = measure_anisotropy(ctx.manifold,
                                                                        ctx.origin)
        return [report]


@register_check
class VolumeDoublingCheck(Check):
    version = 1
    description = "Volume ratio of nested balls against the factor 2."
    hypothesis_bearing = True

    def run(self) -> List[Report]:
        ctx = self.context
        lemmas = ctx.scenario.lemmas
        if lemmas["doubling_centers"] == "origin":
            centers = [ctx.origin]
        else:
            centers = sample_centers(ctx.manifold, 8)
        pairs = [tuple(pair) for pair in lemmas["doubling_radii_length"]]
        return [check_volume_doubling(ctx.manifold, centers, pairs)]


@register_check
class SobolevCheck(Check):
    version = 1
    description = "Sobolev ratio over radial and seeded random bumps."
    hypothesis_bearing = True

    def run(self) -> List[Report]:
        ctx = self.context
        lemmas = ctx.scenario.lemmas
        r = lemmas["sobolev_radius_length"]
        suite = sobolev_test_suite(ctx.manifold, ctx.origin, r, seed=ctx.scenario.seed,
                                   random_count=lemmas["sobolev_random_functions"])
        report = check_sobolev(ctx.manifold, ctx.origin, r, suite, lemmas["sobolev_bound"])
        region = ball(ctx.manifold, ctx.origin, r)
        f = suite["radial_2"]
        lhs, rhs = sobolev_ratio(ctx.manifold, region, f)
        scaled_lhs, scaled_rhs = sobolev_ratio(ctx.manifold, region, 3 * f)
        report.diagnostics["scale_invariance_error"] = abs(scaled_lhs / scaled_rhs - lhs / rhs)
        return [report]


@register_check
class GaussianBoundCheck(Check):
    version = 1
    description = "Gaussian upper bound fitted to the Dirichlet heat kernel."
    hypothesis_bearing = True

    def run(self) -> List[Report]:
        ctx = self.context
        lemmas = ctx.scenario.lemmas
        t1, t2 = lemmas["gaussian_t_range_time"]
        region = ball(ctx.manifold, ctx.origin, lemmas["gaussian_radius_length"])
        times = numpy.concatenate([[0.0], numpy.linspace(t1, t2, 5)])
        kernel = dirichlet_heat_kernel(ctx.manifold, region, ctx.origin, times,
                                       max_substep=lemmas["gaussian_dt_time"])
        fit = fit_gaussian_bound(ctx.manifold, [kernel], (0.0, t2),
                                 lemmas["gaussian_d2_over_t_max"])
        records = [_origin_record(ctx, property="samples", lhs=float(MIN_GAUSSIAN_SAMPLES),
                                  rhs=float(fit.samples))]
        reference = lemmas["gaussian_reference_C2"]
        if reference is not None:
            records.append(_origin_record(ctx, property="C2_deviation",
                                          lhs=abs(fit.C2 - reference) / reference,
                                          rhs=lemmas["gaussian_tolerance"]))
        report = LemmaReport("gaussian_bound", records)
        report.diagnostics = dict(fit._asdict())
        return [report]


@register_check
class CutoffCheck(Check):
    version = 1
    description = "Plateau cutoff function and its measured constant."
    hypothesis_bearing = True

    def run(self) -> List[Report]:
        ctx = self.context
        lemmas = ctx.scenario.lemmas
        r = lemmas["cutoff_radius_length"]
        cutoff = build_cutoff(ctx.manifold, ctx.origin, r, lemmas["cutoff_degree"])
        distances = ctx.manifold.distances_from(ctx.origin)
        plateau = distances <= r / 2
        outside = distances > r
        records = [
            _origin_record(ctx, property="c_star", lhs=cutoff.c_star,
                           rhs=lemmas["cutoff_bound"]),
            _origin_record(ctx, property="plateau", lhs=float(
                numpy.abs(cutoff.phi[plateau] - 1).max()), rhs=0.0),
            _origin_record(ctx, property="support", lhs=float(
                numpy.abs(cutoff.phi[outside]).max(initial=0)), rhs=0.0),
            _origin_record(ctx, property="range", lhs=float(
                max(cutoff.phi.max() - 1, -cutoff.phi.min())), rhs=1e-12),
        ]
        report = LemmaReport("cutoff", records)
        report.diagnostics["c_star"] = cutoff.c_star
        if 2 * r <= 1:
            try:
                report.diagnostics["c_star_double_radius"] = build_cutoff(
                    ctx.manifold, ctx.origin, 2 * r, lemmas["cutoff_degree"]).c_star
            except ValueError as e:
                self._log.info("skipped the doubled radius: %s", e)
        return [report]


@register_check
class ScalingCheck(Check):
    version = 1
    description = "Parabolic rescaling invariance of Q and of the curvature norm."

    def run(self) -> List[Report]:
        ctx = self.context
        region = ball(ctx.manifold, ctx.origin, ctx.params.r / 2)
        centers = sample_centers(ctx.manifold, SCALING_CENTERS)
        records = []
        for factor in SCALING_FACTORS:
            result = parabolic_rescale(ctx.manifold, ctx.u, factor, ctx.V, ctx.params.p,
                                       ctx.params.alpha, ctx.J, region.members, centers)
            records.append(_origin_record(ctx, property="Q", factor=factor,
                                          lhs=result.q_error, rhs=SCALING_TOLERANCE))
            records.append(_origin_record(ctx, property="k", factor=factor,
                                          lhs=result.k_error, rhs=SCALING_TOLERANCE))
        return [LemmaReport("scaling", records)]

