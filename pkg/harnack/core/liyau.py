"""Explicit constants, the gradient quotient and both sides of the Li-Yau bounds."""
import logging
from typing import Iterator, NamedTuple, Optional, Sequence, Tuple, Union

import numpy

from harnack.core.curvature import HypothesisError, k_norm, sample_centers
from harnack.core.geometry import ball, DiscreteManifold
from harnack.core.heat import ScalarTimeField

RHS_FORMS = ("theorem", "remark")


def li_yau_constants(alpha: float, n: int) -> Tuple[float, float]:
    """
    Return delta = 2(1-alpha)^2 / (n + (1-alpha)^2) and a = 5 / delta.

    :param alpha: Gradient weight, 0 < alpha < 1.
    :param n: Dimension, at least 2.
    :return: (delta, a).
    """
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1), got %s" % alpha)
    if n < 2:
        raise ValueError("the dimension must be at least 2, got %s" % n)
    gap = (1 - alpha) ** 2
    delta = 2 * gap / (n + gap)
    return delta, 5 * (n + gap) / (2 * gap)


def structural_residual(alpha: float, n: int) -> float:
    """Return (2 - delta)(1 - alpha)^2 / n - delta, which vanishes identically."""
    delta, _ = li_yau_constants(alpha, n)
    return (2 - delta) * (1 - alpha) ** 2 / n - delta


class LiYauParams(NamedTuple):
    """Inputs of the main bound; delta and a are derived from alpha and n."""

    n: int
    p: float
    alpha: float
    C: float = 1.0
    kappa: float = 0.0
    r: float = 1.0

    def validate(self) -> "LiYauParams":
        """Check the hypotheses on the parameters and return self."""
        li_yau_constants(self.alpha, self.n)
        if self.p <= self.n / 2:
            raise HypothesisError("p = %s must exceed n/2 = %s" % (self.p, self.n / 2))
        if self.C <= 0:
            raise ValueError("C must be positive, got %s" % self.C)
        if self.kappa < 0:
            raise ValueError("kappa must be nonnegative, got %s" % self.kappa)
        if self.r <= 0:
            raise ValueError("the scale r must be positive, got %s" % self.r)
        return self

    @property
    def delta(self) -> float:
        return li_yau_constants(self.alpha, self.n)[0]

    @property
    def a(self) -> float:
        return li_yau_constants(self.alpha, self.n)[1]

    @property
    def exponent(self) -> float:
        """Return n / (2p - n)."""
        return self.n / (2 * self.p - self.n)


def _growth_rate(k_value: float, params: LiYauParams) -> float:
    """Return 2 C k r^-2 (1 + [2 C (a-1) k]^(n/(2p-n)))."""
    params.validate()
    if k_value < 0:
        raise ValueError("the curvature norm must be nonnegative, got %s" % k_value)
    base = 2 * params.C * (params.a - 1) * k_value
    return 2 * params.C * k_value / params.r ** 2 * (1 + base ** params.exponent)


def j_lower_bound(t: Union[float, numpy.ndarray], params: LiYauParams
                  ) -> Union[float, numpy.ndarray]:
    """
    Evaluate the closed-form lower bound of J.

    2^(-1/(a-1)) exp(-2 C kappa r^-2 (1 + [2 C (a-1) kappa]^(n/(2p-n))) t).

    :param t: Time or array of times, nonnegative.
    :param params: Parameters with 0 < r <= 1.
    :return: Values in (0, 2^(-1/(a-1))].
    """
    if params.r > 1:
        raise ValueError("the lower bound is stated for r <= 1, got %s" % params.r)
    rate = _growth_rate(params.kappa, params)
    return 2 ** (-1 / (params.a - 1)) * numpy.exp(-rate * numpy.asarray(t, dtype=float))


def gronwall_envelope(t: Union[float, numpy.ndarray], k_value: float, params: LiYauParams
                      ) -> Union[float, numpy.ndarray]:
    """
    Evaluate 2 exp(2 C (a-1) k r^-2 (1 + [2 C (a-1) k]^(n/(2p-n))) t), the bound on sup w.

    :param t: Time or array of times.
    :param k_value: The measured k(p, r).
    :param params: Parameters.
    :return: Envelope, equal to 2 at t = 0.
    """
    rate = (params.a - 1) * _growth_rate(k_value, params)
    return 2 * numpy.exp(rate * numpy.asarray(t, dtype=float))


def structural_margin(J: numpy.ndarray, params: LiYauParams) -> numpy.ndarray:
    """Return (2 - delta)(1 - alpha J)^2 / n - delta, nonnegative whenever J <= 1."""
    delta = params.delta
    return (2 - delta) * (1 - params.alpha * numpy.asarray(J)) ** 2 / params.n - delta


def li_yau_rhs(t: Union[float, numpy.ndarray], params: LiYauParams, form: str = "theorem"
               ) -> Union[float, numpy.ndarray]:
    """
    Evaluate the right hand side of the main bound.

    With D = alpha (2 - delta) J_lower(t) the theorem form is \
    n / (D t) + C / D [1 / (D (1 - alpha)) + 1]; the "remark" form replaces (1 - alpha) with \
    (1 - alpha J_lower(t)) and C with C / r^2.

    :param t: Positive time or array of times.
    :param params: Parameters.
    :param form: "theorem" or "remark".
    :return: RHS values.
    """
    if form not in RHS_FORMS:
        raise ValueError("unsupported form %r, choose one of %s" % (form, ", ".join(RHS_FORMS)))
    t = numpy.asarray(t, dtype=float)
    if (t <= 0).any():
        raise ValueError("the bound is stated for t > 0")
    lower = j_lower_bound(t, params)
    d = params.alpha * (2 - params.delta) * lower
    if form == "theorem":
        gap, C = 1 - params.alpha, params.C
    else:
        gap, C = 1 - params.alpha * lower, params.C / params.r ** 2
    denominator = d * gap
    if numpy.any(denominator == 0):
        raise ValueError("alpha (2 - delta) J (1 - alpha) vanishes")
    result = params.n / (d * t) + C / d * (1 / denominator + 1)
    return float(result) if result.ndim == 0 else result


class QField(NamedTuple):
    """Q = alpha J |grad u|^2 / u^2 - u_t / u over a vertex subset."""

    times: numpy.ndarray
    vertices: numpy.ndarray
    values: numpy.ndarray
    variant: str


def _quotient_terms(m: DiscreteManifold, u: ScalarTimeField, vertices: numpy.ndarray
                    ) -> Tuple[numpy.ndarray, numpy.ndarray]:
    """Return |grad u|^2 / u^2 and u_t / u = Delta u / u restricted to the vertices."""
    values = u.values
    region = values[:, vertices]
    if (region <= 0).any():
        raise ValueError("u must be positive on the evaluation region, min %.6g" % region.min())
    gradient = m.gradient_norm_sq(values.T).T[:, vertices]
    laplacian = (m.laplacian @ values.T).T[:, vertices]
    return gradient / region ** 2, laplacian / region


def compute_Q(m: DiscreteManifold, u: ScalarTimeField,
              J: Union[ScalarTimeField, numpy.ndarray, float], alpha: float,
              vertices: Optional[Sequence[int]] = None) -> QField:
    """
    Compute the Li-Yau quotient, with u_t replaced by Delta u.

    :param m: The manifold.
    :param u: Positive caloric function on all the vertices.
    :param J: Solved J field on the same time grid ("solved" variant), or the lower bound \
              per time node ("lower_bound" variant), or a constant.
    :param alpha: Gradient weight.
    :param vertices: Evaluation region; all the vertices by default.
    :return: QField.
    """
    vertices = numpy.arange(m.size) if vertices is None else numpy.asarray(vertices, dtype=int)
    gradient, rate = _quotient_terms(m, u, vertices)
    if isinstance(J, ScalarTimeField):
        if len(J.times) != len(u.times) or not numpy.allclose(J.times, u.times):
            raise ValueError("J and u must share the time grid")
        factor, variant = J.values[:, vertices], "solved"
    else:
        J = numpy.asarray(J, dtype=float)
        if J.ndim == 0:
            factor, variant = J, "constant"
        else:
            if J.shape != u.times.shape:
                raise ValueError("expected one J value per time node")
            factor, variant = J[:, None], "lower_bound"
    return QField(u.times, vertices, alpha * factor * gradient - rate, variant)


class BoundReport:
    """Pointwise comparison LHS <= RHS over vertices and times."""

    def __init__(self, name: str, vertices: numpy.ndarray, coordinates: numpy.ndarray,
                 times: numpy.ndarray, lhs: numpy.ndarray, rhs: numpy.ndarray,
                 tolerance: Union[float, numpy.ndarray] = 0.0, variant: str = ""):
        """
        Initialize a new instance of BoundReport.

        :param name: Name of the checked bound.
        :param vertices: (M,) checked vertices.
        :param coordinates: (M, 2) chart coordinates of the vertices.
        :param times: (T,) checked times.
        :param lhs: (T, M) left hand side.
        :param rhs: Right hand side broadcastable to (T, M).
        :param tolerance: Allowed excess broadcastable to (T, M).
        :param variant: Which variant of the LHS was used.
        """
        self.name = name
        self.variant = variant
        self.vertices = numpy.asarray(vertices, dtype=int)
        self.coordinates = numpy.asarray(coordinates, dtype=float)
        self.times = numpy.asarray(times, dtype=float)
        self.lhs = numpy.asarray(lhs, dtype=float)
        shape = (len(self.times), len(self.vertices))
        if self.lhs.shape != shape:
            raise ValueError("lhs has shape %s, expected %s" % (self.lhs.shape, shape))
        self.rhs = numpy.broadcast_to(numpy.asarray(rhs, dtype=float), shape)
        self.tolerance = numpy.broadcast_to(numpy.asarray(tolerance, dtype=float), shape)
        self.margin = self.rhs - self.lhs
        self.violated = ~(self.margin >= -self.tolerance)
        self.hypothesis_satisfied = True
        self.negative_control = False
        self.envelope = None  # type: Optional[numpy.ndarray]
        self.diagnostics = {}

    def __str__(self) -> str:
        """Summarize BoundReport as a string."""
        return "BoundReport(%s: %d/%d violations, worst margin %.6g)" % (
            self.name, self.violation_count, self.margin.size, self.worst_margin)

    @property
    def worst_margin(self) -> float:
        """Return the smallest RHS - LHS."""
        return float(self.margin.min()) if self.margin.size else float("inf")

    @property
    def violation_count(self) -> int:
        """Return the number of (vertex, time) pairs with margin < -tolerance."""
        return int(self.violated.sum())

    @property
    def passed(self) -> bool:
        """Return True if no point violates the bound."""
        return self.violation_count == 0

    def summary(self) -> dict:
        """Return the scalar summary of the report."""
        return {
            "name": self.name,
            "variant": self.variant,
            "points": int(self.margin.size),
            "violations": self.violation_count,
            "worst_margin": self.worst_margin,
            "hypothesis_satisfied": self.hypothesis_satisfied,
            "negative_control": self.negative_control,
            "diagnostics": self.diagnostics,
        }

    def rows(self) -> Iterator[tuple]:
        """Yield (x, y, t, lhs, rhs, margin, violated) per checked point."""
        for ti, t in enumerate(self.times):
            for vi in range(len(self.vertices)):
                x, y = self.coordinates[vi]
                yield (float(x), float(y), float(t), float(self.lhs[ti, vi]),
                       float(self.rhs[ti, vi]), float(self.margin[ti, vi]),
                       bool(self.violated[ti, vi]))


def select_times(u: ScalarTimeField, t_min: Optional[float] = None,
                 t_max: Optional[float] = None) -> ScalarTimeField:
    """Keep the positive time nodes within [t_min, t_max]."""
    mask = u.times > 0
    if t_min is not None:
        mask &= u.times >= t_min * (1 - 1e-12)
    if t_max is not None:
        mask &= u.times <= t_max * (1 + 1e-12)
    if not mask.any():
        raise ValueError("no time node falls into [%s, %s]" % (t_min, t_max))
    return u._replace(times=u.times[mask], values=u.values[mask])


def check_li_yau(m: DiscreteManifold, u: ScalarTimeField, params: LiYauParams, k_value: float,
                 origin: int, J: Optional[ScalarTimeField] = None,
                 t_min: Optional[float] = None, t_max: Optional[float] = None,
                 relative_tolerance: float = 1e-3, scheme_error: float = 0.0) -> BoundReport:
    """
    Check alpha J_lower |grad u|^2 / u^2 - u_t / u <= RHS on B(origin, r/2) x [t_min, t_max].

    :param m: The manifold.
    :param u: Positive caloric function.
    :param params: Parameters, the constants C and kappa included.
    :param k_value: The measured k(p, r); k_value > kappa marks the hypothesis as failed.
    :param origin: Center O.
    :param J: Solved J on the same time grid, evaluated as a diagnostic variant.
    :param t_min: Start of the time window.
    :param t_max: End of the time window.
    :param relative_tolerance: Tolerance relative to the RHS.
    :param scheme_error: Absolute tolerance for the discretization error.
    :return: BoundReport of the lower-bound variant.
    """
    params.validate()
    region = ball(m, origin, params.r / 2)
    window = select_times(u, t_min, t_max)
    times = window.times
    lower = j_lower_bound(times, params)
    rhs = li_yau_rhs(times, params)[:, None]
    q = compute_Q(m, window, lower, params.alpha, region.members)
    report = BoundReport("li_yau", region.members, m.coordinates[region.members], times,
                         q.values, rhs, relative_tolerance * rhs + scheme_error, q.variant)
    report.hypothesis_satisfied = bool(k_value <= params.kappa)
    leading = params.n / (params.alpha * (2 - params.delta) * lower * times)
    remark = li_yau_rhs(times, params, form="remark")[:, None]
    report.diagnostics = {
        "k": k_value,
        "leading_term_fraction": float(numpy.mean(q.values <= leading[:, None])),
        "remark_form_worst_margin": float((remark - q.values).min()),
    }
    if J is not None:
        solved = compute_Q(m, window, select_times(J, t_min, t_max), params.alpha,
                           region.members)
        margin = rhs - solved.values
        report.diagnostics["solved_J"] = {
            "worst_margin": float(margin.min()),
            "violations": int((margin < -(relative_tolerance * rhs + scheme_error)).sum()),
        }
    logging.getLogger("liyau").info("%s, hypothesis %s", report,
                                    "holds" if report.hypothesis_satisfied else "fails")
    return report


def classical_rhs(t: Union[float, numpy.ndarray], n: int, K: float, alpha: float
                  ) -> Union[float, numpy.ndarray]:
    """
    Return n alpha^2 K / (2 (alpha - 1)) + n alpha^2 / (2 t), or n / (2t) when K = 0, alpha = 1.
    """
    t = numpy.asarray(t, dtype=float)
    if K == 0 and alpha == 1:
        return n / (2 * t)
    if alpha <= 1:
        raise ValueError("the bound with Ric >= -K requires alpha > 1, got %s" % alpha)
    if K < 0:
        raise ValueError("K must be nonnegative, got %s" % K)
    return n * alpha ** 2 * K / (2 * (alpha - 1)) + n * alpha ** 2 / (2 * t)


def check_classical(m: DiscreteManifold, u: ScalarTimeField, K: float, alpha: float,
                    origin: int, radius: float = 0.5, t_min: Optional[float] = None,
                    t_max: Optional[float] = None, relative_tolerance: float = 1e-3,
                    scheme_error: float = 0.0) -> BoundReport:
    """
    Check |grad u|^2 / u^2 - alpha u_t / u <= classical RHS on B(origin, radius).

    :param m: The manifold with Ric >= -K.
    :param u: Positive caloric function.
    :param K: Lower curvature bound constant.
    :param alpha: Weight; 1 only together with K = 0.
    :return: BoundReport.
    """
    region = ball(m, origin, radius)
    window = select_times(u, t_min, t_max)
    rhs = numpy.asarray(classical_rhs(window.times, m.dimension, K, alpha))[:, None]
    gradient, rate = _quotient_terms(m, window, region.members)
    report = BoundReport("classical", region.members, m.coordinates[region.members],
                         window.times, gradient - alpha * rate, rhs,
                         relative_tolerance * rhs + scheme_error,
                         "optimal" if K == 0 and alpha == 1 else "alpha")
    report.diagnostics = {"K": K, "alpha": alpha}
    return report


class RescaleResult(NamedTuple):
    """Parabolic rescaling g -> r^2 g, t -> r^2 t and the invariants measured on it."""

    manifold: DiscreteManifold
    field: ScalarTimeField
    q_error: float
    k_original: float
    k_rescaled: float
    k_error: float


def parabolic_rescale(m: DiscreteManifold, u: ScalarTimeField, factor: float,
                      V: numpy.ndarray, p: float, alpha: float = 1.0,
                      J: Union[ScalarTimeField, numpy.ndarray, float] = 1.0,
                      vertices: Optional[Sequence[int]] = None,
                      centers: Optional[Sequence[int]] = None) -> RescaleResult:
    """
    Rescale the metric by factor^2 and the time by factor^2.

    Q computed on the rescaled data times factor^2 must reproduce Q, and k(p, factor) of the \
    rescaled curvature must reproduce k(p, 1).

    :param m: The manifold.
    :param u: Positive caloric function.
    :param factor: r > 0.
    :param V: |Ric^-| of `m`; the rescaled curvature is V / r^2.
    :param p: Exponent of the curvature norm.
    :param alpha: Gradient weight used in Q.
    :param J: J used in Q, dimensionless and therefore transported unchanged.
    :param vertices: Vertices where Q is compared.
    :param centers: Centers of the curvature norm.
    :return: RescaleResult with the largest relative deviations.
    """
    if factor <= 0:
        raise ValueError("the scale factor must be positive, got %s" % factor)
    rescaled = m.rescaled(factor)
    field = u._replace(times=u.times * factor ** 2)
    J_rescaled = J
    if isinstance(J, ScalarTimeField):
        J_rescaled = J._replace(times=J.times * factor ** 2)
    original = compute_Q(m, u, J, alpha, vertices).values
    transformed = compute_Q(rescaled, field, J_rescaled, alpha, vertices).values
    scale = max(numpy.abs(original).max(), numpy.finfo(float).tiny)
    q_error = float(numpy.abs(transformed * factor ** 2 - original).max() / scale)
    if centers is None:
        centers = sample_centers(m)
    k_original = k_norm(m, V, p, 1.0, centers=centers).value
    k_rescaled = k_norm(rescaled, numpy.asarray(V) / factor ** 2, p, factor,
                        centers=centers).value
    k_error = abs(k_rescaled - k_original) / max(abs(k_original), numpy.finfo(float).tiny)
    return RescaleResult(rescaled, field, q_error, k_original, k_rescaled, k_error)
