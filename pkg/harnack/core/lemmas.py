"""Numerical checks of volume doubling, the Sobolev inequality, the Gaussian upper bound \
of the heat kernel and the existence of cutoff functions."""
import logging
from typing import Dict, Iterable, Iterator, List, NamedTuple, Optional, Sequence, Tuple

import numpy

from harnack.core.geometry import ball, Ball, DiscreteManifold
from harnack.core.heat import HeatKernel

DOUBLING_FACTOR = 2.0
MIN_GAUSSIAN_SAMPLES = 10
SOBOLEV_DEGREES = (1, 2, 3, 4)
SOBOLEV_RANDOM_FUNCTIONS = 20
CUTOFF_DEGREES = (3, 5)


class LemmaInputError(ValueError):
    """The input does not satisfy the preconditions of a lemma check."""


class LemmaReport:
    """Per-record comparison LHS <= RHS for one lemma."""

    def __init__(self, name: str, records: List[dict], tolerance: float = 1e-12):
        """
        Initialize a new instance of LemmaReport.

        :param name: Name of the lemma check.
        :param records: Dictionaries with at least "lhs" and "rhs"; "x", "y" and "t" locate \
                        the record in the flat table.
        :param tolerance: Relative tolerance of the comparison.
        """
        self.name = name
        self.records = records
        self.tolerance = tolerance
        for record in records:
            margin = record["rhs"] - record["lhs"]
            record["margin"] = margin
            record["violated"] = bool(not margin >= -tolerance * abs(record["rhs"]))
        self.hypothesis_satisfied = True
        self.negative_control = False
        self.diagnostics = {}

    def __str__(self) -> str:
        """Summarize LemmaReport as a string."""
        return "LemmaReport(%s: %d/%d violations)" % (
            self.name, self.violation_count, len(self.records))

    @property
    def violation_count(self) -> int:
        """Return the number of violated records."""
        return sum(record["violated"] for record in self.records)

    @property
    def worst_margin(self) -> float:
        """Return the smallest RHS - LHS."""
        return min((record["margin"] for record in self.records), default=float("inf"))

    @property
    def passed(self) -> bool:
        """Return True if no record is violated."""
        return self.violation_count == 0

    def summary(self) -> dict:
        """Return the scalar summary of the report."""
        return {
            "name": self.name,
            "points": len(self.records),
            "violations": self.violation_count,
            "worst_margin": self.worst_margin,
            "hypothesis_satisfied": self.hypothesis_satisfied,
            "negative_control": self.negative_control,
            "diagnostics": self.diagnostics,
        }

    def rows(self) -> Iterator[tuple]:
        """Yield (x, y, t, lhs, rhs, margin, violated) per record."""
        for record in self.records:
            yield (record.get("x"), record.get("y"), record.get("t"), record["lhs"],
                   record["rhs"], record["margin"], record["violated"])


def check_volume_doubling(m: DiscreteManifold, centers: Iterable[int],
                          radius_pairs: Iterable[Tuple[float, float]]) -> LemmaReport:
    """
    Compare |B(x, r2)| / r2^n with 2 |B(x, r1)| / r1^n.

    :param m: The manifold.
    :param centers: Ball centers.
    :param radius_pairs: (r1, r2) with 0 < r1 <= r2 <= 1.
    :return: LemmaReport with the ratio (|B2| / r2^n) / (|B1| / r1^n) against 2.
    """
    n = m.dimension
    pairs = list(radius_pairs)
    for r1, r2 in pairs:
        if not 0 < r1 <= r2 <= 1:
            raise ValueError("expected 0 < r1 <= r2 <= 1, got %s, %s" % (r1, r2))
    records = []
    for center in centers:
        x, y = m.coordinates[center]
        for r1, r2 in pairs:
            inner, outer = ball(m, center, r1), ball(m, center, r2)
            ratio = (outer.volume / r2 ** n) / (inner.volume / r1 ** n)
            records.append({"center": int(center), "x": float(x), "y": float(y), "r1": r1,
                            "r2": r2, "volume1": inner.volume, "volume2": outer.volume,
                            "lhs": ratio, "rhs": DOUBLING_FACTOR})
    return LemmaReport("volume_doubling", records)


def ball_frontier(m: DiscreteManifold, b: Ball) -> numpy.ndarray:
    """Return the members of the ball which are coupled to a vertex outside of it."""
    inside = numpy.zeros(m.size, dtype=bool)
    inside[b.members] = True
    coupling = m.stiffness[b.members].tocoo()
    outside = ~inside[coupling.col] & (coupling.data != 0)
    return numpy.unique(b.members[coupling.row[outside]])


def _support_radius(m: DiscreteManifold, b: Ball) -> float:
    frontier = ball_frontier(m, b)
    if len(frontier) == 0:
        return b.radius
    return float(m.distances_from(b.center)[frontier].min())


def sobolev_test_suite(m: DiscreteManifold, center: int, r: float, seed: int = 0,
                       degrees: Sequence[int] = SOBOLEV_DEGREES,
                       random_count: int = SOBOLEV_RANDOM_FUNCTIONS
                       ) -> Dict[str, numpy.ndarray]:
    """
    Generate the deterministic radial bumps (1 - s^2)^k and the seeded random bumps.

    The support is the ball of radius rho, the smallest distance from the center to the \
    frontier of B(center, r), so every function vanishes on the frontier.

    :return: Mapping from the function name to its values on all the vertices.
    """
    b = ball(m, center, r)
    rho = _support_radius(m, b)
    s = m.distances_from(center) / rho
    inside = s < 1
    suite = {}
    for k in degrees:
        suite["radial_%d" % k] = numpy.where(inside, numpy.clip(1 - s ** 2, 0, None) ** k, 0)
    rng = numpy.random.default_rng(seed)
    candidates = b.members[m.distances_from(center)[b.members] <= rho / 2]
    for index in range(random_count):
        values = numpy.zeros(m.size)
        for _ in range(rng.integers(1, 4)):
            origin = int(rng.choice(candidates))
            reach = (rho - m.distances_from(center)[origin]) * rng.uniform(0.2, 1.0)
            local = m.distances_from(origin) / reach
            values += rng.uniform(0.5, 1.5) * numpy.clip(1 - local ** 2, 0, None) ** 3
        suite["random_%02d" % index] = values
    return suite


def sobolev_ratio(m: DiscreteManifold, b: Ball, f: numpy.ndarray) -> Tuple[float, float]:
    """
    Return both sides of the Sobolev inequality without the constant.

    :return: ((avg |f|^(n/(n-1)))^((n-1)/n), r avg |grad f|).
    """
    n = m.dimension
    weights = m.weights[b.members]
    volume = weights.sum()
    power = n / (n - 1)
    values = numpy.abs(f[b.members])
    lhs = (numpy.dot(weights, values ** power) / volume) ** (1 / power)
    gradient = numpy.sqrt(m.gradient_norm_sq(f)[b.members])
    return float(lhs), float(b.radius * numpy.dot(weights, gradient) / volume)


def check_sobolev(m: DiscreteManifold, center: int, r: float,
                  functions: Dict[str, numpy.ndarray], bound: float = 1.0) -> LemmaReport:
    """
    Measure the Sobolev ratio of every test function supported inside B(center, r).

    :param m: The manifold.
    :param center: Ball center.
    :param r: Ball radius.
    :param functions: Test functions on all the vertices, vanishing on the frontier of the \
                      ball and outside of it.
    :param bound: Constant C(n) the ratios are compared with.
    :return: LemmaReport; the diagnostics carry the empirical constant, the largest ratio.
    """
    b = ball(m, center, r)
    outside = numpy.ones(m.size, dtype=bool)
    outside[b.members] = False
    outside[ball_frontier(m, b)] = True
    x, y = m.coordinates[center]
    records = []
    for name in sorted(functions):
        f = numpy.asarray(functions[name], dtype=float)
        if f.shape != (m.size,):
            raise LemmaInputError("%s has shape %s, expected (%d,)" % (name, f.shape, m.size))
        if numpy.abs(f[outside]).max(initial=0) > 0:
            raise LemmaInputError("%s does not vanish on the frontier of the ball" % name)
        lhs, rhs = sobolev_ratio(m, b, f)
        if rhs == 0:
            raise LemmaInputError("%s is identically zero" % name)
        records.append({"function": name, "x": float(x), "y": float(y), "lhs": lhs / rhs,
                        "rhs": bound, "lhs_raw": lhs, "rhs_raw": rhs})
    report = LemmaReport("sobolev", records)
    report.diagnostics["empirical_constant"] = max((rec["lhs"] for rec in records), default=0.0)
    return report


class GaussianFit(NamedTuple):
    """log(G |B(x, sqrt t)|^1/2 |B(y, sqrt t)|^1/2) ~ log C1 - d^2 / (C2 t)."""

    C1: float
    C2: float
    C1_envelope: float
    residual_norm: float
    max_residual: float
    samples: int
    t_range: Tuple[float, float]
    d2_over_t_range: Tuple[float, float]


def fit_gaussian_samples(d2: numpy.ndarray, t: numpy.ndarray, G: numpy.ndarray,
                         volume_x: numpy.ndarray, volume_y: numpy.ndarray) -> GaussianFit:
    """
    Fit the Gaussian upper bound by least squares and inflate C1 into an envelope.

    :param d2: Squared distances.
    :param t: Times.
    :param G: Kernel values.
    :param volume_x: |B(x, sqrt t)|.
    :param volume_y: |B(y, sqrt t)|.
    :return: GaussianFit where C1_envelope bounds every sample.
    """
    d2, t, G, volume_x, volume_y = (numpy.asarray(v, dtype=float).ravel()
                                    for v in (d2, t, G, volume_x, volume_y))
    keep = (G > 0) & (t > 0)
    if keep.sum() < MIN_GAUSSIAN_SAMPLES:
        raise LemmaInputError("need at least %d positive samples, got %d" % (
            MIN_GAUSSIAN_SAMPLES, keep.sum()))
    d2, t, G, volume_x, volume_y = (v[keep] for v in (d2, t, G, volume_x, volume_y))
    target = numpy.log(G * numpy.sqrt(volume_x * volume_y))
    design = numpy.stack([numpy.ones_like(t), -d2 / t], axis=1)
    (log_c1, slope), *_ = numpy.linalg.lstsq(design, target, rcond=None)
    if slope <= 0:
        raise LemmaInputError("the fitted decay rate is not positive: %.6g" % slope)
    residuals = target - design @ numpy.array([log_c1, slope])
    max_residual = float(max(residuals.max(), 0.0))
    ratio = d2 / t
    return GaussianFit(C1=float(numpy.exp(log_c1)), C2=float(1 / slope),
                       C1_envelope=float(numpy.exp(log_c1 + max_residual)),
                       residual_norm=float(numpy.linalg.norm(residuals)),
                       max_residual=max_residual, samples=int(len(t)),
                       t_range=(float(t.min()), float(t.max())),
                       d2_over_t_range=(float(ratio.min()), float(ratio.max())))


def gaussian_samples(m: DiscreteManifold, kernels: Iterable[HeatKernel],
                     t_range: Tuple[float, float] = (0.0, 1.0),
                     d2_over_t_max: float = numpy.inf, targets_per_kernel: int = 64
                     ) -> Tuple[numpy.ndarray, ...]:
    """
    Collect (d^2, t, G, |B(x, sqrt t)|, |B(y, sqrt t)|) from heat kernels.

    :param m: The manifold.
    :param kernels: Heat kernels of various sources.
    :param t_range: Only times in (t_range[0], t_range[1]] are sampled.
    :param d2_over_t_max: Upper limit of d^2 / t.
    :param targets_per_kernel: Number of evenly strided target vertices per kernel.
    :return: Five arrays.
    """
    columns = [[], [], [], [], []]
    volumes = {}

    def volume(vertex: int, radius: float) -> float:
        key = (vertex, radius)
        if key not in volumes:
            volumes[key] = ball(m, vertex, radius).volume
        return volumes[key]

    for kernel in kernels:
        members = kernel.ball.members
        stride = max(1, len(members) // targets_per_kernel)
        targets = members[::stride]
        distances = m.distances_from(kernel.source)[targets]
        for ti, t in enumerate(kernel.times):
            if not t_range[0] < t <= t_range[1]:
                continue
            radius = float(numpy.sqrt(t))
            for target, d in zip(targets, distances):
                if d ** 2 / t > d2_over_t_max:
                    continue
                columns[0].append(d ** 2)
                columns[1].append(t)
                columns[2].append(kernel.values[ti, target])
                columns[3].append(volume(int(target), radius))
                columns[4].append(volume(kernel.source, radius))
    return tuple(numpy.array(column) for column in columns)


def fit_gaussian_bound(m: DiscreteManifold, kernels: Iterable[HeatKernel],
                       t_range: Tuple[float, float] = (0.0, 1.0),
                       d2_over_t_max: float = numpy.inf) -> GaussianFit:
    """
    Fit the Gaussian upper bound to sampled heat kernels.

    :param m: The manifold.
    :param kernels: Heat kernels.
    :param t_range: Time window, within (0, 1].
    :param d2_over_t_max: Upper limit of d^2 / t.
    :return: GaussianFit.
    """
    fit = fit_gaussian_samples(*gaussian_samples(m, kernels, t_range, d2_over_t_max))
    logging.getLogger("lemmas").info("Gaussian fit: C1=%.4g C2=%.4g over %d samples",
                                     fit.C1, fit.C2, fit.samples)
    return fit


class CutoffField(NamedTuple):
    """phi = eta(d / r) and its measured constant c* = max (|grad phi|^2 + |Delta phi|) r^2."""

    phi: numpy.ndarray
    center: int
    r: float
    degree: int
    c_star: float


def plateau_profile(s: numpy.ndarray, degree: int = 5) -> numpy.ndarray:
    """Return 1 on [0, 1/2], 0 on [1, inf) and a polynomial transition in between."""
    if degree not in CUTOFF_DEGREES:
        raise ValueError("unsupported profile degree %s, choose one of %s" % (
            degree, CUTOFF_DEGREES))
    tau = numpy.clip(2 * numpy.asarray(s, dtype=float) - 1, 0, 1)
    if degree == 5:
        step = tau ** 3 * (10 - 15 * tau + 6 * tau ** 2)
    else:
        step = tau ** 2 * (3 - 2 * tau)
    return 1 - step


def build_cutoff(m: DiscreteManifold, center: int, r: float, degree: int = 5) -> CutoffField:
    """
    Build a cutoff function of B(center, r) and measure its constant.

    :param m: The manifold.
    :param center: Ball center.
    :param r: Radius, 0 < r <= 1.
    :param degree: 5 for the C^2 profile, 3 for the C^1 one.
    :return: CutoffField.
    """
    if not 0 < r <= 1:
        raise ValueError("expected 0 < r <= 1, got %s" % r)
    b = ball(m, center, r)
    boundary = m.boundary_vertices()
    if len(boundary) and numpy.isin(boundary, b.members).any():
        raise LemmaInputError("B(%d, %s) is clipped by the chart boundary" % (center, r))
    phi = plateau_profile(m.distances_from(center) / r, degree)
    density = m.gradient_norm_sq(phi) + numpy.abs(m.laplacian @ phi)
    return CutoffField(phi=phi, center=int(center), r=r, degree=degree,
                       c_star=float(density.max() * r ** 2))
