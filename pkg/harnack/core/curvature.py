"""Negative part of the Ricci curvature and its integral norms."""
from concurrent.futures import ThreadPoolExecutor
import logging
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy
import sympy

from harnack.core.geometry import (
    ball_from_distances, BALL_RADIUS_SLACK, DiscreteManifold, ManifoldSpec, p_mean, RADIUS)
from harnack.core.metrics import record_event

THETA = sympy.Symbol("theta", real=True)
NORMS = ("eigenvalue", "frobenius")
DEFAULT_SAMPLE_LIMIT = 1024


class UnsupportedModelError(ValueError):
    """The curvature of the model is not known in closed form."""


class HypothesisError(ValueError):
    """The integrability exponent does not satisfy p > n/2."""


def chart_metric(spec: ManifoldSpec) -> Tuple[sympy.Matrix, Tuple[sympy.Symbol, ...]]:
    """
    Return the symbolic metric of the model in chart coordinates.

    :param spec: The model description.
    :return: The metric matrix and the coordinate symbols.
    """
    if spec.kind == "flat_torus":
        coords = sympy.symbols("x y", real=True)
        return sympy.eye(2), tuple(coords)
    if spec.kind == "warped_product":
        warp = spec.warp_expression()
        return sympy.diag(1, warp ** 2), (RADIUS, THETA)
    raise UnsupportedModelError("no analytic metric for %r" % spec.kind)


def christoffel_symbols(metric: sympy.Matrix, coords: Sequence[sympy.Symbol]) -> list:
    """Gamma[i][j][k] = Gamma^i_{jk} of the Levi-Civita connection."""
    inverse = metric.inv()
    dim = len(coords)
    return [[[sum(sympy.Rational(1, 2) * inverse[i, l] * (
        sympy.diff(metric[k, l], coords[j]) + sympy.diff(metric[j, l], coords[k]) -
        sympy.diff(metric[j, k], coords[l])) for l in range(dim))
        for k in range(dim)] for j in range(dim)] for i in range(dim)]


def ricci_tensor(metric: sympy.Matrix, coords: Sequence[sympy.Symbol]) -> sympy.Matrix:
    """Contract the Riemann tensor R^i_{jkl} over i = k."""
    gamma = christoffel_symbols(metric, coords)
    dim = len(coords)

    def riemann(i, j, k, l):
        return sympy.diff(gamma[i][l][j], coords[k]) - sympy.diff(gamma[i][k][j], coords[l]) + \
            sum(gamma[i][k][m] * gamma[m][l][j] - gamma[i][l][m] * gamma[m][k][j]
                for m in range(dim))

    return sympy.Matrix(dim, dim, lambda j, k: sum(riemann(i, j, i, k) for i in range(dim)))


def _evaluate(matrix: sympy.Matrix, coords: Sequence[sympy.Symbol],
              points: numpy.ndarray) -> numpy.ndarray:
    result = numpy.empty((len(points), matrix.rows, matrix.cols))
    for i in range(matrix.rows):
        for j in range(matrix.cols):
            func = sympy.lambdify(coords, matrix[i, j], "numpy")
            value = func(*(points[:, c] for c in range(len(coords))))
            result[:, i, j] = numpy.broadcast_to(numpy.asarray(value, dtype=float), len(points))
    return result


def _relative_eigenvalues(metric: numpy.ndarray, form: numpy.ndarray) -> numpy.ndarray:
    """Eigenvalues of the bilinear form against the metric, per vertex."""
    lower = numpy.linalg.inv(numpy.linalg.cholesky(metric))
    return numpy.linalg.eigvalsh(lower @ form @ numpy.swapaxes(lower, -1, -2))


def _pole_eigenvalue(metric: sympy.Matrix, ricci: sympy.Matrix, h: float) -> float:
    expr = ricci[0, 0] / metric[0, 0]
    try:
        value = float(sympy.limit(expr, RADIUS, 0, "+"))
    except (NotImplementedError, TypeError, ValueError):
        value = float("nan")
    if not numpy.isfinite(value):
        value = float(expr.subs(RADIUS, h * 1e-3))
    return value


def ric_minus_field(spec: ManifoldSpec, m: DiscreteManifold,
                    norm: str = "eigenvalue") -> numpy.ndarray:
    """
    Evaluate V = |Ric^-| at every vertex.

    :param spec: The analytic model.
    :param m: Its discretization; the length scale of `m` is taken into account.
    :param norm: "eigenvalue" takes the largest negative eigenvalue of Ric against g, \
                 "frobenius" the norm of the negative part of the tensor.
    :return: Nonnegative array of size N, in curvature units.
    """
    if norm not in NORMS:
        raise ValueError("unsupported curvature norm %r, choose one of %s" % (
            norm, ", ".join(NORMS)))
    metric, coords = chart_metric(spec)
    ricci = ricci_tensor(metric, coords)
    grid = slice(None) if m.pole is None else slice(0, m.pole)
    points = m.coordinates[grid]
    eigenvalues = numpy.empty((m.size, 2))
    eigenvalues[grid] = _relative_eigenvalues(
        _evaluate(metric, coords, points) * m.scale ** 2, _evaluate(ricci, coords, points))
    if m.pole is not None:
        eigenvalues[m.pole] = _pole_eigenvalue(metric, ricci, m.spacing[0]) / m.scale ** 2
    negative = numpy.minimum(eigenvalues, 0)
    if norm == "eigenvalue":
        field = -negative.min(axis=1)
    else:
        field = numpy.sqrt((negative ** 2).sum(axis=1))
    return field + 0.0


class CurvatureNorm(NamedTuple):
    """k(x, p, r) over the sample centers and their maximum."""

    p: float
    r: float
    centers: numpy.ndarray
    local: numpy.ndarray
    value: float
    argmax: int


class CurvatureData:
    """V = |Ric^-| together with the integral norms computed on top of it."""

    def __init__(self, field: numpy.ndarray, norm: str = "eigenvalue"):
        """
        Initialize a new instance of CurvatureData.

        :param field: V on all the vertices.
        :param norm: Pointwise norm used to produce `field`.
        """
        field = numpy.asarray(field, dtype=float)
        if (field < 0).any():
            raise ValueError("|Ric^-| must be nonnegative")
        self.V = field
        self.norm = norm
        self.k_local = {}  # type: Dict[Tuple[int, float, float], float]
        self.k_global = {}  # type: Dict[Tuple[float, float], float]
        self.samples = {}  # type: Dict[Tuple[float, float], numpy.ndarray]

    def __str__(self) -> str:
        """Summarize CurvatureData as a string."""
        return "CurvatureData(max V=%.4g, %d norms)" % (self.V.max(), len(self.k_global))

    def record(self, entry: CurvatureNorm) -> CurvatureNorm:
        """Store the computed norm and return it back."""
        key = (entry.p, entry.r)
        for center, value in zip(entry.centers, entry.local):
            self.k_local[(int(center), entry.p, entry.r)] = float(value)
        self.k_global[key] = entry.value
        self.samples[key] = entry.centers
        return entry

    def k(self, p: float, r: float) -> float:
        """Return a previously recorded k(p, r)."""
        return self.k_global[(p, r)]


def sample_centers(m: DiscreteManifold, limit: int = DEFAULT_SAMPLE_LIMIT) -> numpy.ndarray:
    """Pick a deterministic set of centers: all vertices or an even stride of them."""
    if m.size <= limit:
        return numpy.arange(m.size)
    return numpy.unique(numpy.linspace(0, m.size - 1, limit).round().astype(int))


def k_norm(m: DiscreteManifold, V: numpy.ndarray, p: float, r: float,
           centers: Optional[Sequence[int]] = None, sample_limit: int = DEFAULT_SAMPLE_LIMIT,
           workers: int = 1, chunk_size: int = 64) -> CurvatureNorm:
    """
    Compute k(x, p, r) = r^2 (avg_{B(x, r)} V^p)^(1/p) and its maximum over the centers.

    :param m: The manifold.
    :param V: |Ric^-| on all the vertices.
    :param p: Integrability exponent, p > n/2.
    :param r: Ball radius.
    :param centers: Sample set; `sample_centers()` by default.
    :param sample_limit: Size threshold of the default sample set.
    :param workers: Number of threads.
    :param chunk_size: Number of centers per distance batch.
    :return: CurvatureNorm.
    """
    n = m.dimension
    if p <= n / 2:
        raise HypothesisError("the exponent p = %s must exceed n/2 = %s" % (p, n / 2))
    if r <= 0:
        raise ValueError("the radius must be positive, got %s" % r)
    V = numpy.asarray(V, dtype=float)
    if centers is None:
        centers = sample_centers(m, sample_limit)
    centers = numpy.unique(numpy.asarray(centers, dtype=int))
    if not V.any():
        local = numpy.zeros(len(centers))
    else:
        chunks = [centers[i:i + chunk_size] for i in range(0, len(centers), chunk_size)]

        def evaluate(chunk) -> List[float]:
            rows = m.distance_rows(chunk, limit=r * (1 + 2 * BALL_RADIUS_SLACK))
            return [r ** 2 * p_mean(m, ball_from_distances(m, c, r, row), V, p)
                    for c, row in zip(chunk, rows)]

        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                parts = list(pool.map(evaluate, chunks))
        else:
            parts = [evaluate(chunk) for chunk in chunks]
        local = numpy.array([v for part in parts for v in part])
    argmax = int(numpy.argmax(local))
    record_event("curvature.k_norm.centers", len(centers))
    logging.getLogger("curvature").debug("k(p=%s, r=%s) = %.6g over %d centers", p, r,
                                         local[argmax], len(centers))
    return CurvatureNorm(p=p, r=r, centers=centers, local=local, value=float(local[argmax]),
                         argmax=int(centers[argmax]))


def rescaling_diagnostic(m: DiscreteManifold, V: numpy.ndarray, p: float,
                         radii: Sequence[float] = (0.25, 0.5, 1.0),
                         centers: Optional[Sequence[int]] = None) -> List[dict]:
    """
    Compare k(p, r) with 2^(1/p) k(p, 1) for radii r <= 1.

    :return: One record per radius with "r", "k", "bound" and "satisfied".
    """
    unit = k_norm(m, V, p, 1.0, centers=centers).value
    bound = 2 ** (1 / p) * unit
    records = []
    for r in radii:
        value = k_norm(m, V, p, r, centers=centers).value
        records.append({"r": r, "k": value, "bound": bound,
                        "satisfied": bool(value <= bound * (1 + 1e-12))})
    return records
