"""Discrete model surfaces: finite-volume Laplacians, geodesic distances, balls and averages."""
import hashlib
import logging
import math
import threading
from typing import NamedTuple, Optional, Sequence, Tuple

import cachetools
import numpy
from numpy.polynomial.legendre import leggauss
from scipy import integrate, sparse
from scipy.sparse.csgraph import dijkstra
import sympy

RADIUS = sympy.Symbol("r", real=True)
BALL_RADIUS_SLACK = 1e-9
GAUSS_NODES = 8
DISTANCE_CACHE_ROWS = 512
KINDS = ("flat_torus", "warped_product")
DISTANCE_MODES = ("auto", "exact", "graph")
STENCILS = {
    8: ((1, 0), (0, 1), (1, 1), (1, -1)),
    16: ((1, 0), (0, 1), (1, 1), (1, -1), (1, 2), (2, 1), (1, -2), (2, -1)),
}


class ManifoldError(ValueError):
    """The model description is invalid or cannot be discretized."""


class EmptyBallError(ValueError):
    """An average over a ball without members was requested."""


class ManifoldSpec(NamedTuple):
    """
    Analytic description of a model surface.

    `flat_torus` uses `side_lengths`; `warped_product` is the chart \
    [r_min, r_max] x [0, 2pi) with the metric dr^2 + f(r)^2 dtheta^2, where f is the sympy \
    expression `warp` over `r`. `cap` closes the chart at r = 0 with a pole vertex.
    """

    kind: str
    side_lengths: Tuple[float, float] = (1.0, 1.0)
    warp: str = "r"
    radial_range: Tuple[float, float] = (0.1, 2.0)
    resolution: Tuple[int, int] = (64, 64)
    dimension: int = 2
    cap: bool = False
    distance: str = "auto"
    stencil: int = 8

    def validate(self) -> "ManifoldSpec":
        """
        Check the invariants of the description.

        :return: self
        """
        if self.kind not in KINDS:
            raise ManifoldError("unsupported manifold kind %r, choose one of %s" % (
                self.kind, ", ".join(KINDS)))
        if len(self.resolution) != 2 or min(self.resolution) < 8:
            raise ManifoldError("grid counts must be at least 8 per axis, got %s" %
                                (tuple(self.resolution),))
        if self.dimension < 2:
            raise ManifoldError("dimension must be at least 2, got %d" % self.dimension)
        if self.distance not in DISTANCE_MODES:
            raise ManifoldError("unsupported distance mode %r" % self.distance)
        if self.stencil not in STENCILS:
            raise ManifoldError("graph stencil must be 8 or 16, got %r" % self.stencil)
        if self.kind == "flat_torus":
            if min(self.side_lengths) <= 0:
                raise ManifoldError("side lengths must be positive, got %s" %
                                    (tuple(self.side_lengths),))
            return self
        if self.distance == "exact":
            raise ManifoldError("closed-form distances are only available on flat tori")
        r_min, r_max = self.radial_range
        if r_max <= r_min or r_min < 0:
            raise ManifoldError("invalid radial range [%s, %s]" % (r_min, r_max))
        if self.cap and r_min != 0:
            raise ManifoldError("a capped chart must start at r = 0, got r_min = %s" % r_min)
        if not self.cap and r_min == 0:
            raise ManifoldError("r_min = 0 requires the disk cap")
        self.warp_expression()
        return self

    @property
    def distance_mode(self) -> str:
        """Return the resolved distance mode: "exact" or "graph"."""
        if self.distance != "auto":
            return self.distance
        return "exact" if self.kind == "flat_torus" else "graph"

    @property
    def periodic(self) -> Tuple[bool, bool]:
        """Periodicity flag per chart axis."""
        return (True, True) if self.kind == "flat_torus" else (False, True)

    def warp_expression(self) -> sympy.Expr:
        """Parse the warping function."""
        try:
            expr = sympy.sympify(self.warp, locals={"r": RADIUS})
        except (sympy.SympifyError, SyntaxError, TypeError) as e:
            raise ManifoldError("cannot parse the warping function %r: %s" % (
                self.warp, e)) from None
        extra = expr.free_symbols - {RADIUS}
        if extra:
            raise ManifoldError("the warping function may depend only on r, found %s" %
                                ", ".join(sorted(map(str, extra))))
        return expr

    def fingerprint(self) -> str:
        """Stable identifier of the description used as part of cache keys."""
        return hashlib.sha1(repr(tuple(self)).encode()).hexdigest()[:16]


def lambdify_radial(expr: sympy.Expr):
    """
    Turn a sympy expression over `r` into a vectorized numpy function.

    Constant expressions are broadcast to the shape of the argument.
    """
    func = sympy.lambdify(RADIUS, expr, "numpy")

    def evaluate(r):
        r = numpy.asarray(r, dtype=float)
        return numpy.broadcast_to(numpy.asarray(func(r), dtype=float), r.shape).copy()

    return evaluate


class DiscreteManifold:
    """
    Finite-volume discretization of a model surface on a structured chart grid.

    Vertex `i * n2 + j` corresponds to the chart node (i, j); a capped warped product has an \
    extra pole vertex with the last index. The weak Laplacian `stiffness` S is symmetric \
    with nonpositive off-diagonal entries and zero row sums, so that Delta = -W^{-1} S is \
    self-adjoint with respect to the volume weights W and satisfies the maximum principle.
    """

    _log = logging.getLogger("DiscreteManifold")

    def __init__(self, spec: ManifoldSpec, coordinates: numpy.ndarray, weights: numpy.ndarray,
                 stiffness: sparse.csr_matrix, graph: sparse.csr_matrix,
                 inverse_metric: numpy.ndarray, spacing: Tuple[float, float],
                 pole: Optional[int] = None, scale: float = 1.0):
        """
        Initialize a new instance of DiscreteManifold. Use `build_manifold()` instead.

        :param spec: The analytic description.
        :param coordinates: (N, 2) chart coordinates of the vertices.
        :param weights: Volume weight per vertex.
        :param stiffness: Symmetric weak Laplacian.
        :param graph: Symmetric edge-length matrix for shortest paths.
        :param inverse_metric: (N, 2) diagonal of the inverse metric at each vertex.
        :param spacing: Chart grid step per axis.
        :param pole: Index of the pole vertex of a capped chart.
        :param scale: Length scale factor applied on top of the chart metric.
        """
        self.spec = spec
        self.coordinates = coordinates
        self.weights = weights
        self.stiffness = stiffness
        self.graph = graph
        self.inverse_metric = inverse_metric
        self.spacing = spacing
        self.pole = pole
        self.scale = scale
        self.shape = tuple(spec.resolution)
        self.periodic = spec.periodic
        self.distance_mode = spec.distance_mode
        self._laplacian = None
        self._distance_cache = cachetools.LRUCache(maxsize=DISTANCE_CACHE_ROWS)
        self._distance_lock = threading.Lock()

    def __str__(self) -> str:
        """Summarize DiscreteManifold as a string."""
        return "DiscreteManifold(%s %dx%d%s, scale=%g)" % (
            self.spec.kind, self.shape[0], self.shape[1],
            " capped" if self.pole is not None else "", self.scale)

    @property
    def size(self) -> int:
        """Return the number of vertices."""
        return len(self.weights)

    @property
    def dimension(self) -> int:
        """Return the dimension used in the analytic formulas."""
        return self.spec.dimension

    @property
    def total_volume(self) -> float:
        """Return the sum of all volume weights."""
        return math.fsum(self.weights)

    @property
    def fingerprint(self) -> str:
        """Identify the discretization including the length scale."""
        return "%s@%r" % (self.spec.fingerprint(), self.scale)

    @property
    def laplacian(self) -> sparse.csr_matrix:
        """Return the strong-form Laplacian -W^{-1} S as a sparse matrix."""
        if self._laplacian is None:
            self._laplacian = (sparse.diags(-1.0 / self.weights) @ self.stiffness).tocsr()
        return self._laplacian

    def distances_from(self, source: int) -> numpy.ndarray:
        """
        Return the geodesic distances from `source` to every vertex.

        The rows are cached; the returned array must not be modified.
        """
        with self._distance_lock:
            row = self._distance_cache.get(source)
        if row is not None:
            return row
        row = self.distance_rows([source])[0]
        row.setflags(write=False)
        with self._distance_lock:
            self._distance_cache[source] = row
        return row

    def distance_rows(self, sources: Sequence[int], limit: float = numpy.inf) -> numpy.ndarray:
        """
        Compute the geodesic distances from several sources at once.

        :param sources: Source vertices.
        :param limit: Distances beyond this value may be reported as infinity.
        :return: (len(sources), N) array.
        """
        sources = numpy.asarray(sources, dtype=int)
        if self.distance_mode == "exact":
            return numpy.stack([self._flat_distances(s) for s in sources])
        return dijkstra(self.graph, directed=False, indices=sources, limit=limit)

    def graph_distances_from(self, source: int) -> numpy.ndarray:
        """Return the shortest-path distances on the weighted grid graph."""
        return dijkstra(self.graph, directed=False, indices=[source])[0]

    def _flat_distances(self, source: int) -> numpy.ndarray:
        deltas = []
        for axis, length in enumerate(self.spec.side_lengths):
            delta = numpy.abs(self.coordinates[:, axis] - self.coordinates[source, axis])
            deltas.append(numpy.minimum(delta, length - delta))
        return numpy.hypot(*deltas) * self.scale

    def nearest_vertex(self, point: Sequence[float]) -> int:
        """
        Find the vertex closest to the given chart coordinates.

        :param point: (x, y) for flat tori, (r, theta) for warped products.
        :return: Vertex index.
        """
        n1, n2 = self.shape
        h1, h2 = self.spacing
        if self.spec.kind == "flat_torus":
            i = int(round(point[0] / h1)) % n1
            j = int(round(point[1] / h2)) % n2
            return i * n2 + j
        r, theta = point
        if self.pole is not None:
            if r < h1 / 2:
                return self.pole
            i = int(round(r / h1)) - 1
        else:
            i = int(math.floor((r - self.spec.radial_range[0]) / h1))
        i = min(max(i, 0), n1 - 1)
        j = int(round(theta / h2)) % n2
        return i * n2 + j

    def boundary_vertices(self) -> numpy.ndarray:
        """Return the vertices on the non-periodic edges of the chart."""
        n1, n2 = self.shape
        index = numpy.arange(n1 * n2).reshape(n1, n2)
        rows = []
        if not self.periodic[0]:
            if self.pole is None:
                rows.append(index[0])
            rows.append(index[-1])
        if not rows:
            return numpy.zeros(0, dtype=int)
        return numpy.concatenate(rows)

    def gradient_norm_sq(self, values: numpy.ndarray) -> numpy.ndarray:
        """
        Evaluate |grad u|^2 with centered differences in chart coordinates.

        Non-periodic chart edges use second order one-sided differences; the pole averages \
        the squared radial differences over the first ring.

        :param values: (N,) or (N, k) array.
        :return: Array of the same shape.
        """
        values = numpy.asarray(values, dtype=float)
        squeeze = values.ndim == 1
        if squeeze:
            values = values[:, None]
        n1, n2 = self.shape
        grid_size = n1 * n2
        grid = values[:grid_size].reshape(n1, n2, -1)
        pole_row = None
        if self.pole is not None:
            pole_row = numpy.broadcast_to(values[self.pole], (1, n2, values.shape[1]))
        d1 = self._partial(grid, 0, pole_row).reshape(grid_size, -1)
        d2 = self._partial(grid, 1, None).reshape(grid_size, -1)
        result = numpy.empty_like(values)
        result[:grid_size] = self.inverse_metric[:grid_size, 0, None] * d1 ** 2 + \
            self.inverse_metric[:grid_size, 1, None] * d2 ** 2
        if self.pole is not None:
            ring = (grid[0] - values[self.pole]) / self.spacing[0]
            result[self.pole] = 2 * numpy.mean(ring ** 2, axis=0) * self.inverse_metric[
                self.pole, 0]
        return result[:, 0] if squeeze else result

    def _partial(self, grid: numpy.ndarray, axis: int,
                 pole_row: Optional[numpy.ndarray]) -> numpy.ndarray:
        step = self.spacing[axis]
        if self.periodic[axis]:
            return (numpy.roll(grid, -1, axis=axis) - numpy.roll(grid, 1, axis=axis)) / (2 * step)
        if pole_row is not None:
            padded = numpy.concatenate([pole_row, grid], axis=0)
            return numpy.gradient(padded, step, axis=0, edge_order=2)[1:]
        return numpy.gradient(grid, step, axis=axis, edge_order=2)

    def rescaled(self, factor: float) -> "DiscreteManifold":
        """
        Return the same discretization of the metric factor^2 * g.

        Weights scale by factor^n, lengths by factor, the inverse metric by factor^-2 and \
        the stiffness by factor^(n-2).
        """
        if factor <= 0:
            raise ValueError("the scale factor must be positive, got %s" % factor)
        n = 2
        return DiscreteManifold(
            self.spec, self.coordinates, self.weights * factor ** n,
            self.stiffness * factor ** (n - 2), self.graph * factor,
            self.inverse_metric / factor ** 2, self.spacing, self.pole, self.scale * factor)


class Ball(NamedTuple):
    """Geodesic ball: the vertices within `radius` of `center`."""

    center: int
    radius: float
    members: numpy.ndarray
    distances: numpy.ndarray
    volume: float

    def __contains__(self, vertex: int) -> bool:
        """Check whether the vertex belongs to the ball."""
        pos = numpy.searchsorted(self.members, vertex)
        return bool(pos < len(self.members) and self.members[pos] == vertex)

    @property
    def size(self) -> int:
        """Return the number of member vertices."""
        return len(self.members)


def _assemble_stiffness(size: int, a: numpy.ndarray, b: numpy.ndarray,
                        conductance: numpy.ndarray) -> sparse.csr_matrix:
    rows = numpy.concatenate([a, b, a, b])
    cols = numpy.concatenate([b, a, a, b])
    data = numpy.concatenate([-conductance, -conductance, conductance, conductance])
    return sparse.coo_matrix((data, (rows, cols)), shape=(size, size)).tocsr()


def _assemble_graph(size: int, a: numpy.ndarray, b: numpy.ndarray,
                    length: numpy.ndarray) -> sparse.csr_matrix:
    rows = numpy.concatenate([a, b])
    cols = numpy.concatenate([b, a])
    data = numpy.concatenate([length, length])
    return sparse.coo_matrix((data, (rows, cols)), shape=(size, size)).tocsr()


def _neighbor_pairs(shape: Tuple[int, int], periodic: Tuple[bool, bool],
                    offset: Tuple[int, int]) -> Tuple[numpy.ndarray, numpy.ndarray,
                                                      numpy.ndarray]:
    """Return (a, b, i) for all chart edges (i, j) -> (i + o1, j + o2); i is the row of a."""
    n1, n2 = shape
    i, j = numpy.meshgrid(numpy.arange(n1), numpy.arange(n2), indexing="ij")
    i2, j2 = i + offset[0], j + offset[1]
    keep = numpy.ones(shape, dtype=bool)
    if periodic[0]:
        i2 %= n1
    else:
        keep &= (i2 >= 0) & (i2 < n1)
    if periodic[1]:
        j2 %= n2
    else:
        keep &= (j2 >= 0) & (j2 < n2)
    a = (i * n2 + j)[keep]
    b = (i2 * n2 + j2)[keep]
    return a, b, i[keep]


def _build_flat_torus(spec: ManifoldSpec) -> DiscreteManifold:
    n1, n2 = spec.resolution
    l1, l2 = spec.side_lengths
    h1, h2 = l1 / n1, l2 / n2
    size = n1 * n2
    i, j = numpy.meshgrid(numpy.arange(n1), numpy.arange(n2), indexing="ij")
    coordinates = numpy.column_stack([i.ravel() * h1, j.ravel() * h2])
    weights = numpy.full(size, h1 * h2)
    pairs = [_neighbor_pairs(spec.resolution, spec.periodic, o) for o in ((1, 0), (0, 1))]
    a = numpy.concatenate([pairs[0][0], pairs[1][0]])
    b = numpy.concatenate([pairs[0][1], pairs[1][1]])
    conductance = numpy.concatenate([numpy.full(len(pairs[0][0]), h2 / h1),
                                     numpy.full(len(pairs[1][0]), h1 / h2)])
    stiffness = _assemble_stiffness(size, a, b, conductance)
    ga, gb, gl = [], [], []
    for offset in STENCILS[spec.stencil]:
        a, b, _ = _neighbor_pairs(spec.resolution, spec.periodic, offset)
        ga.append(a)
        gb.append(b)
        gl.append(numpy.full(len(a), math.hypot(offset[0] * h1, offset[1] * h2)))
    graph = _assemble_graph(size, numpy.concatenate(ga), numpy.concatenate(gb),
                            numpy.concatenate(gl))
    inverse_metric = numpy.ones((size, 2))
    return DiscreteManifold(spec, coordinates, weights, stiffness, graph, inverse_metric,
                            (h1, h2))


def _build_warped_product(spec: ManifoldSpec) -> DiscreteManifold:
    n1, n2 = spec.resolution
    r_min, r_max = spec.radial_range
    expr = spec.warp_expression()
    warp = lambdify_radial(expr)
    h_theta = 2 * math.pi / n2
    if spec.cap:
        h = r_max / (n1 + 0.5)
        radii = h * numpy.arange(1, n1 + 1)
    else:
        h = (r_max - r_min) / n1
        radii = r_min + h * (numpy.arange(n1) + 0.5)
    lower, upper = radii - h / 2, radii + h / 2
    nodes, gauss_weights = leggauss(GAUSS_NODES)
    samples = radii[:, None] + (h / 2) * nodes[None, :]
    f_samples = warp(samples)
    f_radii, f_upper, f_lower = warp(radii), warp(upper), warp(lower)
    checked = [(samples.ravel(), f_samples.ravel()), (radii, f_radii), (upper, f_upper)]
    if not spec.cap:
        checked.append((lower, f_lower))
    for where, values in checked:
        bad = numpy.flatnonzero(~(values > 0))
        if len(bad):
            raise ManifoldError("the warping function %s is not positive at r=%g (value %g)" %
                                (spec.warp, where[bad[0]], values[bad[0]]))
    f_integral = (h / 2) * (f_samples @ gauss_weights)
    inverse_integral = (h / 2) * ((1 / f_samples) @ gauss_weights)
    grid_size = n1 * n2
    size = grid_size + (1 if spec.cap else 0)
    r_grid = numpy.repeat(radii, n2)
    theta_grid = numpy.tile(h_theta * numpy.arange(n2), n1)
    coordinates = numpy.column_stack([r_grid, theta_grid])
    weights = numpy.repeat(h_theta * f_integral, n2)
    inverse_metric = numpy.column_stack([numpy.ones(grid_size), 1 / numpy.repeat(f_radii, n2) ** 2])

    ra, rb, ri = _neighbor_pairs(spec.resolution, spec.periodic, (1, 0))
    aa, ab, ai = _neighbor_pairs(spec.resolution, spec.periodic, (0, 1))
    a = [ra, aa]
    b = [rb, ab]
    conductance = [f_upper[ri] * h_theta / h, inverse_integral[ai] / h_theta]
    ga, gb, gl = [], [], []
    for o1, o2 in STENCILS[spec.stencil]:
        pa, pb, pi = _neighbor_pairs(spec.resolution, spec.periodic, (o1, o2))
        if o1 == 0:
            arc = warp(radii[pi])
        elif o1 == 1:
            arc = f_upper[pi]
        else:
            arc = warp(radii[pi + 1])
        ga.append(pa)
        gb.append(pb)
        gl.append(numpy.hypot(o1 * h, o2 * h_theta * arc))
    pole = None
    if spec.cap:
        pole = grid_size
        derivative = spec.warp_expression().diff(RADIUS)
        f0 = float(expr.subs(RADIUS, 0))
        df0 = float(derivative.subs(RADIUS, 0))
        if abs(f0) > 1e-12 or abs(df0 - 1) > 1e-8:
            raise ManifoldError("the disk cap requires f(0) = 0 and f'(0) = 1, got %g and %g" %
                                (f0, df0))
        pole_nodes = (h / 4) * (nodes + 1)
        pole_weight = 2 * math.pi * (h / 4) * float(warp(pole_nodes) @ gauss_weights)
        coordinates = numpy.vstack([coordinates, [0.0, 0.0]])
        weights = numpy.append(weights, pole_weight)
        inverse_metric = numpy.vstack([inverse_metric, [1.0, 0.0]])
        ring = numpy.arange(n2)
        a.append(numpy.full(n2, pole))
        b.append(ring)
        conductance.append(numpy.full(n2, float(warp(h / 2)) * h_theta / h))
        ga.append(numpy.full(n2, pole))
        gb.append(ring)
        gl.append(numpy.full(n2, h))
    stiffness = _assemble_stiffness(size, numpy.concatenate(a), numpy.concatenate(b),
                                    numpy.concatenate(conductance))
    graph = _assemble_graph(size, numpy.concatenate(ga), numpy.concatenate(gb),
                            numpy.concatenate(gl))
    return DiscreteManifold(spec, coordinates, weights, stiffness, graph, inverse_metric,
                            (h, h_theta), pole=pole)


def build_manifold(spec: ManifoldSpec) -> DiscreteManifold:
    """
    Discretize the model surface.

    :param spec: The analytic description.
    :return: The finite-volume discretization.
    """
    spec = spec.validate()
    if spec.kind == "flat_torus":
        manifold = _build_flat_torus(spec)
    else:
        manifold = _build_warped_product(spec)
    logging.getLogger("geometry").debug("built %s with total volume %.6g", manifold,
                                        manifold.total_volume)
    return manifold


def analytic_volume(spec: ManifoldSpec) -> float:
    """Return the exact total volume of the chart."""
    if spec.kind == "flat_torus":
        return float(spec.side_lengths[0] * spec.side_lengths[1])
    warp = lambdify_radial(spec.warp_expression())
    value, _ = integrate.quad(lambda r: float(warp(r)), *spec.radial_range, limit=200)
    return 2 * math.pi * value


def geodesic_distance(m: DiscreteManifold, x: int, y: int) -> float:
    """
    Return the geodesic distance between two vertices.

    :param m: The manifold.
    :param x: First vertex.
    :param y: Second vertex.
    :return: Distance in length units.
    """
    return float(m.distances_from(x)[y])


def ball(m: DiscreteManifold, center: int, r: float) -> Ball:
    """
    Collect the geodesic ball B(center, r).

    :param m: The manifold.
    :param center: Center vertex.
    :param r: Radius; values beyond the diameter return the whole manifold.
    :return: The ball with its members sorted by vertex index.
    """
    if r <= 0:
        raise ValueError("the ball radius must be positive, got %s" % r)
    return ball_from_distances(m, center, r, m.distances_from(center))


def ball_from_distances(m: DiscreteManifold, center: int, r: float,
                        distances: numpy.ndarray) -> Ball:
    """
    Collect B(center, r) from a precomputed row of distances.

    :param m: The manifold.
    :param center: Center vertex.
    :param r: Radius.
    :param distances: Distances from `center` to every vertex.
    :return: The ball.
    """
    members = numpy.flatnonzero(distances <= r * (1 + BALL_RADIUS_SLACK))
    return Ball(center=int(center), radius=r, members=members, distances=distances[members],
                volume=math.fsum(m.weights[members]))


def apply_laplacian(m: DiscreteManifold, field: numpy.ndarray) -> numpy.ndarray:
    """
    Apply the discrete Laplace-Beltrami operator.

    :param m: The manifold.
    :param field: (N,) or (N, k) array defined on all the vertices.
    :return: Delta field.
    """
    field = numpy.asarray(field, dtype=float)
    if field.shape[0] != m.size:
        raise ValueError("the field has %d values but the manifold has %d vertices" % (
            field.shape[0], m.size))
    return m.laplacian @ field


def p_mean(m: DiscreteManifold, ball: Ball, field: numpy.ndarray, p: float) -> float:
    """
    Compute the volume-weighted L^p average (avg_B field^p)^(1/p).

    :param m: The manifold.
    :param ball: Averaging domain.
    :param field: Nonnegative values on all the vertices.
    :param p: Exponent, at least 1.
    :return: The p-mean.
    """
    if p < 1:
        raise ValueError("the exponent must be at least 1, got %s" % p)
    if ball.size == 0:
        raise EmptyBallError("cannot average over the empty ball around %d" % ball.center)
    values = numpy.asarray(field, dtype=float)[ball.members]
    if (values < 0).any():
        raise ValueError("the averaged field must be nonnegative")
    weights = m.weights[ball.members]
    return float((numpy.dot(weights, values ** p) / weights.sum()) ** (1.0 / p))


def measure_anisotropy(m: DiscreteManifold, source: int = 0) -> float:
    """
    Measure how much the graph distance overshoots the flat closed form.

    :param m: Flat torus discretization.
    :param source: Vertex to measure from.
    :return: max(graph / exact) over the vertices within a quarter of the shorter side.
    """
    if m.spec.kind != "flat_torus":
        raise ManifoldError("the anisotropy has a closed-form reference only on flat tori")
    exact = m._flat_distances(source)
    graph = m.graph_distances_from(source)
    mask = (exact > 0) & (exact <= min(m.spec.side_lengths) * m.scale / 4)
    return float(numpy.max(graph[mask] / exact[mask]))
