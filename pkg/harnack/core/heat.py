"""Implicit Euler solvers for the heat equation and the w-equation on geodesic balls."""
import logging
import math
import threading
from typing import Callable, Dict, NamedTuple, Optional, Sequence, Tuple

import cachetools
import numpy
from pympler.asizeof import asizeof
from scipy import sparse
from scipy.sparse.linalg import splu

from harnack.core.geometry import Ball, DiscreteManifold
from harnack.core.metrics import record_event

DEFAULT_DT_FLOOR = 1e-7
DEFAULT_PICARD_TOLERANCE = 1e-10
DEFAULT_PICARD_ITERATIONS = 200
MAX_SLAB_STEPS = 64
PICARD_CONTRACTION = 0.25
RESIDUAL_TOLERANCE = 1e-8
MAXIMUM_PRINCIPLE_TOLERANCE = 1e-8
DENSE_KERNEL_ELEMENTS = 1 << 22
DEFAULT_KERNEL_CACHE_SIZE = 256 << 20
DUHAMEL_MODES = ("auto", "dense", "recursive")


class SolverError(RuntimeError):
    """A linear solve failed or produced an inaccurate result."""


class StepSizeError(SolverError):
    """The time step had to be halved below the allowed floor."""


class DuhamelConvergenceError(SolverError):
    """Picard iteration did not converge on a time slab."""


class MaximumPrincipleError(SolverError):
    """w dropped below 1, the maximum principle is violated upstream."""


class ScalarTimeField(NamedTuple):
    """
    Scalar field sampled on a time grid.

    `values[k]` holds the field on all the vertices at `times[k]`; vertices outside `domain` \
    carry the boundary value.
    """

    times: numpy.ndarray
    values: numpy.ndarray
    equation: str
    domain: Optional[numpy.ndarray] = None
    stats: Optional[dict] = None

    @property
    def size(self) -> int:
        """Return the number of vertices."""
        return self.values.shape[1]

    def at(self, index: int) -> numpy.ndarray:
        """Return the field at the given time node."""
        return self.values[index]

    def restricted(self, vertices: Sequence[int]) -> numpy.ndarray:
        """Return the (T, len(vertices)) block of values."""
        return self.values[:, numpy.asarray(vertices, dtype=int)]

    def replace_values(self, values: numpy.ndarray, equation: str) -> "ScalarTimeField":
        """Return a copy with other values on the same grid."""
        return self._replace(values=values, equation=equation)


class HeatKernel(NamedTuple):
    """Dirichlet heat kernel G_0(., t; source, 0) of a ball."""

    source: int
    ball: Ball
    times: numpy.ndarray
    values: numpy.ndarray

    def mass(self, weights: numpy.ndarray) -> numpy.ndarray:
        """Return the total weighted mass per time node."""
        return self.values @ weights


class StepPlan(NamedTuple):
    """Uniform sub-step shared by both w solvers."""

    dt: float
    substeps: int
    halvings: int


class KernelCache:
    """Memory-bounded LRU cache of Dirichlet kernel stacks."""

    _log = logging.getLogger("KernelCache")

    def __init__(self, max_size: int = DEFAULT_KERNEL_CACHE_SIZE):
        """
        Initialize a new instance of KernelCache.

        :param max_size: Maximum memory occupied by the cached arrays, in bytes.
        """
        self._cache = cachetools.LRUCache(maxsize=max_size, getsizeof=asizeof)
        self._lock = threading.Lock()

    def __str__(self) -> str:
        """Summarize KernelCache as a string."""
        return "KernelCache(%d items, %d/%d bytes)" % (
            len(self._cache), self._cache.currsize, self._cache.maxsize)

    def __len__(self) -> int:
        """Return the number of cached stacks."""
        return len(self._cache)

    def get(self, key: tuple, builder: Callable[[], numpy.ndarray]) -> numpy.ndarray:
        """
        Return the cached value or build and cache it.

        :param key: Cache key.
        :param builder: Function without arguments which produces the value on a cache miss.
        :return: The value.
        """
        with self._lock:
            value = self._cache.get(key)
        if value is not None:
            record_event("heat.kernel_cache.hits", 1)
            return value
        self._log.debug("cache miss: %s", key)
        value = builder()
        value.setflags(write=False)
        with self._lock:
            try:
                self._cache[key] = value
            except ValueError:
                self._log.warning("kernel stack of %d bytes does not fit into the cache",
                                  value.nbytes)
        return value


_kernel_cache = KernelCache()


def configure_kernel_cache(max_size: int) -> KernelCache:
    """Replace the process-wide kernel cache with an empty one of the given size in bytes."""
    global _kernel_cache
    _kernel_cache = KernelCache(max_size)
    return _kernel_cache


def _check_times(times: Sequence[float]) -> numpy.ndarray:
    times = numpy.asarray(times, dtype=float)
    if times.ndim != 1 or len(times) == 0 or times[0] != 0:
        raise ValueError("the time grid must be one-dimensional and start at 0")
    if (numpy.diff(times) <= 0).any():
        raise ValueError("the time grid must be strictly increasing")
    return times


def _substep_counts(times: numpy.ndarray, max_substep: Optional[float]) -> numpy.ndarray:
    intervals = numpy.diff(times)
    if max_substep is None:
        return numpy.ones(len(intervals), dtype=int)
    if max_substep <= 0:
        raise ValueError("the maximum sub-step must be positive, got %s" % max_substep)
    return numpy.maximum(1, numpy.ceil(intervals / max_substep - 1e-9)).astype(int)


def _restrict(m: DiscreteManifold, ball: Optional[Ball]) -> Tuple[
        numpy.ndarray, numpy.ndarray, sparse.csr_matrix, numpy.ndarray]:
    """
    Return the unknowns, their weights, the restricted stiffness and the boundary coupling.

    The coupling S_BB 1 equals minus the stiffness mass connecting the ball to its \
    complement, so it is nonnegative and vanishes on closed domains.
    """
    if ball is None:
        members = numpy.arange(m.size)
        return members, m.weights, m.stiffness, numpy.zeros(m.size)
    members = ball.members
    if len(members) == 0:
        raise ValueError("the ball around %d has no vertices" % ball.center)
    block = m.stiffness[members][:, members].tocsr()
    coupling = numpy.asarray(block @ numpy.ones(len(members))).ravel()
    return members, m.weights[members], block, numpy.maximum(coupling, 0)


class _Factorization:
    """Sparse LU of a system matrix with residual checks."""

    def __init__(self, matrix: sparse.spmatrix):
        self.matrix = matrix.tocsc()
        try:
            self.lu = splu(self.matrix)
        except RuntimeError as e:
            raise SolverError("failed to factorize the %dx%d system: %s" % (
                self.matrix.shape + (e,))) from e

    def solve(self, rhs: numpy.ndarray) -> numpy.ndarray:
        x = self.lu.solve(rhs)
        scale = max(numpy.abs(rhs).max(), numpy.finfo(float).tiny)
        residual = numpy.abs(self.matrix @ x - rhs).max() / scale
        if not numpy.isfinite(residual) or residual > RESIDUAL_TOLERANCE:
            raise SolverError("the linear solve is inaccurate: relative residual %.3g, "
                              "solution range [%.6g, %.6g]" % (residual, x.min(), x.max()))
        return x


def solve_heat(m: DiscreteManifold, init: numpy.ndarray, times: Sequence[float],
               ball: Optional[Ball] = None, boundary: float = 0.0,
               max_substep: Optional[float] = None) -> ScalarTimeField:
    """
    Solve the heat equation u_t = Delta u with implicit Euler.

    :param m: The manifold.
    :param init: Initial datum on all the vertices.
    :param times: Output time grid, starts at 0 and strictly increases.
    :param ball: Dirichlet domain; None solves on the whole closed manifold.
    :param boundary: Dirichlet value on the complement of the ball.
    :param max_substep: Upper bound of the internal time step; None steps once per interval.
    :return: ScalarTimeField with equation "heat".
    """
    init = numpy.asarray(init, dtype=float)
    if init.shape != (m.size,):
        raise ValueError("the initial datum has shape %s but the manifold has %d vertices" % (
            init.shape, m.size))
    if not numpy.isfinite(init).all():
        raise ValueError("the initial datum must be finite")
    times = _check_times(times)
    counts = _substep_counts(times, max_substep)
    members, weights, stiffness, coupling = _restrict(m, ball)
    values = numpy.empty((len(times), m.size))
    values[0] = init
    if ball is not None:
        values[1:] = boundary
    factorizations = {}  # type: Dict[float, _Factorization]
    u = init[members].copy()
    for k, (interval, count) in enumerate(zip(numpy.diff(times), counts), start=1):
        dt = interval / count
        solver = factorizations.get(dt)
        if solver is None:
            solver = factorizations[dt] = _Factorization(
                sparse.diags(weights) + dt * stiffness)
        for _ in range(count):
            u = solver.solve(weights * u + dt * boundary * coupling)
        values[k, members] = u
    record_event("heat.substeps", int(counts.sum()))
    return ScalarTimeField(times, values, "heat", None if ball is None else members,
                           {"substeps": int(counts.sum())})


def dirichlet_heat_kernel(m: DiscreteManifold, ball: Ball, source: int, times: Sequence[float],
                          max_substep: Optional[float] = None) -> HeatKernel:
    """
    Evolve the normalized discrete delta at `source` with absorbing boundary.

    :param m: The manifold.
    :param ball: Dirichlet domain.
    :param source: Source vertex inside the ball.
    :param times: Output time grid.
    :param max_substep: Upper bound of the internal time step.
    :return: HeatKernel in 1/area units.
    """
    if source not in ball:
        raise ValueError("the source %d is outside of the ball around %d" % (source, ball.center))
    delta = numpy.zeros(m.size)
    delta[source] = 1 / m.weights[source]
    field = solve_heat(m, delta, times, ball=ball, boundary=0.0, max_substep=max_substep)
    return HeatKernel(source=source, ball=ball, times=field.times, values=field.values)


def _w_inputs(m: DiscreteManifold, V: numpy.ndarray, a: float,
              times: Sequence[float]) -> Tuple[numpy.ndarray, numpy.ndarray]:
    if a <= 1:
        raise ValueError("the coefficient a must exceed 1, got %s" % a)
    V = numpy.asarray(V, dtype=float)
    if V.shape != (m.size,):
        raise ValueError("the potential has shape %s but the manifold has %d vertices" % (
            V.shape, m.size))
    if not numpy.isfinite(V).all() or (V < 0).any():
        raise ValueError("the potential must be finite and nonnegative")
    times = _check_times(times)
    intervals = numpy.diff(times)
    if len(intervals) and not numpy.allclose(intervals, intervals[0], rtol=1e-9, atol=0):
        raise ValueError("the w solvers require a uniform time grid")
    return times, V


def plan_w_steps(m: DiscreteManifold, ball: Ball, V: numpy.ndarray, a: float,
                 times: Sequence[float], max_substep: Optional[float] = None,
                 dt_floor: float = DEFAULT_DT_FLOOR) -> StepPlan:
    """
    Choose the sub-step so that the implicit w operator stays strictly diagonally dominant.

    The operator is W + dt S_BB - dt 2(a-1) W V; it is a nonsingular M-matrix when every row \
    satisfies w_i (1 - dt 2(a-1) V_i) + dt b_i > 0 with b the boundary coupling. The step is \
    halved until the stronger condition with 2 dt in place of dt holds, which also makes \
    every single-step Picard iteration contract by at least 1/2.

    :return: StepPlan.
    """
    times, V = _w_inputs(m, V, a, times)
    if len(times) == 1:
        return StepPlan(dt=0.0, substeps=0, halvings=0)
    interval = float(times[1] - times[0])
    substeps = int(_substep_counts(times[:2], max_substep)[0])
    _, weights, _, coupling = _restrict(m, ball)
    rate = 2 * (a - 1) * V[ball.members]
    halvings = 0
    while True:
        dt = interval / substeps
        if (weights * (1 - 2 * dt * rate) + dt * coupling > 0).all():
            break
        if dt / 2 < dt_floor:
            raise StepSizeError(
                "the w operator is not diagonally dominant even at dt = %.3g (floor %.3g), "
                "max 2(a-1)V = %.6g" % (dt, dt_floor, rate.max()))
        substeps *= 2
        halvings += 1
    if halvings:
        logging.getLogger("heat").info("halved the w time step %d times down to %.3g",
                                       halvings, dt)
        record_event("heat.dt_halvings", halvings)
    return StepPlan(dt=dt, substeps=substeps, halvings=halvings)


def _check_maximum_principle(values: numpy.ndarray, method: str):
    lowest = values.min()
    if lowest < 1 - MAXIMUM_PRINCIPLE_TOLERANCE:
        raise MaximumPrincipleError("%s w solve reached %.12g < 1" % (method, lowest))


def solve_w_direct(m: DiscreteManifold, ball: Ball, V: numpy.ndarray, a: float,
                   times: Sequence[float], max_substep: Optional[float] = None,
                   dt_floor: float = DEFAULT_DT_FLOOR) -> ScalarTimeField:
    """
    Solve Delta w - w_t + 2(a-1) V w = 0 on the ball, w = 1 at t = 0 and on the boundary.

    The potential term is implicit, so every step inverts an M-matrix and w >= 1 holds \
    exactly at the discrete level.

    :param m: The manifold.
    :param ball: Dirichlet domain.
    :param V: Nonnegative potential on all the vertices.
    :param a: Coefficient, a > 1.
    :param times: Uniform output time grid starting at 0.
    :param max_substep: Upper bound of the internal time step.
    :param dt_floor: Smallest internal time step before giving up.
    :return: ScalarTimeField with equation "w"; the value outside the ball is 1.
    """
    times, V = _w_inputs(m, V, a, times)
    plan = plan_w_steps(m, ball, V, a, times, max_substep, dt_floor)
    members, weights, stiffness, coupling = _restrict(m, ball)
    values = numpy.ones((len(times), m.size))
    stats = {"dt": plan.dt, "substeps": plan.substeps, "halvings": plan.halvings}
    potential = V[members]
    if not potential.any() or len(times) == 1:
        return ScalarTimeField(times, values, "w", members, stats)
    rate = 2 * (a - 1) * potential
    solver = _Factorization(sparse.diags(weights * (1 - plan.dt * rate)) +
                            plan.dt * stiffness)
    w = numpy.ones(len(members))
    for k in range(1, len(times)):
        for _ in range(plan.substeps):
            w = solver.solve(weights * w + plan.dt * coupling)
        values[k, members] = w
    _check_maximum_principle(values, "direct")
    record_event("heat.w_direct.substeps", plan.substeps * (len(times) - 1))
    return ScalarTimeField(times, values, "w", members, stats)


def kernel_stack(m: DiscreteManifold, ball: Ball, dt: float, steps: int,
                 cache: Optional[KernelCache] = None) -> numpy.ndarray:
    """
    Tabulate the discrete Dirichlet kernels K_j(x, y) = G_0(x, j dt; y, 0), j = 1..steps.

    K_1 = (W + dt S_BB)^{-1} and K_{j+1} = (W + dt S_BB)^{-1} W K_j; every K_j is symmetric.

    :return: Read-only (steps, |B|, |B|) array.
    """
    cache = cache if cache is not None else _kernel_cache

    def build() -> numpy.ndarray:
        members, weights, stiffness, _ = _restrict(m, ball)
        solver = _Factorization(sparse.diags(weights) + dt * stiffness)
        stack = numpy.empty((steps, len(members), len(members)))
        stack[0] = solver.lu.solve(numpy.eye(len(members)))
        for j in range(1, steps):
            stack[j] = solver.lu.solve(weights[:, None] * stack[j - 1])
        return stack

    return cache.get((m.fingerprint, ball.center, ball.radius, dt, steps), build)


class _PicardSlab:
    """Fixed-point iteration of the discrete Duhamel formula on consecutive sub-steps."""

    def __init__(self, weights: numpy.ndarray, rate: numpy.ndarray, dt: float,
                 heat: _Factorization, kernels: Optional[numpy.ndarray]):
        self.weights = weights
        self.source_factor = dt * rate * weights
        self.heat = heat
        self.kernels = kernels

    def convolve(self, z0: numpy.ndarray, w: numpy.ndarray) -> numpy.ndarray:
        """Return w_j - 1 = K_j W z0 + sum_k K_{j-k+1} dt 2(a-1) W V w_k for the slab."""
        steps = len(w)
        sources = self.source_factor * w
        if self.kernels is None:
            result = numpy.empty_like(w)
            z = z0
            for j in range(steps):
                z = self.heat.lu.solve(self.weights * z + sources[j])
                result[j] = z
            return result
        history = self.weights * z0
        result = numpy.einsum("jxy,y->jx", self.kernels[:steps], history)
        for lag in range(steps):
            result[lag:] += (self.kernels[lag] @ sources[:steps - lag].T).T
        return result

    def solve(self, z0: numpy.ndarray, steps: int, tolerance: float,
              max_iterations: int) -> Tuple[numpy.ndarray, int, bool]:
        current = numpy.ones((steps, len(z0)))
        monotone = True
        change = numpy.inf
        for iteration in range(1, max_iterations + 1):
            updated = 1 + self.convolve(z0, current)
            if (updated < current - 1e-12 * numpy.abs(current)).any():
                monotone = False
            change = numpy.abs(updated - current).max() / numpy.abs(updated).max()
            current = updated
            if change <= tolerance:
                return current, iteration, monotone
        raise DuhamelConvergenceError(
            "Picard iteration did not converge in %d iterations on a slab of %d steps "
            "(last relative change %.3g); use a smaller slab or time step" % (
                max_iterations, steps, change))


def solve_w_duhamel(m: DiscreteManifold, ball: Ball, V: numpy.ndarray, a: float,
                    times: Sequence[float], max_substep: Optional[float] = None,
                    dt_floor: float = DEFAULT_DT_FLOOR,
                    tolerance: float = DEFAULT_PICARD_TOLERANCE,
                    max_iterations: int = DEFAULT_PICARD_ITERATIONS,
                    max_slab: int = MAX_SLAB_STEPS, mode: str = "auto",
                    cache: Optional[KernelCache] = None) -> ScalarTimeField:
    """
    Solve the w-equation through its Duhamel representation with Picard iteration.

    w(t) = 1 + 2(a-1) int_0^t int_B G_0(x, t; y, s) V(y) w(y, s) dy ds is discretized with the \
    kernel lag (j - k + 1) dt for the source step k, so the fixed point coincides with the \
    implicit Euler solution of `solve_w_direct()` on the same sub-steps. The time axis is \
    split into slabs short enough for the integral operator to contract by `PICARD_CONTRACTION` \
    and the iteration restarts from w = 1 on every slab.

    :param m: The manifold.
    :param ball: Dirichlet domain.
    :param V: Nonnegative potential on all the vertices.
    :param a: Coefficient, a > 1.
    :param times: Uniform output time grid starting at 0.
    :param max_substep: Upper bound of the internal time step.
    :param dt_floor: Smallest internal time step before giving up.
    :param tolerance: Relative change which stops the Picard iteration.
    :param max_iterations: Maximum number of Picard iterations per slab.
    :param max_slab: Maximum number of sub-steps per slab.
    :param mode: "dense" convolves with tabulated kernel stacks, "recursive" applies the \
                 kernels through the semigroup property, "auto" picks dense for small balls.
    :param cache: Kernel stack cache; the process-wide one by default.
    :return: ScalarTimeField with equation "w" and the Picard and lag statistics.
    """
    if mode not in DUHAMEL_MODES:
        raise ValueError("unsupported Duhamel mode %r, choose one of %s" % (
            mode, ", ".join(DUHAMEL_MODES)))
    times, V = _w_inputs(m, V, a, times)
    plan = plan_w_steps(m, ball, V, a, times, max_substep, dt_floor)
    members, weights, stiffness, _ = _restrict(m, ball)
    values = numpy.ones((len(times), m.size))
    potential = V[members]
    rate = 2 * (a - 1) * potential
    total_steps = plan.substeps * (len(times) - 1)
    if total_steps == 0:
        return ScalarTimeField(times, values, "w", members, {
            "dt": plan.dt, "substeps": 0, "halvings": 0, "slab": 0, "iterations": [],
            "monotone": True, "mode": mode, "lag_split": None})
    if rate.max() > 0:
        slab = int(PICARD_CONTRACTION / (plan.dt * rate.max()))
    else:
        slab = max_slab
    slab = max(1, min(slab, max_slab, total_steps))
    dense = mode == "dense" or (mode == "auto" and slab * len(members) ** 2 <=
                                DENSE_KERNEL_ELEMENTS)
    heat = _Factorization(sparse.diags(weights) + plan.dt * stiffness)
    kernels = kernel_stack(m, ball, plan.dt, slab, cache) if dense else None
    picard = _PicardSlab(weights, rate, plan.dt, heat, kernels)
    z = numpy.zeros(len(members))
    source_mass = numpy.zeros(total_steps + 1)
    iterations = []
    monotone = True
    step = 0
    while step < total_steps:
        steps = min(slab, total_steps - step)
        block, count, ok = picard.solve(z, steps, tolerance, max_iterations)
        iterations.append(count)
        monotone &= ok
        source_mass[step + 1:step + steps + 1] = (block * picard.source_factor).sum(axis=1)
        for j in range(steps):
            if (step + j + 1) % plan.substeps == 0:
                values[(step + j + 1) // plan.substeps, members] = block[j]
        step += steps
        z = block[-1] - 1
    _check_maximum_principle(values, "Duhamel")
    record_event("heat.w_duhamel.slabs", len(iterations))
    for count in iterations:
        record_event("heat.w_duhamel.picard_iterations", count)
    stats = {
        "dt": plan.dt, "substeps": plan.substeps, "halvings": plan.halvings, "slab": slab,
        "iterations": iterations, "monotone": monotone, "mode": "dense" if dense else "recursive",
        "lag_split": _lag_split(source_mass, plan, ball.radius, len(times)),
    }
    return ScalarTimeField(times, values, "w", members, stats)


def _lag_split(source_mass: numpy.ndarray, plan: StepPlan, radius: float,
               nodes: int) -> dict:
    """
    Split the accumulated source mass into lags t - s >= r^2 and t - s < r^2.

    The kernel mass never exceeds 1, so each part bounds the weighted mass that the \
    corresponding lags contribute to w - 1.
    """
    cumulative = numpy.cumsum(source_mass)
    threshold = max(1, int(math.ceil(radius ** 2 / plan.dt - 1e-9)))
    far, near = [0.0], [0.0]
    for k in range(1, nodes):
        step = k * plan.substeps
        far_part = cumulative[max(0, step - threshold + 1)]
        far.append(float(far_part))
        near.append(float(cumulative[step] - far_part))
    return {"threshold_time": threshold * plan.dt, "far": far, "near": near}


def j_from_w(w: ScalarTimeField, a: float,
             tolerance: float = MAXIMUM_PRINCIPLE_TOLERANCE) -> ScalarTimeField:
    """
    Convert w = J^{-(a-1)} into J.

    :param w: Solution of the w-equation.
    :param a: Coefficient, a > 1.
    :param tolerance: Allowed undershoot of w below 1; such values are clipped to 1.
    :return: ScalarTimeField with equation "J" and values in (0, 1].
    """
    if a <= 1:
        raise ValueError("the coefficient a must exceed 1, got %s" % a)
    lowest = w.values.min()
    if lowest < 1 - tolerance:
        raise MaximumPrincipleError("w reached %.12g < 1" % lowest)
    return w.replace_values(numpy.maximum(w.values, 1) ** (-1 / (a - 1)), "J")
