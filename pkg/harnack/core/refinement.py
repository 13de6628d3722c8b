"""Grid refinement studies against closed-form answers."""
import logging
import math
from typing import List, NamedTuple, Optional, Sequence

import numpy
from scipy import integrate

from harnack.core.geometry import (ball, build_manifold, DiscreteManifold, lambdify_radial,
                                   ManifoldSpec)
from harnack.core.heat import solve_heat
from harnack.core.lemmas import build_cutoff

MIN_LEVELS = 3
QUANTITIES = ("eigenfunction_decay", "ball_volume", "constant_solution", "gaussian_quotient",
              "cutoff")
# quantities without a closed form, tabulated as the relative change from the coarser level
DRIFTS = ("cutoff",)
GAUSSIAN_TIMES = (0.02, 0.05, 0.1, 0.2)


class RefinementRow(NamedTuple):
    """Error of one quantity on one grid level."""

    quantity: str
    level: int
    resolution: tuple
    h: float
    error: float
    order: Optional[float]


def refined_specs(spec: ManifoldSpec, levels: int) -> List[ManifoldSpec]:
    """Return the manifold description with the resolution doubled `levels - 1` times."""
    return [spec._replace(resolution=tuple(n * 2 ** level for n in spec.resolution))
            for level in range(levels)]


def eigenfunction_error(m: DiscreteManifold, t_end: float = 0.1,
                        courant: float = 0.25) -> float:
    """
    Evolve sin(2 pi x / L) with dt = courant h^2 and compare with exp(-(2 pi / L)^2 t).

    :return: Sup error relative to the exact amplitude.
    """
    length = m.spec.side_lengths[0]
    wave = 2 * math.pi / length
    profile = numpy.sin(wave * m.coordinates[:, 0])
    h = max(m.spacing)
    field = solve_heat(m, profile, [0.0, t_end], max_substep=courant * h ** 2)
    decay = math.exp(-wave ** 2 * t_end)
    return float(numpy.abs(field.values[-1] - decay * profile).max() / decay)


def exact_ball_volume(spec: ManifoldSpec, radius: float) -> float:
    """Area of the geodesic ball of the given radius around the pole or in the flat plane."""
    if spec.kind == "flat_torus":
        return math.pi * radius ** 2
    warp = lambdify_radial(spec.warp_expression())
    area, _ = integrate.quad(lambda r: float(warp(r)), 0, radius)
    return 2 * math.pi * area


def _center(m: DiscreteManifold) -> int:
    if m.spec.kind == "flat_torus":
        return m.nearest_vertex([length / 2 for length in m.spec.side_lengths])
    return m.pole


def ball_volume_error(m: DiscreteManifold, radius: float = 0.5) -> float:
    """Relative error of the discrete ball volume."""
    exact = exact_ball_volume(m.spec, radius)
    return abs(ball(m, _center(m), radius).volume - exact) / exact


def constant_solution_error(m: DiscreteManifold, value: float = 1.0,
                            t_end: float = 0.1) -> float:
    """Sup deviation of the heat flow of a constant."""
    field = solve_heat(m, numpy.full(m.size, value), [0.0, t_end / 2, t_end])
    return float(numpy.abs(field.values - value).max())


def gaussian_quotient_error(m: DiscreteManifold, times: Sequence[float] = GAUSSIAN_TIMES
                            ) -> float:
    """
    Sample the planar heat kernel and compare |grad u|^2 / u^2 - Delta u / u with n / (2t).

    The comparison runs over the vertices within 2 sqrt(t) of the source.

    :return: Largest relative error over the times.
    """
    center = _center(m)
    d2 = m.distances_from(center) ** 2
    worst = 0.0
    for t in times:
        u = numpy.exp(-d2 / (4 * t)) / (4 * math.pi * t)
        region = d2 <= 4 * t
        quotient = m.gradient_norm_sq(u) / u ** 2 - (m.laplacian @ u) / u
        exact = m.dimension / (2 * t)
        worst = max(worst, float(numpy.abs(quotient[region] - exact).max() / exact))
    return worst


def cutoff_constant(m: DiscreteManifold, radius: float = 0.25) -> float:
    """Return c* of the C^2 plateau cutoff of the ball around the center."""
    return build_cutoff(m, _center(m), radius).c_star


def relative_drifts(values: Sequence[float]) -> List[float]:
    """Return |v_k - v_{k-1}| / |v_{k-1}|, zero on the first level."""
    return [0.0] + [abs(values[k] - values[k - 1]) / abs(values[k - 1])
                    for k in range(1, len(values))]


def empirical_orders(h: Sequence[float], errors: Sequence[float]) -> List[Optional[float]]:
    """Return log(e_{k-1} / e_k) / log(h_{k-1} / h_k), None on the first level or zero errors."""
    orders = [None]  # type: List[Optional[float]]
    for k in range(1, len(errors)):
        if errors[k] > 0 and errors[k - 1] > 0:
            orders.append(math.log(errors[k - 1] / errors[k]) / math.log(h[k - 1] / h[k]))
        else:
            orders.append(None)
    return orders


def refinement_study(spec: ManifoldSpec, levels: int = MIN_LEVELS,
                     quantities: Sequence[str] = QUANTITIES) -> List[RefinementRow]:
    """
    Tabulate the errors against closed-form answers over successively doubled grids.

    Eigenfunction decay, the Gaussian quotient and the cutoff constant need a flat torus and \
    are skipped on the other models; the ball volume needs a flat torus or a capped chart. \
    The cutoff constant has no closed form: its rows hold the relative drift of c* from \
    the coarser level.

    :param spec: Coarsest grid.
    :param levels: Number of grid levels, at least 3.
    :param quantities: Which quantities to study.
    :return: Rows ordered by quantity and level.
    """
    if levels < MIN_LEVELS:
        raise ValueError("a refinement study needs at least %d levels, got %d" % (
            MIN_LEVELS, levels))
    unknown = set(quantities) - set(QUANTITIES)
    if unknown:
        raise ValueError("unknown quantities %s, choose from %s" % (
            ", ".join(sorted(unknown)), ", ".join(QUANTITIES)))
    log = logging.getLogger("refinement")
    flat = spec.kind == "flat_torus"
    applicable = {
        "eigenfunction_decay": flat,
        "ball_volume": flat or spec.cap,
        "constant_solution": True,
        "gaussian_quotient": flat,
        "cutoff": flat,
    }
    errors = {
        "eigenfunction_decay": eigenfunction_error,
        "ball_volume": ball_volume_error,
        "constant_solution": constant_solution_error,
        "gaussian_quotient": gaussian_quotient_error,
        "cutoff": cutoff_constant,
    }
    selected = [q for q in QUANTITIES if q in quantities and applicable[q]]
    for skipped in sorted(set(quantities) - set(selected)):
        log.warning("%s does not apply to %s models", skipped, spec.kind)
    manifolds = [build_manifold(refined) for refined in refined_specs(spec, levels)]
    steps = [max(m.spacing) for m in manifolds]
    rows = []
    for quantity in selected:
        values = [errors[quantity](m) for m in manifolds]
        if quantity in DRIFTS:
            log.info("%s: values %s", quantity, ", ".join("%.3g" % v for v in values))
            values = relative_drifts(values)
        for level, (m, h, error, order) in enumerate(zip(
                manifolds, steps, values, empirical_orders(steps, values))):
            rows.append(RefinementRow(quantity, level, m.shape, h, error, order))
        log.info("%s: errors %s", quantity, ", ".join("%.3g" % e for e in values))
    return rows
