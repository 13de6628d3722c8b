"""Built-in model surfaces."""
from typing import Callable, Dict, Sequence

from harnack.core.geometry import ManifoldSpec


def flat_torus(side_length: float = 1.0, resolution: Sequence[int] = (64, 64),
               **kwargs) -> ManifoldSpec:
    """Square flat torus."""
    return ManifoldSpec("flat_torus", side_lengths=(side_length, side_length),
                        resolution=tuple(resolution), **kwargs)


def collapsed_torus(epsilon: float = 0.05, resolution: Sequence[int] = (8, 128),
                    **kwargs) -> ManifoldSpec:
    """Flat torus with one short circle of length `epsilon`: unit balls have tiny volume."""
    return ManifoldSpec("flat_torus", side_lengths=(epsilon, 1.0),
                        resolution=tuple(resolution), **kwargs)


def flat_polar(radial_range: Sequence[float] = (0.1, 2.0),
               resolution: Sequence[int] = (64, 64), **kwargs) -> ManifoldSpec:
    """Flat annulus in polar coordinates, f(r) = r."""
    return ManifoldSpec("warped_product", warp="r", radial_range=tuple(radial_range),
                        resolution=tuple(resolution), **kwargs)


def hyperbolic(curvature: float = -1.0, radial_range: Sequence[float] = (0.1, 2.0),
               resolution: Sequence[int] = (64, 64), **kwargs) -> ManifoldSpec:
    """Constant negative curvature, f(r) = sinh(sqrt(-K) r) / sqrt(-K)."""
    if curvature >= 0:
        raise ValueError("hyperbolic models need negative curvature, got %s" % curvature)
    k = (-curvature) ** 0.5
    warp = "sinh(r)" if k == 1 else "sinh(%r*r)/%r" % (k, k)
    return ManifoldSpec("warped_product", warp=warp, radial_range=tuple(radial_range),
                        resolution=tuple(resolution), **kwargs)


def spherical(radial_range: Sequence[float] = (0.1, 3.0),
              resolution: Sequence[int] = (64, 64), **kwargs) -> ManifoldSpec:
    """Unit sphere without the polar caps, f(r) = sin(r)."""
    return ManifoldSpec("warped_product", warp="sin(r)", radial_range=tuple(radial_range),
                        resolution=tuple(resolution), **kwargs)


def curvature_bump(amplitude: float = 0.1, center: float = 1.0, width: float = 0.1,
                   radial_range: Sequence[float] = (0.1, 2.0),
                   resolution: Sequence[int] = (64, 64), **kwargs) -> ManifoldSpec:
    """
    Flat metric with a localized ring of curvature.

    f(r) = r * (1 + A * exp(-(r - r0)^2 / sigma^2)) gives |Ric^-| concentrated around r0, so \
    the integral norm stays small while the pointwise lower bound is large.
    """
    warp = "r*(1 + %r*exp(-(r - %r)**2/%r**2))" % (amplitude, center, width)
    return ManifoldSpec("warped_product", warp=warp, radial_range=tuple(radial_range),
                        resolution=tuple(resolution), **kwargs)


CATALOG = {
    "flat_torus": flat_torus,
    "collapsed_torus": collapsed_torus,
    "flat_polar": flat_polar,
    "hyperbolic": hyperbolic,
    "spherical": spherical,
    "curvature_bump": curvature_bump,
}  # type: Dict[str, Callable[..., ManifoldSpec]]


def create_model(name: str, **parameters) -> ManifoldSpec:
    """
    Instantiate a catalog model by name.

    :param name: Key in `CATALOG`.
    :param parameters: Passed to the factory.
    :return: The model description.
    """
    try:
        factory = CATALOG[name]
    except KeyError:
        raise ValueError("unknown model %r, choose one of %s" % (
            name, ", ".join(sorted(CATALOG)))) from None
    return factory(**parameters)
