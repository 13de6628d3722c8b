"""Scenario files: JSON loading, schema and semantic validation, defaults."""
import json
import logging
import os
from typing import Dict, Iterable, List, NamedTuple, Optional, Sequence, Tuple

import jsonschema
import numpy

from harnack.core.catalog import create_model
from harnack.core.geometry import ManifoldError, ManifoldSpec
from harnack.core.liyau import LiYauParams

SCHEMA_PATH = os.path.join(os.path.dirname(__file__), "scenario.schema.json")
SCENARIOS_DIR = os.path.join(os.path.dirname(__file__), "scenarios")
DEFAULT_C = 1.0
DEFAULT_KAPPA = 0.0
# these checks need 0 < alpha < 1 because they use a = 5 / delta
ALPHA_CHECKS = frozenset(("li_yau", "li_yau_corrupted", "w_solvers", "maximum_principle",
                          "gronwall", "claim"))
SOLVER_DEFAULTS = {
    "dt_time": 0.01,
    "t_max_time": 1.0,
    "t_min_time": None,
    "max_substep_time": None,
    "dt_floor_time": 1e-7,
    "picard_tolerance": 1e-10,
    "picard_max_iterations": 200,
    "duhamel_mode": "auto",
    "relative_tolerance": 1e-3,
    "scheme_error": 0.0,
    "cross_tolerance": 1e-3,
    "duhamel_radius_length": 0.25,
    "curvature_samples": 256,
}
INITIAL_DEFAULTS = {
    "kind": "gaussian",
    "width_time": 0.05,
    "floor": 0.01,
    "value": 1.0,
    "mode": [1, 0],
    "offset": 2.0,
}
LEMMA_DEFAULTS = {
    "doubling_radii_length": [[0.1, 0.5], [0.25, 1.0]],
    "doubling_centers": "origin",
    "sobolev_radius_length": 0.5,
    "sobolev_random_functions": 20,
    "sobolev_bound": 1.0,
    "gaussian_radius_length": 0.8,
    "gaussian_t_range_time": [0.01, 0.02],
    "gaussian_dt_time": 1e-4,
    "gaussian_d2_over_t_max": 4.0,
    "gaussian_reference_C2": None,
    "gaussian_tolerance": 0.05,
    "cutoff_radius_length": 0.25,
    "cutoff_degree": 5,
    "cutoff_bound": 1000.0,
}
_schema = None


class ScenarioValidationError(ValueError):
    """The scenario file is invalid; `diagnostics` lists "<field.path>: <message>" lines."""

    def __init__(self, diagnostics: Sequence[str]):
        """
        Initialize a new instance of ScenarioValidationError.

        :param diagnostics: Field-level messages.
        """
        self.diagnostics = list(diagnostics)
        super().__init__("; ".join(self.diagnostics))


class Scenario(NamedTuple):
    """Validated scenario with all the defaults filled in."""

    id: str
    description: str
    seed: int
    negative_control: bool
    spec: ManifoldSpec
    origin_chart: Tuple[float, float]
    liyau: dict
    solver: dict
    initial: dict
    lemmas: dict
    checks: Tuple[str, ...]
    source: str = "<memory>"

    def params(self, C: float = DEFAULT_C, kappa: float = DEFAULT_KAPPA) -> LiYauParams:
        """
        Compose LiYauParams; C and kappa written in the scenario take precedence.

        :param C: Structural constant used when the scenario does not fix it.
        :param kappa: Smallness threshold used when the scenario does not fix it.
        :return: LiYauParams.
        """
        liyau = self.liyau
        return LiYauParams(
            n=liyau["n"], p=float(liyau["p"]), alpha=float(liyau["alpha"]),
            C=float(liyau["C"]) if liyau.get("C") is not None else float(C),
            kappa=float(liyau["kappa"]) if liyau.get("kappa") is not None else float(kappa),
            r=float(liyau["radius_length"]))

    @property
    def has_fixed_constants(self) -> bool:
        """Return True if both C and kappa are written in the scenario."""
        return self.liyau.get("C") is not None and self.liyau.get("kappa") is not None

    def times(self) -> numpy.ndarray:
        """Return the uniform output time grid [0, dt, ..., t_max]."""
        dt = self.solver["dt_time"]
        steps = int(round(self.solver["t_max_time"] / dt))
        return numpy.arange(steps + 1) * dt

    @property
    def t_min(self) -> float:
        """Return the start of the checked time window, 2 dt by default."""
        value = self.solver["t_min_time"]
        return 2 * self.solver["dt_time"] if value is None else value

    @property
    def classical_alpha(self) -> float:
        """Return the weight of the classical bound, 1 on flat models and 2 otherwise."""
        value = self.liyau.get("classical_alpha")
        if value is not None:
            return float(value)
        return 1.0 if self.liyau["classical_K"] == 0 else 2.0


def schema() -> dict:
    """Load the published JSON schema of the scenario files."""
    global _schema
    if _schema is None:
        with open(SCHEMA_PATH) as fin:
            _schema = json.load(fin)
    return _schema


def _path(prefix: str, error: jsonschema.ValidationError) -> str:
    parts = [prefix] if prefix else []
    for item in error.absolute_path:
        if isinstance(item, int):
            if parts:
                parts[-1] += "[%d]" % item
            else:
                parts.append("[%d]" % item)
        else:
            parts.append(item)
    return ".".join(parts) or "<root>"


def _manifold_spec(manifold: dict) -> ManifoldSpec:
    if "model" in manifold:
        parameters = {key: tuple(value) if isinstance(value, list) else value
                      for key, value in manifold.get("parameters", {}).items()}
        try:
            return create_model(manifold["model"], **parameters)
        except TypeError as e:
            raise ManifoldError("invalid parameters of %s: %s" % (manifold["model"], e)) from None
    kwargs = {}
    for field, name in (("side_lengths_length", "side_lengths"),
                        ("radial_range_length", "radial_range"), ("resolution", "resolution")):
        if field in manifold:
            kwargs[name] = tuple(manifold[field])
    for name in ("warp", "dimension", "cap", "distance", "stencil"):
        if name in manifold:
            kwargs[name] = manifold[name]
    return ManifoldSpec(manifold["kind"], **kwargs)


def _semantic_errors(data: dict, spec: Optional[ManifoldSpec], prefix: str) -> Iterable[str]:
    def field(name: str) -> str:
        return "%s.%s" % (prefix, name) if prefix else name

    liyau = data["liyau"]
    n = liyau.get("n", spec.dimension if spec is not None else 2)
    if spec is not None and n != spec.dimension:
        yield "%s: n = %s must equal the manifold dimension %s" % (field("liyau.n"), n,
                                                                   spec.dimension)
    if liyau["p"] <= n / 2:
        yield "%s: p = %s must exceed n/2 = %s" % (field("liyau.p"), liyau["p"], n / 2)
    requested = set(data["checks"])
    if requested & ALPHA_CHECKS and not 0 < liyau["alpha"] < 1:
        yield "%s: alpha = %s must lie in (0, 1) for %s" % (
            field("liyau.alpha"), liyau["alpha"], ", ".join(sorted(requested & ALPHA_CHECKS)))
    if liyau.get("classical_K", 0) > 0 and liyau.get("classical_alpha", 2) <= 1:
        yield "%s: must exceed 1 when classical_K > 0" % field("liyau.classical_alpha")
    solver = dict(SOLVER_DEFAULTS, **data.get("solver", {}))
    if solver["dt_time"] > solver["t_max_time"]:
        yield "%s: exceeds t_max_time" % field("solver.dt_time")
    if solver["t_min_time"] is not None and solver["t_min_time"] > solver["t_max_time"]:
        yield "%s: exceeds t_max_time" % field("solver.t_min_time")
    if solver["max_substep_time"] is not None and solver["max_substep_time"] > solver["dt_time"]:
        yield "%s: exceeds dt_time" % field("solver.max_substep_time")
    lemmas = dict(LEMMA_DEFAULTS, **data.get("lemmas", {}))
    for i, (r1, r2) in enumerate(lemmas["doubling_radii_length"]):
        if not 0 < r1 <= r2 <= 1:
            yield "%s[%d]: expected 0 < r1 <= r2 <= 1" % (field("lemmas.doubling_radii_length"), i)
    t1, t2 = lemmas["gaussian_t_range_time"]
    if not 0 < t1 < t2 <= 1:
        yield "%s: expected 0 < t1 < t2 <= 1" % field("lemmas.gaussian_t_range_time")
    if not 0 < lemmas["cutoff_radius_length"] <= 1:
        yield "%s: expected a radius in (0, 1]" % field("lemmas.cutoff_radius_length")
    initial = dict(INITIAL_DEFAULTS, **data.get("initial", {}))
    if initial["kind"] == "eigenfunction" and spec is not None and spec.kind != "flat_torus":
        yield "%s: eigenfunction data need a flat torus" % field("initial.kind")


def parse_scenario(data: dict, source: str = "<memory>", prefix: str = "") -> Scenario:
    """
    Validate a scenario dictionary and fill in the defaults.

    :param data: Decoded JSON object of one scenario.
    :param source: Where the scenario comes from, used in the logs.
    :param prefix: Field path prefix for the diagnostics.
    :return: Scenario.
    :raise ScenarioValidationError: with every diagnostic found.
    """
    validator = jsonschema.Draft7Validator(schema())
    errors = sorted(validator.iter_errors(data), key=lambda e: list(map(str, e.absolute_path)))
    if errors:
        raise ScenarioValidationError(["%s: %s" % (_path(prefix, e), e.message)
                                       for e in errors])
    diagnostics = []
    spec = None
    try:
        spec = _manifold_spec(data["manifold"]).validate()
    except (ManifoldError, ValueError) as e:
        diagnostics.append("%s: %s" % ("%s.manifold" % prefix if prefix else "manifold", e))
    diagnostics.extend(_semantic_errors(data, spec, prefix))
    if diagnostics:
        raise ScenarioValidationError(diagnostics)
    liyau = dict(data["liyau"])
    liyau.setdefault("n", spec.dimension)
    liyau.setdefault("radius_length", 1.0)
    liyau.setdefault("curvature_norm", "eigenvalue")
    liyau.setdefault("classical_K", 0.0)
    if spec.kind == "flat_torus":
        default_origin = tuple(length / 2 for length in spec.side_lengths)
    else:
        default_origin = (spec.radial_range[0], 0.0)
    scenario = Scenario(
        id=data["id"], description=data.get("description", ""), seed=data.get("seed", 0),
        negative_control=data.get("negative_control", False), spec=spec,
        origin_chart=tuple(data.get("origin_chart", default_origin)), liyau=liyau,
        solver=dict(SOLVER_DEFAULTS, **data.get("solver", {})),
        initial=dict(INITIAL_DEFAULTS, **data.get("initial", {})),
        lemmas=dict(LEMMA_DEFAULTS, **data.get("lemmas", {})),
        checks=tuple(data["checks"]), source=source)
    logging.getLogger("scenario").debug("parsed %s from %s", scenario.id, source)
    return scenario


def parse_document(document, source: str = "<memory>") -> List[Scenario]:
    """
    Parse a decoded scenario file: one scenario object or {"scenarios": [...]}.

    :return: List of scenarios in file order.
    """
    if isinstance(document, dict) and "scenarios" in document:
        items = document["scenarios"]
        if set(document) != {"scenarios"} or not isinstance(items, list) or not items:
            raise ScenarioValidationError(
                ["scenarios: expected a non-empty list as the only top level field"])
        scenarios, diagnostics = [], []
        for i, item in enumerate(items):
            try:
                scenarios.append(parse_scenario(item, source, "scenarios[%d]" % i))
            except ScenarioValidationError as e:
                diagnostics.extend(e.diagnostics)
        ids = [s.id for s in scenarios]
        for duplicate in sorted({i for i in ids if ids.count(i) > 1}):
            diagnostics.append("scenarios: duplicate id %s" % duplicate)
        if diagnostics:
            raise ScenarioValidationError(diagnostics)
        return scenarios
    return [parse_scenario(document, source)]


def load_scenarios(path: str) -> List[Scenario]:
    """
    Read and validate a scenario file.

    :param path: JSON file.
    :return: List of scenarios.
    """
    try:
        with open(path) as fin:
            document = json.load(fin)
    except json.JSONDecodeError as e:
        raise ScenarioValidationError(["%s: invalid JSON: %s" % (path, e)]) from None
    except OSError as e:
        raise ScenarioValidationError(["%s: %s" % (path, e.strerror)]) from None
    return parse_document(document, path)


def builtin_scenarios() -> Dict[str, str]:
    """Return the packaged scenario files by their base name."""
    return {os.path.splitext(name)[0]: os.path.join(SCENARIOS_DIR, name)
            for name in sorted(os.listdir(SCENARIOS_DIR)) if name.endswith(".json")}
