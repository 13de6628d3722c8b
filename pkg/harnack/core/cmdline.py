import argparse
import csv
import json
import logging
import os
import sys
from typing import List, Sequence

import configargparse
import humanfriendly
import numpy

from harnack.core import slogging
from harnack.core.calibration import calibrate_constants, CalibrationError, CalibrationModel
from harnack.core.calibration_repository import FileCalibrationRepository
from harnack.core.catalog import CATALOG
from harnack.core.curvature import k_norm, ric_minus_field, sample_centers
from harnack.core.geometry import analytic_volume, build_manifold, measure_anisotropy
from harnack.core.heat import configure_kernel_cache
from harnack.core.manager import LEMMA_CHECKS, ScenarioRunner
from harnack.core.metrics import solver_metrics
from harnack.core.refinement import MIN_LEVELS, refinement_study
from harnack.core.report import format_cell, jsonable, RunReport
from harnack.core.scenario import builtin_scenarios, load_scenarios, Scenario, \
    ScenarioValidationError

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_INVALID = 2
STUDY_HEADER = ("quantity", "level", "n1", "n2", "h", "error", "order")


class ArgumentDefaultsHelpFormatterNoNone(argparse.ArgumentDefaultsHelpFormatter):
    """
    Pretty formatter of help message for arguments. \
    It adds default value to the end if it is not None.
    """

    def _get_help_string(self, action):
        if action.default is None:
            return action.help
        return super()._get_help_string(action)


def resolve_config(config: str) -> str:
    """Return the path of the scenario file; bare names refer to the packaged scenarios."""
    if os.path.exists(config):
        return config
    packaged = builtin_scenarios()
    if config in packaged:
        return packaged[config]
    return config


def load_from_args(args: argparse.Namespace) -> List[Scenario]:
    """
    Load the scenarios and apply --seed and --scenario.

    :param args: Parsed command line arguments.
    :return: Validated scenarios.
    """
    scenarios = load_scenarios(resolve_config(args.config))
    selected = getattr(args, "scenario", None)
    if selected:
        missing = sorted(set(selected) - {s.id for s in scenarios})
        if missing:
            raise ScenarioValidationError(["scenario: unknown id %s" % i for i in missing])
        scenarios = [s for s in scenarios if s.id in selected]
    if args.seed is not None:
        scenarios = [s._replace(seed=args.seed) for s in scenarios]
    return scenarios


def create_calibration_repo_from_args(args: argparse.Namespace) -> FileCalibrationRepository:
    """
    Get FileCalibrationRepository from command line arguments.

    :param args: `argparse` parsed arguments.
    :return: Constructed instance of FileCalibrationRepository.
    """
    return FileCalibrationRepository(
        fs_root=args.calibration_fs, max_cache_mem=humanfriendly.parse_size(args.cache_size),
        ttl=int(humanfriendly.parse_timespan(args.cache_ttl)))


def load_calibrations(args: argparse.Namespace,
                      scenarios: Sequence[Scenario]) -> List[CalibrationModel]:
    """Collect the calibration models given by --calibration and --calibration-fs."""
    log = logging.getLogger("calibrations")
    models = [CalibrationModel().load(path) for path in args.calibration or []]
    if args.calibration_fs:
        repo = create_calibration_repo_from_args(args)
        keys = sorted({(s.liyau["n"], float(s.liyau["p"]), float(s.liyau["alpha"]))
                       for s in scenarios})
        for n, p, alpha in keys:
            model, _ = repo.get(n, p, alpha)
            if model is None:
                log.warning("no calibration for n=%d p=%g alpha=%g in %s", n, p, alpha, repo)
            else:
                models.append(model)
        repo.shutdown()
    for model in models:
        log.info("using %s", model.dump())
    return models


def _setup_run(args: argparse.Namespace):
    if args.prometheus_port is not None:
        solver_metrics().serve(args.prometheus_host, args.prometheus_port)
    return configure_kernel_cache(humanfriendly.parse_size(args.cache_size))


def _run(args: argparse.Namespace, command: str, only: Sequence[str] = None) -> int:
    log = logging.getLogger(command)
    try:
        scenarios = load_from_args(args)
    except ScenarioValidationError as e:
        for diagnostic in e.diagnostics:
            log.error("%s", diagnostic)
        return EXIT_INVALID
    calibrations = load_calibrations(args, scenarios)
    runner = ScenarioRunner(calibrations, threads=args.threads,
                            deterministic=args.deterministic, kernel_cache=_setup_run(args),
                            only=only)
    log.info("created %s", runner)
    report = RunReport(runner.run_all(scenarios), command,
                       [model.summary() for model in calibrations])
    report.write(args.out)
    for failure in report.failures():
        log.error("failed: %s", failure)
    log.info("%s", report)
    return EXIT_FAILED if report.failed else EXIT_OK


def verify(args: argparse.Namespace) -> int:
    """
    Run all the checks of the scenarios and write the reports.

    :param args: Parsed command line arguments.
    :return: 0 if nothing failed, 1 on failures, 2 on invalid configuration.
    """
    return _run(args, "verify")


def lemmas(args: argparse.Namespace) -> int:
    """
    Run only the lemma checks of the scenarios and write the reports.

    :param args: Parsed command line arguments.
    :return: 0 if nothing failed, 1 on failures, 2 on invalid configuration.
    """
    return _run(args, "lemmas", only=LEMMA_CHECKS)


def build(args: argparse.Namespace) -> int:
    """
    Print the preview statistics of the manifolds of the scenarios as JSON.

    :param args: Parsed command line arguments.
    :return: Exit code.
    """
    log = logging.getLogger("build")
    try:
        scenarios = load_from_args(args)
    except ScenarioValidationError as e:
        for diagnostic in e.diagnostics:
            log.error("%s", diagnostic)
        return EXIT_INVALID
    previews = []
    for scenario in scenarios:
        m = build_manifold(scenario.spec)
        V = ric_minus_field(scenario.spec, m, norm=scenario.liyau["curvature_norm"])
        centers = sample_centers(m, scenario.solver["curvature_samples"])
        preview = {
            "id": scenario.id,
            "manifold": str(m),
            "vertices": m.size,
            "spacing": m.spacing,
            "total_volume": m.total_volume,
            "analytic_volume": analytic_volume(scenario.spec),
            "max_ric_minus": float(V.max()),
            "k_unit": k_norm(m, V, float(scenario.liyau["p"]), 1.0, centers=centers,
                             workers=1 if args.deterministic else args.threads).value,
        }
        if scenario.spec.kind == "flat_torus":
            preview["graph_anisotropy"] = measure_anisotropy(m)
        previews.append(preview)
    json.dump(jsonable(previews), sys.stdout, indent=2, sort_keys=True)
    sys.stdout.write("\n")
    return EXIT_OK


def calibrate(args: argparse.Namespace) -> int:
    """
    Calibrate (C, kappa) on a scenario suite and store the model.

    :param args: Parsed command line arguments.
    :return: Exit code.
    """
    log = logging.getLogger("calibrate")
    try:
        scenarios = load_from_args(args)
    except ScenarioValidationError as e:
        for diagnostic in e.diagnostics:
            log.error("%s", diagnostic)
        return EXIT_INVALID
    grid = numpy.logspace(numpy.log10(args.grid_min), numpy.log10(args.grid_max),
                          args.grid_points)
    try:
        model = calibrate_constants(scenarios, grid,
                                    threads=1 if args.deterministic else args.threads)
    except (CalibrationError, ValueError) as e:
        log.error("%s", e)
        return EXIT_FAILED
    if args.calibration_fs:
        repo = create_calibration_repo_from_args(args)
        repo.init()
        log.info("saved %s", repo.set(model))
        repo.shutdown()
    if args.output:
        model.save(args.output)
        log.info("saved %s", args.output)
    print(model.dump())
    return EXIT_OK


def study(args: argparse.Namespace) -> int:
    """
    Run the grid refinement study of the first scenario and write study.csv.

    :param args: Parsed command line arguments.
    :return: Exit code.
    """
    log = logging.getLogger("study")
    try:
        scenarios = load_from_args(args)
        rows = refinement_study(scenarios[0].spec, args.levels)
    except ScenarioValidationError as e:
        for diagnostic in e.diagnostics:
            log.error("%s", diagnostic)
        return EXIT_INVALID
    except ValueError as e:
        log.error("%s", e)
        return EXIT_INVALID
    os.makedirs(args.out, exist_ok=True)
    path = os.path.join(args.out, "study.csv")
    with open(path, "w", newline="") as fout:
        writer = csv.writer(fout, lineterminator="\n")
        writer.writerow(STUDY_HEADER)
        for row in rows:
            writer.writerow([format_cell(cell) for cell in (
                row.quantity, row.level, row.resolution[0], row.resolution[1], row.h, row.error,
                row.order)])
    log.info("wrote %d rows to %s", len(rows), path)
    return EXIT_OK


def list_models(args: argparse.Namespace) -> int:
    """
    Print the built-in manifold models and the packaged scenario files.

    :param args: Not used - parsed command line arguments.
    :return: Exit code.
    """
    for name, factory in sorted(CATALOG.items()):
        print(name)
        print("\t" + (factory.__doc__ or "").strip().splitlines()[0])
    for name, path in builtin_scenarios().items():
        print("scenario %s\t%s" % (name, path))
    return EXIT_OK


def add_scenario_args(parser, out: bool = True):
    """
    Add the flags shared by the commands which read scenario files.

    :param parser: `argparse` parser where to add new flags.
    :param out: Whether the command writes files.
    """
    parser.add("-c", "--config", required=True,
               help="Scenario JSON file or the name of a packaged scenario file.")
    parser.add("--scenario", nargs="+", help="Only run the scenarios with these ids.")
    parser.add("--options", is_config_file=True,
               help="Path to the configuration file with option defaults.")
    parser.add("--seed", type=int, help="Override the seeds of the scenarios.")
    parser.add("-t", "--threads", type=int, default=1,
               help="Number of threads which process scenarios.")
    parser.add("--deterministic", action="store_true",
               help="Force a single worker everywhere.")
    if out:
        parser.add("-o", "--out", default="harnack-report", help="Output directory.")


def add_calibration_args(parser):
    """
    Add command line flags specific to the calibration repository.

    :param parser: `argparse` parser where to add new flags.
    """
    parser.add("--calibration-fs", help="Calibration repository file system root.")
    parser.add("--cache-size", default="256M",
               help="Cache size of the kernel stacks and of the calibration repository - "
                    "accepts human-readable values like 200M, 2G.")
    parser.add("--cache-ttl", default="6h",
               help="Calibration repository cache time-to-live (TTL) - accepts human-readable "
                    "values like 30min, 4h, 1d.")


def add_metrics_args(parser):
    """
    Add the Prometheus exporter flags.

    :param parser: `argparse` parser where to add new flags.
    """
    parser.add("--prometheus-port", type=int,
               help="Expose the solver metrics to Prometheus on this port.")
    parser.add("--prometheus-host", default="0.0.0.0",
               help="Address of the Prometheus exporter.")


def create_parser() -> configargparse.ArgParser:
    """
    Initialize the command line argument parser.
    """
    parser = configargparse.ArgParser(default_config_files=[
        "/etc/harnack/verify.conf", "~/.config/harnack/verify.conf"],
        formatter_class=ArgumentDefaultsHelpFormatterNoNone,
        auto_env_var_prefix="harnack_")
    slogging.add_logging_args(parser)
    subparsers = parser.add_subparsers(help="Commands", dest="command")

    def add_parser(name, help):
        return subparsers.add_parser(
            name, help=help, formatter_class=ArgumentDefaultsHelpFormatterNoNone)

    list_parser = add_parser("list", "Print the built-in models and scenario files.")
    list_parser.set_defaults(handler=list_models)

    build_parser = add_parser("build", "Print the preview statistics of the manifolds.")
    build_parser.set_defaults(handler=build)
    add_scenario_args(build_parser, out=False)

    for name, handler, help in (
            ("verify", verify, "Run the scenarios and write report.json and table.csv."),
            ("lemmas", lemmas, "Run only the lemma checks of the scenarios.")):
        run_parser = add_parser(name, help)
        run_parser.set_defaults(handler=handler)
        add_scenario_args(run_parser)
        run_parser.add("--calibration", nargs="+",
                       help="Calibration model files (asdf) with C and kappa.")
        add_calibration_args(run_parser)
        add_metrics_args(run_parser)

    calibrate_parser = add_parser("calibrate", "Calibrate C and kappa on a scenario suite.")
    calibrate_parser.set_defaults(handler=calibrate)
    add_scenario_args(calibrate_parser, out=False)
    add_calibration_args(calibrate_parser)
    calibrate_parser.add("--output", help="Write the calibration model to this asdf file.")
    calibrate_parser.add("--grid-min", type=float, default=1e-3, help="Smallest C.")
    calibrate_parser.add("--grid-max", type=float, default=1e3, help="Largest C.")
    calibrate_parser.add("--grid-points", type=int, default=61,
                         help="Number of logarithmically spaced values of C.")

    study_parser = add_parser("study", "Grid refinement study against closed-form answers.")
    study_parser.set_defaults(handler=study)
    add_scenario_args(study_parser)
    study_parser.add("--levels", type=int, default=MIN_LEVELS,
                     help="Number of grid levels, each doubles the resolution.")
    return parser
