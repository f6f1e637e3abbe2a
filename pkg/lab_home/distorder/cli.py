"""
Batch front-end of distorder.

Workflow:
1. Parse the subcommand and its flags, load the scenario file (see scenario).
2. Run the task: forward, invert, check, spectra or probe. The plotdata
subcommand reshapes result files into long-format CSV for plotting.
3. Write manifest.json on every exit path: input hashes, versions, status,
exit code and every output with its sha256. Wall time goes to timing.json and
the log to run.log, so repeated runs produce identical manifests.

Exit codes: 0 success, 1 a property check failed, 2 usage or scenario error,
3 numerical failure.

Usage:
    python -m distorder forward --scenario scenarios/forward_1d.ini --out out/
    python -m distorder plotdata harnack out/harnack.csv --out plots/
"""

import argparse
import csv
import hashlib
import json
import logging
import os
import platform
import sys
import time

import numpy as np
import scipy

from . import __version__
from .analysis import (
    HarnackReport,
    check_max_principle,
    extremum_lemma_check,
    harnack_scan,
    harnack_stability,
    middle_third,
    relaxation_ode_check,
    semigroup_check,
    sw_bound_check,
)
from .exceptions import (
    ContractError,
    DistOrderError,
    InverseCrimeError,
    ScenarioError,
)
from .forward import Field, ObservationRecord, observe, sidecar_path
from .frac_core import TimeGrid, TimeSeries, WeightFunction
from .inverse import (
    add_noise,
    experiment_for,
    identifiability_probe,
    recover_weight,
    recovery_error,
)
from .laplace import RelaxationTable, mean_squared_displacement, relaxation_tables
from .scenario import Scenario

TASKS = ["forward", "invert", "check", "spectra", "probe"]
PLOT_KINDS = ["relaxation", "field-slice", "harnack", "mu-compare"]
EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_USAGE = 2
EXIT_NUMERICAL = 3
STATUS = {
    EXIT_OK: "ok",
    EXIT_CHECK_FAILED: "check_failed",
    EXIT_USAGE: "usage_error",
    EXIT_NUMERICAL: "numerical_failure",
}
DEFAULT_OUT = "distorder_out"
SLICE_TIMES = 11
TASK_HELP = {
    "forward": "solve the forward problem, write the field and the observation",
    "invert": "recover the weight mu from an observation",
    "check": "run the property checks, exit 1 if one fails",
    "spectra": "write eigenpairs, relaxation tables and the mean squared "
    "displacement",
    "probe": "compare the observations of two weights",
}


class UsageParser(argparse.ArgumentParser):
    """Argument errors become ScenarioError so that they leave a manifest."""

    def error(self, message):
        raise ScenarioError(f"{self.prog}: {message}")


def _positive_int(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def _seed(text):
    value = int(text)
    if not 0 <= value < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def build_parser() -> UsageParser:
    common = UsageParser(add_help=False)
    common.add_argument(
        "--out", default=DEFAULT_OUT, help="Directory for all outputs of the run"
    )
    common.add_argument(
        "--jobs", type=_positive_int, default=1, help="Upper bound on worker threads"
    )
    common.add_argument(
        "-v",
        "--verbose",
        action="count",
        default=0,
        help="-v for INFO, -vv for DEBUG messages",
    )
    parser = UsageParser(
        prog="distorder",
        description="Distributed-order time-fractional diffusion experiments",
    )
    commands = parser.add_subparsers(dest="command", required=True)
    for task in TASKS:
        sub = commands.add_parser(
            task,
            parents=[common],
            help=TASK_HELP[task],
            formatter_class=argparse.ArgumentDefaultsHelpFormatter,
        )
        sub.add_argument("--scenario", required=True, help="Scenario INI file")
        sub.add_argument(
            "--seed", type=_seed, help="Overrides the seed of the scenario's [task]"
        )
        sub.add_argument(
            "--inverse-crime-ok",
            action="store_true",
            help="Report recovery errors on data from the inversion's own "
            "discretization",
        )
    plot = commands.add_parser(
        "plotdata",
        parents=[common],
        help="reshape result files into long-format CSV",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    plot.add_argument("kind", choices=PLOT_KINDS)
    plot.add_argument("inputs", nargs="+", help="Result files to reshape")
    return parser


def sha256_of(path):
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


class RunRecord:
    """Outputs, inputs and summary values of one run, the source of the manifest."""

    def __init__(self, out_dir):
        self.out_dir = out_dir
        self.outputs = []
        self.inputs = {}
        self.summary = {}
        self.command = None
        self.seed = None
        self.jobs = 1

    def path(self, name):
        if name not in self.outputs:
            self.outputs.append(name)
        return os.path.join(self.out_dir, name)

    def track(self, full_path):
        return self.path(os.path.relpath(full_path, self.out_dir))

    def add_input(self, path, label=None):
        self.inputs[label or os.path.basename(path)] = sha256_of(path)

    def manifest(self, code, message):
        outputs = [
            {"path": name, "sha256": sha256_of(os.path.join(self.out_dir, name))}
            for name in sorted(self.outputs)
            if os.path.isfile(os.path.join(self.out_dir, name))
        ]
        return {
            "command": self.command,
            "exit_code": code,
            "status": STATUS[code],
            "message": message,
            "seed": self.seed,
            "jobs": self.jobs,
            "inputs": self.inputs,
            "outputs": outputs,
            "summary": self.summary,
            "versions": {
                "distorder": __version__,
                "numpy": np.__version__,
                "scipy": scipy.__version__,
                "python": platform.python_version(),
            },
        }

    def finish(self, code, message, wall_seconds):
        os.makedirs(self.out_dir, exist_ok=True)
        with open(os.path.join(self.out_dir, "manifest.json"), "w") as fh:
            json.dump(self.manifest(code, message), fh, indent=2, sort_keys=True)
            fh.write("\n")
        with open(os.path.join(self.out_dir, "timing.json"), "w") as fh:
            json.dump({"wall_seconds": wall_seconds}, fh, indent=2)
            fh.write("\n")


def configure_logging(out_dir, verbosity):
    os.makedirs(out_dir, exist_ok=True)
    level = {0: logging.WARNING, 1: logging.INFO}.get(verbosity, logging.DEBUG)
    logging.basicConfig(
        level=level,
        format="%(levelname)s %(message)s",
        handlers=[
            logging.StreamHandler(),
            logging.FileHandler(os.path.join(out_dir, "run.log"), mode="w"),
        ],
        force=True,
    )


def _preparse(argv):
    pre = UsageParser(add_help=False)
    pre.add_argument("--out", default=DEFAULT_OUT)
    pre.add_argument("-v", "--verbose", action="count", default=0)
    try:
        known, _ = pre.parse_known_args(argv)
    except ScenarioError:
        return DEFAULT_OUT, 0
    return known.out, known.verbose


def _load_scenario(args, record: RunRecord) -> Scenario:
    scenario = Scenario.load(args.scenario)
    record.add_input(scenario.path)
    for path in scenario.referenced_files:
        record.add_input(path, os.path.relpath(path, scenario.base_dir))
    record.seed = scenario["task"]["seed"] if args.seed is None else args.seed
    return scenario


def _save_record(observation: ObservationRecord, name, record: RunRecord):
    path = record.path(name)
    observation.save(path)
    record.track(sidecar_path(path))


def run_forward(args, record: RunRecord):
    scenario = _load_scenario(args, record)
    experiment = scenario.experiment()
    field = experiment.solve(scenario.weight(), jobs=args.jobs)
    binary = scenario["output"]["field_format"] == "binary"
    field.save(record.path("field.bin" if binary else "field.csv"), binary=binary)
    observation = observe(field, experiment.observation_point)
    _save_record(observation, "observation.csv", record)
    record.summary.update(
        {
            "discretization_key": experiment.discretization_key,
            "modes": experiment.eigen.mode_count,
            "tail_estimate": field.tail_estimate,
            "u_max": float(field.samples.max()),
            "u_min": float(field.samples.min()),
        }
    )
    return EXIT_OK


def run_invert(args, record: RunRecord):
    scenario = _load_scenario(args, record)
    task = scenario["task"]
    mu_true = scenario.weight()
    if scenario.data_path:
        data = _load_observation(scenario.data_path)
    else:
        data = scenario.experiment().observe(
            mu_true,
            provenance=task["data_provenance"],
            refinement=task["oracle_refinement"],
            jobs=args.jobs,
        )
    if task["noise"] > 0:
        data = add_noise(data, task["noise"], record.seed)
    _save_record(data, "data.csv", record)

    config = scenario.inversion_config(args.jobs)
    result = recover_weight(data, config, experiment_for(data))
    report_path = record.path("inversion_report.txt")
    result.save(record.path("mu_hat.txt"), report_path)
    record.summary.update(
        {
            "convergence": result.convergence_flag,
            "final_misfit": result.final_misfit,
            "final_residual": result.final_residual,
            "iterations": result.iterations,
        }
    )
    error = recovery_error(result, mu_true, data, args.inverse_crime_ok)
    with open(report_path, "a") as fh:
        fh.write(f"recovery_error={error!r}\n")
    record.summary["recovery_error"] = error
    return EXIT_OK


def _smooth_series(grid):
    t = grid.t_values
    return TimeSeries(grid, np.sin(np.pi * t / grid.T) ** 2)


def _dip_series(grid):
    return TimeSeries(grid, -np.sin(np.pi * grid.t_values / grid.T))


def _load_observation(path):
    try:
        return ObservationRecord.load(path)
    except (ContractError, ValueError) as ex:
        raise ScenarioError(f"Observation data {path} is not usable: {ex}")



def run_check(args, record: RunRecord):
    scenario = _load_scenario(args, record)
    task = scenario["task"]
    experiment = scenario.experiment()
    refinement = scenario["numerics"]["refinement"]
    if refinement > 1:
        experiment = experiment.with_changes(
            time_steps=experiment.time_steps * refinement
        )
    mu = scenario.weight()
    results = [check_max_principle(experiment.solve(mu, jobs=args.jobs))]

    fine_nodes = task["harnack_nodes"] or 2 * experiment.nodes + 1
    levels = {
        "harnack.csv": experiment,
        "harnack_fine.csv": experiment.with_changes(nodes=fine_nodes),
    }
    reports = []
    for name, level in levels.items():
        report = harnack_scan(
            level.space_grid,
            level.potential_field,
            mu,
            level.boundary_data,
            middle_third(level.space_grid),
            task["s_values"],
            level.boundary,
            args.jobs,
        )
        report.save(record.path(name))
        reports.append(report)
    results.append(harnack_stability(*reports))

    grid = experiment.time_grid
    uniform = TimeGrid.uniform(grid.T, grid.steps)
    results.append(semigroup_check(_smooth_series(uniform)))
    results.extend(
        relaxation_ode_check(
            mu, lam, grid, experiment.contour, experiment.alpha_order
        )
        for lam in task["lambdas"]
    )
    results.append(
        extremum_lemma_check(_dip_series(uniform), mu, experiment.alpha_order)
    )
    results.append(sw_bound_check(mu))

    with open(record.path("checks.csv"), "w") as fh:
        fh.write("name,value,threshold,verdict\n")
        fh.writelines(result.to_line() + "\n" for result in results)
    failed = [result.name for result in results if not result.passed]
    record.summary["checks"] = {r.name: bool(r.passed) for r in results}
    if failed:
        logging.error(f"{len(failed)} of {len(results)} checks failed: {failed}")
        return EXIT_CHECK_FAILED
    return EXIT_OK


def run_spectra(args, record: RunRecord):
    scenario = _load_scenario(args, record)
    experiment = scenario.experiment()
    mu = scenario.weight()
    eig = experiment.eigen
    binary = scenario["output"]["eigen_format"] == "binary"
    eig.save(record.path("eigen.bin" if binary else "eigen.txt"), binary=binary)
    np.savetxt(
        record.path("eigenvalues.csv"),
        np.column_stack([np.arange(1, eig.mode_count + 1), eig.eigenvalues]),
        delimiter=",",
        header="n,lambda",
        comments="",
    )
    tables = relaxation_tables(
        scenario["task"]["lambdas"],
        mu,
        experiment.time_grid,
        experiment.contour,
        experiment.alpha_order,
    )
    for k, table in enumerate(tables):
        table.save(record.path(f"relaxation_{k}.txt"))
    t = experiment.time_grid.t_values
    msd = mean_squared_displacement(mu, t, experiment.contour, experiment.alpha_order)
    np.savetxt(
        record.path("msd.csv"),
        np.column_stack([t, msd]),
        delimiter=",",
        header="t,msd",
        comments="",
    )
    record.summary["lambda_1"] = float(eig.eigenvalues[0])
    return EXIT_OK


def run_probe(args, record: RunRecord):
    scenario = _load_scenario(args, record)
    result = identifiability_probe(
        scenario.weight(),
        scenario.weight("task", "mu_b"),
        scenario.experiment(),
        jobs=args.jobs,
    )
    witness = result.witness
    s0 = "" if witness is None else repr(witness.s0)
    gap = "" if witness is None else repr(witness.gap)
    with open(record.path("probe.csv"), "w") as fh:
        fh.write("data_gap,witness_s0,witness_gap\n")
        fh.write(f"{result.data_gap!r},{s0},{gap}\n")
    record.summary["data_gap"] = result.data_gap
    record.summary["witness"] = witness is not None
    return EXIT_OK


def _number(value):
    return repr(float(value))


def _source(path):
    return os.path.splitext(os.path.basename(path))[0]


def _relaxation_rows(paths):
    for path in paths:
        table = RelaxationTable.load(path)
        mu_id = os.path.basename(os.path.dirname(os.path.abspath(path)))
        for t, v, kappa in zip(table.grid.t_values, table.values, table.kappa_values):
            yield [_number(t), _number(v), _number(kappa), _number(table.lam), mu_id]


def _field_rows(paths):
    for path in paths:
        field = Field.load(path)
        coords = field.grid.coordinates()
        nodes = np.arange(field.grid.size)
        if field.grid.dimension == 2:
            y = field.grid.axes[1]
            nodes = np.flatnonzero(coords[:, 1] == y[y.size // 2])
        steps = field.time_grid.steps
        picked = np.unique(np.linspace(0, steps, SLICE_TIMES).round().astype(int))
        t = field.time_grid.t_values
        for j in picked:
            for node in nodes:
                x, u = coords[node, 0], field.samples[node, j]
                yield [_number(x), _number(t[j]), _number(u), _source(path)]


def _harnack_rows(paths):
    for path in paths:
        report = HarnackReport.load(path)
        bound = report.fitted_C * (1.0 + report.sw_values)
        for row in zip(report.s_values, report.sw_values, report.log_ratios, bound):
            yield [_number(v) for v in row] + [_source(path)]


def _mu_rows(paths):
    weights = [(WeightFunction.load(path), _source(path)) for path in paths]
    alpha = np.linspace(0.0, 1.0, 101)
    for mu, _ in weights:
        alpha = np.union1d(alpha, mu.alpha_grid)
    for mu, which in weights:
        for a, value in zip(alpha, mu(alpha)):
            yield [_number(a), _number(value), which]


PLOTTERS = {
    "relaxation": (["t", "v", "kappa", "lambda", "mu_id"], _relaxation_rows),
    "field-slice": (["x", "t", "u", "source"], _field_rows),
    "harnack": (["s", "sw", "log_ratio", "bound", "source"], _harnack_rows),
    "mu-compare": (["alpha", "value", "which"], _mu_rows),
}


def emit_plotdata(paths, kind, out_path):
    """Tidy CSV, one observation per row, from result files of one kind."""
    if kind not in PLOTTERS:
        raise ScenarioError(f"Plot kind '{kind}' is not supported. Use {PLOT_KINDS}")
    missing = [path for path in paths if not os.path.isfile(path)]
    if missing:
        raise ScenarioError(f"Plot inputs do not exist: {missing}")
    header, rows = PLOTTERS[kind]
    with open(out_path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        count = 0
        for row in rows(paths):
            writer.writerow(row)
            count += 1
    logging.info(f"Wrote {count} {kind} rows to {out_path}")
    return out_path


def run_plotdata(args, record: RunRecord):
    for path in args.inputs:
        if os.path.isfile(path):
            record.add_input(path, path)
    emit_plotdata(args.inputs, args.kind, record.path(f"plot_{args.kind}.csv"))
    return EXIT_OK


COMMANDS = {
    "forward": run_forward,
    "invert": run_invert,
    "check": run_check,
    "spectra": run_spectra,
    "probe": run_probe,
    "plotdata": run_plotdata,
}


def run(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    started = time.perf_counter()
    out_dir, verbosity = _preparse(argv)
    configure_logging(out_dir, verbosity)
    record = RunRecord(out_dir)
    code, message = EXIT_OK, ""
    try:
        args = build_parser().parse_args(argv)
        record.command, record.jobs = args.command, args.jobs
        logging.info(f"Running {args.command}, outputs go to {out_dir}")
        code = COMMANDS[args.command](args, record)
    except (ScenarioError, InverseCrimeError) as ex:
        code, message = EXIT_USAGE, str(ex)
    except (DistOrderError, np.linalg.LinAlgError, FloatingPointError) as ex:
        code, message = EXIT_NUMERICAL, f"{type(ex).__name__}: {ex}"
    except (OSError, ValueError) as ex:
        code, message = EXIT_USAGE, f"{type(ex).__name__}: {ex}"
    except Exception as ex:  # noqa: B902
        logging.exception(f"Unexpected failure in {record.command}")
        code, message = EXIT_USAGE, f"{type(ex).__name__}: {ex}"
    if message:
        logging.error(message)
    record.finish(code, message, time.perf_counter() - started)
    return code


def main():
    sys.exit(run())
