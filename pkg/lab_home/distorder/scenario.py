"""
Scenario files describe one experiment as an INI file with the sections
[problem], [numerics], [task] and [output].

Workflow:
1. Read the file with configparser and reject unknown sections and keys.
2. Convert every value with the type declared in SCHEMA, missing keys take the
declared default.
3. Build the Experiment, the weights and the InversionConfig from the values.
Invalid values surface as ScenarioError, never as a numerical failure.

Weights are written as `constant:c`, `linear:a,b`, `hat:alpha0,half_width`,
`cosine:center,width,height,base` or `file:path`. Paths are relative to the
scenario file.

https://docs.python.org/3/library/configparser.html
"""

import configparser
import logging
import os
from dataclasses import dataclass
from typing import Any, Dict

import numpy as np

from .exceptions import ContractError, DomainError, ScenarioError
from .forward import Experiment
from .frac_core import WeightFunction
from .inverse import InversionConfig
from .laplace import DEFAULT_BROMWICH_NODES, DEFAULT_CONTOUR_NODES, ContourSpec

MU_KINDS = ["constant", "linear", "hat", "cosine", "file"]
FIELD_FORMATS = ["csv", "binary"]
EIGEN_FORMATS = ["text", "binary"]


def _floats(text):
    return tuple(float(v) for v in text.split(",") if v.strip())


def _optional_int(text):
    return int(text) if text.strip() else None


def _optional_float(text):
    return float(text) if text.strip() else None


SCHEMA = {
    "problem": {
        "dimension": (int, 1),
        "nodes": (int, 63),
        "boundary": (str, "dirichlet"),
        "potential": (float, 0.0),
        "potential_slope": (float, 0.0),
        "mu": (str, "constant:1"),
        "g_profile": (str, "bump"),
        "g_center": (_optional_float, None),
        "g_width": (_optional_float, None),
        "g_amplitude": (float, 1.0),
        "g_table": (str, ""),
        "g_weights": (_floats, ()),
        "observe_at": (_floats, ()),
    },
    "numerics": {
        "horizon": (float, 1.0),
        "time_steps": (int, 200),
        "grading": (float, 1.0),
        "modes": (_optional_int, None),
        "eigen_mode": (str, "auto"),
        "contour": (str, "talbot"),
        "contour_nodes": (_optional_int, None),
        "contour_scale": (float, 1.0),
        "contour_gamma": (_optional_float, None),
        "alpha_order": (int, 32),
        "refinement": (int, 1),
    },
    "task": {
        "mu_b": (str, "hat:0.3,0.05"),
        "lambdas": (_floats, (1.0, 10.0)),
        "s_values": (_floats, (1.0, 10.0, 100.0, 1000.0, 10000.0)),
        "basis_nodes": (int, 17),
        "tikhonov": (float, 1e-6),
        "tikhonov_start": (float, 1e-2),
        "tikhonov_decay": (float, 0.3),
        "max_iterations": (int, 40),
        "step_tolerance": (float, 1e-6),
        "noise": (float, 0.0),
        "seed": (int, 0),
        "data": (str, ""),
        "data_provenance": (str, "timestep"),
        "oracle_refinement": (int, 2),
        "harnack_nodes": (_optional_int, None),
    },
    "output": {
        "field_format": (str, "csv"),
        "eigen_format": (str, "text"),
    },
}

CHOICES = {
    ("task", "data_provenance"): ["timestep", "spectral"],
    ("output", "field_format"): FIELD_FORMATS,
    ("output", "eigen_format"): EIGEN_FORMATS,
}


def existing_file(path, base_dir="."):
    resolved = os.path.normpath(os.path.join(base_dir, path))
    if not os.path.isfile(resolved):
        raise ScenarioError(f"Referenced file {resolved} does not exist")
    return resolved


def parse_weight(text, base_dir=".") -> WeightFunction:
    kind, _, arguments = text.partition(":")
    kind = kind.strip()
    if kind not in MU_KINDS:
        raise ScenarioError(f"Weight '{text}' is not supported. Use one of {MU_KINDS}")
    try:
        if kind == "file":
            return WeightFunction.load(existing_file(arguments.strip(), base_dir))
        numbers = _floats(arguments)
        if kind == "constant":
            (value,) = numbers
            return WeightFunction.constant(value)
        if kind == "linear":
            intercept, slope = numbers
            return WeightFunction.linear(intercept, slope)
        if kind == "hat":
            return WeightFunction.narrow_hat(*numbers)
        center, width, height, base = numbers
        return WeightFunction.raised_cosine(center, width, height, base)
    except (DomainError, ContractError) as ex:
        raise ScenarioError(f"Weight '{text}' is not admissible: {ex}")
    except (TypeError, ValueError) as ex:
        raise ScenarioError(f"Weight '{text}' is malformed: {ex}")


def _convert(section, key, raw):
    convert, _ = SCHEMA[section][key]
    try:
        value = convert(raw.strip())
    except ValueError as ex:
        raise ScenarioError(f"[{section}] {key} = {raw!r} is not valid: {ex}")
    choices = CHOICES.get((section, key))
    if choices is not None and value not in choices:
        raise ScenarioError(f"[{section}] {key} = {raw!r}, use one of {choices}")
    return value


def parse_sections(parser: configparser.ConfigParser) -> Dict[str, Dict[str, Any]]:
    unknown = [name for name in parser.sections() if name not in SCHEMA]
    if unknown:
        raise ScenarioError(
            f"Unknown scenario section [{unknown[0]}], use {list(SCHEMA)}"
        )
    values = {}
    for section, keys in SCHEMA.items():
        given = dict(parser[section]) if parser.has_section(section) else {}
        for key in given:
            if key not in keys:
                raise ScenarioError(f"Unknown key '{key}' in section [{section}]")
        values[section] = {
            key: _convert(section, key, given[key]) if key in given else default
            for key, (_, default) in keys.items()
        }
    return values


@dataclass(frozen=True, eq=False)
class Scenario:
    path: str
    values: Dict[str, Dict[str, Any]]

    @classmethod
    def load(cls, path) -> "Scenario":
        if not os.path.isfile(path):
            raise ScenarioError(f"Scenario file {path} does not exist")
        parser = configparser.ConfigParser(interpolation=None)
        try:
            with open(path) as fh:
                parser.read_file(fh)
        except configparser.Error as ex:
            raise ScenarioError(f"Scenario file {path} is not valid INI: {ex}")
        scenario = cls(os.path.abspath(path), parse_sections(parser))
        logging.info(f"Loaded scenario {path}")
        return scenario

    @property
    def base_dir(self):
        return os.path.dirname(self.path)

    def __getitem__(self, section):
        return self.values[section]

    def weight(self, section="problem", key="mu") -> WeightFunction:
        return parse_weight(self.values[section][key], self.base_dir)

    @property
    def data_path(self):
        data = self.values["task"]["data"]
        return existing_file(data, self.base_dir) if data else None

    @property
    def referenced_files(self):
        """Every file the scenario reads, resolved and in a stable order."""
        files = []
        for section, key in (("problem", "mu"), ("task", "mu_b")):
            text = self.values[section][key]
            if text.startswith("file:"):
                files.append(existing_file(text[len("file:") :].strip(), self.base_dir))
        table = self.values["problem"]["g_table"]
        if table.startswith("file:"):
            files.append(existing_file(table[len("file:") :].strip(), self.base_dir))
        if self.data_path:
            files.append(self.data_path)
        return files

    def g_table(self):
        text = self.values["problem"]["g_table"]
        if not text.startswith("file:"):
            try:
                return _floats(text)
            except ValueError:
                raise ScenarioError(f"[problem] g_table = {text!r} is not a list")
        path = existing_file(text[len("file:") :].strip(), self.base_dir)
        try:
            return tuple(np.loadtxt(path, comments="#", ndmin=1).tolist())
        except ValueError as ex:
            raise ScenarioError(f"Boundary table {path} is malformed: {ex}")

    def contour(self) -> ContourSpec:
        n = self.values["numerics"]
        nodes = n["contour_nodes"]
        if nodes is None:
            bromwich = n["contour"] == "bromwich"
            nodes = DEFAULT_BROMWICH_NODES if bromwich else DEFAULT_CONTOUR_NODES
        return ContourSpec(n["contour"], nodes, n["contour_scale"], n["contour_gamma"])

    def experiment(self) -> Experiment:
        p, n = self.values["problem"], self.values["numerics"]
        try:
            experiment = Experiment(
                dimension=p["dimension"],
                nodes=p["nodes"],
                boundary=p["boundary"],
                potential=p["potential"],
                potential_slope=p["potential_slope"],
                g_profile=p["g_profile"],
                g_center=p["g_center"],
                g_width=p["g_width"],
                g_amplitude=p["g_amplitude"],
                g_table=self.g_table(),
                g_weights=p["g_weights"],
                observe_at=p["observe_at"],
                horizon=n["horizon"],
                time_steps=n["time_steps"],
                grading=n["grading"],
                modes=n["modes"],
                eigen_mode=n["eigen_mode"],
                contour=self.contour(),
                alpha_order=n["alpha_order"],
            )
            for part in ("potential_field", "boundary_data", "observation_point"):
                getattr(experiment, part)
        except (DomainError, ContractError) as ex:
            raise ScenarioError(f"Scenario {self.path} is not a valid experiment: {ex}")
        if n["refinement"] < 1 or self.values["task"]["oracle_refinement"] < 1:
            raise ScenarioError("Refinement factors must be positive integers")
        return experiment

    def inversion_config(self, jobs=1) -> InversionConfig:
        t = self.values["task"]
        try:
            return InversionConfig(
                basis_node_count=t["basis_nodes"],
                tikhonov_weight=t["tikhonov"],
                tikhonov_start=t["tikhonov_start"],
                tikhonov_decay=t["tikhonov_decay"],
                max_iterations=t["max_iterations"],
                step_tolerance=t["step_tolerance"],
                jobs=jobs,
            )
        except DomainError as ex:
            raise ScenarioError(f"Inversion settings are not valid: {ex}")

