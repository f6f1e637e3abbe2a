"""
Forward solvers of the distributed-order diffusion problem
D^(mu) u - Laplace u + p u = 0 in the domain, u = g (Dirichlet) or
du/dnu = g (Neumann) on the boundary, u = 0 at t = 0.

Workflow:
1. Lift the boundary data into the domain at every time step
(one sparse factorization, all time steps as right-hand sides).
2. Project the lift onto the eigenfunctions and push every modal coefficient
through its relaxation kernel. The kernels come from the Laplace module as
the exact primitives Q_n(t) of I^(mu) v_n, so the time convolution is exact for
piecewise-linear modal data.
3. Sum the modes. The part of the lift outside the computed modes is kept
quasi-static, and the neglected dynamics is reported as a tail estimate.

An independent implicit L1 time-stepper and a Crank-Nicolson heat solver
serve as oracles.

https://en.wikipedia.org/wiki/Spectral_method
https://en.wikipedia.org/wiki/Crank%E2%80%93Nicolson_method
"""

import hashlib
import json
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from functools import cached_property
from typing import Dict, Optional, Tuple

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.signal import fftconvolve

from .exceptions import ContractError, DomainError
from .frac_core import (
    DEFAULT_ALPHA_ORDER,
    TimeGrid,
    TimeSeries,
    WeightFunction,
    distributed_matrix,
)
from .laplace import ContourSpec, integrated_relaxation
from .spectral import (
    BOUNDARY_KINDS,
    EIGEN_MODES,
    EigenSystem,
    EllipticSystem,
    Potential,
    SpatialGrid,
    boundary_flux,
    check_kind,
    eigensystem,
    full_operator,
)

G_PROFILES = ["bump", "raised_cosine", "table"]
PROVENANCES = ["spectral", "timestep", "classical"]
REPRESENTATIONS = ["lift", "derivative"]
FLAT_END_FACTOR = 1e3
_FIELD_MAGIC = b"DOFLD001"
_LAG_SAMPLES = 256
_INT_KEYS = ("dimension", "nodes", "time_steps", "alpha_order", "modes")
RECORD_KEYS = ("x0", "provenance")
DISCRETIZATION_KEYS = (
    "dimension",
    "nodes",
    "boundary",
    "horizon",
    "time_steps",
    "grading",
    "modes",
    "eigen_mode",
    "contour",
    "contour_nodes",
    "contour_scale",
    "contour_gamma",
    "alpha_order",
)


def bump_profile(t, center, width, amplitude=1.0):
    """Bump amplitude (1 - r^2)^4 on |r| < 1, r = (t - center) / (width / 2)."""
    r = (np.asarray(t, dtype=float) - center) / (0.5 * width)
    return amplitude * np.where(np.abs(r) < 1, (1.0 - r ** 2) ** 4, 0.0)


def raised_cosine_profile(t, center, width, amplitude=1.0):
    r = (np.asarray(t, dtype=float) - center) / width
    return amplitude * np.where(np.abs(r) < 0.5, np.cos(np.pi * r) ** 4, 0.0)


def table_profile(t, horizon, table, amplitude=1.0):
    """Smootherstep interpolation of values at equally spaced knots on [0, T]."""
    table = np.asarray(table, dtype=float)
    if table.size < 3 or table[0] != 0 or table[-1] != 0:
        raise DomainError(f"Boundary table must start and end with 0, got {table}")
    if np.any(table < 0):
        raise DomainError(f"Boundary table values must be >= 0, got {table}")
    x = np.clip(np.asarray(t, dtype=float) / horizon, 0.0, 1.0) * (table.size - 1)
    k = np.minimum(np.floor(x).astype(int), table.size - 2)
    r = x - k
    step = r ** 3 * (10.0 - 15.0 * r + 6.0 * r ** 2)
    return amplitude * (table[k] + (table[k + 1] - table[k]) * step)


@dataclass(frozen=True, eq=False)
class BoundaryData:
    """Boundary values per boundary node (rows) and time (columns)."""

    grid: TimeGrid
    traces: np.ndarray
    descriptor: Dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        traces = np.array(self.traces, dtype=float, ndmin=2)
        if traces.shape[1] != self.grid.t_values.size:
            raise ContractError(
                f"Boundary traces have {traces.shape[1]} samples for "
                f"{self.grid.t_values.size} grid times"
            )
        if not np.all(np.isfinite(traces)):
            raise DomainError("Boundary traces must be finite")
        if traces.size and traces.min() < 0:
            node, step = np.unravel_index(np.argmin(traces), traces.shape)
            raise DomainError(
                f"Boundary data must be >= 0, node {node} at "
                f"t={self.grid.t_values[step]} has {traces[node, step]}"
            )
        if np.any(traces[:, 0] != 0) or np.any(traces[:, -1] != 0):
            raise ContractError("Boundary data must vanish at t=0 and t=T")
        top = traces.max(initial=0.0)
        t = self.grid.t_values
        for near, dt in ((traces[:, 1], t[1]), (traces[:, -2], t[-1] - t[-2])):
            if near.max(initial=0.0) > FLAT_END_FACTOR * top * (dt / self.grid.T) ** 2:
                raise ContractError(
                    "Boundary data must leave 0 flatly at both ends of the time window"
                )
        traces.setflags(write=False)
        object.__setattr__(self, "traces", traces)

    @property
    def is_zero(self):
        return not np.any(self.traces)

    def scaled(self, factor):
        return BoundaryData(self.grid, factor * self.traces, dict(self.descriptor))

    def refined(self, factor):
        if factor == 1:
            return self
        fine = self.grid.refined(factor)
        spline = CubicSpline(self.grid.t_values, self.traces, axis=1)
        traces = np.clip(spline(fine.t_values), 0.0, None)
        traces[:, [0, -1]] = 0.0
        return BoundaryData(fine, traces, dict(self.descriptor))


def side_node_weights(grid: SpatialGrid, side_weights=()):
    """Per boundary node weight, the largest weight of the sides the node lies on."""
    masks = grid.side_masks()
    names = list(masks)
    weights = list(side_weights) or [1.0] * len(names)
    if len(weights) != len(names):
        raise ContractError(
            f"Need one weight per side {names}, got {len(weights)} weights"
        )
    if min(weights) < 0:
        raise DomainError(f"Side weights must be >= 0, got {weights}")
    node = np.zeros(grid.boundary_index.size)
    for name, weight in zip(names, weights):
        node[masks[name]] = np.maximum(node[masks[name]], weight)
    return node


def boundary_data(
    space_grid: SpatialGrid,
    time_grid: TimeGrid,
    profile="bump",
    center=None,
    width=None,
    amplitude=1.0,
    table=(),
    side_weights=(),
) -> BoundaryData:
    if profile not in G_PROFILES:
        raise DomainError(
            f"Boundary profile '{profile}' is not supported. Use {G_PROFILES}"
        )
    T = time_grid.T
    center = 0.5 * T if center is None else center
    width = T if width is None else width
    if profile != "table" and (center - 0.5 * width < 0 or center + 0.5 * width > T):
        raise DomainError(
            f"Profile support [{center - 0.5 * width}, {center + 0.5 * width}] "
            f"leaves the time window [0, {T}]"
        )
    t = time_grid.t_values
    if profile == "bump":
        shape = bump_profile(t, center, width, amplitude)
    elif profile == "raised_cosine":
        shape = raised_cosine_profile(t, center, width, amplitude)
    else:
        shape = table_profile(t, T, table, amplitude)
    shape[[0, -1]] = 0.0
    weights = side_node_weights(space_grid, side_weights)
    descriptor = {
        "profile": profile,
        "center": repr(float(center)),
        "width": repr(float(width)),
        "amplitude": repr(float(amplitude)),
        "table": ",".join(repr(float(v)) for v in table),
        "weights": ",".join(repr(float(v)) for v in side_weights),
    }
    return BoundaryData(time_grid, np.outer(weights, shape), descriptor)


@dataclass(frozen=True, eq=False)
class Field:
    grid: SpatialGrid
    time_grid: TimeGrid
    samples: np.ndarray
    boundary_kind: str
    provenance: str
    tail_estimate: float = 0.0
    metadata: Dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        samples = np.array(self.samples, dtype=float)
        if samples.shape != (self.grid.size, self.time_grid.t_values.size):
            raise ContractError(
                f"Field samples have shape {samples.shape}, expected "
                f"{(self.grid.size, self.time_grid.t_values.size)}"
            )
        if not np.all(np.isfinite(samples)):
            raise ContractError("Field samples must be finite")
        if self.provenance not in PROVENANCES:
            raise DomainError(f"Unknown provenance '{self.provenance}'")
        check_kind(self.boundary_kind)
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)

    def at(self, point):
        return self.samples[self.grid.node_index(point)]

    def scaled(self, factor):
        return replace(self, samples=factor * self.samples)

    def save(self, path, binary=False):
        if binary:
            self._save_binary(path)
            return
        coords = self.grid.coordinates()
        t = self.time_grid.t_values
        rows = np.column_stack(
            [
                np.repeat(coords, t.size, axis=0),
                np.tile(t, self.grid.size),
                self.samples.ravel(),
            ]
        )
        names = ["x", "y"][: self.grid.dimension] + ["t", "u"]
        np.savetxt(path, rows, delimiter=",", header=",".join(names), comments="")

    def _save_binary(self, path):
        """
        Layout, little-endian: magic 'DOFLD001'; int64 ndim, kind index,
        provenance index, time count, node count per axis; float64 (start, end) per
        axis, times, samples[node, time] row-major.
        """
        header = [
            self.grid.dimension,
            BOUNDARY_KINDS.index(self.boundary_kind),
            PROVENANCES.index(self.provenance),
            self.time_grid.t_values.size,
        ] + list(self.grid.shape)
        bounds = [v for a in self.grid.axes for v in (a[0], a[-1])]
        with open(path, "wb") as fh:
            fh.write(_FIELD_MAGIC)
            fh.write(np.array(header, "<i8").tobytes())
            fh.write(np.array(bounds, "<f8").tobytes())
            fh.write(np.ascontiguousarray(self.time_grid.t_values, "<f8").tobytes())
            fh.write(np.ascontiguousarray(self.samples, "<f8").tobytes())

    @classmethod
    def load(cls, path, boundary_kind="dirichlet", provenance="spectral"):
        with open(path, "rb") as fh:
            data = fh.read()
        if data.startswith(_FIELD_MAGIC):
            return cls._load_binary(data)
        table = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        ndim = table.shape[1] - 2
        axes = tuple(np.unique(table[:, k]) for k in range(ndim))
        times = np.unique(table[:, ndim])
        grid = SpatialGrid(axes)
        samples = table[:, -1].reshape(grid.size, times.size)
        return cls(grid, TimeGrid(times), samples, boundary_kind, provenance)

    @classmethod
    def _load_binary(cls, data):
        offset = len(_FIELD_MAGIC)
        ndim, kind, provenance, n_times = np.frombuffer(data, "<i8", 4, offset)
        offset += 32
        shape = np.frombuffer(data, "<i8", int(ndim), offset)
        offset += 8 * int(ndim)
        bounds = np.frombuffer(data, "<f8", 2 * int(ndim), offset)
        offset += 16 * int(ndim)
        axes = tuple(
            np.linspace(bounds[2 * k], bounds[2 * k + 1], int(n))
            for k, n in enumerate(shape)
        )
        times = np.frombuffer(data, "<f8", int(n_times), offset)
        offset += 8 * int(n_times)
        size = int(np.prod(shape))
        samples = np.frombuffer(data, "<f8", size * int(n_times), offset)
        return cls(
            SpatialGrid(axes),
            TimeGrid(times.copy()),
            samples.reshape(size, int(n_times)),
            BOUNDARY_KINDS[int(kind)],
            PROVENANCES[int(provenance)],
        )


def sidecar_path(path):
    return os.path.splitext(path)[0] + ".meta"


@dataclass(frozen=True, eq=False)
class ObservationRecord:
    x0: Tuple[float, ...]
    series: TimeSeries
    experiment: Dict[str, str] = field(default_factory=dict)
    provenance: str = "spectral"
    noise: float = 0.0
    seed: Optional[int] = None

    def __post_init__(self):
        if self.series.samples[0] != 0:
            raise ContractError(
                f"Observation must start at 0, got {self.series.samples[0]}"
            )
        if self.noise < 0:
            raise DomainError(f"Noise level must be >= 0, got {self.noise}")

    @property
    def discretization_key(self):
        return discretization_key(self.experiment)

    def scaled(self, factor):
        experiment = dict(self.experiment)
        if "g_amplitude" in experiment:
            experiment["g_amplitude"] = repr(factor * float(experiment["g_amplitude"]))
        return replace(self, series=self.series.scaled(factor), experiment=experiment)

    def metadata(self):
        meta = {
            "x0": ",".join(repr(float(v)) for v in self.x0),
            "provenance": self.provenance,
            "noise": repr(float(self.noise)),
            "seed": "" if self.seed is None else str(self.seed),
        }
        meta.update({f"experiment.{k}": v for k, v in self.experiment.items()})
        return meta

    def save(self, path):
        table = np.column_stack([self.series.t, self.series.samples])
        np.savetxt(path, table, delimiter=",", header="t,u", comments="")
        with open(sidecar_path(path), "w") as fh:
            for key, value in sorted(self.metadata().items()):
                fh.write(f"{key}={value}\n")

    @classmethod
    def load(cls, path):
        meta_path = sidecar_path(path)
        if not os.path.exists(meta_path):
            raise ContractError(f"Observation {path} has no sidecar {meta_path}")
        table = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        meta = {}
        with open(meta_path) as fh:
            for line in fh:
                if line.strip():
                    key, _, value = line.rstrip("\n").partition("=")
                    meta[key] = value
        missing = [key for key in RECORD_KEYS if not meta.get(key)]
        if missing:
            raise ContractError(f"Sidecar {meta_path} lacks the keys {missing}")
        experiment = {
            k[len("experiment.") :]: v
            for k, v in meta.items()
            if k.startswith("experiment.")
        }
        try:
            return cls(
                tuple(float(v) for v in meta["x0"].split(",")),
                TimeSeries(TimeGrid(table[:, 0]), table[:, 1]),
                experiment,
                meta["provenance"],
                float(meta.get("noise", "0")),
                int(meta["seed"]) if meta.get("seed") else None,
            )
        except (DomainError, ContractError):
            raise
        except ValueError as ex:
            raise ContractError(f"Sidecar {meta_path} is not valid: {ex}")


def discretization_key(description: Dict[str, str]):
    payload = json.dumps(
        {k: description.get(k, "") for k in DISCRETIZATION_KEYS}, sort_keys=True
    )
    return hashlib.sha256(payload.encode()).hexdigest()[:16]


def _check_potential(eig: EigenSystem, p: Potential):
    if not eig.grid.same_as(p.grid) or not np.array_equal(
        eig.potential.values, p.values
    ):
        raise ContractError("Potential differs from the one of the eigensystem")


def _check_times(time_grid: TimeGrid):
    if time_grid.steps < 2:
        raise ContractError(f"Time grid needs at least 2 steps, got {time_grid.steps}")


def _lag_table(t):
    t = np.asarray(t)
    extra = np.geomspace(np.diff(t).min() / 4, t[-1], _LAG_SAMPLES)
    return np.unique(np.concatenate([t, extra]))


def _modal_response(
    eigenvalues, mu, drive, time_grid: TimeGrid, contour, order, jobs=1
):
    """
    y_n(t) = int_0^t drive_n'(r) K_n(t - r) dr for piecewise-linear drive_n with
    drive_n(0) = 0, where K_n has the image 1/(s (s w(s) + lambda_n)).
    """
    t = time_grid.t_values
    slopes = np.diff(drive, axis=1) / np.diff(t)
    response = np.zeros_like(drive)
    if time_grid.is_uniform:
        q = integrated_relaxation(eigenvalues, mu, t, contour, order)
        steps = np.diff(q, axis=1)
        response[:, 1:] = fftconvolve(slopes, steps, axes=1)[:, : t.size - 1]
        return response
    lags = _lag_table(t)
    q = integrated_relaxation(eigenvalues, mu, lags, contour, order)
    lag = np.clip(t[:, None] - t[None, :], 0.0, None)

    def one_mode(n):
        table = np.interp(lag, lags, q[n])
        return (table[:, :-1] - table[:, 1:]) @ slopes[n]

    with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
        for n, values in enumerate(pool.map(one_mode, range(drive.shape[0]))):
            response[n] = values
    return response


def _tail_estimate(amplitudes, available):
    """Size of the modes beyond the computed ones, from a power-law fit."""
    n = amplitudes.size
    if n >= available or n < 4:
        return 0.0
    k = np.arange(1, n + 1)[n // 2 :]
    a = amplitudes[n // 2 :]
    keep = a > 0
    if keep.sum() < 2:
        return float(amplitudes[-1])
    slope, intercept = np.polyfit(np.log(k[keep]), np.log(a[keep]), 1)
    if slope >= -1:
        return float(a[-1] * (available - n))
    return float(math.exp(intercept) * n ** (slope + 1) / (-slope - 1))


class LiftedBoundary:
    """The boundary data lifted into the domain and projected on the modes."""

    def __init__(self, eig: EigenSystem, g: BoundaryData):
        grid = eig.grid
        if g.traces.shape[0] != grid.boundary_index.size:
            raise ContractError(
                f"Boundary data has {g.traces.shape[0]} nodes, the grid has "
                f"{grid.boundary_index.size}"
            )
        self.eig, self.time_grid = eig, g.grid
        system = EllipticSystem(grid, eig.potential, 0.0, eig.boundary_kind)
        self.lift = system.solve(g_trace=g.traces)
        self.coefficients = eig.project(self.lift.T).T
        self.remainder = self.lift - eig.synthesize(self.coefficients.T).T

    def samples(
        self,
        mu: WeightFunction,
        contour=None,
        order=DEFAULT_ALPHA_ORDER,
        representation="lift",
        jobs=1,
        nodes=None,
    ):
        """Solution samples (nodes, times) and the modal amplitudes of the dynamics."""
        if representation not in REPRESENTATIONS:
            raise DomainError(
                f"Representation '{representation}' is not supported. "
                f"Use {REPRESENTATIONS}"
            )
        eig = self.eig
        lam = eig.eigenvalues
        if representation == "lift":
            modal = lam[:, None] * _modal_response(
                lam, mu, self.coefficients, self.time_grid, contour, order, jobs
            )
            dynamics = modal - self.coefficients
            base = self.remainder
        else:
            matrix = distributed_matrix(self.time_grid, mu, order)
            source = -(self.coefficients @ matrix.T)
            dynamics = _modal_response(
                lam, mu, source, self.time_grid, contour, order, jobs
            )
            modal = dynamics
            base = self.lift
        where = slice(None) if nodes is None else nodes
        values = base[where] + eig.eigenvectors[:, where].T @ modal
        values[..., 0] = 0.0
        return values, np.abs(dynamics).max(axis=1)


def _mode_budget(eig: EigenSystem):
    return eig.grid.unknowns(eig.boundary_kind).size


def _boundary_field(eig, mu, g, p, kind, contour, order, representation, jobs):
    if eig.boundary_kind != kind:
        raise ContractError(f"Expected a {kind} eigensystem, got {eig.boundary_kind}")
    _check_potential(eig, p)
    _check_times(g.grid)
    if kind == "neumann" and not p.certified:
        raise ContractError("Neumann solve needs a potential certified p >= c0 > 0")
    logging.info(
        f"Solving {kind} problem: {eig.grid.shape} nodes, {eig.mode_count} modes, "
        f"{g.grid.steps} steps up to T={g.grid.T}"
    )
    samples, amplitudes = LiftedBoundary(eig, g).samples(
        mu, contour, order, representation, jobs
    )
    tail = _tail_estimate(amplitudes, _mode_budget(eig))
    logging.info(f"Mode truncation tail estimate: {tail:.3e}")
    return Field(eig.grid, g.grid, samples, kind, "spectral", tail)


def solve_dirichlet(
    eig: EigenSystem,
    mu: WeightFunction,
    g: BoundaryData,
    p: Potential,
    contour: Optional[ContourSpec] = None,
    order=DEFAULT_ALPHA_ORDER,
    representation="lift",
    jobs=1,
) -> Field:
    return _boundary_field(
        eig, mu, g, p, "dirichlet", contour, order, representation, jobs
    )


def solve_neumann(
    eig: EigenSystem,
    mu: WeightFunction,
    g: BoundaryData,
    p: Potential,
    contour: Optional[ContourSpec] = None,
    order=DEFAULT_ALPHA_ORDER,
    representation="lift",
    jobs=1,
) -> Field:
    return _boundary_field(
        eig, mu, g, p, "neumann", contour, order, representation, jobs
    )


def solve_source(
    eig: EigenSystem,
    mu: WeightFunction,
    F,
    time_grid: TimeGrid,
    contour: Optional[ContourSpec] = None,
    order=DEFAULT_ALPHA_ORDER,
    jobs=1,
) -> Field:
    """Homogeneous boundary data, source F[node, time] with F(., 0) = 0."""
    F = np.asarray(F, dtype=float)
    if F.shape != (eig.grid.size, time_grid.t_values.size):
        raise ContractError(
            f"Source has shape {F.shape}, expected "
            f"{(eig.grid.size, time_grid.t_values.size)}"
        )
    start = np.abs(F[:, 0]).max()
    if start != 0:
        raise ContractError(f"Source must vanish at t=0, max |F(., 0)| = {start}")
    _check_times(time_grid)
    coefficients = eig.project(F.T).T
    modal = _modal_response(
        eig.eigenvalues, mu, coefficients, time_grid, contour, order, jobs
    )
    samples = eig.synthesize(modal.T).T
    samples[:, 0] = 0.0
    tail = _tail_estimate(np.abs(modal).max(axis=1), _mode_budget(eig))
    return Field(eig.grid, time_grid, samples, eig.boundary_kind, "spectral", tail)


def timestep_oracle(
    mu: WeightFunction,
    p: Potential,
    g: BoundaryData,
    kind,
    order=DEFAULT_ALPHA_ORDER,
    refinement=1,
) -> Field:
    """
    Implicit L1 scheme: sum_k c_k (L1 Caputo of order alpha_k) U_n + A U_n = 0
    with boundary data, one sparse solve per step. Returned on the grid of g.
    """
    check_kind(kind)
    grid = p.grid
    data = g.refined(refinement)
    t = data.grid.t_values
    logging.info(
        f"Time-stepping oracle: {kind}, {grid.shape} nodes, {t.size - 1} steps"
    )
    matrix = distributed_matrix(data.grid, mu, order)
    u = np.zeros((t.size, grid.size))
    system, shift = None, None
    for n in range(1, t.size):
        if system is None or abs(matrix[n, n] - shift) > 1e-12 * shift:
            shift = matrix[n, n]
            system = EllipticSystem(grid, p, shift, kind)
        history = matrix[n, :n] @ u[:n]
        u[n] = system.solve(-history, data.traces[:, n])
    return Field(grid, g.grid, u[::refinement].T, kind, "timestep")


def classical_heat_oracle(p: Potential, g: BoundaryData, kind, refinement=1) -> Field:
    """Crank-Nicolson for u_t - Laplace u + p u = 0, the mu = delta(alpha - 1) limit."""
    check_kind(kind)
    grid = p.grid
    data = g.refined(refinement)
    t = data.grid.t_values
    operator = full_operator(grid, p.values)
    u = np.zeros((t.size, grid.size))
    systems = {}
    for n in range(1, t.size):
        dt = t[n] - t[n - 1]
        key = round(dt, 14)
        if key not in systems:
            systems[key] = EllipticSystem(grid, p, 2.0 / dt, kind)
        rhs = 2.0 / dt * u[n - 1] - operator @ u[n - 1]
        if kind == "neumann":
            rhs += boundary_flux(grid, data.traces[:, n - 1])
        u[n] = systems[key].solve(rhs, data.traces[:, n])
    return Field(grid, g.grid, u[::refinement].T, kind, "classical")


def observe(field: Field, x0) -> ObservationRecord:
    index = field.grid.node_index(x0)
    if field.boundary_kind == "dirichlet" and index in set(field.grid.boundary_index):
        raise ContractError(f"Dirichlet observations need an interior node, got {x0}")
    point = tuple(float(v) for v in field.grid.coordinates()[index])
    series = TimeSeries(field.time_grid, field.samples[index])
    return ObservationRecord(point, series, dict(field.metadata), field.provenance)


def _floats(text):
    return tuple(float(v) for v in text.split(",") if v.strip())


@dataclass(frozen=True)
class Experiment:
    """Everything a forward run needs apart from the weight mu."""

    dimension: int = 1
    nodes: int = 63
    boundary: str = "dirichlet"
    potential: float = 0.0
    potential_slope: float = 0.0
    g_profile: str = "bump"
    g_center: Optional[float] = None
    g_width: Optional[float] = None
    g_amplitude: float = 1.0
    g_table: Tuple[float, ...] = ()
    g_weights: Tuple[float, ...] = ()
    observe_at: Tuple[float, ...] = ()
    horizon: float = 1.0
    time_steps: int = 200
    grading: float = 1.0
    modes: Optional[int] = None
    eigen_mode: str = "auto"
    contour: ContourSpec = ContourSpec()
    alpha_order: int = DEFAULT_ALPHA_ORDER

    def __post_init__(self):
        if self.dimension not in (1, 2):
            raise DomainError(f"Dimension must be 1 or 2, got {self.dimension}")
        check_kind(self.boundary)
        if self.g_profile not in G_PROFILES:
            raise DomainError(
                f"Boundary profile '{self.g_profile}' is not supported. "
                f"Use {G_PROFILES}"
            )
        if self.eigen_mode not in EIGEN_MODES:
            raise DomainError(
                f"Eigen mode '{self.eigen_mode}' is not supported. Use {EIGEN_MODES}"
            )
        if not self.horizon > 0:
            raise DomainError(f"Horizon T={self.horizon} must be positive")
        if self.time_steps < 2:
            raise ContractError(f"Need at least 2 time steps, got {self.time_steps}")
        if self.potential < 0 or self.potential_slope < 0:
            raise DomainError(
                f"Potential {self.potential} + {self.potential_slope} x must be >= 0"
            )

    @cached_property
    def space_grid(self) -> SpatialGrid:
        if self.dimension == 1:
            return SpatialGrid.interval(self.nodes)
        return SpatialGrid.rectangle(self.nodes, self.nodes)

    @cached_property
    def time_grid(self) -> TimeGrid:
        if self.grading == 1:
            return TimeGrid.uniform(self.horizon, self.time_steps)
        return TimeGrid.graded(self.horizon, self.time_steps, self.grading)

    @cached_property
    def potential_field(self) -> Potential:
        x = self.space_grid.coordinates()[:, 0]
        p = Potential(self.space_grid, self.potential + self.potential_slope * x)
        return p.certify() if self.boundary == "neumann" else p

    @cached_property
    def boundary_data(self) -> BoundaryData:
        return boundary_data(
            self.space_grid,
            self.time_grid,
            self.g_profile,
            self.g_center,
            self.g_width,
            self.g_amplitude,
            self.g_table,
            self.g_weights,
        )

    @cached_property
    def observation_point(self):
        if self.observe_at:
            point = tuple(self.observe_at)
        else:
            point = tuple(float(a[a.size // 2]) for a in self.space_grid.axes)
        self.space_grid.node_index(point)
        return point

    @cached_property
    def eigen(self) -> EigenSystem:
        return eigensystem(
            self.space_grid,
            self.potential_field,
            self.boundary,
            self.modes,
            self.eigen_mode,
        )

    @cached_property
    def lifted(self) -> LiftedBoundary:
        return LiftedBoundary(self.eigen, self.boundary_data)

    def describe(self) -> Dict[str, str]:
        description = {}
        for key, value in asdict(self).items():
            if key == "contour":
                continue
            if isinstance(value, tuple):
                description[key] = ",".join(repr(float(v)) for v in value)
            elif value is None:
                description[key] = ""
            elif isinstance(value, (int, float)) and key not in _INT_KEYS:
                description[key] = repr(float(value))
            else:
                description[key] = str(value)
        description["contour"] = self.contour.kind
        description["contour_nodes"] = str(self.contour.node_count)
        description["contour_scale"] = repr(float(self.contour.scale))
        gamma = self.contour.gamma
        description["contour_gamma"] = "" if gamma is None else repr(float(gamma))
        return description

    @classmethod
    def from_description(cls, description: Dict[str, str]) -> "Experiment":
        d = dict(description)
        for stamp in ("mu", "provenance"):
            d.pop(stamp, None)
        try:
            gamma = d.pop("contour_gamma", "")
            contour = ContourSpec(
                d.pop("contour", "talbot"),
                int(d.pop("contour_nodes", "48")),
                float(d.pop("contour_scale", "1.0")),
                float(gamma) if gamma else None,
            )
            kwargs = {}
            for key, value in d.items():
                if key not in cls.__dataclass_fields__:
                    raise ContractError(f"Unknown experiment key '{key}'")
                if key in _INT_KEYS:
                    kwargs[key] = int(value) if value else None
                elif key in ("g_center", "g_width"):
                    kwargs[key] = float(value) if value else None
                elif key in ("g_table", "g_weights", "observe_at"):
                    kwargs[key] = _floats(value)
                elif key in ("boundary", "g_profile", "eigen_mode"):
                    kwargs[key] = value
                else:
                    kwargs[key] = float(value)
            return cls(contour=contour, **kwargs)
        except (DomainError, ContractError):
            raise
        except (TypeError, ValueError) as ex:
            raise ContractError(f"Experiment description is not valid: {ex}")

    @property
    def discretization_key(self):
        return discretization_key(self.describe())

    def with_changes(self, **changes) -> "Experiment":
        return replace(self, **changes)

    def _stamp(self, mu: WeightFunction, provenance):
        meta = self.describe()
        meta["mu"] = ",".join(
            f"{a!r}:{v!r}" for a, v in zip(mu.alpha_grid.tolist(), mu.values.tolist())
        )
        meta["provenance"] = provenance
        return meta

    def solve(self, mu: WeightFunction, representation="lift", jobs=1) -> Field:
        solver = solve_dirichlet if self.boundary == "dirichlet" else solve_neumann
        result = solver(
            self.eigen,
            mu,
            self.boundary_data,
            self.potential_field,
            self.contour,
            self.alpha_order,
            representation,
            jobs,
        )
        return replace(result, metadata=self._stamp(mu, "spectral"))

    def oracle(self, mu: WeightFunction, refinement=1) -> Field:
        result = timestep_oracle(
            mu,
            self.potential_field,
            self.boundary_data,
            self.boundary,
            self.alpha_order,
            refinement,
        )
        return replace(result, metadata=self._stamp(mu, "timestep"))

    def observe(self, mu: WeightFunction, provenance="spectral", refinement=1, jobs=1):
        if provenance == "timestep":
            return observe(self.oracle(mu, refinement), self.observation_point)
        if provenance != "spectral":
            raise DomainError(
                f"Observations come from spectral or timestep runs, not {provenance}"
            )
        index = self.space_grid.node_index(self.observation_point)
        boundary = set(self.space_grid.boundary_index)
        if self.boundary == "dirichlet" and index in boundary:
            raise ContractError(
                f"Dirichlet observations need an interior node, "
                f"got {self.observation_point}"
            )
        values, _ = self.lifted.samples(
            mu, self.contour, self.alpha_order, jobs=jobs, nodes=[index]
        )
        series = TimeSeries(self.time_grid, values[0])
        return ObservationRecord(
            self.observation_point, series, self._stamp(mu, "spectral"), "spectral"
        )
