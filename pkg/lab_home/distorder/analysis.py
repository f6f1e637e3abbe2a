"""
Numerical checks of the qualitative properties of the distributed-order
diffusion problem.

Workflow:
1. Run a forward problem (see forward) or build series and weights directly.
2. Call a check; every check returns a CheckResult that prints as one
machine-readable line (name, value, threshold, verdict).
3. Collect the lines, the cli writes them to checks.csv.

Checks cover the maximum principle of computed fields, the extremum lemma
for the discrete derivative on uniform grids, Harnack ratios of the
Laplace-domain elliptic problem, positivity hitting times, the J^2 comparison
of two observations, the Laplace witness of two weights, the semigroup law of
J^alpha, the defining relation of the relaxation function, and the bound
s w(s) <= |mu| (s - 1) / log s.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from .exceptions import ContractError, DomainError
from .forward import BoundaryData, Field, ObservationRecord
from .frac_core import (
    DEFAULT_ALPHA_ORDER,
    TimeGrid,
    TimeSeries,
    WeightFunction,
    distributed_matrix,
    moment_w,
    rl_integral,
    same_grid,
    sw_upper_bound,
)
from .laplace import ContourSpec, laplace_of_series, relaxation
from .spectral import Potential, SpatialGrid, check_kind, elliptic_solve

MAX_PRINCIPLE_TOL = 1e-6
HARNACK_STABILITY = 0.2
SEMIGROUP_TOL = 1e-4
RELAXATION_ODE_TOL = 1e-2
WITNESS_GAP = 1e-12
HITTING_FRACTION = 1e-10
EXTREMUM_TOL = 1e-10
SW_BOUND_SAMPLES = np.logspace(0.0, 6.0, 101)[1:]


@dataclass(frozen=True)
class CheckResult:
    name: str
    value: float
    threshold: float
    passed: bool
    witness: str = ""

    def to_line(self):
        verdict = "pass" if self.passed else "fail"
        return f"{self.name},{self.value:.12e},{self.threshold:.12e},{verdict}"


def log_check(result: CheckResult):
    if result.passed:
        logging.info(f"Check {result.name} passed: {result.value:.3e}")
    else:
        logging.warning(
            f"Check {result.name} failed: {result.value:.3e} against "
            f"{result.threshold:.3e} {result.witness}"
        )
    return result


def check_max_principle(field: Field, tol=MAX_PRINCIPLE_TOL) -> CheckResult:
    samples = field.samples
    node, step = np.unravel_index(np.argmin(samples), samples.shape)
    low = float(samples[node, step])
    threshold = -tol * max(float(samples.max()), 0.0)
    point = field.grid.coordinates()[node]
    t = float(field.time_grid.t_values[step])
    witness = f"x={tuple(point.tolist())} t={t!r}"
    return log_check(
        CheckResult("max_principle", low, threshold, low >= threshold, witness)
    )


def extremum_lemma_probe(
    series: TimeSeries, mu: WeightFunction, order=DEFAULT_ALPHA_ORDER
) -> float:
    """D^(mu) series at its last minimizer t0, which must lie in (0, T]."""
    t0, row = _minimizer_row(series, mu, order)
    return float(row @ series.samples[: t0 + 1])


def _minimizer_row(series: TimeSeries, mu: WeightFunction, order):
    samples = series.samples
    t0 = int(np.flatnonzero(samples == samples.min())[-1])
    if t0 == 0:
        raise ContractError("Series attains its minimum only at t=0")
    return t0, distributed_matrix(series.grid, mu, order)[t0, : t0 + 1]


def extremum_lemma_check(
    series: TimeSeries,
    mu: WeightFunction,
    order=DEFAULT_ALPHA_ORDER,
    tol=EXTREMUM_TOL,
) -> CheckResult:
    """D^(mu) series(t0) <= tol times the scale of the row and of the series."""
    t0, row = _minimizer_row(series, mu, order)
    value = float(row @ series.samples[: t0 + 1])
    threshold = tol * float(np.abs(row).sum() * np.abs(series.samples).max())
    witness = f"t0={float(series.grid.t_values[t0])!r}"
    return log_check(
        CheckResult("extremum_lemma", value, threshold, value <= threshold, witness)
    )


@dataclass(frozen=True, eq=False)
class HarnackReport:
    s_values: np.ndarray
    sw_values: np.ndarray
    sup_values: np.ndarray
    inf_values: np.ndarray
    subdomain: Tuple[Tuple[float, float], ...]

    @property
    def ratios(self):
        return self.sup_values / self.inf_values

    @property
    def log_ratios(self):
        return np.log(self.sup_values) - np.log(self.inf_values)

    @property
    def fitted_C(self):
        """
        Least-squares C of log(ratio) ~ C (1 + s w(s)) under the constraint
        log(ratio) <= C (1 + s w(s)) at every s. The constrained minimum sits
        on the largest log(ratio) / (1 + s w(s)).
        """
        return float(np.max(self.log_ratios / (1.0 + self.sw_values)))

    @property
    def slope_C(self):
        """Unconstrained least-squares C of log(ratio) ~ C (1 + s w(s))."""
        x = 1.0 + self.sw_values
        return float(self.log_ratios @ x / (x @ x))

    def bound_holds(self, constant, tolerance=HARNACK_STABILITY):
        """Ratios >= 1 and log(ratio) <= (1 + tolerance) constant (1 + s w(s))."""
        limit = (1.0 + tolerance) * constant * (1.0 + self.sw_values)
        return bool(np.all(self.ratios >= 1.0) and np.all(self.log_ratios <= limit))

    def save(self, path):
        table = np.column_stack(
            [
                self.s_values,
                self.sw_values,
                self.sup_values,
                self.inf_values,
                self.log_ratios,
            ]
        )
        box = ";".join(f"{float(lo)!r}:{float(hi)!r}" for lo, hi in self.subdomain)
        with open(path, "w") as fh:
            fh.write("s,sw,sup,inf,log_ratio\n")
            np.savetxt(fh, table, delimiter=",")
            fh.write(
                f"# fitted_C={self.fitted_C!r} slope_C={self.slope_C!r} U={box}\n"
            )

    @classmethod
    def load(cls, path):
        table = np.loadtxt(path, delimiter=",", skiprows=1, comments="#", ndmin=2)
        with open(path) as fh:
            summary = [line for line in fh if line.startswith("# fitted_C=")]
        box = ()
        if summary:
            spec = summary[-1].split("U=")[-1].strip()
            box = tuple(
                tuple(float(v) for v in part.split(":")) for part in spec.split(";")
            )
        return cls(table[:, 0], table[:, 1], table[:, 2], table[:, 3], box)


def subdomain_mask(grid: SpatialGrid, subdomain):
    """Nodes of the box U; U must keep two cells away from the boundary."""
    if len(subdomain) != grid.dimension:
        raise ContractError(
            f"Subdomain {subdomain} does not match a {grid.dimension}-D grid"
        )
    coords = grid.coordinates()
    mask = np.ones(grid.size, dtype=bool)
    for k, ((lo, hi), axis, h) in enumerate(zip(subdomain, grid.axes, grid.spacing)):
        if lo - axis[0] < 2 * h - 1e-12 or axis[-1] - hi < 2 * h - 1e-12 or hi < lo:
            raise ContractError(
                f"Subdomain side [{lo}, {hi}] on axis {k} needs a margin of 2 cells "
                f"({2 * h}) inside [{axis[0]}, {axis[-1]}]"
            )
        tol = 1e-9 * h
        mask &= (coords[:, k] >= lo - tol) & (coords[:, k] <= hi + tol)
    if not mask.any():
        raise ContractError(f"Subdomain {subdomain} contains no grid node")
    return mask


def middle_third(grid: SpatialGrid):
    return tuple(
        (a[0] + (a[-1] - a[0]) / 3.0, a[0] + 2.0 * (a[-1] - a[0]) / 3.0)
        for a in grid.axes
    )


def _transformed_trace(g, s):
    if isinstance(g, BoundaryData):
        if s <= 0:
            raise DomainError(f"Transforms of boundary data need s > 0, got {s}")
        return np.array(
            [
                float(laplace_of_series(TimeSeries(g.grid, row), s))
                for row in g.traces
            ]
        )
    return np.asarray(g, dtype=float)


def harnack_scan(
    grid: SpatialGrid,
    p: Potential,
    mu: WeightFunction,
    g,
    subdomain,
    s_values: Sequence[float],
    kind="dirichlet",
    jobs=1,
) -> HarnackReport:
    """
    Solve (-Laplace + p + s w(s)) u = 0 with the transformed boundary data for
    every s and record sup and inf of u over the box U. g is BoundaryData
    (transformed per s) or a static trace; s = 0 is accepted for static traces.
    """
    check_kind(kind)
    mask = subdomain_mask(grid, subdomain)
    s_values = np.asarray(s_values, dtype=float)
    if np.any(s_values < 0):
        raise DomainError(f"Laplace variables must be >= 0, got {s_values}")
    sw = np.array([s * moment_w(mu, s) if s > 0 else 0.0 for s in s_values])
    logging.info(
        f"Harnack scan on {grid.shape} nodes, U={subdomain}, s={s_values.tolist()}"
    )

    def extremes_at(k):
        trace = _transformed_trace(g, s_values[k])
        solution = elliptic_solve(grid, p, sw[k], None, kind, trace).ravel()[mask]
        return solution.max(), solution.min()

    with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
        extremes = list(pool.map(extremes_at, range(s_values.size)))
    sup = np.array([e[0] for e in extremes])
    inf = np.array([e[1] for e in extremes])
    if np.any(inf <= 0):
        k = int(np.argmin(inf))
        raise ContractError(
            f"Solution is not positive on U at s={s_values[k]} (inf {inf[k]})"
        )
    return HarnackReport(s_values, sw, sup, inf, tuple(map(tuple, subdomain)))


def harnack_stability(
    coarse: HarnackReport, fine: HarnackReport, tolerance=HARNACK_STABILITY
) -> CheckResult:
    """Each grid's ratios must obey the constant fitted on the other grid."""
    c, f = coarse.fitted_C, fine.fitted_C
    change = abs(f - c) / abs(c) if c != 0 else abs(f)
    passed = (
        change <= tolerance
        and coarse.bound_holds(f, tolerance)
        and fine.bound_holds(c, tolerance)
    )
    witness = f"fitted_C coarse={c!r} fine={f!r}"
    return log_check(CheckResult("harnack", change, tolerance, passed, witness))


def positivity_hitting(
    field: Field, x, delta=None, threshold=None
) -> Optional[float]:
    """Earliest grid time in (0, delta) with u(x, t) > threshold, or None."""
    index = field.grid.node_index(x)
    if field.boundary_kind == "dirichlet" and index in set(field.grid.boundary_index):
        raise ContractError(f"Dirichlet hitting times need an interior node, got {x}")
    t = field.time_grid.t_values
    delta = t[-1] / 4 if delta is None else delta
    if threshold is None:
        threshold = HITTING_FRACTION * max(float(field.samples.max()), 0.0)
    series = field.samples[index]
    hits = np.flatnonzero((t > 0) & (t < delta) & (series > threshold))
    return float(t[hits[0]]) if hits.size else None


def j2_compare(obs_a: ObservationRecord, obs_b: ObservationRecord) -> TimeSeries:
    grid = same_grid(obs_a.series.grid, obs_b.series.grid, "observations")
    a = rl_integral(obs_a.series, 2.0).samples
    b = rl_integral(obs_b.series, 2.0).samples
    return TimeSeries(grid, a - b)


@dataclass(frozen=True)
class LaplaceWitness:
    s0: float
    gap: float


def weight_gap(mu_a: WeightFunction, mu_b: WeightFunction, s_grid):
    """|int_0^1 s^alpha (mu_a - mu_b) d alpha| on the grid."""
    s_grid = np.asarray(s_grid, dtype=float)
    if np.any(s_grid <= 0):
        raise DomainError("Witness grid needs positive s")
    return np.array([s * abs(moment_w(mu_a, s) - moment_w(mu_b, s)) for s in s_grid])


def laplace_witness(
    mu_a: WeightFunction, mu_b: WeightFunction, s_grid
) -> Optional[LaplaceWitness]:
    gaps = weight_gap(mu_a, mu_b, s_grid)
    k = int(np.argmax(gaps))
    if gaps[k] < WITNESS_GAP:
        return None
    return LaplaceWitness(float(np.asarray(s_grid, dtype=float)[k]), float(gaps[k]))


def semigroup_check(
    series: TimeSeries, alpha=0.5, beta=0.5, tol=SEMIGROUP_TOL
) -> CheckResult:
    nested = rl_integral(rl_integral(series, beta), alpha).samples
    direct = rl_integral(series, alpha + beta).samples
    gap = float(np.abs(nested - direct).max())
    return log_check(
        CheckResult(f"semigroup_{alpha}_{beta}", gap, tol, gap <= tol)
    )


def relaxation_ode_check(
    mu: WeightFunction,
    lam,
    grid: TimeGrid,
    contour: Optional[ContourSpec] = None,
    order=DEFAULT_ALPHA_ORDER,
    tol=RELAXATION_ODE_TOL,
) -> CheckResult:
    """Worst |D^(mu) v + lam v| over grid times t >= T/10."""
    table = relaxation(lam, mu, grid, contour, order)
    residual = distributed_matrix(grid, mu, order) @ table.values + lam * table.values
    window = grid.t_values >= grid.T / 10
    worst = float(np.abs(residual[window]).max())
    name = f"relaxation_ode_{float(lam)!r}"
    return log_check(CheckResult(name, worst, tol, worst <= tol))


def sw_bound_check(mu: WeightFunction, s_values=SW_BOUND_SAMPLES) -> CheckResult:
    violations = 0
    worst = -math.inf
    for s in s_values:
        bound = sw_upper_bound(mu, s)
        excess = (s * moment_w(mu, s) - bound) / bound
        worst = max(worst, excess)
        violations += excess > 1e-10
    witness = f"worst relative excess {worst:.3e}"
    return log_check(
        CheckResult("sw_bound", float(violations), 0.0, violations == 0, witness)
    )
