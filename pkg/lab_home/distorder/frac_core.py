"""
Fractional calculus on time grids.

Workflow:
1. Describe the memory spectrum as a piecewise-linear weight mu(alpha) on [0, 1].
2. Sample a signal on a (possibly nonuniform) TimeGrid.
3. Apply Caputo derivatives (L1 scheme), Riemann-Liouville integrals
(product integration) or the distributed-order derivative, which averages
Caputo derivatives over alpha with composite Gauss-Legendre quadrature.

The Laplace symbol w(s) = int_0^1 mu(alpha) s^(alpha - 1) d alpha of the
distributed-order operator uses the same alpha quadrature.

https://en.wikipedia.org/wiki/Caputo_fractional_derivative
https://en.wikipedia.org/wiki/Riemann%E2%80%93Liouville_integral
https://en.wikipedia.org/wiki/Gauss%E2%80%93Legendre_quadrature
"""

import logging
import math
from dataclasses import dataclass
from typing import Callable, Tuple

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.special import gamma

from .exceptions import ContractError, DomainError

DEFAULT_ALPHA_ORDER = 32
MIN_SEGMENT_ORDER = 8
MOMENT_SEGMENT_ORDER = 32
DEFAULT_HAT_HALF_WIDTH = 0.005


def _frozen_array(values, name):
    arr = np.array(values, dtype=float)
    if arr.ndim != 1:
        raise ContractError(f"{name} must be one-dimensional, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class WeightFunction:
    """Nonnegative piecewise-linear weight over the orders alpha in [0, 1]."""

    alpha_grid: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        alpha = _frozen_array(self.alpha_grid, "alpha_grid")
        values = _frozen_array(self.values, "values")
        if alpha.size < 2 or alpha.size != values.size:
            raise ContractError(
                f"Weight needs at least 2 nodes and one value per node, "
                f"got {alpha.size} nodes and {values.size} values"
            )
        if alpha[0] != 0.0 or alpha[-1] != 1.0:
            raise DomainError(
                f"Weight nodes must start at 0 and end at 1, "
                f"got [{alpha[0]}, {alpha[-1]}]"
            )
        if np.any(np.diff(alpha) <= 0):
            raise DomainError(f"Weight nodes must be strictly increasing: {alpha}")
        if not np.all(np.isfinite(values)):
            raise DomainError(f"Weight values must be finite: {values}")
        negative = np.flatnonzero(values < 0)
        if negative.size:
            k = negative[0]
            raise DomainError(
                f"Weight node {k} at alpha={alpha[k]} is negative: {values[k]}"
            )
        if not np.any(values > 0):
            raise DomainError("Weight vanishes identically, some node must be > 0")
        object.__setattr__(self, "alpha_grid", alpha)
        object.__setattr__(self, "values", values)

    @classmethod
    def constant(cls, value=1.0):
        return cls([0.0, 1.0], [value, value])

    @classmethod
    def linear(cls, intercept, slope):
        return cls([0.0, 1.0], [intercept, intercept + slope])

    @classmethod
    def from_callable(cls, func: Callable, nodes=17):
        alpha = np.linspace(0.0, 1.0, nodes)
        return cls(alpha, np.maximum([func(a) for a in alpha], 0.0))

    @classmethod
    def raised_cosine(cls, center, width, height, base=0.0, nodes=33):
        def hump(a):
            x = (a - center) / width
            if abs(x) > 0.5:
                return base
            return base + height * 0.5 * (1 + math.cos(2 * math.pi * x))

        return cls.from_callable(hump, nodes)

    @classmethod
    def narrow_hat(cls, alpha0, half_width=DEFAULT_HAT_HALF_WIDTH):
        """Unit-mass hat at alpha0; a half hat when alpha0 is 0 or 1."""
        h = half_width
        if not 0 < h < 0.5:
            raise DomainError(f"Hat half width must lie in (0, 0.5), got {h}")
        if alpha0 == 0.0:
            return cls([0.0, h, 1.0], [2.0 / h, 0.0, 0.0])
        if alpha0 == 1.0:
            return cls([0.0, 1.0 - h, 1.0], [0.0, 0.0, 2.0 / h])
        if not h <= alpha0 <= 1.0 - h:
            raise DomainError(
                f"Hat at alpha0={alpha0} with half width {h} leaves [0, 1]"
            )
        nodes = [0.0, alpha0 - h, alpha0, alpha0 + h, 1.0]
        values = [0.0, 0.0, 1.0 / h, 0.0, 0.0]
        keep = [0] + [k for k in range(1, 5) if nodes[k] > nodes[k - 1]]
        return cls([nodes[k] for k in keep], [values[k] for k in keep])

    @classmethod
    def load(cls, path):
        table = np.loadtxt(path, comments="#", ndmin=2)
        if table.shape[1] != 2:
            raise ContractError(
                f"Weight file {path} must have two columns (alpha, value), "
                f"got {table.shape[1]}"
            )
        return cls(table[:, 0], table[:, 1])

    def save(self, path, comment=None):
        header = "alpha value" if comment is None else f"{comment}\nalpha value"
        np.savetxt(path, np.column_stack([self.alpha_grid, self.values]), header=header)

    def __call__(self, alpha):
        return np.interp(alpha, self.alpha_grid, self.values)

    def mass(self):
        mids = 0.5 * (self.values[1:] + self.values[:-1])
        return float(np.sum(mids * np.diff(self.alpha_grid)))

    def sup_norm(self):
        return float(self.values.max())

    def resampled(self, nodes):
        alpha = np.linspace(0.0, 1.0, nodes)
        return WeightFunction(alpha, self(alpha))

    def same_as(self, other):
        return np.array_equal(self.alpha_grid, other.alpha_grid) and np.array_equal(
            self.values, other.values
        )


@dataclass(frozen=True, eq=False)
class TimeGrid:
    t_values: np.ndarray

    def __post_init__(self):
        t = _frozen_array(self.t_values, "t_values")
        if t.size < 2:
            raise ContractError(f"Time grid needs at least 2 points, got {t.size}")
        if t[0] != 0.0:
            raise ContractError(f"Time grid must start at 0, got {t[0]}")
        if np.any(np.diff(t) <= 0):
            raise ContractError("Time grid must be strictly increasing")
        object.__setattr__(self, "t_values", t)

    @classmethod
    def uniform(cls, horizon, steps):
        return cls(np.linspace(0.0, horizon, steps + 1))

    @classmethod
    def graded(cls, horizon, steps, grading):
        if grading < 1:
            raise DomainError(f"Grading exponent must be >= 1, got {grading}")
        return cls(horizon * np.linspace(0.0, 1.0, steps + 1) ** grading)

    @property
    def T(self):
        return float(self.t_values[-1])

    @property
    def steps(self):
        return self.t_values.size - 1

    @property
    def is_uniform(self):
        dt = np.diff(self.t_values)
        return bool(np.allclose(dt, dt[0], rtol=1e-12, atol=0.0))

    def refined(self, factor):
        if factor == 1:
            return self
        t = self.t_values
        frac = np.arange(factor) / factor
        inner = (t[:-1, None] + np.diff(t)[:, None] * frac[None, :]).ravel()
        return TimeGrid(np.append(inner, t[-1]))

    def same_as(self, other):
        return np.array_equal(self.t_values, other.t_values)


@dataclass(frozen=True, eq=False)
class TimeSeries:
    grid: TimeGrid
    samples: np.ndarray

    def __post_init__(self):
        samples = _frozen_array(self.samples, "samples")
        if samples.size != self.grid.t_values.size:
            raise ContractError(
                f"Series has {samples.size} samples for a grid of "
                f"{self.grid.t_values.size} points"
            )
        object.__setattr__(self, "samples", samples)

    @property
    def t(self):
        return self.grid.t_values

    def scaled(self, factor):
        return TimeSeries(self.grid, factor * self.samples)


@dataclass(frozen=True)
class OscillationReport:
    level: float
    isolated_points: Tuple[float, ...]
    flat_intervals: Tuple[Tuple[float, float], ...]

    @property
    def count(self):
        return len(self.isolated_points)


@dataclass(frozen=True)
class AdmissibilityReport:
    nonnegative: bool
    nonvanishing: bool
    finite_oscillation: bool
    flat_levels: Tuple[float, ...]

    @property
    def admissible(self):
        """Usable by the solvers; level sets are reported, not required."""
        return self.nonnegative and self.nonvanishing

    @property
    def in_oscillation_class(self):
        """Admissible and every level set a finite set of points."""
        return self.admissible and self.finite_oscillation


def _require_order(alpha, upper=1.0):
    if not 0.0 <= alpha <= upper:
        raise DomainError(f"Order alpha={alpha} is outside [0, {upper}]")


def eval_weight(mu: WeightFunction, alpha):
    _require_order(alpha)
    return float(mu(alpha))


def finite_oscillation_count(mu: WeightFunction, level) -> OscillationReport:
    alpha = mu.alpha_grid
    d = mu.values - level
    flats = []
    for k in range(d.size - 1):
        if d[k] == 0 and d[k + 1] == 0:
            if flats and flats[-1][1] == alpha[k]:
                flats[-1] = (flats[-1][0], alpha[k + 1])
            else:
                flats.append((alpha[k], alpha[k + 1]))

    def in_flat(a):
        return any(lo <= a <= hi for lo, hi in flats)

    points = []
    for k in range(d.size):
        if d[k] == 0 and not in_flat(alpha[k]):
            points.append(float(alpha[k]))
        if k + 1 < d.size and d[k] * d[k + 1] < 0:
            frac = d[k] / (d[k] - d[k + 1])
            points.append(float(alpha[k] + frac * (alpha[k + 1] - alpha[k])))
    return OscillationReport(
        level=float(level),
        isolated_points=tuple(points),
        flat_intervals=tuple((float(a), float(b)) for a, b in flats),
    )


def admissibility_report(mu: WeightFunction) -> AdmissibilityReport:
    flat_levels = sorted(
        {
            float(v)
            for v in np.unique(mu.values)
            if finite_oscillation_count(mu, v).flat_intervals
        }
    )
    return AdmissibilityReport(
        nonnegative=bool(np.all(mu.values >= 0)),
        nonvanishing=bool(np.any(mu.values > 0)),
        finite_oscillation=not flat_levels,
        flat_levels=tuple(flat_levels),
    )


def alpha_quadrature(
    mu: WeightFunction, order=DEFAULT_ALPHA_ORDER, min_segment_order=MIN_SEGMENT_ORDER
):
    """
    Composite Gauss-Legendre rule on the segments of mu.
    Returns nodes alpha_k and weights c_k = w_k * mu(alpha_k), so that
    int_0^1 mu(alpha) f(alpha) d alpha ~ sum_k c_k f(alpha_k).
    Segments where mu vanishes at both ends are skipped.
    """
    nodes, weights = [], []
    alpha, values = mu.alpha_grid, mu.values
    for k in range(alpha.size - 1):
        if values[k] == 0 and values[k + 1] == 0:
            continue
        a, b = alpha[k], alpha[k + 1]
        n = max(min_segment_order, int(math.ceil(order * (b - a))))
        x, w = leggauss(n)
        nodes.append(0.5 * (b - a) * x + 0.5 * (a + b))
        weights.append(0.5 * (b - a) * w)
    nodes = np.concatenate(nodes)
    weights = np.concatenate(weights) * mu(nodes)
    return nodes, weights


def moment_w(mu: WeightFunction, s):
    if not s > 0:
        raise DomainError(f"Laplace variable s={s} must be positive")
    if s == 1:
        return mu.mass()
    nodes, weights = alpha_quadrature(mu, 0, min_segment_order=MOMENT_SEGMENT_ORDER)
    return float(np.sum(weights * np.exp((nodes - 1.0) * math.log(s))))


def symbol_w(s, nodes, weights):
    """w(s) on an array of complex s for a precomputed alpha rule (principal branch)."""
    log_s = np.log(np.asarray(s, dtype=complex))
    return np.exp(np.multiply.outer(log_s, nodes - 1.0)) @ weights


def sw_upper_bound(mu: WeightFunction, s):
    if not s > 1:
        raise DomainError(f"The bound needs s > 1, got s={s}")
    return mu.sup_norm() * (s - 1.0) / math.log(s)


def caputo_matrix(grid: TimeGrid, alpha):
    """L1 matrix for 0 < alpha < 1, exact kernel weights per interval."""
    t = grid.t_values
    dt = np.diff(t)
    p = np.clip(t[:, None] - t[None, :], 0.0, None) ** (1.0 - alpha)
    coeff = (p[:, :-1] - p[:, 1:]) / (gamma(2.0 - alpha) * dt[None, :])
    matrix = np.zeros((t.size, t.size))
    matrix[:, 1:] += coeff
    matrix[:, :-1] -= coeff
    return matrix


def rl_matrix(grid: TimeGrid, alpha):
    """Product-integration matrix of J^alpha, exact for piecewise-linear integrands."""
    t = grid.t_values
    dt = np.diff(t)
    a = np.clip(t[:, None] - t[None, :-1], 0.0, None)
    b = np.clip(t[:, None] - t[None, 1:], 0.0, None)
    i0 = (a ** alpha - b ** alpha) / alpha
    i1 = (a ** (alpha + 1) - b ** (alpha + 1)) / (alpha + 1)
    scale = 1.0 / (gamma(alpha) * dt[None, :])
    matrix = np.zeros((t.size, t.size))
    matrix[:, :-1] += (i1 - b * i0) * scale
    matrix[:, 1:] += (a * i0 - i1) * scale
    return matrix


def distributed_matrix(grid: TimeGrid, mu: WeightFunction, order=DEFAULT_ALPHA_ORDER):
    nodes, weights = alpha_quadrature(mu, order)
    logging.debug(
        f"Distributed-order matrix: {nodes.size} alpha nodes, {grid.steps} steps"
    )
    matrix = np.zeros((grid.t_values.size,) * 2)
    for alpha_k, c_k in zip(nodes, weights):
        matrix += c_k * caputo_matrix(grid, alpha_k)
    return matrix


def rl_integral(series: TimeSeries, alpha) -> TimeSeries:
    if not alpha > 0:
        raise DomainError(f"Integral order alpha={alpha} must be positive")
    return TimeSeries(series.grid, rl_matrix(series.grid, alpha) @ series.samples)


def caputo_derivative(series: TimeSeries, alpha) -> TimeSeries:
    _require_order(alpha)
    if alpha == 0:
        return TimeSeries(series.grid, series.samples.copy())
    if alpha == 1:
        edge = 2 if series.samples.size > 2 else 1
        derivative = np.gradient(series.samples, series.t, edge_order=edge)
        return TimeSeries(series.grid, derivative)
    return TimeSeries(series.grid, caputo_matrix(series.grid, alpha) @ series.samples)


def distributed_derivative(
    series: TimeSeries, mu: WeightFunction, order=DEFAULT_ALPHA_ORDER
) -> TimeSeries:
    matrix = distributed_matrix(series.grid, mu, order)
    return TimeSeries(series.grid, matrix @ series.samples)


def same_grid(a: TimeGrid, b: TimeGrid, what="series") -> TimeGrid:
    if not a.same_as(b):
        raise ContractError(
            f"The {what} live on different time grids "
            f"({a.t_values.size} vs {b.t_values.size} points)"
        )
    return a
