"""
Recovery of the weight mu from the observation u(x0, t), 0 < t < T.

Workflow:
1. Rebuild the forward experiment from the record's metadata.
2. Minimize |u_mu(x0, .) - data|^2 / |data|^2 + beta |D2 m|^2 over the node
values m of a piecewise-linear mu on an equally spaced alpha grid, with a
projected Gauss-Newton iteration: finite-difference Jacobian, bound-constrained
steps m + d >= 0, Levenberg damping on failed steps, backtracking on the
objective. beta starts at tikhonov_start and shrinks by tikhonov_decay per
iteration down to tikhonov_weight.
3. Stop on a small step at the final beta, or when the data misfit reaches the
noise floor of the record (discrepancy principle).
4. Report mu_hat, the misfit history, the convergence flag and the Laplace
witness against the initial guess.

Recovery errors are only reported for data from another discretization unless
the inverse crime is explicitly allowed.

https://en.wikipedia.org/wiki/Gauss%E2%80%93Newton_algorithm
https://en.wikipedia.org/wiki/Tikhonov_regularization
https://en.wikipedia.org/wiki/Discrepancy_principle
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Optional, Tuple, Union

import numpy as np
from scipy.integrate import trapezoid
from scipy.optimize import lsq_linear

from .analysis import LaplaceWitness, laplace_witness
from .exceptions import ContractError, DomainError, InverseCrimeError
from .forward import Experiment, ObservationRecord
from .frac_core import (
    AdmissibilityReport,
    TimeSeries,
    WeightFunction,
    admissibility_report,
    same_grid,
)

CONVERGENCE_FLAGS = ["converged", "stalled", "max_iterations"]
STALL_LIMIT = 5
BACKTRACK_STEPS = 6
LEVENBERG_START = 1e-4
DISCREPANCY_FACTOR = 1.1
WITNESS_S_GRID = np.logspace(-2, 6, 81)


@dataclass(frozen=True)
class InversionConfig:
    basis_node_count: int = 17
    tikhonov_weight: float = 1e-6
    tikhonov_start: float = 1e-2
    tikhonov_decay: float = 0.3
    max_iterations: int = 40
    step_tolerance: float = 1e-6
    misfit_tolerance: float = 1e-12
    jacobian_step: float = 1e-4
    initial_value: float = 1.0
    jobs: int = 1

    def __post_init__(self):
        if self.basis_node_count < 3:
            raise DomainError(
                f"Weight basis needs at least 3 nodes, got {self.basis_node_count}"
            )
        if self.tikhonov_weight < 0 or self.tikhonov_start < 0:
            raise DomainError(
                f"Tikhonov weights must be >= 0, got {self.tikhonov_weight} "
                f"and start {self.tikhonov_start}"
            )
        if not 0 < self.tikhonov_decay <= 1:
            raise DomainError(
                f"Tikhonov decay must lie in (0, 1], got {self.tikhonov_decay}"
            )
        if self.max_iterations < 1:
            raise DomainError(
                f"Need at least one iteration, got {self.max_iterations}"
            )
        if not self.jacobian_step > 0 or not self.initial_value > 0:
            raise DomainError("Jacobian step and initial value must be positive")

    @property
    def alpha_grid(self):
        return np.linspace(0.0, 1.0, self.basis_node_count)

    def tikhonov_at(self, iteration):
        """Smoothing weight of a 0-based iteration, never below tikhonov_weight."""
        scheduled = self.tikhonov_start * self.tikhonov_decay ** iteration
        return max(self.tikhonov_weight, scheduled)


@dataclass(frozen=True, eq=False)
class InversionResult:
    mu_hat: WeightFunction
    misfit_history: Tuple[float, ...]
    final_residual: float
    final_misfit: float
    convergence_flag: str
    witness: Optional[LaplaceWitness]
    iterations: int
    discretization_key: str
    admissibility: AdmissibilityReport
    final_tikhonov: float = 0.0

    def report_lines(self):
        lines = [
            f"convergence={self.convergence_flag}",
            f"iterations={self.iterations}",
            f"final_residual={self.final_residual!r}",
            f"final_misfit={self.final_misfit!r}",
            f"final_tikhonov={self.final_tikhonov!r}",
            f"discretization_key={self.discretization_key}",
            f"admissible={self.admissibility.admissible}",
            f"finite_oscillation={self.admissibility.finite_oscillation}",
            f"oscillation_class={self.admissibility.in_oscillation_class}",
        ]
        if self.admissibility.flat_levels:
            levels = ",".join(repr(v) for v in self.admissibility.flat_levels)
            lines.append(f"flat_levels={levels}")
        if self.witness is None:
            lines.append("witness=none")
        else:
            lines.append(f"witness_s0={self.witness.s0!r}")
            lines.append(f"witness_gap={self.witness.gap!r}")
        lines.extend(
            f"misfit[{k}]={value!r}" for k, value in enumerate(self.misfit_history)
        )
        return lines

    def save(self, mu_path, report_path):
        self.mu_hat.save(mu_path, comment="recovered weight")
        with open(report_path, "w") as fh:
            fh.write("\n".join(self.report_lines()) + "\n")


def experiment_for(record: ObservationRecord) -> Experiment:
    if not record.experiment:
        raise ContractError("Observation carries no experiment description")
    experiment = Experiment.from_description(record.experiment)
    return experiment.with_changes(observe_at=tuple(record.x0))


def _l2_weights(grid):
    t = grid.t_values
    dt = np.diff(t)
    weights = np.zeros(t.size)
    weights[:-1] += dt / 2
    weights[1:] += dt / 2
    return weights


def _require_admissible(mu: WeightFunction):
    report = admissibility_report(mu)
    if not report.admissible:
        raise ContractError("Candidate weight is not admissible (zero or negative)")
    return report


def candidate_weight(candidate: Union[WeightFunction, np.ndarray]) -> WeightFunction:
    """A weight, or node values on an equally spaced alpha grid."""
    if isinstance(candidate, WeightFunction):
        _require_admissible(candidate)
        return candidate
    values = np.asarray(candidate, dtype=float)
    if values.ndim != 1 or values.size < 2:
        raise ContractError(
            f"Candidate needs one value per node on at least 2 nodes, got {values}"
        )
    if np.any(values < 0) or not np.any(values > 0):
        raise ContractError(
            f"Candidate weight is not admissible (zero or negative): {values}"
        )
    return WeightFunction(np.linspace(0.0, 1.0, values.size), values)


def _predict(experiment: Experiment, mu: WeightFunction, record, jobs=1):
    series = experiment.observe(mu, jobs=jobs).series
    same_grid(series.grid, record.series.grid, "prediction and data")
    return series.samples


def residual(
    mu_candidate: Union[WeightFunction, np.ndarray],
    record: ObservationRecord,
    experiment: Optional[Experiment] = None,
) -> float:
    """|u_candidate(x0, .) - data|_{L2(0, T)} by trapezoid quadrature on the grid."""
    mu = candidate_weight(mu_candidate)
    experiment = experiment or experiment_for(record)
    gap = _predict(experiment, mu, record) - record.series.samples
    return float(np.sqrt(_l2_weights(record.series.grid) @ gap ** 2))


class _Objective:
    """Scaled data residual r(m) and |r|^2 + beta |D2 m|^2."""

    def __init__(self, experiment, record, config: InversionConfig):
        self.experiment, self.record, self.config = experiment, record, config
        self.alpha = config.alpha_grid
        weights = _l2_weights(record.series.grid)
        data = record.series.samples
        self.scale = np.sqrt(weights) / np.sqrt(weights @ data ** 2)
        self.data = data
        self.d2 = np.diff(np.eye(self.alpha.size), 2, axis=0)

    def weight(self, m):
        return WeightFunction(self.alpha, m)

    def data_part(self, m, jobs=1):
        prediction = _predict(self.experiment, self.weight(m), self.record, jobs)
        return self.scale * (prediction - self.data)

    def value(self, data_r, m, beta):
        smooth = self.d2 @ m
        return float(data_r @ data_r + beta * smooth @ smooth)

    def jacobian(self, m, base):
        floor = 0.1 * np.abs(m).max()
        steps = self.config.jacobian_step * np.maximum(np.abs(m), floor)

        def column(k):
            shifted = m.copy()
            shifted[k] += steps[k]
            return (self.data_part(shifted) - base) / steps[k]

        with ThreadPoolExecutor(max_workers=max(1, self.config.jobs)) as pool:
            columns = list(pool.map(column, range(m.size)))
        return np.column_stack(columns)

    def step(self, m, data_r, jac, beta, damping):
        """Damped Gauss-Newton step d, bounded so that m + d >= 0."""
        root_beta = np.sqrt(beta)
        system = np.vstack([jac, root_beta * self.d2])
        rhs = -np.concatenate([data_r, root_beta * self.d2 @ m])
        if damping > 0:
            scale = np.sqrt(damping * (system ** 2).sum() / m.size)
            system = np.vstack([system, scale * np.eye(m.size)])
            rhs = np.concatenate([rhs, np.zeros(m.size)])
        return lsq_linear(system, rhs, bounds=(-m, np.inf), method="bvls").x


def _small(step, m, tolerance):
    return np.linalg.norm(step) <= tolerance * (1.0 + np.linalg.norm(m))


def _backtrack(objective: _Objective, m, step, value, beta, jobs):
    """First of step, step / 2, ... that lowers the objective, or None."""
    for k in range(BACKTRACK_STEPS):
        trial = np.maximum(m + step / 2 ** k, 0.0)
        if not np.any(trial):
            continue
        trial_r = objective.data_part(trial, jobs)
        trial_value = objective.value(trial_r, trial, beta)
        if trial_value < value:
            return trial, trial_r, trial_value
    return None


def recover_weight(
    record: ObservationRecord,
    config: Optional[InversionConfig] = None,
    experiment: Optional[Experiment] = None,
) -> InversionResult:
    config = config or InversionConfig()
    experiment = experiment or experiment_for(record)
    if not np.any(record.series.samples):
        raise ContractError("Observation is identically zero, nothing to invert")
    objective = _Objective(experiment, record, config)
    m = np.full(config.basis_node_count, config.initial_value)
    initial = objective.weight(m)
    target = max(DISCREPANCY_FACTOR * record.noise, config.misfit_tolerance)
    logging.info(
        f"Recovering mu on {m.size} nodes from {record.series.samples.size} samples "
        f"at x0={record.x0}, beta {config.tikhonov_start} -> "
        f"{config.tikhonov_weight}, misfit target {target:.1e}"
    )

    beta = config.tikhonov_at(0)
    data_r = objective.data_part(m, config.jobs)
    history = [float(np.sqrt(objective.value(data_r, m, beta)))]
    jac = None
    damping, stalls, flag, iterations = 0.0, 0, "max_iterations", 0
    for iterations in range(1, config.max_iterations + 1):
        beta = config.tikhonov_at(iterations - 1)
        at_floor = beta <= config.tikhonov_weight
        value = objective.value(data_r, m, beta)
        if jac is None:
            jac = objective.jacobian(m, data_r)
        step = objective.step(m, data_r, jac, beta, damping)
        if at_floor and _small(step, m, config.step_tolerance):
            flag = "converged"
            break

        accepted = _backtrack(objective, m, step, value, beta, config.jobs)
        if accepted is None:
            stalls += 1
            damping = max(10 * damping, LEVENBERG_START)
            logging.debug(f"Iteration {iterations}: no descent, damping {damping:.1e}")
            if stalls >= STALL_LIMIT:
                flag = "stalled"
                break
            continue

        trial, trial_r, trial_value = accepted
        moved = trial - m
        m, data_r, jac = trial, trial_r, None
        stalls, damping = 0, damping / 3
        history.append(float(np.sqrt(trial_value)))
        misfit = float(np.linalg.norm(data_r))
        logging.info(
            f"Iteration {iterations}: objective {history[-1]:.6e}, "
            f"misfit {misfit:.6e}, beta {beta:.1e}, "
            f"step {np.linalg.norm(moved):.3e}"
        )
        if misfit <= target:
            flag = "converged"
            break
        if at_floor and _small(moved, m, config.step_tolerance):
            flag = "converged"
            break

    mu_hat = objective.weight(m)
    final = residual(mu_hat, record, experiment)
    misfit = float(np.linalg.norm(data_r))
    logging.info(f"Recovery finished: {flag} after {iterations} iterations")
    return InversionResult(
        mu_hat,
        tuple(history),
        final,
        misfit,
        flag,
        laplace_witness(mu_hat, initial, WITNESS_S_GRID),
        iterations,
        experiment.discretization_key,
        admissibility_report(mu_hat),
        beta,
    )


def _relative_l2(mu_hat: WeightFunction, mu_true: WeightFunction):
    alpha = np.union1d(
        np.union1d(mu_hat.alpha_grid, mu_true.alpha_grid), np.linspace(0, 1, 1001)
    )
    gap = mu_hat(alpha) - mu_true(alpha)
    reference = trapezoid(mu_true(alpha) ** 2, alpha)
    return float(np.sqrt(trapezoid(gap ** 2, alpha) / reference))


def recovery_error(
    result: InversionResult,
    mu_true: WeightFunction,
    record: ObservationRecord,
    allow_inverse_crime=False,
) -> float:
    """Relative L2(0, 1) error of mu_hat, refused for same-discretization data."""
    crime = (
        record.provenance == "spectral"
        and record.discretization_key == result.discretization_key
    )
    if crime and not allow_inverse_crime:
        raise InverseCrimeError(
            "Data and inversion share the discretization "
            f"{result.discretization_key}; pass the inverse-crime flag to report it"
        )
    if crime:
        logging.warning("Reporting a recovery error under the inverse crime")
    return _relative_l2(result.mu_hat, mu_true)


def add_noise(record: ObservationRecord, level, seed) -> ObservationRecord:
    """Gaussian noise with standard deviation level * rms(data) on t > 0."""
    if level < 0:
        raise DomainError(f"Noise level must be >= 0, got {level}")
    samples = np.array(record.series.samples)
    rms = np.sqrt(np.mean(samples ** 2))
    rng = np.random.default_rng(seed)
    samples[1:] += level * rms * rng.standard_normal(samples.size - 1)
    series = TimeSeries(record.series.grid, samples)
    return replace(record, series=series, noise=float(level), seed=seed)


@dataclass(frozen=True)
class ProbeResult:
    data_gap: float
    witness: Optional[LaplaceWitness]


def identifiability_probe(
    mu_a: WeightFunction,
    mu_b: WeightFunction,
    experiment: Experiment,
    s_grid=WITNESS_S_GRID,
    jobs=1,
) -> ProbeResult:
    mu_a, mu_b = candidate_weight(mu_a), candidate_weight(mu_b)
    series_a = experiment.observe(mu_a, jobs=jobs).series.samples
    series_b = experiment.observe(mu_b, jobs=jobs).series.samples
    gap = float(np.abs(series_a - series_b).max())
    witness = laplace_witness(mu_a, mu_b, s_grid)
    logging.info(f"Identifiability probe: data gap {gap:.3e}, witness {witness}")
    return ProbeResult(gap, witness)
