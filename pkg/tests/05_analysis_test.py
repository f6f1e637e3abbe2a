import numpy as np
from pytest import approx, mark, raises

from lab_home.distorder.analysis import (
    CheckResult,
    HarnackReport,
    check_max_principle,
    extremum_lemma_check,
    extremum_lemma_probe,
    harnack_scan,
    harnack_stability,
    j2_compare,
    laplace_witness,
    middle_third,
    positivity_hitting,
    relaxation_ode_check,
    semigroup_check,
    sw_bound_check,
    weight_gap,
)
from lab_home.distorder.exceptions import ContractError, DomainError
from lab_home.distorder.forward import Experiment, Field
from lab_home.distorder.frac_core import TimeGrid, TimeSeries, WeightFunction
from lab_home.distorder.spectral import Potential, SpatialGrid

S_VALUES = [1.0, 10.0, 100.0, 1000.0, 10000.0]


def _random_experiment(seed):
    rng = np.random.default_rng(seed)
    kind = "dirichlet" if seed % 2 else "neumann"
    width = rng.uniform(0.3, 0.9)
    center = 0.5 + rng.uniform(-0.9, 0.9) * (0.5 - width / 2)
    return Experiment(
        nodes=31,
        boundary=kind,
        potential=rng.uniform(0.2, 2.0),
        potential_slope=rng.uniform(0.0, 1.0),
        g_center=center,
        g_width=width,
        g_weights=(1.0, rng.uniform(0.0, 1.0)),
        time_steps=80,
        eigen_mode="fd",
    ), WeightFunction(np.linspace(0.0, 1.0, 5), rng.uniform(0.2, 2.0, 5))


@mark.parametrize("seed", range(50))
def test_maximum_principle_on_random_problems(seed):
    experiment, mu = _random_experiment(seed)
    result = check_max_principle(experiment.solve(mu))
    print(f"\n\n{experiment.boundary} problem {seed}: {result.to_line()}")
    assert result.passed


def test_maximum_principle_violation_is_located(line_grid):
    grid = TimeGrid.uniform(1.0, 4)
    samples = np.zeros((line_grid.size, 5))
    samples[3, 2] = -0.5
    samples[10, 4] = 1.0
    field = Field(line_grid, grid, samples, "dirichlet", "spectral")
    result = check_max_principle(field)
    assert not result.passed
    assert result.value == -0.5
    assert "t=0.5" in result.witness
    name, value, threshold, verdict = result.to_line().split(",")
    assert (name, verdict) == ("max_principle", "fail")
    assert float(value) == -0.5


def test_extremum_lemma(linear_weight):
    grid = TimeGrid.uniform(1.0, 100)
    dip = TimeSeries(grid, -np.sin(np.pi * grid.t_values))
    assert extremum_lemma_probe(dip, linear_weight) <= 0.0
    result = extremum_lemma_check(dip, linear_weight)
    assert result.passed
    assert result.name == "extremum_lemma"
    assert float(result.witness.split("=")[1]) == approx(0.5)
    flat = TimeSeries(grid, np.full(grid.t_values.size, 0.3))
    assert extremum_lemma_probe(flat, linear_weight) == approx(0.0, abs=1e-10)
    ramp = TimeSeries(grid, grid.t_values)
    with raises(ContractError) as ae:
        extremum_lemma_probe(ramp, linear_weight)
    print(f"\n\nMinimum only at t=0, got the expected exception:\n<{ae.value}>")


def _interior_minimum_series(rng, grid):
    t = grid.t_values
    depth = rng.uniform(0.5, 2.0)
    center, width = rng.uniform(0.2, 0.9), rng.uniform(0.05, 0.15)
    samples = -depth * np.exp(-((t - center) ** 2) / (2 * width ** 2))
    amplitudes = 0.2 * depth / 3 * rng.uniform(-1.0, 1.0, 3)
    phases = rng.uniform(0.0, np.pi, 3)
    for k, (b, phase) in enumerate(zip(amplitudes, phases), start=1):
        samples += b * np.sin(k * np.pi * t + phase)
    return TimeSeries(grid, samples)


@mark.parametrize("seed", range(100))
def test_extremum_lemma_on_random_series(seed):
    rng = np.random.default_rng(seed)
    series = _interior_minimum_series(rng, TimeGrid.uniform(1.0, 100))
    mu = WeightFunction(np.linspace(0.0, 1.0, 5), rng.uniform(0.2, 2.0, 5))
    result = extremum_lemma_check(series, mu)
    assert result.passed, result.to_line()


def _harnack_report(interior, unit_weight):
    grid = SpatialGrid.interval(interior)
    p = Potential.constant(grid, 0.0)
    return harnack_scan(
        grid, p, unit_weight, np.ones(2), middle_third(grid), S_VALUES
    )


def test_harnack_constant_is_stable(unit_weight):
    coarse = _harnack_report(47, unit_weight)
    fine = _harnack_report(95, unit_weight)
    sw = [(s - 1) / np.log(s) if s != 1 else 1.0 for s in S_VALUES]
    expected = np.log(np.cosh(np.sqrt(sw) / 6))
    assert fine.sw_values == approx(sw, rel=1e-10)
    assert fine.log_ratios == approx(expected, rel=1e-2)
    assert fine.fitted_C == approx(0.0121, rel=2e-2)
    assert np.all(np.diff(fine.ratios) > 0)
    assert fine.slope_C < fine.fitted_C
    assert coarse.bound_holds(fine.fitted_C) and fine.bound_holds(coarse.fitted_C)
    result = harnack_stability(coarse, fine)
    print(f"\n\nHarnack stability: {result.to_line()} ({result.witness})")
    assert result.passed


def test_harnack_bound_violations_are_reported(unit_weight):
    coarse = _harnack_report(47, unit_weight)
    s = np.array(S_VALUES)
    sw = coarse.sw_values
    steep = HarnackReport(s, sw, np.exp(1.0 + 0.1 * (1.0 + sw)), np.ones(s.size), ())
    assert not steep.bound_holds(coarse.fitted_C)
    assert steep.bound_holds(steep.fitted_C)
    result = harnack_stability(coarse, steep)
    print(f"\n\nSteep ratios: {result.to_line()} ({result.witness})")
    assert not result.passed
    inverted = HarnackReport(s, sw, np.full(s.size, 0.5), np.ones(s.size), ())
    assert not inverted.bound_holds(1e6)



def test_harnack_with_boundary_data(small_experiment, linear_weight):
    report = harnack_scan(
        small_experiment.space_grid,
        small_experiment.potential_field,
        linear_weight,
        small_experiment.boundary_data,
        middle_third(small_experiment.space_grid),
        [1.0, 10.0],
    )
    assert np.all(report.ratios >= 1.0)
    assert report.bound_holds(report.fitted_C)


def test_harnack_at_zero_and_its_file(tmp_path, unit_weight):
    grid = SpatialGrid.interval(47)
    p = Potential.constant(grid, 0.0)
    report = harnack_scan(grid, p, unit_weight, np.ones(2), middle_third(grid), [0.0])
    assert report.log_ratios == approx([0.0], abs=1e-10)
    report = _harnack_report(47, unit_weight)
    path = str(tmp_path / "harnack.csv")
    report.save(path)
    loaded = HarnackReport.load(path)
    assert loaded.fitted_C == approx(report.fitted_C)
    assert loaded.subdomain == report.subdomain


def test_harnack_needs_positive_solutions(unit_weight):
    grid = SpatialGrid.interval(47)
    p = Potential.constant(grid, 0.0)
    with raises(ContractError) as ae:
        harnack_scan(grid, p, unit_weight, np.zeros(2), middle_third(grid), [1.0])
    print(f"\n\nZero trace in a Harnack scan, got:\n<{ae.value}>")
    with raises(ContractError):
        harnack_scan(grid, p, unit_weight, np.ones(2), ((0.0, 0.5),), [1.0])
    with raises(DomainError):
        harnack_scan(grid, p, unit_weight, np.ones(2), middle_third(grid), [-1.0])


def test_positivity_hitting(small_experiment, linear_weight):
    field = small_experiment.solve(linear_weight)
    hit = positivity_hitting(field, (0.5,))
    assert hit is not None
    assert 0.0 < hit < 0.25
    silent = small_experiment.with_changes(g_amplitude=0.0).solve(linear_weight)
    assert positivity_hitting(silent, (0.5,)) is None
    with raises(ContractError):
        positivity_hitting(field, (0.0,))


def test_j2_comparison(small_experiment, unit_weight, linear_weight):
    a = small_experiment.observe(unit_weight)
    b = small_experiment.observe(linear_weight)
    assert not np.any(j2_compare(a, a).samples)
    gap = j2_compare(a, b)
    assert gap.samples[0] == 0.0
    assert np.abs(gap.samples).max() > 0.0
    assert np.array_equal(j2_compare(b, a).samples, -gap.samples)


def test_laplace_witness(unit_weight, linear_weight):
    s_grid = np.logspace(-2, 4, 31)
    assert laplace_witness(unit_weight, WeightFunction.constant(1.0), s_grid) is None
    witness = laplace_witness(unit_weight, linear_weight, s_grid)
    assert witness.gap > 0.0
    assert witness.s0 in s_grid
    assert weight_gap(unit_weight, linear_weight, [1.0]) == approx([0.25])
    with raises(DomainError):
        weight_gap(unit_weight, linear_weight, [0.0])


def test_semigroup_check():
    grid = TimeGrid.uniform(1.0, 400)
    result = semigroup_check(TimeSeries(grid, np.sin(np.pi * grid.t_values) ** 2))
    assert result.name == "semigroup_0.5_0.5"
    assert result.passed


def _smooth_bump(rng, grid):
    t = grid.t_values
    c1, c2 = rng.uniform(0.1, 0.4, 2)
    samples = c1 * (1 - np.cos(np.pi * t)) + c2 * (1 - np.cos(2 * np.pi * t))
    return TimeSeries(grid, samples)


@mark.parametrize("seed", range(20))
def test_semigroup_gap_shrinks_under_refinement(seed):
    coarse = _smooth_bump(np.random.default_rng(seed), TimeGrid.uniform(1.0, 200))
    fine = _smooth_bump(np.random.default_rng(seed), TimeGrid.uniform(1.0, 400))
    coarse_gap = semigroup_check(coarse).value
    result = semigroup_check(fine)
    print(f"\n\nsemigroup gap {coarse_gap:.3e} -> {result.value:.3e}")
    assert result.passed
    assert coarse_gap >= 2.0 * result.value


@mark.parametrize("lam", [1.0, 10.0])
def test_relaxation_ode_check(unit_weight, lam):
    result = relaxation_ode_check(unit_weight, lam, TimeGrid.graded(1.0, 400, 2.0))
    print(f"\n\n{result.to_line()}")
    assert result.passed


@mark.parametrize("seed", range(5))
@mark.parametrize("lam", [1.0, 10.0])
def test_relaxation_ode_residual_drops_under_refinement(seed, lam):
    rng = np.random.default_rng(seed)
    mu = WeightFunction(np.linspace(0.0, 1.0, 5), rng.uniform(0.5, 1.5, 5))
    coarse = relaxation_ode_check(mu, lam, TimeGrid.graded(1.0, 200, 2.0))
    fine = relaxation_ode_check(mu, lam, TimeGrid.graded(1.0, 400, 2.0))
    print(f"\n\n{coarse.to_line()}\n{fine.to_line()}")
    assert fine.passed
    assert fine.value < coarse.value


def test_sw_bound_check(linear_weight):
    result = sw_bound_check(linear_weight, [2.0, 10.0, 100.0, 1e4])
    assert result.passed
    assert result.value == 0.0
    assert sw_bound_check(linear_weight).passed
    with raises(DomainError):
        sw_bound_check(linear_weight, [1.0])
    line = CheckResult("demo", 1.0, 2.0, True).to_line()
    assert line == "demo,1.000000000000e+00,2.000000000000e+00,pass"


@mark.parametrize("seed", range(10))
def test_sw_bound_on_random_weights(seed):
    rng = np.random.default_rng(seed)
    mu = WeightFunction(np.linspace(0.0, 1.0, 6), rng.uniform(0.1, 3.0, 6))
    s_values = 10.0 ** rng.uniform(1e-3, 6.0, 10)
    result = sw_bound_check(mu, s_values)
    assert result.passed, result.witness
