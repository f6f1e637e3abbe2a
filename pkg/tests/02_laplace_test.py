import math

import numpy as np
from pytest import approx, mark, raises
from scipy.integrate import cumulative_trapezoid
from scipy.special import gamma

from lab_home.distorder.exceptions import DomainError, EvaluationError
from lab_home.distorder.frac_core import TimeGrid, TimeSeries, WeightFunction
from lab_home.distorder.laplace import (
    ContourSpec,
    RelaxationTable,
    i_mu_convolve,
    integrated_relaxation,
    invert_laplace,
    invert_laplace_many,
    kappa_kernel,
    laplace_of_series,
    mean_squared_displacement,
    mittag_leffler,
    relaxation,
    relaxation_tables,
)
from tests.helpers import mittag_leffler_oracle, mittag_leffler_series

TIMES = [0.1, 1.0, 10.0]
HAT_WIDTH = 0.001


@mark.parametrize(
    "image, original",
    [
        (lambda s: 1 / s, lambda t: 1.0),
        (lambda s: 1 / s ** 2, lambda t: t),
        (lambda s: 1 / (s + 1), lambda t: math.exp(-t)),
        (lambda s: 1 / (s ** 2 + 1), lambda t: math.sin(t)),
    ],
    ids=["step", "ramp", "exp", "sin"],
)
def test_talbot_known_pairs(image, original):
    for t in TIMES[:2]:
        assert invert_laplace(image, t) == approx(original(t), abs=1e-8)


@mark.parametrize("scale", [0.5, 1.0, 2.0])
def test_talbot_scale_does_not_change_the_result(scale):
    contour = ContourSpec(scale=scale)
    result = invert_laplace_many(lambda s: 1 / (s + 1), TIMES, contour)
    assert result == approx(np.exp(-np.array(TIMES)), abs=1e-8)


def test_bromwich_contour():
    times = [0.5, 1.0, 2.0, 7.0]
    result = invert_laplace_many(lambda s: 1 / (s + 1), times, ContourSpec.bromwich())
    assert result == approx(np.exp(-np.array(times)), abs=1e-6)


def test_mittag_leffler_half_order():
    expected = math.e * math.erfc(1.0)
    assert mittag_leffler(0.5, 1.0, [1.0])[0] == approx(expected, rel=1e-8)
    assert mittag_leffler_oracle(0.5, 1.0, 1.0) == approx(expected, rel=1e-10)
    assert mittag_leffler_series(0.5, 1.0) == approx(expected, rel=1e-10)
    assert mittag_leffler(0.7, 2.0, [0.0])[0] == 1.0


@mark.parametrize("alpha", [0.3, 0.8])
def test_mittag_leffler_against_series(alpha):
    times = np.array([0.05, 0.5, 1.5])
    result = mittag_leffler(alpha, 1.0, times)
    expected = [mittag_leffler_series(alpha, t ** alpha) for t in times]
    assert result == approx(expected, abs=1e-8)


@mark.parametrize("alpha0", [0.3, 0.5, 0.8, 1.0])
@mark.parametrize("lam", [1.0, 10.0])
def test_narrow_hat_relaxes_like_mittag_leffler(alpha0, lam):
    grid = TimeGrid.uniform(5.0, 100)
    hat = WeightFunction.narrow_hat(alpha0, HAT_WIDTH)
    table = relaxation(lam, hat, grid)
    expected = [mittag_leffler_oracle(alpha0, lam, t) for t in grid.t_values]
    worst = np.abs(table.values - expected).max()
    print(f"\n\nRelaxation vs E_{alpha0}(-{lam} t^{alpha0}): worst gap {worst:.3e}")
    assert worst <= 5e-3


def test_relaxation_table_bounds(linear_weight):
    grid = TimeGrid.graded(10.0, 200, 2.0)
    tables = relaxation_tables([0.0, 1.0, 10.0, 100.0], linear_weight, grid)
    assert tables[0].values == approx(np.ones(grid.t_values.size))
    for table in tables:
        assert table.values[0] == 1.0
        assert table.values.min() >= -1e-8
        assert table.values.max() <= 1.0 + 1e-8
        assert np.all(np.diff(table.values) <= 1e-8)
        assert math.isnan(table.kappa_values[0])
    final = [table.values[-1] for table in tables]
    assert final == sorted(final, reverse=True)


def test_relaxation_table_file(tmp_path, linear_weight):
    table = relaxation(3.0, linear_weight, TimeGrid.uniform(1.0, 20))
    path = str(tmp_path / "relaxation.txt")
    table.save(path)
    loaded = RelaxationTable.load(path)
    assert loaded.lam == 3.0
    assert loaded.values == approx(table.values)
    assert loaded.grid.same_as(table.grid)


def test_kappa_of_a_single_order():
    grid = TimeGrid.uniform(2.0, 40)
    hat = WeightFunction.narrow_hat(0.5, HAT_WIDTH)
    kappa = kappa_kernel(hat, grid)
    t = grid.t_values[1:]
    assert kappa.samples[1:] == approx(t ** -0.5 / gamma(0.5), rel=5e-3)


def test_integrated_relaxation_matches_its_definition(linear_weight):
    lam = 2.0
    grid = TimeGrid.graded(2.0, 2000, 2.0)
    v = relaxation(lam, linear_weight, grid).values
    expected = (grid.t_values - cumulative_trapezoid(v, grid.t_values, initial=0)) / lam
    picks = [500, 1000, 2000]
    q = integrated_relaxation([lam], linear_weight, grid.t_values[picks])[0]
    assert q == approx(expected[picks], abs=1e-5)
    assert integrated_relaxation([lam], linear_weight, [0.0])[0, 0] == 0.0


def test_single_order_convolution():
    grid = TimeGrid.uniform(1.0, 400)
    hat = WeightFunction.narrow_hat(0.5, HAT_WIDTH)
    kappa = kappa_kernel(hat, grid)
    result = i_mu_convolve(hat, TimeSeries(grid, grid.t_values), kappa).samples
    expected = grid.t_values ** 1.5 / gamma(2.5)
    assert result[200:] == approx(expected[200:], rel=1e-2)
    assert result[0] == 0.0


def test_mean_squared_displacement():
    times = np.array([0.0, 0.5, 1.0, 2.0])
    classical_weight = WeightFunction.narrow_hat(1.0, HAT_WIDTH)
    classical = mean_squared_displacement(classical_weight, times)
    assert classical == approx(2 * times, rel=5e-3)
    half = mean_squared_displacement(WeightFunction.narrow_hat(0.5, HAT_WIDTH), times)
    assert half == approx(2 * times ** 0.5 / gamma(1.5), rel=5e-3)


def test_uniform_weight_decays_slower_than_any_power(unit_weight):
    grid = TimeGrid(np.concatenate([[0.0], np.logspace(2.0, 6.0, 41)]))
    table = relaxation(1.0, unit_weight, grid)
    t, v = grid.t_values[1:], table.values[1:]
    assert np.all(v > 0.0)
    slopes = np.diff(np.log(v)) / np.diff(np.log(t))
    print(f"\n\nlog-log slopes from {slopes[0]:.4f} to {slopes[-1]:.4f}")
    assert np.all(slopes < 0.0)
    assert np.all(np.diff(slopes) > -1e-3)
    assert slopes[-1] > -0.1
    assert slopes[-1] > slopes[0]


def test_laplace_of_a_ramp():
    grid = TimeGrid.graded(3.0, 30, 1.5)
    for s in (0.1, 1.0, 7.0):
        transform = laplace_of_series(TimeSeries(grid, grid.t_values), s)
        expected = (1 - math.exp(-3 * s) * (1 + 3 * s)) / s ** 2
        assert transform.value == approx(expected, rel=1e-10)
        assert transform.truncation_bound == approx(3 * math.exp(-3 * s) / s)
    with raises(DomainError):
        laplace_of_series(TimeSeries(grid, grid.t_values), 0.0)


def test_non_finite_image_is_reported():
    with raises(EvaluationError) as ae:
        invert_laplace(lambda s: np.full(s.shape, np.nan), 1.0)
    print(f"\n\nInverted a NaN image, got the expected exception:\n<{ae.value}>")
    assert ae.value.node is not None
    assert ae.value.t == 1.0


@mark.parametrize(
    "kwargs",
    [{"kind": "spiral"}, {"node_count": 4}, {"scale": 0.0}, {"gamma": -1.0}],
)
def test_invalid_contours(kwargs):
    with raises(DomainError) as ae:
        ContourSpec(**kwargs)
    print(f"\n\nBuilt an invalid contour, got the expected exception:\n<{ae.value}>")


def test_invalid_inversion_requests(linear_weight):
    with raises(DomainError):
        invert_laplace(lambda s: 1 / s, 0.0)
    with raises(DomainError):
        relaxation(-1.0, linear_weight, TimeGrid.uniform(1.0, 10))
    with raises(DomainError):
        mittag_leffler(0.0, 1.0, [1.0])
