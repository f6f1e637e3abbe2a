import os

from pytest import fixture

from lab_home.distorder.forward import Experiment
from lab_home.distorder.frac_core import WeightFunction
from lab_home.distorder.spectral import Potential, SpatialGrid

SCENARIOS = os.path.join(os.path.dirname(os.path.dirname(__file__)), "scenarios")


@fixture(scope="session", autouse=True)
def welcome():
    print("\n\nPytest session starting...\n")
    yield
    print("\n\nPytest session is over")


@fixture(scope="session")
def scenarios_dir():
    yield SCENARIOS


@fixture(scope="session")
def line_grid():
    yield SpatialGrid.interval(31)


@fixture(scope="session")
def unit_weight():
    yield WeightFunction.constant(1.0)


@fixture(scope="session")
def linear_weight():
    yield WeightFunction.linear(1.0, 0.5)


@fixture(scope="session")
def unit_potential(line_grid):
    yield Potential.constant(line_grid, 1.0)


@fixture()
def small_experiment():
    yield Experiment(
        nodes=31, potential=1.0, time_steps=80, eigen_mode="fd", observe_at=(0.5,)
    )
