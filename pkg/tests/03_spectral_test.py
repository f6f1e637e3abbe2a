import math

import numpy as np
from pytest import approx, mark, raises

from lab_home.distorder.exceptions import ContractError, DomainError
from lab_home.distorder.spectral import (
    EigenSystem,
    EllipticSystem,
    Potential,
    SpatialGrid,
    eigensystem,
    elliptic_solve,
    lift_dirichlet,
    lift_dirichlet_series,
    lift_neumann,
)


def _gram(eig):
    return (eig.eigenvectors * eig.weights) @ eig.eigenvectors.T


def test_closed_form_dirichlet_modes(line_grid):
    eig = eigensystem(line_grid, Potential.constant(line_grid, 2.0), "dirichlet", N=8)
    assert eig.mode == "analytic"
    k = np.arange(1, 9)
    assert eig.eigenvalues == approx((k * math.pi) ** 2 + 2.0)
    assert _gram(eig) == approx(np.eye(8), abs=1e-10)
    assert eig.eigenvectors[:, [0, -1]] == approx(np.zeros((8, 2)))


def test_finite_difference_dirichlet_modes(line_grid):
    p = Potential.constant(line_grid, 0.5)
    eig = eigensystem(line_grid, p, "dirichlet", mode="fd")
    h = line_grid.spacing[0]
    k = np.arange(1, eig.mode_count + 1)
    expected = 4 / h ** 2 * np.sin(k * math.pi * h / 2) ** 2 + 0.5
    assert eig.mode_count == 31
    assert eig.eigenvalues == approx(expected, rel=1e-10)
    assert np.all(eig.eigenvectors[0, 1:-1] > 0)


def test_finite_difference_neumann_modes(line_grid):
    p = Potential.constant(line_grid, 1.0).certify()
    eig = eigensystem(line_grid, p, "neumann", N=6, mode="fd")
    n = line_grid.shape[0] - 1
    h = line_grid.spacing[0]
    k = np.arange(6)
    expected = 4 / h ** 2 * np.sin(k * math.pi / (2 * n)) ** 2 + 1.0
    assert eig.eigenvalues == approx(expected, rel=1e-10, abs=1e-10)
    assert eig.eigenvalues[0] >= p.c0 - 1e-8
    assert eig.normal_traces is None
    assert _gram(eig) == approx(np.eye(6), abs=1e-10)


def test_tensor_product_modes():
    grid = SpatialGrid.rectangle(16, 20, y_range=(0.0, 2.0))
    eig = eigensystem(grid, Potential.constant(grid, 0.0), "dirichlet", N=5)
    assert eig.mode == "tensor-fd"
    hx, hy = grid.spacing
    lx = 4 / hx ** 2 * np.sin(math.pi * hx / 2) ** 2
    ly = 4 / hy ** 2 * np.sin(math.pi * hy / 4) ** 2
    assert eig.eigenvalues[0] == approx(lx + ly, rel=1e-10)
    assert _gram(eig) == approx(np.eye(5), abs=1e-10)


def test_general_potential_modes():
    grid = SpatialGrid.rectangle(16, 16)
    p = Potential.from_callable(grid, lambda x, y: 1.0 + x * y)
    assert p.separable_parts() is None
    eig = eigensystem(grid, p, "dirichlet", N=6)
    assert eig.mode == "fd"
    assert np.all(np.diff(eig.eigenvalues) >= -1e-9)
    assert eig.eigenvalues[0] > 2 * math.pi ** 2


def test_series_lift_matches_the_direct_lift(line_grid):
    p = Potential.constant(line_grid, 0.0)
    eig = eigensystem(line_grid, p, "dirichlet", mode="fd")
    g = np.array([1.0, 0.25])
    direct = lift_dirichlet(eig, g)
    series = lift_dirichlet_series(eig, g)
    x = line_grid.axes[0]
    assert direct == approx(1.0 - 0.75 * x)
    assert series[2:-2] == approx(direct[2:-2], abs=1e-9)
    assert series[[0, -1]] == approx(g)


def test_neumann_lift_of_a_symmetric_flux():
    grid = SpatialGrid.interval(63)
    eig = eigensystem(grid, Potential.constant(grid, 1.0).certify(), "neumann", N=4)
    lift = lift_neumann(eig, np.array([1.0, 1.0]))
    middle = grid.node_index(0.5)
    assert lift[middle] == approx(1.0 / math.sinh(0.5), rel=1e-3)
    assert lift[0] == approx(math.cosh(0.5) / math.sinh(0.5), rel=1e-3)


def test_elliptic_maximum_principle():
    grid = SpatialGrid.rectangle(17, 17)
    p = Potential.from_callable(grid, lambda x, y: x + y ** 2)
    rng = np.random.default_rng(3)
    rhs = rng.uniform(0.0, 1.0, grid.size)
    g = rng.uniform(0.0, 1.0, grid.boundary_index.size)
    for kind, shift in (("dirichlet", 0.0), ("neumann", 2.0)):
        solution = elliptic_solve(grid, p, shift, rhs, kind, g)
        assert solution.shape == grid.shape
        assert solution.min() >= 0.0


def test_many_right_hand_sides(unit_potential):
    grid = unit_potential.grid
    system = EllipticSystem(grid, unit_potential, 3.0, "dirichlet")
    traces = np.array([[0.0, 1.0, 2.0], [0.0, 0.5, 1.0]])
    solutions = system.solve(g_trace=traces)
    assert solutions.shape == (grid.size, 3)
    assert solutions[:, 0] == approx(np.zeros(grid.size))
    assert solutions[:, 2] == approx(2 * solutions[:, 1])


def test_eigen_file(tmp_path, line_grid):
    eig = eigensystem(line_grid, Potential.constant(line_grid, 1.0), "dirichlet", N=5)
    for binary in (False, True):
        path = str(tmp_path / f"eigen_{binary}")
        eig.save(path, binary=binary)
        loaded = EigenSystem.load(path)
        assert loaded.boundary_kind == "dirichlet"
        assert loaded.grid.same_as(line_grid)
        assert loaded.eigenvalues == approx(eig.eigenvalues)
        assert loaded.eigenvectors == approx(eig.eigenvectors)
        assert loaded.normal_traces == approx(eig.normal_traces)


def test_grid_nodes(line_grid):
    assert line_grid.node_index(0.5) == 16
    assert line_grid.interior_index.size == 31
    with raises(ContractError) as ae:
        line_grid.node_index(0.51)
    print(f"\n\nAsked for an off-grid point, got the expected exception:\n<{ae.value}>")
    with raises(ContractError):
        line_grid.node_index((0.5, 0.5))
    rebuilt = SpatialGrid.from_description(line_grid.describe())
    assert rebuilt.same_as(line_grid)


def test_invalid_spatial_setups(line_grid):
    with raises(ContractError):
        SpatialGrid.interval(10)
    with raises(DomainError):
        Potential.constant(line_grid, -1.0)
    with raises(ContractError):
        Potential.constant(line_grid, 0.0).certify()
    with raises(ContractError):
        EllipticSystem(line_grid, Potential.constant(line_grid, 0.0), 0.0, "neumann")
    with raises(DomainError):
        eigensystem(line_grid, Potential.constant(line_grid, 0.0), "robin")


@mark.parametrize("N", [0, 32])
def test_mode_count_is_bounded(line_grid, N):
    with raises(ContractError) as ae:
        eigensystem(line_grid, Potential.constant(line_grid, 0.0), "dirichlet", N=N)
    print(f"\n\nAsked for {N} modes, got the expected exception:\n<{ae.value}>")


def test_closed_form_needs_a_constant_potential(line_grid):
    p = Potential.from_callable(line_grid, lambda x: x)
    with raises(ContractError):
        eigensystem(line_grid, p, "dirichlet", mode="analytic")


def test_neumann_lift_needs_a_certificate(line_grid):
    eig = eigensystem(line_grid, Potential.constant(line_grid, 1.0), "neumann", N=3)
    with raises(ContractError):
        lift_neumann(eig, np.array([1.0, 1.0]))
    with raises(ContractError):
        lift_dirichlet(eig, np.array([1.0, 1.0]))
