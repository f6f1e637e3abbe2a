"""
Eigensystems of -Laplace + p on intervals and rectangles, boundary lifts and
the shifted elliptic solve.

Workflow:
1. Build a SpatialGrid (nodes include the boundary) and a nonnegative Potential.
2. Assemble the second-order finite-difference operator. Dirichlet problems
keep the interior nodes as unknowns; Neumann problems keep every node and use
the ghost-node mirror at the boundary, which is symmetric in the trapezoid
inner product.
3. Solve the eigenproblem (closed form for constant p in 1-D, tensor products
for separable p on rectangles, sparse shift-invert Lanczos otherwise) and
check orthonormality and residuals.

Lifts and Laplace-domain fields come from the direct sparse solve; the
eigenfunction series of the Dirichlet lift is a diagnostic.

https://en.wikipedia.org/wiki/Discrete_Laplace_operator
https://docs.scipy.org/doc/scipy/reference/generated/scipy.sparse.linalg.eigsh.html
"""

import logging
import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from scipy import sparse
from scipy.linalg import eigh, eigh_tridiagonal
from scipy.sparse.linalg import eigsh, splu

from .exceptions import ContractError, DomainError, InvariantError, log_invariant_breach

BOUNDARY_KINDS = ["dirichlet", "neumann"]
EIGEN_MODES = ["auto", "fd", "analytic"]
MIN_INTERIOR_NODES = 16
DEFAULT_MODES_1D = 64
DEFAULT_MODES_2D = 32 * 32
DENSE_LIMIT = 2500
ORTHONORMALITY_TOL = 1e-10
RESIDUAL_TOL = 1e-8
_BINARY_MAGIC = b"DOEIG001"


def check_kind(kind):
    if kind not in BOUNDARY_KINDS:
        raise DomainError(
            f"Boundary kind '{kind}' is not supported. Use {BOUNDARY_KINDS}"
        )
    return kind


@dataclass(frozen=True, eq=False)
class SpatialGrid:
    """Uniform nodes of an interval or rectangle; flat index is row-major over axes."""

    axes: Tuple[np.ndarray, ...]

    def __post_init__(self):
        axes = tuple(np.array(a, dtype=float) for a in self.axes)
        if len(axes) not in (1, 2):
            raise DomainError(
                f"Only 1-D and 2-D domains are supported, got {len(axes)}"
            )
        for k, axis in enumerate(axes):
            if axis.ndim != 1 or axis.size < MIN_INTERIOR_NODES + 2:
                raise ContractError(
                    f"Axis {k} needs at least {MIN_INTERIOR_NODES} interior nodes, "
                    f"got {axis.size - 2}"
                )
            h = np.diff(axis)
            if np.any(h <= 0) or not np.allclose(h, h[0], rtol=1e-10, atol=0.0):
                raise ContractError(f"Axis {k} nodes must be uniform and increasing")
            axis.setflags(write=False)
        object.__setattr__(self, "axes", axes)

    @classmethod
    def interval(cls, interior, a=0.0, b=1.0):
        return cls((np.linspace(a, b, interior + 2),))

    @classmethod
    def rectangle(cls, nx, ny, x_range=(0.0, 1.0), y_range=(0.0, 1.0)):
        return cls(
            (np.linspace(*x_range, nx + 2), np.linspace(*y_range, ny + 2))
        )

    @property
    def dimension(self):
        return len(self.axes)

    @property
    def shape(self):
        return tuple(a.size for a in self.axes)

    @property
    def size(self):
        return int(np.prod(self.shape))

    @property
    def spacing(self):
        return tuple(float(a[1] - a[0]) for a in self.axes)

    @property
    def lengths(self):
        return tuple(float(a[-1] - a[0]) for a in self.axes)

    @property
    def interior_counts(self):
        return tuple(n - 2 for n in self.shape)

    def coordinates(self):
        mesh = np.meshgrid(*self.axes, indexing="ij")
        return np.column_stack([m.ravel() for m in mesh])

    def boundary_mask(self):
        mask = np.zeros(self.shape, dtype=bool)
        for k in range(self.dimension):
            lo = [slice(None)] * self.dimension
            lo[k] = 0
            hi = [slice(None)] * self.dimension
            hi[k] = -1
            mask[tuple(lo)] = True
            mask[tuple(hi)] = True
        return mask.ravel()

    @property
    def boundary_index(self):
        return np.flatnonzero(self.boundary_mask())

    @property
    def interior_index(self):
        return np.flatnonzero(~self.boundary_mask())

    def unknowns(self, kind):
        if check_kind(kind) == "dirichlet":
            return self.interior_index
        return np.arange(self.size)

    def side_masks(self):
        """Boolean masks over boundary_index for the left, right, bottom, top sides."""
        index = np.array(np.unravel_index(self.boundary_index, self.shape))
        names = [("left", "right"), ("bottom", "top")]
        masks = {}
        for k in range(self.dimension):
            masks[names[k][0]] = index[k] == 0
            masks[names[k][1]] = index[k] == self.shape[k] - 1
        return masks

    def node_index(self, point):
        point = np.atleast_1d(np.asarray(point, dtype=float))
        if point.size != self.dimension:
            raise ContractError(
                f"Point {point.tolist()} does not match a {self.dimension}-D grid"
            )
        where = []
        for axis, h, x in zip(self.axes, self.spacing, point):
            k = int(round((x - axis[0]) / h))
            if not 0 <= k < axis.size or abs(axis[k] - x) > 1e-9 * h:
                raise ContractError(f"Point {point.tolist()} is not a grid node")
            where.append(k)
        return int(np.ravel_multi_index(tuple(where), self.shape))

    def quadrature_weights(self, kind):
        """Discrete L2 weights over all nodes, zero where the node is not an unknown."""
        per_axis = []
        for n, h in zip(self.shape, self.spacing):
            w = np.full(n, h)
            if kind == "dirichlet":
                w[[0, -1]] = 0.0
            else:
                w[[0, -1]] = 0.5 * h
            per_axis.append(w)
        weights = per_axis[0]
        for w in per_axis[1:]:
            weights = np.outer(weights, w).ravel()
        return weights

    def boundary_measure(self):
        """Quadrature weights of L2(boundary) at the boundary nodes (corners get 0)."""
        if self.dimension == 1:
            return np.ones(2)
        index = np.array(np.unravel_index(self.boundary_index, self.shape))
        on_edge = [(index[k] == 0) | (index[k] == self.shape[k] - 1) for k in range(2)]
        measure = np.zeros(index.shape[1])
        measure[on_edge[0] & ~on_edge[1]] = self.spacing[1]
        measure[on_edge[1] & ~on_edge[0]] = self.spacing[0]
        return measure

    def same_as(self, other):
        return len(self.axes) == len(other.axes) and all(
            np.array_equal(a, b) for a, b in zip(self.axes, other.axes)
        )

    def describe(self):
        return ";".join(
            f"{float(a[0])!r}:{float(a[-1])!r}:{a.size - 2}" for a in self.axes
        )

    @classmethod
    def from_description(cls, text):
        axes = []
        for part in text.split(";"):
            a, b, n = part.split(":")
            axes.append(np.linspace(float(a), float(b), int(n) + 2))
        return cls(tuple(axes))


@dataclass(frozen=True, eq=False)
class Potential:
    grid: SpatialGrid
    values: np.ndarray
    c0: Optional[float] = None

    def __post_init__(self):
        values = np.array(self.values, dtype=float).ravel()
        if values.size != self.grid.size:
            raise ContractError(
                f"Potential has {values.size} values for {self.grid.size} nodes"
            )
        if not np.all(np.isfinite(values)) or np.any(values < 0):
            k = int(np.argmin(values))
            raise DomainError(
                f"Potential must be finite and >= 0, node {k} has {values[k]}"
            )
        if self.c0 is not None and not 0 < self.c0 <= values.min():
            raise ContractError(
                f"Certificate c0={self.c0} does not bound "
                f"min p={values.min()} from below"
            )
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @classmethod
    def constant(cls, grid, value=0.0):
        return cls(grid, np.full(grid.size, float(value)))

    @classmethod
    def from_callable(cls, grid, func):
        coords = grid.coordinates()
        return cls(grid, np.array([func(*x) for x in coords], dtype=float))

    def certify(self):
        c0 = float(self.values.min())
        if not c0 > 0:
            raise ContractError(f"Potential is not bounded away from 0 (min p = {c0})")
        return Potential(self.grid, self.values, c0)

    @property
    def certified(self):
        return self.c0 is not None

    @property
    def is_constant(self):
        return bool(np.ptp(self.values) == 0)

    def separable_parts(self):
        """(p_x, p_y) with p = p_x(x) + p_y(y) on a rectangle, or None."""
        if self.grid.dimension != 2:
            return None
        p = self.values.reshape(self.grid.shape)
        px = p[:, 0]
        py = p[0, :] - p[0, 0]
        scale = max(1.0, float(np.abs(p).max()))
        if np.abs(p - px[:, None] - py[None, :]).max() > 1e-12 * scale:
            return None
        return px, py


def _second_difference(n, h):
    """Full-node 1-D -d2/dx2 with mirror rows at both ends."""
    main = np.full(n, 2.0)
    lower = np.full(n - 1, -1.0)
    upper = np.full(n - 1, -1.0)
    upper[0] = -2.0
    lower[-1] = -2.0
    return sparse.diags([lower, main, upper], [-1, 0, 1], format="csr") / h ** 2


def full_operator(grid: SpatialGrid, p_values, q_shift=0.0):
    blocks = [_second_difference(n, h) for n, h in zip(grid.shape, grid.spacing)]
    if grid.dimension == 1:
        lap = blocks[0]
    else:
        eye = [sparse.identity(n, format="csr") for n in grid.shape]
        lap = sparse.kron(blocks[0], eye[1]) + sparse.kron(eye[0], blocks[1])
    return (lap + sparse.diags(p_values + q_shift)).tocsr()


def boundary_flux(grid: SpatialGrid, g_trace):
    """Right-hand side contribution 2 g / h of the ghost-node mirror."""
    flux = np.zeros((grid.size,) + g_trace.shape[1:])
    index = np.array(np.unravel_index(grid.boundary_index, grid.shape))
    for k, (n, h) in enumerate(zip(grid.shape, grid.spacing)):
        at_end = (index[k] == 0) | (index[k] == n - 1)
        np.add.at(flux, grid.boundary_index[at_end], 2.0 * g_trace[at_end] / h)
    return flux


def _check_symmetric(matrix, weights, what):
    scaled = sparse.diags(weights) @ matrix
    gap = abs(scaled - scaled.T).max()
    if gap > 1e-10 * abs(scaled).max():
        log_invariant_breach(f"{what} assembly symmetry", gap, 1e-10)
        raise InvariantError(f"{what} operator is not symmetric (gap {gap:.3e})")


class EllipticSystem:
    """Factorized (-Laplace + p + q) for repeated Dirichlet or Neumann solves."""

    def __init__(self, grid: SpatialGrid, potential: "Potential", q_shift, kind):
        check_kind(kind)
        if q_shift < 0:
            raise DomainError(f"Shift q={q_shift} must be >= 0")
        if kind == "neumann" and q_shift == 0 and not np.any(potential.values > 0):
            raise ContractError("Neumann problem with p = 0 and q = 0 is singular")
        self.grid, self.kind = grid, kind
        operator = full_operator(grid, potential.values, q_shift)
        self.unknown = grid.unknowns(kind)
        weights = grid.quadrature_weights(kind)[self.unknown]
        block = operator[self.unknown][:, self.unknown]
        _check_symmetric(block, weights, f"{kind.capitalize()} elliptic")
        self._coupling = operator[self.unknown][:, grid.boundary_index]
        try:
            self._lu = splu(block.tocsc())
        except RuntimeError as ex:
            raise InvariantError(f"Elliptic system is singular: {ex}")

    def solve(self, rhs=None, g_trace=None):
        """rhs: (size,) or (size, k) on all nodes; g_trace: the same on the boundary."""
        grid = self.grid
        nb = grid.boundary_index.size
        b = None if rhs is None else np.array(rhs, dtype=float)
        g = None if g_trace is None else np.array(g_trace, dtype=float)
        if b is not None and b.shape[0] != grid.size:
            raise ContractError(
                f"Right-hand side needs {grid.size} values, got {b.shape[0]}"
            )
        if g is not None and g.shape[0] != nb:
            raise ContractError(f"Boundary trace needs {nb} values, got {g.shape[0]}")
        cols = (b if b is not None else g if g is not None else np.zeros(1)).shape[1:]
        if b is None:
            b = np.zeros((grid.size,) + cols)
        if g is None:
            g = np.zeros((nb,) + cols)
        if b.shape[1:] != g.shape[1:]:
            raise ContractError("Right-hand side and boundary trace columns differ")
        out = np.zeros_like(b)
        if self.kind == "dirichlet":
            out[self.unknown] = self._lu.solve(b[self.unknown] - self._coupling @ g)
            out[grid.boundary_index] = g
        else:
            out[:] = self._lu.solve(b + boundary_flux(grid, g))
        return out


def elliptic_solve(grid, p: Potential, q_shift, rhs, kind, g_trace):
    values = EllipticSystem(grid, p, q_shift, kind).solve(
        None if rhs is None else np.ravel(rhs), g_trace
    )
    return values.reshape(grid.shape)


@dataclass(frozen=True, eq=False)
class EigenSystem:
    grid: SpatialGrid
    potential: Potential
    boundary_kind: str
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    normal_traces: Optional[np.ndarray]
    mode: str

    @property
    def mode_count(self):
        return self.eigenvalues.size

    @property
    def weights(self):
        return self.grid.quadrature_weights(self.boundary_kind)

    def project(self, fields):
        """Modal coefficients (f, phi_n) of fields shaped (..., grid.size)."""
        return (np.asarray(fields) * self.weights) @ self.eigenvectors.T

    def synthesize(self, coefficients):
        return np.asarray(coefficients) @ self.eigenvectors

    def save(self, path, binary=False):
        if binary:
            _save_binary(self, path)
            return
        axes = " ".join(
            f"{float(a[0])!r}:{float(a[-1])!r}:{a.size}" for a in self.grid.axes
        )
        shape = "x".join(map(str, self.grid.shape))
        with open(path, "w") as fh:
            fh.write(f"# kind={self.boundary_kind} N={self.mode_count} ")
            fh.write(f"shape={shape} mode={self.mode}\n")
            fh.write(f"# axes {axes}\n")
            fh.write(f"potential {_join(self.potential.values)}\n")
            for n in range(self.mode_count):
                fh.write(f"mode {n + 1} {float(self.eigenvalues[n])!r}\n")
                fh.write(f"{_join(self.eigenvectors[n])}\n")
                if self.normal_traces is not None:
                    fh.write(f"trace {_join(self.normal_traces[n])}\n")

    @classmethod
    def load(cls, path):
        with open(path, "rb") as fh:
            if fh.read(len(_BINARY_MAGIC)) == _BINARY_MAGIC:
                return _load_binary(path)
        with open(path) as fh:
            lines = fh.read().splitlines()
        head = dict(item.split("=") for item in lines[0][2:].split())
        axes = tuple(
            np.linspace(float(a), float(b), int(n))
            for a, b, n in (spec.split(":") for spec in lines[1].split()[2:])
        )
        grid = SpatialGrid(axes)
        potential = _loaded_potential(grid, np.array(lines[2].split()[1:], dtype=float))
        eigenvalues, vectors, traces = [], [], []
        rows = iter(lines[3:])
        for row in rows:
            if row.startswith("mode "):
                eigenvalues.append(float(row.split()[2]))
                vectors.append(np.array(next(rows).split(), dtype=float))
            elif row.startswith("trace "):
                traces.append(np.array(row.split()[1:], dtype=float))
        return cls(
            grid,
            potential,
            head["kind"],
            np.array(eigenvalues),
            np.array(vectors),
            np.array(traces) if traces else None,
            head["mode"],
        )


def _join(values):
    return " ".join(repr(float(v)) for v in values)


def _loaded_potential(grid, values):
    c0 = float(values.min())
    return Potential(grid, values, c0 if c0 > 0 else None)


def _save_binary(eig: EigenSystem, path):
    """
    Layout, little-endian: magic 'DOEIG001'; int64 kind (0 dirichlet, 1 neumann),
    N, ndim, has_traces; per axis int64 node count and float64 (start, end);
    float64 potential[size], eigenvalues[N], eigenvectors[N * size] row-major,
    normal traces[N * n_boundary] when present.
    """
    grid = eig.grid
    has_traces = int(eig.normal_traces is not None)
    kind = BOUNDARY_KINDS.index(eig.boundary_kind)
    chunks = [
        _BINARY_MAGIC,
        np.array([kind, eig.mode_count, grid.dimension, has_traces], "<i8").tobytes(),
    ]
    for axis in grid.axes:
        chunks.append(np.array([axis.size], "<i8").tobytes())
        chunks.append(np.array([axis[0], axis[-1]], "<f8").tobytes())
    arrays = [eig.potential.values, eig.eigenvalues, eig.eigenvectors]
    if has_traces:
        arrays.append(eig.normal_traces)
    chunks.extend(np.ascontiguousarray(a, dtype="<f8").tobytes() for a in arrays)
    with open(path, "wb") as fh:
        fh.write(b"".join(chunks))


def _load_binary(path):
    with open(path, "rb") as fh:
        data = fh.read()
    offset = len(_BINARY_MAGIC)

    def take(dtype, count):
        nonlocal offset
        chunk = np.frombuffer(data, dtype=dtype, count=count, offset=offset)
        offset += chunk.nbytes
        return chunk

    kind, n, ndim, has_traces = (int(v) for v in take("<i8", 4))
    axes = []
    for _ in range(ndim):
        size = int(take("<i8", 1)[0])
        start, end = take("<f8", 2)
        axes.append(np.linspace(start, end, size))
    grid = SpatialGrid(tuple(axes))
    potential = _loaded_potential(grid, take("<f8", grid.size).copy())
    eigenvalues = take("<f8", n).copy()
    vectors = take("<f8", n * grid.size).reshape(n, grid.size).copy()
    traces = None
    if has_traces:
        nb = grid.boundary_index.size
        traces = take("<f8", n * nb).reshape(n, nb).copy()
    return EigenSystem(
        grid, potential, BOUNDARY_KINDS[kind], eigenvalues, vectors, traces, "loaded"
    )


def _analytic_1d(n_nodes, length, offset, kind, count):
    """Closed-form pairs on the nodes of a 1-D axis, constant shift excluded."""
    x = np.linspace(0.0, 1.0, n_nodes)
    if kind == "dirichlet":
        k = np.arange(1, count + 1)
        vectors = math.sqrt(2.0 / length) * np.sin(np.pi * np.outer(k, x))
        vectors[:, [0, -1]] = 0.0
    else:
        k = np.arange(count)
        vectors = math.sqrt(2.0 / length) * np.cos(np.pi * np.outer(k, x))
        vectors[0] = 1.0 / math.sqrt(length)
    return (k * np.pi / length) ** 2 + offset, vectors


def _fd_1d(n_nodes, h, p_values, kind, count):
    """Lowest `count` pairs of the symmetrized tridiagonal 1-D operator."""
    if kind == "dirichlet":
        diag = 2.0 / h ** 2 + p_values[1:-1]
        off = np.full(diag.size - 1, -1.0 / h ** 2)
        weights = np.full(diag.size, h)
    else:
        diag = 2.0 / h ** 2 + p_values
        weights = np.full(diag.size, h)
        weights[[0, -1]] = 0.5 * h
        upper = np.full(diag.size - 1, -1.0 / h ** 2)
        upper[0] = -2.0 / h ** 2
        off = upper * np.sqrt(weights[:-1] / weights[1:])
    values, y = eigh_tridiagonal(diag, off, select="i", select_range=(0, count - 1))
    vectors = (y / np.sqrt(weights)[:, None]).T
    if kind == "dirichlet":
        vectors = np.pad(vectors, ((0, 0), (1, 1)))
    return values, vectors


def _fix_signs(vectors):
    peak = np.argmax(np.abs(vectors), axis=1)
    signs = np.sign(vectors[np.arange(vectors.shape[0]), peak])
    return vectors * signs[:, None]


def _general_eigen(grid, potential, kind, count):
    operator = full_operator(grid, potential.values)
    unknown = grid.unknowns(kind)
    weights = grid.quadrature_weights(kind)[unknown]
    root = np.sqrt(weights)
    block = operator[unknown][:, unknown]
    _check_symmetric(block, weights, f"{kind.capitalize()} eigen")
    sym = sparse.diags(root) @ block @ sparse.diags(1.0 / root)
    sym = 0.5 * (sym + sym.T)
    if unknown.size <= DENSE_LIMIT or count >= unknown.size - 1:
        values, y = eigh(sym.toarray(), subset_by_index=[0, count - 1])
    else:
        logging.info(
            f"Shift-invert Lanczos for {count} modes of {unknown.size} unknowns"
        )
        values, y = eigsh(sym.tocsc(), k=count, sigma=-1.0, which="LM")
        order = np.argsort(values)
        values, y = values[order], y[:, order]
    vectors = np.zeros((count, grid.size))
    vectors[:, unknown] = (y / root[:, None]).T
    return values, vectors


def _axis_modes(n, kind, mode):
    if kind == "dirichlet":
        return n - 2
    return n - 1 if mode == "analytic" else n


def _tensor_eigen(grid, parts, kind, count, mode):
    per_axis = []
    for n, h, length, part in zip(grid.shape, grid.spacing, grid.lengths, parts):
        available = _axis_modes(n, kind, mode)
        if mode == "analytic":
            per_axis.append(_analytic_1d(n, length, float(part[0]), kind, available))
        else:
            per_axis.append(_fd_1d(n, h, part, kind, available))
    (lx, vx), (ly, vy) = per_axis
    total = np.add.outer(lx, ly).ravel()
    pick = np.argsort(total, kind="stable")[:count]
    ix, iy = np.unravel_index(pick, (lx.size, ly.size))
    vectors = np.einsum("ki,kj->kij", vx[ix], vy[iy]).reshape(count, grid.size)
    return total[pick], vectors


def _normal_traces(grid: SpatialGrid, vectors):
    """One-sided second-order outward normal derivatives at the boundary nodes."""
    shaped = vectors.reshape((vectors.shape[0],) + grid.shape)
    index = np.array(np.unravel_index(grid.boundary_index, grid.shape))
    traces = np.zeros((vectors.shape[0], index.shape[1]))
    for col in range(index.shape[1]):
        node = index[:, col]
        ends = [k for k in range(grid.dimension) if node[k] in (0, grid.shape[k] - 1)]
        if len(ends) != 1:
            continue
        k = ends[0]
        step = 1 if node[k] == 0 else -1
        stencil = []
        for offset in range(3):
            where = list(node)
            where[k] += step * offset
            stencil.append(shaped[(slice(None),) + tuple(where)])
        slope = -3 * stencil[0] + 4 * stencil[1] - stencil[2]
        traces[:, col] = -slope / (2 * grid.spacing[k])
    return traces


def _verify(eig: EigenSystem):
    weights = eig.weights
    gram = (eig.eigenvectors * weights) @ eig.eigenvectors.T
    worst = np.abs(gram - np.eye(eig.mode_count)).max()
    if worst > ORTHONORMALITY_TOL:
        log_invariant_breach("Eigenvector orthonormality", worst, ORTHONORMALITY_TOL)
        raise InvariantError(f"Eigenvectors are not orthonormal (worst {worst:.3e})")
    if "analytic" not in eig.mode:
        operator = full_operator(eig.grid, eig.potential.values)
        unknown = eig.grid.unknowns(eig.boundary_kind)
        applied = (operator @ eig.eigenvectors.T).T
        residual = applied - eig.eigenvalues[:, None] * eig.eigenvectors
        norms = np.sqrt((residual[:, unknown] ** 2 * weights[unknown]).sum(axis=1))
        scale = np.maximum(1.0, np.abs(eig.eigenvalues))
        worst = float((norms / scale).max())
        if worst > RESIDUAL_TOL:
            log_invariant_breach("Eigenpair residual", worst, RESIDUAL_TOL)
            raise InvariantError(f"Eigenpair residual {worst:.3e} is too large")
    if np.any(np.diff(eig.eigenvalues) < -1e-9 * np.abs(eig.eigenvalues[1:])):
        raise InvariantError("Eigenvalues are not ascending")
    if eig.boundary_kind == "dirichlet" and not eig.eigenvalues[0] > 0:
        raise InvariantError(
            f"Dirichlet ground state {eig.eigenvalues[0]} is not positive"
        )
    c0 = eig.potential.c0
    if eig.boundary_kind == "neumann" and c0 is not None:
        if eig.eigenvalues[0] < c0 - 1e-8 * max(1.0, c0):
            raise InvariantError(
                f"Neumann ground state {eig.eigenvalues[0]} is below c0={c0}"
            )


def eigensystem(
    grid: SpatialGrid, p: Potential, kind, N=None, mode="auto"
) -> EigenSystem:
    check_kind(kind)
    if mode not in EIGEN_MODES:
        raise DomainError(f"Eigen mode '{mode}' is not supported. Use {EIGEN_MODES}")
    if mode == "analytic" and not p.is_constant:
        raise ContractError("Closed-form eigenpairs need a constant potential")
    resolved = mode
    if mode == "auto":
        resolved = "analytic" if grid.dimension == 1 and p.is_constant else "fd"
    available = int(np.prod([_axis_modes(n, kind, resolved) for n in grid.shape]))
    if N is None:
        default = DEFAULT_MODES_1D if grid.dimension == 1 else DEFAULT_MODES_2D
        N = min(default, available)
    if not 1 <= N <= available:
        raise ContractError(f"Mode count N={N} exceeds the {available} available modes")
    logging.info(
        f"Eigensystem: {kind}, {grid.dimension}-D grid {grid.shape}, "
        f"N={N}, mode={resolved}"
    )

    parts = p.separable_parts()
    if grid.dimension == 1:
        n, h, length = grid.shape[0], grid.spacing[0], grid.lengths[0]
        if resolved == "analytic":
            values, vectors = _analytic_1d(n, length, float(p.values[0]), kind, N)
        else:
            values, vectors = _fd_1d(n, h, p.values, kind, N)
    elif parts is not None:
        values, vectors = _tensor_eigen(grid, parts, kind, N, resolved)
        resolved = f"tensor-{resolved}"
    else:
        values, vectors = _general_eigen(grid, p, kind, N)
    vectors = _fix_signs(vectors)
    traces = _normal_traces(grid, vectors) if kind == "dirichlet" else None
    eig = EigenSystem(grid, p, kind, values, vectors, traces, resolved)
    _verify(eig)
    return eig


def lift_dirichlet(eig: EigenSystem, g_trace):
    if eig.boundary_kind != "dirichlet":
        raise ContractError("Dirichlet lift needs a Dirichlet eigensystem")
    return elliptic_solve(eig.grid, eig.potential, 0.0, None, "dirichlet", g_trace)


def lift_dirichlet_series(eig: EigenSystem, g_trace):
    """Truncated series -sum (1/lambda_n) (g, d_nu phi_n) phi_n, boundary set to g."""
    if eig.boundary_kind != "dirichlet":
        raise ContractError("Dirichlet lift needs a Dirichlet eigensystem")
    g = np.asarray(g_trace, dtype=float)
    pairing = eig.normal_traces @ (g * eig.grid.boundary_measure())
    values = -(pairing / eig.eigenvalues) @ eig.eigenvectors
    values[eig.grid.boundary_index] = g
    return values.reshape(eig.grid.shape)


def lift_neumann(eig: EigenSystem, g_trace):
    if eig.boundary_kind != "neumann":
        raise ContractError("Neumann lift needs a Neumann eigensystem")
    if not eig.potential.certified:
        raise ContractError("Neumann lift needs a potential certified p >= c0 > 0")
    return elliptic_solve(eig.grid, eig.potential, 0.0, None, "neumann", g_trace)
