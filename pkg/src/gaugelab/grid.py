"""
Discrete rectangle, grid functions and finite-difference operators.

Node ``(i, j)`` sits at ``(i*hx, j*hy)``; field values are stored as an
``(nx, ny)`` array so the flat (row-major) index of a node is ``i*ny + j``.
Boundary nodes are traversed counterclockwise starting at the origin corner:
bottom edge left to right, right edge upwards, top edge right to left, left
edge downwards.

Corners have no outward normal.  ``normal_derivative`` gives a corner the
average of the two adjacent one-sided edge formulas.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from numbers import Real

import numpy as np
import scipy.sparse as sp

from .errors import GridMismatch

__all__ = [
    "Grid2D",
    "Field",
    "BoundaryField",
    "laplacian",
    "normal_derivative",
    "integrate",
    "boundary_integrate",
    "make_bump",
    "bump_laplacian",
]


@dataclass(frozen=True)
class Grid2D:
    """Uniform node lattice on ``[0, lx] x [0, ly]``."""

    nx: int
    ny: int
    lx: float = 1.0
    ly: float = 1.0

    def __post_init__(self):
        if int(self.nx) != self.nx or int(self.ny) != self.ny:
            raise ValueError("node counts must be integers")
        if self.nx < 5 or self.ny < 5:
            raise ValueError(f"need at least 5 nodes per axis, got {self.nx}x{self.ny}")
        if not (self.lx > 0 and self.ly > 0):
            raise ValueError("side lengths must be positive")
        object.__setattr__(self, "nx", int(self.nx))
        object.__setattr__(self, "ny", int(self.ny))
        object.__setattr__(self, "lx", float(self.lx))
        object.__setattr__(self, "ly", float(self.ly))

    @classmethod
    def square(cls, n: int, side: float = 1.0) -> Grid2D:
        return cls(n, n, side, side)

    @property
    def hx(self) -> float:
        return self.lx / (self.nx - 1)

    @property
    def hy(self) -> float:
        return self.ly / (self.ny - 1)

    @property
    def h(self) -> float:
        return max(self.hx, self.hy)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.nx, self.ny)

    @property
    def n_nodes(self) -> int:
        return self.nx * self.ny

    @property
    def n_interior(self) -> int:
        return (self.nx - 2) * (self.ny - 2)

    @property
    def n_boundary(self) -> int:
        return 2 * self.nx + 2 * self.ny - 4

    def header(self) -> dict:
        return {"nx": self.nx, "ny": self.ny, "lx": self.lx, "ly": self.ly}

    @classmethod
    def from_header(cls, header: dict) -> Grid2D:
        return cls(header["nx"], header["ny"], header.get("lx", 1.0), header.get("ly", 1.0))

    @cached_property
    def x(self) -> np.ndarray:
        return np.linspace(0.0, self.lx, self.nx)

    @cached_property
    def y(self) -> np.ndarray:
        return np.linspace(0.0, self.ly, self.ny)

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(self.x, self.y, indexing="ij")

    @cached_property
    def interior_mask(self) -> np.ndarray:
        mask = np.zeros(self.shape, dtype=bool)
        mask[1:-1, 1:-1] = True
        mask.flags.writeable = False
        return mask

    @cached_property
    def interior_flat(self) -> np.ndarray:
        """Flat node indices of interior nodes, in the order of ``values[1:-1, 1:-1].ravel()``."""
        return np.flatnonzero(self.interior_mask.ravel())

    @cached_property
    def boundary_index(self) -> tuple[np.ndarray, np.ndarray]:
        nx, ny = self.nx, self.ny
        bottom = [(i, 0) for i in range(nx)]
        right = [(nx - 1, j) for j in range(1, ny)]
        top = [(i, ny - 1) for i in range(nx - 2, -1, -1)]
        left = [(0, j) for j in range(ny - 2, 0, -1)]
        nodes = np.array(bottom + right + top + left)
        bi, bj = nodes[:, 0].copy(), nodes[:, 1].copy()
        bi.flags.writeable = False
        bj.flags.writeable = False
        return bi, bj

    @cached_property
    def boundary_flat(self) -> np.ndarray:
        bi, bj = self.boundary_index
        return bi * self.ny + bj

    @cached_property
    def segment_lengths(self) -> np.ndarray:
        """Length of the segment from boundary node k to node k+1 (cyclic)."""
        bi, bj = self.boundary_index
        di = np.abs(np.roll(bi, -1) - bi)
        dj = np.abs(np.roll(bj, -1) - bj)
        return di * self.hx + dj * self.hy

    @cached_property
    def arclength(self) -> np.ndarray:
        """Arclength position of each boundary node, starting at 0 at the origin."""
        return np.concatenate([[0.0], np.cumsum(self.segment_lengths)[:-1]])

    @property
    def perimeter(self) -> float:
        return 2.0 * (self.lx + self.ly)

    @cached_property
    def boundary_weights(self) -> np.ndarray:
        seg = self.segment_lengths
        return 0.5 * (seg + np.roll(seg, 1))

    @cached_property
    def weights(self) -> np.ndarray:
        """Tensor-product trapezoid weights, shape ``(nx, ny)``."""
        wx = np.full(self.nx, self.hx)
        wx[[0, -1]] *= 0.5
        wy = np.full(self.ny, self.hy)
        wy[[0, -1]] *= 0.5
        return np.outer(wx, wy)

    @cached_property
    def laplacian_matrix(self) -> sp.csr_matrix:
        """Five-point Laplacian on all nodes; boundary rows are zero."""
        nx, ny = self.nx, self.ny
        idx = np.arange(self.n_nodes).reshape(nx, ny)
        c = idx[1:-1, 1:-1].ravel()
        cx, cy = 1.0 / self.hx**2, 1.0 / self.hy**2
        rows = np.concatenate([c, c, c, c, c])
        cols = np.concatenate([
            idx[:-2, 1:-1].ravel(),
            idx[2:, 1:-1].ravel(),
            idx[1:-1, :-2].ravel(),
            idx[1:-1, 2:].ravel(),
            c,
        ])
        vals = np.concatenate([
            np.full(c.size, cx),
            np.full(c.size, cx),
            np.full(c.size, cy),
            np.full(c.size, cy),
            np.full(c.size, -2.0 * (cx + cy)),
        ])
        return sp.csr_matrix((vals, (rows, cols)), shape=(self.n_nodes, self.n_nodes))

    @cached_property
    def interior_laplacian(self) -> sp.csc_matrix:
        """Interior-interior block of the Laplacian (symmetric negative definite)."""
        L = self.laplacian_matrix[self.interior_flat][:, self.interior_flat]
        return L.tocsc()

    @cached_property
    def boundary_coupling(self) -> sp.csr_matrix:
        """Interior-boundary block: maps a trace (traversal order) to interior Laplacian contributions."""
        return self.laplacian_matrix[self.interior_flat][:, self.boundary_flat].tocsr()

    @cached_property
    def normal_matrix(self) -> sp.csr_matrix:
        """Outward normal derivative, shape ``(n_boundary, n_nodes)``."""
        nx, ny = self.nx, self.ny
        bi, bj = self.boundary_index
        rows, cols, vals = [], [], []

        def edge(k, nodes, h, share):
            for node, coef in zip(nodes, (3.0, -4.0, 1.0)):
                rows.append(k)
                cols.append(node[0] * ny + node[1])
                vals.append(share * coef / (2.0 * h))

        for k, (i, j) in enumerate(zip(bi, bj)):
            formulas = []
            if i == 0:
                formulas.append(([(0, j), (1, j), (2, j)], self.hx))
            if i == nx - 1:
                formulas.append(([(nx - 1, j), (nx - 2, j), (nx - 3, j)], self.hx))
            if j == 0:
                formulas.append(([(i, 0), (i, 1), (i, 2)], self.hy))
            if j == ny - 1:
                formulas.append(([(i, ny - 1), (i, ny - 2), (i, ny - 3)], self.hy))
            for nodes, h in formulas:
                edge(k, nodes, h, 1.0 / len(formulas))
        return sp.csr_matrix((vals, (rows, cols)), shape=(self.n_boundary, self.n_nodes))

    @cached_property
    def normal_interior(self) -> sp.csr_matrix:
        return self.normal_matrix[:, self.interior_flat].tocsr()

    @cached_property
    def normal_boundary(self) -> sp.csr_matrix:
        return self.normal_matrix[:, self.boundary_flat].tocsr()


def _check_grid(a, b):
    if a.grid != b.grid:
        raise GridMismatch(f"fields live on different grids: {a.grid} vs {b.grid}")


class _GridFunction:
    """Arithmetic shared by Field and BoundaryField."""

    __slots__ = ("grid", "values")
    _shape_name = ""

    def _expected_shape(self, grid):
        raise NotImplementedError

    def __init__(self, grid: Grid2D, values):
        arr = np.array(values, dtype=float)
        shape = self._expected_shape(grid)
        if arr.shape != shape and arr.size == int(np.prod(shape)):
            arr = arr.reshape(shape)
        if arr.shape != shape:
            raise ValueError(
                f"{type(self).__name__} needs {self._shape_name} values, got shape {np.shape(values)}"
            )
        if not np.all(np.isfinite(arr)):
            raise ValueError(f"{type(self).__name__} values must be finite")
        arr.flags.writeable = False
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "values", arr)

    def __setattr__(self, name, value):
        raise AttributeError(f"{type(self).__name__} is immutable")

    def _combine(self, other, op):
        if isinstance(other, type(self)):
            _check_grid(self, other)
            return type(self)(self.grid, op(self.values, other.values))
        if isinstance(other, (Real, np.floating, np.integer)):
            return type(self)(self.grid, op(self.values, float(other)))
        return NotImplemented

    def __add__(self, other):
        return self._combine(other, np.add)

    def __radd__(self, other):
        return self._combine(other, lambda a, b: b + a)

    def __sub__(self, other):
        return self._combine(other, np.subtract)

    def __rsub__(self, other):
        return self._combine(other, lambda a, b: b - a)

    def __mul__(self, other):
        return self._combine(other, np.multiply)

    def __rmul__(self, other):
        return self._combine(other, lambda a, b: b * a)

    def __truediv__(self, other):
        return self._combine(other, np.divide)

    def __pow__(self, p):
        return type(self)(self.grid, self.values ** p)

    def __neg__(self):
        return type(self)(self.grid, -self.values)

    def apply(self, func) -> _GridFunction:
        return type(self)(self.grid, func(self.values))

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.values)))

    def allclose(self, other, atol=0.0, rtol=0.0) -> bool:
        _check_grid(self, other)
        return bool(np.allclose(self.values, other.values, atol=atol, rtol=rtol))

    def to_dict(self) -> dict:
        return {
            "grid": self.grid.header(),
            "layout": self._layout,
            "values": self.values.ravel().tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict, grid: Grid2D | None = None):
        g = Grid2D.from_header(data["grid"]) if "grid" in data else grid
        if g is None:
            raise ValueError("grid header missing")
        return cls(g, np.asarray(data["values"], dtype=float))

    def __repr__(self):
        return f"{type(self).__name__}({self.grid.nx}x{self.grid.ny}, max|.|={self.max_abs():.3g})"


class Field(_GridFunction):
    """Real value per grid node, stored as an ``(nx, ny)`` array."""

    __slots__ = ()
    _shape_name = "nx*ny"
    _layout = "row-major (nx, ny): flat index i*ny + j, x index i varies slowest"

    def _expected_shape(self, grid):
        return (grid.nx, grid.ny)

    @classmethod
    def zeros(cls, grid: Grid2D) -> Field:
        return cls(grid, np.zeros(grid.shape))

    @classmethod
    def constant(cls, grid: Grid2D, c: float) -> Field:
        return cls(grid, np.full(grid.shape, float(c)))

    @classmethod
    def from_function(cls, grid: Grid2D, func) -> Field:
        X, Y = grid.mesh()
        return cls(grid, np.broadcast_to(func(X, Y), grid.shape))

    @classmethod
    def from_interior(cls, grid: Grid2D, interior, trace=None) -> Field:
        """Assemble from interior values; boundary from ``trace`` or copied from the nearest interior node."""
        vals = np.zeros(grid.shape)
        vals[1:-1, 1:-1] = np.asarray(interior, dtype=float).reshape(grid.nx - 2, grid.ny - 2)
        if trace is None:
            bi, bj = grid.boundary_index
            vals[bi, bj] = vals[np.clip(bi, 1, grid.nx - 2), np.clip(bj, 1, grid.ny - 2)]
        else:
            bi, bj = grid.boundary_index
            vals[bi, bj] = trace.values if isinstance(trace, BoundaryField) else trace
        return cls(grid, vals)

    @property
    def interior(self) -> np.ndarray:
        return self.values[1:-1, 1:-1].ravel()

    def trace(self) -> BoundaryField:
        bi, bj = self.grid.boundary_index
        return BoundaryField(self.grid, self.values[bi, bj])

    def with_trace(self, g: BoundaryField) -> Field:
        _check_grid(self, g)
        vals = self.values.copy()
        bi, bj = self.grid.boundary_index
        vals[bi, bj] = g.values
        return Field(self.grid, vals)

    def at(self, node) -> float:
        return float(self.values[node])


class BoundaryField(_GridFunction):
    """Real value per boundary node, in counterclockwise traversal order."""

    __slots__ = ()
    _shape_name = "n_boundary"
    _layout = "boundary traversal: counterclockwise from the origin corner"

    def _expected_shape(self, grid):
        return (grid.n_boundary,)

    @classmethod
    def zeros(cls, grid: Grid2D) -> BoundaryField:
        return cls(grid, np.zeros(grid.n_boundary))

    @classmethod
    def constant(cls, grid: Grid2D, c: float) -> BoundaryField:
        return cls(grid, np.full(grid.n_boundary, float(c)))

    @classmethod
    def from_function(cls, grid: Grid2D, func) -> BoundaryField:
        bi, bj = grid.boundary_index
        return cls(grid, np.broadcast_to(func(grid.x[bi], grid.y[bj]), (grid.n_boundary,)))


def laplacian(u: Field) -> Field:
    """Five-point Laplacian at interior nodes; zero on the boundary."""
    g = u.grid
    out = np.zeros(g.shape)
    v = u.values
    out[1:-1, 1:-1] = (v[:-2, 1:-1] - 2.0 * v[1:-1, 1:-1] + v[2:, 1:-1]) / g.hx**2 + (
        v[1:-1, :-2] - 2.0 * v[1:-1, 1:-1] + v[1:-1, 2:]
    ) / g.hy**2
    return Field(g, out)


def normal_derivative(u: Field) -> BoundaryField:
    """Outward normal derivative by second-order one-sided differences."""
    return BoundaryField(u.grid, u.grid.normal_matrix @ u.values.ravel())


def integrate(w: Field) -> float:
    return float(np.sum(w.grid.weights * w.values))


def boundary_integrate(g: BoundaryField) -> float:
    seg = g.grid.segment_lengths
    v = g.values
    return float(np.sum(0.5 * seg * (v + np.roll(v, -1))))


def _bump_support_check(grid, center, radius):
    cx, cy = center
    margin = min(cx, grid.lx - cx, cy, grid.ly - cy) - radius
    if radius <= 0 or margin < 2.0 * grid.h - 1e-12:
        raise ValueError(
            f"bump (center={tuple(center)}, radius={radius}) must stay {2 * grid.h:.4g} away from the boundary"
        )


def make_bump(grid: Grid2D, center, radius: float, amplitude: float, power: int = 3) -> Field:
    """``amplitude * max(0, 1 - r^2/radius^2)^power``, compactly supported.

    The default cubic is C^2.  Refinement studies that need a clean h^2
    truncation error should use ``power >= 6`` so that the fourth
    derivatives stay bounded across the edge of the support.
    """
    _bump_support_check(grid, center, radius)
    if power < 3:
        raise ValueError("power must be at least 3 for a C^2 bump")
    X, Y = grid.mesh()
    s = ((X - center[0]) ** 2 + (Y - center[1]) ** 2) / radius**2
    return Field(grid, amplitude * np.clip(1.0 - s, 0.0, None) ** power)


def bump_laplacian(grid: Grid2D, center, radius: float, amplitude: float, power: int = 3) -> Field:
    """Exact (continuous) Laplacian of ``make_bump`` sampled at the nodes."""
    _bump_support_check(grid, center, radius)
    if power < 3:
        raise ValueError("power must be at least 3 for a C^2 bump")
    X, Y = grid.mesh()
    r2 = (X - center[0]) ** 2 + (Y - center[1]) ** 2
    t = np.clip(1.0 - r2 / radius**2, 0.0, None)
    p = power
    # Lap t^p = p t^(p-1) Lap t + p (p-1) t^(p-2) |grad t|^2
    lap = p * t ** (p - 1) * (-4.0 / radius**2) + p * (p - 1) * t ** (p - 2) * 4.0 * r2 / radius**4
    return Field(grid, amplitude * lap)
