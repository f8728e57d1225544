"""
The nonlinearity families a(x, z).

Four closed-form variants are supported:

* ``polynomial``:  sum_{k=1}^N a_k(x) z^k
* ``exponential``: q(x) e^z          (note a(x, 0) = q, not zero)
* ``exp_times_u``: q(x) z e^z
* ``sine_gordon``: q(x) sin z

Coefficients are Fields, so constants are just constant Fields.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import GridMismatch
from .grid import Field, Grid2D

__all__ = ["Nonlinearity", "KINDS", "eval", "dz", "taylor_fields"]

KINDS = ("polynomial", "exponential", "exp_times_u", "sine_gordon")


def _falling(m: int, k: int) -> int:
    """m (m-1) ... (m-k+1)."""
    return math.perm(m, k) if k <= m else 0


@dataclass(frozen=True, eq=False)
class Nonlinearity:
    kind: str
    coefficients: tuple[Field, ...]

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown nonlinearity kind {self.kind!r}; expected one of {KINDS}")
        coeffs = tuple(self.coefficients)
        if not coeffs:
            raise ValueError("at least one coefficient field is required")
        if self.kind != "polynomial" and len(coeffs) != 1:
            raise ValueError(f"{self.kind} takes exactly one coefficient field q")
        grid = coeffs[0].grid
        if any(c.grid != grid for c in coeffs):
            raise GridMismatch("coefficient fields live on different grids")
        object.__setattr__(self, "coefficients", coeffs)

    # constructors -----------------------------------------------------------

    @classmethod
    def polynomial(cls, *coefficients: Field) -> Nonlinearity:
        """``coefficients[k-1]`` multiplies ``z**k``."""
        return cls("polynomial", coefficients)

    @classmethod
    def exponential(cls, q: Field) -> Nonlinearity:
        return cls("exponential", (q,))

    @classmethod
    def exp_times_u(cls, q: Field) -> Nonlinearity:
        return cls("exp_times_u", (q,))

    @classmethod
    def sine_gordon(cls, q: Field) -> Nonlinearity:
        return cls("sine_gordon", (q,))

    @classmethod
    def zero(cls, grid: Grid2D) -> Nonlinearity:
        return cls("polynomial", (Field.zeros(grid),))

    # basic properties -------------------------------------------------------

    @property
    def grid(self) -> Grid2D:
        return self.coefficients[0].grid

    @property
    def degree(self) -> int | None:
        return len(self.coefficients) if self.kind == "polynomial" else None

    @property
    def q(self) -> Field:
        if self.kind == "polynomial":
            raise AttributeError("polynomial nonlinearities have no single coefficient q")
        return self.coefficients[0]

    def coefficient(self, k: int) -> Field:
        """Polynomial coefficient of z^k (zero beyond the degree)."""
        if self.kind != "polynomial":
            raise AttributeError(f"{self.kind} has no polynomial coefficients")
        if 1 <= k <= len(self.coefficients):
            return self.coefficients[k - 1]
        return Field.zeros(self.grid)

    # vectorised evaluation --------------------------------------------------

    def value(self, z):
        """a(x, z) for an array ``z`` of node values (shape ``(nx, ny)``)."""
        z = np.asarray(z, dtype=float)
        c = [f.values for f in self.coefficients]
        if self.kind == "polynomial":
            out = np.zeros_like(z)
            for ak in reversed(c):
                out = (out + ak) * z
            return out
        if self.kind == "exponential":
            return c[0] * np.exp(z)
        if self.kind == "exp_times_u":
            return c[0] * z * np.exp(z)
        return c[0] * np.sin(z)

    def derivative(self, k: int, z):
        """k-th z-derivative of a at node values ``z``."""
        if k < 0:
            raise ValueError("derivative order must be non-negative")
        if k == 0:
            return self.value(z)
        z = np.asarray(z, dtype=float)
        c = [f.values for f in self.coefficients]
        if self.kind == "polynomial":
            out = np.zeros_like(z)
            for m in range(len(c), k - 1, -1):
                out = out * z + _falling(m, k) * c[m - 1]
            return out
        if self.kind == "exponential":
            return c[0] * np.exp(z)
        if self.kind == "exp_times_u":
            return c[0] * (z + k) * np.exp(z)
        return c[0] * np.sin(z + k * np.pi / 2)

    # serialisation ----------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "grid": self.grid.header(),
            "coefficients": [f.values.ravel().tolist() for f in self.coefficients],
        }

    @classmethod
    def from_dict(cls, data: dict, grid: Grid2D | None = None) -> Nonlinearity:
        g = Grid2D.from_header(data["grid"]) if "grid" in data else grid
        return cls(data["kind"], tuple(Field(g, np.asarray(c, dtype=float)) for c in data["coefficients"]))


def eval(a: Nonlinearity, node, z: float) -> float:  # noqa: A001 - mirrors the operation name
    """Pointwise a(x_node, z)."""
    zz = np.full(a.grid.shape, float(z))
    return float(a.value(zz)[node])


def dz(a: Nonlinearity, k: int, node, z: float) -> float:
    """Pointwise k-th z-derivative of a at (x_node, z); ``k >= 1``."""
    if k < 1:
        raise ValueError("dz needs k >= 1")
    zz = np.full(a.grid.shape, float(z))
    return float(a.derivative(k, zz)[node])


def taylor_fields(a: Nonlinearity, u0: Field, kmax: int) -> list[Field]:
    """``[T_1, ..., T_kmax]`` with ``T_k(x) = d^k a/dz^k (x, u0(x))``."""
    if kmax < 1:
        raise ValueError("kmax must be >= 1")
    if u0.grid != a.grid:
        raise GridMismatch("u0 and the nonlinearity live on different grids")
    return [Field(a.grid, a.derivative(k, u0.values)) for k in range(1, kmax + 1)]
