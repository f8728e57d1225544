"""
Higher-order linearisation of the DN map.

Two routes to the order-k derivative of ``f -> d_nu u_f`` at ``f0``:

* direct solves of the linearised hierarchy around the base solution u0,

    (Lap + Q) v_l     = 0,                                   v_l   = f_l
    (Lap + Q) w_lm    = -T2 v_l v_m,                         w_lm  = 0
    (Lap + Q) w_123   = -[T2 (w12 v3 + w13 v2 + w23 v1) + T3 v1 v2 v3],  w_123 = 0

  with ``Q = T1`` and ``T_k = d^k a/dz^k (x, u0)``;

* mixed central divided differences of the nonlinear DN map over the
  2^k sign vertices ``f0 + sum_l (+-eps) f_l``.
"""

from __future__ import annotations

import itertools
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import GaugeLabError, GridMismatch, StepTooSmall
from .forward import Scenario, SchrodingerOperator, solve
from .grid import BoundaryField, Field, Grid2D, normal_derivative
from .nonlinearity import taylor_fields

logger = logging.getLogger(__name__)

__all__ = [
    "DIRECT",
    "DIVIDED",
    "MultilinearForm",
    "LinearizationReport",
    "linear_operator",
    "linearized_solve",
    "second_order_solve",
    "third_order_solve",
    "direct_form",
    "kth_divided_difference",
    "verify_linearization",
    "fourier_family",
    "hat_family",
    "boundary_family",
]

DIRECT = "direct"
DIVIDED = "divided_difference"
DEFAULT_EPS = 1e-2


@dataclass(frozen=True, eq=False)
class MultilinearForm:
    """Boundary trace of the order-k derivative of the DN map with its inputs."""

    order: int
    inputs: tuple[BoundaryField, ...]
    value: BoundaryField
    method: str
    eps: float | None = None

    def __post_init__(self):
        if self.order not in (1, 2, 3) and self.method == DIRECT:
            raise ValueError("direct forms exist for orders 1..3 only")
        if len(self.inputs) != self.order:
            raise ValueError("number of inputs must equal the order")
        if not np.all(np.isfinite(self.value.values)):
            raise ValueError("form value is not finite")

    def to_dict(self) -> dict:
        return {
            "order": self.order,
            "method": self.method,
            "eps": self.eps,
            "inputs": [f.to_dict() for f in self.inputs],
            "value": self.value.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> MultilinearForm:
        return cls(
            order=int(data["order"]),
            inputs=tuple(BoundaryField.from_dict(f) for f in data["inputs"]),
            value=BoundaryField.from_dict(data["value"]),
            method=data["method"],
            eps=data.get("eps"),
        )


def _canonical(inputs):
    """Sort inputs by their bytes so that permuted calls give bitwise equal results."""
    return sorted(inputs, key=lambda f: f.values.tobytes())


def linear_operator(s: Scenario, u0: Field) -> SchrodingerOperator:
    """Factorised ``Lap_h + Q`` with ``Q = da/dz(x, u0)``."""
    return SchrodingerOperator(s.grid, s.a.derivative(1, u0.values))


def linearized_solve(s: Scenario, u0: Field, fl: BoundaryField, op: SchrodingerOperator | None = None) -> Field:
    """First linearisation: ``(Lap + Q) v = 0`` with trace ``fl``."""
    if fl.grid != s.grid or u0.grid != s.grid:
        raise GridMismatch("inputs on a different grid")
    op = op or linear_operator(s, u0)
    return op.solve_dirichlet(fl)


def second_order_solve(
    s: Scenario, u0: Field, v1: Field, v2: Field, op: SchrodingerOperator | None = None, T2: Field | None = None
) -> Field:
    """Second linearisation: ``(Lap + Q) w = -T2 v1 v2`` with zero trace."""
    op = op or linear_operator(s, u0)
    T2 = T2 if T2 is not None else Field(s.grid, s.a.derivative(2, u0.values))
    return op.solve_zero_trace(-(T2 * v1 * v2))


def third_order_solve(
    s: Scenario,
    u0: Field,
    v1: Field,
    v2: Field,
    v3: Field,
    w12: Field,
    w13: Field,
    w23: Field,
    op: SchrodingerOperator | None = None,
) -> Field:
    """Third linearisation with source ``-[T2 (w12 v3 + w13 v2 + w23 v1) + T3 v1 v2 v3]``.

    ``T2 = 2R`` and ``T3`` are read from the nonlinearity at ``u0``.
    """
    op = op or linear_operator(s, u0)
    _, T2, T3 = taylor_fields(s.a, u0, 3)
    # symmetric pairing independent of argument order
    cross = sorted(
        [(w12, v3), (w13, v2), (w23, v1)],
        key=lambda p: (p[0].values.tobytes(), p[1].values.tobytes()),
    )
    total = cross[0][0] * cross[0][1] + cross[1][0] * cross[1][1] + cross[2][0] * cross[2][1]
    src = T2 * total + T3 * v1 * v2 * v3
    return op.solve_zero_trace(-src)


def direct_form(s: Scenario, inputs, u0: Field | None = None, op: SchrodingerOperator | None = None) -> MultilinearForm:
    """Order-k form (k = 1, 2, 3) from direct solves of the linearised hierarchy."""
    inputs = list(inputs)
    k = len(inputs)
    if k not in (1, 2, 3):
        raise ValueError("direct forms exist for orders 1..3 only")
    if u0 is None:
        u0 = solve(s)[0]
    op = op or linear_operator(s, u0)
    fs = _canonical(inputs)
    vs = [linearized_solve(s, u0, f, op) for f in fs]
    if k == 1:
        out = vs[0]
    elif k == 2:
        out = second_order_solve(s, u0, vs[0], vs[1], op)
    else:
        T2 = Field(s.grid, s.a.derivative(2, u0.values))
        w12 = second_order_solve(s, u0, vs[0], vs[1], op, T2)
        w13 = second_order_solve(s, u0, vs[0], vs[2], op, T2)
        w23 = second_order_solve(s, u0, vs[1], vs[2], op, T2)
        out = third_order_solve(s, u0, vs[0], vs[1], vs[2], w12, w13, w23, op)
    return MultilinearForm(k, tuple(inputs), normal_derivative(out), DIRECT)


def _vertex_dn(s, datum, init):
    u, rep = solve(s, datum, init)
    return normal_derivative(u).values, rep.residual_history[-1]


def _divided(s, f0, fs, eps, init, workers):
    k = len(fs)
    signs = list(itertools.product((1.0, -1.0), repeat=k))
    data = [f0 + sum((sg * eps) * f for sg, f in zip(pattern, fs)) for pattern in signs]
    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda d: _vertex_dn(s, d, init), data))
    else:
        results = [_vertex_dn(s, d, init) for d in data]
    acc = np.zeros(s.grid.n_boundary)
    for pattern, (dn, _) in zip(signs, results):
        acc += np.prod(pattern) * dn
    scale = max(np.max(np.abs(dn)) for dn, _ in results)
    resid = max(r for _, r in results)
    return acc / (2.0 * eps) ** k, scale, resid


def kth_divided_difference(
    s: Scenario,
    f0: BoundaryField,
    inputs,
    eps: float = DEFAULT_EPS,
    *,
    check_step: bool = True,
    init: Field | None = None,
    workers: int | None = None,
) -> MultilinearForm:
    """Mixed central difference of the DN map at ``f0`` in the directions ``inputs``.

    The 2^k vertex solves are independent; with ``workers > 1`` they run in a
    thread pool, and the reduction always follows the fixed sign-pattern order.

    With ``check_step`` the estimate is repeated at ``eps/2``; if the two
    disagree by more than the estimate itself while the round-off floor is
    of the same size, ``StepTooSmall`` is raised.
    """
    inputs = list(inputs)
    k = len(inputs)
    if k < 1:
        raise ValueError("at least one input direction is required")
    if eps <= 0:
        raise ValueError("eps must be positive")
    g = s.grid
    if f0.grid != g or any(f.grid != g for f in inputs):
        raise GridMismatch("boundary data on a different grid")
    fs = _canonical(inputs)
    if init is None:
        init = solve(s, f0)[0]
    value, scale, resid = _divided(s, f0, fs, eps, init, workers)
    if check_step:
        half, scale2, resid2 = _divided(s, f0, fs, eps / 2, init, workers)
        spread = float(np.max(np.abs(value - half)))
        size = float(np.max(np.abs(value)))
        # error in one vertex DN trace: round-off plus the Newton residual lifted through the stencil
        delta = 1e3 * np.finfo(float).eps * max(scale, scale2) + max(resid, resid2) * 2.0 / (g.h * np.pi**2)
        floor = 2**k * delta / eps**k
        # estimates that agree to ~sqrt(machine eps) of the DN scale are not diverging (zero forms)
        settled = spread <= np.sqrt(np.finfo(float).eps) * max(scale, scale2)
        if not settled and spread > max(0.5 * size, 1e-300) and floor >= 0.1 * spread:
            raise StepTooSmall(
                f"eps={eps:g}: estimates at eps and eps/2 differ by {spread:.2e} "
                f"against a round-off floor of {floor:.2e}"
            )
    return MultilinearForm(k, tuple(inputs), BoundaryField(g, value), DIVIDED, float(eps))


@dataclass
class LinearizationReport:
    """Cross-check of the direct and divided-difference routes."""

    order: int
    eps: float
    discrepancy: float = np.nan
    discrepancy_half: float = np.nan
    ratio: float = np.nan
    richardson_discrepancy: float = np.nan
    direct: MultilinearForm | None = None
    divided: MultilinearForm | None = None
    richardson: BoundaryField | None = None
    failures: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.failures

    def to_dict(self) -> dict:
        return {
            "order": self.order,
            "eps": self.eps,
            "discrepancy": self.discrepancy,
            "discrepancy_half": self.discrepancy_half,
            "ratio": self.ratio,
            "richardson_discrepancy": self.richardson_discrepancy,
            "failures": list(self.failures),
        }


def verify_linearization(s: Scenario, f0: BoundaryField, inputs, eps: float = DEFAULT_EPS) -> LinearizationReport:
    """Compare direct and divided-difference forms at ``eps`` and ``eps/2``.

    The report carries max-norm discrepancies, their ratio (about 4 for a
    second-order difference) and the Richardson limit
    ``(4 D(eps/2) - D(eps)) / 3`` compared with the direct form.
    Solver errors are recorded in ``failures`` instead of propagating.
    """
    inputs = list(inputs)
    rep = LinearizationReport(order=len(inputs), eps=float(eps))
    try:
        u0 = solve(s, f0)[0]
        rep.direct = direct_form(s.replace(f0=f0), inputs, u0)
        rep.divided = kth_divided_difference(s, f0, inputs, eps, check_step=False, init=u0)
        half = kth_divided_difference(s, f0, inputs, eps / 2, check_step=False, init=u0)
    except (GaugeLabError, ValueError) as exc:
        rep.failures.append(f"{type(exc).__name__}: {exc}")
        return rep
    d = rep.direct.value.values
    rep.discrepancy = float(np.max(np.abs(rep.divided.value.values - d)))
    rep.discrepancy_half = float(np.max(np.abs(half.value.values - d)))
    rep.ratio = rep.discrepancy / rep.discrepancy_half if rep.discrepancy_half > 0 else np.inf
    rich = (4.0 * half.value.values - rep.divided.value.values) / 3.0
    rep.richardson = BoundaryField(s.grid, rich)
    rep.richardson_discrepancy = float(np.max(np.abs(rich - d)))
    return rep


# boundary input families ------------------------------------------------------


def fourier_family(grid: Grid2D, count: int, include_constant: bool = True) -> list[BoundaryField]:
    """Arclength harmonics along the boundary traversal.

    Order: constant (optional), cos 1, sin 1, cos 2, sin 2, ...
    """
    if count < 1:
        raise ValueError("count must be positive")
    s = grid.arclength
    P = grid.perimeter
    out = [BoundaryField.constant(grid, 1.0)] if include_constant else []
    m = 1
    while len(out) < count:
        out.append(BoundaryField(grid, np.cos(2 * np.pi * m * s / P)))
        if len(out) < count:
            out.append(BoundaryField(grid, np.sin(2 * np.pi * m * s / P)))
        m += 1
    return out


def hat_family(grid: Grid2D, count: int) -> list[BoundaryField]:
    """Periodic piecewise-linear hats centred at ``count`` equispaced arclength points."""
    if count < 1:
        raise ValueError("count must be positive")
    s = grid.arclength
    P = grid.perimeter
    width = P / count
    out = []
    for c in range(count):
        d = np.abs(s - c * width)
        d = np.minimum(d, P - d)
        out.append(BoundaryField(grid, np.maximum(0.0, 1.0 - d / width)))
    return out


def boundary_family(grid: Grid2D, kind: str, count: int) -> list[BoundaryField]:
    if kind == "fourier":
        return fourier_family(grid, count)
    if kind == "hat":
        return hat_family(grid, count)
    raise ValueError(f"unknown boundary family {kind!r} (expected 'fourier' or 'hat')")
