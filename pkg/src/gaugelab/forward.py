"""
Forward problem: damped Newton for  Lap u + a(x, u) = F,  u = f on the boundary.

All linear algebra runs on the interior unknowns.  The Jacobian of the
discrete residual is ``Lap_h + diag(da/dz(x, u))`` restricted to the
interior, i.e. a discrete Schrodinger operator with zero trace.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import GridMismatch, NewtonDiverged, PowerIterationStalled, SingularJacobian, WrongVariant
from .grid import BoundaryField, Field, Grid2D, integrate, normal_derivative
from .nonlinearity import Nonlinearity

logger = logging.getLogger(__name__)

__all__ = [
    "Scenario",
    "SolveReport",
    "SchrodingerOperator",
    "harmonic_extension",
    "residual",
    "solve",
    "dn_map",
    "check_eigenvalue",
    "energy",
]

NEWTON_TOL = 1e-10
LINEAR_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class Scenario:
    """One instance of the boundary value problem: nonlinearity, source and base datum."""

    a: Nonlinearity
    F: Field
    f0: BoundaryField

    def __post_init__(self):
        if not (self.a.grid == self.F.grid == self.f0.grid):
            raise GridMismatch("nonlinearity, source and base datum must share one grid")

    @property
    def grid(self) -> Grid2D:
        return self.a.grid

    def replace(self, **changes) -> Scenario:
        kw = {"a": self.a, "F": self.F, "f0": self.f0}
        kw.update(changes)
        return Scenario(**kw)

    def to_dict(self) -> dict:
        return {
            "grid": self.grid.header(),
            "nonlinearity": self.a.to_dict(),
            "source": self.F.to_dict(),
            "f0": self.f0.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> Scenario:
        grid = Grid2D.from_header(data["grid"])
        return cls(
            Nonlinearity.from_dict(data["nonlinearity"], grid),
            Field.from_dict(data["source"], grid),
            BoundaryField.from_dict(data["f0"], grid),
        )


@dataclass
class SolveReport:
    iterations: int = 0
    residual_history: list = field(default_factory=list)
    converged: bool = False
    damping_events: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


class SchrodingerOperator:
    """Factorised ``Lap_h + diag(potential)`` on the interior unknowns.

    Parameters
    ----------
    grid : Grid2D
    potential : Field or ndarray
        Nodal potential; only interior values enter the operator.
    """

    def __init__(self, grid: Grid2D, potential):
        self.grid = grid
        pot = potential.values if isinstance(potential, Field) else np.asarray(potential, dtype=float)
        pot = pot[1:-1, 1:-1].ravel() if pot.shape == grid.shape else pot.ravel()
        if pot.size != grid.n_interior:
            raise ValueError("potential has the wrong size")
        self.potential = pot
        self.matrix = (grid.interior_laplacian + sp.diags(pot)).tocsc()
        try:
            self._lu = spla.splu(self.matrix)
        except RuntimeError as exc:
            raise SingularJacobian(f"factorisation failed: {exc}") from exc

    def solve_interior(self, rhs) -> np.ndarray:
        """Solve ``A x = rhs`` with iterative refinement; rhs may be 1-D or (n, k)."""
        rhs = np.asarray(rhs, dtype=float)
        x = self._lu.solve(rhs)
        scale = max(np.max(np.abs(rhs)), np.finfo(float).tiny)
        for _ in range(3):
            if not np.all(np.isfinite(x)):
                raise SingularJacobian("linear solve produced non-finite values")
            r = rhs - self.matrix @ x
            rel = np.max(np.abs(r)) / scale
            if rel <= LINEAR_TOL:
                return x
            x = x + self._lu.solve(r)
        r = rhs - self.matrix @ x
        if np.max(np.abs(r)) / scale > 1e-8:
            raise SingularJacobian(f"linear solve breakdown (relative residual {np.max(np.abs(r)) / scale:.2e})")
        return x

    def solve_dirichlet(self, trace: BoundaryField, source=None) -> Field:
        """Solve ``(Lap + V) v = source`` in the interior with ``v = trace`` on the boundary."""
        g = self.grid
        rhs = -(g.boundary_coupling @ trace.values)
        if source is not None:
            src = source.values if isinstance(source, Field) else np.asarray(source)
            rhs = rhs + (src[1:-1, 1:-1].ravel() if src.shape == g.shape else src)
        return Field.from_interior(g, self.solve_interior(rhs), trace)

    def solve_zero_trace(self, source) -> Field:
        return self.solve_dirichlet(BoundaryField.zeros(self.grid), source)

    def normal_adjoint(self, weights: np.ndarray) -> np.ndarray:
        """Interior field ``A^{-1} N_I^T weights`` (A is symmetric).

        ``weights`` has shape ``(n_boundary,)`` or ``(n_boundary, k)``.
        """
        rhs = self.grid.normal_interior.T @ weights
        return self.solve_interior(rhs)

    def smallest_eigenvalue(self, tol: float = 1e-8, max_iter: int = 500) -> float:
        """Eigenvalue closest to zero by inverse power iteration on the factorisation."""
        return _inverse_power(self.matrix, self._lu.solve, tol, max_iter)


def _inverse_power(A, apply_inverse, tol, max_iter, shift=0.0) -> float:
    """Rayleigh quotient of A at the fixed point of normalised ``apply_inverse`` iteration."""
    rng = np.random.default_rng(12345)
    x = rng.standard_normal(A.shape[0])
    x /= np.linalg.norm(x)
    lam_old = None
    for _ in range(max_iter):
        y = apply_inverse(x)
        nrm = np.linalg.norm(y)
        if not np.isfinite(nrm) or nrm == 0.0:
            return float(shift)
        x = y / nrm
        lam = float(x @ (A @ x))
        if lam_old is not None and abs(lam - lam_old) <= tol * max(abs(lam), 1e-300):
            return lam
        lam_old = lam
    raise PowerIterationStalled(f"inverse iteration did not settle in {max_iter} steps (last {lam_old:.6g})")


def harmonic_extension(grid: Grid2D, f: BoundaryField) -> Field:
    """Discrete harmonic function with trace ``f``."""
    return SchrodingerOperator(grid, np.zeros(grid.n_interior)).solve_dirichlet(f)


def residual(s: Scenario, u: Field) -> Field:
    """``Lap_h u + a(x, u) - F`` at interior nodes, zero on the boundary."""
    g = s.grid
    G = (g.laplacian_matrix @ u.values.ravel()).reshape(g.shape) + s.a.value(u.values) - s.F.values
    G[~g.interior_mask] = 0.0
    return Field(g, G)


def _interior_residual(s, vals):
    g = s.grid
    G = (g.laplacian_matrix @ vals.ravel()).reshape(g.shape) + s.a.value(vals) - s.F.values
    return G[1:-1, 1:-1].ravel()


def _newton(s, f, u, tol, max_iter, max_halvings, report):
    g = s.grid
    vals = u.values.copy()
    bi, bj = g.boundary_index
    vals[bi, bj] = f.values
    with np.errstate(over="ignore", invalid="ignore"):
        r = _interior_residual(s, vals)
    rn = float(np.max(np.abs(r))) if r.size else 0.0
    if not np.isfinite(rn):
        raise NewtonDiverged("initial residual is not finite")
    report.residual_history.append(rn)
    for _ in range(max_iter):
        if rn <= tol:
            report.converged = True
            return Field(g, vals)
        op = SchrodingerOperator(g, s.a.derivative(1, vals))
        delta = op.solve_interior(-r)
        step = 1.0
        for halving in range(max_halvings + 1):
            trial = vals.copy()
            trial[1:-1, 1:-1] += step * delta.reshape(g.nx - 2, g.ny - 2)
            with np.errstate(over="ignore", invalid="ignore"):
                r_trial = _interior_residual(s, trial)
            rn_trial = float(np.max(np.abs(r_trial)))
            if np.isfinite(rn_trial) and rn_trial < rn:
                break
            step *= 0.5
            report.damping_events += 1
        else:
            raise NewtonDiverged(
                f"damping exhausted after {max_halvings} halvings at residual {rn:.3e} "
                f"(iteration {report.iterations})"
            )
        vals, r, rn = trial, r_trial, rn_trial
        report.iterations += 1
        report.residual_history.append(rn)
    if rn <= tol:
        report.converged = True
        return Field(g, vals)
    raise NewtonDiverged(f"no convergence in {max_iter} iterations (residual {rn:.3e})")


def solve(
    s: Scenario,
    f: BoundaryField | None = None,
    init: Field | None = None,
    *,
    tol: float = NEWTON_TOL,
    max_iter: int = 50,
    max_halvings: int = 30,
    continuation: int = 0,
) -> tuple[Field, SolveReport]:
    """Solve the Dirichlet problem with trace ``f`` (default: the base datum).

    The initial guess defaults to the harmonic extension of ``f``.  With
    ``continuation=n`` the datum is moved from ``s.f0`` to ``f`` in ``n``
    equal steps, each warm-started from the previous solution.

    Raises
    ------
    NewtonDiverged
        Iteration cap reached or step damping exhausted.
    SingularJacobian
        A Newton linear system could not be solved.
    """
    f = s.f0 if f is None else f
    if f.grid != s.grid or (init is not None and init.grid != s.grid):
        raise GridMismatch("boundary datum / initial guess on a different grid")
    report = SolveReport()
    u = harmonic_extension(s.grid, f) if init is None else init
    if continuation > 0:
        u = harmonic_extension(s.grid, s.f0) if init is None else init
        for t in np.linspace(0.0, 1.0, continuation + 1)[1:-1]:
            sub = SolveReport()
            u = _newton(s, s.f0 * (1.0 - t) + f * t, u, tol, max_iter, max_halvings, sub)
            report.iterations += sub.iterations
            report.damping_events += sub.damping_events
    u = _newton(s, f, u, tol, max_iter, max_halvings, report)
    return u, report


def dn_map(s: Scenario, f: BoundaryField | None = None, init: Field | None = None, **kw) -> BoundaryField:
    """Normal derivative of the solution with trace ``f``."""
    return normal_derivative(solve(s, f, init, **kw)[0])


def check_eigenvalue(
    s: Scenario, u0: Field, *, tol: float = 1e-8, max_iter: int = 500, shift: float = 0.0
) -> float:
    """Eigenvalue of ``Lap_h + diag(da/dz(x, u0))`` (zero trace) nearest to ``shift``.

    With the default ``shift=0`` this is the smallest-magnitude eigenvalue;
    a value near zero signals an ill-posed linearisation.
    """
    g = s.grid
    A = (g.interior_laplacian + sp.diags(s.a.derivative(1, u0.values)[1:-1, 1:-1].ravel())).tocsc()
    try:
        lu = spla.splu((A - shift * sp.identity(A.shape[0])).tocsc())
    except RuntimeError:
        # shift is exactly an eigenvalue
        return float(shift)
    return _inverse_power(A, lu.solve, tol, max_iter, shift)


def energy(s: Scenario, u: Field, c0: float = 0.0) -> float:
    """Convex energy of the monotone cubic problem.

    The scenario ``Lap u - c u^3 = F_s`` (cubic coefficient ``-c``, ``c > c0``)
    is the monotone problem ``-Lap u + c u^3 = -F_s``; its energy is

        E(u) = 1/2 int |grad u|^2 + 1/4 int c u^4 - int (-F_s) u

    with forward-difference gradients and trapezoid quadrature.  Only
    meaningful for ``u`` vanishing on the boundary.
    """
    a = s.a
    if a.kind != "polynomial" or a.degree != 3:
        raise WrongVariant("energy needs a cubic polynomial nonlinearity")
    if a.coefficient(1).max_abs() > 0 or a.coefficient(2).max_abs() > 0:
        raise WrongVariant("energy needs the linear and quadratic coefficients to vanish")
    c = -a.coefficient(3).values
    if np.min(c) <= c0:
        raise WrongVariant(
            f"monotone energy needs cubic coefficient <= -c0 < 0 (found max {-np.min(c):.3g})"
        )
    g = s.grid
    v = u.values
    # trapezoid weights across each edge family
    wy = np.full(g.ny, g.hy)
    wy[[0, -1]] *= 0.5
    wx = np.full(g.nx, g.hx)
    wx[[0, -1]] *= 0.5
    gx = np.diff(v, axis=0) / g.hx
    gy = np.diff(v, axis=1) / g.hy
    grad2 = g.hx * np.sum(gx**2 * wy[None, :]) + g.hy * np.sum(gy**2 * wx[:, None])
    return 0.5 * grad2 + 0.25 * integrate(Field(g, c * v**4)) + integrate(s.F * u)
