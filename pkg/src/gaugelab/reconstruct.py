"""
Reconstruction of Taylor fields, sources and coefficients from boundary data.

Pipeline
--------
1. ``recover_potential``: output least squares for ``Q = T1`` from the
   first-order DN data (Gauss-Newton with Levenberg damping and a gradient
   penalty).
2. ``recover_second_field`` / ``recover_third_field``: linear Tikhonov
   problems for ``T2`` and ``T3`` built from integral identities.  With
   ``z_g = A^{-1} N_I^T W g`` (A = Lap_h + Q on the interior, N_I the interior
   part of the normal-derivative stencil, W the boundary quadrature weights)
   every zero-trace solution of ``A w = s`` satisfies exactly

       <g, d_nu w>_W = z_g . s ,

   so measured higher-order forms are linear in the unknown Taylor field.
3. Gauge breaking under the priors that restore uniqueness.
"""

from __future__ import annotations

import json
import logging
from collections import deque
from dataclasses import dataclass, field
from itertools import combinations_with_replacement
from math import comb, factorial
from pathlib import Path

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
from scipy.fft import dstn, idstn

from .errors import (
    BranchAmbiguous,
    DegeneratePivot,
    Diverged,
    GridMismatch,
    IllPosed,
    RankDeficient,
    SingularJacobian,
    UnwrapConflict,
)
from .forward import Scenario, SchrodingerOperator, harmonic_extension, solve
from .grid import BoundaryField, Field, Grid2D, laplacian
from .linearize import (
    DIRECT,
    DIVIDED,
    kth_divided_difference,
    linear_operator,
    linearized_solve,
    second_order_solve,
    third_order_solve,
)
from .nonlinearity import Nonlinearity

logger = logging.getLogger(__name__)

__all__ = [
    "DNDataset",
    "ReconstructionResult",
    "build_dataset",
    "relative_error",
    "potential_objective",
    "recover_potential",
    "select_alpha",
    "recover_second_field",
    "recover_third_field",
    "break_gauge_polynomial",
    "break_gauge_exp_u",
    "recover_sine_gordon",
    "smooth_base_state",
]

DEFAULT_ALPHA = 1e-6
CONDITION_LIMIT = 1e12


# data containers ----------------------------------------------------------------


def _key(idx) -> str:
    return ",".join(map(str, idx))


def _unkey(s: str) -> tuple:
    return tuple(int(t) for t in s.split(","))


@dataclass(eq=False)
class DNDataset:
    """Boundary inputs and the derivatives of the DN map they produce.

    ``second[(i, j)]`` (``i <= j``) is the trace of ``d_nu w_ij``; ``third`` is
    keyed by sorted triples over the first ``n_third`` inputs.
    """

    grid: Grid2D
    f0: BoundaryField
    inputs: list
    first: list
    second: dict = field(default_factory=dict)
    third: dict = field(default_factory=dict)
    family: dict = field(default_factory=dict)
    eps: float | None = None
    method: str = DIRECT
    noise: float = 0.0
    seed: int | None = None

    def __post_init__(self):
        if len(self.first) != len(self.inputs):
            raise ValueError("one first-order output per input is required")
        n = len(self.inputs)
        for key in list(self.second) + list(self.third):
            if any(k >= n or k < 0 for k in key) or list(key) != sorted(key):
                raise ValueError(f"inconsistent form index {key}")
        fields = [self.f0, *self.inputs, *self.first, *self.second.values(), *self.third.values()]
        if any(f.grid != self.grid for f in fields):
            raise GridMismatch("dataset arrays live on different grids")

    @property
    def n_inputs(self) -> int:
        return len(self.inputs)

    @property
    def max_order(self) -> int:
        return 3 if self.third else 2 if self.second else 1

    @property
    def third_indices(self) -> list:
        return sorted({k for key in self.third for k in key})

    def to_dict(self) -> dict:
        return {
            "grid": self.grid.header(),
            "family": self.family,
            "eps": self.eps,
            "method": self.method,
            "noise": self.noise,
            "seed": self.seed,
            "f0": self.f0.values.tolist(),
            "inputs": [f.values.tolist() for f in self.inputs],
            "first": [f.values.tolist() for f in self.first],
            "second": {_key(k): v.values.tolist() for k, v in sorted(self.second.items())},
            "third": {_key(k): v.values.tolist() for k, v in sorted(self.third.items())},
        }

    @classmethod
    def from_dict(cls, data: dict) -> DNDataset:
        g = Grid2D.from_header(data["grid"])

        def bf(v):
            return BoundaryField(g, np.asarray(v, dtype=float))

        return cls(
            grid=g,
            f0=bf(data["f0"]),
            inputs=[bf(v) for v in data["inputs"]],
            first=[bf(v) for v in data["first"]],
            second={_unkey(k): bf(v) for k, v in data.get("second", {}).items()},
            third={_unkey(k): bf(v) for k, v in data.get("third", {}).items()},
            family=data.get("family", {}),
            eps=data.get("eps"),
            method=data.get("method", DIRECT),
            noise=float(data.get("noise", 0.0)),
            seed=data.get("seed"),
        )

    def save(self, path) -> None:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, sort_keys=True)

    @classmethod
    def load(cls, path) -> DNDataset:
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


@dataclass(eq=False)
class ReconstructionResult:
    """Recovered fields with the data-residual log and diagnostics."""

    fields: dict
    residual_history: list = field(default_factory=list)
    alpha_reg: float | None = None
    errors: dict = field(default_factory=dict)
    info: dict = field(default_factory=dict)

    def __getitem__(self, name) -> Field:
        return self.fields[name]

    def compare(self, truth: dict) -> dict:
        """Fill ``errors`` with relative L2 errors against the supplied truth fields."""
        for name, t in truth.items():
            if name in self.fields:
                self.errors[name] = relative_error(self.fields[name], t)
        return self.errors

    def to_dict(self) -> dict:
        return {
            "grid": next(iter(self.fields.values())).grid.header() if self.fields else None,
            "fields": {k: v.values.ravel().tolist() for k, v in self.fields.items()},
            "residual_history": [float(r) for r in self.residual_history],
            "alpha_reg": self.alpha_reg,
            "errors": {k: float(v) for k, v in self.errors.items()},
            "info": self.info,
        }

    @classmethod
    def from_dict(cls, data: dict) -> ReconstructionResult:
        g = Grid2D.from_header(data["grid"])
        return cls(
            fields={k: Field(g, np.asarray(v, dtype=float)) for k, v in data["fields"].items()},
            residual_history=list(data.get("residual_history", [])),
            alpha_reg=data.get("alpha_reg"),
            errors=dict(data.get("errors", {})),
            info=dict(data.get("info", {})),
        )


def relative_error(estimate: Field, truth: Field) -> float:
    """Relative discrete L2 error over the interior nodes."""
    if estimate.grid != truth.grid:
        raise GridMismatch("fields live on different grids")
    e = estimate.interior - truth.interior
    t = truth.interior
    nt = np.linalg.norm(t)
    return float(np.linalg.norm(e) / nt) if nt > 0 else float(np.linalg.norm(e))


# dataset generation ---------------------------------------------------------------


def _add_noise(fields, level, rng):
    if level <= 0:
        return fields
    return [BoundaryField(f.grid, f.values * (1.0 + level * rng.standard_normal(f.values.shape))) for f in fields]


def build_dataset(
    s: Scenario,
    inputs,
    order: int = 1,
    *,
    method: str = DIRECT,
    eps: float = 1e-2,
    noise: float = 0.0,
    seed: int = 0,
    n_third: int = 8,
    family: dict | None = None,
) -> DNDataset:
    """Synthetic DN data of ``s`` around its base datum.

    ``method`` selects direct solves of the linearised hierarchy or divided
    differences of the nonlinear DN map.  Multiplicative Gaussian noise
    ``d (1 + noise * N(0, 1))`` is applied entrywise with a seeded generator.
    """
    if order not in (1, 2, 3):
        raise ValueError("order must be 1, 2 or 3")
    if method not in (DIRECT, DIVIDED):
        raise ValueError(f"unknown method {method!r}")
    if noise < 0:
        raise ValueError("noise level must be non-negative")
    inputs = list(inputs)
    n = len(inputs)
    u0, _ = solve(s)
    op = linear_operator(s, u0)
    T2 = Field(s.grid, s.a.derivative(2, u0.values))
    vs = [linearized_solve(s, u0, f, op) for f in inputs]

    def dn_direct(field_):
        return BoundaryField(s.grid, s.grid.normal_matrix @ field_.values.ravel())

    def dd(idx):
        return kth_divided_difference(s, s.f0, [inputs[i] for i in idx], eps, check_step=False, init=u0).value

    first = [dn_direct(v) if method == DIRECT else dd((i,)) for i, v in enumerate(vs)]
    second, third = {}, {}
    ws = {}
    if order >= 2:
        for i, j in combinations_with_replacement(range(n), 2):
            if method == DIRECT:
                ws[i, j] = second_order_solve(s, u0, vs[i], vs[j], op, T2)
                second[i, j] = dn_direct(ws[i, j])
            else:
                second[i, j] = dd((i, j))
    if order >= 3:
        m = min(n_third, n)
        for i, j, k in combinations_with_replacement(range(m), 3):
            if method == DIRECT:
                w = third_order_solve(s, u0, vs[i], vs[j], vs[k], ws[i, j], ws[i, k], ws[j, k], op)
                third[i, j, k] = dn_direct(w)
            else:
                third[i, j, k] = dd((i, j, k))
    rng = np.random.default_rng(seed)
    first = _add_noise(first, noise, rng)
    keys2 = sorted(second)
    second = dict(zip(keys2, _add_noise([second[k] for k in keys2], noise, rng)))
    keys3 = sorted(third)
    third = dict(zip(keys3, _add_noise([third[k] for k in keys3], noise, rng)))
    return DNDataset(
        grid=s.grid,
        f0=s.f0,
        inputs=inputs,
        first=first,
        second=second,
        third=third,
        family=dict(family or {}),
        eps=eps if method == DIVIDED else None,
        method=method,
        noise=float(noise),
        seed=seed,
    )


# first order: the potential -----------------------------------------------------------


def _gradient_penalty(grid: Grid2D) -> sp.csr_matrix:
    """Quadratic form ``q^T L q ~ int |grad q|^2`` on interior nodes (free ends)."""
    mx, my = grid.nx - 2, grid.ny - 2

    def diff(m):
        return sp.diags([-np.ones(m - 1), np.ones(m - 1)], [0, 1], shape=(m - 1, m))

    Dx = sp.kron(diff(mx), sp.identity(my))
    Dy = sp.kron(sp.identity(mx), diff(my))
    return ((grid.hy / grid.hx) * (Dx.T @ Dx) + (grid.hx / grid.hy) * (Dy.T @ Dy)).tocsr()


PENALTIES = ("curvature", "gradient")


def _penalty_matrix(grid: Grid2D, kind: str) -> sp.csr_matrix:
    """``gradient``: ``~ int |grad q|^2``; ``curvature``: ``~ int |Lap_N q|^2`` (free-end Laplacian)."""
    G = _gradient_penalty(grid)
    if kind == "gradient":
        return G
    if kind == "curvature":
        return (G @ G).tocsr() / (grid.hx * grid.hy)
    raise ValueError(f"unknown penalty {kind!r}; expected one of {PENALTIES}")


WEIGHTINGS = ("noise", "uniform")


def _misfit_weights(grid: Grid2D, data: np.ndarray, weighting: str, floor: float = 0.1) -> np.ndarray:
    """Per-entry weights of the data misfit, shape ``(n_boundary, n_inputs)``.

    ``uniform`` is the boundary trapezoid rule.  ``noise`` divides it by the
    expected variance of multiplicative noise, ``d^2``, floored at
    ``floor * rms(d_i)`` per datum so that near-zero entries stay bounded;
    ``rms(d_i)`` itself is floored at ``1e-6`` times the largest one.
    """
    w = grid.boundary_weights[:, None]
    if weighting == "uniform":
        return np.repeat(w, data.shape[1], axis=1)
    if weighting != "noise":
        raise ValueError(f"unknown weighting {weighting!r}; expected one of {WEIGHTINGS}")
    rms = np.sqrt(np.sum(w * data**2, axis=0) / np.sum(w))
    top = rms.max() if rms.size and rms.max() > 0 else 1.0
    rms = np.maximum(rms, 1e-6 * top)  # round-off data (e.g. a constant input with Q = 0)
    return w / (data**2 + (floor * rms[None, :]) ** 2)


class _PotentialProblem:
    """Weighted output least squares for ``Q -> d_nu v_i[Q]``.

    Objective ``sum_i ||d_nu v_i[Q] - d_i||^2_{W_i} + alpha s q^T L q`` with
    L the gradient or curvature penalty and ``s = tr(J0^T J0) / tr(L)`` the
    sensitivity scale of the probe family at ``Q = 0``, which makes ``alpha``
    dimensionless.
    """

    def __init__(self, d: DNDataset, alpha: float, weighting: str = "noise", penalty: str = "curvature"):
        g = d.grid
        self.grid = g
        self.F = np.column_stack([f.values for f in d.inputs])  # nb x n
        self.data = np.column_stack([f.values for f in d.first])
        self.W = _misfit_weights(g, self.data, weighting)
        self.rhs = -(g.boundary_coupling @ self.F)  # n_int x n
        self.bnd = g.normal_boundary @ self.F
        self.L = _penalty_matrix(g, penalty)
        op0 = self.factor(np.zeros(g.n_interior))
        V0 = op0.solve_interior(self.rhs)
        Z0 = op0.normal_adjoint(np.identity(g.n_boundary))
        self.scale = float(np.sum((Z0**2 @ self.W) * V0**2) / self.L.diagonal().sum())
        self.alpha = alpha
        self.penalty = alpha * self.scale

    def factor(self, q):
        try:
            return SchrodingerOperator(self.grid, q)
        except SingularJacobian as exc:
            raise IllPosed(f"linearised operator is singular: {exc}") from exc

    def evaluate(self, q, op=None):
        op = op or self.factor(q)
        V = op.solve_interior(self.rhs)
        r = self.grid.normal_interior @ V + self.bnd - self.data
        misfit = float(np.sum(self.W * r**2))
        value = misfit + self.penalty * float(q @ (self.L @ q))
        return value, misfit, r, V, op

    def gradient(self, q, r, V, op):
        # one adjoint solve per datum
        Z = op.normal_adjoint(self.W * r)
        return -2.0 * np.sum(V * Z, axis=1) + 2.0 * self.penalty * (self.L @ q)

    def jacobian(self, V, op):
        """Rows ordered datum-major, scaled by the square-root weights."""
        Z = op.normal_adjoint(np.identity(self.grid.n_boundary))  # n_int x nb
        sw = np.sqrt(self.W)
        return np.vstack([-(sw[:, i][:, None] * Z.T) * V[:, i][None, :] for i in range(V.shape[1])])

    def noise_level(self, level: float) -> float:
        """Expected weighted misfit of the exact model under multiplicative noise of the given level."""
        return float(level**2 * np.sum(self.W * self.data**2))


def _interior_vector(q, grid):
    if q is None:
        return np.zeros(grid.n_interior)
    if isinstance(q, Field):
        return q.interior.ravel().copy()
    q = np.asarray(q, dtype=float)
    return q[1:-1, 1:-1].ravel().copy() if q.shape == grid.shape else q.ravel().copy()


def potential_objective(
    d: DNDataset, Q, alpha_reg: float = DEFAULT_ALPHA, weighting: str = "noise", penalty: str = "curvature"
) -> tuple[float, np.ndarray]:
    """Objective of ``recover_potential`` at Q and its adjoint gradient.

    The gradient is taken with respect to the interior nodal values of Q.
    """
    prob = _PotentialProblem(d, alpha_reg, weighting, penalty)
    q = _interior_vector(Q, d.grid)
    value, _, r, V, op = prob.evaluate(q)
    return value, prob.gradient(q, r, V, op)


def recover_potential(
    d: DNDataset,
    alpha_reg: float = DEFAULT_ALPHA,
    *,
    init=None,
    weighting: str = "noise",
    penalty: str = "curvature",
    max_iter: int = 40,
    rtol: float = 1e-6,
    check_eigen: bool = True,
    truth: Field | None = None,
) -> ReconstructionResult:
    """Gauss-Newton output least squares for the potential Q.

    Levenberg damping guards each step; a step is accepted only if the
    objective decreases.  Stops when the relative data residual drops below
    ``rtol``, when the predicted decrease falls to round-off, or after
    ``max_iter`` iterations.

    Raises
    ------
    Diverged
        Ten consecutive rejected steps.
    IllPosed
        The linearised operator (numerically) has a zero eigenvalue along
        the iteration.
    """
    if d.n_inputs < 8:
        raise ValueError("recover_potential needs at least 8 input/output pairs")
    if alpha_reg <= 0:
        raise ValueError("alpha_reg must be positive")
    g = d.grid
    prob = _PotentialProblem(d, alpha_reg, weighting, penalty)
    Ld = prob.L.toarray()
    q = _interior_vector(init, g)
    data_norm = max(float(np.sum(prob.W * prob.data**2)), 1e-300)
    value, misfit, r, V, op = prob.evaluate(q)
    history = [value]
    mu = 0.0
    rejected = 0
    iterations = 0
    reason = "max_iter"
    for _ in range(max_iter):
        if np.sqrt(misfit / data_norm) < rtol:
            reason = "rtol"
            break
        J = prob.jacobian(V, op)
        res = (np.sqrt(prob.W) * r).T.ravel()
        H = J.T @ J + prob.penalty * Ld
        grad = J.T @ res + prob.penalty * (Ld @ q)
        ref = np.trace(H) / H.shape[0]
        step = None
        while True:
            step = -sla.solve(H + mu * ref * np.identity(H.shape[0]), grad, assume_a="pos")
            predicted = -(grad @ step + 0.5 * step @ (H @ step))
            if predicted <= 1e-13 * value:
                step = None
                break
            try:
                trial = prob.evaluate(q + step)
            except (IllPosed, SingularJacobian):
                trial = None
            if trial is not None and trial[0] < value:
                break
            mu = max(4.0 * mu, 1e-8)
            rejected += 1
            if rejected >= 10:
                raise Diverged(f"ten consecutive rejected steps at objective {value:.3e}")
        if step is None:
            reason = "stationary"
            break
        q = q + step
        value, misfit, r, V, op = trial
        mu /= 3.0
        rejected = 0
        iterations += 1
        if check_eigen:
            lam = op.smallest_eigenvalue()
            if abs(lam) < 1e-6:
                raise IllPosed(f"0 is (nearly) a Dirichlet eigenvalue along the iteration ({lam:.2e})")
        history.append(value)
        if history[-2] - value <= 1e-12 * history[-2]:
            reason = "stalled"
            break
    res = ReconstructionResult(
        fields={"Q": Field.from_interior(g, q)},
        residual_history=history,
        alpha_reg=alpha_reg,
        info={
            "iterations": iterations,
            "stop": reason,
            "misfit": misfit,
            "relative_residual": float(np.sqrt(misfit / data_norm)),
            "weighting": weighting,
            "penalty": penalty,
            "penalty_scale": prob.scale,
        },
    )
    if truth is not None:
        res.compare({"Q": truth})
    return res


def select_alpha(
    d: DNDataset,
    alphas=None,
    tau: float = 1.0,
    truth: Field | None = None,
    **kw,
) -> ReconstructionResult:
    """Grid search over ``alphas`` by the discrepancy principle.

    The default grid is ``1e-4 .. 1`` in five log steps; ``alpha = 1`` already
    gives the penalty the same Hessian trace as the data term.  The expected misfit of the exact model under the dataset's declared
    noise level is ``delta^2``; the largest alpha whose weighted misfit stays
    below ``tau^2 delta^2`` wins (the smallest alpha if none does).
    """
    alphas = sorted(np.logspace(-4, 0, 5) if alphas is None else alphas)
    prob = _PotentialProblem(d, 1.0, kw.get("weighting", "noise"), kw.get("penalty", "curvature"))
    delta2 = prob.noise_level(d.noise)
    runs = [(a, recover_potential(d, a, truth=truth, **kw)) for a in alphas]
    ok = [(a, res) for a, res in runs if res.info["misfit"] <= tau**2 * delta2]
    chosen = max(ok, key=lambda run: run[0])[1] if ok else runs[0][1]
    chosen.info["alpha_search"] = [
        {"alpha": float(a), "misfit": res.info["misfit"], **({"error": res.errors["Q"]} if res.errors else {})}
        for a, res in runs
    ]
    chosen.info["noise_misfit"] = delta2
    return chosen


# higher orders: linear Tikhonov problems ------------------------------------------------


def _h1_penalty(grid: Grid2D) -> np.ndarray:
    mass = grid.hx * grid.hy * np.identity(grid.n_interior)
    return _gradient_penalty(grid).toarray() + mass


def _tikhonov(M, b, alpha, grid, what):
    """Solve ``min ||M c - b||^2 + alpha s ||c||_{H1}^2`` with ``s = tr(M^T M) / tr(R)``."""
    R = _h1_penalty(grid)
    MtM = M.T @ M
    scale = np.trace(MtM) / np.trace(R)
    A = MtM + alpha * scale * R
    cond = float(np.linalg.cond(A))
    coverage = np.sqrt(np.maximum(np.diag(MtM), 0.0))
    weak = np.flatnonzero(coverage < 1e-6 * max(coverage.max(), 1e-300))
    mx = grid.ny - 2
    unconstrained = [(int(k // mx) + 1, int(k % mx) + 1) for k in weak]
    if not np.isfinite(cond) or cond > CONDITION_LIMIT:
        raise RankDeficient(
            f"{what}: regularised normal matrix has condition {cond:.2e} > {CONDITION_LIMIT:.0e}",
            condition=cond,
            unconstrained=unconstrained,
        )
    c = sla.solve(A, M.T @ b, assume_a="pos")
    misfit = float(np.linalg.norm(M @ c - b) / max(np.linalg.norm(b), 1e-300))
    return c, {"condition": cond, "unconstrained": unconstrained, "relative_misfit": misfit, "rows": int(M.shape[0])}


def _probe_fields(d: DNDataset, Q):
    g = d.grid
    op = SchrodingerOperator(g, Q)
    F = np.column_stack([f.values for f in d.inputs])
    V = op.solve_interior(-(g.boundary_coupling @ F))  # linearised solutions, interior part
    Z = op.normal_adjoint(g.boundary_weights[:, None] * F)  # discrete test fields
    return op, V, Z


def recover_second_field(
    d: DNDataset, Q: Field, alpha_reg: float = DEFAULT_ALPHA, truth: Field | None = None
) -> ReconstructionResult:
    """Tikhonov recovery of ``T2`` from the second-order forms.

    One row per pair ``i <= j`` and test input ``m``:
    ``<f_m, d_nu w_ij>_W = -sum_x z_m v_i v_j T2``.
    """
    if not d.second:
        raise ValueError("dataset has no second-order forms")
    g = d.grid
    _, V, Z = _probe_fields(d, Q)
    W = g.boundary_weights
    Fb = np.column_stack([f.values for f in d.inputs])
    rows, rhs = [], []
    for (i, j), form in sorted(d.second.items()):
        prod = V[:, i] * V[:, j]
        rows.append(-(Z * prod[:, None]).T)
        rhs.append(Fb.T @ (W * form.values))
    M = np.vstack(rows)
    b = np.concatenate(rhs)
    c, info = _tikhonov(M, b, alpha_reg, g, "second-order field")
    res = ReconstructionResult(
        fields={"T2": Field.from_interior(g, c)},
        residual_history=[info["relative_misfit"]],
        alpha_reg=alpha_reg,
        info=info,
    )
    if truth is not None:
        res.compare({"T2": truth})
    return res


def recover_third_field(
    d: DNDataset, Q: Field, T2: Field, alpha_reg: float = DEFAULT_ALPHA, truth: Field | None = None
) -> ReconstructionResult:
    """Tikhonov recovery of ``T3`` from the third-order forms.

    The contribution ``T2 (w_ij v_k + w_ik v_j + w_jk v_i)`` of the known
    second field is recomputed from Q and T2 and subtracted first.
    """
    if not d.third:
        raise ValueError("dataset has no third-order forms")
    g = d.grid
    op, V, Z = _probe_fields(d, Q)
    W = g.boundary_weights
    Fb = np.column_stack([f.values for f in d.inputs])
    t2 = T2.interior.ravel()
    idx = d.third_indices
    w = {}
    for i, j in combinations_with_replacement(idx, 2):
        w[i, j] = op.solve_interior(-(t2 * V[:, i] * V[:, j]))
    rows, rhs = [], []
    for (i, j, k), form in sorted(d.third.items()):
        known = t2 * (w[i, j] * V[:, k] + w[i, k] * V[:, j] + w[j, k] * V[:, i])
        prod = V[:, i] * V[:, j] * V[:, k]
        rows.append(-(Z * prod[:, None]).T)
        rhs.append(Fb.T @ (W * form.values) + Z.T @ known)
    M = np.vstack(rows)
    b = np.concatenate(rhs)
    c, info = _tikhonov(M, b, alpha_reg, g, "third-order field")
    res = ReconstructionResult(
        fields={"T3": Field.from_interior(g, c)},
        residual_history=[info["relative_misfit"]],
        alpha_reg=alpha_reg,
        info=info,
    )
    if truth is not None:
        res.compare({"T3": truth})
    return res


# gauge breaking -------------------------------------------------------------------------


def _pin_trace(u: Field, f0: BoundaryField | None) -> Field:
    return u if f0 is None else u.with_trace(f0)


def smooth_base_state(u0: Field, f0: BoundaryField | None = None, beta="auto", order: int = 2) -> Field:
    """Spectrally filtered copy of ``u0`` with its trace kept fixed.

    The interior deviation from the discrete harmonic lift of the trace is
    expanded in Dirichlet sine modes and damped by ``1 / (1 + beta lam^order)``
    (``lam`` the Laplacian eigenvalues normalised by the smallest).  With
    ``beta="auto"`` the noise floor is the mean squared coefficient over modes
    with either index above half the band, and ``beta`` is the largest value
    on ``logspace(-10, 0, 21)`` whose filtered-out energy stays below it.
    Used only to stabilise the Laplacian in the source estimate.
    """
    g = u0.grid
    trace = u0.trace() if f0 is None else f0
    lift = harmonic_extension(g, trace)
    m, n = g.nx - 2, g.ny - 2
    r = (u0.values - lift.values)[1:-1, 1:-1]
    c = dstn(r, type=1, norm="ortho")
    lx = np.sin(np.pi * np.arange(1, m + 1) / (2 * (m + 1))) ** 2 / g.hx**2
    ly = np.sin(np.pi * np.arange(1, n + 1) / (2 * (n + 1))) ** 2 / g.hy**2
    lam = lx[:, None] + ly[None, :]
    lam = (lam / lam.min()) ** order
    if beta == "auto":
        kx, ky = np.meshgrid(np.arange(1, m + 1), np.arange(1, n + 1), indexing="ij")
        floor = r.size * np.mean(c[(kx > m / 2) | (ky > n / 2)] ** 2)
        beta = 0.0
        for b in np.logspace(-10, 0, 21):
            if np.sum((b * lam / (1 + b * lam) * c) ** 2) > floor:
                break
            beta = b
    if beta < 0:
        raise ValueError("beta must be non-negative")
    rs = idstn(c / (1 + beta * lam), type=1, norm="ortho")
    return Field.from_interior(g, rs + lift.values[1:-1, 1:-1], trace)


def _source(u0: Field, a: Nonlinearity, smoothing=None) -> Field:
    """``F = Lap_h u0 + a(x, u0)`` at interior nodes, boundary copied from the nearest interior node.

    ``smoothing`` (a beta or ``"auto"``) filters u0 first, see ``smooth_base_state``.
    """
    if smoothing is not None:
        u0 = smooth_base_state(u0, beta=smoothing)
    F = laplacian(u0) + Field(u0.grid, a.value(u0.values))
    return Field.from_interior(u0.grid, F.interior)


def _pivot_check(pivot: np.ndarray, threshold: float, what: str):
    bad = np.argwhere(np.abs(pivot) < threshold)
    if bad.size:
        raise DegeneratePivot(
            f"{what}: |pivot| below {threshold:.1e} at {len(bad)} node(s)", nodes=[tuple(map(int, b)) for b in bad]
        )


def break_gauge_polynomial(
    T,
    known: Field,
    degree: int | None = None,
    f0: BoundaryField | None = None,
    threshold: float = 1e-8,
    smoothing=None,
) -> tuple[list[Field], Field, Field]:
    """Coefficients, base solution and source from Taylor fields and a known ``a^(N-1)``.

    ``T = [T_1, ..., T_N]``; ``T_k / k! = sum_{m>=k} C(m, k) a^(m) u0^(m-k)``.
    With ``f0`` the trace of u0 is set to the known base datum.  ``smoothing``
    is passed to the source estimate (None keeps the plain nodal Laplacian).

    Returns
    -------
    coefficients : list of Field
        ``a^(1), ..., a^(N)``.
    u0 : Field
    F : Field
    """
    T = list(T)
    N = len(T) if degree is None else degree
    if N < 1 or len(T) < N:
        raise ValueError(f"need Taylor fields T_1..T_{N}")
    if N == 1:
        raise ValueError("degree 1 has no second-highest coefficient to anchor the gauge")
    g = T[0].grid
    _pivot_check(T[N - 1].values, threshold * factorial(N), "top Taylor field")
    a = [None] * (N + 1)
    a[N] = T[N - 1] / factorial(N)
    u0 = (T[N - 2] / factorial(N - 1) - known) / (N * a[N])
    u0 = _pin_trace(u0, f0)
    for k in range(N - 1, 0, -1):
        acc = T[k - 1] / factorial(k)
        for m in range(k + 1, N + 1):
            acc = acc - comb(m, k) * a[m] * u0 ** (m - k)
        a[k] = acc
    a[N - 1] = known  # exact by construction; avoids round-off drift
    coeffs = [a[k] for k in range(1, N + 1)]
    return coeffs, u0, _source(u0, Nonlinearity.polynomial(*coeffs), smoothing)


def break_gauge_exp_u(
    T1: Field, T2: Field, f0: BoundaryField | None = None, threshold: float = 1e-8, smoothing=None
) -> tuple[Field, Field, Field]:
    """Invert ``T1 = q (u0 + 1) e^u0``, ``T2 = q (u0 + 2) e^u0`` for (q, u0) and F."""
    if T1.grid != T2.grid:
        raise GridMismatch("Taylor fields live on different grids")
    diff = T2 - T1  # q e^u0
    _pivot_check(diff.values, threshold, "T2 - T1")
    u0 = (2.0 * T1 - T2) / diff
    q = diff * (-u0).apply(np.exp)
    u0 = _pin_trace(u0, f0)
    return q, u0, _source(u0, Nonlinearity.exp_times_u(q), smoothing)


def _unwrap(theta: np.ndarray) -> np.ndarray:
    """Breadth-first 2pi unwrapping from the first node."""
    nx, ny = theta.shape
    phi = np.full(theta.shape, np.nan)
    phi[0, 0] = theta[0, 0]
    queue = deque([(0, 0)])
    while queue:
        i, j = queue.popleft()
        for a, b in ((i + 1, j), (i - 1, j), (i, j + 1), (i, j - 1)):
            if 0 <= a < nx and 0 <= b < ny and np.isnan(phi[a, b]):
                jump = np.angle(np.exp(1j * (theta[a, b] - theta[i, j])))
                phi[a, b] = phi[i, j] + jump
                queue.append((a, b))
    if np.max(np.abs(np.diff(phi, axis=0)), initial=0.0) >= np.pi or np.max(
        np.abs(np.diff(phi, axis=1)), initial=0.0
    ) >= np.pi:
        raise UnwrapConflict("unwrapped phase has adjacent jumps of at least pi")
    return phi


def recover_sine_gordon(
    T1: Field, T2: Field, f0: BoundaryField, threshold: float = 1e-8, smoothing=None
) -> tuple[Field, Field, Field]:
    """Invert ``T1 = q cos u0``, ``T2 = -q sin u0`` using the base datum as branch anchor.

    The phase ``atan2(-T2, T1)`` gives u0 up to multiples of pi (an odd
    multiple flips the sign of q).  It is unwrapped over the interior, the
    multiple is fixed by matching f0 against the phase on the first interior
    ring, and q follows from ``T1 / cos u0`` (or ``-T2 / sin u0`` where
    ``|cos u0| < 1e-3``).
    """
    g = T1.grid
    if T2.grid != g or f0.grid != g:
        raise GridMismatch("inputs live on different grids")
    t1, t2 = T1.values[1:-1, 1:-1], T2.values[1:-1, 1:-1]
    _pivot_check(t1**2 + t2**2, threshold, "T1^2 + T2^2")
    phi = Field.from_interior(g, _unwrap(np.arctan2(-t2, t1)))
    # boundary phase comes from the nearest interior node
    offsets = (f0.values - phi.trace().values) / np.pi
    votes = np.rint(offsets).astype(int)
    n, count = np.unique(votes, return_counts=True)
    best = n[np.argmax(count)]
    if count.max() < 0.9 * votes.size or np.mean(np.abs(offsets - best)) > 0.25:
        raise BranchAmbiguous("boundary datum does not single out a branch of the phase")
    u0 = (phi + best * np.pi).with_trace(f0)
    c, s = np.cos(u0.values), np.sin(u0.values)
    with np.errstate(divide="ignore", invalid="ignore"):
        qv = np.where(np.abs(c) >= 1e-3, T1.values / c, -T2.values / s)
    q = Field.from_interior(g, qv[1:-1, 1:-1])
    return q, u0, _source(u0, Nonlinearity.sine_gordon(q), smoothing)
