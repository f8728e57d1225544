"""
Gauge transformations and their numerical verification.

A gauge function psi has zero Cauchy data on the boundary.  For the
polynomial family the pair (a1, F1) obtained from (a2, F2) by

    a1^(j) = sum_{m=j}^N C(m, j) a2^(m) psi^(m-j)
    F1     = F2 - Lap psi - sum_k a2^(k) psi^k

has the same DN map, with solutions related by u2 = u1 + psi.  For
``q e^z`` the transform is q1 = q2 e^psi, F1 = F2 - Lap psi.

On the grid the invariance holds up to the truncation error of Lap_h psi,
so DN discrepancies of twins built with the exact Laplacian of psi decay
like h^2.  Twins built with the discrete Laplacian agree to round-off.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from math import comb
from typing import Callable

import numpy as np

from .errors import BranchAmbiguous, DegreeMismatch, GaugeLabError, GridMismatch, InvariantViolation, WrongVariant
from .forward import Scenario, solve
from .grid import BoundaryField, Field, Grid2D, bump_laplacian, integrate, laplacian, make_bump, normal_derivative
from .nonlinearity import Nonlinearity

logger = logging.getLogger(__name__)

__all__ = [
    "GaugeFunction",
    "apply_polynomial_gauge",
    "apply_exponential_gauge",
    "gauge_twin",
    "GaugeReport",
    "verify_gauge_equivalence",
    "RefinementStudy",
    "refinement_study",
    "extract_gauge",
    "check_gauge_relations",
    "SineGordonReport",
    "sine_gordon_uniqueness_check",
    "IdentityCertificate",
    "identity_certificate",
]

GAUGE_BUMP_POWER = 6


class GaugeFunction:
    """A grid function psi with zero trace and zero normal derivative.

    Parameters
    ----------
    psi : Field
    lap : Field, optional
        Exact Laplacian of the underlying smooth psi.  When absent the
        five-point Laplacian is used.
    atol : float
        Tolerance for the Cauchy-data check.
    """

    __slots__ = ("psi", "_lap")

    def __init__(self, psi: Field, lap: Field | None = None, atol: float = 1e-12):
        if lap is not None and lap.grid != psi.grid:
            raise GridMismatch("psi and its Laplacian live on different grids")
        trace = np.max(np.abs(psi.trace().values))
        flux = np.max(np.abs(normal_derivative(psi).values))
        if trace > atol or flux > atol:
            raise InvariantViolation(
                f"gauge function needs zero Cauchy data (trace {trace:.2e}, normal derivative {flux:.2e})"
            )
        self.psi = psi
        self._lap = lap

    @classmethod
    def zero(cls, grid: Grid2D) -> GaugeFunction:
        return cls(Field.zeros(grid), Field.zeros(grid))

    @classmethod
    def bump(cls, grid: Grid2D, center, radius: float, amplitude: float, power: int = GAUGE_BUMP_POWER) -> GaugeFunction:
        """Compactly supported bump carrying its exact Laplacian."""
        return cls(
            make_bump(grid, center, radius, amplitude, power),
            bump_laplacian(grid, center, radius, amplitude, power),
        )

    @property
    def grid(self) -> Grid2D:
        return self.psi.grid

    @property
    def has_exact_laplacian(self) -> bool:
        return self._lap is not None

    def laplacian(self, exact: bool = True) -> Field:
        if exact and self._lap is not None:
            return self._lap
        return laplacian(self.psi)

    def __neg__(self) -> GaugeFunction:
        return GaugeFunction(-self.psi, None if self._lap is None else -self._lap)

    def __add__(self, other: GaugeFunction) -> GaugeFunction:
        lap = self._lap + other._lap if self._lap is not None and other._lap is not None else None
        return GaugeFunction(self.psi + other.psi, lap)

    def __repr__(self):
        return f"GaugeFunction(max|psi|={self.psi.max_abs():.3g}, exact_laplacian={self.has_exact_laplacian})"


def _check_grid(psi: GaugeFunction, *fields):
    if any(f.grid != psi.grid for f in fields):
        raise GridMismatch("gauge function and coefficients live on different grids")


def _polynomial_coefficients(a2: Nonlinearity, psi: Field) -> list[Field]:
    N = a2.degree
    c = [a2.coefficient(m) for m in range(1, N + 1)]
    out = []
    for j in range(1, N + 1):
        acc = Field.zeros(psi.grid)
        for m in range(j, N + 1):
            acc = acc + comb(m, j) * c[m - 1] * psi ** (m - j)
        out.append(acc)
    return out


def _polynomial_value(a2: Nonlinearity, psi: Field) -> Field:
    return Field(psi.grid, a2.value(psi.values))


def apply_polynomial_gauge(
    a2: Nonlinearity, F2: Field, psi: GaugeFunction, exact_laplacian: bool = True
) -> tuple[Nonlinearity, Field]:
    """Transform a polynomial pair (a2, F2) by psi; the top coefficient is unchanged."""
    if a2.kind != "polynomial":
        raise WrongVariant("apply_polynomial_gauge needs a polynomial nonlinearity")
    _check_grid(psi, F2, a2.coefficients[0])
    a1 = Nonlinearity.polynomial(*_polynomial_coefficients(a2, psi.psi))
    F1 = F2 - psi.laplacian(exact_laplacian) - _polynomial_value(a2, psi.psi)
    return a1, F1


def apply_exponential_gauge(
    q2: Field, F2: Field, psi: GaugeFunction, exact_laplacian: bool = True
) -> tuple[Field, Field]:
    """``q1 = q2 e^psi``, ``F1 = F2 - Lap psi``."""
    _check_grid(psi, q2, F2)
    return q2 * psi.psi.apply(np.exp), F2 - psi.laplacian(exact_laplacian)


def gauge_twin(s2: Scenario, psi: GaugeFunction, exact_laplacian: bool = True) -> Scenario:
    """Scenario s1 whose DN map equals that of ``s2`` (up to the Laplacian of psi)."""
    if s2.a.kind == "polynomial":
        a1, F1 = apply_polynomial_gauge(s2.a, s2.F, psi, exact_laplacian)
    elif s2.a.kind == "exponential":
        q1, F1 = apply_exponential_gauge(s2.a.q, s2.F, psi, exact_laplacian)
        a1 = Nonlinearity.exponential(q1)
    else:
        raise WrongVariant(f"{s2.a.kind} nonlinearities have no explicit gauge transform")
    return Scenario(a1, F1, s2.f0)


# DN-map comparison -------------------------------------------------------------


@dataclass
class GaugeReport:
    """Per-datum DN discrepancies ``max |Lambda_1 f - Lambda_2 f|``."""

    discrepancies: list = field(default_factory=list)
    interior: list = field(default_factory=list)
    failures: dict = field(default_factory=dict)

    @property
    def max_discrepancy(self) -> float:
        vals = [d for d in self.discrepancies if np.isfinite(d)]
        return max(vals) if vals else np.nan

    @property
    def max_interior(self) -> float:
        vals = [d for d in self.interior if np.isfinite(d)]
        return max(vals) if vals else np.nan

    def to_dict(self) -> dict:
        return {
            "discrepancies": list(map(float, self.discrepancies)),
            "interior": list(map(float, self.interior)),
            "failures": {str(k): v for k, v in self.failures.items()},
        }


def verify_gauge_equivalence(
    s1: Scenario, s2: Scenario, test_data, psi: GaugeFunction | None = None
) -> GaugeReport:
    """Compare the DN maps of two scenarios on each Dirichlet datum.

    When ``psi`` is given the interior relation ``u2 = u1 + psi`` is checked
    as well.  A failed solve marks that datum (NaN entries plus a message in
    ``failures``) without aborting the batch.
    """
    if s1.grid != s2.grid:
        raise GridMismatch("scenarios live on different grids")
    rep = GaugeReport()
    for idx, f in enumerate(test_data):
        try:
            u1, _ = solve(s1, f)
            u2, _ = solve(s2, f)
        except GaugeLabError as exc:
            rep.discrepancies.append(np.nan)
            rep.interior.append(np.nan)
            rep.failures[idx] = f"{type(exc).__name__}: {exc}"
            continue
        rep.discrepancies.append(float(np.max(np.abs(normal_derivative(u1).values - normal_derivative(u2).values))))
        rep.interior.append(float((u2 - u1 - psi.psi).max_abs()) if psi is not None else np.nan)
    return rep


@dataclass
class RefinementStudy:
    """Discrepancies on a sequence of grids and the ratios between successive grids."""

    sizes: list
    discrepancies: list
    reports: list = field(default_factory=list)

    @property
    def ratios(self) -> list:
        d = self.discrepancies
        return [d[i] / d[i + 1] if d[i + 1] > 0 else np.inf for i in range(len(d) - 1)]

    def passes(self, low: float = 3.0, high: float = 5.0, floor: float = 1e-10) -> bool:
        """Ratios inside ``[low, high]``, or every discrepancy below ``floor``."""
        if all(d <= floor for d in self.discrepancies):
            return True
        return all(low <= r <= high for r in self.ratios)

    def rows(self) -> list[dict]:
        out = []
        for i, (n, d) in enumerate(zip(self.sizes, self.discrepancies)):
            out.append({"grid": n, "discrepancy": d, "ratio": self.ratios[i - 1] if i else None})
        return out


def refinement_study(build: Callable[[Grid2D], tuple], sizes) -> RefinementStudy:
    """Run ``verify_gauge_equivalence`` on square grids of the given sizes.

    ``build(grid)`` returns ``(s1, s2, test_data, psi_or_None)``.
    """
    sizes = list(sizes)
    if any(b <= a for a, b in zip(sizes, sizes[1:])):
        raise ValueError("grid sizes must be strictly increasing")
    reports, disc = [], []
    for n in sizes:
        s1, s2, data, psi = build(Grid2D.square(n))
        rep = verify_gauge_equivalence(s1, s2, data, psi)
        if rep.failures:
            raise GaugeLabError(f"grid {n}: {rep.failures}")
        reports.append(rep)
        disc.append(rep.max_discrepancy)
    return RefinementStudy(sizes, disc, reports)


# gauge extraction ---------------------------------------------------------------


def extract_gauge(s1: Scenario, s2: Scenario, f0: BoundaryField | None = None, tol: float | None = None) -> GaugeFunction:
    """``psi = u2 - u1`` for the base solutions at ``f0``.

    The traces agree exactly; the normal derivatives of psi must vanish to
    within ``tol`` (default ``10 h^2``), otherwise the scenarios are not
    gauge equivalent and ``InvariantViolation`` is raised.
    """
    if s1.grid != s2.grid:
        raise GridMismatch("scenarios live on different grids")
    f0 = s1.f0 if f0 is None else f0
    tol = 10.0 * s1.grid.h**2 if tol is None else tol
    u1, _ = solve(s1, f0)
    u2, _ = solve(s2, f0)
    psi = u2 - u1
    flux = float(np.max(np.abs(normal_derivative(psi).values)))
    if flux > tol:
        raise InvariantViolation(
            f"normal derivative of u2 - u1 reaches {flux:.3e} > {tol:.3e}: scenarios are not gauge equivalent"
        )
    return GaugeFunction(psi, atol=tol)


def check_gauge_relations(
    a1: Nonlinearity, a2: Nonlinearity, F1: Field, F2: Field, psi: GaugeFunction
) -> dict:
    """Residuals of the polynomial gauge relations.

    Returns ``{"coefficients": [r_1, ..., r_N], "source": r_F}`` with max-norm
    residuals; the source relation uses the five-point Laplacian of psi and is
    measured at interior nodes.
    """
    if a1.kind != "polynomial" or a2.kind != "polynomial":
        raise WrongVariant("check_gauge_relations needs polynomial nonlinearities")
    if a1.degree != a2.degree:
        raise DegreeMismatch(f"degrees differ: {a1.degree} vs {a2.degree}")
    _check_grid(psi, F1, F2, a1.coefficients[0], a2.coefficients[0])
    expected = _polynomial_coefficients(a2, psi.psi)
    coeff = [float((a1.coefficient(j) - e).max_abs()) for j, e in enumerate(expected, start=1)]
    src = F1 - (F2 - laplacian(psi.psi) - _polynomial_value(a2, psi.psi))
    return {"coefficients": coeff, "source": float(np.max(np.abs(src.interior)))}


# sine-Gordon ----------------------------------------------------------------------


@dataclass
class SineGordonReport:
    dn_discrepancy: float
    phase_residual: float
    q_residual: float
    F_residual: float
    boundary_sign: float
    candidate_trace: float | None
    tol: float
    reasons: list = field(default_factory=list)

    @property
    def equivalent(self) -> bool:
        return not self.reasons

    def to_dict(self) -> dict:
        out = dict(self.__dict__)
        out["equivalent"] = self.equivalent
        return out


def sine_gordon_uniqueness_check(
    s1: Scenario,
    s2: Scenario,
    f0: BoundaryField | None = None,
    psi_candidate: Field | None = None,
    tol: float | None = None,
) -> SineGordonReport:
    """Check whether two sine-Gordon scenarios coincide, as uniqueness predicts.

    Reports the DN discrepancy at ``f0``, ``max |e^{i psi} - 1|`` for
    ``psi = u2 - u1``, ``max |q1 - q2|`` and ``max |F1 - F2|`` (interior).
    The boundary relation ``q1 cos f0 = q2 cos f0`` fixes the relative sign of
    q; ``boundary_sign`` is the sign of ``sum q1 q2 cos^2 f0``.  A supplied
    ``psi_candidate`` with a nonzero trace (for instance psi = pi) is rejected.
    """
    if s1.a.kind != "sine_gordon" or s2.a.kind != "sine_gordon":
        raise WrongVariant("sine_gordon_uniqueness_check needs sine-Gordon scenarios")
    if s1.grid != s2.grid:
        raise GridMismatch("scenarios live on different grids")
    g = s1.grid
    f0 = s1.f0 if f0 is None else f0
    cosf = np.cos(f0.values)
    if np.max(np.abs(cosf)) < 1e-6:
        raise BranchAmbiguous("cos(f0) vanishes on the whole boundary; perturb f0")
    tol = 10.0 * g.h**2 if tol is None else tol
    u1, _ = solve(s1, f0)
    u2, _ = solve(s2, f0)
    psi = u2 - u1
    bi, bj = g.boundary_index
    q1, q2 = s1.a.q.values, s2.a.q.values
    sign = float(np.sign(np.sum(q1[bi, bj] * q2[bi, bj] * cosf**2)))
    rep = SineGordonReport(
        dn_discrepancy=float(np.max(np.abs(normal_derivative(u1).values - normal_derivative(u2).values))),
        phase_residual=float(np.max(np.abs(np.exp(1j * psi.values) - 1.0))),
        q_residual=float(np.max(np.abs(q1 - q2))),
        F_residual=float(np.max(np.abs((s1.F - s2.F).interior))),
        boundary_sign=sign,
        candidate_trace=None if psi_candidate is None else float(np.max(np.abs(psi_candidate.trace().values))),
        tol=tol,
    )
    if rep.candidate_trace is not None and rep.candidate_trace > tol:
        rep.reasons.append(f"candidate psi has nonzero boundary trace {rep.candidate_trace:.3g}")
    if sign < 0:
        rep.reasons.append("q1 cos f0 = q2 cos f0 fails on the boundary (opposite signs)")
    for name in ("dn_discrepancy", "phase_residual", "q_residual", "F_residual"):
        if getattr(rep, name) > tol:
            rep.reasons.append(f"{name} {getattr(rep, name):.3e} exceeds {tol:.3e}")
    return rep


@dataclass
class IdentityCertificate:
    """Second-order integral identity for a pair of scenarios.

    ``boundary[t]`` is ``<d_nu w1_ij - d_nu w2_ij, g_m>`` on the boundary for
    triple ``t = (i, j, m)``; ``interior[t]`` is the quadrature of
    ``(T2_1 v1_i v1_j - T2_2 v2_i v2_j) bv_m`` with ``bv_m`` solving
    ``(Lap + Q_1) bv = 0`` with trace ``g_m``.  Both vanish for an exactly
    gauge-equivalent pair.  ``scale`` is the largest ``|<d_nu w1_ij, g_m>|``.
    """

    triples: list
    boundary: np.ndarray
    interior: np.ndarray
    scale: float

    @property
    def max_boundary(self) -> float:
        return float(np.max(np.abs(self.boundary)))

    @property
    def max_interior(self) -> float:
        return float(np.max(np.abs(self.interior)))


def identity_certificate(s1: Scenario, s2: Scenario, inputs, triples) -> IdentityCertificate:
    """Evaluate the second-order identity over ``(i, j, m)`` index triples into ``inputs``."""
    from .linearize import linear_operator, linearized_solve, second_order_solve

    g = s1.grid
    if s2.grid != g:
        raise GridMismatch("scenarios live on different grids")
    inputs = list(inputs)
    triples = [tuple(int(k) for k in t) for t in triples]
    W = g.boundary_weights
    states = []
    for s in (s1, s2):
        u0, _ = solve(s)
        op = linear_operator(s, u0)
        T2 = Field(g, s.a.derivative(2, u0.values))
        v = {}
        for t in triples:
            for i in t[:2]:
                if i not in v:
                    v[i] = linearized_solve(s, u0, inputs[i], op)
        states.append((s, u0, op, T2, v))
    bv = {}
    for _, _, m in triples:
        if m not in bv:
            bv[m] = linearized_solve(s1, states[0][1], inputs[m], states[0][2])
    w = [{}, {}]
    bnd, inner, ref = [], [], 0.0
    for i, j, m in triples:
        pair = (min(i, j), max(i, j))
        dn = []
        for k, (s, u0, op, T2, v) in enumerate(states):
            if pair not in w[k]:
                w[k][pair] = second_order_solve(s, u0, v[i], v[j], op, T2)
            dn.append(normal_derivative(w[k][pair]).values)
        gm = inputs[m].values
        bnd.append(float(np.sum(W * (dn[0] - dn[1]) * gm)))
        ref = max(ref, abs(float(np.sum(W * dn[0] * gm))))
        (_, _, _, T21, v1), (_, _, _, T22, v2) = states
        diff = T21 * v1[i] * v1[j] - T22 * v2[i] * v2[j]
        inner.append(integrate(diff * bv[m]))
    return IdentityCertificate(triples, np.array(bnd), np.array(inner), ref)
