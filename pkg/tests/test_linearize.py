import numpy as np
import pytest

from gaugelab.errors import StepTooSmall
from gaugelab.forward import Scenario, harmonic_extension, solve
from gaugelab.grid import BoundaryField, Field, Grid2D, boundary_integrate, make_bump, normal_derivative
from gaugelab.linearize import (
    DIRECT,
    DIVIDED,
    MultilinearForm,
    boundary_family,
    direct_form,
    fourier_family,
    hat_family,
    kth_divided_difference,
    linear_operator,
    linearized_solve,
    second_order_solve,
    third_order_solve,
    verify_linearization,
)
from gaugelab.nonlinearity import Nonlinearity

from .conftest import quadratic_scenario


def scen(grid, kind="quadratic", sign=1.0):
    z = Field.zeros(grid)
    b = make_bump(grid, (0.5, 0.5), 0.3, 1.0)
    F = Field.from_function(grid, lambda x, y: 1 + x * y)
    f0 = BoundaryField.constant(grid, 0.2)
    if kind == "linear":
        a = Nonlinearity.polynomial(1.0 + b)
    elif kind == "quadratic":
        a = Nonlinearity.polynomial(b, sign * (1.0 + b))
    elif kind == "unit_quadratic":
        a = Nonlinearity.polynomial(z, Field.constant(grid, sign))
    elif kind == "cubic":
        a = Nonlinearity.polynomial(Field.constant(grid, 0.5), Field.constant(grid, 1.0), Field.constant(grid, -1.0))
    else:
        a = Nonlinearity.exponential(1.0 + b)
    return Scenario(a, F, f0)


@pytest.fixture(scope="module")
def g():
    return Grid2D.square(21)


@pytest.fixture(scope="module")
def data(g):
    return fourier_family(g, 5)


def test_zero_input_gives_zero(g):
    s = scen(g)
    u0 = solve(s)[0]
    assert linearized_solve(s, u0, BoundaryField.zeros(g)).max_abs() == 0.0


def test_laplace_reduces_to_harmonic_extension(g, data):
    s = Scenario(Nonlinearity.zero(g), Field.zeros(g), BoundaryField.zeros(g))
    u0 = solve(s)[0]
    for f in data:
        assert linearized_solve(s, u0, f).allclose(harmonic_extension(g, f), atol=1e-12)


def test_first_order_matches_central_difference(g, data):
    s = scen(g)
    u0 = solve(s)[0]
    f = data[2]
    v = linearized_solve(s, u0, f)
    errs = []
    for eps in (1e-1, 5e-2):
        d = (solve(s, s.f0 + eps * f)[0] - solve(s, s.f0 - eps * f)[0]) / (2 * eps)
        errs.append((d - v).max_abs())
    assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.05)


def test_second_order_linear_is_zero(g, data):
    s = scen(g, "linear")
    u0 = solve(s)[0]
    v1, v2 = (linearized_solve(s, u0, f) for f in data[1:3])
    assert second_order_solve(s, u0, v1, v2).max_abs() < 1e-14


def test_second_order_matches_mixed_difference(g, data):
    s = scen(g, "unit_quadratic")
    u0 = solve(s)[0]
    f1, f2 = data[1], data[2]
    v1, v2 = linearized_solve(s, u0, f1), linearized_solve(s, u0, f2)
    w = second_order_solve(s, u0, v1, v2)
    errs = []
    for eps in (1e-1, 5e-2):
        u = lambda a, b: solve(s, s.f0 + a * eps * f1 + b * eps * f2)[0]  # noqa: E731
        d = (u(1, 1) - u(1, -1) - u(-1, 1) + u(-1, -1)) / (4 * eps**2)
        errs.append((d - w).max_abs())
    assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.1)


def test_second_order_sign_flip(g, data):
    out = []
    for sign in (1.0, -1.0):
        s = scen(g, "unit_quadratic", sign).replace(f0=BoundaryField.zeros(g), F=Field.zeros(g))
        u0 = solve(s)[0]
        v1, v2 = (linearized_solve(s, u0, f) for f in data[1:3])
        out.append(second_order_solve(s, u0, v1, v2))
    assert np.array_equal(out[0].values, -out[1].values)


def _third(s, fs):
    u0 = solve(s)[0]
    op = linear_operator(s, u0)
    v = [linearized_solve(s, u0, f, op) for f in fs]
    w = {(i, j): second_order_solve(s, u0, v[i], v[j], op) for i in range(3) for j in range(i + 1, 3)}
    return u0, op, v, w


def test_third_order_linear_is_zero(g, data):
    s = scen(g, "linear")
    u0, op, v, w = _third(s, data[1:4])
    assert third_order_solve(s, u0, *v, w[0, 1], w[0, 2], w[1, 2], op).max_abs() < 1e-14


def test_third_order_symmetry(g, data):
    s = scen(g, "cubic")
    u0, op, v, w = _third(s, data[1:4])
    a = third_order_solve(s, u0, v[0], v[1], v[2], w[0, 1], w[0, 2], w[1, 2], op)
    b = third_order_solve(s, u0, v[1], v[0], v[2], w[0, 1], w[1, 2], w[0, 2], op)
    assert a.allclose(b, atol=1e-13)


@pytest.mark.parametrize("kind", ["quadratic", "cubic"])
def test_third_order_matches_eight_point_difference(g, data, kind):
    s = scen(g, kind)
    direct = direct_form(s, data[1:4]).value
    errs = []
    for eps in (1e-1, 5e-2):
        dd = kth_divided_difference(s, s.f0, data[1:4], eps, check_step=False).value
        errs.append((dd - direct).max_abs())
    assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.1)


def test_divided_difference_linear_problem(g, data):
    s = Scenario(Nonlinearity.zero(g), Field.zeros(g), BoundaryField.zeros(g))
    f = data[3]
    exact = normal_derivative(harmonic_extension(g, f))
    for eps in (1e-1, 1e-2):
        form = kth_divided_difference(s, s.f0, [f], eps)
        assert form.value.allclose(exact, atol=1e-9)
        assert form.method == DIVIDED and form.eps == eps
    second = kth_divided_difference(scen(g, "linear"), s.f0, data[1:3], 1e-2)
    assert second.value.max_abs() < 1e-6


def test_divided_difference_richardson(g, data):
    rep = verify_linearization(scen(g), scen(g).f0, data[1:3], 1e-1)
    assert rep.ok
    assert rep.ratio == pytest.approx(4.0, rel=0.1)
    assert rep.richardson_discrepancy < rep.discrepancy_half


def test_verify_linearization_linear(g, data):
    s = scen(g, "linear")
    rep = verify_linearization(s, s.f0, data[1:3], 1e-1)
    assert rep.direct.value.max_abs() < 1e-12
    assert rep.divided.value.max_abs() < 1e-8


def test_verify_linearization_exponential_third_order(g, data):
    s = scen(g, "exponential")
    rep = verify_linearization(s, s.f0, data[1:4], 1e-1)
    assert rep.ok and rep.ratio == pytest.approx(4.0, rel=0.1)


def test_verify_linearization_records_failures(g, data):
    lam = (8 / g.h**2) * np.sin(np.pi * g.h / 2) ** 2
    s = Scenario(Nonlinearity.polynomial(Field.constant(g, lam)), Field.constant(g, 1.0), BoundaryField.zeros(g))
    rep = verify_linearization(s, s.f0, data[1:2], 1e-1)
    assert not rep.ok and "SingularJacobian" in rep.failures[0]


def test_step_too_small(g, data):
    with pytest.raises(StepTooSmall):
        kth_divided_difference(scen(g), scen(g).f0, data[1:4], 1e-6)


def test_symmetry_exact(g, data):
    s = scen(g)
    a = kth_divided_difference(s, s.f0, [data[1], data[2]], 1e-2, check_step=False)
    b = kth_divided_difference(s, s.f0, [data[2], data[1]], 1e-2, check_step=False)
    assert np.array_equal(a.value.values, b.value.values)
    assert np.array_equal(direct_form(s, data[1:3]).value.values, direct_form(s, data[2:0:-1]).value.values)


def test_workers_match_serial(g, data):
    s = scen(g)
    a = kth_divided_difference(s, s.f0, data[1:3], 1e-2, check_step=False)
    b = kth_divided_difference(s, s.f0, data[1:3], 1e-2, check_step=False, workers=4)
    assert np.array_equal(a.value.values, b.value.values)


@pytest.mark.parametrize("c", [0.5, 2.0, -3.0])
def test_homogeneity(g, data, c):
    s = scen(g)
    eps = 1e-2
    f = data[1]
    a = kth_divided_difference(s, s.f0, [c * f], eps, check_step=False).value
    b = kth_divided_difference(s, s.f0, [f], eps, check_step=False).value
    assert (a - c * b).max_abs() <= 10 * eps**2 * max(1.0, abs(c)) ** 3 * b.max_abs()


def test_reciprocity(quad33):
    s = quad33
    u0 = solve(s)[0]
    f, gg = fourier_family(s.grid, 4)[2:4]
    vf, vg = linearized_solve(s, u0, f), linearized_solve(s, u0, gg)
    lhs = boundary_integrate(gg * normal_derivative(vf))
    rhs = boundary_integrate(f * normal_derivative(vg))
    assert abs(lhs - rhs) <= 1e-12 * max(abs(lhs), 1.0)


def test_form_serialisation(g, data):
    s = scen(g)
    form = direct_form(s, data[1:3])
    back = MultilinearForm.from_dict(form.to_dict())
    assert back.method == DIRECT and back.order == 2 and back.value.allclose(form.value)
    with pytest.raises(ValueError):
        MultilinearForm(2, (data[0],), form.value, DIRECT)


def test_families(g):
    fam = fourier_family(g, 5)
    assert len(fam) == 5 and np.allclose(fam[0].values, 1.0)
    s = g.arclength / g.perimeter
    assert np.allclose(fam[1].values, np.cos(2 * np.pi * s)) and np.allclose(fam[4].values, np.sin(4 * np.pi * s))
    hats = hat_family(g, 8)
    assert np.allclose(sum(h.values for h in hats), 1.0)
    assert len(boundary_family(g, "hat", 3)) == 3
    with pytest.raises(ValueError):
        boundary_family(g, "legendre", 3)
