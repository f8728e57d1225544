import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gaugelab.errors import GridMismatch
from gaugelab.grid import Field, Grid2D, make_bump
from gaugelab.nonlinearity import Nonlinearity, dz, taylor_fields
from gaugelab.nonlinearity import eval as a_eval

G = Grid2D.square(9)
C = lambda c: Field.constant(G, c)  # noqa: E731
NODE = (4, 4)


def families(q=1.3):
    return [
        Nonlinearity.polynomial(C(0.5), C(-1.0), C(2.0)),
        Nonlinearity.exponential(C(q)),
        Nonlinearity.exp_times_u(C(q)),
        Nonlinearity.sine_gordon(C(q)),
    ]


def test_eval_examples():
    assert a_eval(Nonlinearity.polynomial(C(1), C(2)), NODE, 3.0) == pytest.approx(21.0)
    assert a_eval(Nonlinearity.sine_gordon(C(1)), NODE, np.pi) == pytest.approx(0.0, abs=1e-15)
    assert a_eval(Nonlinearity.exp_times_u(C(2)), NODE, 1.0) == pytest.approx(2 * math.e)


def test_dz_examples():
    assert dz(Nonlinearity.exponential(C(3)), 2, NODE, 0.0) == pytest.approx(3.0)
    u = 0.7
    assert dz(Nonlinearity.exp_times_u(C(1)), 1, NODE, u) == pytest.approx((u + 1) * math.exp(u))
    assert dz(Nonlinearity.polynomial(C(1), C(1), C(1)), 4, NODE, 2.0) == 0.0
    with pytest.raises(ValueError):
        dz(Nonlinearity.exponential(C(1)), 0, NODE, 0.0)


def test_zero_at_origin_except_exponential():
    for a in families():
        expected = 1.3 if a.kind == "exponential" else 0.0
        assert a_eval(a, NODE, 0.0) == pytest.approx(expected)


@pytest.mark.parametrize("k", range(1, 6))
def test_polynomial_dz_at_zero(k):
    coeffs = [C(float(j + 1)) for j in range(4)]
    a = Nonlinearity.polynomial(*coeffs)
    expected = math.factorial(k) * (k if k <= 4 else 0)
    assert dz(a, k, NODE, 0.0) == pytest.approx(expected)


@pytest.mark.parametrize("a", families(), ids=lambda a: a.kind)
def test_central_difference_second_order(a):
    z = 0.4
    errs = []
    for d in (1e-2, 1e-3):
        fd = (a_eval(a, NODE, z + d) - a_eval(a, NODE, z - d)) / (2 * d)
        errs.append(abs(fd - dz(a, 1, NODE, z)))
    assert errs[0] / errs[1] == pytest.approx(100, rel=0.05)


@pytest.mark.parametrize("a", families(), ids=lambda a: a.kind)
@given(z=st.floats(-2, 2), k=st.integers(1, 4))
def test_higher_derivatives_by_differences(a, z, k):
    d = 1e-4
    fd = (dz(a, k, NODE, z + d) - dz(a, k, NODE, z - d)) / (2 * d)
    assert fd == pytest.approx(dz(a, k + 1, NODE, z), rel=1e-6, abs=1e-6)


@given(z=st.floats(-3, 3), q=st.floats(0.1, 5))
def test_exp_times_u_identity(z, q):
    a = Nonlinearity.exp_times_u(C(q))
    assert dz(a, 2, NODE, z) - dz(a, 1, NODE, z) == pytest.approx(q * math.exp(z), rel=1e-12)


def test_taylor_fields_examples():
    zero = Field.zeros(G)
    coeffs = [C(2.0), make_bump(Grid2D.square(9), (0.5, 0.5), 0.2, 1.0), C(-1.0)]
    T = taylor_fields(Nonlinearity.polynomial(*coeffs), zero, 3)
    for k, (t, c) in enumerate(zip(T, coeffs), start=1):
        assert t.allclose(math.factorial(k) * c)
    q = C(1.7)
    T = taylor_fields(Nonlinearity.sine_gordon(q), zero, 3)
    assert T[0].allclose(q) and T[1].max_abs() < 1e-15 and T[2].allclose(-q)
    u0 = make_bump(Grid2D.square(9), (0.5, 0.5), 0.2, 0.8)
    T = taylor_fields(Nonlinearity.exponential(q), u0, 4)
    for t in T:
        assert t.allclose(q * u0.apply(np.exp))


def test_taylor_fields_checks():
    a = families()[0]
    with pytest.raises(ValueError):
        taylor_fields(a, Field.zeros(G), 0)
    with pytest.raises(GridMismatch):
        taylor_fields(a, Field.zeros(Grid2D.square(11)), 2)


def test_constructor_validation():
    with pytest.raises(ValueError):
        Nonlinearity("cubic", (C(1),))
    with pytest.raises(ValueError):
        Nonlinearity("exponential", (C(1), C(2)))
    with pytest.raises(GridMismatch):
        Nonlinearity.polynomial(C(1), Field.zeros(Grid2D.square(11)))


@pytest.mark.parametrize("a", families(), ids=lambda a: a.kind)
def test_serialisation_round_trip(a):
    b = Nonlinearity.from_dict(a.to_dict())
    assert b.kind == a.kind
    z = np.linspace(-1, 1, G.n_nodes).reshape(G.shape)
    assert np.array_equal(a.value(z), b.value(z))
