import numpy as np
import pytest
from hypothesis import settings

from gaugelab.forward import Scenario
from gaugelab.grid import BoundaryField, Field, Grid2D, make_bump
from gaugelab.nonlinearity import Nonlinearity

settings.register_profile("default", max_examples=25, deadline=None)
settings.load_profile("default")


@pytest.fixture(scope="session")
def g17():
    return Grid2D.square(17)


@pytest.fixture(scope="session")
def g33():
    return Grid2D.square(33)


def sinsin(amp=1.0):
    return lambda x, y: amp * np.sin(np.pi * x) * np.sin(np.pi * y)


def quadratic_scenario(grid, f0=0.5, amp=5.0):
    """a = (1 + bump) z^2 with a known zero linear coefficient."""
    a2 = 1.0 + make_bump(grid, (0.5, 0.5), 0.3, 1.0)
    a = Nonlinearity.polynomial(Field.zeros(grid), a2)
    return Scenario(a, Field.from_function(grid, sinsin(amp)), BoundaryField.constant(grid, f0))


@pytest.fixture(scope="session")
def quad33(g33):
    return quadratic_scenario(g33)
