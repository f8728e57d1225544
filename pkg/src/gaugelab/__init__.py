"""
gaugelab: finite-difference experiments on inverse source problems for
semilinear elliptic equations ``Lap u + a(x, u) = F``.

Modules
-------
grid          lattice, grid functions, stencils, bumps
nonlinearity  the a(x, z) families and their Taylor fields
forward       Newton solver, Schrodinger operators, DN map
linearize     linearised hierarchy and divided-difference cross-checks
gauge         gauge transforms and DN-map invariance studies
reconstruct   Q, T2, T3 inversion and gauge breaking
cli           batch driver (``gaugelab`` command)
"""

__version__ = "0.1.0"

from .errors import GaugeLabError
from .forward import Scenario, dn_map, solve
from .grid import BoundaryField, Field, Grid2D
from .nonlinearity import Nonlinearity

__all__ = [
    "__version__",
    "GaugeLabError",
    "Grid2D",
    "Field",
    "BoundaryField",
    "Nonlinearity",
    "Scenario",
    "solve",
    "dn_map",
]
