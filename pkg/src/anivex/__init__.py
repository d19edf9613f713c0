"""Desk-scale numerics for anisotropic variable-exponent function spaces:
dilation ball geometry, Luxemburg norms, Campanato-type oscillation
functionals, atoms and duality chains, tent-space atomic decompositions,
and Carleson functionals."""

__version__ = "0.1.0"

from .dilation import DilatedBall, Dilation, new_dilation
from .errors import ToolkitError
from .exponents import Exponent, constant_exponent, luxemburg_norm, modular
from .grid import Grid, GridFunction, integrate, sample, uniform_grid
from .search import BallConfiguration

__all__ = [
    "BallConfiguration",
    "DilatedBall",
    "Dilation",
    "Exponent",
    "Grid",
    "GridFunction",
    "ToolkitError",
    "constant_exponent",
    "integrate",
    "luxemburg_norm",
    "modular",
    "new_dilation",
    "sample",
    "uniform_grid",
    "__version__",
]
