"""Quasi-symmetriser and energy-method toolkit for weakly hyperbolic equations
with time-dependent coefficients."""

from .coeff_dsl import CoefficientExpr, parse
from .config import Scenario, load_config
from .errors import QuasisymError
from .spectrum import ProblemSpec
from .symmetriser import QuasiSymmetriser, assemble, build

__all__ = [
    "CoefficientExpr",
    "ProblemSpec",
    "QuasiSymmetriser",
    "QuasisymError",
    "Scenario",
    "assemble",
    "build",
    "load_config",
    "parse",
]
__version__ = "0.1.0"
