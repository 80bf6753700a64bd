"""Finite-volume simulator and verification lab for chemotaxis with
signal-dependent motility, u_t = Lap(gamma(v) u) + mu u (1 - u), -Lap v + v = u,
on an interval or a radially symmetric disk with no-flux boundaries."""

from .diagnostics import DiagnosticsSink, energy, entropy, interaction
from .dynamics import ChemotaxisSystem, SchemeConfig, SimState
from .elliptic import HelmholtzOperator
from .grid import ConfigurationError, RadialGrid, build_grid
from .initdata import BlowupRecipe, construct_blowup
from .motility import Motility, compute_K0
from .steady import continuation_sweep, newton_steady

__version__ = "0.1.0"

__all__ = [
    "BlowupRecipe", "ChemotaxisSystem", "ConfigurationError", "DiagnosticsSink",
    "HelmholtzOperator", "Motility", "RadialGrid", "SchemeConfig", "SimState",
    "build_grid", "compute_K0", "construct_blowup", "continuation_sweep", "energy",
    "entropy", "interaction", "newton_steady",
]
