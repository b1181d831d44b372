"""Entropy-penalized optimization on finite state spaces.

Deterministic density flows, their stationary profiles, interacting
particle swarms that realize them, and numerical checks of the
associated functional inequalities.
"""

from .entropy import EntropyFamily, kappa
from .errors import (
    BadMeasure,
    DomainError,
    NoBracket,
    NonFinite,
    NotIrreducible,
    NotMinimizer,
    NotReversible,
    ParseError,
    StepFailure,
    SwarmOptError,
    ValidationError,
    WindowTooShort,
)
from .flow import Controls, Schedule, integrate_annealed, integrate_homogeneous
from .model import Density, EnergyLandscape, build_landscape, ring20
from .particles import SwarmConfig, simulate_swarm
from .stationary import solve_eta

__version__ = "0.1.0"
