"""Pseudo-spectral lab for solitary waves of the fractional generalized KdV equation

    u_t - d_{x1} D^alpha u + (1/m) d_{x1}(u^m) = 0,   D^alpha = |xi|^alpha.
"""

from .errors import FKdVError
from .evolution import Trajectory, conservation_report, evolve
from .functionals import action, conserved, energy, mass, pohozaev_residuals, weinstein
from .ground_state import GroundState, constrained_minimize, petviashvili_solve, rescale
from .linearized import LinearizedOperator, SpectralReport, spectrum
from .params import ModelParams, classify
from .spectral import Field, Grid, make_grid
from .stability import (
    fit_translation,
    instability_sequence,
    run_instability_experiment,
    run_stability_experiment,
    tube_distance,
)

__version__ = "0.1.0"
