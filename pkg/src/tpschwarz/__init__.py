"""Time-parallel Schwarz solver and spectral toolkit for parabolic optimal control."""
__version__ = "0.1.0"

from .model import (ConfigError, ProblemSpec, SpaceTimeField, SpatialGrid,  # noqa: E402
                    TimeDecomposition, build_laplacian, l2q_norm, load_problem)
from .modes import EigenBasis, ModeCoefficients, coefficients, eigenbasis  # noqa: E402
from .pint import SchwarzSolver, monolithic_solve, schwarz_solve  # noqa: E402
from .theory import (assemble, infinity_norm_closed_form, rho_tilde,  # noqa: E402
                     spectral_radius, spectrum_report, special_norm)

__all__ = [
    "ConfigError", "ProblemSpec", "SpaceTimeField", "SpatialGrid", "TimeDecomposition",
    "build_laplacian", "l2q_norm", "load_problem", "EigenBasis", "ModeCoefficients",
    "coefficients", "eigenbasis", "SchwarzSolver", "monolithic_solve", "schwarz_solve",
    "assemble", "infinity_norm_closed_form", "rho_tilde", "spectral_radius",
    "spectrum_report", "special_norm",
]
