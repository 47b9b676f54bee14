"""Convex integration for the Von Karman system on sampled grids.

Submodules:

* ``grid_fields``: grids, fields, derivatives, mollification, norms
* ``decomposition``: ``D = a Id + sym grad Psi``
* ``corrugation``: one oscillatory step and its exact error
* ``kallen``: iterated decomposition absorbing an error block
* ``stage``: double steps, stages and the constant ledger
* ``schedule``: Fibonacci frequency schedules and exponent algebra
* ``driver``: outer iteration, density demo, exponent estimation
* ``cli``: command-line front end
"""

from .errors import (AmplitudeError, CompatibilityError, ConfigError, ConvintError, DomainError,
                     FrequencyRatioError, MarginError, NumericalError, ResolutionError,
                     ScheduleError)
from .grid_fields import (Grid2, ScalarField, SymMatrixField, VectorField, curl_curl, defect,
                          det_MA, mollify, norms, sup_norm)
from .domains import Disk, Rectangle, extended_grid, unit_square
from .decomposition import decompose, decompose_shifted
from .corrugation import StepParams, step_perturb, step_residual
from .kallen import kallen_iterate
from .schedule import exponent_summary, fibonacci, make_schedule, verify_conditions
from .stage import codim_assignment, double_step, run_stage, simulate_stage_bounds
from .driver import check_subsolution, density_demo, estimate_alpha, run_nash_kuiper

__version__ = "0.1.0"

__all__ = [
    "AmplitudeError", "CompatibilityError", "ConfigError", "ConvintError", "DomainError",
    "FrequencyRatioError", "MarginError", "NumericalError", "ResolutionError", "ScheduleError",
    "Grid2", "ScalarField", "SymMatrixField", "VectorField", "curl_curl", "defect", "det_MA",
    "mollify", "norms", "sup_norm", "Disk", "Rectangle", "extended_grid", "unit_square",
    "decompose", "decompose_shifted", "StepParams", "step_perturb", "step_residual",
    "kallen_iterate", "exponent_summary", "fibonacci", "make_schedule", "verify_conditions",
    "codim_assignment", "double_step", "run_stage", "simulate_stage_bounds",
    "check_subsolution", "density_demo", "estimate_alpha", "run_nash_kuiper",
]
