"""Ensemble integration of small ODE and SDE systems.

Two execution models are provided: a per-trajectory kernel model in which
every trajectory runs independently with its own adaptive controller, and a
lockstep array model that advances the whole ensemble as one block system.
Hot loops run in a compiled extension when it is available.
"""

from ._backend import NAME as BACKEND
from .core import (Algorithm, ControllerParams, EnsembleSolution, EnsembleSpec, ExecModel, NoiseKind,
                   ODESystem, ParensodeError, Precision, RetCode, SaveSpec, SDESystem, SolveConfig,
                   Trajectory)
from .ensemble import (Executor, solve_ensemble, solve_ensemble_array, solve_ensemble_kernel,
                       time_ensemble)
from .events import Direction, EventSpec, EventState
from .lut import UniformTable, sample, sample_nearest
from .ode_kernels import solve
from .sde_kernels import sde_solve

__version__ = "0.1.0"

__all__ = [
    "Algorithm", "BACKEND", "ControllerParams", "Direction", "EnsembleSolution", "EnsembleSpec",
    "EventSpec", "EventState", "ExecModel", "Executor", "NoiseKind", "ODESystem", "ParensodeError",
    "Precision", "RetCode", "SDESystem", "SaveSpec", "SolveConfig", "Trajectory", "UniformTable",
    "sample", "sample_nearest", "sde_solve", "solve", "solve_ensemble", "solve_ensemble_array",
    "solve_ensemble_kernel", "time_ensemble",
]
