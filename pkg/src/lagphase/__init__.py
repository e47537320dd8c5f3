"""Variational Lagrangian moving-mesh solver for Allen-Cahn type phase-field models."""
from .dissipation import ConfigError, DissipationOperator, assemble_D
from .energy import (Base, SlightlyCompressible, VolumeConstrained, discrete_energy,
                     discrete_energy_gradient)
from .eulerian import apply_reinit_with_eulerian, eulerian_energy, eulerian_step
from .mesh import (InadmissibleStateError, MeshFormatError, Triangulation, build_uniform_mesh,
                   load_mesh, load_snapshot, save_mesh, save_snapshot)
from .metrics import convergence_table, interface_radius, linf_interface_error
from .optimize import OptimizerConfig, StepFailure, minimize
from .presets import PRESETS
from .stepper import SolverConfig, lagrangian_step, reinitialize, run

__version__ = "0.1.0"

__all__ = [
    "Base", "ConfigError", "DissipationOperator", "InadmissibleStateError", "MeshFormatError",
    "OptimizerConfig", "PRESETS", "SlightlyCompressible", "SolverConfig", "StepFailure",
    "Triangulation", "VolumeConstrained", "apply_reinit_with_eulerian", "assemble_D",
    "build_uniform_mesh", "convergence_table", "discrete_energy", "discrete_energy_gradient",
    "eulerian_energy", "eulerian_step", "interface_radius", "lagrangian_step",
    "linf_interface_error", "load_mesh", "load_snapshot", "minimize", "reinitialize", "run",
    "save_mesh", "save_snapshot",
]
