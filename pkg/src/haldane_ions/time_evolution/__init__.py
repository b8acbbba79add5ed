"""Time integration: Krylov/Magnus steppers, the two-ion full model, adiabatic sweeps."""

from .full_model import FullModelParams, FullModelResult, fit_exchange_frequency, floquet_operator, two_ion_full_model
from .integrators import Trajectory, cf4_step, evolve_state
from .krylov import krylov_expm_multiply
from .sweep import (
    Schedule,
    Segment,
    SweepResult,
    adiabatic_sweep,
    compare_paths,
    detour_schedule,
    direct_schedule,
    fixture_model,
    fixture_schedule,
)

__all__ = [
    "FullModelParams",
    "FullModelResult",
    "Schedule",
    "Segment",
    "SweepResult",
    "Trajectory",
    "adiabatic_sweep",
    "cf4_step",
    "compare_paths",
    "detour_schedule",
    "direct_schedule",
    "evolve_state",
    "fit_exchange_frequency",
    "fixture_model",
    "fixture_schedule",
    "floquet_operator",
    "krylov_expm_multiply",
    "two_ion_full_model",
]
