"""Trapped-ion simulation of the spin-1 XXZ chain and its Haldane phase.

Pipeline: trap -> normal modes -> Lamb-Dicke couplings -> effective spin-1
model -> ground states, dynamics and topological diagnostics.
"""

from .coupling_engine import DriveParams, effective_coupling_matrix, effective_model_params, validate_hierarchy
from .eigen_solver import energy_gap, ground_state, lowest_eigenpairs
from .lattice_modes import IonSpecies, TrapConfig, equilibrium_positions, lamb_dicke_matrix, normal_modes
from .spin_model import SpinModelParams, build_hamiltonian, sector_basis

__version__ = "0.1.0"

__all__ = [
    "DriveParams",
    "IonSpecies",
    "SpinModelParams",
    "TrapConfig",
    "build_hamiltonian",
    "effective_coupling_matrix",
    "effective_model_params",
    "energy_gap",
    "equilibrium_positions",
    "ground_state",
    "lamb_dicke_matrix",
    "lowest_eigenpairs",
    "normal_modes",
    "sector_basis",
    "validate_hierarchy",
]
