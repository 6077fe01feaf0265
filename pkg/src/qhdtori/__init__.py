"""Quantum hydrodynamics on anisotropic tori: modified energies and small divisors."""

from .diagonalization import ModeMatrices, mode_matrix, to_w, to_z
from .dispersion import ModelParams, omega, small_divisor
from .hamiltonians import QuadraticDiagonal, ResonanceError, TrilinearHamiltonian, build_K3_w, build_K3_z
from .lattice import Grid, Lattice, TorusShape
from .madelung import GaugeState, SpectralField, gauge_reduce, madelung_forward, madelung_inverse, reconstruct
from .modified_energy import ModifiedEnergy, build_E3, verify_cancellation

__version__ = "0.1.0"

__all__ = [
    "TorusShape",
    "Lattice",
    "Grid",
    "ModelParams",
    "omega",
    "small_divisor",
    "SpectralField",
    "GaugeState",
    "madelung_forward",
    "madelung_inverse",
    "gauge_reduce",
    "reconstruct",
    "ModeMatrices",
    "mode_matrix",
    "to_w",
    "to_z",
    "TrilinearHamiltonian",
    "QuadraticDiagonal",
    "ResonanceError",
    "build_K3_z",
    "build_K3_w",
    "ModifiedEnergy",
    "build_E3",
    "verify_cancellation",
]
