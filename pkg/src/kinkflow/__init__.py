"""Numerical laboratory for the relaxation of a perturbed planar kink under Cahn-Hilliard."""
from .grid import GridSpec, RealField, SpectralField, norms
from .kink import KinkProfile, KinkState, project_shift
from .functionals import Diagnostics, diagnostics, dissipation, energy_gap, hminus1_sq

__all__ = [
    "Diagnostics",
    "GridSpec",
    "KinkProfile",
    "KinkState",
    "RealField",
    "SpectralField",
    "diagnostics",
    "dissipation",
    "energy_gap",
    "hminus1_sq",
    "norms",
    "project_shift",
]
__version__ = "0.1.0"
