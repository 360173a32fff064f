"""Lamb shift and emission of atoms embedded in 3D photonic crystals.

Pipeline: plane-wave band structure (:mod:`bands`) -> local spectral response
(:mod:`lsrf`) -> frequency integrals (:mod:`quadrature`) -> level-shift
equation (:mod:`solver`), with atomic data from :mod:`atom` and random atom
ensembles in :mod:`ensemble`.
"""

__version__ = "0.1.0"

from .atom import AtomModel, hydrogen_model, vacuum_lamb_shift
from .crystal import CrystalStructure, ReciprocalBasis
from .lsrf import FrequencyGrid, SmoothingConfig, SpectralFunction, compute_lsrf, find_gap
from .mesh import BZMesh
from .quadrature import QuadratureConfig, beta, beta_pc_correction
from .solver import SolverConfig, lineshape, solve_shift_decomposed, solve_shift_full

__all__ = [
    "AtomModel", "BZMesh", "CrystalStructure", "FrequencyGrid", "QuadratureConfig", "ReciprocalBasis",
    "SmoothingConfig", "SolverConfig", "SpectralFunction", "beta", "beta_pc_correction", "compute_lsrf",
    "find_gap", "hydrogen_model", "lineshape", "solve_shift_decomposed", "solve_shift_full",
    "vacuum_lamb_shift",
]
