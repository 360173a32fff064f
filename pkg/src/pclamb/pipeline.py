"""Glue from a crystal description to a spectral function in one BZ sweep.

The envelope at every requested position is evaluated while sweeping, and
slices are folded into the LSRF accumulator as they arrive.  Memory therefore
stays flat in the number of k-points, and the reduction order is the k order,
whatever the worker count.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from .bands import PlaneWaveProblem, default_n_bands, sweep
from .crystal import CrystalStructure, ReciprocalBasis
from .lsrf import FrequencyGrid, Gap, LsrfAccumulator, SmoothingConfig, SpectralFunction, find_gap
from .mesh import BZMesh


@dataclass
class LsrfBuild:
    """Result of one sweep: the spectral function and the band frequencies
    at the solved (time-reversal representative) k-points."""

    sf: SpectralFunction
    bands: NDArray
    n_bands: int
    mesh: BZMesh

    def gap(self, min_relative_width: float = 1e-3) -> Gap | None:
        return find_gap(self.bands, min_relative_width)


def make_problem(structure: CrystalStructure, g_max: float) -> PlaneWaveProblem:
    return PlaneWaveProblem(structure, ReciprocalBasis.from_cutoff(g_max))


def resolve_n_bands(problem: PlaneWaveProblem, n_bands, u_max: float) -> int:
    if n_bands in (None, "auto"):
        return default_n_bands(problem, u_max)
    n = int(n_bands)
    if not 1 <= n <= problem.size:
        raise ValueError(f"n_bands must lie in [1, {problem.size}]")
    return n


def build_lsrf(problem: PlaneWaveProblem, mesh: BZMesh, positions, grid: FrequencyGrid = FrequencyGrid(),
               smoothing: SmoothingConfig = SmoothingConfig(), n_bands="auto", workers: int = 1,
               check_coverage: bool = True) -> LsrfBuild:
    positions = np.atleast_2d(np.asarray(positions, dtype=float)).reshape(-1, 3)
    nb = resolve_n_bands(problem, n_bands, grid.u_max)
    idx, mult = mesh.time_reversal_representatives()
    acc = LsrfAccumulator(positions, grid, mesh, smoothing)
    bands = np.empty((len(idx), nb))
    for i, sl in enumerate(sweep(problem, mesh.points[idx], nb, positions, workers)):
        acc.add(sl, mesh.weight * mult[i])
        bands[i] = sl.omega
    return LsrfBuild(sf=acc.result(check_coverage), bands=bands, n_bands=nb, mesh=mesh)


def mesh_bands(problem: PlaneWaveProblem, mesh: BZMesh, n_bands: int, workers: int = 1) -> NDArray:
    """Eigenfrequencies only, at the time-reversal representatives of ``mesh``."""
    idx, _ = mesh.time_reversal_representatives()
    return np.array(list(sweep(problem, mesh.points[idx], n_bands, workers=workers, eigenvalues_only=True)))
