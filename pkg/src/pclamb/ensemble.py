"""Random atom ensembles and the spread of their level shifts.

Positions are drawn with numpy's ``Generator(PCG64(seed))``, uniformly over
the primitive cell; ``air_pores`` keeps only points inside the spheres.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from numpy.typing import NDArray

from .crystal import FCC_PRIMITIVE, CrystalStructure, inside_sphere

REGIONS = ("air_pores", "full_cell")
QUANTILES = (0.05, 0.25, 0.5, 0.75, 0.95)


class SamplingError(RuntimeError):
    """Rejection sampling could not find enough points in the region."""


@dataclass(frozen=True)
class EnsembleSpec:
    n_atoms: int = 200
    sampling_region: str = "air_pores"
    rng_seed: int = 20240501
    level: str = "2p"
    lattice_constant: float | None = None
    max_proposals_factor: int = 1000

    def __post_init__(self):
        if self.n_atoms < 1:
            raise ValueError("n_atoms must be >= 1")
        if self.sampling_region not in REGIONS:
            raise ValueError(f"sampling_region must be one of {REGIONS}")
        if not 0 <= self.rng_seed < 2**64:
            raise ValueError("rng_seed must be an unsigned 64-bit integer")


@dataclass(frozen=True)
class SampledPositions:
    positions: NDArray
    proposals: int

    @property
    def acceptance_rate(self) -> float:
        return len(self.positions) / self.proposals


def sample_positions(spec: EnsembleSpec, structure: CrystalStructure) -> SampledPositions:
    """``n_atoms`` reduced positions (units of a) in one primitive cell.

    Proposals are drawn in fixed-size batches, so the result depends only on
    the seed.  ``proposals`` counts the draws needed up to the last accepted
    point.
    """
    rng = np.random.Generator(np.random.PCG64(spec.rng_seed))
    n = spec.n_atoms
    if spec.sampling_region == "full_cell":
        return SampledPositions(rng.random((n, 3)) @ FCC_PRIMITIVE, n)
    accepted = []
    used = 0
    batch = max(64, 2 * n)
    limit = spec.max_proposals_factor * n
    while used < limit:
        pts = rng.random((batch, 3)) @ FCC_PRIMITIVE
        ok = inside_sphere(structure, pts)
        need = n - sum(len(a) for a in accepted)
        hits = np.nonzero(ok)[0][:need]
        accepted.append(pts[hits])
        if len(hits) == need:
            used += int(hits[-1]) + 1
            return SampledPositions(np.concatenate(accepted), used)
        used += batch
    raise SamplingError(f"only {sum(len(a) for a in accepted)} of {n} points found in the air pores "
                        f"after {used} proposals")


@dataclass
class MiniBand:
    """Distribution of shifts (rad/s) over an ensemble."""

    shifts: NDArray
    failures: int = 0
    bins: int = 20
    edges: NDArray = field(init=False)
    counts: NDArray = field(init=False)

    def __post_init__(self):
        self.shifts = np.asarray(self.shifts, dtype=float)
        if len(self.shifts) == 0:
            self.edges, self.counts = np.zeros(0), np.zeros(0, dtype=int)
            return
        lo, hi = float(self.shifts.min()), float(self.shifts.max())
        if lo == hi:
            self.edges = np.array([lo, hi])
            self.counts = np.array([len(self.shifts)])
        else:
            self.counts, self.edges = np.histogram(self.shifts, bins=self.bins, range=(lo, hi))

    @property
    def width(self) -> float:
        if len(self.shifts) == 0:
            return 0.0
        return float(self.shifts.max() - self.shifts.min())

    @property
    def quantiles(self) -> dict[float, float]:
        if len(self.shifts) == 0:
            return {}
        return dict(zip(QUANTILES, np.quantile(self.shifts, QUANTILES).tolist()))


def mini_band(solve: Callable[[int], float], n_atoms: int, bins: int = 20,
              failure_types: tuple[type[BaseException], ...] = (ArithmeticError, RuntimeError, ValueError)
              ) -> tuple[MiniBand, list[float | None]]:
    """Aggregate per-atom shifts.  ``solve(i)`` returns the shift of atom i.

    Atoms whose solve raises one of ``failure_types`` are counted as failures
    and left out of the histogram (``None`` in the per-atom list).
    """
    per_atom: list[float | None] = []
    for i in range(n_atoms):
        try:
            per_atom.append(float(solve(i)))
        except failure_types:
            per_atom.append(None)
    good = [s for s in per_atom if s is not None]
    return MiniBand(np.array(good), failures=n_atoms - len(good), bins=bins), per_atom


def write_atoms_csv(positions: Sequence, shifts: Sequence, lattice_constant: float, path) -> None:
    from .units import to_mhz, to_reduced

    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["atom_index", "x", "y", "z", "shift_reduced", "shift_MHz"])
        for i, (r, s) in enumerate(zip(positions, shifts)):
            if s is None:
                w.writerow([i, *(repr(float(v)) for v in r), "nan", "nan"])
            else:
                w.writerow([i, *(repr(float(v)) for v in r), repr(float(to_reduced(s, lattice_constant))),
                            repr(float(to_mhz(s)))])


def write_histogram_csv(band: MiniBand, path, scale: float = 1.0) -> None:
    """Histogram rows; ``scale`` converts bin edges from rad/s."""
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["bin_lo", "bin_hi", "count"])
        for lo, hi, c in zip(band.edges[:-1], band.edges[1:], band.counts):
            w.writerow([repr(float(lo * scale)), repr(float(hi * scale)), int(c)])
