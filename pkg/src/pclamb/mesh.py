"""Uniform Monkhorst-Pack sampling of the fcc Brillouin zone."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from numpy.typing import NDArray

from .crystal import BZ_VOLUME, FCC_RECIPROCAL


def reduce_to_bz(k: NDArray) -> NDArray:
    """Map wave vectors (units of 2*pi/a) into the first Brillouin zone.

    The nearest reciprocal lattice vector is subtracted, i.e. the result lies
    in the Wigner-Seitz cell of the reciprocal lattice.
    """
    k = np.asarray(k, dtype=float)
    frac = k @ np.linalg.inv(FCC_RECIPROCAL)
    base = np.floor(frac)
    shifts = np.array(np.meshgrid([-1, 0, 1, 2], [-1, 0, 1, 2], [-1, 0, 1, 2], indexing="ij"))
    shifts = shifts.reshape(3, -1).T
    cand = (base[..., None, :] + shifts) @ FCC_RECIPROCAL
    d = np.linalg.norm(k[..., None, :] - cand, axis=-1)
    best = np.argmin(d, axis=-1)
    g = np.take_along_axis(cand, best[..., None, None], axis=-2)[..., 0, :]
    return k - g


@dataclass(frozen=True)
class BZMesh:
    """``n1 x n2 x n3`` Monkhorst-Pack mesh over the full first BZ.

    Point ``(j1, j2, j3)`` has fractional coordinates ``(j + 1/2)/n - 1/2``
    along ``b1, b2, b3``; the set is closed under ``k -> -k`` (index
    ``j -> n - 1 - j``).  Every point carries the same weight and the weights
    sum to the BZ volume, ``4 (2*pi/a)^3``.
    """

    n1: int
    n2: int
    n3: int

    def __post_init__(self):
        if min(self.n1, self.n2, self.n3) < 1:
            raise ValueError("mesh dimensions must be positive")

    @classmethod
    def cubic(cls, n: int) -> "BZMesh":
        return cls(n, n, n)

    @property
    def dims(self) -> tuple[int, int, int]:
        return (self.n1, self.n2, self.n3)

    def __len__(self) -> int:
        return self.n1 * self.n2 * self.n3

    @cached_property
    def fractional(self) -> NDArray:
        axes = [(np.arange(n) + 0.5) / n - 0.5 for n in self.dims]
        return np.array(np.meshgrid(*axes, indexing="ij")).reshape(3, -1).T

    @cached_property
    def points(self) -> NDArray:
        """Cartesian k-points (units of 2*pi/a), reduced into the first BZ."""
        return reduce_to_bz(self.fractional @ FCC_RECIPROCAL)

    @property
    def weight(self) -> float:
        return BZ_VOLUME / len(self)

    @property
    def weights(self) -> NDArray:
        return np.full(len(self), self.weight)

    @property
    def cell_vectors(self) -> NDArray:
        """Edges of the parallelepiped each point represents (rows b_i / n_i)."""
        return FCC_RECIPROCAL / np.array(self.dims, dtype=float)[:, None]

    def partner(self) -> NDArray:
        """Index of the point at ``-k`` for every mesh point."""
        j = np.array(np.meshgrid(*[np.arange(n) for n in self.dims], indexing="ij")).reshape(3, -1).T
        jp = np.array(self.dims) - 1 - j
        return np.ravel_multi_index(jp.T, self.dims)

    def time_reversal_representatives(self) -> tuple[NDArray, NDArray]:
        """Indices of one point per ``{k, -k}`` pair and the pair multiplicity.

        Eigenfrequencies and ``|E(r)|^2`` are equal at ``k`` and ``-k`` for a
        real permittivity, so each pair needs a single eigensolve.
        """
        idx = np.arange(len(self))
        partner = self.partner()
        keep = idx <= partner
        mult = np.where(partner[keep] == idx[keep], 1, 2)
        return idx[keep], mult
