"""Inverse-opal fcc dielectric structure and its plane-wave representation.

Reduced units throughout: lengths in units of the lattice constant ``a``,
wave vectors in units of ``2*pi/a``.  With these conventions the primitive
vectors satisfy ``a_i . b_j = delta_ij``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from numpy.typing import NDArray

# rows are a1, a2, a3
FCC_PRIMITIVE = 0.5 * np.array([[0.0, 1.0, 1.0], [1.0, 0.0, 1.0], [1.0, 1.0, 0.0]])
# rows are b1, b2, b3
FCC_RECIPROCAL = np.array([[-1.0, 1.0, 1.0], [1.0, -1.0, 1.0], [1.0, 1.0, -1.0]])
CELL_VOLUME = 0.25
BZ_VOLUME = 4.0
CLOSE_PACKED_FILLING = math.pi / (3.0 * math.sqrt(2.0))
# close packing as quoted to four digits; spheres overlap by < 1e-4 of R there
MAX_FILLING = 0.7405


class SingularPermittivityError(ValueError):
    """The Fourier matrix of epsilon could not be inverted."""


@dataclass(frozen=True)
class CrystalStructure:
    """fcc lattice of spheres (usually air) in a homogeneous backbone.

    Attributes:
        eps_sphere: permittivity inside the spheres.
        eps_background: permittivity of the backbone.
        filling_fraction: volume fraction occupied by the spheres.
        lattice_constant: cubic lattice constant in meters.  Crystal-side
            quantities are computed in reduced units and do not depend on it.
    """

    eps_sphere: float = 1.0
    eps_background: float = 3.6**2
    filling_fraction: float = 0.74
    lattice_constant: float = 100e-9

    def __post_init__(self):
        if self.eps_sphere < 1.0 or self.eps_background < 1.0:
            raise ValueError(
                f"permittivities must be >= 1, got eps_sphere={self.eps_sphere}, "
                f"eps_background={self.eps_background}"
            )
        if not 0.0 < self.filling_fraction < 1.0:
            raise ValueError(f"filling fraction must lie in (0, 1), got {self.filling_fraction}")
        if self.filling_fraction > MAX_FILLING:
            raise ValueError(
                f"filling fraction {self.filling_fraction} exceeds fcc close packing "
                f"({MAX_FILLING}); overlapping spheres are not supported"
            )
        if self.lattice_constant <= 0.0:
            raise ValueError("lattice constant must be positive")

    @classmethod
    def vacuum(cls, lattice_constant: float = 100e-9) -> "CrystalStructure":
        """Empty lattice: epsilon = 1 everywhere."""
        return cls(eps_sphere=1.0, eps_background=1.0, filling_fraction=0.5,
                   lattice_constant=lattice_constant)

    @property
    def is_homogeneous(self) -> bool:
        return self.eps_sphere == self.eps_background

    @property
    def sphere_radius(self) -> float:
        """Sphere radius in units of a."""
        return (3.0 * self.filling_fraction * CELL_VOLUME / (4.0 * math.pi)) ** (1.0 / 3.0)

    @property
    def mean_epsilon(self) -> float:
        return self.eps_background + self.filling_fraction * (self.eps_sphere - self.eps_background)


def epsilon_fourier(structure: CrystalStructure, g: NDArray) -> NDArray:
    """Fourier coefficient of epsilon(r) at reciprocal vector(s) ``g``.

    ``g`` has shape ``(..., 3)`` in units of 2*pi/a.  The structure is
    centrosymmetric, so the coefficients are real.
    """
    g = np.asarray(g, dtype=float)
    x = 2.0 * math.pi * np.linalg.norm(g, axis=-1) * structure.sphere_radius
    contrast = structure.eps_sphere - structure.eps_background
    out = np.full(x.shape, structure.mean_epsilon)
    nz = x > 1e-10
    xs = x[nz]
    out[nz] = contrast * 3.0 * structure.filling_fraction * (np.sin(xs) - xs * np.cos(xs)) / xs**3
    return out


def nearest_lattice_distance(r: NDArray) -> NDArray:
    """Distance from each point in ``r`` (shape (..., 3), units of a) to the
    closest fcc lattice site."""
    r = np.asarray(r, dtype=float)
    frac = r @ FCC_RECIPROCAL.T
    base = np.floor(frac)
    shifts = np.array(np.meshgrid([-1, 0, 1, 2], [-1, 0, 1, 2], [-1, 0, 1, 2], indexing="ij"))
    shifts = shifts.reshape(3, -1).T
    sites = (base[..., None, :] + shifts) @ FCC_PRIMITIVE
    return np.min(np.linalg.norm(r[..., None, :] - sites, axis=-1), axis=-1)


def inside_sphere(structure: CrystalStructure, r: NDArray) -> NDArray:
    """True where ``r`` lies inside one of the spheres (centered on lattice sites)."""
    return nearest_lattice_distance(r) < structure.sphere_radius


def epsilon_real_space(structure: CrystalStructure, r: NDArray) -> NDArray:
    """Permittivity at real-space points ``r`` (units of a)."""
    return np.where(inside_sphere(structure, r), structure.eps_sphere, structure.eps_background)


def _integer_triples(m_max: int) -> NDArray:
    rng = np.arange(-m_max, m_max + 1)
    m = np.array(np.meshgrid(rng, rng, rng, indexing="ij")).reshape(3, -1).T
    return m


@dataclass(frozen=True, eq=False)
class ReciprocalBasis:
    """Truncated set of fcc reciprocal lattice vectors with ``|G| <= g_max``.

    Vectors are ordered by ``|G|`` and then lexicographically by their integer
    coordinates ``m`` (``G = m @ FCC_RECIPROCAL``), so assembly is reproducible.
    """

    g_max: float
    m: NDArray = field(repr=False)

    @classmethod
    def from_cutoff(cls, g_max: float) -> "ReciprocalBasis":
        if g_max < 0:
            raise ValueError("g_max must be non-negative")
        m_max = int(math.ceil(g_max)) + 1
        m = _integer_triples(m_max)
        g = m @ FCC_RECIPROCAL
        # |G|^2 is an integer for the fcc reciprocal lattice
        g2 = np.rint(np.einsum("ij,ij->i", g, g)).astype(np.int64)
        keep = g2 <= g_max**2 + 1e-9
        m, g2 = m[keep], g2[keep]
        order = np.lexsort((m[:, 2], m[:, 1], m[:, 0], g2))
        return cls(g_max=float(g_max), m=m[order])

    @classmethod
    def with_at_least(cls, n_vectors: int) -> "ReciprocalBasis":
        """Smallest basis made of complete shells holding ``n_vectors`` or more."""
        shell2 = 0
        while True:
            basis = cls.from_cutoff(math.sqrt(shell2))
            if len(basis) >= n_vectors:
                return basis
            shell2 += 1

    def __len__(self) -> int:
        return len(self.m)

    @cached_property
    def g(self) -> NDArray:
        return self.m @ FCC_RECIPROCAL

    def index_of(self, m) -> int:
        hits = np.nonzero(np.all(self.m == np.asarray(m), axis=1))[0]
        if len(hits) == 0:
            raise KeyError(f"{m} not in basis")
        return int(hits[0])


def epsilon_matrix(structure: CrystalStructure, basis: ReciprocalBasis) -> NDArray:
    """Toeplitz-like matrix ``eps(G - G')`` over the truncated basis."""
    g = basis.g
    return epsilon_fourier(structure, g[:, None, :] - g[None, :, :])


def inverse_epsilon_matrix(structure: CrystalStructure, basis: ReciprocalBasis) -> NDArray:
    """Fourier matrix of 1/epsilon by inversion of the epsilon matrix.

    Inverting the truncated ``eps(G - G')`` matrix converges much faster for
    high-contrast structures than truncating the Fourier series of 1/eps.
    """
    if len(basis) == 0:
        raise ValueError("empty reciprocal basis")
    if structure.is_homogeneous:
        return np.eye(len(basis)) / structure.eps_background
    eps = epsilon_matrix(structure, basis)
    try:
        cond = np.linalg.cond(eps)
        if not np.isfinite(cond) or cond > 1e13:
            raise SingularPermittivityError(f"epsilon matrix is singular (condition number {cond:.3g})")
        eta = np.linalg.inv(eps)
    except np.linalg.LinAlgError as exc:
        raise SingularPermittivityError(str(exc)) from exc
    return 0.5 * (eta + eta.T)
