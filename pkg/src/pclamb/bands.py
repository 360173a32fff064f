"""Plane-wave expansion of the Maxwell eigenproblem in the H-field basis.

For Bloch vector ``k`` the transverse H field is expanded as
``H(r) = sum_G (h1 e1 + h2 e2) exp(i(k+G).r)`` with ``e1, e2`` orthogonal to
``k+G``.  The resulting real symmetric operator has eigenvalues ``u^2`` with
``u = omega a / (2 pi c)``.  Electric-field envelopes are recovered in the
plane-wave representation, ``E_G = sum_G' eta(G-G') D_G' / u`` with
``D_G = (k+G) x H_G``, which makes ``(1/V) int eps |E|^2 = 1`` hold exactly in
the truncated basis.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np
import scipy.linalg
from numpy.typing import NDArray

from .crystal import (
    FCC_PRIMITIVE,
    CrystalStructure,
    ReciprocalBasis,
    epsilon_real_space,
    inverse_epsilon_matrix,
)
from .mesh import BZMesh

ZERO_FREQUENCY = 1e-8

# high-symmetry points of the fcc BZ, units of 2*pi/a
SYMMETRY_POINTS = {
    "G": np.array([0.0, 0.0, 0.0]),
    "X": np.array([0.0, 0.0, 1.0]),
    "L": np.array([0.5, 0.5, 0.5]),
    "W": np.array([0.5, 0.0, 1.0]),
    "K": np.array([0.75, 0.0, 0.75]),
    "U": np.array([0.25, 0.25, 1.0]),
}


class EigenSolverError(RuntimeError):
    """Dense eigensolver failure at a k-point."""


def polarization_frame(kg: NDArray) -> tuple[NDArray, NDArray]:
    """Unit vectors ``e1, e2`` orthogonal to each row of ``kg`` and each other.

    ``e1 = z x (k+G)`` normalized, falling back to ``x`` when ``k+G`` is along
    ``z``; ``e2 = (k+G) x e1`` normalized.  For ``k+G = 0`` the frame is
    ``(x, y)``.
    """
    kg = np.atleast_2d(np.asarray(kg, dtype=float))
    e1 = np.cross(np.array([0.0, 0.0, 1.0]), kg)
    n1 = np.linalg.norm(e1, axis=1)
    along_z = n1 < 1e-12
    e1[along_z] = [1.0, 0.0, 0.0]
    n1[along_z] = 1.0
    e1 /= n1[:, None]
    e2 = np.cross(kg, e1)
    n2 = np.linalg.norm(e2, axis=1)
    null = n2 < 1e-12
    e2[null] = [0.0, 1.0, 0.0]
    n2[null] = 1.0
    e2 /= n2[:, None]
    return e1, e2


@dataclass
class KSlice:
    """Eigenmodes at one k-point.

    ``omega`` holds reduced frequencies (ascending), ``velocity`` the group
    velocities du/dk (units of c), ``envelope_sq`` the values ``|u_nk(r)|^2``
    at the requested positions with shape ``(n_bands, n_positions)``.
    ``fields`` keeps the normalized E-field coefficients ``(n_bands, N, 3)``
    when requested.
    """

    k: NDArray
    omega: NDArray
    velocity: NDArray
    envelope_sq: NDArray
    fields: NDArray | None = None


class PlaneWaveProblem:
    """Structure and basis with the inverse-permittivity matrix precomputed."""

    def __init__(self, structure: CrystalStructure, basis: ReciprocalBasis):
        self.structure = structure
        self.basis = basis
        self.eta = inverse_epsilon_matrix(structure, basis)
        self._eta2 = np.kron(self.eta, np.ones((2, 2)))

    @property
    def size(self) -> int:
        return 2 * len(self.basis)

    def _frame(self, k):
        kg = np.asarray(k, dtype=float)[None, :] + self.basis.g
        norm = np.linalg.norm(kg, axis=1)
        e1, e2 = polarization_frame(kg)
        return kg, norm, e1, e2

    def operator(self, k: NDArray) -> NDArray:
        """Real symmetric ``2N x 2N`` Maxwell operator at ``k``."""
        _, norm, e1, e2 = self._frame(k)
        c = np.empty((self.size, 3))
        c[0::2] = e2 * norm[:, None]
        c[1::2] = -e1 * norm[:, None]
        return (c @ c.T) * self._eta2

    def _homogeneous_eigh(self, k, n_bands):
        # the operator is diagonal: each G contributes |k+G|^2/eps twice
        _, norm, _, _ = self._frame(k)
        order = np.argsort(norm, kind="stable")
        cols = np.stack([2 * order, 2 * order + 1], axis=1).ravel()[:n_bands]
        w = norm[cols // 2] ** 2 / self.structure.eps_background
        vec = np.zeros((self.size, n_bands))
        vec[cols, np.arange(n_bands)] = 1.0
        return w, vec

    def eigenvalues(self, k: NDArray, n_bands: int) -> NDArray:
        """Lowest ``n_bands`` reduced frequencies at ``k`` (no eigenvectors)."""
        if self.structure.is_homogeneous:
            return np.sqrt(self._homogeneous_eigh(k, n_bands)[0])
        m = self.operator(k)
        try:
            w = scipy.linalg.eigh(m, eigvals_only=True, subset_by_index=[0, n_bands - 1],
                                  driver="evr")
        except (np.linalg.LinAlgError, ValueError) as exc:
            raise EigenSolverError(f"eigensolver failed at k={k} (matrix size {m.shape[0]}): {exc}") from exc
        return np.sqrt(np.clip(w, 0.0, None))

    def solve(self, k: NDArray, n_bands: int, positions: NDArray | None = None,
              keep_fields: bool = False) -> KSlice:
        if not 1 <= n_bands <= self.size:
            raise ValueError(f"n_bands must lie in [1, {self.size}], got {n_bands}")
        k = np.asarray(k, dtype=float)
        kg, norm, e1, e2 = self._frame(k)
        if self.structure.is_homogeneous:
            w, vec = self._homogeneous_eigh(k, n_bands)
        else:
            m = self.operator(k)
            try:
                w, vec = scipy.linalg.eigh(m, driver="evd")
            except (np.linalg.LinAlgError, ValueError) as exc:
                raise EigenSolverError(
                    f"eigensolver failed at k={k} (matrix size {m.shape[0]}): {exc}") from exc
            w, vec = w[:n_bands], vec[:, :n_bands]
        omega = np.sqrt(np.clip(w, 0.0, None))

        n = len(self.basis)
        h1, h2 = vec[0::2], vec[1::2]
        hfield = e1[:, :, None] * h1[:, None, :] + e2[:, :, None] * h2[:, None, :]
        dfield = norm[:, None, None] * (e2[:, :, None] * h1[:, None, :] - e1[:, :, None] * h2[:, None, :])
        efield = (self.eta @ dfield.reshape(n, -1)).reshape(n, 3, n_bands)

        live = omega > ZERO_FREQUENCY
        scale = np.where(live, 1.0 / np.where(live, omega, 1.0), 0.0)
        # d(u^2)/dk = 2 sum_G H_G x E'_G  (Hellmann-Feynman, Poynting form)
        flux = np.cross(hfield, efield, axis=1).sum(axis=0)
        velocity = (flux * scale[None, :]).T
        efield = efield * scale[None, None, :]

        if positions is None:
            positions = np.zeros((0, 3))
        positions = np.atleast_2d(np.asarray(positions, dtype=float)).reshape(-1, 3)
        if self.structure.is_homogeneous:
            # single plane wave per mode: |u(r)|^2 is the same everywhere
            amp = (efield**2).sum(axis=(0, 1))
            env = np.repeat(amp[:, None], len(positions), axis=1)
        else:
            phase = 2.0 * math.pi * positions @ self.basis.g.T
            flat = efield.reshape(n, -1)
            re = (np.cos(phase) @ flat).reshape(-1, 3, n_bands)
            im = (np.sin(phase) @ flat).reshape(-1, 3, n_bands)
            env = (re**2 + im**2).sum(axis=1).T

        fields = np.ascontiguousarray(efield.transpose(2, 0, 1)) if keep_fields else None
        return KSlice(k=k, omega=omega, velocity=velocity, envelope_sq=env, fields=fields)

    def field_on_grid(self, fields: NDArray, grid: int = 32) -> NDArray:
        """Periodic envelope of one mode sampled on a ``grid^3`` mesh of the
        primitive cell; ``fields`` has shape ``(N, 3)``.  Returns ``(grid^3, 3)``."""
        box = np.zeros((grid, grid, grid, 3), dtype=complex)
        idx = np.mod(self.basis.m, grid)
        np.add.at(box, (idx[:, 0], idx[:, 1], idx[:, 2]), fields)
        out = np.fft.ifftn(box, axes=(0, 1, 2)) * grid**3
        return out.reshape(-1, 3)

    def normalization_integral(self, fields: NDArray, grid: int = 32) -> float:
        """``(1/V_cell) int eps |u|^2`` on a ``grid^3`` real-space mesh."""
        s = (np.arange(grid) / grid)
        frac = np.array(np.meshgrid(s, s, s, indexing="ij")).reshape(3, -1).T
        eps = epsilon_real_space(self.structure, frac @ FCC_PRIMITIVE)
        e = self.field_on_grid(fields, grid)
        return float(np.mean(eps * np.sum(np.abs(e) ** 2, axis=1)))


def assemble_maxwell_operator(structure: CrystalStructure, basis: ReciprocalBasis, k) -> NDArray:
    return PlaneWaveProblem(structure, basis).operator(k)


def solve_k(structure: CrystalStructure, basis: ReciprocalBasis, k, n_bands: int,
            positions=None) -> KSlice:
    return PlaneWaveProblem(structure, basis).solve(k, n_bands, positions)


def empty_lattice_frequencies(k: NDArray, basis: ReciprocalBasis, n_bands: int) -> NDArray:
    """Folded free-photon frequencies ``|k+G|``, each twice (two polarizations)."""
    u = np.sort(np.linalg.norm(np.asarray(k)[None, :] + basis.g, axis=1))
    return np.repeat(u, 2)[:n_bands]


def default_n_bands(problem: PlaneWaveProblem, u_max: float) -> int:
    """Band count covering ``u_max`` with margin, probed at symmetry points.

    The margin leaves room for modes just above the grid whose cell spread
    reaches below ``u_max``.
    """
    target = 1.15 * u_max + 0.2
    count = 0
    for k in SYMMETRY_POINTS.values():
        w = problem.eigenvalues(k, problem.size)
        count = max(count, int(np.sum(w <= target)))
    return min(problem.size, count + 8)


@dataclass
class EigenModeSet:
    """Eigenmodes over a BZ mesh.

    Only one point of every ``{k, -k}`` pair is solved; ``multiplicity``
    carries the pair count so BZ sums stay over the full mesh.
    """

    mesh: BZMesh
    positions: NDArray
    indices: NDArray
    multiplicity: NDArray
    slices: list[KSlice] = field(repr=False)

    def __iter__(self):
        weight = self.mesh.weight
        for mult, sl in zip(self.multiplicity, self.slices):
            yield weight * mult, sl

    @property
    def omega(self) -> NDArray:
        return np.array([sl.omega for sl in self.slices])


_WORKER_PROBLEM: PlaneWaveProblem | None = None


def _init_worker(structure, basis):
    global _WORKER_PROBLEM
    _WORKER_PROBLEM = PlaneWaveProblem(structure, basis)


def _solve_chunk(args):
    ks, n_bands, positions, vals_only = args
    problem = _WORKER_PROBLEM
    if vals_only:
        return [problem.eigenvalues(k, n_bands) for k in ks]
    return [problem.solve(k, n_bands, positions) for k in ks]


def sweep(problem: PlaneWaveProblem, kpoints: NDArray, n_bands: int, positions=None,
          workers: int = 1, chunk: int = 16, eigenvalues_only: bool = False) -> Iterator:
    """Solve every k-point, yielding results in k order.

    With ``workers > 1`` chunks are dispatched to a process pool; results are
    still yielded in input order so downstream reductions are deterministic.
    """
    kpoints = np.asarray(kpoints, dtype=float)
    chunks = [kpoints[i:i + chunk] for i in range(0, len(kpoints), chunk)]
    if workers <= 1:
        for ks in chunks:
            for k in ks:
                if eigenvalues_only:
                    yield problem.eigenvalues(k, n_bands)
                else:
                    yield problem.solve(k, n_bands, positions)
        return
    tasks = [(ks, n_bands, positions, eigenvalues_only) for ks in chunks]
    with ProcessPoolExecutor(max_workers=workers, initializer=_init_worker,
                             initargs=(problem.structure, problem.basis)) as pool:
        for result in pool.map(_solve_chunk, tasks):
            yield from result


def solve_mesh(problem: PlaneWaveProblem, mesh: BZMesh, n_bands: int,
               positions: Sequence | NDArray = (), workers: int = 1) -> EigenModeSet:
    """Materialize all modes over ``mesh`` (meant for small meshes and tests;
    production runs stream slices straight into the LSRF accumulator)."""
    positions = np.asarray(positions, dtype=float).reshape(-1, 3)
    idx, mult = mesh.time_reversal_representatives()
    slices = list(sweep(problem, mesh.points[idx], n_bands, positions, workers))
    return EigenModeSet(mesh=mesh, positions=positions, indices=idx, multiplicity=mult, slices=slices)


def band_path(labels: Sequence[str] = ("G", "X", "W", "L", "G", "K"), points_per_segment: int = 20):
    """k-points along a polyline through named symmetry points.

    Returns ``(kpoints, distance, tick_positions)``.
    """
    ks, dist, ticks = [], [], [0.0]
    offset = 0.0
    for a, b in zip(labels[:-1], labels[1:]):
        ka, kb = SYMMETRY_POINTS[a], SYMMETRY_POINTS[b]
        t = np.linspace(0.0, 1.0, points_per_segment, endpoint=False)
        ks.append(ka + t[:, None] * (kb - ka))
        seg = float(np.linalg.norm(kb - ka))
        dist.append(offset + t * seg)
        offset += seg
        ticks.append(offset)
    ks.append(SYMMETRY_POINTS[labels[-1]][None, :])
    dist.append(np.array([offset]))
    return np.concatenate(ks), np.concatenate(dist), ticks
