"""Local spectral response function g(r, u) by Brillouin-zone integration.

In reduced units (``u = omega a / 2 pi c``, k in ``2 pi / a``) the response is

    g(r, u) = 1 / (8 pi u) * sum_n int_BZ d^3k |u_nk(r)|^2 delta(u - u_nk)

with envelopes normalized per unit cell, so that free space gives ``g = u``.

The delta function is resolved on a uniform grid.  By default every mode is
spread over the range of frequencies its mesh cell covers, using the group
velocity (exact for linear bands).  Bands that are locally cones through
``k = 0`` (the long-wavelength branches) are instead sampled radially.  A light
Gaussian smoothing of the binned g follows.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np
from numpy.typing import NDArray
from scipy.ndimage import gaussian_filter1d

from .bands import ZERO_FREQUENCY, EigenModeSet, KSlice
from .mesh import BZMesh


class InsufficientBandsError(ValueError):
    """The computed bands do not reach the top of the frequency grid."""


@dataclass(frozen=True)
class FrequencyGrid:
    """Uniform grid ``u_i = i * du`` for ``i = 1..n_bins``.

    Bin ``i`` collects modes with ``u`` in ``[u_i - du/2, u_i + du/2)``.
    """

    u_max: float = 4.0
    n_bins: int = 800

    def __post_init__(self):
        if self.u_max <= 0 or self.n_bins < 2:
            raise ValueError("frequency grid needs u_max > 0 and at least two bins")

    @property
    def du(self) -> float:
        return self.u_max / self.n_bins

    @property
    def points(self) -> NDArray:
        return np.arange(1, self.n_bins + 1) * self.du

    @property
    def edges(self) -> NDArray:
        return (np.arange(self.n_bins + 1) + 0.5) * self.du

    def bin_index(self, u: NDArray) -> NDArray:
        return np.floor(np.asarray(u) / self.du + 0.5).astype(np.int64) - 1


@dataclass(frozen=True)
class SmoothingConfig:
    """How the delta function is resolved.

    Attributes:
        spreading: ``"linear"`` spreads each mode over its mesh cell using the
            group velocity; ``"histogram"`` bins the mode frequency as is.
        sigma_bins: width of the final Gaussian smoothing, in bins (0 = off).
        cone_tolerance: relative tolerance of ``k . v = u`` used to detect
            cone-like branches.
        cone_samples: samples per cell edge for cone-like branches.
        mask_gaps: zero g inside complete gaps found from the band extrema,
            removing weight that broadening carries across the gap edges.
    """

    spreading: str = "linear"
    sigma_bins: float = 1.5
    cone_tolerance: float = 0.05
    cone_samples: int = 16
    mask_gaps: bool = True

    def __post_init__(self):
        if self.spreading not in ("linear", "histogram"):
            raise ValueError(f"unknown spreading {self.spreading!r}")
        if self.sigma_bins < 0:
            raise ValueError("sigma_bins must be >= 0")


@dataclass
class SpectralFunction:
    """Tabulated g(r, u); ``values`` has shape ``(n_positions, n_bins)``."""

    positions: NDArray
    freq_grid: NDArray
    values: NDArray
    gaps: tuple = ()

    @classmethod
    def vacuum(cls, positions, grid: FrequencyGrid = FrequencyGrid()) -> "SpectralFunction":
        positions = np.atleast_2d(np.asarray(positions, dtype=float)).reshape(-1, 3)
        u = grid.points
        return cls(positions=positions, freq_grid=u, values=np.tile(u, (len(positions), 1)))

    @property
    def u_max(self) -> float:
        return float(self.freq_grid[-1])

    def __call__(self, position: int, u) -> NDArray:
        """g at reduced frequency ``u`` by linear interpolation; 0 for ``u <= 0``."""
        u = np.asarray(u, dtype=float)
        if np.any(u > self.u_max * (1 + 1e-12)):
            raise ValueError(f"frequency beyond tabulated range (u_max={self.u_max})")
        nodes = np.concatenate(([0.0], self.freq_grid))
        vals = np.concatenate(([0.0], self.values[position]))
        return np.where(u > 0, np.interp(u, nodes, vals), 0.0)

    def subset(self, indices) -> "SpectralFunction":
        indices = np.asarray(indices)
        return SpectralFunction(self.positions[indices], self.freq_grid, self.values[indices], self.gaps)

    def to_csv(self, path) -> None:
        write_lsrf_csv(self, path)


def _box_cdf(y: NDArray, w: NDArray) -> NDArray:
    """CDF of a sum of three uniform variables on ``[0, w_i]`` at offsets ``y``.

    ``w`` is ``(m, 3)`` sorted descending; ``y`` is ``(m, L)``.  Widths below
    ``1e-3`` of the largest fall back to the two-, one- and zero-width forms
    (the polynomial differences cancel badly for very thin boxes).
    """
    w1, w2, w3 = w[:, 0:1], w[:, 1:2], w[:, 2:3]
    tiny = 1e-3 * w1
    three = (w3 > tiny)[:, 0]
    two = ~three & (w2 > tiny)[:, 0]
    one = ~three & ~two & (w1 > 1e-14)[:, 0]
    zero = ~(three | two | one)
    out = np.empty_like(y)

    def p(x, n):
        return np.maximum(x, 0.0) ** n

    if three.any():
        Y, a, b, c = y[three], w1[three], w2[three], w3[three]
        s = (p(Y, 3) - p(Y - a, 3) - p(Y - b, 3) - p(Y - c, 3)
             + p(Y - a - b, 3) + p(Y - a - c, 3) + p(Y - b - c, 3) - p(Y - a - b - c, 3))
        out[three] = s / (6.0 * a * b * c)
    if two.any():
        Y, a, b = y[two], w1[two], w2[two]
        out[two] = (p(Y, 2) - p(Y - a, 2) - p(Y - b, 2) + p(Y - a - b, 2)) / (2.0 * a * b)
    if one.any():
        out[one] = y[one] / w1[one]
    if zero.any():
        out[zero] = (y[zero] >= 0).astype(float)
    out[y <= 0] = 0.0
    out[y >= w.sum(axis=1, keepdims=True)] = 1.0
    return np.clip(out, 0.0, 1.0)


class LsrfAccumulator:
    """Streaming BZ integration: add k-slices, then call :meth:`result`.

    Each slice contributes a partial histogram; partials are summed in the
    order they are added, so a fixed slice order gives bit-identical output.
    """

    def __init__(self, positions, grid: FrequencyGrid, mesh: BZMesh,
                 smoothing: SmoothingConfig = SmoothingConfig()):
        self.positions = np.atleast_2d(np.asarray(positions, dtype=float)).reshape(-1, 3)
        self.grid = grid
        self.mesh = mesh
        self.smoothing = smoothing
        # extra bins above u_max so smoothing near the top sees real data
        self.pad = int(math.ceil(3.0 * smoothing.sigma_bins)) + 1 if smoothing.sigma_bins > 0 else 0
        self.n_total = grid.n_bins + self.pad
        self.hist = np.zeros((len(self.positions), self.n_total))
        self.top_band_min = math.inf
        self.band_min: NDArray | None = None
        self.band_max: NDArray | None = None
        t = (np.arange(smoothing.cone_samples) + 0.5) / smoothing.cone_samples - 0.5
        sub = np.array(np.meshgrid(t, t, t, indexing="ij")).reshape(3, -1).T
        self._cell_offsets = sub @ mesh.cell_vectors

    def add(self, sl: KSlice, weight: float) -> None:
        self.top_band_min = min(self.top_band_min, float(sl.omega[-1]))
        if self.band_min is None:
            self.band_min, self.band_max = sl.omega.copy(), sl.omega.copy()
        else:
            np.minimum(self.band_min, sl.omega, out=self.band_min)
            np.maximum(self.band_max, sl.omega, out=self.band_max)
        live = sl.omega > ZERO_FREQUENCY
        u = sl.omega[live]
        env = sl.envelope_sq[live] * weight
        if self.smoothing.spreading == "histogram":
            frac = self._histogram_fractions(u)
        else:
            frac = self._linear_fractions(sl.k, u, sl.velocity[live])
        self.hist += env.T @ frac

    def _histogram_fractions(self, u):
        frac = np.zeros((len(u), self.n_total))
        idx = self.grid.bin_index(u)
        ok = (idx >= 0) & (idx < self.n_total)
        frac[np.nonzero(ok)[0], idx[ok]] = 1.0
        return frac

    def _linear_fractions(self, k, u, v):
        grid = self.grid
        nb = self.n_total
        frac = np.zeros((len(u), nb))
        kappa = float(np.linalg.norm(k))
        cone = np.zeros(len(u), dtype=bool)
        if kappa > 0:
            cone = np.abs(v @ k - u) < self.smoothing.cone_tolerance * u
        for j in np.nonzero(cone)[0]:
            us = (u[j] / kappa) * np.linalg.norm(k[None, :] + self._cell_offsets, axis=1)
            idx = grid.bin_index(us)
            idx = idx[(idx >= 0) & (idx < nb)]
            frac[j] += np.bincount(idx, minlength=nb)[:nb] / len(us)

        rest = np.nonzero(~cone)[0]
        if len(rest) == 0:
            return frac
        widths = np.sort(np.abs(v[rest] @ self.mesh.cell_vectors.T), axis=1)[:, ::-1]
        total = widths.sum(axis=1)
        lo = u[rest] - 0.5 * total
        edges0 = grid.edges[0]
        first = np.floor((lo - edges0) / grid.du).astype(np.int64)
        span = int(np.ceil(total.max() / grid.du)) + 2
        cols = first[:, None] + np.arange(span + 1)[None, :]
        cdf = _box_cdf(edges0 + cols * grid.du - lo[:, None], widths)
        part = np.diff(cdf, axis=1)
        cols = cols[:, :-1]
        ok = (cols >= 0) & (cols < nb) & (part != 0)
        rows = np.broadcast_to(rest[:, None], cols.shape)
        np.add.at(frac, (rows[ok], cols[ok]), part[ok])
        return frac

    @property
    def required_top(self) -> float:
        """Frequency the highest band must stay above for a complete result."""
        return (self.n_total + 0.5) * self.grid.du

    def result(self, check_coverage: bool = True) -> SpectralFunction:
        if check_coverage and self.top_band_min < self.required_top:
            raise InsufficientBandsError(
                f"highest computed band dips to u={self.top_band_min:.4f} below "
                f"u={self.required_top:.4f} needed for the grid; increase n_bands"
            )
        du = self.grid.du
        u_all = (np.arange(self.n_total) + 1) * du
        g = self.hist / du / (8.0 * math.pi * u_all[None, :])
        if self.smoothing.sigma_bins > 0:
            # smooth g, not the density: a linear g passes unchanged, and the
            # odd continuation below u = 0 keeps that true at the bottom edge
            k = min(self.pad, self.n_total)
            ext = np.concatenate([-g[:, :k][:, ::-1], np.zeros((len(g), 1)), g], axis=1)
            ext = gaussian_filter1d(ext, self.smoothing.sigma_bins, axis=1, mode="constant", truncate=3.0)
            g = ext[:, k + 1:]
        u = self.grid.points
        values = np.maximum(g[:, :self.grid.n_bins], 0.0)
        gaps = ()
        if self.smoothing.mask_gaps and self.band_min is not None:
            gaps = tuple(complete_gaps(self.band_min, self.band_max))
            for gap in gaps:
                values[:, (u > gap.u_lo) & (u < gap.u_hi)] = 0.0
        return SpectralFunction(positions=self.positions.copy(), freq_grid=u, values=values, gaps=gaps)


def compute_lsrf(modes: EigenModeSet, grid: FrequencyGrid = FrequencyGrid(),
                 smoothing: SmoothingConfig = SmoothingConfig(),
                 check_coverage: bool = True) -> SpectralFunction:
    """g(r, u) at the positions the modes were evaluated at."""
    acc = LsrfAccumulator(modes.positions, grid, modes.mesh, smoothing)
    for weight, sl in modes:
        acc.add(sl, weight)
    return acc.result(check_coverage)


@dataclass(frozen=True)
class Gap:
    """Complete gap between band ``lower_band`` and ``lower_band + 1`` (1-based)."""

    lower_band: int
    u_lo: float
    u_hi: float

    @property
    def width(self) -> float:
        return self.u_hi - self.u_lo

    @property
    def midgap(self) -> float:
        return 0.5 * (self.u_lo + self.u_hi)

    def contains(self, u) -> bool:
        return self.u_lo < u < self.u_hi


def find_gap(source, min_relative_width: float = 1e-3) -> Gap | None:
    """Largest complete gap.

    ``source`` is either a band array ``(n_k, n_bands)`` of reduced
    frequencies over a full BZ mesh, or a :class:`SpectralFunction`.  A
    spectral function reports the gaps recorded while it was built, or else
    the widest frequency run where g vanishes at every position
    (``lower_band`` is then 0).
    """
    if isinstance(source, SpectralFunction):
        found = [g for g in source.gaps if g.width >= min_relative_width * g.midgap]
        if found:
            return max(found, key=lambda g: g.width)
        zero = np.all(source.values <= 0.0, axis=0)
        best = None
        i = 0
        u = source.freq_grid
        while i < len(u):
            if zero[i]:
                j = i
                while j + 1 < len(u) and zero[j + 1]:
                    j += 1
                if i > 0 and j + 1 < len(u):
                    cand = Gap(0, float(u[i - 1]), float(u[j + 1]))
                    if best is None or cand.width > best.width:
                        best = cand
                i = j + 1
            else:
                i += 1
        if best is not None and best.width < min_relative_width * best.midgap:
            return None
        return best
    bands = np.sort(np.asarray(source, dtype=float), axis=1)
    gaps = complete_gaps(bands.min(axis=0), bands.max(axis=0), min_relative_width)
    return max(gaps, key=lambda g: g.width, default=None)


def complete_gaps(band_min: NDArray, band_max: NDArray, min_relative_width: float = 1e-3) -> list[Gap]:
    """All intervals ``(max_k u_n, min_k u_{n+1})`` that are open, ascending."""
    out = []
    for n in range(len(band_min) - 1):
        lo, hi = float(band_max[n]), float(band_min[n + 1])
        if hi > lo > ZERO_FREQUENCY:
            gap = Gap(n + 1, lo, hi)
            if gap.width >= min_relative_width * gap.midgap:
                out.append(gap)
    return out


def write_lsrf_csv(sf: SpectralFunction, path) -> None:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["position_index", "u", "g"])
        for p in range(len(sf.positions)):
            for u, g in zip(sf.freq_grid, sf.values[p]):
                w.writerow([p, repr(float(u)), repr(float(g))])


def read_lsrf_csv(path, positions) -> SpectralFunction:
    rows = np.loadtxt(path, delimiter=",", skiprows=1)
    positions = np.atleast_2d(np.asarray(positions, dtype=float))
    n = len(positions)
    idx = rows[:, 0].astype(int)
    u = rows[idx == 0, 1]
    values = np.array([rows[idx == p, 2] for p in range(n)])
    return SpectralFunction(positions=positions, freq_grid=u, values=values)


def lsrf_from_sweep(slices: Iterable[tuple[float, KSlice]], positions, grid: FrequencyGrid,
                    mesh: BZMesh, smoothing: SmoothingConfig = SmoothingConfig(),
                    check_coverage: bool = True) -> SpectralFunction:
    acc = LsrfAccumulator(positions, grid, mesh, smoothing)
    for weight, sl in slices:
        acc.add(sl, weight)
    return acc.result(check_coverage)
