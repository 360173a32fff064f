"""Self-consistent level shifts, decay rates and emission lineshapes.

For level l at frequency omega the radiative correction reads

    Delta(omega) = sum_j (alpha_lj / 2 pi) (omega - omega_j) beta(r, omega - omega_j)

and the shifted level solves ``omega - omega_l = Delta(omega)``.  The
decomposed form keeps the vacuum shift ``Delta_l^0`` and adds only the
crystal-minus-vacuum part of the lower (real-photon) channels.

Channels above the level are handled by ``virtual``:

* ``"lumped"`` (default): the explicit bound-state channels plus one channel
  at the average excitation frequency whose strength makes the free-space sum
  equal ``Delta_l^0`` exactly.
* ``"explicit"``: bound-state channels only (continuum missing).
* ``"none"``: lower channels only.

Frequencies passed in and out are in rad/s; the spectral function is in
reduced units and is converted with the lattice constant of the quadrature
configuration.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable

import numpy as np
from numpy.typing import NDArray

from .atom import AtomModel, MissingDataError, vacuum_lamb_shift
from .lsrf import SpectralFunction
from .quadrature import QuadratureConfig, beta_pc_values, beta_values
from .units import from_reduced, to_mhz, to_reduced


class NoRootError(RuntimeError):
    """The shift equation has no sign change inside the search window."""


@dataclass(frozen=True)
class SolverConfig:
    """Root search and channel settings.

    Attributes:
        quadrature: beta settings, including the lattice constant.
        window: half-width of the search window in rad/s (None = automatic,
            ``max(1e4 alpha_max omega_l, 10 |Delta_l^0|)``).
        scan_points: sign-scan resolution inside the window.
        virtual: treatment of channels above the level, see module doc.
        fd_step_rel: finite-difference step for pole residues, relative to omega_l.
    """

    quadrature: QuadratureConfig = field(default_factory=QuadratureConfig)
    window: float | None = None
    scan_points: int = 100_000
    virtual: str = "lumped"
    fd_step_rel: float = 1e-8

    def __post_init__(self):
        if self.virtual not in ("lumped", "explicit", "none"):
            raise ValueError(f"unknown virtual channel treatment {self.virtual!r}")
        if self.scan_points < 3:
            raise ValueError("scan_points must be >= 3")
        if self.window is not None and self.window <= 0:
            raise ValueError("window must be positive")

    @property
    def lattice_constant(self) -> float:
        return self.quadrature.lattice_constant

    def at_lattice_constant(self, a: float) -> "SolverConfig":
        return replace(self, quadrature=replace(self.quadrature, lattice_constant=a))


@dataclass(frozen=True)
class ShiftResult:
    level: str
    position_index: int
    position: tuple[float, float, float]
    lattice_constant: float
    shift: float
    shift_vacuum: float
    n_roots_found: int
    roots: tuple[float, ...]
    method: str

    @property
    def shift_reduced(self) -> float:
        return float(to_reduced(self.shift, self.lattice_constant))

    @property
    def shift_mhz(self) -> float:
        return float(to_mhz(self.shift))

    @property
    def split(self) -> bool:
        return self.n_roots_found > 1


@dataclass(frozen=True)
class _Channel:
    omega_j: float
    alpha: float


def _channels(model: AtomModel, l: int, cfg: SolverConfig, omega_rel: float) -> list[_Channel]:
    om = model.omega
    chans = [_Channel(float(om[j]), float(model.alpha[l, j]))
             for j in range(len(model)) if model.alpha[l, j] > 0 and
             (om[j] < om[l] or cfg.virtual != "none")]
    if cfg.virtual != "lumped":
        return chans
    ob = float(model.omega_bar[l])
    d0 = vacuum_lamb_shift(model, l, omega_rel).delta0
    if not np.isfinite(ob):
        if d0 == 0.0 and not chans:
            return chans
        raise ValueError(f"level {model.labels[l]} needs an average excitation frequency "
                         "for the lumped virtual channel")
    wl = float(om[l])
    explicit = sum(c.alpha / (2 * math.pi) * (wl - c.omega_j) * _beta_vac_si(wl - c.omega_j, omega_rel)
                   for c in chans)
    x = ob - wl
    alpha_v = 2 * math.pi * (d0 - explicit) / (x * math.log(omega_rel / x + 1.0))
    chans.append(_Channel(ob, alpha_v))
    return chans


def _beta_vac_si(d: float, omega_rel: float) -> float:
    return math.log(abs(d / (d - omega_rel)))


def gamma(sf: SpectralFunction, position: int, model: AtomModel, level, omega,
          cfg: SolverConfig = SolverConfig()) -> NDArray:
    """Decay rate ``sum_j alpha_lj g(r, omega - omega_j)`` in rad/s.

    Above the optical cutoff the medium is free space (``g = u``), as in beta.
    """
    l = model.index(level)
    omega = np.asarray(omega, dtype=float)
    a = cfg.lattice_constant
    u_op = cfg.quadrature.omega_op_reduced
    out = np.zeros(omega.shape)
    for j in range(len(model)):
        al = model.alpha[l, j]
        if al == 0:
            continue
        u = to_reduced(omega - model.omega[j], a)
        inside = (u > 0) & (u <= u_op)
        g = np.where(u > u_op, u, sf(position, np.where(inside, u, 0.0)))
        out += al * from_reduced(g, a)
    return out


def delta_fn(sf: SpectralFunction, position: int, model: AtomModel, level, omega,
             cfg: SolverConfig = SolverConfig()) -> NDArray:
    """Frequency-dependent radiative correction (rad/s) summed over channels."""
    l = model.index(level)
    omega = np.atleast_1d(np.asarray(omega, dtype=float))
    qc = cfg.quadrature
    out = np.zeros(omega.shape)
    for c in _channels(model, l, cfg, qc.omega_rel):
        d = omega - c.omega_j
        out += c.alpha / (2 * math.pi) * d * beta_values(sf, position, to_reduced(d, qc.lattice_constant), qc)
    return out


def pc_correction(sf: SpectralFunction, position: int, model: AtomModel, level, omega,
                  cfg: SolverConfig = SolverConfig()) -> NDArray:
    """Crystal-minus-vacuum correction from the lower channels (rad/s)."""
    l = model.index(level)
    omega = np.atleast_1d(np.asarray(omega, dtype=float))
    qc = cfg.quadrature
    out = np.zeros(omega.shape)
    for j in model.lower_channels(l):
        d = omega - model.omega[j]
        out += model.alpha[l, j] / (2 * math.pi) * d * beta_pc_values(
            sf, position, to_reduced(d, qc.lattice_constant), qc)
    return out


def _window(model: AtomModel, l: int, d0: float, cfg: SolverConfig) -> float:
    if cfg.window is not None:
        return cfg.window
    amax = float(np.max(model.alpha[l])) if len(model) else 0.0
    d0 = abs(d0) if math.isfinite(d0) else 0.0
    return max(1e4 * amax * float(model.omega[l]), 10.0 * d0, 1e-6 * float(model.omega[l]), 1.0)


def _bisect(h: Callable[[float], float], lo: float, hi: float, hlo: float) -> float:
    """Bisection down to adjacent floating-point numbers."""
    while True:
        mid = 0.5 * (lo + hi)
        if not lo < mid < hi:
            break
        hm = h(mid)
        if hm == 0.0:
            return mid
        if (hm > 0) == (hlo > 0):
            lo, hlo = mid, hm
        else:
            hi = mid
    hhi = h(hi)
    return lo if abs(hlo) <= abs(hhi) else hi


def find_roots(h_vec: Callable[[NDArray], NDArray], lo: float, hi: float, n_scan: int) -> list[float]:
    """All sign changes of ``h`` on a uniform scan of [lo, hi], refined by bisection."""
    x = np.linspace(lo, hi, n_scan)
    hx = np.concatenate([h_vec(x[i:i + 8192]) for i in range(0, n_scan, 8192)])
    if not np.all(np.isfinite(hx)):
        raise FloatingPointError("non-finite value in the shift equation")
    roots = list(x[hx == 0.0])
    s = np.sign(hx)
    brackets = np.nonzero(s[:-1] * s[1:] < 0)[0]

    def h_scalar(t):
        return float(h_vec(np.array([t]))[0])

    for i in brackets:
        roots.append(_bisect(h_scalar, float(x[i]), float(x[i + 1]), float(hx[i])))
    return sorted(roots)


def _result(model, l, sf, position, cfg, roots, d0, method) -> ShiftResult:
    if not roots:
        raise NoRootError(f"no root of the shift equation for {model.labels[l]} within the window; "
                          "widen the window")
    best = min(roots, key=abs) + 0.0  # no negative zero in reports
    pos = tuple(float(v) for v in sf.positions[position])
    return ShiftResult(level=model.labels[l], position_index=int(position), position=pos,
                       lattice_constant=cfg.lattice_constant, shift=float(best), shift_vacuum=float(d0),
                       n_roots_found=len(roots), roots=tuple(float(r) for r in roots), method=method)


def solve_shift_full(sf: SpectralFunction, position: int, model: AtomModel, level,
                     cfg: SolverConfig = SolverConfig()) -> ShiftResult:
    """Roots of ``(omega - omega_l) - Delta(omega)`` near ``omega_l``."""
    l = model.index(level)
    wl = float(model.omega[l])
    qc = cfg.quadrature
    chans = _channels(model, l, cfg, qc.omega_rel)
    try:
        d0 = vacuum_lamb_shift(model, l, qc.omega_rel).delta0
    except MissingDataError:
        # only reported here; the explicit channels do not need it
        d0 = math.nan
    if not chans:
        return _result(model, l, sf, position, cfg, [0.0], d0, "full_eq6")

    def h(delta):
        out = delta.copy()
        for c in chans:
            d = wl + delta - c.omega_j
            out -= c.alpha / (2 * math.pi) * d * beta_values(sf, position, to_reduced(d, qc.lattice_constant), qc)
        return out

    w = _window(model, l, d0, cfg)
    return _result(model, l, sf, position, cfg, find_roots(h, -w, w, cfg.scan_points), d0, "full_eq6")


def solve_shift_decomposed(sf: SpectralFunction, position: int, model: AtomModel, level,
                           cfg: SolverConfig = SolverConfig()) -> ShiftResult:
    """Roots of ``delta - Delta_l^0 - (crystal correction of lower channels)``."""
    l = model.index(level)
    wl = float(model.omega[l])
    qc = cfg.quadrature
    d0 = vacuum_lamb_shift(model, l, qc.omega_rel).delta0
    lower = model.lower_channels(l)
    alphas = model.alpha[l, lower]
    omegas = model.omega[lower]

    def h(delta):
        out = delta - d0
        for al, oj in zip(alphas, omegas):
            d = wl + delta - oj
            out -= al / (2 * math.pi) * d * beta_pc_values(sf, position, to_reduced(d, qc.lattice_constant), qc)
        return out

    w = _window(model, l, d0, cfg)
    return _result(model, l, sf, position, cfg, find_roots(h, -w, w, cfg.scan_points), d0, "decomposed_eq9")


SOLVERS = {"full": solve_shift_full, "decomposed": solve_shift_decomposed}


@dataclass
class LineShape:
    """Emission amplitude on a frequency grid plus bound-state poles.

    ``omega`` is absolute (rad/s); ``poles`` holds (frequency, weight) pairs
    for roots of ``omega - omega_l - Delta`` where the decay rate vanishes.
    """

    omega: NDArray
    gamma: NDArray
    delta: NDArray
    amplitude: NDArray
    poles: list[tuple[float, float]] = field(default_factory=list)

    def integral(self) -> float:
        return float(np.trapezoid(self.amplitude, self.omega))

    def total_weight(self) -> float:
        return self.integral() + sum(w for _, w in self.poles)

    def to_csv(self, path) -> None:
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["omega", "gamma", "delta", "amplitude"])
            for row in zip(self.omega, self.gamma, self.delta, self.amplitude):
                w.writerow([repr(float(v)) for v in row])


def tan_grid(center: float, width: float, n: int = 20001, theta_max: float = 0.9999 * math.pi / 2) -> NDArray:
    """Grid ``center + width tan(theta)``, uniform in theta; resolves a
    Lorentzian of half-width ``width`` and reaches far into its tails."""
    theta = np.linspace(-theta_max, theta_max, n)
    return center + width * np.tan(theta)


def lineshape_core(omega: NDArray, omega_l: float, gamma_fn: Callable[[NDArray], NDArray],
                   delta_fn_: Callable[[NDArray], NDArray], fd_step: float) -> LineShape:
    """Amplitude ``(1/pi)(G/2) / ((w - w_l - D)^2 + (G/2)^2)`` for arbitrary
    Gamma and Delta functions, with poles located where Gamma vanishes."""
    omega = np.asarray(omega, dtype=float)
    g = np.asarray(gamma_fn(omega), dtype=float)
    d = np.asarray(delta_fn_(omega), dtype=float)
    x = omega - omega_l - d
    half = 0.5 * g
    with np.errstate(divide="ignore", invalid="ignore"):
        amp = np.where(half > 0, half / (math.pi * (x**2 + half**2)), 0.0)

    poles = []
    s = np.sign(x)
    for i in np.nonzero((s[:-1] * s[1:] < 0) | (s[:-1] == 0))[0]:
        if g[i] > 0 and g[i + 1] > 0:
            continue

        def h(t):
            t = np.atleast_1d(t)
            return t - omega_l - delta_fn_(t)

        if s[i] == 0:
            root = float(omega[i])
        else:
            root = _bisect(lambda t: float(h(t)[0]), float(omega[i]), float(omega[i + 1]), float(x[i]))
        if float(np.atleast_1d(gamma_fn(np.array([root])))[0]) > 0:
            continue
        dp = (float(delta_fn_(np.array([root + fd_step]))[0]) -
              float(delta_fn_(np.array([root - fd_step]))[0])) / (2 * fd_step)
        poles.append((root, 1.0 / (1.0 - dp)))
    return LineShape(omega=omega, gamma=g, delta=d, amplitude=amp, poles=poles)


def lineshape(sf: SpectralFunction, position: int, model: AtomModel, level, omega=None,
              cfg: SolverConfig = SolverConfig(), method: str = "full") -> LineShape:
    """Emission lineshape of ``level``.

    ``omega`` defaults to a tan-mapped grid around the shifted level, scaled
    by the decay rate there (or by the shift itself inside a gap).
    ``method`` selects the full Delta or the decomposed one.
    """
    l = model.index(level)
    wl = float(model.omega[l])
    if method == "full":
        dfun = lambda w: delta_fn(sf, position, model, l, w, cfg)  # noqa: E731
    elif method == "decomposed":
        d0 = vacuum_lamb_shift(model, l, cfg.quadrature.omega_rel).delta0
        dfun = lambda w: d0 + pc_correction(sf, position, model, l, w, cfg)  # noqa: E731
    else:
        raise ValueError(f"unknown lineshape method {method!r}")
    gfun = lambda w: gamma(sf, position, model, l, w, cfg)  # noqa: E731
    if omega is None:
        center = wl + float(dfun(np.array([wl]))[0])
        width = 0.5 * float(gfun(np.array([center]))[0])
        if width <= 0:
            width = max(abs(center - wl), 1e-9 * wl)
        omega = tan_grid(center, width)
    return lineshape_core(omega, wl, gfun, dfun, cfg.fd_step_rel * wl)


def write_shift_csv(results, path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["level", "position_index", "a_nm", "shift_reduced", "shift_MHz", "n_roots", "method"])
        for r in results:
            w.writerow([r.level, r.position_index, repr(r.lattice_constant * 1e9), repr(r.shift_reduced),
                        repr(r.shift_mhz), r.n_roots_found, r.method])
