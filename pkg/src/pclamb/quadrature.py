"""The integral beta(r, D) over the spectral response.

    beta(D) = P int_0^{u_rel} g(r, u) / ((D - u) u) du

The crystal part runs over the tabulated g up to ``u_op``; above ``u_op`` the
medium is taken as free space (``g = u``) and that tail is integrated in
closed form.  For ``D > 0`` the pole lies inside the range and the principal
value is taken.

Default method: the integrand numerator ``q = g/u`` is the piecewise-linear
interpolant of the table, and ``P int q/(D - u)`` is evaluated exactly for it.
The result is finite at grid nodes and needs no subtraction window.  The
trapezoid rule with singularity subtraction is available as a cross-check.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numpy.typing import NDArray

from .lsrf import SpectralFunction
from .units import OMEGA_REL, to_reduced

_CHUNK = 2048


@dataclass(frozen=True)
class QuadratureConfig:
    """Cutoffs and tolerances for beta.

    Attributes:
        omega_op_reduced: optical cutoff u_op; the crystal is free space above it.
        omega_rel: relativistic cutoff in rad/s (default m c^2 / hbar).
        lattice_constant: meters; fixes the reduced value of omega_rel.
        method: ``"linear"`` (exact for the interpolated table) or
            ``"trapezoid"`` (subtraction + trapezoid with refinement).
        abs_tol, rel_tol: stopping tolerances of the trapezoid refinement.
    """

    omega_op_reduced: float = 3.5
    omega_rel: float = OMEGA_REL
    lattice_constant: float = 100e-9
    method: str = "linear"
    abs_tol: float = 1e-10
    rel_tol: float = 1e-6

    def __post_init__(self):
        if self.omega_op_reduced <= 0:
            raise ValueError("u_op must be positive")
        if not 0 < self.omega_op_reduced < self.u_rel:
            raise ValueError(f"u_op={self.omega_op_reduced} must lie below u_rel={self.u_rel:.4g}")
        if self.abs_tol <= 0 or self.rel_tol <= 0:
            raise ValueError("tolerances must be positive")
        if self.method not in ("linear", "trapezoid"):
            raise ValueError(f"unknown quadrature method {self.method!r}")

    @property
    def u_rel(self) -> float:
        return float(to_reduced(self.omega_rel, self.lattice_constant))


@dataclass(frozen=True)
class BetaValue:
    detuning: float
    value: float
    kind: str = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "kind", "principal" if self.detuning > 0 else "normal")


def _nodes(sf: SpectralFunction, position: int, u_op: float, subtract_vacuum: bool):
    """Nodes ``0, grid <= u_op, u_op`` and values of ``q = g/u`` (minus 1)."""
    if sf.u_max < u_op * (1 - 1e-12):
        raise ValueError(f"spectral function reaches u={sf.u_max}, below u_op={u_op}")
    grid = sf.freq_grid
    du = grid[1] - grid[0]
    keep = grid < u_op - 1e-9 * du
    x = np.concatenate(([0.0], grid[keep], [u_op]))
    g_top = float(np.interp(u_op, grid, sf.values[position]))
    q_inner = sf.values[position][keep] / grid[keep]
    # q(0) is not tabulated; continue the first grid value down to zero
    q = np.concatenate((q_inner[:1], q_inner, [g_top / u_op]))
    if subtract_vacuum:
        q = q - 1.0
    return x, q


def _pv_linear(x: NDArray, q: NDArray, delta: NDArray) -> NDArray:
    """``P int_{x0}^{xM} q(u)/(D - u) du`` for piecewise-linear q, excluding the
    ``-q_M ln|D - x_M|`` end term (returned by the caller so it can merge
    with the tail)."""
    s = np.diff(q) / np.diff(x)
    c = np.concatenate(([s[0]], np.diff(s), [-s[-1]]))
    out = np.empty(len(delta))
    buf = np.empty((min(_CHUNK, len(delta)), len(x)))
    logs = np.empty_like(buf)
    for i in range(0, len(delta), _CHUNK):
        d = delta[i:i + _CHUNK]
        b, lb = buf[:len(d)], logs[:len(d)]
        np.subtract(d[:, None], x[None, :], out=b)
        np.abs(b, out=lb)
        if not lb.all():
            lb[lb == 0] = 1.0  # x log|x| -> 0
        np.log(lb, out=lb)
        lb *= b
        out[i:i + _CHUNK] = lb @ c + q[0] * np.log(np.abs(d - x[0]))
    return out - (q[-1] - q[0])


def _end_log(coef: NDArray | float, delta: NDArray, u_op: float) -> NDArray:
    gap = np.abs(delta - u_op)
    coef = np.broadcast_to(coef, delta.shape)
    bad = (gap == 0) & (coef != 0)
    if np.any(bad):
        raise ValueError("detuning coincides with u_op where the integrand has a log singularity")
    return np.where(coef != 0, coef * np.log(np.where(gap > 0, gap, 1.0)), 0.0)


def _pv_trapezoid(x, q, delta, cfg: QuadratureConfig):
    """Trapezoid with subtraction, refined by halving until converged."""
    out = np.empty(len(delta))
    for j, d in enumerate(delta):
        prev = None
        xs, qs = x, q
        for _ in range(12):
            qd = float(np.interp(d, xs, qs)) if xs[0] < d < xs[-1] else 0.0
            with np.errstate(divide="ignore", invalid="ignore"):
                f = (qs - qd) / (d - xs)
            on = xs == d
            if np.any(on):
                # removable point: minus the local slope
                f[on] = -np.interp(d, 0.5 * (xs[1:] + xs[:-1]), np.diff(qs) / np.diff(xs))
            val = float(np.sum(0.5 * (f[1:] + f[:-1]) * np.diff(xs)))
            if qd != 0.0:
                val += qd * math.log(abs(d - xs[0]) / abs(d - xs[-1]))
            # the end log is added by the caller as for the linear method
            val += q[-1] * math.log(abs(d - xs[-1]))
            if prev is not None and abs(val - prev) <= max(cfg.abs_tol, cfg.rel_tol * abs(val)):
                break
            prev = val
            mid = 0.5 * (xs[1:] + xs[:-1])
            xs_new = np.empty(2 * len(xs) - 1)
            xs_new[0::2], xs_new[1::2] = xs, mid
            qs = np.interp(xs_new, xs, qs)
            xs = xs_new
        out[j] = val
    return out


def _crystal_part(sf, position, delta, cfg, subtract_vacuum):
    x, q = _nodes(sf, position, cfg.omega_op_reduced, subtract_vacuum)
    if cfg.method == "linear":
        return _pv_linear(x, q, delta), q[-1]
    return _pv_trapezoid(x, q, delta, cfg), q[-1]


def _as_detunings(delta) -> NDArray:
    d = np.atleast_1d(np.asarray(delta, dtype=float))
    if np.any(d == 0):
        raise ValueError("beta is undefined at zero detuning")
    if not np.all(np.isfinite(d)):
        raise ValueError("detuning must be finite")
    return d


def beta_values(sf: SpectralFunction, position: int, delta, cfg: QuadratureConfig = QuadratureConfig()) -> NDArray:
    """beta for an array of reduced detunings (vacuum tail included)."""
    d = _as_detunings(delta)
    inner, q_top = _crystal_part(sf, position, d, cfg, subtract_vacuum=False)
    u_op, u_rel = cfg.omega_op_reduced, cfg.u_rel
    # crystal end term -q_top ln|D-u_op| merges with the tail's +ln|D-u_op|
    return inner + _end_log(1.0 - q_top, d, u_op) - np.log(np.abs(d - u_rel))


def beta(sf: SpectralFunction, position: int, delta: float, cfg: QuadratureConfig = QuadratureConfig()) -> BetaValue:
    return BetaValue(float(delta), float(beta_values(sf, position, delta, cfg)[0]))


def beta_pc_values(sf: SpectralFunction, position: int, delta, cfg: QuadratureConfig = QuadratureConfig()) -> NDArray:
    """``P int_0^{u_op} (g - u)/((D - u) u) du`` for an array of detunings."""
    d = _as_detunings(delta)
    inner, q_top = _crystal_part(sf, position, d, cfg, subtract_vacuum=True)
    return inner + _end_log(-q_top, d, cfg.omega_op_reduced)


def beta_pc_correction(sf: SpectralFunction, position: int, delta: float,
                       cfg: QuadratureConfig = QuadratureConfig()) -> float:
    return float(beta_pc_values(sf, position, delta, cfg)[0])


def beta_vacuum(delta, u_rel: float) -> NDArray:
    """Closed form for free space, ``ln|D / (D - u_rel)|``."""
    d = _as_detunings(delta)
    return np.log(np.abs(d / (d - u_rel)))


def write_beta_csv(rows, path) -> None:
    """``rows``: iterable of (position_index, BetaValue[, vacuum value])."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["position_index", "delta", "kind", "beta", "beta_vacuum"])
        for p, b, vac in rows:
            w.writerow([p, repr(b.detuning), b.kind, repr(b.value), repr(float(vac))])
