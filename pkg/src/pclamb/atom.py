"""Multi-level atom data: level frequencies, relative linewidths and the
vacuum Lamb shift.

Frequencies are angular (rad/s) and measured from the ground state.  The
relative linewidth of the pair (l, j) is

    alpha_lj = e^2 |p_lj|^2 / (3 pi m^2 eps0 hbar c^3),  |p_lj|^2 = m^2 w_lj^2 |r_lj|^2

with ``|r_lj|^2`` summed over the final magnetic sublevels and averaged over the
initial ones (random dipole orientation).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numpy.typing import NDArray
from scipy import constants as sc

from .units import OMEGA_REL

_L_LETTERS = "spdf"

# <n' l+1 | r | n l> radial integrals in units of the Bohr radius, keyed by
# (n, l, n', l + 1); only squares enter, so the sign convention is irrelevant
_RADIAL = {
    (1, 0, 2, 1): 128 * math.sqrt(6) / 243,
    (1, 0, 3, 1): 27 * math.sqrt(6) / 128,
    (1, 0, 4, 1): 6144 * math.sqrt(15) / 78125,
    (2, 0, 2, 1): -3 * math.sqrt(3),
    (2, 0, 3, 1): 27648 * math.sqrt(3) / 15625,
    (2, 0, 4, 1): 512 * math.sqrt(30) / 2187,
    (2, 1, 3, 2): 165888 * math.sqrt(5) / 78125,
    (2, 1, 4, 2): 2048 * math.sqrt(30) / 6561,
    (3, 0, 2, 1): 10368 * math.sqrt(2) / 15625,
    (3, 0, 3, 1): -9 * math.sqrt(2),
    (3, 0, 4, 1): 14100480 * math.sqrt(5) / 5764801,
    (3, 1, 3, 2): -9 * math.sqrt(5) / 2,
    (3, 1, 4, 2): 7962624 * math.sqrt(30) / 5764801,
    (3, 2, 4, 3): 63700992 * math.sqrt(42) / 40353607,
    (4, 0, 2, 1): 1024 * math.sqrt(6) / 6561,
    (4, 0, 3, 1): 5750784 * math.sqrt(6) / 5764801,
    (4, 0, 4, 1): -6 * math.sqrt(15),
    (4, 1, 3, 2): 5308416 * math.sqrt(2) / 5764801,
    (4, 1, 4, 2): -12 * math.sqrt(3),
    (4, 2, 4, 3): -6 * math.sqrt(7),
}
HYDROGEN_MAX_N = 4

# Rydberg angular frequency (infinite nuclear mass)
OMEGA_RYDBERG = 2.0 * math.pi * sc.c * sc.Rydberg
# Bethe's average excitation energy for hydrogen, in Rydberg above the ground state
BETHE_OMEGA_BAR_RY = 19.8


class MissingDataError(ValueError):
    """A level lacks data a computation needs."""


def radial_integral(n: int, l: int, n2: int, l2: int) -> float:
    """``|<n2 l2 | r | n l>|`` in Bohr radii for ``|l - l2| = 1``; 0 otherwise."""
    if abs(l - l2) != 1:
        return 0.0
    if l2 < l:
        n, l, n2, l2 = n2, l2, n, l
    try:
        return abs(_RADIAL[(n, l, n2, l2)])
    except KeyError:
        raise KeyError(f"no tabulated radial integral for {n}{_L_LETTERS[l]}-{n2}{_L_LETTERS[l2]}") from None


def angular_factor(l: int, l2: int) -> float:
    """Sum over final m', average over initial m, of the squared angular part."""
    if abs(l - l2) != 1:
        return 0.0
    return max(l, l2) / (2 * l + 1)


def alpha_from_dipole(omega_lj: float, r2: float) -> float:
    """Relative linewidth for transition frequency ``omega_lj`` (rad/s) and
    orientation-averaged ``|r_lj|^2`` (m^2)."""
    return sc.e**2 * omega_lj**2 * r2 / (3.0 * math.pi * sc.epsilon_0 * sc.hbar * sc.c**3)


@dataclass(frozen=True)
class AtomModel:
    """Level data of a multi-level atom.

    Attributes:
        labels: level names, e.g. ``"2p"``.
        omega: level frequencies in rad/s, measured from the ground state.
        alpha: ``alpha[l, j]``, dimensionless relative linewidths.
        psi0_sq: ``|psi_l(0)|^2`` in m^-3.
        omega_bar: average excitation frequency per level in rad/s (NaN when
            not supplied), same reference as ``omega``.
        p2: ``|p_lj|^2`` in (kg m/s)^2 when dipole data is known (optional).
    """

    labels: tuple[str, ...]
    omega: NDArray
    alpha: NDArray
    psi0_sq: NDArray
    omega_bar: NDArray
    p2: NDArray | None = None

    def __post_init__(self):
        n = len(self.labels)
        if len(set(self.labels)) != n:
            raise ValueError("level labels must be unique")
        for name in ("omega", "psi0_sq", "omega_bar"):
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.shape != (n,):
                raise ValueError(f"{name} must have one entry per level")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        alpha = np.asarray(self.alpha, dtype=float)
        if alpha.shape != (n, n):
            raise ValueError("alpha must be a square matrix over the levels")
        if np.any(alpha < 0):
            raise ValueError("alpha must be non-negative")
        if np.any(np.diag(alpha) != 0):
            raise ValueError("alpha_ll must vanish")
        alpha.setflags(write=False)
        object.__setattr__(self, "alpha", alpha)
        if np.any(self.psi0_sq < 0):
            raise ValueError("|psi(0)|^2 must be non-negative")

    def __len__(self) -> int:
        return len(self.labels)

    def index(self, level: str | int) -> int:
        if isinstance(level, (int, np.integer)):
            if not 0 <= level < len(self):
                raise IndexError(f"level index {level} out of range")
            return int(level)
        try:
            return self.labels.index(level)
        except ValueError:
            raise KeyError(f"unknown level {level!r}; known: {', '.join(self.labels)}") from None

    def transition_frequency(self, l, j) -> float:
        return float(self.omega[self.index(l)] - self.omega[self.index(j)])

    def lower_channels(self, level) -> NDArray:
        """Indices j with ``omega_j < omega_l`` and ``alpha_lj > 0``."""
        l = self.index(level)
        return np.nonzero((self.omega < self.omega[l]) & (self.alpha[l] > 0))[0]

    def with_omega_bar(self, omega_bar) -> "AtomModel":
        ob = np.broadcast_to(np.asarray(omega_bar, dtype=float), (len(self),)).copy()
        return AtomModel(self.labels, self.omega, self.alpha, self.psi0_sq, ob, self.p2)

    def scaled_alpha(self, s: float) -> "AtomModel":
        return AtomModel(self.labels, self.omega, self.alpha * s, self.psi0_sq, self.omega_bar,
                         None if self.p2 is None else self.p2 * s)


def hydrogen_model(n_max: int = 3, omega_bar_ry: float | None = BETHE_OMEGA_BAR_RY) -> AtomModel:
    """Hydrogen levels ``ns, np, ...`` up to principal quantum number ``n_max``.

    ``omega_bar_ry`` sets the average excitation frequency of every level (in
    Rydberg above the ground state); ``None`` leaves it unset.
    """
    if not 2 <= n_max <= HYDROGEN_MAX_N:
        raise ValueError(f"n_max must lie in [2, {HYDROGEN_MAX_N}]")
    states = [(n, l) for n in range(1, n_max + 1) for l in range(n)]
    labels = tuple(f"{n}{_L_LETTERS[l]}" for n, l in states)
    omega = np.array([OMEGA_RYDBERG * (1.0 - 1.0 / n**2) for n, _ in states])
    a0 = sc.physical_constants["Bohr radius"][0]
    k = len(states)
    alpha = np.zeros((k, k))
    p2 = np.zeros((k, k))
    for i, (n, l) in enumerate(states):
        for j, (n2, l2) in enumerate(states):
            if abs(l - l2) != 1:
                continue
            r2 = angular_factor(l, l2) * (radial_integral(n, l, n2, l2) * a0) ** 2
            w = omega[i] - omega[j]
            alpha[i, j] = alpha_from_dipole(w, r2)
            p2[i, j] = sc.m_e**2 * w**2 * r2
    psi0 = np.array([1.0 / (math.pi * n**3 * a0**3) if l == 0 else 0.0 for n, l in states])
    if omega_bar_ry is None:
        ob = np.full(k, np.nan)
    else:
        ob = np.full(k, omega_bar_ry * OMEGA_RYDBERG)
    return AtomModel(labels, omega, alpha, psi0, ob, p2)


def two_level_model(omega_10: float, alpha_10: float) -> AtomModel:
    """Ground state ``g`` and excited state ``e`` coupled by one dipole channel."""
    alpha = np.array([[0.0, 0.0], [alpha_10, 0.0]])
    return AtomModel(("g", "e"), np.array([0.0, omega_10]), alpha, np.zeros(2), np.full(2, np.nan))


@dataclass(frozen=True)
class VacuumShift:
    level: str
    delta0: float

    @property
    def mhz(self) -> float:
        return self.delta0 / (2.0 * math.pi) * 1e-6


def vacuum_shift_prefactor(psi0_sq: float) -> float:
    """``e^4 |psi(0)|^2 / (12 pi^2 m^2 eps0^2 c^3)`` in rad/s."""
    return sc.e**4 * psi0_sq / (12.0 * math.pi**2 * sc.m_e**2 * sc.epsilon_0**2 * sc.c**3)


def vacuum_lamb_shift(model: AtomModel, level, omega_rel: float = OMEGA_REL) -> VacuumShift:
    """Nonrelativistic free-space shift of ``level``:
    ``prefactor(|psi(0)|^2) * ln(omega_rel / (omega_bar - omega_l))``."""
    l = model.index(level)
    label = model.labels[l]
    psi0 = model.psi0_sq[l]
    if psi0 == 0.0:
        return VacuumShift(label, 0.0)
    ob = model.omega_bar[l]
    if not np.isfinite(ob):
        raise MissingDataError(f"no average excitation frequency given for level {label}")
    if ob <= model.omega[l]:
        raise MissingDataError(f"average excitation frequency for {label} must exceed the level frequency")
    return VacuumShift(label, vacuum_shift_prefactor(psi0) * math.log(omega_rel / (ob - model.omega[l])))


def sum_rule_target(model: AtomModel, level) -> float:
    """``hbar e^2 |psi_l(0)|^2 / (2 eps0)``, the full value of ``sum_j w_jl |p_lj|^2``."""
    return sc.hbar * sc.e**2 * model.psi0_sq[model.index(level)] / (2.0 * sc.epsilon_0)


def sum_rule_partial(model: AtomModel, level) -> float:
    """``sum_j (w_j - w_l) |p_lj|^2`` over the bound levels in the model."""
    if model.p2 is None:
        raise MissingDataError("model carries no dipole data")
    l = model.index(level)
    return float(np.sum((model.omega - model.omega[l]) * model.p2[l]))


def load_atom_csv(levels_path, alpha_path) -> AtomModel:
    """Atom from a level table and a sparse alpha table.

    Level rows: ``level_label, omega_j_rad_s, psi0_sq_m3, omega_bar_rad_s``
    (omega_bar may be empty).  Alpha rows: ``level_from, level_to, alpha``.
    """
    labels, omega, psi0, ob = [], [], [], []
    with Path(levels_path).open(newline="") as fh:
        for row in csv.DictReader(fh):
            labels.append(row["level_label"].strip())
            omega.append(float(row["omega_j_rad_s"]))
            psi0.append(float(row["psi0_sq_m3"]))
            text = (row.get("omega_bar_rad_s") or "").strip()
            ob.append(float(text) if text else math.nan)
    index = {name: i for i, name in enumerate(labels)}
    alpha = np.zeros((len(labels), len(labels)))
    with Path(alpha_path).open(newline="") as fh:
        for row in csv.DictReader(fh):
            try:
                i, j = index[row["level_from"].strip()], index[row["level_to"].strip()]
            except KeyError as exc:
                raise ValueError(f"alpha table names unknown level {exc.args[0]!r}") from None
            alpha[i, j] = float(row["alpha"])
    return AtomModel(tuple(labels), np.array(omega), alpha, np.array(psi0), np.array(ob))


def write_atom_csv(model: AtomModel, levels_path, alpha_path) -> None:
    with Path(levels_path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["level_label", "omega_j_rad_s", "psi0_sq_m3", "omega_bar_rad_s"])
        for name, om, p, b in zip(model.labels, model.omega, model.psi0_sq, model.omega_bar):
            w.writerow([name, repr(float(om)), repr(float(p)), repr(float(b)) if np.isfinite(b) else ""])
    with Path(alpha_path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["level_from", "level_to", "alpha"])
        for i, j in zip(*np.nonzero(model.alpha)):
            w.writerow([model.labels[i], model.labels[j], repr(float(model.alpha[i, j]))])
