"""Conversions between SI angular frequencies and reduced units ``u = omega a / (2 pi c)``."""

from __future__ import annotations

import math

from scipy import constants as sc

C = sc.c
HBAR = sc.hbar
# relativistic cutoff m c^2 / hbar for the electron, rad/s
OMEGA_REL = sc.m_e * sc.c**2 / sc.hbar


def to_reduced(omega, lattice_constant: float):
    """rad/s -> reduced frequency for lattice constant ``a`` in meters."""
    return omega * lattice_constant / (2.0 * math.pi * C)


def from_reduced(u, lattice_constant: float):
    """Reduced frequency -> rad/s."""
    return u * 2.0 * math.pi * C / lattice_constant


def to_mhz(omega):
    """Angular frequency (rad/s) -> ordinary frequency in MHz."""
    return omega / (2.0 * math.pi) * 1e-6
