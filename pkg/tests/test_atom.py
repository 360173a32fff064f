import math

import numpy as np
import pytest
import sympy as sp
from scipy import constants as sc
from sympy.physics.hydrogen import R_nl

from pclamb.atom import (
    AtomModel,
    MissingDataError,
    hydrogen_model,
    load_atom_csv,
    radial_integral,
    sum_rule_partial,
    sum_rule_target,
    two_level_model,
    vacuum_lamb_shift,
    write_atom_csv,
)

A0 = sc.physical_constants["Bohr radius"][0]
_r = sp.symbols("r", positive=True)


def _sympy_radial(n, l, n2, l2):
    return abs(float(sp.integrate(R_nl(n, l, _r, 1) * R_nl(n2, l2, _r, 1) * _r**3, (_r, 0, sp.oo))))


PAIRS = [(n, l, n2, l + 1) for n in range(1, 5) for l in range(n) for n2 in range(1, 5)
         if l + 1 < n2 and (n2, l + 1) != (n, l)]


@pytest.mark.parametrize("pair", PAIRS)
def test_radial_integrals_match_symbolic_oracle(pair):
    assert radial_integral(*pair) == pytest.approx(_sympy_radial(*pair), rel=1e-12)
    n, l, n2, l2 = pair
    assert radial_integral(n2, l2, n, l) == radial_integral(*pair)


def test_psi0_2s_symbolic():
    # |psi_2s(0)|^2 = R_20(0)^2 / (4 pi) in a0^-3
    oracle = float(R_nl(2, 0, 0, 1) ** 2 / (4 * sp.pi))
    m = hydrogen_model(2)
    assert m.psi0_sq[m.index("2s")] * A0**3 == pytest.approx(oracle, rel=1e-12)
    assert m.psi0_sq[m.index("2s")] == pytest.approx(1 / (8 * math.pi * A0**3), rel=1e-12)
    assert m.psi0_sq[m.index("2p")] == 0.0


def test_selection_rules_and_diagonal():
    m = hydrogen_model(4)
    letters = [lab[1] for lab in m.labels]
    ell = np.array(["spdf".index(c) for c in letters])
    allowed = np.abs(ell[:, None] - ell[None, :]) == 1
    assert np.all(m.alpha[~allowed] == 0)
    assert np.all(np.diag(m.alpha) == 0)
    assert np.all(m.alpha >= 0)
    assert m.alpha[m.index("2s"), m.index("1s")] == 0.0


def test_alpha_2p_1s_gives_einstein_a():
    # alpha * omega is the spontaneous rate; textbook A(2p->1s) = 6.2649e8 s^-1
    m = hydrogen_model(2)
    rate = m.alpha[m.index("2p"), m.index("1s")] * m.transition_frequency("2p", "1s")
    assert rate == pytest.approx(6.2649e8, rel=2e-3)


def test_dipole_symmetry():
    m = hydrogen_model(3)
    # |r|^2 for l -> l' and l' -> l differ only by the (2l+1) averaging
    i, j = m.index("3d"), m.index("2p")
    r2_ij = m.p2[i, j] / (sc.m_e * m.transition_frequency("3d", "2p")) ** 2
    r2_ji = m.p2[j, i] / (sc.m_e * m.transition_frequency("3d", "2p")) ** 2
    assert r2_ij * 5 == pytest.approx(r2_ji * 3, rel=1e-12)


def test_vacuum_shifts():
    m = hydrogen_model(4)
    assert vacuum_lamb_shift(m, "2p").delta0 == 0.0
    assert vacuum_lamb_shift(m, "3d").delta0 == 0.0
    assert vacuum_lamb_shift(m, "2s").mhz == pytest.approx(1040, rel=0.1)
    # the 1s shift scales as n^-3 against 2s, up to the logarithm
    assert vacuum_lamb_shift(m, "1s").delta0 > 7 * vacuum_lamb_shift(m, "2s").delta0


def test_vacuum_shift_needs_omega_bar():
    m = hydrogen_model(2, omega_bar_ry=None)
    with pytest.raises(MissingDataError):
        vacuum_lamb_shift(m, "2s")
    assert vacuum_lamb_shift(m, "2p").delta0 == 0.0
    low = hydrogen_model(2, omega_bar_ry=0.5)
    with pytest.raises(MissingDataError):
        vacuum_lamb_shift(low, "2s")


def test_sum_rule_monotone_truncation():
    # bound states carry only part of the sum; more shells must add to it
    fr = [sum_rule_partial(hydrogen_model(n), "1s") / sum_rule_target(hydrogen_model(n), "1s") for n in (2, 3, 4)]
    assert all(0 < a < b < 1 for a, b in zip(fr, fr[1:]))


def test_model_validation():
    with pytest.raises(ValueError):
        AtomModel(("a", "b"), np.zeros(2), np.array([[0, -1], [0, 0]]), np.zeros(2), np.zeros(2))
    with pytest.raises(ValueError):
        AtomModel(("a", "b"), np.zeros(2), np.array([[1.0, 0], [0, 0]]), np.zeros(2), np.zeros(2))
    with pytest.raises(ValueError):
        AtomModel(("a", "a"), np.zeros(2), np.zeros((2, 2)), np.zeros(2), np.zeros(2))
    with pytest.raises(ValueError):
        hydrogen_model(5)
    with pytest.raises(KeyError):
        hydrogen_model(2).index("5g")


def test_csv_round_trip(tmp_path):
    m = hydrogen_model(3)
    write_atom_csv(m, tmp_path / "levels.csv", tmp_path / "alpha.csv")
    m2 = load_atom_csv(tmp_path / "levels.csv", tmp_path / "alpha.csv")
    assert m2.labels == m.labels
    assert np.array_equal(m2.omega, m.omega)
    assert np.array_equal(m2.alpha, m.alpha)
    assert np.array_equal(m2.psi0_sq, m.psi0_sq)
    assert vacuum_lamb_shift(m2, "2s").delta0 == vacuum_lamb_shift(m, "2s").delta0


def test_two_level_model():
    m = two_level_model(1e15, 1e-8)
    assert m.lower_channels("e").tolist() == [0]
    assert m.lower_channels("g").tolist() == []
