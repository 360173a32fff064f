import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pclamb.crystal import (
    CELL_VOLUME,
    FCC_PRIMITIVE,
    FCC_RECIPROCAL,
    CrystalStructure,
    ReciprocalBasis,
    epsilon_fourier,
    epsilon_matrix,
    epsilon_real_space,
    inside_sphere,
    inverse_epsilon_matrix,
    nearest_lattice_distance,
)


def test_dual_bases():
    assert np.allclose(FCC_PRIMITIVE @ FCC_RECIPROCAL.T, np.eye(3))
    assert abs(abs(np.linalg.det(FCC_PRIMITIVE)) - CELL_VOLUME) < 1e-15


def test_opal_defaults():
    s = CrystalStructure()
    assert s.eps_background == pytest.approx(3.6**2)
    # R from f = (4/3) pi R^3 / V_cell
    assert 4 / 3 * math.pi * s.sphere_radius**3 / CELL_VOLUME == pytest.approx(0.74)
    # spheres must not overlap: nearest neighbours are a/sqrt(2) apart
    assert 2 * s.sphere_radius < 1 / math.sqrt(2)


@pytest.mark.parametrize("kwargs", [
    dict(eps_background=0.5), dict(eps_sphere=0.9), dict(filling_fraction=0.0),
    dict(filling_fraction=0.75), dict(filling_fraction=-0.1), dict(lattice_constant=0.0),
])
def test_invalid_structures_rejected(kwargs):
    with pytest.raises(ValueError):
        CrystalStructure(**kwargs)


def _brute_count(g2_max):
    n = 0
    for m in itertools.product(range(-8, 9), repeat=3):
        g = np.array(m) @ FCC_RECIPROCAL
        n += g @ g <= g2_max + 1e-9
    return n


@pytest.mark.parametrize("g2", [0, 3, 4, 8, 11, 32, 48])
def test_basis_matches_brute_force_count(g2):
    assert len(ReciprocalBasis.from_cutoff(math.sqrt(g2))) == _brute_count(g2)


def test_basis_default_sizes_and_order():
    b = ReciprocalBasis.from_cutoff(math.sqrt(48))
    assert len(b) == 339
    g2 = np.einsum("ij,ij->i", b.g, b.g)
    assert np.all(np.diff(g2) >= -1e-9)
    assert np.allclose(b.g[0], 0)
    assert len(ReciprocalBasis.with_at_least(100)) >= 100
    assert b.index_of((0, 0, 0)) == 0
    with pytest.raises(KeyError):
        b.index_of((9, 9, 9))


def test_epsilon_fourier_zero_is_mean():
    s = CrystalStructure()
    assert epsilon_fourier(s, np.zeros((1, 3)))[0] == pytest.approx(s.mean_epsilon)


def test_epsilon_fourier_matches_real_space_sum():
    # oracle: direct Fourier sum of the real-space step function on a fine grid
    s = CrystalStructure()
    n = 48
    t = np.arange(n) / n
    frac = np.array(np.meshgrid(t, t, t, indexing="ij")).reshape(3, -1).T
    eps = epsilon_real_space(s, frac @ FCC_PRIMITIVE)
    for m in [(1, 0, 0), (1, 1, 0), (1, 1, 1), (2, 0, 1)]:
        g = np.array(m) @ FCC_RECIPROCAL
        direct = np.mean(eps * np.exp(-2j * math.pi * (frac @ FCC_PRIMITIVE) @ g))
        assert abs(direct.imag) < 1e-10
        assert epsilon_fourier(s, g[None])[0] == pytest.approx(direct.real, abs=0.05)


def test_inverse_epsilon():
    b = ReciprocalBasis.from_cutoff(math.sqrt(12))
    vac = CrystalStructure.vacuum()
    assert np.array_equal(inverse_epsilon_matrix(vac, b), np.eye(len(b)))
    s = CrystalStructure()
    eta = inverse_epsilon_matrix(s, b)
    assert np.allclose(eta, eta.T)
    assert np.allclose(eta @ epsilon_matrix(s, b), np.eye(len(b)), atol=1e-8)
    assert np.all(np.linalg.eigvalsh(eta) > 0)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-3, 3), min_size=3, max_size=3),
       st.lists(st.integers(-3, 3), min_size=3, max_size=3))
def test_lattice_distance_periodic(r, n):
    r = np.array(r)
    shift = np.array(n) @ FCC_PRIMITIVE
    assert nearest_lattice_distance(r) == pytest.approx(nearest_lattice_distance(r + shift), abs=1e-9)
    # octahedral holes are the farthest points from any site, a/2 away
    assert nearest_lattice_distance(r) <= 0.5 + 1e-9


def test_inside_sphere_volume_fraction():
    # Monte-Carlo oracle for the filling fraction
    s = CrystalStructure()
    rng = np.random.Generator(np.random.PCG64(5))
    pts = rng.random((200_000, 3)) @ FCC_PRIMITIVE
    assert np.mean(inside_sphere(s, pts)) == pytest.approx(0.74, abs=0.005)
