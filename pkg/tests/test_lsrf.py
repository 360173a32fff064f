import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pclamb.bands import KSlice
from pclamb.crystal import CrystalStructure
from pclamb.lsrf import (
    FrequencyGrid,
    Gap,
    InsufficientBandsError,
    LsrfAccumulator,
    SmoothingConfig,
    SpectralFunction,
    _box_cdf,
    complete_gaps,
    find_gap,
    read_lsrf_csv,
    write_lsrf_csv,
)
from pclamb.mesh import BZMesh
from pclamb.pipeline import build_lsrf, make_problem


@pytest.fixture(scope="module")
def small_vacuum():
    p = make_problem(CrystalStructure.vacuum(), math.sqrt(24))
    grid = FrequencyGrid(u_max=1.5, n_bins=300)
    return build_lsrf(p, BZMesh.cubic(8), [[0, 0, 0], [0.2, 0.1, 0.3]], grid)


@pytest.fixture(scope="module")
def small_opal():
    p = make_problem(CrystalStructure(), math.sqrt(12))
    return build_lsrf(p, BZMesh.cubic(4), [[0, 0, 0], [0.34, 0, 0]], FrequencyGrid(u_max=1.2, n_bins=240))


@settings(max_examples=40, deadline=None)
# subnormal widths underflow in the Monte Carlo reference itself
@given(st.lists(st.one_of(st.just(0.0), st.floats(1e-9, 2.0)), min_size=3, max_size=3))
def test_box_cdf_matches_monte_carlo(w):
    w = np.sort(np.array(w))[::-1]
    rng = np.random.default_rng(1)
    samples = (rng.random((100_000, 3)) * w).sum(axis=1)
    y = np.linspace(-0.1, w.sum() + 0.1, 25)
    cdf = _box_cdf(y[None, :], w[None, :])[0]
    emp = np.searchsorted(np.sort(samples), y, side="right") / len(samples)
    assert np.max(np.abs(cdf - emp)) < 0.01
    assert np.all(np.diff(cdf) >= -1e-12)


def test_frequency_grid():
    g = FrequencyGrid()
    assert g.du == pytest.approx(0.005)
    assert g.points[0] == pytest.approx(0.005)
    assert g.points[-1] == pytest.approx(4.0)
    assert np.array_equal(g.bin_index(g.points), np.arange(g.n_bins))


def test_vacuum_small_mesh(small_vacuum):
    sf = small_vacuum.sf
    u = sf.freq_grid
    m = (u >= 0.3) & (u <= 1.2)
    assert np.max(np.abs(sf.values[:, m] / u[m] - 1)) < 0.05
    # homogeneous space: g cannot depend on position
    assert np.allclose(sf.values[0], sf.values[1])
    assert sf.gaps == ()
    assert find_gap(sf) is None


def test_opal_gap_and_masking(small_opal):
    sf = small_opal.sf
    gap = find_gap(sf)
    assert gap.lower_band == 8
    assert gap == small_opal.gap()
    inside = (sf.freq_grid > gap.u_lo) & (sf.freq_grid < gap.u_hi)
    assert inside.any()
    assert np.all(sf.values[:, inside] == 0.0)
    assert np.all(sf.values >= 0)


def test_find_gap_from_bands():
    bands = np.array([[0.1, 0.5, 0.9], [0.3, 0.6, 1.0]])
    gap = find_gap(bands)
    assert gap == Gap(2, 0.6, 0.9)
    assert gap.contains(0.7) and not gap.contains(0.95)
    assert find_gap(np.array([[0.1, 0.5], [0.6, 0.7]])) is None
    assert complete_gaps(np.array([0.1, 0.5]), np.array([0.5, 0.7])) == []


def test_find_gap_from_zero_run():
    u = FrequencyGrid(1.0, 200).points
    g = u * ((u < 0.4) | (u > 0.5))
    gap = find_gap(SpectralFunction(np.zeros((1, 3)), u, g[None]))
    # edges are the last nonzero nodes on either side
    assert gap.u_lo == pytest.approx(0.395) and gap.u_hi == pytest.approx(0.505)
    assert find_gap(SpectralFunction.vacuum([[0, 0, 0]])) is None


def test_weak_contrast_has_no_gap():
    # index 1.2 is far below the threshold for a complete gap
    p = make_problem(CrystalStructure(eps_background=1.44), math.sqrt(12))
    b = build_lsrf(p, BZMesh.cubic(4), [[0, 0, 0]], FrequencyGrid(u_max=1.2, n_bins=240))
    assert b.gap(min_relative_width=0.01) is None


def test_insufficient_bands():
    p = make_problem(CrystalStructure.vacuum(), math.sqrt(24))
    with pytest.raises(InsufficientBandsError):
        build_lsrf(p, BZMesh.cubic(4), [[0, 0, 0]], FrequencyGrid(u_max=1.5, n_bins=300), n_bands=6)


def _synthetic_slices(seed, n):
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n):
        omega = np.sort(rng.uniform(0.3, 0.6, 5))
        out.append(KSlice(k=rng.uniform(-0.5, 0.5, 3), omega=np.append(omega, 2.0),
                          velocity=rng.normal(scale=0.1, size=(6, 3)),
                          envelope_sq=rng.uniform(0, 2, (6, 2))))
    return out


def _accumulate(slices, spreading="linear"):
    acc = LsrfAccumulator(np.zeros((2, 3)), FrequencyGrid(1.0, 200), BZMesh.cubic(4),
                          SmoothingConfig(spreading=spreading, mask_gaps=False))
    for sl in slices:
        acc.add(sl, 1.0)
    return acc.result()


@pytest.mark.parametrize("spreading", ["linear", "histogram"])
def test_accumulation_order_invariant(spreading):
    slices = _synthetic_slices(3, 20)
    a = _accumulate(slices, spreading).values
    b = _accumulate(slices[::-1], spreading).values
    assert np.allclose(a, b, rtol=1e-12, atol=1e-14)


def test_spreading_conserves_weight():
    slices = _synthetic_slices(4, 10)
    for spreading in ("linear", "histogram"):
        sf = _accumulate(slices, spreading)
        total = np.sum(sf.values * 8 * math.pi * sf.freq_grid, axis=1) * 0.005
        expected = sum(sl.envelope_sq[:5].sum(axis=0) for sl in slices)
        assert np.allclose(total, expected, rtol=1e-6)


def test_spectral_function_interpolation():
    sf = SpectralFunction.vacuum([[0, 0, 0]])
    assert sf(0, 1.2345) == pytest.approx(1.2345)
    assert sf(0, -1.0) == 0.0
    assert sf(0, 0.001) == pytest.approx(0.001)
    with pytest.raises(ValueError):
        sf(0, 4.5)


def test_csv_round_trip(tmp_path, small_opal):
    sf = small_opal.sf
    write_lsrf_csv(sf, tmp_path / "g.csv")
    back = read_lsrf_csv(tmp_path / "g.csv", sf.positions)
    assert np.array_equal(back.values, sf.values)
    assert np.array_equal(back.freq_grid, sf.freq_grid)


def test_smoothing_config_validation():
    with pytest.raises(ValueError):
        SmoothingConfig(spreading="tetrahedron")
    with pytest.raises(ValueError):
        SmoothingConfig(sigma_bins=-1)
