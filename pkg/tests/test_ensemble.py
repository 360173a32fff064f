import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pclamb.crystal import CrystalStructure, inside_sphere
from pclamb.ensemble import (
    EnsembleSpec,
    MiniBand,
    SamplingError,
    mini_band,
    sample_positions,
    write_atoms_csv,
    write_histogram_csv,
)

OPAL = CrystalStructure()


def test_positions_in_air_pores():
    s = sample_positions(EnsembleSpec(n_atoms=300), OPAL)
    assert s.positions.shape == (300, 3)
    assert np.all(inside_sphere(OPAL, s.positions))


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2**64 - 1), st.integers(1, 50))
def test_same_seed_same_positions(seed, n):
    spec = EnsembleSpec(n_atoms=n, rng_seed=seed)
    a, b = sample_positions(spec, OPAL), sample_positions(spec, OPAL)
    assert a.positions.tobytes() == b.positions.tobytes()
    assert a.proposals == b.proposals


def test_different_seeds_differ():
    a = sample_positions(EnsembleSpec(n_atoms=10, rng_seed=1), OPAL)
    b = sample_positions(EnsembleSpec(n_atoms=10, rng_seed=2), OPAL)
    assert not np.array_equal(a.positions, b.positions)


def test_acceptance_rate_matches_filling_fraction():
    # binomial standard error of the rate is about 0.003 at this size
    s = sample_positions(EnsembleSpec(n_atoms=20000), OPAL)
    assert s.acceptance_rate == pytest.approx(0.74, abs=0.015)


def test_full_cell_region():
    s = sample_positions(EnsembleSpec(n_atoms=50, sampling_region="full_cell"), OPAL)
    assert s.acceptance_rate == 1.0
    assert not np.all(inside_sphere(OPAL, s.positions))


def test_sampling_error_on_tiny_pores():
    tiny = CrystalStructure(filling_fraction=1e-6)
    with pytest.raises(SamplingError):
        sample_positions(EnsembleSpec(n_atoms=5, max_proposals_factor=10), tiny)


def test_spec_validation():
    for kw in (dict(n_atoms=0), dict(sampling_region="surface"), dict(rng_seed=-1)):
        with pytest.raises(ValueError):
            EnsembleSpec(**kw)


def test_constant_shifts_have_zero_width():
    band, per_atom = mini_band(lambda i: 4.5, 12)
    assert band.width == 0.0
    assert band.counts.tolist() == [12]
    assert per_atom == [4.5] * 12


def test_failures_are_counted():
    def solve(i):
        if i % 3 == 0:
            raise ArithmeticError("no root")
        return float(i)

    band, per_atom = mini_band(solve, 9, bins=3)
    assert band.failures == 3
    assert per_atom[0] is None
    assert band.counts.sum() == 6
    assert band.width == 8.0 - 1.0
    assert band.quantiles[0.5] == pytest.approx(np.median([1, 2, 4, 5, 7, 8]))


def test_empty_band():
    b = MiniBand(np.array([]))
    assert b.width == 0.0 and b.quantiles == {}


def test_csv_writers(tmp_path):
    def solve(i):
        if i == 1:
            raise ValueError("outside the tabulated range")
        return [1e9, 0.0, 3e9][i]

    band, per = mini_band(solve, 3, bins=2)
    pos = np.zeros((3, 3))
    write_atoms_csv(pos, per, 100e-9, tmp_path / "a.csv")
    write_histogram_csv(band, tmp_path / "h.csv", scale=2.0)
    rows = (tmp_path / "a.csv").read_text().splitlines()
    assert rows[0] == "atom_index,x,y,z,shift_reduced,shift_MHz"
    assert rows[2].endswith("nan,nan")
    hist = (tmp_path / "h.csv").read_text().splitlines()
    assert hist[1].startswith("2000000000.0,")
    assert len(hist) == 3
