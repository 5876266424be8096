import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bdgtrap.basis import build_grid, tabulate_basis
from bdgtrap.bdg import assemble_lblock, diagonalize, solve_blocks
from bdgtrap.fluctuations import (
    density_fluctuations,
    fluctuation_profile,
    pairing_fluctuations,
    relative_fluctuation,
)

from fock import FockBlock

# E_c = 4 gives blocks l = 0, 1, 2 with N_l = 2, 1, 1
TINY = tabulate_basis(build_grid(120, 9.0), 4.0)
PROBE = slice(None, None, 7)


def random_block(rng, l, imbalance):
    G = len(TINY.grid)
    gap = rng.normal(scale=2.0) * np.exp(-TINY.grid.nodes**2 / rng.uniform(1, 6)) + rng.normal(scale=0.5)
    mu = rng.uniform(0.0, 6.0)
    h = rng.uniform(-1.5, 1.5) if imbalance else 0.0
    H = assemble_lblock(l, gap, mu + h, mu - h, TINY)
    return H, diagonalize(H, l)


@pytest.mark.parametrize("T", [0.1, 1.0, 10.0])
@pytest.mark.parametrize("l", [0, 1, 2])
@pytest.mark.parametrize("imbalance", [False, True])
def test_matches_fock_space_enumeration(T, l, imbalance):
    rng = np.random.default_rng(100 * l + int(10 * T) + imbalance)
    H, s = random_block(rng, l, imbalance)
    coupling = rng.uniform(-3, -0.5, size=len(TINY.grid))
    pair = pairing_fluctuations([s], TINY, coupling, T).values
    up, down = density_fluctuations([s], TINY, T)
    fock = FockBlock(H, T)
    weight = 2 * math.pi * (2 * l + 1)
    for i in range(len(TINY.grid))[PROBE]:
        R = TINY.values[l][:, i]
        assert pair[i] == pytest.approx(coupling[i] ** 2 * weight * fock.pair_variance(R), abs=1e-12)
        var_up, var_down = fock.density_variances(R)
        # printed labels: the "down" fluctuation carries u^4 = psi_up density variance
        assert down.values[i] == pytest.approx(weight * var_up, abs=1e-12)
        assert up.values[i] == pytest.approx(weight * var_down, abs=1e-12)


@pytest.mark.parametrize("l", [0, 1])
def test_zero_temperature_vanishes(l):
    rng = np.random.default_rng(3)
    H, s = random_block(rng, l, True)
    assert np.all(pairing_fluctuations([s], TINY, np.full(len(TINY.grid), -2.0), 0.0).values == 0)
    up, down = density_fluctuations([s], TINY, 0.0)
    assert np.all(up.values == 0) and np.all(down.values == 0)
    fock = FockBlock(H, 0.0)
    assert abs(fock.pair_variance(TINY.values[l][:, 10])) < 1e-12


@pytest.fixture(scope="module")
def medium():
    basis = tabulate_basis(build_grid(300, 12.0), 30.0)
    gap = 2.0 * np.exp(-basis.grid.nodes**2 / 9.0)
    return basis, gap


def test_coupling_squared_scaling(medium):
    basis, gap = medium
    spectra = solve_blocks(basis, gap, 9.0, 7.5)
    c = np.full(len(basis.grid), -1.2)
    a = pairing_fluctuations(spectra, basis, c, 0.7).values
    b = pairing_fluctuations(spectra, basis, 2 * c, 0.7).values
    np.testing.assert_allclose(b, 4 * a, rtol=1e-14)
    assert np.all(a >= 0)


def test_balanced_density_fluctuations_equal(medium):
    basis, gap = medium
    spectra = solve_blocks(basis, gap, 9.0, 9.0)
    up, down = density_fluctuations(spectra, basis, 0.7)
    np.testing.assert_allclose(up.values, down.values, rtol=1e-9, atol=1e-14)


def test_frozen_spectrum_monotone_in_temperature(medium):
    basis, gap = medium
    spectra = solve_blocks(basis, gap, 9.0, 8.0)
    c = np.full(len(basis.grid), -1.0)
    prev = None
    for T in (0.05, 0.2, 0.5, 1.0, 3.0):
        cur = pairing_fluctuations(spectra, basis, c, T).values
        if prev is not None:
            assert np.all(cur >= prev)
        prev = cur


def test_relative_fluctuation_identity_and_mask():
    d = np.array([0.5, 1.0, -2.0, 1e-6])
    f, _ = relative_fluctuation(d**2, d, 1e-3)
    np.testing.assert_allclose(f.values[:3], 1.0)
    assert np.isnan(f.values[3])
    f, avg = relative_fluctuation(np.ones(4), np.full(4, 1e-5), 1e-3, np.arange(4.0), np.ones(4), 10.0)
    assert not np.any(np.isfinite(f.values)) and math.isnan(avg)


def test_core_average_uses_inner_region():
    r = np.linspace(0.05, 10, 200)
    w = np.full(200, r[1] - r[0])
    d = np.ones(200)
    fluc = np.where(r < 1.5, 4.0, 0.01)
    f, avg = relative_fluctuation(fluc, d, 1e-3, r, w, 10.0)
    assert avg == pytest.approx(2.0)


def test_profile_bundles_fields(medium):
    basis, gap = medium
    spectra = solve_blocks(basis, gap, 9.0, 9.0)
    c = np.full(len(basis.grid), -1.0)
    prof = fluctuation_profile(spectra, basis, c, gap, 0.7, 1e-2, 4.0)
    np.testing.assert_allclose(prof.pairing_fluc.values, pairing_fluctuations(spectra, basis, c, 0.7).values)
    f = prof.relative_f.values
    assert np.array_equal(prof.valid_mask, np.isfinite(f) & (np.nan_to_num(f, nan=2.0) < 1))
    doubled = fluctuation_profile(spectra, basis, c, gap, 0.7, 1e-2, 4.0, prefactor=2.0)
    np.testing.assert_allclose(doubled.pairing_fluc.values, 2 * prof.pairing_fluc.values)
