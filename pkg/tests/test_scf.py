import math

import numpy as np
import pytest

from bdgtrap.bdg import compute_fields, particle_numbers, solve_blocks
from bdgtrap.config import validate_config
from bdgtrap.scf import (
    BracketError,
    Problem,
    _monotone_root,
    detect_fflo,
    initial_state,
    run_scf,
    scf_step,
    solve_chemical_potentials,
)


def small(**kw):
    raw = dict(n_total=200, interaction_U=-5.0, cutoff_Ec=30.0, temperature="0.05tf", grid_points=300)
    raw.update(kw)
    return Problem.from_config(validate_config(raw))


@pytest.fixture(scope="module")
def balanced_run():
    pb = small()
    return pb, run_scf(pb)


def total_numbers(pb, state):
    g = pb.basis.grid
    return tuple(4 * math.pi * g.integrate_r2(n.values) for n in (state.n_up, state.n_down))


# -- chemical potentials -------------------------------------------------------


def test_free_gas_between_shells():
    pb = Problem.from_config(validate_config(
        dict(n_up=4, n_down=4, interaction_U=0.0, cutoff_Ec=20.0, temperature=0.01, temperature_unit="ho",
             grid_points=300)))
    cp = solve_chemical_potentials(pb, np.zeros(300), (4, 4), (2.0, 2.0))
    assert 2.5 < cp.mu_up < 3.5 and cp.mu_up == cp.mu_down


def test_empty_minority_at_zero_temperature():
    pb = Problem.from_config(validate_config(
        dict(n_up=4, n_down=0, interaction_U=0.0, cutoff_Ec=20.0, temperature=0.0, temperature_unit="ho",
             grid_points=300)))
    st = initial_state(pb)
    assert 2.5 < st.mu_up < 3.5
    assert st.mu_down < 1.5  # below the lowest level
    assert np.all(st.n_down.values == 0)


def test_balanced_targets_keep_equal_potentials():
    pb = small()
    gap = 3.0 * np.exp(-pb.r**2 / 8)
    cp = solve_chemical_potentials(pb, gap, (100, 100), (6.0, 6.0))
    assert cp.mu_up == cp.mu_down
    assert particle_numbers(cp.spectra, pb.temperature) == pytest.approx((100, 100), rel=1e-8)


def test_imbalanced_targets_hit():
    pb = small(polarization=0.4)
    gap = 3.0 * np.exp(-pb.r**2 / 8)
    cp = solve_chemical_potentials(pb, gap, (140, 60), (7.0, 5.0))
    assert particle_numbers(cp.spectra, pb.temperature) == pytest.approx((140, 60), rel=1e-8)
    assert cp.mu_up > cp.mu_down


def test_number_monotone_in_mu():
    pb = small()
    gap = 3.0 * np.exp(-pb.r**2 / 8)
    prev = (-1.0, -1.0)
    for mu in np.linspace(2.0, 12.0, 9):
        n = particle_numbers(solve_blocks(pb.basis, gap, mu, mu), pb.temperature)
        assert n[0] > prev[0] and n[1] > prev[1]
        prev = n


def test_root_bracket_failure_is_reported():
    with pytest.raises(BracketError, match="scanned"):
        _monotone_root(lambda x: -1.0, 0.0, 1.0, 1e-9, "a flat function", max_expand=5)


# -- SCF ---------------------------------------------------------------------------


def test_free_gas_converges_immediately():
    pb = small(interaction_U=0.0)
    st = run_scf(pb)
    assert st.converged and st.iteration <= 2
    assert np.all(st.pairing.values == 0)


def test_zero_gap_stays_zero_in_free_gas():
    pb = small(interaction_U=0.0)
    st = initial_state(pb, pairing=np.zeros(len(pb.r)))
    nxt = scf_step(pb, st)
    assert np.all(nxt.pairing.values == 0)


def test_single_iteration_bookkeeping():
    pb = small(max_iterations=1)
    st = run_scf(pb)
    assert not st.converged and len(st.journal) == 1 and st.iteration == 1


def test_balanced_convergence(balanced_run):
    pb, st = balanced_run
    assert st.converged
    assert st.residual_pairing <= 1e-6 and st.residual_numbers <= 1e-6
    d = st.pairing.values
    inside = pb.r < pb.scales.thomas_fermi_radius
    assert np.all(d[inside] > 0)
    assert np.all(np.diff(d[inside]) <= 1e-9 * d[0])
    assert st.mu_up == st.mu_down
    np.testing.assert_allclose(st.n_up.values, st.n_down.values, atol=1e-8)
    assert total_numbers(pb, st) == pytest.approx((100, 100), rel=1e-6)
    tail = [e.residual_pairing for e in st.journal[-5:]]
    assert all(b <= a for a, b in zip(tail, tail[1:]))


def test_fixed_point_is_idempotent(balanced_run):
    pb, st = balanced_run
    nxt = scf_step(pb, st)
    assert nxt.residual_pairing < 1e-6 and nxt.residual_numbers < 1e-6
    np.testing.assert_allclose(nxt.pairing.values, st.pairing.values, atol=1e-5 * st.pairing.values[0])


def test_mixing_does_not_move_the_fixed_point(balanced_run):
    pb, st = balanced_run
    pb1 = small(mixing_theta=1.0)
    st1 = run_scf(pb1)
    assert st1.converged
    diff = np.linalg.norm(st1.pairing.values - st.pairing.values) / np.linalg.norm(st.pairing.values)
    assert diff < 10 * 1e-6


def test_gauge_flip_leaves_densities(balanced_run):
    pb, st = balanced_run
    ones = np.ones(len(pb.r))
    a = compute_fields(solve_blocks(pb.basis, st.pairing.values, st.mu_up, st.mu_down), pb.basis, ones, pb.temperature)
    b = compute_fields(solve_blocks(pb.basis, -st.pairing.values, st.mu_up, st.mu_down), pb.basis, ones, pb.temperature)
    np.testing.assert_allclose(a[1].values, b[1].values, atol=1e-12)
    np.testing.assert_allclose(a[2].values, b[2].values, atol=1e-12)
    np.testing.assert_allclose(a[0].values, -b[0].values, atol=1e-12)


def test_fully_polarized_gas_is_normal():
    pb = small(polarization=1.0)
    st = run_scf(pb)
    assert st.converged
    assert np.max(np.abs(st.pairing.values)) == 0
    assert total_numbers(pb, st)[0] == pytest.approx(200, rel=1e-6)


def test_imbalanced_number_conservation():
    pb = small(polarization=0.3, max_iterations=40)
    st = run_scf(pb)
    assert total_numbers(pb, st) == pytest.approx((130, 70), rel=1e-6)
    assert st.mu_up > st.mu_down


def test_hartree_flag_runs():
    pb = small(include_hartree=True, interaction_U=-1.0, max_iterations=3)
    st = run_scf(pb)
    assert st.iteration == 3 and np.all(np.isfinite(st.pairing.values))


# -- FFLO classification -----------------------------------------------------------


def test_monotone_gap_has_no_nodes():
    r = np.linspace(0.01, 10, 500)
    assert detect_fflo(np.exp(-r**2 / 20), r, 8.0, 1e-3).classification == "none"


def test_synthetic_core_oscillation():
    r = np.linspace(0.001, 10, 4000)
    d = (1 - (r / 6) ** 2) * np.cos(2 * r)
    res = detect_fflo(d, r, 8.0, 1e-3)
    assert res.classification == "core_oscillation"
    assert res.node_radii[0] == pytest.approx(math.pi / 4, abs=1e-3)


def test_single_edge_node():
    r = np.linspace(0.01, 12, 1200)
    d = np.tanh(7.0 - r)  # node at r = 7 = 0.7 R_TF
    res = detect_fflo(d, r, 10.0, 1e-3)
    assert res.classification == "edge_oscillation"
    assert res.node_radii == pytest.approx((7.0,), abs=1e-2)


def test_floor_and_range_are_respected():
    r = np.linspace(0.01, 20, 2000)
    d = np.where(r < 9, 1.0, 1e-5 * np.sin(5 * r))  # noise below the floor
    assert detect_fflo(d, r, 10.0, 1e-3).classification == "none"
    d = np.where(r < 13, 1.0, -1.0)  # sign change beyond 1.2 R_TF
    assert detect_fflo(d, r, 10.0, 1e-3).classification == "none"
