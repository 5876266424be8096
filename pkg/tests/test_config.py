import math

import pytest
from hypothesis import given, strategies as st

from bdgtrap.config import (
    ConfigError,
    SolverConfig,
    default_r_max,
    derive_scales,
    parse_temperature,
    read_config_file,
    validate_config,
)


def test_cube_root_identity():
    sc = derive_scales(SolverConfig(n_up=1 / 6, n_down=1 / 6))
    assert sc.fermi_energy == pytest.approx(1.0, rel=1e-15)


def test_reference_particle_number_scales():
    sc = derive_scales(SolverConfig(n_up=5e4, n_down=5e4))
    assert sc.fermi_energy == pytest.approx((3e5) ** (1 / 3), rel=1e-14)
    assert sc.fermi_energy == pytest.approx(66.9, abs=0.05)
    assert sc.thomas_fermi_radius == pytest.approx(11.57, abs=0.005)
    # k_F a_ho and R_TF / a_ho coincide numerically
    assert sc.fermi_momentum == pytest.approx(sc.thomas_fermi_radius, rel=1e-14)


def test_interaction_maps_to_quoted_inverse_kfa():
    sc = derive_scales(SolverConfig(n_up=5e4, n_down=5e4, interaction_U=-5))
    assert sc.inverse_kfa == pytest.approx(-0.22, abs=0.005)


def test_rejects_empty_gas():
    with pytest.raises(ConfigError):
        derive_scales(SolverConfig(n_up=0, n_down=0))


@given(st.floats(1.0, 1e7), st.floats(0.0, 1.0))
def test_doubling_numbers_scales_fermi_energy(n, frac):
    a = derive_scales(SolverConfig(n_up=n, n_down=n * frac))
    b = derive_scales(SolverConfig(n_up=2 * n, n_down=2 * n * frac))
    assert b.fermi_energy / a.fermi_energy == pytest.approx(2 ** (1 / 3), rel=1e-13)
    assert b.fermi_momentum**2 / 2 == pytest.approx(b.fermi_energy, rel=1e-14)
    assert 0 <= a.polarization <= 1


def test_balanced_reference_config_is_valid():
    cfg = validate_config(dict(n_up=50000, n_down=50000, interaction_U=-5, cutoff_Ec=180))
    assert derive_scales(cfg).polarization == 0
    assert cfg.grid_points == 600 and cfg.mixing_theta == 0.5
    assert cfg.r_max == pytest.approx(default_r_max(1e5, 180))
    assert cfg.r_max >= 1.6 * derive_scales(cfg).thomas_fermi_radius
    assert cfg.delta_floor == pytest.approx(1e-3 * cfg.fermi_energy)


@pytest.mark.parametrize(
    "bad",
    [
        dict(n_up=10, n_down=10, cutoff_Ec=1),
        dict(n_up=10, n_down=10, mixing_theta=0),
        dict(n_up=10, n_down=10, mixing_theta=1.5),
        dict(n_up=5, n_down=10),
        dict(n_up=0, n_down=0),
        dict(n_up=10, n_down=-1),
        dict(n_up=10, n_down=10, scf_tolerance=0),
        dict(n_up=10, n_down=10, grid_points=1),
        dict(n_up=10, n_down=10, bogus=3),
        dict(n_up=10),
    ],
)
def test_invariant_violations_are_rejected(bad):
    with pytest.raises(ConfigError):
        validate_config(bad)


def test_polarization_resolves_majority_by_rounding():
    cfg = validate_config(dict(n_total=1e5, polarization=0.895))
    assert cfg.n_up == round(1e5 * 1.895 / 2)
    assert cfg.n_up + cfg.n_down == 1e5


def test_temperature_needs_a_unit():
    with pytest.raises(ConfigError):
        validate_config(dict(n_up=4, n_down=4, temperature=0.1))
    cfg = validate_config(dict(n_up=4, n_down=4, temperature="0.001ho"))
    assert cfg.temperature_ho == pytest.approx(0.001)
    cfg = validate_config(dict(n_up=4, n_down=4, temperature=0.05, temperature_unit="tf"))
    assert cfg.temperature == 0.05
    assert parse_temperature("2ho", 1 / 3) == pytest.approx(2.0)
    with pytest.raises(ConfigError):
        parse_temperature("2kelvin", 10)


def test_config_file(tmp_path):
    p = tmp_path / "run.cfg"
    p.write_text("# reference point\nn_total = 1000\npolarization = 0.5  # imbalanced\ninclude-hartree = yes\n\n")
    raw = read_config_file(p)
    cfg = validate_config(raw)
    assert cfg.n_up == 750 and cfg.include_hartree is True
    p.write_text("nonsense line\n")
    with pytest.raises(ConfigError):
        read_config_file(p)
