import math

import pytest

from rabipacket.atomics import Level, LevelSystem, Transition, make_preset, splitting, two_level
from rabipacket.constants import omega_to_wavelength, wavelength_to_omega
from rabipacket.errors import ConfigError


def test_rb_preset():
    s = make_preset("Rb-D1")
    assert s.n_levels == 2
    assert s.frequencies[1] == pytest.approx(2 * math.pi * 299.792458 / 794.75, rel=1e-12)
    assert s.frequencies[1] == pytest.approx(2.370, abs=1e-3)
    assert s.dipoles[1] == 2.53e-29


def test_k_preset_levels_and_dipoles():
    s = make_preset("K-D")
    assert s.n_levels == 3
    assert s.wavelength_nm(1) == pytest.approx(769.9, rel=1e-12)
    assert s.wavelength_nm(2) == pytest.approx(766.5, rel=1e-12)
    assert s.dipoles[2] / s.dipoles[1] == pytest.approx(math.sqrt(2), rel=1e-14)
    assert make_preset("K-D", dipole=3e-29).dipoles[1] == 3e-29


def test_unknown_preset_lists_valid_names():
    with pytest.raises(ConfigError, match="K-D"):
        make_preset("Cs")


def test_k_splitting():
    s = make_preset("K-D")
    expected = 299792.458 * (1 / 766.5 - 1 / 769.9)  # THz
    assert splitting(s, 1, 2) == pytest.approx(expected, rel=1e-12)
    assert splitting(s, 1, 2) == pytest.approx(1.73, rel=5e-3)
    assert splitting(s, 2, 2) == 0.0


def test_splitting_index_errors():
    with pytest.raises(IndexError):
        splitting(make_preset("Rb-D1"), 1, 2)
    with pytest.raises(IndexError):
        splitting(make_preset("K-D"), 0, 1)


@pytest.mark.parametrize("nm", [794.75, 769.9, 766.5, 400.0, 1300.0])
def test_wavelength_round_trip(nm):
    assert omega_to_wavelength(wavelength_to_omega(nm)) == pytest.approx(nm, rel=1e-12)


def test_level_system_validation():
    g, e1, e2 = Level("g", 0.0), Level("e1", 2.0), Level("e2", 2.1)
    with pytest.raises(ConfigError, match="ground"):
        LevelSystem((Level("g", 0.1), e1), (Transition(0, 1, 1e-29),))
    with pytest.raises(ConfigError, match="increasing"):
        LevelSystem((g, e2, e1), (Transition(0, 1, 1e-29), Transition(0, 2, 1e-29)))
    with pytest.raises(ConfigError, match="duplicate"):
        LevelSystem((g, e1), (Transition(0, 1, 1e-29), Transition(0, 1, 2e-29)))
    with pytest.raises(ConfigError, match="not coupled"):
        LevelSystem((g, e1, e2), (Transition(0, 1, 1e-29),))
    with pytest.raises(ConfigError, match="positive"):
        LevelSystem((g, e1), (Transition(0, 1, 0.0),))
    with pytest.raises(ConfigError, match="ground<->excited"):
        LevelSystem((g, e1, e2), (Transition(0, 1, 1e-29), Transition(1, 2, 1e-29)))


def test_two_level_helper():
    s = two_level(780.0, 3e-29)
    assert s.n_excited == 1
    assert s.wavelength_nm(1) == pytest.approx(780.0)
