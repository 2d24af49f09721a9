"""Atomic level systems and the Rb / K presets.

Frequencies are angular, in rad/fs, measured from the ground level.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .constants import wavelength_to_omega
from .errors import ConfigError

RB_D1_NM = 794.75
RB_D1_DIPOLE = 2.53e-29  # C*m
K_D1_NM = 769.9
K_D2_NM = 766.5
K_D1_DIPOLE = 2.5e-29  # C*m
K_DIPOLE_RATIO = math.sqrt(2.0)  # mu(D2) / mu(D1)


@dataclass(frozen=True)
class Level:
    label: str
    angular_frequency: float  # rad/fs


@dataclass(frozen=True)
class Transition:
    lower: int
    upper: int
    dipole: float  # C*m


@dataclass(frozen=True)
class LevelSystem:
    """An atom with one ground level and dipole couplings out of it.

    Levels are ordered by energy; index 0 is the ground level.
    """

    levels: tuple[Level, ...]
    transitions: tuple[Transition, ...]
    name: str = ""
    _dipoles: tuple[float, ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        levels = tuple(self.levels)
        transitions = tuple(self.transitions)
        object.__setattr__(self, "levels", levels)
        object.__setattr__(self, "transitions", transitions)
        if len(levels) < 2:
            raise ConfigError("a level system needs a ground level and at least one excited level")
        if levels[0].angular_frequency != 0.0:
            raise ConfigError("ground level must have frequency exactly 0")
        freqs = [lv.angular_frequency for lv in levels]
        if any(b <= a for a, b in zip(freqs, freqs[1:])):
            raise ConfigError("excited level frequencies must be positive and strictly increasing")

        seen = set()
        dipoles = [0.0] * len(levels)
        for tr in transitions:
            if not (0 <= tr.lower < tr.upper < len(levels)):
                raise ConfigError(f"transition {tr.lower}->{tr.upper} references invalid levels")
            if tr.dipole <= 0:
                raise ConfigError("transition dipoles must be positive")
            if (tr.lower, tr.upper) in seen:
                raise ConfigError(f"duplicate transition {tr.lower}->{tr.upper}")
            if tr.lower != 0:
                raise ConfigError("only ground<->excited couplings are supported")
            seen.add((tr.lower, tr.upper))
            dipoles[tr.upper] = tr.dipole
        missing = [k for k in range(1, len(levels)) if dipoles[k] == 0.0]
        if missing:
            raise ConfigError(f"excited levels {missing} are not coupled to the ground level")
        object.__setattr__(self, "_dipoles", tuple(dipoles))

    @property
    def n_levels(self) -> int:
        return len(self.levels)

    @property
    def n_excited(self) -> int:
        return len(self.levels) - 1

    @property
    def frequencies(self) -> tuple[float, ...]:
        return tuple(lv.angular_frequency for lv in self.levels)

    @property
    def dipoles(self) -> tuple[float, ...]:
        """Ground-coupling dipole per level (0 for the ground level itself)."""
        return self._dipoles

    def wavelength_nm(self, k: int) -> float:
        """Transition wavelength from the ground level to level k."""
        return 2.0 * math.pi * 299.792458 / self.levels[k].angular_frequency


def two_level(wavelength_nm: float, dipole: float, name: str = "two-level",
              labels=("g", "e")) -> LevelSystem:
    return LevelSystem(
        levels=(Level(labels[0], 0.0), Level(labels[1], wavelength_to_omega(wavelength_nm))),
        transitions=(Transition(0, 1, dipole),),
        name=name,
    )


def _rb_d1(dipole: float | None = None) -> LevelSystem:
    return two_level(RB_D1_NM, RB_D1_DIPOLE if dipole is None else dipole,
                     name="Rb-D1", labels=("5s1/2", "5p1/2"))


def _k_d(dipole: float | None = None) -> LevelSystem:
    mu1 = K_D1_DIPOLE if dipole is None else dipole
    return LevelSystem(
        levels=(
            Level("4s1/2", 0.0),
            Level("4p1/2", wavelength_to_omega(K_D1_NM)),
            Level("4p3/2", wavelength_to_omega(K_D2_NM)),
        ),
        transitions=(Transition(0, 1, mu1), Transition(0, 2, K_DIPOLE_RATIO * mu1)),
        name="K-D",
    )


PRESETS = {"Rb-D1": _rb_d1, "K-D": _k_d}


def make_preset(name: str, dipole: float | None = None) -> LevelSystem:
    """Build a named preset.

    ``dipole`` overrides the (lowest) transition dipole in C*m; for "K-D" the
    D2 dipole follows at sqrt(2) times the D1 value.
    """
    try:
        factory = PRESETS[name]
    except KeyError:
        raise ConfigError(
            f"unknown preset {name!r}; valid presets: {', '.join(sorted(PRESETS))}") from None
    return factory(dipole)


def splitting(system: LevelSystem, i: int, j: int) -> float:
    """Frequency separation |w_i - w_j| / 2pi of two excited levels, in THz."""
    n = system.n_levels
    for k in (i, j):
        if not 1 <= k < n:
            raise IndexError(f"level index {k} is not an excited level of {system.name or 'system'}")
    # rad/fs -> cycles/fs -> THz
    return abs(system.levels[i].angular_frequency - system.levels[j].angular_frequency) / (2 * math.pi) * 1e3
