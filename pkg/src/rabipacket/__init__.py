"""Rabi oscillations between a ground state and a fine-structure wavepacket,
driven by spectrally shaped femtosecond pulses."""

from .atomics import Level, LevelSystem, Transition, make_preset, splitting, two_level
from .errors import ConfigError, NumericsError, WindowError
from .propagator import Trajectory, WavepacketState, ground_state, propagate, propagate_sequence
from .pulse import (
    GridSpec,
    Mask,
    SpectralField,
    TemporalField,
    Window,
    apply_mask,
    area_from_intensity,
    effective_area,
    gaussian_spectrum,
    pulse_area,
    to_temporal,
)

__version__ = "0.1.0"
