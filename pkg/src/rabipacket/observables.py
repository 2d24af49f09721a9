"""Measured quantities derived from propagated states.

The probe signal is modelled as the interference of the excited levels'
ionisation paths into a common final state,

    S(tau) = | sum_k w_k C_k(tau) |^2,

with ``C_k`` the bare amplitudes at the probe delay; the common carrier
phase drops out, so rotating-frame amplitudes can be used directly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .atomics import LevelSystem
from .errors import ConfigError, NumericsError
from .propagator import (
    Trajectory,
    WavepacketState,
    ground_state,
    propagate,
    propagate_sequence,
)
from .pulse import TemporalField

PRE_PULSE_DELAY = 2.8e6  # fs
PHASE_THRESHOLD = 1e-6  # minimum |c| for a defined phase


@dataclass(frozen=True)
class PhaseResult:
    value: float  # rad, in (-pi, pi]
    indeterminate: bool


def _wrap(phi):
    """Map to (-pi, pi]."""
    out = -((-np.asarray(phi) + math.pi) % (2 * math.pi) - math.pi)
    return out if out.ndim else float(out)


def relative_phase(state: WavepacketState, system: LevelSystem,
                   reference_time: float | None = None,
                   levels: tuple[int, int] = (1, 2),
                   threshold: float = PHASE_THRESHOLD) -> PhaseResult:
    """Phase of the upper excited level relative to the lower one, with the
    free-evolution phase of each level removed at ``reference_time``
    (default: the state's own time)."""
    if system.n_excited < 2:
        raise ConfigError("relative phase needs two excited levels")
    if reference_time is not None:
        state = state.free_evolve(system, reference_time - state.time)
    c = state.bare_amplitudes(system)
    lo, hi = levels
    bad = abs(c[lo]) < threshold or abs(c[hi]) < threshold
    return PhaseResult(_wrap(np.angle(c[hi]) - np.angle(c[lo])), bad)


def scan_relative_phase(finals: np.ndarray, system: LevelSystem, carrier: float, time: float,
                        levels: tuple[int, int] = (1, 2),
                        threshold: float = PHASE_THRESHOLD):
    """Relative phase along a scan of final states.

    Returns (wrapped, unwrapped, indeterminate). The unwrapped series follows
    each level's phase continuously along the scan and takes the difference,
    so a near-zero passage of either level shows up as a step of about pi.
    Indeterminate samples are NaN in the unwrapped series.
    """
    finals = np.asarray(finals, complex)
    det = np.asarray(system.frequencies) - carrier
    det[0] = 0.0
    c = finals * np.exp(1j * det * time)[None, :]
    lo, hi = levels
    bad = (np.abs(c[:, lo]) < threshold) | (np.abs(c[:, hi]) < threshold)
    wrapped = _wrap(np.angle(c[:, hi]) - np.angle(c[:, lo]))
    unwrapped = np.full(len(c), np.nan)
    good = np.nonzero(~bad)[0]
    if good.size:
        p_hi = np.unwrap(np.angle(c[good, hi]))
        p_lo = np.unwrap(np.angle(c[good, lo]))
        unwrapped[good] = p_hi - p_lo
    return np.asarray(wrapped), unwrapped, bad


@dataclass(frozen=True)
class PhaseJump:
    area: float
    size: float  # rad, signed
    levels: tuple[int, ...]  # excited levels with a population zero at the jump
    start: int  # first sample index of the jump
    stop: int  # last sample index of the jump

    @property
    def tag(self) -> str:
        if len(self.levels) >= 2:
            return "both"
        if self.levels:
            return str(self.levels[0])
        return "none"


def detect_phase_jumps(areas, phases, populations, threshold: float = 0.5,
                       pop_threshold: float = 1e-3, window: int = 2) -> list[PhaseJump]:
    """Locate steps in an unwrapped phase series.

    Adjacent-sample differences above ``threshold`` (rad) are jump samples;
    runs of consecutive jump samples are merged into one jump. Each jump is
    tagged with the excited levels whose population falls below
    ``pop_threshold`` within ``window`` samples of it. ``populations`` holds
    one column per level with the ground level first; a 1-D array is read
    as the population of a single excited level.
    """
    areas = np.asarray(areas, float)
    phases = np.asarray(phases, float)
    pops = np.asarray(populations, float)
    if pops.ndim == 1:
        pops = np.column_stack([1.0 - pops, pops])
    if not (areas.shape == phases.shape and pops.shape[0] == areas.size):
        raise ConfigError("areas, phases and populations must share one grid")
    excited = pops[:, 1:]

    d = np.diff(phases)
    flagged = np.nonzero(np.abs(np.nan_to_num(d)) > threshold)[0]
    jumps = []
    i = 0
    while i < flagged.size:
        j = i
        while j + 1 < flagged.size and flagged[j + 1] == flagged[j] + 1:
            j += 1
        a, b = int(flagged[i]), int(flagged[j]) + 1  # sample span a..b
        size = float(np.sum(d[a:b]))
        lo, hi = max(a - window, 0), min(b + window, areas.size - 1)
        tagged = tuple(k + 1 for k in range(excited.shape[1])
                       if excited[lo:hi + 1, k].min() < pop_threshold)
        jumps.append(PhaseJump(area=0.5 * (areas[a] + areas[b]), size=size, levels=tagged,
                               start=a, stop=b))
        i = j + 1
    return jumps


@dataclass(frozen=True)
class ProbeModel:
    """Ionisation probe: complex path weights per excited level, the
    multiphoton order used for spatial averaging, and the probe duration
    (intensity FWHM in fs; 0 disables the temporal smoothing)."""

    path_weights: tuple[complex, ...] = (1.0, 1.0)
    nonlinearity_order: int = 2
    duration_fs: float = 120.0

    def __post_init__(self):
        w = tuple(complex(x) for x in self.path_weights)
        object.__setattr__(self, "path_weights", w)
        if not any(abs(x) > 0 for x in w):
            raise ConfigError("probe needs at least one nonzero path weight")
        if self.nonlinearity_order < 1:
            raise ConfigError("probe nonlinearity order must be >= 1")
        if self.duration_fs < 0:
            raise ConfigError("probe duration must be >= 0")


@dataclass(frozen=True)
class BeatTrace:
    delays: np.ndarray  # fs
    signal: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.delays, float)
        s = np.asarray(self.signal, float)
        if d.shape != s.shape:
            raise ConfigError("delays and signal differ in length")
        if d.size > 2 and not np.allclose(np.diff(d), d[1] - d[0], rtol=1e-9, atol=1e-9):
            raise ConfigError("beat trace delays must be uniformly spaced")
        object.__setattr__(self, "delays", d)
        object.__setattr__(self, "signal", s)

    def normalized(self, scale: float | None = None) -> "BeatTrace":
        scale = self.signal.max() if scale is None else scale
        return BeatTrace(self.delays, self.signal / scale if scale > 0 else self.signal.copy())


def _states_at(source, system: LevelSystem, times: np.ndarray) -> np.ndarray:
    if isinstance(source, Trajectory):
        return np.array([source.state_at(t, system).amplitudes for t in times])
    if isinstance(source, WavepacketState):
        det = np.asarray(system.frequencies) - source.carrier
        det[0] = 0.0
        return source.amplitudes[None, :] * np.exp(-1j * det[None, :] * (times - source.time)[:, None])
    raise TypeError("beat_signal needs a Trajectory or a WavepacketState")


def _weights(probe: ProbeModel, system: LevelSystem) -> np.ndarray:
    if len(probe.path_weights) != system.n_excited:
        raise ConfigError(
            f"probe has {len(probe.path_weights)} path weights for {system.n_excited} excited levels")
    return np.concatenate([[0.0], np.asarray(probe.path_weights)])


def _raw_signal(states: np.ndarray, w: np.ndarray) -> np.ndarray:
    return np.abs(states @ w) ** 2


def _gaussian_kernel(spacing: float, fwhm_fs: float) -> np.ndarray:
    sigma = fwhm_fs / (2 * math.sqrt(2 * math.log(2)))
    half = int(math.ceil(5 * sigma / spacing))
    x = np.arange(-half, half + 1) * spacing
    k = np.exp(-0.5 * (x / sigma) ** 2)
    return k / k.sum()


def beat_signal(source: Trajectory | WavepacketState, system: LevelSystem, probe: ProbeModel,
                delays) -> BeatTrace:
    """Probe signal versus delay (fs, measured on the propagation time axis).

    With a trajectory, delays inside the pulse use the recorded states and
    delays outside it free evolution; a bare state is evolved freely to every
    delay. The probe duration enters as a Gaussian smoothing of the trace.
    """
    delays = np.asarray(delays, float)
    w = _weights(probe, system)
    if probe.duration_fs > 0 and delays.size > 1:
        spacing = delays[1] - delays[0]
        kern = _gaussian_kernel(spacing, probe.duration_fs)
        half = kern.size // 2
        ext = delays[0] + np.arange(-half, delays.size + half) * spacing
        s = _raw_signal(_states_at(source, system, ext), w)
        sig = np.convolve(s, kern, mode="valid")
    else:
        sig = _raw_signal(_states_at(source, system, delays), w)
    return BeatTrace(delays, np.maximum(sig, 0.0))


@dataclass(frozen=True)
class BeatSpectrum:
    frequencies: np.ndarray  # THz
    power: np.ndarray
    peak: float | None  # THz
    bin_width: float  # THz


def beat_spectrum(trace: BeatTrace, min_periods: float = 4.0) -> BeatSpectrum:
    """Power spectrum of the mean-subtracted, Hann-windowed trace."""
    s = trace.signal
    n = s.size
    if n < 8:
        raise ConfigError("beat trace too short for a spectrum")
    dt = trace.delays[1] - trace.delays[0]
    x = (s - s.mean()) * np.hanning(n)
    power = np.abs(np.fft.rfft(x)) ** 2
    freqs = np.fft.rfftfreq(n, d=dt) * 1e3  # 1/fs -> THz
    bin_width = 1e3 / (n * dt)
    floor = 1e-20 * max(float(np.sum(s * s)), 1e-300) * n
    peak = None
    if power[1:].size and power[1:].max() > floor:
        peak = float(freqs[1 + int(np.argmax(power[1:]))])
        if peak * n * dt * 1e-3 < min_periods:
            raise NumericsError(
                f"delay window holds {peak * n * dt * 1e-3:.1f} beat periods, "
                f"need >= {min_periods:g}")
    return BeatSpectrum(freqs, power, peak, bin_width)


def beam_average(areas, signal, diameter_ratio: float, probe_order: int,
                 tail_tol: float = 1e-3, nodes: int = 4000) -> np.ndarray:
    """Average a signal over the pump's Gaussian intensity profile as seen by
    a narrower probe.

    Pump: I(r) = I0 exp(-2 r^2/w^2), so the local area is A0 exp(-r^2/w^2).
    Probe sensitivity ~ exp(-2 n r^2 / w_p^2) with w_p = ratio * w and n the
    multiphoton order. With u = r^2/w^2 the average is a Laplace-weighted
    mean of signal(A0 exp(-u)) with rate 2n/ratio^2, evaluated by linear
    interpolation of the samples. ``signal`` may carry extra trailing axes.
    """
    areas = np.asarray(areas, float)
    sig = np.asarray(signal, float)
    if diameter_ratio < 0:
        raise ConfigError("diameter ratio must be positive")
    if diameter_ratio == 0:
        return sig.copy()
    if np.any(np.diff(areas) <= 0):
        raise ConfigError("area grid must be strictly increasing")
    kappa = 2.0 * probe_order / diameter_ratio ** 2
    x_max = math.log(1e12)
    x = np.linspace(0.0, x_max, nodes)
    wts = np.exp(-x)
    wts[0] *= 0.5
    wts[-1] *= 0.5
    wts /= wts.sum()
    shrink = np.exp(-x / kappa)

    a_min = areas[0]
    nonzero = areas[areas > 0]
    if nonzero.size and a_min > 0:
        # weight mass needing areas below the grid, worst case over the grid
        worst = math.exp(-kappa * math.log(nonzero.max() / a_min)) if nonzero.max() > a_min else 1.0
        if worst > tail_tol or a_min > areas.max() * math.exp(-x_max / kappa):
            raise ConfigError(
                "area grid does not reach down far enough for beam averaging; start it at 0")

    flat = sig.reshape(areas.size, -1)
    out = np.empty_like(flat)
    for i, a0 in enumerate(areas):
        local = a0 * shrink
        for j in range(flat.shape[1]):
            out[i, j] = np.dot(wts, np.interp(local, areas, flat[:, j]))
    return out.reshape(sig.shape)


def _gauge(c: np.ndarray, phase: float) -> np.ndarray:
    # a field phase exp(i phi) is equivalent to rotating the excited amplitudes by exp(-i phi)
    out = np.array(c, complex)
    out[1:] *= np.exp(-1j * phase)
    return out


def phase_set(n: int = 16) -> np.ndarray:
    return 2 * math.pi * np.arange(n) / n


@dataclass(frozen=True)
class PrepulseResult:
    populations: np.ndarray  # phase-averaged when several phases were used
    finals: tuple[WavepacketState, ...]
    phases: np.ndarray


def prepulse_contaminate(main: TemporalField, fraction: float, optical_phase, system: LevelSystem,
                         initial: WavepacketState | None = None, delay: float = PRE_PULSE_DELAY,
                         n_phases: int = 16, step="auto") -> PrepulseResult:
    """Final state after a weak replica of ``main`` arriving ``delay`` fs earlier.

    The pre-pulse carries ``fraction`` of the main-pulse energy.
    ``optical_phase`` is the phase of the main pulse relative to the
    pre-pulse, or "average" to average populations over ``n_phases`` evenly
    spaced phases.
    """
    if not 0.0 <= fraction <= 0.05:
        raise ConfigError(f"pre-pulse energy fraction must lie in [0, 0.05], got {fraction}")
    if initial is None:
        initial = ground_state(system)
    phases = phase_set(n_phases) if optical_phase == "average" else np.array([float(optical_phase)])
    if fraction == 0.0:
        fin = propagate(system, main, initial, step=step).final
        return PrepulseResult(fin.populations, (fin,) * len(phases), phases)
    pre = main.scaled(math.sqrt(fraction))
    finals = []
    for ph in phases:
        traj = propagate_sequence(system, [(pre, 0.0, 0.0), (main, delay, float(ph))], initial,
                                  step=step)
        finals.append(traj.final)
    pops = np.mean([f.populations for f in finals], axis=0)
    return PrepulseResult(pops, tuple(finals), phases)
