"""Rotating-wave Schrodinger propagation of an N-level atom.

Amplitudes live in the frame rotating at the field carrier: excited level k
carries ``exp(-i w_c t)`` relative to the bare amplitude, the ground level
none. The Hamiltonian (hbar = 1, rad/fs) is

    H_kk = w_k - w_c            (0 for the ground level)
    H_k0 = -Omega_k(t) / 2      Omega_k = mu_k eps(t) / hbar
    H_0k = conj(H_k0)

integrated with fixed-step classical RK4.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

import numba
import numpy as np

from .atomics import LevelSystem
from .constants import FS, HBAR
from .errors import ConfigError, NumericsError
from .pulse import TemporalField

DEFAULT_STEP = 0.25  # fs
NORM_TOL = 1e-6
CROP_THRESHOLD = 1e-9
RWA_LIMIT = 0.1  # max |w_k - w_c| / w_c before flagging


@dataclass(frozen=True)
class WavepacketState:
    """Complex level amplitudes at ``time`` (fs) in the frame rotating at ``carrier``."""

    amplitudes: np.ndarray
    time: float = 0.0
    carrier: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "amplitudes", np.asarray(self.amplitudes, dtype=complex))

    @property
    def populations(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    @property
    def norm(self) -> float:
        return float(np.sum(self.populations))

    def free_evolve(self, system: LevelSystem, duration: float) -> "WavepacketState":
        det = np.asarray(system.frequencies) - self.carrier
        det[0] = 0.0
        return replace(self, amplitudes=self.amplitudes * np.exp(-1j * det * duration),
                       time=self.time + duration)

    def bare_amplitudes(self, system: LevelSystem) -> np.ndarray:
        """Amplitudes with the free-evolution phase of every level removed,
        i.e. the interaction-picture amplitudes at ``time``. These do not
        depend on the carrier chosen for the rotating frame."""
        det = np.asarray(system.frequencies) - self.carrier
        det[0] = 0.0
        return self.amplitudes * np.exp(1j * det * self.time)


def ground_state(system: LevelSystem, time: float = 0.0, carrier: float = 0.0) -> WavepacketState:
    c = np.zeros(system.n_levels, complex)
    c[0] = 1.0
    return WavepacketState(c, time, carrier)


@dataclass(frozen=True)
class Trajectory:
    times: np.ndarray  # fs
    states: np.ndarray  # (n_times, n_levels) complex, rotating frame
    final: WavepacketState
    carrier: float
    max_norm_drift: float
    rwa_warning: bool = False
    step: float = DEFAULT_STEP

    @property
    def populations(self) -> np.ndarray:
        return np.abs(self.states) ** 2

    def state_at(self, t: float, system: LevelSystem) -> WavepacketState:
        """State at time t: the last recorded sample at or before t, evolved
        freely to t. Exact outside the pulses."""
        i = int(np.searchsorted(self.times, t, side="right")) - 1
        i = max(i, 0)
        s = WavepacketState(self.states[i], float(self.times[i]), self.carrier)
        return s.free_evolve(system, t - s.time)

    def to_csv(self, path: str | Path) -> None:
        path = Path(path)
        n = self.states.shape[1]
        head = ["t_fs"] + [f"{p}{k}" for k in range(n) for p in ("re_c", "im_c")] + ["norm"]
        try:
            with path.open("w") as fh:
                fh.write(",".join(head) + "\n")
                for t, c in zip(self.times, self.states):
                    cols = [repr(float(t))]
                    for z in c:
                        cols += [repr(float(z.real)), repr(float(z.imag))]
                    cols.append(repr(float(np.sum(np.abs(c) ** 2))))
                    fh.write(",".join(cols) + "\n")
        except OSError as exc:
            raise OSError(f"cannot write trajectory to {path}: {exc}") from exc


@numba.njit(cache=True)
def _deriv(c, e, det, coeff, out):
    nl = c.shape[0]
    g = 0j
    cg = c[0]
    ec = np.conj(e)
    for k in range(1, nl):
        om = coeff[k] * e
        g += coeff[k] * ec * c[k]
        out[k] = -1j * (det[k] * c[k] - 0.5 * om * cg)
    out[0] = 0.5j * g


@numba.njit(cache=True)
def _rk4(env, h, det, coeff, scale, c0, record_stride):
    """Integrate from env[0] over (len(env)-1)//2 steps; env is sampled at h/2.

    Returns the final state, recorded states (after every ``record_stride``
    steps, including the initial state) and the max |norm - 1| seen.
    """
    nl = c0.shape[0]
    nsteps = (env.shape[0] - 1) // 2
    nrec = nsteps // record_stride + 1
    rec = np.empty((nrec, nl), np.complex128)
    c = c0.copy()
    rec[0] = c
    k1 = np.empty(nl, np.complex128)
    k2 = np.empty(nl, np.complex128)
    k3 = np.empty(nl, np.complex128)
    k4 = np.empty(nl, np.complex128)
    tmp = np.empty(nl, np.complex128)
    n0 = 0.0
    for k in range(nl):
        n0 += c[k].real ** 2 + c[k].imag ** 2
    drift = 0.0
    hh = 0.5 * h
    h6 = h / 6.0
    irec = 1
    for n in range(nsteps):
        e0 = env[2 * n] * scale
        em = env[2 * n + 1] * scale
        e1 = env[2 * n + 2] * scale
        _deriv(c, e0, det, coeff, k1)
        for k in range(nl):
            tmp[k] = c[k] + hh * k1[k]
        _deriv(tmp, em, det, coeff, k2)
        for k in range(nl):
            tmp[k] = c[k] + hh * k2[k]
        _deriv(tmp, em, det, coeff, k3)
        for k in range(nl):
            tmp[k] = c[k] + h * k3[k]
        _deriv(tmp, e1, det, coeff, k4)
        nrm = 0.0
        for k in range(nl):
            c[k] = c[k] + h6 * (k1[k] + 2.0 * k2[k] + 2.0 * k3[k] + k4[k])
            nrm += c[k].real ** 2 + c[k].imag ** 2
        d = abs(nrm - n0)
        if d > drift:
            drift = d
        if (n + 1) % record_stride == 0:
            rec[irec] = c
            irec += 1
    return c, rec, drift


@numba.njit(cache=True)
def _rk4_batch(env, h, det, coeff, scales, c0):
    nb = scales.shape[0]
    nl = c0.shape[0]
    out = np.empty((nb, nl), np.complex128)
    drift = np.empty(nb)
    stride = max((env.shape[0] - 1) // 2, 1)
    for b in range(nb):
        c, _, d = _rk4(env, h, det, coeff, scales[b], c0, stride)
        out[b] = c
        drift[b] = d
    return out, drift


def upsample_linear(envelope: np.ndarray, factor: int) -> np.ndarray:
    env = np.asarray(envelope, complex)
    if factor == 1:
        return env.copy()
    x = np.arange((env.size - 1) * factor + 1) / factor
    k = np.arange(env.size)
    return np.interp(x, k, env.real) + 1j * np.interp(x, k, env.imag)


def upsample(envelope: np.ndarray, factor: int) -> np.ndarray:
    """Band-limited (Fourier) interpolation by an integer factor.

    The segment is zero padded to twice its length before the transform, so
    it must decay towards both ends. Returns ``(len-1)*factor + 1`` samples
    with the original samples reproduced at every ``factor``-th position.
    """
    if factor == 1:
        return np.asarray(envelope, complex).copy()
    n = len(envelope)
    m = 1 << int(math.ceil(math.log2(2 * n)))
    spec = np.fft.fft(envelope, m)
    big = np.zeros(m * factor, complex)
    half = m // 2
    big[:half] = spec[:half]
    big[-half + 1:] = spec[-half + 1:]
    # split the Nyquist bin symmetrically
    big[half] = 0.5 * spec[half]
    big[-half] = 0.5 * spec[half]
    fine = np.fft.ifft(big) * factor
    return fine[:(n - 1) * factor + 1]


@dataclass(frozen=True)
class PreparedField:
    """Envelope resampled to half-steps of the RK4 integrator."""

    t0: float
    h: float
    env: np.ndarray  # samples at h/2
    carrier: float

    @property
    def t_end(self) -> float:
        return self.t0 + (len(self.env) - 1) * self.h / 2

    @property
    def nsteps(self) -> int:
        return (len(self.env) - 1) // 2


def resolve_step(dt: float, step: float | str = "auto") -> tuple[int, float]:
    """Subdivision factor of the field grid and the actual RK4 step.

    The requested step is reduced so that its half divides the field
    sampling interval exactly.
    """
    if step == "auto":
        step = min(DEFAULT_STEP, dt / 4)
    step = float(step)
    if step <= 0:
        raise ConfigError("RK4 step must be positive")
    factor = max(1, int(math.ceil(dt / (step / 2) - 1e-9)))
    return factor, 2 * dt / factor


def prepare(field: TemporalField, step: float | str = "auto", crop: bool = True) -> PreparedField:
    tf = field.cropped(CROP_THRESHOLD) if crop else field
    factor, h = resolve_step(tf.dt, step)
    if tf.interpolation == "fourier":
        env = upsample(tf.envelope, factor)
    else:
        env = upsample_linear(tf.envelope, factor)
    if len(env) % 2 == 0:
        env = np.append(env, 0.0)
    return PreparedField(t0=tf.t0, h=h, env=env, carrier=field.carrier)


def _coefficients(system: LevelSystem, carrier: float) -> tuple[np.ndarray, np.ndarray, bool]:
    freqs = np.asarray(system.frequencies, float)
    det = freqs - carrier
    det[0] = 0.0
    coeff = np.asarray(system.dipoles, float) / HBAR * FS
    rwa_bad = bool(np.max(np.abs(det[1:])) > RWA_LIMIT * carrier)
    return det, coeff, rwa_bad


def _check_rwa(rwa_bad: bool, peak_rabi: float, carrier: float) -> bool:
    bad = rwa_bad or peak_rabi > RWA_LIMIT * carrier
    if bad:
        warnings.warn("rotating-wave approximation questionable: detuning or Rabi frequency "
                      "is not small compared with the carrier", RuntimeWarning, stacklevel=3)
    return bad


def _check_norm(drift: float) -> None:
    if drift > NORM_TOL:
        raise NumericsError(
            f"norm drifted by {drift:.2e} during propagation; use a smaller RK4 step")


def propagate(system: LevelSystem, field: TemporalField, initial: WavepacketState | None = None,
              step: float | str = "auto", record_every: float | None = None,
              crop: bool = True) -> Trajectory:
    """Integrate the RWA Schrodinger equation across ``field``.

    ``record_every`` (fs) sets the spacing of stored states; by default the
    field sampling interval is used. The initial state is taken to hold at
    the first sample of the (cropped) field.
    """
    if initial is None:
        initial = ground_state(system)
    if abs(initial.norm - 1.0) > NORM_TOL:
        raise ConfigError(f"initial state is not normalised (norm {initial.norm:.8f})")
    if initial.amplitudes.size != system.n_levels:
        raise ConfigError("initial state size does not match the level system")
    pf = prepare(field, step, crop)
    c0 = _reframe(initial, system, field.carrier)
    return _run(system, pf, c0, record_every if record_every is not None else field.dt)


def _reframe(state: WavepacketState, system: LevelSystem, carrier: float) -> np.ndarray:
    """Amplitudes of ``state`` expressed in the frame rotating at ``carrier``."""
    if state.carrier == carrier:
        return state.amplitudes.copy()
    c = state.amplitudes.copy()
    c[1:] *= np.exp(-1j * (carrier - state.carrier) * state.time)
    return c


def _run(system: LevelSystem, pf: PreparedField, c0: np.ndarray, record_every: float,
         scale: complex = 1.0) -> Trajectory:
    det, coeff, rwa_bad = _coefficients(system, pf.carrier)
    peak = float(np.max(np.abs(pf.env)) * np.max(coeff) * abs(scale)) if pf.env.size else 0.0
    rwa_flag = _check_rwa(rwa_bad, peak, pf.carrier)
    stride = max(1, int(round(record_every / pf.h)))
    stride = min(stride, max(pf.nsteps, 1))
    final, rec, drift = _rk4(pf.env, pf.h, det, coeff, complex(scale), c0.astype(complex), stride)
    times = pf.t0 + np.arange(rec.shape[0]) * stride * pf.h
    if pf.nsteps % stride:
        times = np.append(times, pf.t_end)
        rec = np.vstack([rec, final[None, :]])
    _check_norm(drift)
    return Trajectory(times=times, states=rec,
                      final=WavepacketState(final, pf.t_end, pf.carrier),
                      carrier=pf.carrier, max_norm_drift=float(drift),
                      rwa_warning=rwa_flag, step=pf.h)


def propagate_prepared(system: LevelSystem, pf: PreparedField, amplitudes: np.ndarray,
                       scale: complex = 1.0, record_every: float | None = None) -> Trajectory:
    """Propagate rotating-frame ``amplitudes`` (taken at ``pf.t0``) across a
    prepared field whose envelope is multiplied by ``scale``. Recording
    defaults to every RK4 step."""
    c0 = np.asarray(amplitudes, complex)
    if c0.size != system.n_levels:
        raise ConfigError("initial state size does not match the level system")
    return _run(system, pf, c0, record_every if record_every is not None else pf.h, scale)


def propagate_scaled(system: LevelSystem, field: TemporalField, scales: Sequence[float],
                     initial: WavepacketState | None = None,
                     step: float | str = "auto") -> tuple[np.ndarray, np.ndarray, float]:
    """Final states for the same pulse shape at several field amplitudes.

    Each scale factor is an independent propagation; the result does not
    depend on how the scales are grouped. Returns (finals, max norm drifts,
    end time).
    """
    if initial is None:
        initial = ground_state(system)
    pf = prepare(field, step)
    det, coeff, rwa_bad = _coefficients(system, pf.carrier)
    scales = np.asarray(scales, complex)
    peak = float(np.max(np.abs(pf.env)) * np.max(coeff) * (np.max(np.abs(scales)) if scales.size else 0))
    _check_rwa(rwa_bad, peak, pf.carrier)
    c0 = _reframe(initial, system, field.carrier)
    finals, drift = _rk4_batch(pf.env, pf.h, det, coeff, scales, c0)
    if drift.size:
        _check_norm(float(drift.max()))
    return finals, drift, pf.t_end


def propagate_sequence(system: LevelSystem,
                       pulses: Sequence[tuple[TemporalField, float, float]],
                       initial: WavepacketState | None = None,
                       step: float | str = "auto",
                       record_every: float | None = None) -> Trajectory:
    """Propagate through a train of pulses separated by free evolution.

    ``pulses`` holds (field, delay, optical_phase): ``delay`` (fs) is the
    offset of this pulse's time origin from the previous pulse's (ignored
    for the first pulse); ``optical_phase`` multiplies the envelope by
    exp(i*phase). The gaps are bridged with exact free-evolution phases.
    Returned times are measured from the time origin of the last pulse.
    """
    if not pulses:
        raise ConfigError("pulse sequence is empty")
    if initial is None:
        initial = ground_state(system)
    carrier = pulses[0][0].carrier
    if any(p[0].carrier != carrier for p in pulses):
        raise ConfigError("all pulses of a sequence must share one carrier")
    origins = [0.0]
    for _, delay, _ in pulses[1:]:
        if delay < 0:
            raise ConfigError(f"inter-pulse delays must be >= 0, got {delay}")
        origins.append(origins[-1] + delay)
    offset = origins[-1]

    prepared = []
    for (field, _, phase), origin in zip(pulses, origins):
        f = field.scaled(np.exp(1j * phase)) if phase else field
        pf = prepare(f, step)
        prepared.append(replace(pf, t0=pf.t0 + origin - offset))
    for a, b in zip(prepared, prepared[1:]):
        if b.t0 < a.t_end - 1e-9:
            raise ConfigError("pulses overlap in time; increase the delay or concatenate them")

    if abs(initial.norm - 1.0) > NORM_TOL:
        raise ConfigError(f"initial state is not normalised (norm {initial.norm:.8f})")
    state = WavepacketState(_reframe(initial, system, carrier), prepared[0].t0, carrier)
    times, states = [], []
    drift = 0.0
    rwa = False
    for pf in prepared:
        state = state.free_evolve(system, pf.t0 - state.time)
        traj = _run(system, pf, state.amplitudes,
                    record_every if record_every is not None else pf.h * 64)
        times.append(traj.times)
        states.append(traj.states)
        drift = max(drift, traj.max_norm_drift)
        rwa = rwa or traj.rwa_warning
        state = traj.final
    return Trajectory(times=np.concatenate(times), states=np.vstack(states), final=state,
                      carrier=carrier, max_norm_drift=drift, rwa_warning=rwa,
                      step=prepared[-1].h)
