"""Shaped broadband fields: spectra, masks, temporal envelopes and pulse areas.

Conventions
-----------
The real field is ``E(t) = Re[eps(t) exp(-i w_c t)]`` with ``eps`` the complex
envelope in V/m and ``w_c`` the carrier in rad/fs. A spectral component at
``w_c + d`` contributes ``exp(-i d t)`` to the envelope.

Spectral amplitudes are energy normalised: ``sum |a|^2 * d_omega`` is the pulse
energy in J. The conversion to a field in V/m goes through an effective beam
area (``pi w^2 / 2`` for a Gaussian beam of 1/e^2 radius ``w``), so that
``beam_area * (c eps0 / 2) * integral |eps|^2 dt`` returns the same energy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .atomics import LevelSystem
from .constants import C_NM_PER_FS, C_SI, EPS0, FS, HBAR, wavelength_to_omega
from .errors import ConfigError, WindowError

GAUSS_AREA_FACTOR = math.sqrt(math.pi / (4.0 * math.log(2.0)))
WINDOW_TOL = 1e-6


def beam_area_from_waist(waist_um: float) -> float:
    """Effective area (m^2) of a Gaussian beam: peak fluence = energy / area."""
    w = waist_um * 1e-6
    return math.pi * w * w / 2.0


@dataclass(frozen=True)
class GridSpec:
    """Uniform angular-frequency grid around a carrier.

    ``halfspan_nm`` is measured in wavelength on either side of the carrier;
    the frequency grid covers the larger of the two resulting offsets.
    """

    n: int = 2 ** 14
    halfspan_nm: float = 45.0

    def __post_init__(self):
        if self.n < 2 or self.n & (self.n - 1):
            raise ConfigError(f"grid size must be a power of two, got {self.n}")
        if self.halfspan_nm <= 0:
            raise ConfigError("grid half-span must be positive")

    def domega(self, carrier_nm: float) -> float:
        w_blue = wavelength_to_omega(carrier_nm - self.halfspan_nm)
        w_red = wavelength_to_omega(carrier_nm + self.halfspan_nm)
        return (w_blue - w_red) / self.n


@dataclass(frozen=True)
class SpectralField:
    carrier: float  # rad/fs
    domega: float  # rad/fs
    amplitude: np.ndarray  # sqrt(J / (rad/fs))
    beam_area: float = beam_area_from_waist(250.0)  # m^2

    def __post_init__(self):
        amp = np.asarray(self.amplitude, dtype=complex)
        n = amp.size
        if amp.ndim != 1 or n < 2 or n & (n - 1):
            raise ConfigError("spectral grid length must be a power of two")
        if self.domega <= 0:
            raise ConfigError("spectral grid spacing must be positive")
        object.__setattr__(self, "amplitude", amp)

    @property
    def n(self) -> int:
        return self.amplitude.size

    @property
    def offsets(self) -> np.ndarray:
        """Angular-frequency offsets from the carrier, rad/fs."""
        return (np.arange(self.n) - self.n // 2) * self.domega

    @property
    def omegas(self) -> np.ndarray:
        return self.carrier + self.offsets

    @property
    def wavelengths_nm(self) -> np.ndarray:
        return 2 * math.pi * C_NM_PER_FS / self.omegas

    def energy(self) -> float:
        return float(np.sum(np.abs(self.amplitude) ** 2) * self.domega)

    def scaled(self, factor: complex) -> "SpectralField":
        return replace(self, amplitude=self.amplitude * factor)

    def with_energy(self, energy: float) -> "SpectralField":
        e = self.energy()
        if e <= 0:
            raise ConfigError("cannot rescale a zero spectrum")
        return self.scaled(math.sqrt(energy / e))


@dataclass(frozen=True)
class TemporalField:
    carrier: float  # rad/fs
    t0: float  # fs, time of the first sample
    dt: float  # fs
    envelope: np.ndarray  # complex, V/m
    beam_area: float | None = None  # m^2, only needed for energies
    # how the integrator resamples between samples: "fourier" for band-limited
    # synthesized fields, "linear" for piecewise envelopes (square, cw)
    interpolation: str = "linear"

    def __post_init__(self):
        env = np.asarray(self.envelope, dtype=complex)
        if env.ndim != 1 or env.size < 2:
            raise ConfigError("temporal envelope needs at least two samples")
        if self.dt <= 0:
            raise ConfigError("time step must be positive")
        if self.interpolation not in ("fourier", "linear"):
            raise ConfigError(f"unknown interpolation {self.interpolation!r}")
        object.__setattr__(self, "envelope", env)

    @property
    def n(self) -> int:
        return self.envelope.size

    @property
    def times(self) -> np.ndarray:
        return self.t0 + np.arange(self.n) * self.dt

    @property
    def t_end(self) -> float:
        return self.t0 + (self.n - 1) * self.dt

    def energy(self) -> float:
        if self.beam_area is None:
            raise ConfigError("temporal field has no beam area; energy undefined")
        fluence = 0.5 * C_SI * EPS0 * np.sum(np.abs(self.envelope) ** 2) * self.dt * FS
        return float(self.beam_area * fluence)

    def peak_intensity(self) -> float:
        """Peak cycle-averaged intensity in W/cm^2."""
        return float(0.5 * C_SI * EPS0 * np.max(np.abs(self.envelope)) ** 2 * 1e-4)

    def scaled(self, factor: complex) -> "TemporalField":
        return replace(self, envelope=self.envelope * factor)

    def shifted(self, delta_t: float) -> "TemporalField":
        return replace(self, t0=self.t0 + delta_t)

    def edge_ratio(self) -> float:
        a = np.abs(self.envelope)
        peak = a.max()
        if peak == 0:
            return 0.0
        return float(max(a[0], a[-1]) / peak)

    def check_window(self, tol: float = WINDOW_TOL) -> None:
        r = self.edge_ratio()
        if r >= tol:
            raise WindowError(
                f"envelope at the time-grid edge is {r:.2e} of its peak (limit {tol:.0e}); "
                "refine the spectral grid")

    def cropped(self, threshold: float = 1e-9, pad: int = 2) -> "TemporalField":
        """Restrict to the samples where |eps| exceeds ``threshold`` times its peak."""
        a = np.abs(self.envelope)
        peak = a.max()
        if peak == 0:
            return replace(self, t0=0.0, envelope=np.zeros(2, complex))
        idx = np.nonzero(a > threshold * peak)[0]
        i0 = max(idx[0] - pad, 0)
        i1 = min(idx[-1] + pad, self.n - 1)
        if i1 == i0:
            i1 = min(i0 + 1, self.n - 1)
            i0 = i1 - 1
        return replace(self, t0=self.t0 + i0 * self.dt, envelope=self.envelope[i0:i1 + 1].copy())

    def intensity_fwhm(self) -> float:
        return fwhm(self.times, np.abs(self.envelope) ** 2)


@dataclass(frozen=True)
class Window:
    center_nm: float
    fwhm_nm: float
    relative_amplitude: float = 1.0
    phase: float = 0.0  # rad

    def __post_init__(self):
        if not self.fwhm_nm > 0:
            raise ConfigError(f"window fwhm must be positive, got {self.fwhm_nm}")
        if not 0.0 <= self.relative_amplitude <= 1.0:
            raise ConfigError(
                f"window relative amplitude must lie in [0, 1], got {self.relative_amplitude}")


@dataclass(frozen=True)
class Mask:
    """Spectral amplitude windows plus a global polynomial spectral phase.

    Each window transmits an intensity profile ``exp(-ln2 |2x/fwhm|^(2*order))``;
    order 1 is a Gaussian, larger orders are flatter-topped. An empty window
    list transmits everything. ``phase_poly[n]`` multiplies ``d**n`` with ``d``
    the offset from the carrier in rad/fs.
    """

    windows: tuple[Window, ...] = ()
    phase_poly: tuple[float, ...] = ()
    order: int = 1

    def __post_init__(self):
        object.__setattr__(self, "windows", tuple(self.windows))
        object.__setattr__(self, "phase_poly", tuple(self.phase_poly))
        if self.order < 1:
            raise ConfigError("super-Gaussian order must be >= 1")

    def transmission(self, wavelengths_nm: np.ndarray, offsets: np.ndarray) -> np.ndarray:
        if self.windows:
            t = np.zeros(wavelengths_nm.shape, complex)
            for w in self.windows:
                x = np.abs(2.0 * (wavelengths_nm - w.center_nm) / w.fwhm_nm)
                t += w.relative_amplitude * np.exp(-0.5 * math.log(2.0) * x ** (2 * self.order)
                                                   + 1j * w.phase)
        else:
            t = np.ones(wavelengths_nm.shape, complex)
        if self.phase_poly:
            t = t * np.exp(1j * np.polynomial.polynomial.polyval(offsets, self.phase_poly))
        return t


def fwhm(x: np.ndarray, y: np.ndarray) -> float:
    """Full width at half maximum with linear interpolation at the crossings."""
    y = np.asarray(y, float)
    i_peak = int(np.argmax(y))
    half = y[i_peak] / 2.0
    if half <= 0:
        return 0.0
    above = np.nonzero(y >= half)[0]
    lo, hi = above[0], above[-1]
    if lo == 0 or hi == y.size - 1:
        raise WindowError("profile does not fall below half maximum inside the grid")
    x_lo = np.interp(half, [y[lo - 1], y[lo]], [x[lo - 1], x[lo]])
    x_hi = np.interp(half, [y[hi + 1], y[hi]], [x[hi + 1], x[hi]])
    return float(x_hi - x_lo)


def tl_duration_estimate(center_nm: float, fwhm_nm: float) -> float:
    """Transform-limited intensity FWHM (fs) of a Gaussian spectrum."""
    return 2 * math.log(2) / math.pi * center_nm ** 2 / (C_NM_PER_FS * fwhm_nm)


def gaussian_spectrum(center_nm: float, fwhm_nm: float, energy: float,
                      grid: GridSpec = GridSpec(), carrier_nm: float | None = None,
                      beam_area: float | None = None) -> SpectralField:
    """Flat-phase Gaussian spectrum with the given intensity FWHM in wavelength."""
    if not fwhm_nm > 0:
        raise ConfigError(f"spectral fwhm must be positive, got {fwhm_nm}")
    if not energy > 0:
        raise ConfigError(f"pulse energy must be positive, got {energy}")
    if carrier_nm is None:
        carrier_nm = center_nm
    if 2 * grid.halfspan_nm < 8 * fwhm_nm:
        raise WindowError(
            f"spectral grid spans {2 * grid.halfspan_nm:g} nm, needs >= 8 x fwhm = {8 * fwhm_nm:g} nm")
    carrier = wavelength_to_omega(carrier_nm)
    dw = grid.domega(carrier_nm)
    offsets = (np.arange(grid.n) - grid.n // 2) * dw
    lam = 2 * math.pi * C_NM_PER_FS / (carrier + offsets)
    amp = np.exp(-2.0 * math.log(2.0) * ((lam - center_nm) / fwhm_nm) ** 2).astype(complex)
    kwargs = {} if beam_area is None else {"beam_area": beam_area}
    sf = SpectralField(carrier=carrier, domega=dw, amplitude=amp, **kwargs)
    a = np.abs(amp)
    if max(a[0], a[-1]) >= WINDOW_TOL * a.max():
        raise WindowError("Gaussian spectrum is not contained in the frequency grid")
    return sf.with_energy(energy)


def apply_mask(sf: SpectralField, mask: Mask) -> SpectralField:
    return replace(sf, amplitude=sf.amplitude * mask.transmission(sf.wavelengths_nm, sf.offsets))


def _field_scale(sf: SpectralField) -> float:
    # |eps_n| = scale * |FFT(a)_n| reproduces the spectral energy (see module docstring)
    return sf.domega / math.sqrt(math.pi * FS * sf.beam_area * C_SI * EPS0)


def time_step(sf: SpectralField) -> float:
    return 2 * math.pi / (sf.n * sf.domega)


def to_temporal(sf: SpectralField, check: bool = True) -> TemporalField:
    """Fourier synthesis of the complex envelope on the conjugate time grid.

    The time grid is centred so that a symmetric flat-phase spectrum peaks at
    t = 0.
    """
    n = sf.n
    dt = time_step(sf)
    env = np.fft.fftshift(np.fft.fft(np.fft.ifftshift(sf.amplitude))) * _field_scale(sf)
    tf = TemporalField(carrier=sf.carrier, t0=-(n // 2) * dt, dt=dt, envelope=env,
                       beam_area=sf.beam_area, interpolation="fourier")
    if check:
        tf.check_window()
    return tf


def to_spectral(tf: TemporalField, domega: float | None = None) -> SpectralField:
    """Inverse of :func:`to_temporal` for fields living on a full synthesis grid."""
    n = tf.n
    if n & (n - 1):
        raise ConfigError("temporal grid length must be a power of two for spectral analysis")
    if domega is None:
        domega = 2 * math.pi / (n * tf.dt)
    if tf.beam_area is None:
        raise ConfigError("temporal field has no beam area")
    # undo a possible time offset relative to the centred grid
    centred_t0 = -(n // 2) * tf.dt
    env = tf.envelope
    shift = tf.t0 - centred_t0
    offsets = (np.arange(n) - n // 2) * domega
    sf = SpectralField(carrier=tf.carrier, domega=domega, amplitude=np.zeros(n, complex),
                       beam_area=tf.beam_area)
    amp = np.fft.fftshift(np.fft.ifft(np.fft.ifftshift(env))) / _field_scale(sf)
    if shift != 0.0:
        amp = amp * np.exp(1j * offsets * shift)
    return replace(sf, amplitude=amp)


def pulse_area(tf: TemporalField, dipole: float) -> float:
    """Integral of |Omega_0(t)| = |eps(t)| mu / hbar over the grid (rad)."""
    integral = np.trapezoid(np.abs(tf.envelope), dx=tf.dt)  # V/m * fs
    return float(dipole * integral / HBAR * FS)


def _split_offset(system: LevelSystem, carrier: float) -> float:
    if system.n_excited != 2:
        raise ConfigError(
            f"effective area needs exactly two excited levels, {system.name or 'system'} has "
            f"{system.n_excited}")
    w = system.frequencies
    return 0.5 * (w[1] + w[2]) - carrier


def partial_areas(field: SpectralField | TemporalField, system: LevelSystem) -> tuple[float, float]:
    """Pulse areas of the two transitions, each from its half of the spectrum.

    The spectrum is cut at the midpoint between the two resonances; the lower
    half drives level 1, the upper half level 2.
    """
    sf = field if isinstance(field, SpectralField) else to_spectral(field)
    cut = _split_offset(system, sf.carrier)
    lower = sf.offsets < cut
    mu = system.dipoles
    a1 = pulse_area(to_temporal(replace(sf, amplitude=np.where(lower, sf.amplitude, 0)),
                                check=False), mu[1])
    a2 = pulse_area(to_temporal(replace(sf, amplitude=np.where(lower, 0, sf.amplitude)),
                                check=False), mu[2])
    return a1, a2


def effective_area(field: SpectralField | TemporalField, system: LevelSystem) -> float:
    a1, a2 = partial_areas(field, system)
    return math.hypot(a1, a2)


def area_from_intensity(peak_intensity: float, tl_duration_fwhm: float, dipole: float) -> float:
    """Pulse area of a Gaussian pulse from its peak intensity (W/cm^2) and
    intensity FWHM (fs)."""
    if peak_intensity < 0 or tl_duration_fwhm <= 0 or dipole <= 0:
        raise ConfigError("intensity must be >= 0, duration and dipole > 0")
    e_peak = math.sqrt(2.0 * peak_intensity * 1e4 / (C_SI * EPS0))
    rabi_peak = dipole * e_peak / HBAR * FS
    field_fwhm = math.sqrt(2.0) * tl_duration_fwhm
    return rabi_peak * field_fwhm * GAUSS_AREA_FACTOR


def write_xy_csv(path: str | Path, x: np.ndarray, values: np.ndarray, x_label: str) -> None:
    """Two-column complex dump: x, real, imag."""
    path = Path(path)
    try:
        with path.open("w") as fh:
            fh.write(f"{x_label},real,imag\n")
            for xi, v in zip(x, values):
                fh.write(f"{xi!r},{v.real!r},{v.imag!r}\n")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc
