"""Closed-form two-level results and the pulse-area law.

Phase convention for :func:`cw_phase`
--------------------------------------
Write the state as ``a|e> exp(-i(w0 t + delta)) + b|g>`` with real ``a, b``
and take the detuning as ``detuning = w_laser - w0``. Starting from the
ground state, a cw field then gives

    delta(t) = -arctan(-(Omega/detuning) * cot(Omega t / 2)) + detuning * t

with the principal arctan. Because ``a`` and ``b`` are real, ``delta`` is fixed
only modulo pi; the branch used here is continuous on every open interval
``2 pi n < Omega t < 2 pi (n+1)`` and steps by +pi at the left end of each
interval (where the excited population vanishes). At exact resonance the
limit ``detuning -> 0+`` on the first quarter period is used: ``delta = pi/2``
plus ``pi`` per completed Rabi cycle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import least_squares

from .errors import ConfigError, NumericsError


@dataclass(frozen=True)
class TwoLevelParams:
    rabi: float  # resonant Rabi frequency, rad/fs
    detuning: float = 0.0  # w_laser - w0, rad/fs

    def __post_init__(self):
        if self.rabi < 0:
            raise ConfigError("Rabi frequency must be >= 0")

    @property
    def generalized(self) -> float:
        return math.hypot(self.rabi, self.detuning)


def cw_population(p: TwoLevelParams, t):
    """Excited-state population (Omega_0/Omega)^2 sin^2(Omega t / 2)."""
    om = p.generalized
    if om == 0.0:
        return np.zeros_like(np.asarray(t, float)) if np.ndim(t) else 0.0
    return (p.rabi / om) ** 2 * np.sin(0.5 * om * np.asarray(t, float)) ** 2


def cw_ground_population(p: TwoLevelParams, t):
    return 1.0 - cw_population(p, t)


def cw_phase(p: TwoLevelParams, t):
    """Relative phase delta(t) of the cw two-level solution (see module docs)."""
    t = np.asarray(t, float)
    om = p.generalized
    if om == 0.0:
        raise ConfigError("relative phase is undefined without a driving field")
    n = np.floor(om * t / (2 * math.pi))
    v = 0.5 * om * t - math.pi * n  # in [0, pi)
    if p.detuning == 0.0:
        out = 0.5 * math.pi + math.pi * n
        return out if out.ndim else float(out)

    d = p.detuning
    s = np.sin(v)
    with np.errstate(divide="ignore", invalid="ignore"):
        x = -(om / d) * np.cos(v) / s
        term = np.where(s == 0.0, math.copysign(0.5 * math.pi, d), -np.arctan(x))
    out = term + d * t
    if d < 0:
        # principal arctan steps by -pi at the cycle boundaries; shift to +pi
        out = out + 2 * math.pi * n
    return out if out.ndim else float(out)


def area_population(area):
    """Final excited population sin^2(A/2) after a resonant pulse of area A."""
    return np.sin(0.5 * np.asarray(area, float)) ** 2 if np.ndim(area) else math.sin(0.5 * area) ** 2


@dataclass(frozen=True)
class AreaFit:
    k: float  # rad / sqrt(J)
    amplitude: float
    offset: float
    residual: float  # L2 norm of residuals

    def area(self, energy):
        return self.k * np.sqrt(energy)

    @property
    def first_minimum_energy(self) -> float:
        """Energy at which the fitted area first reaches 2 pi."""
        return (2 * math.pi / self.k) ** 2

    def model(self, energy):
        return self.amplitude * np.sin(0.5 * self.k * np.sqrt(energy)) ** 2 + self.offset


class FitError(NumericsError):
    def __init__(self, message, best: AreaFit | None = None):
        super().__init__(message)
        self.best = best


def _linear_solve(basis, y):
    # y ~ amp * basis + off, for every row of basis at once
    n = y.size
    sb = basis.sum(axis=1)
    sbb = (basis * basis).sum(axis=1)
    sy = y.sum()
    sby = basis @ y
    det = n * sbb - sb * sb
    with np.errstate(divide="ignore", invalid="ignore"):
        amp = (n * sby - sb * sy) / det
        off = (sy - amp * sb) / n
    res = ((amp[:, None] * basis + off[:, None] - y[None, :]) ** 2).sum(axis=1)
    return amp, off, np.where(np.isfinite(res), res, np.inf)


def fit_area_scale(energies, signal, k_points: int | None = None) -> AreaFit:
    """Least-squares fit of ``signal ~ amplitude * sin^2(k sqrt(E)/2) + offset``.

    A coarse scan over k (with amplitude and offset solved linearly at each
    k) picks the basin; Levenberg-Marquardt then polishes all three.
    """
    e = np.asarray(energies, float)
    y = np.asarray(signal, float)
    if e.shape != y.shape or e.ndim != 1:
        raise ConfigError("energies and signal must be 1-D arrays of equal length")
    if e.size < 10:
        raise ConfigError(f"area fit needs at least 10 points, got {e.size}")
    if np.any(e < 0):
        raise ConfigError("energies must be non-negative")
    x = np.sqrt(e)
    x_max = x.max()
    if x_max <= 0:
        raise ConfigError("energies span no range")

    k_lo = math.pi / x_max
    k_hi = 2 * math.pi * max(e.size / 4, 1.5) / x_max
    if k_points is None:
        k_points = int(math.ceil((k_hi - k_lo) * x_max / 0.02)) + 1
    ks = np.linspace(k_lo, k_hi, k_points)
    basis = np.sin(0.5 * ks[:, None] * x[None, :]) ** 2
    amp, off, res = _linear_solve(basis, y)
    i = int(np.argmin(res))
    start = np.array([ks[i], amp[i], off[i]])
    best = AreaFit(float(ks[i]), float(amp[i]), float(off[i]), float(math.sqrt(res[i])))

    def resid(p):
        return p[1] * np.sin(0.5 * p[0] * x) ** 2 + p[2] - y

    sol = least_squares(resid, start, method="lm", xtol=1e-14, ftol=1e-14, gtol=1e-14)
    if sol.status <= 0 or not np.all(np.isfinite(sol.x)):
        raise FitError(f"area fit did not converge: {sol.message}", best)
    k, a, o = sol.x
    fit = AreaFit(float(abs(k)), float(a), float(o), float(np.linalg.norm(sol.fun)))
    if fit.residual > best.residual * (1 + 1e-9):
        fit = best
    if fit.k * x_max < 2 * math.pi:
        raise FitError("data cover less than one Rabi oscillation", fit)
    return fit


def load_energy_signal(path) -> tuple[np.ndarray, np.ndarray]:
    """Read two-column (energy J, signal) CSV data for :func:`fit_area_scale`.

    A non-numeric first row is treated as a header.
    """
    try:
        with open(path) as fh:
            first = fh.readline()
        skip = 0
        try:
            [float(v) for v in first.split(",")[:2]]
        except ValueError:
            skip = 1
        data = np.loadtxt(path, delimiter=",", skiprows=skip, ndmin=2)
    except OSError as exc:
        raise OSError(f"cannot read {path}: {exc.strerror}") from exc
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    if data.shape[1] < 2:
        raise ConfigError(f"{path}: need two columns (energy, signal)")
    return data[:, 0], data[:, 1]
