"""Scan execution: area scans, area x delay maps and energy scans.

Every scan point is an independent propagation of one fixed pulse shape at
a different field scale, so points can be split across worker processes in
any grouping without changing a single output bit.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from functools import lru_cache
from pathlib import Path

import numpy as np
from scipy.optimize import brentq

from .atomics import LevelSystem, make_preset
from .config import ExperimentConfig
from .errors import ConfigError, NumericsError
from .observables import (
    ProbeModel,
    beam_average,
    beat_signal,
    detect_phase_jumps,
    phase_set,
    scan_relative_phase,
)
from .oracle import AreaFit, FitError, fit_area_scale
from .propagator import (
    NORM_TOL,
    PreparedField,
    Trajectory,
    WavepacketState,
    _coefficients,
    _rk4,
    prepare,
)
from .pulse import (
    GridSpec,
    Mask,
    SpectralField,
    TemporalField,
    Window,
    apply_mask,
    area_from_intensity,
    beam_area_from_waist,
    gaussian_spectrum,
    partial_areas,
    pulse_area,
    to_temporal,
)

KINDS = ("ion_signal", "population", "ground_population", "relative_phase")


@dataclass(frozen=True)
class ScanGrid:
    """One observable on a scan grid. ``z`` has shape (len(y), len(x)) for
    maps and (len(x),) for line scans."""

    x: np.ndarray
    z: np.ndarray
    kind: str
    y: np.ndarray | None = None
    label: str = ""
    x_label: str = "area_pi"
    y_label: str = "delay_fs"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown observable kind {self.kind!r}")
        x = np.asarray(self.x, float)
        z = np.asarray(self.z, float)
        want = (x.size,) if self.y is None else (np.asarray(self.y).size, x.size)
        if z.shape != want:
            raise ConfigError(f"observable shape {z.shape} does not match axes {want}")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "z", z)
        if self.y is not None:
            object.__setattr__(self, "y", np.asarray(self.y, float))

    @property
    def name(self) -> str:
        return self.label or self.kind


@dataclass(frozen=True)
class ScanResult:
    grids: tuple[ScanGrid, ...]
    max_norm_drift: float
    meta: dict = field(default_factory=dict)

    def __getitem__(self, name: str) -> ScanGrid:
        for g in self.grids:
            if g.name == name:
                return g
        raise KeyError(name)


# ---- field construction ---------------------------------------------------

@dataclass(frozen=True)
class FieldSetup:
    system: LevelSystem
    spectrum: SpectralField  # at the reference energy
    temporal: TemporalField
    reference_area: float  # rad; A_eff for two excited levels, A otherwise
    mask: Mask
    prepared: PreparedField


def _windows(cfg: ExperimentConfig, bandwidth_nm: float | None) -> list[Window]:
    out = []
    for w in cfg.windows:
        out.append(Window(w.center_nm, bandwidth_nm or w.fwhm_nm, w.relative_amplitude, w.phase_rad))
    return out


def _reference_area(field, system: LevelSystem) -> float:
    if system.n_excited == 2:
        return math.hypot(*partial_areas(field, system))
    if system.n_excited == 1:
        return pulse_area(field, system.dipoles[1])
    raise ConfigError("area scans support one or two excited levels")


def balance_windows(base: SpectralField, windows: list[Window], system: LevelSystem,
                    order: int, extra: tuple[Window, ...] = ()) -> list[Window]:
    """Rescale the two window amplitudes so both transitions see equal area.

    The stronger window is kept at amplitude 1.
    """
    if len(windows) != 2 or system.n_excited != 2:
        raise ConfigError("area balancing needs two windows and two excited levels")
    w0, w1 = windows

    def amps(log_rho):
        rho = math.exp(log_rho)
        return (1.0, rho) if rho <= 1 else (1.0 / rho, 1.0)

    def mismatch(log_rho):
        a0, a1 = amps(log_rho)
        m = Mask((replace(w0, relative_amplitude=a0), replace(w1, relative_amplitude=a1)) + extra,
                 order=order)
        areas = partial_areas(apply_mask(base, m), system)
        return math.log(areas[0] / areas[1])

    lo, hi = math.log(1e-3), math.log(1e3)
    if mismatch(lo) * mismatch(hi) > 0:
        raise NumericsError("cannot balance the transition areas with these windows")
    log_rho = brentq(mismatch, lo, hi, xtol=1e-13, rtol=1e-13)
    a0, a1 = amps(log_rho)
    return [replace(w0, relative_amplitude=a0), replace(w1, relative_amplitude=a1)]


@lru_cache(maxsize=8)
def build_setup(cfg: ExperimentConfig, bandwidth_nm: float | None = None) -> FieldSetup:
    """Reference pulse for a config (and optional window-width override)."""
    system = make_preset(cfg.preset, cfg.dipole_Cm)
    grid = GridSpec(cfg.grid_points, cfg.grid_halfspan_nm)
    base = gaussian_spectrum(cfg.center_nm, cfg.fwhm_nm, cfg.energy_J, grid,
                             carrier_nm=cfg.carrier_nm,
                             beam_area=beam_area_from_waist(cfg.beam_waist_um))
    wins = _windows(cfg, bandwidth_nm)
    extra: tuple[Window, ...] = ()
    if cfg.include_772nm_leak:
        extra = (Window(cfg.leak_center_nm, cfg.leak_fwhm_nm, cfg.leak_relative_amplitude),)
    if cfg.balance_areas:
        wins = balance_windows(base, wins, system, cfg.supergauss_order, extra)
    mask = Mask(tuple(wins) + extra, order=cfg.supergauss_order) if wins or extra else Mask()
    sf = apply_mask(base, mask).with_energy(cfg.energy_J) if wins or extra else base
    tf = to_temporal(sf)
    area = _reference_area(sf if system.n_excited == 2 else tf, system)
    if not area > 0:
        raise ConfigError("reference pulse has zero area; check the mask windows")
    return FieldSetup(system, sf, tf, area, mask, prepare(tf, cfg.rk4_step_fs))


def probe_model(cfg: ExperimentConfig) -> ProbeModel:
    return ProbeModel(cfg.path_weights, cfg.nonlinearity_order, cfg.probe_duration_fs)


# ---- per-point kernels ----------------------------------------------------

def _ground(n: int) -> np.ndarray:
    c = np.zeros(n, complex)
    c[0] = 1.0
    return c


def _integrate(setup: FieldSetup, scale: float, c0: np.ndarray, stride: int | None = None):
    pf = setup.prepared
    det, coeff, _ = _coefficients(setup.system, pf.carrier)
    stride = max(pf.nsteps, 1) if stride is None else stride
    return _rk4(pf.env, pf.h, det, coeff, complex(scale), c0, stride)


def _record_times(pf: PreparedField, nrec: int) -> np.ndarray:
    return pf.t0 + np.arange(nrec) * pf.h


def _prepulse_state(setup: FieldSetup, cfg: ExperimentConfig, scale: float):
    """Amplitudes at the start of the main pulse after a pre-pulse; also the drift."""
    pf = setup.prepared
    nl = setup.system.n_levels
    c_pre, _, drift = _integrate(setup, scale * math.sqrt(cfg.prepulse_fraction), _ground(nl))
    det, _, _ = _coefficients(setup.system, pf.carrier)
    gap = cfg.prepulse_delay_fs + pf.t0 - pf.t_end
    if gap < 0:
        raise ConfigError("pre-pulse overlaps the main pulse")
    return c_pre * np.exp(-1j * det * gap), drift


def _phases(cfg: ExperimentConfig) -> np.ndarray:
    return phase_set(16) if cfg.prepulse_phase == "average" else np.array([cfg.prepulse_phase])


def _gauge(c: np.ndarray, phase: float) -> np.ndarray:
    # main-pulse phase exp(i phi) == excited amplitudes rotated by exp(-i phi) before and after
    out = c.copy()
    out[1:] *= np.exp(-1j * phase)
    return out


def _basis_run(setup: FieldSetup, scale: float, stride: int | None):
    """Propagator columns: main-pulse evolution of every basis state."""
    nl = setup.system.n_levels
    cols, drift = [], 0.0
    for j in range(nl):
        e = np.zeros(nl, complex)
        e[j] = 1.0
        fin, rec, d = _integrate(setup, scale, e, stride)
        cols.append(rec if stride is not None else fin)
        drift = max(drift, d)
    return np.stack(cols, axis=-1), drift


def _delay_point(cfg: ExperimentConfig, bandwidth, scale: float, delays: np.ndarray):
    setup = build_setup(cfg, bandwidth)
    pf = setup.prepared
    probe = probe_model(cfg)
    nl = setup.system.n_levels
    if cfg.prepulse_fraction > 0:
        c_init, d0 = _prepulse_state(setup, cfg, scale)
        U, d1 = _basis_run(setup, scale, 1)
        times = _record_times(pf, U.shape[0])
        sig = np.zeros(delays.size)
        for ph in _phases(cfg):
            states = U @ _gauge(c_init, ph)
            traj = Trajectory(times, states, WavepacketState(states[-1], pf.t_end, pf.carrier),
                              pf.carrier, 0.0)
            sig += beat_signal(traj, setup.system, probe, delays).signal
        return sig / len(_phases(cfg)), max(d0, d1)
    fin, rec, drift = _integrate(setup, scale, _ground(nl), 1)
    traj = Trajectory(_record_times(pf, rec.shape[0]), rec,
                      WavepacketState(fin, pf.t_end, pf.carrier), pf.carrier, drift)
    return beat_signal(traj, setup.system, probe, delays).signal, drift


def _final_point(cfg: ExperimentConfig, bandwidth, scale: float):
    """Final amplitudes (one row per pre-pulse phase) for one scale."""
    setup = build_setup(cfg, bandwidth)
    nl = setup.system.n_levels
    if cfg.prepulse_fraction > 0:
        c_init, d0 = _prepulse_state(setup, cfg, scale)
        U, d1 = _basis_run(setup, scale, None)
        return np.array([U @ _gauge(c_init, ph) for ph in _phases(cfg)]), max(d0, d1)
    fin, _, drift = _integrate(setup, scale, _ground(nl))
    return fin[None, :], drift


def _chunk(task):
    kind, cfg, bandwidth, scales, delays = task
    out, drifts = [], []
    for s in scales:
        if kind == "delay":
            r, d = _delay_point(cfg, bandwidth, float(s), delays)
        else:
            r, d = _final_point(cfg, bandwidth, float(s))
        out.append(r)
        drifts.append(d)
    return out, drifts


def _map_points(kind, cfg, bandwidth, scales, delays=None, workers: int = 1):
    scales = np.asarray(scales, float)
    if workers <= 1 or scales.size < 2:
        results, drifts = _chunk((kind, cfg, bandwidth, scales, delays))
    else:
        parts = np.array_split(scales, min(workers, scales.size))
        tasks = [(kind, cfg, bandwidth, p, delays) for p in parts]
        results, drifts = [], []
        with ProcessPoolExecutor(max_workers=workers) as ex:
            for r, d in ex.map(_chunk, tasks):  # map preserves submission order
                results.extend(r)
                drifts.extend(d)
    drift = max(drifts) if drifts else 0.0
    if drift > NORM_TOL:
        raise NumericsError(f"norm drifted by {drift:.2e} in the scan; use a smaller RK4 step")
    return results, drift


def _extend_to_zero(areas: np.ndarray) -> tuple[np.ndarray, int]:
    """Prepend samples between 0 and the first area so beam averaging has
    the low-area values it needs. Returns the extended grid and the number
    of prepended points."""
    if areas[0] <= 0:
        return areas, 0
    spacing = float(np.min(np.diff(areas))) if areas.size > 1 else areas[0]
    m = max(1, int(math.ceil(areas[0] / spacing - 1e-9)))
    return np.concatenate([np.linspace(0.0, areas[0], m, endpoint=False), areas]), m


def _averaged(cfg: ExperimentConfig, areas: np.ndarray, values: np.ndarray) -> np.ndarray:
    if cfg.diameter_ratio is None:
        return values
    return beam_average(areas, values, cfg.diameter_ratio, cfg.averaging_order)


# ---- scans ----------------------------------------------------------------

def _pi_trace_peak(cfg: ExperimentConfig, bandwidth, reference_area: float, spacing_pi: float,
                   delays: np.ndarray, workers: int) -> tuple[float, float]:
    """Largest value over delay of the (averaged) trace at A_eff = pi."""
    if cfg.diameter_ratio is None:
        areas = np.array([1.0])
    else:
        # averaging at pi needs every area below it, on the map's own spacing
        areas = np.linspace(0.0, 1.0, max(2, int(math.ceil(1.0 / spacing_pi - 1e-9)) + 1))
    rows, drift = _map_points("delay", cfg, bandwidth, areas * math.pi / reference_area, delays,
                              workers)
    trace = _averaged(cfg, areas, np.array(rows))[-1]
    return float(trace.max()), drift


def run_area_delay_scan(cfg: ExperimentConfig, workers: int = 1) -> ScanResult:
    """Probe signal versus effective area and probe delay, normalised so the
    trace at A_eff = pi peaks at 1 over the delay window."""
    if cfg.area_pi is None or cfg.delay_fs is None:
        raise ConfigError("area-delay scan needs area and delay axes")
    setup = build_setup(cfg, cfg.bandwidths_nm[0] if cfg.bandwidths_nm else None)
    if setup.system.n_excited != 2:
        raise ConfigError(f"area-delay scans need two excited levels; {cfg.preset} has "
                          f"{setup.system.n_excited}")
    areas = cfg.area_pi.values()
    delays = cfg.delay_fs.values()
    full, m = _extend_to_zero(areas) if cfg.diameter_ratio is not None else (areas, 0)
    scales = full * math.pi / setup.reference_area
    bw = cfg.bandwidths_nm[0] if cfg.bandwidths_nm else None
    rows, drift = _map_points("delay", cfg, bw, scales, delays, workers)
    z = np.array(rows)  # (n_area, n_delay)
    z = _averaged(cfg, full, z)[m:]
    spacing = float(np.min(np.diff(areas))) if areas.size > 1 else 1.0
    peak, d_pi = _pi_trace_peak(cfg, bw, setup.reference_area, spacing, delays, workers)
    if not peak > 0:
        raise NumericsError("the A_eff = pi trace is zero over the delay window")
    grid = ScanGrid(areas, z.T / peak, "ion_signal", y=delays)
    return ScanResult((grid,), max(drift, d_pi),
                      {"reference_area": setup.reference_area, "pi_trace_peak": peak})


@dataclass(frozen=True)
class AreaScanPart:
    bandwidth_nm: float | None
    result: ScanResult
    jumps: tuple
    populations: np.ndarray  # (n, n_levels)
    indeterminate: np.ndarray


def _area_scan_single(cfg: ExperimentConfig, bandwidth, workers: int) -> AreaScanPart:
    setup = build_setup(cfg, bandwidth)
    system = setup.system
    areas = cfg.area_pi.values()
    scales = areas * math.pi / setup.reference_area
    rows, drift = _map_points("final", cfg, bandwidth, scales, workers=workers)
    finals = np.array([r[0] for r in rows])
    pops = np.abs(finals) ** 2
    grids = [ScanGrid(areas, pops[:, 0], "ground_population", label="P0")]
    for k in range(1, system.n_levels):
        grids.append(ScanGrid(areas, pops[:, k], "population", label=f"P{k}"))
    meta = {"reference_area": setup.reference_area, "bandwidth_nm": bandwidth}
    jumps: tuple = ()
    bad = np.zeros(areas.size, bool)
    if system.n_excited == 2:
        wrapped, unwrapped, bad = scan_relative_phase(finals, system, setup.prepared.carrier,
                                                      setup.prepared.t_end)
        grids.append(ScanGrid(areas, wrapped, "relative_phase", label="phase"))
        grids.append(ScanGrid(areas, unwrapped, "relative_phase", label="phase_unwrapped"))
        grids.append(ScanGrid(areas, bad.astype(float), "relative_phase",
                              label="phase_indeterminate"))
        jumps = tuple(detect_phase_jumps(areas * math.pi, unwrapped, pops))
    return AreaScanPart(bandwidth, ScanResult(tuple(grids), drift, meta), jumps, pops, bad)


def run_area_scan(cfg: ExperimentConfig, workers: int = 1) -> list[AreaScanPart]:
    """Final populations and relative phase versus effective area, once per
    configured window bandwidth."""
    if cfg.area_pi is None:
        raise ConfigError("area scan needs an area axis")
    if cfg.prepulse_fraction > 0 or cfg.diameter_ratio is not None:
        raise ConfigError("area scans report single-atom amplitudes; remove the prepulse "
                          "and averaging sections")
    bws = cfg.bandwidths_nm or (None,)
    return [_area_scan_single(cfg, bw, workers) for bw in bws]


@dataclass(frozen=True)
class EnergyScan:
    result: ScanResult
    energies: np.ndarray  # J
    areas: np.ndarray  # rad, true single-transition area
    signal: np.ndarray
    fit: AreaFit | None
    fit_error: str | None
    minimum_area: float | None  # rad, true area at the fitted first minimum
    intensity_area: float | None  # rad, from peak intensity and TL duration at that energy


def run_rb_energy_scan(cfg: ExperimentConfig, workers: int = 1) -> EnergyScan:
    """Excited population versus pulse energy with a sin^2 area fit."""
    setup = build_setup(cfg, cfg.bandwidths_nm[0] if cfg.bandwidths_nm else None)
    if setup.system.n_excited != 1:
        raise ConfigError(f"energy scans need a two-level preset; {cfg.preset} has "
                          f"{setup.system.n_excited} excited levels")
    e_ref = cfg.energy_J
    if cfg.energy_axis_J is not None:
        energies = cfg.energy_axis_J.values()
        scales = np.sqrt(energies / e_ref)
    else:
        scales = cfg.area_pi.values() * math.pi / setup.reference_area
        energies = e_ref * scales ** 2
    areas = setup.reference_area * scales
    full, m = _extend_to_zero(areas) if cfg.diameter_ratio is not None else (areas, 0)
    full_scales = full / setup.reference_area
    bw = cfg.bandwidths_nm[0] if cfg.bandwidths_nm else None
    rows, drift = _map_points("final", cfg, bw, full_scales, workers=workers)
    pops = np.array([np.mean(np.abs(r) ** 2, axis=0) for r in rows])
    signal = _averaged(cfg, full, 1.0 - pops[:, 0])[m:]
    grids = (ScanGrid(energies, signal, "population", label="excited", x_label="energy_J"),
             ScanGrid(energies, areas / math.pi, "population", label="area_pi", x_label="energy_J"))
    fit = err = None
    min_area = i_area = None
    try:
        fit = fit_area_scale(energies, signal)
    except FitError as exc:
        err, fit = str(exc), exc.best
    except ConfigError as exc:
        err = str(exc)
    if fit is not None:
        e_min = fit.first_minimum_energy
        s_min = math.sqrt(e_min / e_ref)
        min_area = setup.reference_area * s_min
        tf = setup.temporal.scaled(s_min)
        i_area = area_from_intensity(tf.peak_intensity(), tf.intensity_fwhm(),
                                     setup.system.dipoles[1])
    meta = {"reference_area": setup.reference_area}
    return EnergyScan(ScanResult(grids, drift, meta), energies, areas, signal, fit, err,
                      min_area, i_area)


def period_contrast(areas, signal, period: int) -> float:
    """Michelson contrast (max - min)/(max + min) over area period ``period``
    (1-based), i.e. areas in [2(n-1) pi, 2 n pi]."""
    areas = np.asarray(areas, float)
    signal = np.asarray(signal, float)
    lo, hi = 2 * (period - 1) * math.pi, 2 * period * math.pi
    sel = (areas >= lo - 1e-9) & (areas <= hi + 1e-9)
    if sel.sum() < 3:
        raise ConfigError(f"scan has fewer than 3 samples in period {period}")
    mx, mn = signal[sel].max(), signal[sel].min()
    return float((mx - mn) / (mx + mn)) if mx + mn > 0 else 0.0


# ---- output ---------------------------------------------------------------

def _fmt(v: float) -> str:
    return repr(float(v))


def emit(grids: ScanGrid | ScanResult | list[ScanGrid], path: str | Path,
         fmt: str = "csv") -> Path:
    """Write a map or a set of line scans sharing one x axis.

    csv: header with units, one row per sample (long form for maps).
    gnuplot-matrix: first row ``N x1 .. xN``, then ``y z1 .. zN`` per delay.
    """
    if isinstance(grids, ScanResult):
        grids = list(grids.grids)
    elif isinstance(grids, ScanGrid):
        grids = [grids]
    if not grids:
        raise ConfigError("nothing to emit")
    path = Path(path)
    lines = []
    first = grids[0]
    if first.y is not None:
        if len(grids) != 1:
            raise ConfigError("maps are emitted one per file")
        if fmt == "gnuplot-matrix":
            lines.append(" ".join([str(first.x.size)] + [_fmt(v) for v in first.x]))
            for yi, row in zip(first.y, first.z):
                lines.append(" ".join([_fmt(yi)] + [_fmt(v) for v in row]))
        elif fmt == "csv":
            lines.append(f"{first.x_label},{first.y_label},{first.name}")
            for j, yi in enumerate(first.y):
                for i, xi in enumerate(first.x):
                    lines.append(f"{_fmt(xi)},{_fmt(yi)},{_fmt(first.z[j, i])}")
        else:
            raise ConfigError(f"unknown output format {fmt!r}")
    else:
        if any(g.y is not None or not np.array_equal(g.x, first.x) for g in grids):
            raise ConfigError("line scans in one file must share the x axis")
        if fmt not in ("csv", "gnuplot-matrix"):
            raise ConfigError(f"unknown output format {fmt!r}")
        sep = "," if fmt == "csv" else " "
        head = [first.x_label] + [g.name for g in grids]
        lines.append(sep.join(head) if fmt == "csv" else "# " + " ".join(head))
        for i, xi in enumerate(first.x):
            lines.append(sep.join([_fmt(xi)] + [_fmt(g.z[i]) for g in grids]))
    try:
        path.write_text("\n".join(lines) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror}") from exc
    return path
