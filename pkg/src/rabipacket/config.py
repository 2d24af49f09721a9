"""Experiment configuration files.

Dialect: YAML, one mapping per file, ``schema_version: 1``. Every physical
quantity carries its unit in the key name (``_nm``, ``_fs``, ``_J``, ``_rad``,
``_pi`` for multiples of pi). Unknown keys are rejected so that typos do not
silently fall back to defaults.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

from .atomics import PRESETS
from .errors import ConfigError

SCHEMA_VERSION = 1
SCAN_KINDS = ("area_delay", "area", "energy")


@dataclass(frozen=True)
class AxisSpec:
    min: float
    max: float
    points: int

    def __post_init__(self):
        if not (math.isfinite(self.min) and math.isfinite(self.max)):
            raise ConfigError("scan range must be finite")
        if self.points < 2:
            raise ConfigError(f"scan needs at least 2 points, got {self.points}")
        if self.max <= self.min:
            raise ConfigError(f"scan max ({self.max}) must exceed min ({self.min})")

    def values(self):
        import numpy as np
        return np.linspace(self.min, self.max, self.points)


@dataclass(frozen=True)
class WindowSpec:
    center_nm: float
    fwhm_nm: float
    relative_amplitude: float = 1.0
    phase_rad: float = 0.0


@dataclass(frozen=True)
class ExperimentConfig:
    preset: str
    center_nm: float
    fwhm_nm: float
    energy_J: float
    carrier_nm: float
    kind: str
    windows: tuple[WindowSpec, ...] = ()
    balance_areas: bool = False
    area_pi: AxisSpec | None = None
    delay_fs: AxisSpec | None = None
    energy_axis_J: AxisSpec | None = None
    bandwidths_nm: tuple[float, ...] = ()
    dipole_Cm: float | None = None
    beam_waist_um: float = 250.0
    path_weights: tuple[complex, ...] = (1.0, 1.0)
    nonlinearity_order: int = 2
    probe_duration_fs: float = 120.0
    diameter_ratio: float | None = None
    averaging_order: int | None = None
    prepulse_fraction: float = 0.0
    prepulse_phase: Any = "average"
    prepulse_delay_fs: float = 2.8e6
    grid_points: int = 2 ** 14
    grid_halfspan_nm: float = 45.0
    rk4_step_fs: Any = "auto"
    supergauss_order: int = 1
    include_772nm_leak: bool = False
    leak_center_nm: float = 772.0
    leak_fwhm_nm: float = 0.5
    leak_relative_amplitude: float = 0.1
    output_format: str = "csv"
    source: str = field(default="<memory>", compare=False)


_TOP = {"schema_version", "preset", "dipole_Cm", "carrier_nm", "beam_waist_um", "spectrum",
        "mask", "scan", "probe", "averaging", "prepulse", "numerics", "output"}
_SECTIONS = {
    "spectrum": {"center_nm", "fwhm_nm", "energy_J"},
    "mask": {"windows", "balance_areas"},
    "scan": {"kind", "area_pi", "delay_fs", "energy_J", "bandwidths_nm"},
    "probe": {"path_weights", "nonlinearity_order", "duration_fs"},
    "averaging": {"diameter_ratio", "order"},
    "prepulse": {"fraction", "phase_rad", "delay_fs"},
    "numerics": {"grid_points", "grid_halfspan_nm", "rk4_step_fs", "supergauss_order",
                 "include_772nm_leak", "leak_center_nm", "leak_fwhm_nm",
                 "leak_relative_amplitude"},
    "output": {"format"},
}
_WINDOW_KEYS = {"center_nm", "fwhm_nm", "relative_amplitude", "phase_rad"}


class _LineLoader(yaml.SafeLoader):
    """Safe loader that remembers the line of every mapping key."""


def _construct_mapping(loader, node, deep=False):
    mapping = yaml.SafeLoader.construct_mapping(loader, node, deep=deep)
    lines = {}
    for key_node, _ in node.value:
        lines[loader.construct_object(key_node)] = key_node.start_mark.line + 1
    return _Mapping(mapping, lines)


class _Mapping(dict):
    def __init__(self, data, lines):
        super().__init__(data)
        self.lines = lines


_LineLoader.add_constructor(yaml.resolver.BaseResolver.DEFAULT_MAPPING_TAG, _construct_mapping)


class _Reader:
    def __init__(self, source: str):
        self.source = source

    def fail(self, msg: str, mapping=None, key=None):
        line = getattr(mapping, "lines", {}).get(key) if mapping is not None else None
        where = f"{self.source}:{line}" if line else self.source
        raise ConfigError(f"{where}: {msg}")

    def section(self, doc, name, required=False):
        sec = doc.get(name)
        if sec is None:
            if required:
                self.fail(f"missing section '{name}'")
            return _Mapping({}, {})
        if not isinstance(sec, dict):
            self.fail(f"section '{name}' must be a mapping", doc, name)
        unknown = set(sec) - _SECTIONS[name]
        if unknown:
            k = sorted(unknown)[0]
            self.fail(f"unknown key '{name}.{k}' (allowed: {', '.join(sorted(_SECTIONS[name]))})",
                      sec, k)
        return sec

    def number(self, sec, key, default=None, required=False, positive=False, name=""):
        if key not in sec or sec[key] is None:
            if required:
                self.fail(f"missing key '{name}{key}'", sec)
            return default
        v = sec[key]
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            self.fail(f"'{name}{key}' must be a number, got {v!r}", sec, key)
        if not math.isfinite(v):
            self.fail(f"'{name}{key}' must be finite", sec, key)
        if positive and v <= 0:
            self.fail(f"'{name}{key}' must be positive, got {v}", sec, key)
        return float(v)

    def integer(self, sec, key, default, minimum=1, name=""):
        if key not in sec:
            return default
        v = sec[key]
        if isinstance(v, bool) or not isinstance(v, int) or v < minimum:
            self.fail(f"'{name}{key}' must be an integer >= {minimum}, got {v!r}", sec, key)
        return v

    def axis(self, sec, key, name):
        if key not in sec:
            return None
        a = sec[key]
        if not isinstance(a, dict) or set(a) != {"min", "max", "points"}:
            self.fail(f"'{name}{key}' needs exactly min, max, points", sec, key)
        lo = self.number(a, "min", required=True, name=f"{name}{key}.")
        hi = self.number(a, "max", required=True, name=f"{name}{key}.")
        n = self.integer(a, "points", None, minimum=2, name=f"{name}{key}.")
        try:
            return AxisSpec(lo, hi, n)
        except ConfigError as exc:
            self.fail(f"'{name}{key}': {exc}", sec, key)


def _complex(v):
    if isinstance(v, (list, tuple)) and len(v) == 2:
        return complex(float(v[0]), float(v[1]))
    if isinstance(v, (int, float)) and not isinstance(v, bool):
        return complex(v)
    raise ConfigError(f"path weight must be a number or [re, im], got {v!r}")


def parse_config(text: str, source: str = "<string>") -> ExperimentConfig:
    try:
        doc = yaml.load(text, Loader=_LineLoader)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"{source}:{mark.line + 1}" if mark else source
        raise ConfigError(f"{where}: YAML syntax error: {getattr(exc, 'problem', exc)}") from None
    r = _Reader(source)
    if not isinstance(doc, dict):
        r.fail("config must be a mapping")
    unknown = set(doc) - _TOP
    if unknown:
        k = sorted(unknown)[0]
        r.fail(f"unknown top-level key '{k}'", doc, k)
    if doc.get("schema_version") != SCHEMA_VERSION:
        r.fail(f"schema_version must be {SCHEMA_VERSION}, got {doc.get('schema_version')!r}",
               doc, "schema_version")
    preset = doc.get("preset")
    if preset not in PRESETS:
        r.fail(f"unknown preset {preset!r}; available: {', '.join(sorted(PRESETS))}", doc, "preset")

    spec = r.section(doc, "spectrum", required=True)
    center = r.number(spec, "center_nm", required=True, positive=True, name="spectrum.")
    kw: dict[str, Any] = dict(
        preset=preset,
        center_nm=center,
        fwhm_nm=r.number(spec, "fwhm_nm", required=True, positive=True, name="spectrum."),
        energy_J=r.number(spec, "energy_J", 1e-6, positive=True, name="spectrum."),
        carrier_nm=r.number(doc, "carrier_nm", center, positive=True),
        dipole_Cm=r.number(doc, "dipole_Cm", None, positive=True),
        beam_waist_um=r.number(doc, "beam_waist_um", 250.0, positive=True),
        source=source,
    )

    mask = r.section(doc, "mask")
    wins = []
    for i, w in enumerate(mask.get("windows") or []):
        if not isinstance(w, dict):
            r.fail(f"mask.windows[{i}] must be a mapping", mask, "windows")
        bad = set(w) - _WINDOW_KEYS
        if bad:
            r.fail(f"unknown key 'mask.windows[{i}].{sorted(bad)[0]}'", w, sorted(bad)[0])
        nm = f"mask.windows[{i}]."
        amp = r.number(w, "relative_amplitude", 1.0, name=nm)
        if not 0.0 <= amp <= 1.0:
            r.fail(f"'{nm}relative_amplitude' must lie in [0, 1], got {amp}", w,
                   "relative_amplitude")
        wins.append(WindowSpec(r.number(w, "center_nm", required=True, positive=True, name=nm),
                               r.number(w, "fwhm_nm", required=True, positive=True, name=nm),
                               amp, r.number(w, "phase_rad", 0.0, name=nm)))
    kw["windows"] = tuple(wins)
    kw["balance_areas"] = bool(mask.get("balance_areas", False))
    if kw["balance_areas"] and len(wins) != 2:
        r.fail("mask.balance_areas needs exactly two windows", mask, "balance_areas")

    scan = r.section(doc, "scan", required=True)
    kind = scan.get("kind")
    if kind not in SCAN_KINDS:
        r.fail(f"scan.kind must be one of {', '.join(SCAN_KINDS)}, got {kind!r}", scan, "kind")
    kw["kind"] = kind
    kw["area_pi"] = r.axis(scan, "area_pi", "scan.")
    kw["delay_fs"] = r.axis(scan, "delay_fs", "scan.")
    kw["energy_axis_J"] = r.axis(scan, "energy_J", "scan.")
    if kw["area_pi"] is not None and kw["area_pi"].min < 0:
        r.fail("scan.area_pi.min must be >= 0", scan, "area_pi")
    if kw["energy_axis_J"] is not None and kw["energy_axis_J"].min < 0:
        r.fail("scan.energy_J.min must be >= 0", scan, "energy_J")
    bw = scan.get("bandwidths_nm") or []
    if not isinstance(bw, list) or any(isinstance(b, bool) or not isinstance(b, (int, float))
                                       or b <= 0 for b in bw):
        r.fail("scan.bandwidths_nm must be a list of positive numbers", scan, "bandwidths_nm")
    kw["bandwidths_nm"] = tuple(float(b) for b in bw)
    if kind == "area_delay" and (kw["area_pi"] is None or kw["delay_fs"] is None):
        r.fail("area_delay scans need scan.area_pi and scan.delay_fs", scan, "kind")
    if kind == "area" and kw["area_pi"] is None:
        r.fail("area scans need scan.area_pi", scan, "kind")
    if kind == "energy" and (kw["area_pi"] is None) == (kw["energy_axis_J"] is None):
        r.fail("energy scans need exactly one of scan.energy_J or scan.area_pi", scan, "kind")

    probe = r.section(doc, "probe")
    if "path_weights" in probe:
        try:
            kw["path_weights"] = tuple(_complex(v) for v in probe["path_weights"])
        except (ConfigError, TypeError) as exc:
            r.fail(f"probe.path_weights: {exc}", probe, "path_weights")
        if not any(abs(x) > 0 for x in kw["path_weights"]):
            r.fail("probe.path_weights needs at least one nonzero weight", probe, "path_weights")
    kw["nonlinearity_order"] = r.integer(probe, "nonlinearity_order", 2, name="probe.")
    kw["probe_duration_fs"] = r.number(probe, "duration_fs", 120.0, name="probe.")
    if kw["probe_duration_fs"] < 0:
        r.fail("probe.duration_fs must be >= 0", probe, "duration_fs")

    avg = r.section(doc, "averaging")
    if avg:
        kw["diameter_ratio"] = r.number(avg, "diameter_ratio", required=True, positive=True,
                                        name="averaging.")
        kw["averaging_order"] = r.integer(avg, "order", kw["nonlinearity_order"], name="averaging.")

    pre = r.section(doc, "prepulse")
    if pre:
        frac = r.number(pre, "fraction", required=True, name="prepulse.")
        if not 0.0 <= frac <= 0.05:
            r.fail(f"prepulse.fraction must lie in [0, 0.05], got {frac}", pre, "fraction")
        kw["prepulse_fraction"] = frac
        ph = pre.get("phase_rad", "average")
        if ph != "average" and (isinstance(ph, bool) or not isinstance(ph, (int, float))):
            r.fail("prepulse.phase_rad must be a number or 'average'", pre, "phase_rad")
        kw["prepulse_phase"] = ph if ph == "average" else float(ph)
        kw["prepulse_delay_fs"] = r.number(pre, "delay_fs", 2.8e6, positive=True, name="prepulse.")

    num = r.section(doc, "numerics")
    n = r.integer(num, "grid_points", 2 ** 14, minimum=2, name="numerics.")
    if n & (n - 1):
        r.fail(f"numerics.grid_points must be a power of two, got {n}", num, "grid_points")
    kw["grid_points"] = n
    kw["grid_halfspan_nm"] = r.number(num, "grid_halfspan_nm", 45.0, positive=True, name="numerics.")
    step = num.get("rk4_step_fs", "auto")
    if step != "auto":
        step = r.number(num, "rk4_step_fs", positive=True, name="numerics.")
    kw["rk4_step_fs"] = step
    kw["supergauss_order"] = r.integer(num, "supergauss_order", 1, name="numerics.")
    kw["include_772nm_leak"] = bool(num.get("include_772nm_leak", False))
    kw["leak_center_nm"] = r.number(num, "leak_center_nm", 772.0, positive=True, name="numerics.")
    kw["leak_fwhm_nm"] = r.number(num, "leak_fwhm_nm", 0.5, positive=True, name="numerics.")
    kw["leak_relative_amplitude"] = r.number(num, "leak_relative_amplitude", 0.1, name="numerics.")

    out = r.section(doc, "output")
    fmt = out.get("format", "csv")
    if fmt not in ("csv", "gnuplot-matrix"):
        r.fail(f"output.format must be csv or gnuplot-matrix, got {fmt!r}", out, "format")
    kw["output_format"] = fmt
    return ExperimentConfig(**kw)


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(text, str(path))
