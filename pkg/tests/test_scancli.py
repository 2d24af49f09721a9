import dataclasses
import math
from pathlib import Path

import numpy as np
import pytest

from rabipacket.cli import main
from rabipacket.config import load_config, parse_config
from rabipacket.errors import ConfigError
from rabipacket.observables import beat_signal
from rabipacket.propagator import propagate
from rabipacket.pulse import effective_area
from rabipacket.scan import (
    ScanGrid,
    build_setup,
    emit,
    probe_model,
    run_area_delay_scan,
    run_area_scan,
    run_rb_energy_scan,
)

CONFIGS = Path(__file__).resolve().parent.parent / "configs"

K_SMALL = """
schema_version: 1
preset: K-D
spectrum: {center_nm: 768.2, fwhm_nm: 10.3, energy_J: 1.0e-6}
mask:
  balance_areas: true
  windows:
    - {center_nm: 769.9, fwhm_nm: 1.8}
    - {center_nm: 766.5, fwhm_nm: 1.8}
scan:
  kind: area_delay
  area_pi: {min: 0.0, max: 2.0, points: 5}
  delay_fs: {min: -1000.0, max: 3000.0, points: 41}
probe: {duration_fs: 0.0}
"""


def k_small(**changes):
    return dataclasses.replace(parse_config(K_SMALL), **changes)


@pytest.mark.parametrize("name", ["k_area_delay.yaml", "k_area_scan.yaml", "rb_energy_scan.yaml"])
def test_shipped_configs_load(name):
    cfg = load_config(CONFIGS / name)
    assert cfg.preset in ("K-D", "Rb-D1")


@pytest.mark.parametrize("text,match", [
    ("schema_version: 2\npreset: K-D\n", "schema_version"),
    ("schema_version: 1\npreset: Cs\n", "unknown preset 'Cs'"),
    ("schema_version: 1\npreset: K-D\nbogus: 1\n", ":3: unknown top-level key 'bogus'"),
    ("schema_version: 1\npreset: K-D\nspectrum: {center_nm: 768.2, fwhm_nm: 10.3}\n"
     "scan:\n  kind: area\n  area_pi: {min: 0, max: 4, points: 1}\n", "integer >= 2"),
    ("schema_version: 1\npreset: K-D\nspectrum: {center_nm: 768.2}\n", "fwhm_nm"),
    ("schema_version: 1\npreset: K-D\nspectrum: {center_nm: 768.2, fwhm_nm: 10.3}\n"
     "scan: {kind: area, area_pi: {min: 0, max: 4, points: 10}}\nprepulse: {fraction: 0.2}\n",
     "prepulse.fraction"),
    ("schema_version: 1\npreset: K-D\nspectrum: {center_nm: 768.2, fwhm_nm: 10.3}\n"
     "scan: {kind: area, area_pi: {min: 0, max: .inf, points: 10}}\n", "finite"),
    ("schema_version: 1\npreset: K-D\nspectrum: {center_nm: 768.2, fwhm_nm: 10.3}\n"
     "scan: {kind: area, area_pi: {min: 0, max: 4, points: 10}}\nnumerics: {grid_points: 1000}\n",
     "power of two"),
    ("schema_version: [1\n", "YAML syntax"),
])
def test_config_errors(text, match):
    with pytest.raises(ConfigError, match=match):
        parse_config(text, "t.yaml")


def test_config_error_reports_line():
    text = K_SMALL.replace("probe: {duration_fs: 0.0}", "probe: {duration_fs: 0.0, colour: red}")
    with pytest.raises(ConfigError, match=r"t.yaml:\d+: unknown key 'probe.colour'"):
        parse_config(text, "t.yaml")


def test_area_axis_calibration():
    cfg = k_small()
    setup = build_setup(cfg)
    for x in (0.3, 1.0, 3.7):
        sf = setup.spectrum.scaled(x * math.pi / setup.reference_area)
        assert effective_area(sf, setup.system) / math.pi == pytest.approx(x, rel=1e-6)


def test_balanced_windows_equal_areas():
    from rabipacket.pulse import partial_areas

    setup = build_setup(k_small())
    a1, a2 = partial_areas(setup.spectrum, setup.system)
    assert a1 == pytest.approx(a2, rel=1e-9)
    amps = sorted(w.relative_amplitude for w in setup.mask.windows)
    assert amps[1] == 1.0 and 0 < amps[0] < 1


def test_area_delay_scan_matches_single_propagation():
    cfg = k_small()
    res = run_area_delay_scan(cfg)
    g = res.grids[0]
    assert g.z.shape == (41, 5)
    assert np.all(g.z[:, 0] == 0)  # zero-energy column
    setup = build_setup(cfg)
    raw = []
    for a in g.x:
        tr = propagate(setup.system, setup.temporal.scaled(a * math.pi / setup.reference_area),
                       record_every=0.0)
        raw.append(beat_signal(tr, setup.system, probe_model(cfg), g.y).signal)
    raw = np.array(raw).T
    np.testing.assert_allclose(g.z, raw / raw[:, 2].max(), atol=1e-6)  # column 2 is A_eff = pi
    assert res.max_norm_drift < 1e-8


def test_averaged_map_pi_column_peaks_at_one():
    g = run_area_delay_scan(k_small(diameter_ratio=0.3, averaging_order=2)).grids[0]
    assert g.z[:, 2].max() == pytest.approx(1.0, abs=1e-12)
    assert g.z.max() > 1.0  # stronger pulses give larger signals


def test_worker_count_invariance(tmp_path):
    cfg = k_small(diameter_ratio=0.3, averaging_order=2)
    one = emit(run_area_delay_scan(cfg, workers=1), tmp_path / "a.dat", "gnuplot-matrix")
    two = emit(run_area_delay_scan(cfg, workers=2), tmp_path / "b.dat", "gnuplot-matrix")
    assert one.read_bytes() == two.read_bytes()


def test_prepulse_gives_signal_before_main_pulse():
    cfg = k_small(prepulse_fraction=0.01)
    g = run_area_delay_scan(cfg).grids[0]
    early = g.y < -800
    clean = run_area_delay_scan(k_small()).grids[0]
    # before the main pulse only pre-pulse coherence can produce signal
    assert g.z[early][:, -1].max() > 1e-3
    assert g.z[early][:, -1].max() > 100 * clean.z[early][:, -1].max()


def test_area_scan_zero_point():
    cfg = parse_config(K_SMALL.replace("kind: area_delay", "kind: area"))
    part = run_area_scan(cfg)[0]
    assert part.populations[0, 0] == 1.0
    assert part.indeterminate[0]
    assert part.result["phase_indeterminate"].z[0] == 1.0


def test_area_scan_rejects_averaging():
    cfg = dataclasses.replace(parse_config(K_SMALL.replace("kind: area_delay", "kind: area")),
                              diameter_ratio=0.3)
    with pytest.raises(ConfigError):
        run_area_scan(cfg)


def test_rb_ideal_scan_fits_two_pi():
    cfg = dataclasses.replace(load_config(CONFIGS / "rb_energy_scan.yaml"), prepulse_fraction=0.0,
                              diameter_ratio=None)
    res = run_rb_energy_scan(cfg)
    assert res.fit is not None and res.fit_error is None
    assert res.minimum_area / math.pi == pytest.approx(2.0, abs=0.02)
    assert res.intensity_area / math.pi == pytest.approx(2.2, rel=0.15)


def test_rb_prepulse_amplitude_decays():
    cfg = dataclasses.replace(load_config(CONFIGS / "rb_energy_scan.yaml"), diameter_ratio=None)
    res = run_rb_energy_scan(cfg)
    a = res.areas / math.pi
    first = res.signal[(a > 0.5) & (a < 1.5)].max()
    third = res.signal[(a > 4.5) & (a < 5.5)].max()
    assert third < first


def test_energy_scan_needs_two_level():
    cfg = k_small(kind="energy")
    with pytest.raises(ConfigError, match="two-level"):
        run_rb_energy_scan(cfg)


def test_emit_matrix_layout(tmp_path):
    g = ScanGrid(np.array([0.5, 1.0]), np.array([[1.0, 2.0], [3.0, 4.0]]), "ion_signal",
                 y=np.array([-10.0, 10.0]))
    text = emit(g, tmp_path / "m.dat", "gnuplot-matrix").read_text().splitlines()
    assert text == ["2 0.5 1.0", "-10.0 1.0 2.0", "10.0 3.0 4.0"]
    rows = emit(g, tmp_path / "m.csv", "csv").read_text().splitlines()
    assert rows[0] == "area_pi,delay_fs,ion_signal"
    assert len(rows) == 5


def test_emit_unwritable_path(tmp_path):
    g = ScanGrid(np.array([0.0, 1.0]), np.array([0.0, 1.0]), "population")
    bad = tmp_path / "missing" / "out.csv"
    with pytest.raises(OSError, match="missing"):
        emit(g, bad)


def test_emit_deterministic(tmp_path):
    cfg = k_small()
    a = emit(run_area_delay_scan(cfg), tmp_path / "a.csv").read_bytes()
    build_setup.cache_clear()
    b = emit(run_area_delay_scan(cfg), tmp_path / "b.csv").read_bytes()
    assert a == b


def test_scan_grid_shape_check():
    with pytest.raises(ConfigError):
        ScanGrid(np.arange(3.0), np.zeros((2, 3)), "ion_signal", y=np.arange(3.0))
    with pytest.raises(ConfigError):
        ScanGrid(np.arange(3.0), np.zeros(3), "bogus")


def test_cli_presets_and_oracle(capsys):
    assert main(["presets"]) == 0
    out = capsys.readouterr().out
    assert "K-D" in out and "1.7272 THz" in out
    assert main(["oracle", "0.01", "0", str(math.pi / 0.01)]) == 0
    assert "population 1.0" in capsys.readouterr().out


def test_cli_exit_codes(tmp_path, capsys):
    good = tmp_path / "k.yaml"
    good.write_text(K_SMALL)
    assert main(["validate", str(good)]) == 0
    bad = tmp_path / "bad.yaml"
    bad.write_text(K_SMALL.replace("K-D", "Cs"))
    assert main(["validate", str(bad)]) == 2
    assert "unknown preset" in capsys.readouterr().err
    out = tmp_path / "map.dat"
    assert main(["run", str(good), "--out", str(out), "--emit-spectrum", str(tmp_path / "s.csv"),
                 "--emit-envelope", str(tmp_path / "e.csv")]) == 0
    assert out.exists() and (tmp_path / "s.csv").exists() and (tmp_path / "e.csv").exists()
    coarse = tmp_path / "coarse.yaml"
    coarse.write_text(K_SMALL.replace("probe: {duration_fs: 0.0}",
                                      "probe: {duration_fs: 0.0}\nnumerics: {rk4_step_fs: 40.0}")
                      .replace("max: 2.0, points: 5", "max: 30.0, points: 3"))
    assert main(["run", str(coarse), "--out", str(tmp_path / "c.dat")]) == 3
    assert main(["run", str(tmp_path / "nope.yaml")]) == 2
