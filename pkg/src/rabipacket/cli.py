"""Command-line interface.

    rabipacket run CONFIG [--out PATH] [--workers N] [--emit-spectrum PATH] [--emit-envelope PATH]
    rabipacket validate CONFIG
    rabipacket presets
    rabipacket oracle RABI DETUNING TIME

Exit codes: 0 success, 1 I/O failure, 2 configuration error, 3 numerical error.
"""

from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path

from .atomics import PRESETS, make_preset, splitting
from .config import load_config
from .errors import ConfigError, NumericsError
from .oracle import TwoLevelParams, cw_phase, cw_population
from .pulse import write_xy_csv

EXIT_IO = 1
EXIT_CONFIG = 2
EXIT_NUMERICS = 3


def _out_path(cfg_path: Path, out: str | None, fmt: str, suffix: str = "") -> Path:
    ext = ".dat" if fmt == "gnuplot-matrix" else ".csv"
    if out is None:
        base = Path(cfg_path.stem + ext)
    else:
        base = Path(out)
        if base.is_dir():
            base = base / (cfg_path.stem + ext)
    if suffix:
        base = base.with_name(f"{base.stem}_{suffix}{base.suffix or ext}")
    return base


def _write_jumps(path: Path, jumps) -> None:
    lines = ["area_pi,size_rad,tag"]
    for j in jumps:
        lines.append(f"{j.area / math.pi!r},{j.size!r},{j.tag}")
    try:
        path.write_text("\n".join(lines) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror}") from exc


def _cmd_run(args) -> int:
    from . import scan

    cfg_path = Path(args.config)
    cfg = load_config(cfg_path)
    fmt = cfg.output_format
    bw = cfg.bandwidths_nm[0] if cfg.bandwidths_nm else None
    setup = scan.build_setup(cfg, bw)
    if args.emit_spectrum:
        sf = setup.spectrum
        write_xy_csv(args.emit_spectrum, sf.wavelengths_nm, sf.amplitude, "wavelength_nm")
    if args.emit_envelope:
        tf = setup.temporal
        write_xy_csv(args.emit_envelope, tf.times, tf.envelope, "t_fs")

    if cfg.kind == "area_delay":
        res = scan.run_area_delay_scan(cfg, workers=args.workers)
        path = scan.emit(res, _out_path(cfg_path, args.out, fmt), fmt)
        print(f"wrote {path} ({res.grids[0].x.size} areas x {res.grids[0].y.size} delays, "
              f"max norm drift {res.max_norm_drift:.1e})")
    elif cfg.kind == "area":
        for part in scan.run_area_scan(cfg, workers=args.workers):
            tag = f"{part.bandwidth_nm:g}nm" if part.bandwidth_nm else ""
            path = scan.emit(part.result, _out_path(cfg_path, args.out, fmt, tag), fmt)
            jpath = path.with_name(path.stem + "_jumps.csv")
            _write_jumps(jpath, part.jumps)
            print(f"wrote {path} and {jpath} ({len(part.jumps)} phase jumps, "
                  f"max norm drift {part.result.max_norm_drift:.1e})")
    else:
        res = scan.run_rb_energy_scan(cfg, workers=args.workers)
        path = scan.emit(res.result, _out_path(cfg_path, args.out, fmt), fmt)
        print(f"wrote {path}")
        if res.fit is not None:
            print(f"fit: k = {res.fit.k:.6g} rad/sqrt(J), first minimum at "
                  f"{res.fit.first_minimum_energy:.6g} J")
            print(f"area at fitted minimum: {res.minimum_area / math.pi:.4f} pi "
                  f"(from peak intensity: {res.intensity_area / math.pi:.4f} pi)")
        if res.fit_error:
            print(f"fit problem: {res.fit_error}", file=sys.stderr)
            return EXIT_NUMERICS
    return 0


def _cmd_validate(args) -> int:
    cfg = load_config(args.config)
    print(f"{args.config}: ok ({cfg.kind} scan, preset {cfg.preset})")
    return 0


def _cmd_presets(args) -> int:
    for name in sorted(PRESETS):
        s = make_preset(name)
        parts = [f"{lvl.label} {s.wavelength_nm(k):.2f} nm" for k, lvl in enumerate(s.levels) if k]
        line = f"{name}: " + ", ".join(parts)
        if s.n_excited == 2:
            line += f"; splitting {splitting(s, 1, 2):.4f} THz"
        print(line)
    return 0


def _cmd_oracle(args) -> int:
    p = TwoLevelParams(args.rabi, args.detuning)
    pop = float(cw_population(p, args.time))
    try:
        phase = f"{cw_phase(p, args.time)!r}"
    except ConfigError:
        phase = "undefined"
    print(f"population {pop!r}\nphase_rad {phase}\ngeneralized_rabi {p.generalized!r}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="rabipacket",
                                 description="Rabi cycling of shaped-pulse driven wavepackets")
    sub = ap.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run the scan described by a config file")
    r.add_argument("config")
    r.add_argument("--out", help="output file (or directory) for the scan")
    r.add_argument("--workers", type=int, default=1, help="worker processes (default 1)")
    r.add_argument("--emit-spectrum", metavar="PATH", help="write the shaped spectrum as CSV")
    r.add_argument("--emit-envelope", metavar="PATH", help="write the temporal envelope as CSV")
    r.set_defaults(func=_cmd_run)

    v = sub.add_parser("validate", help="check a config file without running it")
    v.add_argument("config")
    v.set_defaults(func=_cmd_validate)

    p = sub.add_parser("presets", help="list atomic presets")
    p.set_defaults(func=_cmd_presets)

    o = sub.add_parser("oracle", help="evaluate the cw two-level solution")
    o.add_argument("rabi", type=float, help="resonant Rabi frequency, rad/fs")
    o.add_argument("detuning", type=float, help="laser minus transition frequency, rad/fs")
    o.add_argument("time", type=float, help="time, fs")
    o.set_defaults(func=_cmd_oracle)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "workers", 1) < 1:
        print("error: --workers must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericsError as exc:
        print(f"numerics error: {exc}", file=sys.stderr)
        return EXIT_NUMERICS
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
