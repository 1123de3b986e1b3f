"""Command line: ``bhdsim simulate|analyze|report|validate``.

Exit status is 0 on success, 2 for usage or config errors and 1 for
failures while running (bad data files, physically invalid inputs).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import __version__
from .bench import dumps_report, ingest_traces, run_scenario
from .config import ConfigError, bundled_config_path, bundled_configs, config_hash, load_config
from .figures import KINDS, emit_figure

EXIT_OK, EXIT_FAILURE, EXIT_USAGE = 0, 1, 2


def _resolve_config(arg):
    path = Path(arg)
    if not path.exists() and arg in bundled_configs():
        path = bundled_config_path(arg)
    return load_config(path)


def _cmd_simulate(args):
    cfg = _resolve_config(args.config)
    if args.workers:
        cfg["workers"] = args.workers
    manifest = run_scenario(cfg, args.output_root)
    print(manifest.output_dir)
    return EXIT_OK


def _cmd_analyze(args):
    params = {"segment_len": args.segment_len, "band_width": args.band_width,
              "flat_band": tuple(args.flat_band), "deembed": args.deembed,
              "n_harmonics": args.harmonics, "cutoff_segment_len": args.cutoff_segment_len}
    if args.band_center:
        params["band_centers"] = tuple(args.band_center)
    if args.fundamental:
        params["fundamental"] = args.fundamental
    if args.qe is not None:
        params["quantum_efficiency"] = args.qe
    report = ingest_traces(args.ch1, args.ch2, args.calibration, args.background, **params)
    text = dumps_report(report)
    if args.output:
        Path(args.output).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _cmd_report(args):
    run = Path(args.run_dir)
    path = run / "report.json"
    if not path.is_file():
        print(f"error: no report.json in {run}", file=sys.stderr)
        return EXIT_FAILURE
    report = json.loads(path.read_text())
    for kind in args.figure or ():
        out = emit_figure(report, kind, run / f"{kind}.svg")
        print(out)
    print(_summary(report))
    return EXIT_OK


def _summary(report):
    lines = [f"config: {report['provenance']['config_name']} "
             f"({report['provenance']['config_hash'][:12]})"]
    setup = report.get("setup", {})
    if setup:
        lines.append(f"wavelength {setup['wavelength_um']} um, detection efficiency "
                     f"{setup['detection_efficiency']:.4g}, qe {setup['quantum_efficiency']:.4g}")
    for det in report.get("responsivity", {}).get("detectors", []):
        if "slope" in det:
            lines.append(f"{det['name']}: responsivity {det['slope']:.4g} "
                         f"+/- {det['uncertainty']:.2g} A/W")
    spectra = report.get("spectra")
    if spectra:
        lines.append(f"shot-noise verdict at {spectra['power_w'] * 1e3:.3g} mW: "
                     f"{spectra['shot_noise_verdict']}")
    if report.get("cutoff"):
        hz = report["cutoff"]["cutoff_hz"]
        lines.append("-3 dB cutoff: " + (f"{hz / 1e6:.2f} MHz" if hz else report["cutoff"]["error"]))
    for row in report.get("cmrr", {}).get("points", []):
        db = "n/a" if row["cmrr_db"] is None else f"{row['cmrr_db']:.1f}"
        lines.append(f"CMRR h{row['harmonic']} {row['frequency_hz'] / 1e6:.4g} MHz: "
                     f"{db} dB ({row['status']})")
    eff = report.get("power_sweep", {}).get("efficiency")
    if eff:
        lines.append(f"max clearance {eff['clearance']:.4g} at {eff['power_w'] * 1e3:.3g} mW, "
                     f"equivalent efficiency {eff['equivalent_optical_efficiency']:.3g}, "
                     f"effective qe {eff['effective_quantum_efficiency']:.3g}")
    return "\n".join(lines)


def _cmd_validate(args):
    cfg = _resolve_config(args.config)
    print(f"ok {cfg['name']} {config_hash(cfg)}")
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="bhdsim", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"bhdsim {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="run a bench config")
    s.add_argument("config", help="YAML path or bundled config name")
    s.add_argument("--output-root", help="directory under which the run directory is made")
    s.add_argument("--workers", type=int, help="override the worker count")
    s.set_defaults(func=_cmd_simulate)

    a = sub.add_parser("analyze", help="analyse a recorded channel pair")
    a.add_argument("ch1")
    a.add_argument("ch2")
    a.add_argument("--calibration", help="JSON with gain, dc_current and filter corners")
    a.add_argument("--background", nargs=2, metavar=("BG1", "BG2"))
    a.add_argument("--fundamental", type=float, help="square-wave frequency for CMRR, Hz")
    a.add_argument("--harmonics", type=int, default=5)
    a.add_argument("--segment-len", type=int, default=16384)
    a.add_argument("--cutoff-segment-len", type=int, default=512,
                   help="segment length of the coarse spectrum used for the -3 dB point")
    a.add_argument("--band-center", type=float, action="append")
    a.add_argument("--band-width", type=float, default=3e6)
    a.add_argument("--flat-band", type=float, nargs=2, default=(1e6, 5e6))
    a.add_argument("--qe", type=float, help="detector quantum efficiency")
    a.add_argument("--deembed", action="store_true")
    a.add_argument("--output", "-o")
    a.set_defaults(func=_cmd_analyze)

    r = sub.add_parser("report", help="summarize a run directory, optionally re-plot")
    r.add_argument("run_dir")
    r.add_argument("--figure", action="append", choices=KINDS)
    r.set_defaults(func=_cmd_report)

    v = sub.add_parser("validate", help="check a config without running it")
    v.add_argument("config")
    v.set_defaults(func=_cmd_validate)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ValueError, OSError, OverflowError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
