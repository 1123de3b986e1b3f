"""Scenario runs: sweep, synthesize or load, analyse, write artifacts."""

from __future__ import annotations

import hashlib
import json
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, spectral
from .config import build_components, config_hash, dump_config, validate_config
from .estimators import BalancedNoiseAnalyzer
from .frontend import (Calibration, arm_powers, photocurrent_dc, responsivity_fit,
                       source_for_incident_power, synthesize_balanced_traces)
from .optics import detection_efficiency, quantum_efficiency_from_responsivity, total_transmission
from .tracefile import read_trace, write_spectrum_csv

OUTPUT_ROOT_ENV = "BHDSIM_OUTPUT_ROOT"
REPORT_DIGITS = 10
MANIFEST = "manifest.json"
# record counter: background is point 0, sweep point i is i + 1
_POINT_STRIDE = 100_000


@dataclass
class RunManifest:
    config_hash: str
    tool_version: str
    started: str
    finished: str
    artifacts: list = field(default_factory=list)

    def to_dict(self):
        return {"config_hash": self.config_hash, "tool_version": self.tool_version,
                "started": self.started, "finished": self.finished,
                "artifacts": self.artifacts}


def _round(value):
    if isinstance(value, float):
        if not math.isfinite(value):
            return None
        return float(f"{value:.{REPORT_DIGITS}g}")
    if isinstance(value, dict):
        return {str(k): _round(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_round(v) for v in value]
    if isinstance(value, np.generic):
        return _round(value.item())
    return value


def dumps_report(report):
    """Deterministic JSON text: sorted keys, floats to ten significant digits."""
    return json.dumps(_round(report), sort_keys=True, indent=2) + "\n"


def _timestamp():
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    t = float(epoch) if epoch else time.time()
    return time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime(t))


def decimate_log(spectrum, f_min=1e5, points=200):
    """Spectrum averaged into log-spaced frequency bins, for plotting."""
    f, p = spectrum.frequencies, spectrum.psd
    f_max = f[-1]
    edges = np.geomspace(max(f_min, f[1]), f_max, points + 1)
    idx = np.searchsorted(f, edges)
    freqs, vals = [], []
    for lo, hi in zip(idx[:-1], idx[1:]):
        if hi > lo:
            freqs.append(float(f[lo:hi].mean()))
            vals.append(float(p[lo:hi].mean()))
    return {"frequency_hz": freqs, "psd": vals}


def _line(fit):
    return {"slope": fit.slope, "intercept": fit.intercept, "slope_se": fit.slope_se,
            "intercept_se": fit.intercept_se, "r2": fit.r2,
            "linear_range_w": list(fit.linear_range), "saturation_onset_w": fit.saturation_onset}


class _Scenario:
    def __init__(self, cfg):
        self.cfg = cfg
        self.source, self.chain, self.detectors, self.modulation = build_components(cfg)
        acq = cfg["acquisition"]
        self.rate = acq["sample_rate"]
        self.duration = acq["duration_s"]
        ana = cfg["analysis"]
        fundamental = (cfg["modulation"]["fundamental_hz"]
                       if "cmrr" in cfg["stages"] else None)
        wl = self.source.wavelength_um
        self.qe = quantum_efficiency_from_responsivity(self.detectors[0].responsivity_at(wl), wl)
        self.analyzer = BalancedNoiseAnalyzer(
            segment_len=ana["segment_len"], window=ana["window"], overlap=ana["overlap"],
            band_centers=tuple(ana["band_centers_hz"]), band_width=ana["band_width_hz"],
            flat_band=tuple(ana["flat_band_hz"]), fundamental=fundamental,
            n_harmonics=ana["cmrr_harmonics"], quantum_efficiency=self.qe,
            deembed=ana["deembed"], shot_tolerance=ana["shot_tolerance"],
            cutoff_segment_len=ana["cutoff_segment_len"])
        inter = cfg["interferer"]
        self.interferer = (inter["frequency_hz"], inter["amplitude_a"]) if inter else None

    def records(self, point, incident_power, count):
        source = source_for_incident_power(self.source, self.chain, incident_power)
        return [
            synthesize_balanced_traces(
                source, self.chain, self.detectors, self.cfg["splitter_imbalance"],
                self.modulation, self.duration, self.rate, self.cfg["seed"],
                point * _POINT_STRIDE + r, self.interferer)
            for r in range(count)
        ]


def _responsivity_stage(sc):
    cfg = sc.cfg
    rng = np.random.default_rng(np.random.SeedSequence(cfg["seed"], spawn_key=(2**31,)))
    wl = sc.source.wavelength_um
    rel = cfg["sweep"]["dc_noise_rel"]
    out = []
    powers = cfg["sweep"]["incident_power_w"]
    per_arm = [arm_powers(source_for_incident_power(sc.source, sc.chain, p), sc.chain,
                          cfg["splitter_imbalance"]) for p in powers]
    for j, det in enumerate(sc.detectors):
        p_det = np.array([arms[j] for arms in per_arm])
        current = photocurrent_dc(p_det, wl, det)
        current = current * (1.0 + rel * rng.standard_normal(current.size))
        entry = {"name": det.name, "points": [[float(a), float(b)] for a, b in zip(p_det, current)]}
        try:
            fit = responsivity_fit(np.column_stack([p_det, current]),
                                   current_err=rel * current if rel > 0 else None)
            entry.update(slope=fit.slope, uncertainty=fit.uncertainty,
                         saturation_onset_w=fit.saturation_onset, intercept=fit.intercept,
                         quantum_efficiency=quantum_efficiency_from_responsivity(fit.slope, wl))
        except ValueError as exc:
            entry["fit_error"] = str(exc)
        out.append(entry)
    return {"wavelength_um": wl, "detectors": out}


def run_scenario(config, output_root=None):
    """Execute a bench config and write its artifacts.

    ``config`` is a raw or normalized config mapping. Output goes to
    ``<root>/<output_dir>`` where ``root`` is ``output_root``, else the
    ``BHDSIM_OUTPUT_ROOT`` environment variable, else the working directory.
    Returns the ``RunManifest``; ``manifest.json`` lists every file written.
    """
    cfg = validate_config(config)
    started = _timestamp()
    chash = config_hash(cfg)
    sc = _Scenario(cfg)
    root = Path(output_root or os.environ.get(OUTPUT_ROOT_ENV) or ".")
    outdir = root / cfg["output_dir"]
    outdir.mkdir(parents=True, exist_ok=True)

    wl = sc.source.wavelength_um
    report = {
        "provenance": {"config_name": cfg["name"], "config_hash": chash, "seed": cfg["seed"],
                       "tool_version": __version__},
        "units": {"psd": "A^2/Hz", "power": "W", "current": "A", "frequency": "Hz",
                  "cmrr": "dB"},
        "setup": {
            "wavelength_um": wl, "chain_mode": sc.chain.mode.value,
            "total_transmission": total_transmission(sc.chain, wl),
            "detection_efficiency": detection_efficiency(sc.chain, wl),
            "quantum_efficiency": sc.qe, "splitter_imbalance": cfg["splitter_imbalance"],
        },
    }
    files = {}
    stages = cfg["stages"]
    if "responsivity" in stages:
        report["responsivity"] = _responsivity_stage(sc)

    trace_stages = {"spectra", "power_sweep", "cmrr", "cutoff", "clearance_spectra"}
    if trace_stages & set(stages):
        _trace_stages(sc, report, files, outdir)

    for name, text in files.items():
        (outdir / name).write_text(text)
    (outdir / "report.json").write_text(dumps_report(report))
    (outdir / "config.yaml").write_text(dump_config(cfg))

    from .figures import emit_figure
    for kind in cfg["figures"]:
        emit_figure(report, kind, outdir / f"{kind}.svg")

    manifest = RunManifest(chash, __version__, started, _timestamp())
    for path in sorted(outdir.iterdir()):
        if path.name == MANIFEST or not path.is_file():
            continue
        data = path.read_bytes()
        manifest.artifacts.append({"path": path.name, "bytes": len(data),
                                   "sha256": hashlib.sha256(data).hexdigest()})
    manifest.artifacts.append({"path": MANIFEST, "bytes": None, "sha256": None})
    (outdir / MANIFEST).write_text(json.dumps(manifest.to_dict(), indent=2, sort_keys=True) + "\n")
    manifest.output_dir = outdir
    return manifest


def _spectrum_csv(spectrum):
    import io
    buf = io.StringIO()
    buf.write("frequency_hz,psd\n")
    for f, p in zip(spectrum.frequencies, spectrum.psd):
        buf.write(f"{f:.{REPORT_DIGITS}g},{p:.{REPORT_DIGITS}g}\n")
    return buf.getvalue()


def _trace_stages(sc, report, files, outdir):
    cfg = sc.cfg
    stages = cfg["stages"]
    acq = cfg["acquisition"]
    powers = cfg["sweep"]["incident_power_w"]
    centers = cfg["analysis"]["band_centers_hz"]
    spectra_power = cfg["analysis"]["spectra_power_w"] or max(powers)
    if spectra_power not in powers:
        powers = sorted(set(powers) | {spectra_power})

    background = sc.records(0, 0.0, acq["background_records"]) if acq["background_records"] else None

    def analyse(item):
        i, p = item
        return sc.analyzer.__class__(**sc.analyzer.get_params()).fit(
            sc.records(i + 1, p, acq["records"]), background)

    with ThreadPoolExecutor(max_workers=cfg["workers"]) as pool:
        fitted = list(pool.map(analyse, enumerate(powers)))

    ref = fitted[powers.index(spectra_power)]
    bg_spec = ref.background_spectrum_
    if "spectra" in stages:
        series = {"sum": decimate_log(ref.sum_spectrum_), "diff": decimate_log(ref.diff_spectrum_)}
        files["spectrum_sum.csv"] = _spectrum_csv(ref.sum_spectrum_)
        files["spectrum_diff.csv"] = _spectrum_csv(ref.diff_spectrum_)
        if bg_spec is not None:
            series["background"] = decimate_log(bg_spec)
            files["spectrum_background.csv"] = _spectrum_csv(bg_spec)
        summary = ref.report()
        summary.update(power_w=spectra_power, series=series)
        report["spectra"] = summary
    if "cutoff" in stages:
        report["cutoff"] = {"power_w": spectra_power, "cutoff_hz": ref.cutoff_,
                            "resolution_hz": ref.cutoff_resolution_,
                            "flat_band_hz": list(cfg["analysis"]["flat_band_hz"]),
                            "error": ref.cutoff_error_}
    if "cmrr" in stages:
        rows = ref.report()["cmrr"]
        report["cmrr"] = {"power_w": spectra_power,
                          "fundamental_hz": cfg["modulation"]["fundamental_hz"], "points": rows}
        lines = ["harmonic,frequency_hz,cmrr_db,status"]
        for r in rows:
            value = "" if r["cmrr_db"] is None else f"{r['cmrr_db']:.{REPORT_DIGITS}g}"
            lines.append(f"{r['harmonic']},{r['frequency_hz']:.{REPORT_DIGITS}g},{value},{r['status']}")
        files["cmrr.csv"] = "\n".join(lines) + "\n"
    if "power_sweep" in stages:
        report["power_sweep"] = _power_sweep(sc, powers, fitted, centers)
        head = ["power_w", "dc_current_a"]
        for c in centers:
            head += [f"diff_psd_{c:.4g}", f"diff_psd_se_{c:.4g}", f"sum_psd_{c:.4g}"]
            if bg_spec is not None:
                head.append(f"clearance_{c:.4g}")
        lines = [",".join(head)]
        for row in report["power_sweep"]["points"]:
            vals = [row["power_w"], row["dc_current_a"]]
            for b in row["bands"]:
                vals += [b["diff_psd"], b["diff_psd_se"], b["sum_psd"]]
                if "clearance" in b:
                    vals.append(b["clearance"])
            lines.append(",".join(f"{v:.{REPORT_DIGITS}g}" for v in vals))
        files["power_sweep.csv"] = "\n".join(lines) + "\n"
    if "clearance_spectra" in stages and bg_spec is not None:
        curves = []
        for p, fit in zip(powers, fitted):
            cs = spectral.clearance_spectrum(fit.diff_spectrum_, bg_spec)
            band = cs.mask(1e6, 100e6)
            sub = spectral.Spectrum(cs.frequencies[band], cs.psd[band], cs.resolution,
                                    cs.averages, "1")
            series = decimate_log(sub, f_min=1e6, points=100)
            curves.append({"power_w": p, "frequency_hz": series["frequency_hz"],
                           "clearance": series["psd"]})
        report["clearance_spectra"] = curves


def _power_sweep(sc, powers, fitted, centers):
    points = []
    for p, fit in zip(powers, fitted):
        bands = []
        for c in centers:
            e = fit.bands_[c]
            row = {"center_hz": c, "diff_psd": e["diff"].value, "diff_psd_se": e["diff"].uncertainty,
                   "sum_psd": e["sum"].value}
            if "background" in e:
                row["background_psd"] = e["background"].value
                row["diff_minus_background_psd"] = e["diff"].value - e["background"].value
                row["clearance"] = e["clearance"].clearance
                row["clearance_se"] = e["clearance"].clearance * math.hypot(
                    e["diff"].uncertainty / e["diff"].value,
                    e["background"].uncertainty / e["background"].value)
            bands.append(row)
        points.append({"power_w": p, "dc_current_a": fit.dc_current_,
                       "shot_noise_psd": fit.shot_noise_level_, "bands": bands})
    out = {"band_centers_hz": list(centers), "points": points, "diff_fits": [],
           "clearance_fits": []}
    for k, c in enumerate(centers):
        xs = [pt["power_w"] for pt in points]
        diff = [pt["bands"][k]["diff_psd"] for pt in points]
        err = [pt["bands"][k]["diff_psd_se"] for pt in points]
        entry = {"center_hz": c}
        try:
            from .fitting import LinearRegionRegressor
            reg = LinearRegionRegressor().fit(xs, diff, y_err=err)
            entry.update(_line(reg.result()))
        except ValueError as exc:
            entry["error"] = str(exc)
        bg = points[0]["bands"][k].get("background_psd")
        if bg is not None:
            entry["background_psd"] = bg
        out["diff_fits"].append(entry)
        if "clearance" in points[0]["bands"][k]:
            pts = [(pt["power_w"], pt["bands"][k]["clearance"]) for pt in points]
            cerr = [pt["bands"][k]["clearance_se"] for pt in points]
            centry = {"center_hz": c}
            try:
                centry.update(_line(spectral.clearance_vs_power_fit(pts, cerr)))
            except ValueError as exc:
                centry["error"] = str(exc)
            out["clearance_fits"].append(centry)
    if out["clearance_fits"] and "error" not in out["clearance_fits"][0]:
        fit0 = out["clearance_fits"][0]
        lo, hi = fit0["linear_range_w"]
        usable = [(pt["power_w"], pt["bands"][0]["clearance"]) for pt in points
                  if lo <= pt["power_w"] <= hi]
        p_best, c_best = max(usable, key=lambda t: t[1])
        eq, eff = spectral.efficiency_from_clearance(c_best, sc.qe)
        out["efficiency"] = {"center_hz": centers[0], "power_w": p_best, "clearance": c_best,
                             "equivalent_optical_efficiency": eq,
                             "effective_quantum_efficiency": eff, "quantum_efficiency": sc.qe}
    return out


def _load_calibration(calibration):
    """Per-channel ``Calibration`` objects from a mapping (or None)."""
    if calibration is None:
        return None, None
    if isinstance(calibration, (str, Path)):
        calibration = json.loads(Path(calibration).read_text())
    allowed = {"gain", "dc_current", "bandwidth_cutoff", "ac_corner", "sample_rate"}
    unknown = set(calibration) - allowed
    if unknown:
        raise ValueError(f"unknown calibration keys: {sorted(unknown)}")

    def pick(key, i, default=None):
        v = calibration.get(key, default)
        return v[i] if isinstance(v, (list, tuple)) else v

    cals = []
    for i in (0, 1):
        gain = pick("gain", i)
        if gain is None or not gain > 0:
            raise ValueError("calibration needs a positive gain")
        cals.append(Calibration(float(gain), float(pick("dc_current", i, 0.0)),
                                calibration.get("bandwidth_cutoff"), calibration.get("ac_corner"),
                                calibration.get("sample_rate")))
    return tuple(cals)


def ingest_traces(path1, path2, calibration=None, background=None, **analysis):
    """Run the spectral pipeline on a recorded pair of channel files.

    ``calibration`` overrides the gain and dc current stored in the files
    (a mapping or a JSON file path; list values are per channel).
    ``background`` is an optional pair of paths recorded with the light
    blocked. Extra keyword arguments go to ``BalancedNoiseAnalyzer``.
    """
    cal1, cal2 = _load_calibration(calibration)
    t1 = read_trace(path1, 1, cal1)
    t2 = read_trace(path2, 2, cal2)
    if t1.sample_rate != t2.sample_rate:
        raise ValueError(f"sample-rate mismatch: {t1.sample_rate} vs {t2.sample_rate} S/s")
    if len(t1) != len(t2):
        raise ValueError(f"record-length mismatch: {len(t1)} vs {len(t2)} samples")
    bg = None
    if background is not None:
        b1 = read_trace(background[0], 1, cal1)
        b2 = read_trace(background[1], 2, cal2)
        if b1.sample_rate != t1.sample_rate or b2.sample_rate != t1.sample_rate:
            raise ValueError("sample-rate mismatch between signal and background records")
        bg = [(b1, b2)]
    analyzer = BalancedNoiseAnalyzer(**analysis).fit([(t1, t2)], bg)
    report = analyzer.report()
    report["inputs"] = {"channel_files": [Path(path1).name, Path(path2).name],
                        "sample_rate": t1.sample_rate, "samples": len(t1),
                        "gain_v_per_a": [t1.calibration.gain, t2.calibration.gain]}
    report["analysis"] = _round({k: (list(v) if isinstance(v, tuple) else v)
                                 for k, v in analyzer.get_params().items()})
    return report
