"""SVG figures from a run report.

Figures are drawn only from the series stored in ``report.json`` so a run
directory can be re-plotted without re-simulating. Output is byte-stable:
no dates, fixed SVG id salt.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

KINDS = ("inpsd_spectra", "cmrr", "power_sweep", "clearance_spectra", "clearance_fit",
         "responsivity")


def _need(report, *keys):
    node = report
    for key in keys:
        if not isinstance(node, dict) or key not in node or node[key] in (None, [], {}):
            raise ValueError(f"report has no {'/'.join(keys)} series to plot")
        node = node[key]
    return node


def _inpsd(ax, report):
    series = _need(report, "spectra", "series")
    for name in ("sum", "diff", "background"):
        if name in series and series[name]["frequency_hz"]:
            ax.loglog(series[name]["frequency_hz"], series[name]["psd"], label=name)
    shot = report["spectra"].get("shot_noise_psd")
    if shot:
        ax.axhline(shot, color="k", ls="--", lw=0.8, label="2eI")
    ax.set_xlabel("frequency (Hz)")
    ax.set_ylabel("INPSD (A$^2$/Hz)")
    ax.legend()


def _cmrr(ax, report):
    rows = [r for r in _need(report, "cmrr", "points") if r["cmrr_db"] is not None]
    if not rows:
        raise ValueError("report has no finite cmrr values to plot")
    f = [r["frequency_hz"] for r in rows]
    ax.semilogx(f, [r["cmrr_db"] for r in rows], "o-")
    bound = [r for r in rows if r["status"] != "ok"]
    if bound:
        ax.semilogx([r["frequency_hz"] for r in bound], [r["cmrr_db"] for r in bound], "v",
                    color="r", label="floor limited")
        ax.legend()
    ax.set_xlabel("frequency (Hz)")
    ax.set_ylabel("CMRR (dB)")


def _power_sweep(ax, report):
    points = _need(report, "power_sweep", "points")
    p = [pt["power_w"] * 1e3 for pt in points]
    for k, c in enumerate(report["power_sweep"]["band_centers_hz"]):
        ax.errorbar(p, [pt["bands"][k]["diff_psd"] for pt in points],
                    yerr=[pt["bands"][k]["diff_psd_se"] for pt in points], fmt="o",
                    label=f"{c / 1e6:g} MHz")
    shot = [pt["shot_noise_psd"] for pt in points]
    ax.plot(p, shot, "k--", lw=0.8, label="2eI")
    ax.set_xlabel("incident power (mW)")
    ax.set_ylabel("INPSD (A$^2$/Hz)")
    ax.legend()


def _clearance_spectra(ax, report):
    curves = _need(report, "clearance_spectra")
    for c in curves:
        ax.semilogx(c["frequency_hz"], c["clearance"], label=f"{c['power_w'] * 1e3:.3g} mW")
    ax.set_xlabel("frequency (Hz)")
    ax.set_ylabel("clearance")
    ax.legend(fontsize="small")


def _clearance_fit(ax, report):
    fits = _need(report, "power_sweep", "clearance_fits")
    points = _need(report, "power_sweep", "points")
    fit = fits[0]
    p = [pt["power_w"] for pt in points]
    c = [pt["bands"][0].get("clearance") for pt in points]
    if any(v is None for v in c):
        raise ValueError("report has no clearance values to plot")
    ax.errorbar([x * 1e3 for x in p], c, yerr=[pt["bands"][0]["clearance_se"] for pt in points],
                fmt="o")
    if "slope" in fit:
        lo, hi = fit["linear_range_w"]
        xs = [lo, hi]
        ax.plot([x * 1e3 for x in xs], [fit["intercept"] + fit["slope"] * x for x in xs], "r-")
        if fit.get("saturation_onset_w"):
            ax.axvline(fit["saturation_onset_w"] * 1e3, color="k", ls=":")
    ax.set_xlabel("incident power (mW)")
    ax.set_ylabel("clearance")


def _responsivity(ax, report):
    dets = _need(report, "responsivity", "detectors")
    for d in dets:
        pts = d["points"]
        if not pts:
            raise ValueError("report has no responsivity points to plot")
        ax.plot([x[0] * 1e3 for x in pts], [x[1] * 1e3 for x in pts], "o", label=d["name"])
        if "slope" in d:
            xs = [pts[0][0], pts[-1][0]]
            ax.plot([x * 1e3 for x in xs], [(d["intercept"] + d["slope"] * x) * 1e3 for x in xs],
                    "-", lw=0.8)
    ax.set_xlabel("power on detector (mW)")
    ax.set_ylabel("dc current (mA)")
    ax.legend()


_DRAW = {"inpsd_spectra": _inpsd, "cmrr": _cmrr, "power_sweep": _power_sweep,
         "clearance_spectra": _clearance_spectra, "clearance_fit": _clearance_fit,
         "responsivity": _responsivity}


def emit_figure(report, kind, path):
    """Render figure ``kind`` from ``report`` to an SVG at ``path``."""
    if kind not in _DRAW:
        raise ValueError(f"unknown figure kind {kind!r}; expected one of {KINDS}")
    with plt.rc_context({"svg.hashsalt": "bhdsim", "svg.fonttype": "none"}):
        fig, ax = plt.subplots(figsize=(5, 3.6))
        try:
            _DRAW[kind](ax, report)
            fig.tight_layout()
            fig.savefig(path, format="svg", metadata={"Date": None})
        finally:
            plt.close(fig)
    return path
