"""Intensity-noise spectra of balanced detector records and derived metrics."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import ndimage, signal

from .constants import ELEMENTARY_CHARGE
from .fitting import LinearRegionRegressor

DEFAULT_SEGMENT = 1 << 14
DEFAULT_BAND_CENTER = 30e6
DEFAULT_BAND_WIDTH = 3e6
HALF_POWER = 0.5


@dataclass(frozen=True, eq=False)
class Spectrum:
    """One-sided power spectral density on a uniform frequency grid."""

    frequencies: np.ndarray
    psd: np.ndarray
    resolution: float
    averages: int
    unit: str = "V^2/Hz"

    def __post_init__(self):
        if self.frequencies.shape != self.psd.shape:
            raise ValueError("frequency grid and PSD differ in length")
        if np.any(self.psd < 0):
            raise ValueError("PSD must be non-negative")

    def scaled(self, factor, unit):
        return Spectrum(self.frequencies, self.psd * factor, self.resolution, self.averages, unit)

    def mask(self, low, high):
        return (self.frequencies >= low) & (self.frequencies <= high)


@dataclass(frozen=True)
class BandMetric:
    center: float
    width: float
    value: float
    uncertainty: float
    bins: int


@dataclass(frozen=True)
class ClearanceReport:
    clearance: float
    equivalent_optical_efficiency: float
    effective_quantum_efficiency: Optional[float]
    diff_level: Optional[float] = None
    background_level: Optional[float] = None


@dataclass(frozen=True)
class CMRRPoint:
    harmonic: int
    frequency: float
    cmrr_db: Optional[float]
    status: str  # "ok", "floor_limited" (value is a lower bound) or "below_floor"
    sum_power: float
    diff_power: float


@dataclass(frozen=True)
class ClearanceFit:
    slope: float
    intercept: float
    slope_se: float
    intercept_se: float
    r2: float
    linear_range: tuple
    saturation_onset: Optional[float]


def _check_segment(segment_len, n_samples):
    if segment_len <= 0 or segment_len & (segment_len - 1):
        raise ValueError(f"segment length must be a power of two, got {segment_len}")
    if segment_len > n_samples:
        raise ValueError(f"trace of {n_samples} samples is shorter than one segment ({segment_len})")


def welch_array(x, sample_rate, segment_len=DEFAULT_SEGMENT, window="hann", overlap=0.5,
                unit="V^2/Hz"):
    """Welch estimate of a sampled signal; see ``welch_psd``."""
    x = np.asarray(x, dtype=float)
    _check_segment(segment_len, x.size)
    if not 0.0 <= overlap < 1.0:
        raise ValueError("overlap must lie in [0, 1)")
    noverlap = int(round(segment_len * overlap))
    freqs, psd = signal.welch(x, fs=sample_rate, window=window, nperseg=segment_len,
                              noverlap=noverlap, detrend="constant", scaling="density",
                              return_onesided=True)
    step = segment_len - noverlap
    averages = (x.size - segment_len) // step + 1
    return Spectrum(freqs, psd, sample_rate / segment_len, averages, unit)


def welch_psd(trace, segment_len=DEFAULT_SEGMENT, window="hann", overlap=0.5):
    """One-sided Welch PSD of a trace record in V^2/Hz.

    Segments are mean-removed and windowed; the density normalization makes
    the integral of the PSD equal the signal variance. DC and Nyquist bins
    are not doubled.
    """
    return welch_array(trace.samples, trace.sample_rate, segment_len, window, overlap)


def average_spectra(spectra):
    """Segment-weighted mean of spectra on the same grid."""
    spectra = list(spectra)
    if not spectra:
        raise ValueError("no spectra to average")
    first = spectra[0]
    for s in spectra[1:]:
        if s.frequencies.shape != first.frequencies.shape or s.unit != first.unit \
                or not np.allclose(s.frequencies, first.frequencies):
            raise ValueError("spectra are on different grids or in different units")
    weights = np.array([s.averages for s in spectra], dtype=float)
    psd = np.tensordot(weights, np.stack([s.psd for s in spectra]), axes=1) / weights.sum()
    return Spectrum(first.frequencies, psd, first.resolution, int(weights.sum()), first.unit)


def _check_pair(trace1, trace2):
    if trace1.sample_rate != trace2.sample_rate:
        raise ValueError(f"sample-rate mismatch: {trace1.sample_rate} vs {trace2.sample_rate} S/s")
    if len(trace1) != len(trace2):
        raise ValueError(f"record-length mismatch: {len(trace1)} vs {len(trace2)} samples")


def sum_diff_inpsd(trace1, trace2, segment_len=DEFAULT_SEGMENT, window="hann", overlap=0.5):
    """Welch PSDs of the digital sum and difference of two records."""
    _check_pair(trace1, trace2)
    fs = trace1.sample_rate
    s = welch_array(trace1.samples + trace2.samples, fs, segment_len, window, overlap)
    d = welch_array(trace1.samples - trace2.samples, fs, segment_len, window, overlap)
    return s, d


def refer_to_current(spectrum, calibrations, deembed=False):
    """Convert a voltage PSD of a channel combination to A^2/Hz.

    Divides by the mean net gain of the contributing channels squared and,
    with ``deembed``, by the filter power response recorded in the
    calibrations.
    """
    cals = list(calibrations)
    gain = float(np.mean([c.gain for c in cals]))
    factor = np.full(spectrum.psd.shape, 1.0 / gain**2)
    if deembed:
        response = np.mean([c.power_response(spectrum.frequencies) for c in cals], axis=0)
        with np.errstate(divide="ignore"):
            factor = np.where(response > 0, factor / response, 0.0)
    return Spectrum(spectrum.frequencies, spectrum.psd * factor, spectrum.resolution,
                    spectrum.averages, "A^2/Hz")


def shot_noise_psd(dc_current):
    """One-sided shot-noise current PSD ``2 e I`` in A^2/Hz."""
    if dc_current < 0:
        raise ValueError("current must be non-negative")
    return 2.0 * ELEMENTARY_CHARGE * dc_current


def band_average(spectrum, center=DEFAULT_BAND_CENTER, width=DEFAULT_BAND_WIDTH):
    if width <= 0:
        raise ValueError("band width must be positive")
    low, high = center - width / 2, center + width / 2
    if low < spectrum.frequencies[0] or high > spectrum.frequencies[-1]:
        raise ValueError(f"band {low:.4g}-{high:.4g} Hz outside the spectrum")
    values = spectrum.psd[spectrum.mask(low, high)]
    if values.size == 0:
        raise ValueError("band contains no frequency bins")
    unc = float(values.std(ddof=1) / math.sqrt(values.size)) if values.size > 1 else 0.0
    return BandMetric(center, width, float(values.mean()), unc, int(values.size))


def _tone_power(spectrum, freq, peak_bins, baseline_bins):
    df = spectrum.resolution
    idx = int(round(freq / df))
    inner, outer = baseline_bins
    lo, hi = idx - outer, idx + outer
    if lo < 1 or hi >= spectrum.psd.size:
        return None
    psd = spectrum.psd
    flank = np.concatenate([psd[idx - outer: idx - inner + 1], psd[idx + inner: idx + outer + 1]])
    baseline = float(np.median(flank))
    width = 2 * peak_bins + 1
    total = float(psd[idx - peak_bins: idx + peak_bins + 1].sum()) * df
    power = total - baseline * width * df
    floor = 3.0 * baseline * df * math.sqrt(width / max(spectrum.averages, 1))
    return power, floor


def cmrr_at_harmonics(spectrum_sum, spectrum_diff, fundamental, n_harmonics=5,
                      peak_bins=2, baseline_bins=(4, 12)):
    """Common-mode rejection at the odd harmonics of a square-wave modulation.

    Tone power is the PSD integrated over ``+/- peak_bins`` around the
    harmonic minus the median of the flanking bins. A difference tone that
    does not clear three standard deviations of the noise integral gives a
    lower bound (``status="floor_limited"``); a sum tone that does not is
    reported as ``"below_floor"`` with no value.
    """
    if spectrum_sum.frequencies.shape != spectrum_diff.frequencies.shape:
        raise ValueError("sum and difference spectra are on different grids")
    df = spectrum_sum.resolution
    if fundamental < 2 * (baseline_bins[1] + 1) * df:
        raise ValueError(
            f"fundamental {fundamental:.4g} Hz is not resolvable at {df:.4g} Hz resolution")
    points = []
    for i in range(n_harmonics):
        k = 2 * i + 1
        freq = k * fundamental
        s = _tone_power(spectrum_sum, freq, peak_bins, baseline_bins)
        d = _tone_power(spectrum_diff, freq, peak_bins, baseline_bins)
        if s is None or d is None:
            break
        (p_sum, floor_sum), (p_diff, floor_diff) = s, d
        if p_sum <= floor_sum:
            points.append(CMRRPoint(k, freq, None, "below_floor", p_sum, p_diff))
        elif p_diff <= floor_diff:
            points.append(CMRRPoint(k, freq, 10 * math.log10(p_sum / floor_diff),
                                    "floor_limited", p_sum, p_diff))
        else:
            points.append(CMRRPoint(k, freq, 10 * math.log10(p_sum / p_diff), "ok", p_sum, p_diff))
    return points


def efficiency_from_clearance(clearance_ratio, quantum_efficiency=None):
    """Equivalent optical efficiency ``1 - 1/C`` and, given the detector
    quantum efficiency, the effective quantum efficiency."""
    if clearance_ratio < 0:
        raise ValueError("clearance must be non-negative")
    equivalent = 1.0 - 1.0 / clearance_ratio if clearance_ratio > 1 else 0.0
    effective = equivalent * quantum_efficiency if quantum_efficiency is not None else None
    return equivalent, effective


def clearance(spectrum_diff, spectrum_background, center=DEFAULT_BAND_CENTER,
              width=DEFAULT_BAND_WIDTH, quantum_efficiency=None):
    """Band-averaged ratio of the difference spectrum to the background."""
    diff = band_average(spectrum_diff, center, width).value
    background = band_average(spectrum_background, center, width).value
    if background <= 0:
        raise ValueError("background band average is zero")
    ratio = diff / background
    equivalent, effective = efficiency_from_clearance(ratio, quantum_efficiency)
    return ClearanceReport(ratio, equivalent, effective, diff, background)


def clearance_spectrum(spectrum_diff, spectrum_background):
    """Bin-wise clearance, dimensionless."""
    if spectrum_diff.psd.shape != spectrum_background.psd.shape:
        raise ValueError("spectra are on different grids")
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(spectrum_background.psd > 0,
                         spectrum_diff.psd / spectrum_background.psd, 0.0)
    return Spectrum(spectrum_diff.frequencies, ratio, spectrum_diff.resolution,
                    spectrum_diff.averages, "1")


def clearance_vs_power_fit(points, clearance_err=None, threshold=3.0):
    """Line through clearance versus incident power up to the saturation onset.

    ``points`` are ``(power W, clearance)`` pairs.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 4:
        raise ValueError("need at least four (power, clearance) points")
    reg = LinearRegionRegressor(threshold=threshold)
    try:
        reg.fit(pts[:, 0], pts[:, 1], y_err=clearance_err)
    except ValueError as exc:
        raise ValueError(f"insufficient unsaturated points: {exc}") from exc
    return ClearanceFit(reg.coef_, reg.intercept_, reg.slope_se_, reg.intercept_se_, reg.r2_,
                        reg.linear_range_, reg.saturation_onset_)


def cutoff_minus_3db(spectrum, flat_band=(1e6, 10e6), smoothing=11):
    """Frequency where the spectrum falls to half the flat-band level.

    The PSD is smoothed with a running median of ``smoothing`` bins; the
    crossing is interpolated linearly between the bracketing bins.
    """
    low, high = flat_band
    # the first bins share the window main lobe with the removed segment mean
    ref_mask = spectrum.mask(low, high) & (spectrum.frequencies >= 2 * spectrum.resolution)
    if not ref_mask.any():
        raise ValueError("flat band contains no usable frequency bins")
    reference = float(spectrum.psd[ref_mask].mean())
    level = HALF_POWER * reference
    smooth = ndimage.median_filter(spectrum.psd, size=smoothing, mode="nearest")
    start = int(np.nonzero(ref_mask)[0][-1]) + 1
    below = np.nonzero(smooth[start:] < level)[0]
    if below.size == 0:
        raise ValueError("no crossing: spectrum never falls 3 dB below the flat-band level")
    i = start + int(below[0])
    f0, f1 = spectrum.frequencies[i - 1], spectrum.frequencies[i]
    y0, y1 = smooth[i - 1], smooth[i]
    if not y0 >= level:
        raise ValueError("spectrum is already below half the flat-band level at the band edge; "
                         "the flat band is not flat (tone or roll-off inside it)")
    return float(f0 + (y0 - level) / (y0 - y1) * (f1 - f0))
