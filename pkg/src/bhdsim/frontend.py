"""Two-channel detector front-end: photocurrents, noise and amplification.

Trace synthesis works in photon counts per sample. The source photon
number fluctuates with its Fano factor (white shot part plus a band-limited
excess part shared by both arms); survivors of the optical losses and the
detector quantum efficiency are routed to the two detectors with the
multinomial partition noise that makes the difference channel shot-noise
limited. Counts are converted to current, then pass the single-pole
bandwidth limit, the AC coupling and the amplifier gain.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from typing import Optional, Union, Sequence

import numpy as np
from scipy import signal

from .constants import ELEMENTARY_CHARGE, photon_energy
from .fitting import LinearRegionRegressor
from .optics import WavelengthTable

EXCESS_NOISE_CORNER = 150e6


@dataclass(frozen=True)
class LightSource:
    """Local-oscillator laser as seen at its output.

    ``fano`` is the photon-number Fano factor at low Fourier frequency; the
    excess above shot noise rolls off with a single pole at
    ``excess_corner_hz``.
    """

    wavelength_um: float
    power_w: float
    fano: float = 1.0
    excess_corner_hz: float = EXCESS_NOISE_CORNER

    def __post_init__(self):
        for name in ("wavelength_um", "power_w", "fano", "excess_corner_hz"):
            v = getattr(self, name)
            if not math.isfinite(v):
                raise ValueError(f"{name} must be finite")
        if self.wavelength_um <= 0 or self.excess_corner_hz <= 0:
            raise ValueError("wavelength and excess corner must be positive")
        if self.power_w < 0 or self.fano < 0:
            raise ValueError("power and Fano factor must be non-negative")


class ModulationKind(str, enum.Enum):
    NONE = "none"
    SQUARE_WAVE = "square_wave"


@dataclass(frozen=True)
class ModulationSpec:
    """Intensity modulation ``P(t) = P0 (1 + depth * s(t))`` with ``s = +/-1``."""

    kind: ModulationKind = ModulationKind.NONE
    fundamental: float = 1e6
    depth: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "kind", ModulationKind(self.kind))
        if not 0.0 <= self.depth <= 1.0:
            raise ValueError("modulation depth must lie in [0, 1]")
        if self.kind is ModulationKind.SQUARE_WAVE and not self.fundamental > 0:
            raise ValueError("modulation fundamental must be positive")

    def envelope(self, n_samples, sample_rate):
        if self.kind is ModulationKind.NONE or self.depth == 0.0:
            return np.ones(n_samples)
        if self.fundamental >= sample_rate / 2:
            raise ValueError("modulation fundamental must lie below the Nyquist frequency")
        phase = np.mod(np.arange(n_samples) * (self.fundamental / sample_rate), 1.0)
        return 1.0 + self.depth * np.where(phase < 0.5, 1.0, -1.0)


@dataclass(frozen=True)
class DetectorModel:
    """Photodetector with a two-stage preamplifier.

    ``responsivity`` is in A/W, either a scalar or ``[[wavelength_um, A/W], ...]``.
    ``dark_noise_psd`` is the one-sided input-referred current noise (A^2/Hz)
    of detector and electronics together.
    """

    responsivity: Union[float, Sequence[Sequence[float]]]
    saturation_power: float = 2.0e-3
    dark_noise_psd: float = 0.0
    bandwidth_cutoff: float = 120e6
    ac_corner: float = 10e3
    transimpedance_gain: float = 1.0e3
    ac_stage_gain: float = 26.5
    name: str = "detector"
    table: WavelengthTable = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        table = WavelengthTable(self.responsivity, f"{self.name} responsivity")
        object.__setattr__(self, "table", table)
        for v in table.all_values():
            if not v > 0:
                raise ValueError("responsivity values must be positive")
        for name in ("saturation_power", "bandwidth_cutoff", "ac_corner",
                     "transimpedance_gain", "ac_stage_gain"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be positive and finite, got {v}")
        if not (math.isfinite(self.dark_noise_psd) and self.dark_noise_psd >= 0):
            raise ValueError("dark_noise_psd must be non-negative and finite")
        if self.ac_corner * 100 > self.bandwidth_cutoff:
            raise ValueError("AC-coupling corner must lie far below the bandwidth cutoff")

    @property
    def net_gain(self):
        return self.transimpedance_gain * self.ac_stage_gain

    def responsivity_at(self, wavelength_um):
        return self.table(wavelength_um)

    def filters(self, sample_rate):
        """Digital single-pole low-pass and high-pass sections (b, a)."""
        lp = signal.butter(1, self.bandwidth_cutoff, "lowpass", fs=sample_rate)
        hp = signal.butter(1, self.ac_corner, "highpass", fs=sample_rate)
        return lp, hp

    def power_response(self, frequencies, sample_rate):
        """|H(f)|^2 of the filter chain at ``frequencies`` (gain excluded)."""
        (b1, a1), (b2, a2) = self.filters(sample_rate)
        f = np.asarray(frequencies, dtype=float)
        _, h1 = signal.freqz(b1, a1, worN=f, fs=sample_rate)
        _, h2 = signal.freqz(b2, a2, worN=f, fs=sample_rate)
        return np.abs(h1 * h2) ** 2

    def calibration(self, dc_current, sample_rate):
        return Calibration(self.net_gain, float(dc_current), self.bandwidth_cutoff,
                           self.ac_corner, sample_rate)


@dataclass(frozen=True)
class Calibration:
    """What is needed to refer a voltage record back to detector current.

    The filter corners are optional; without them only the flat gain can be
    removed.
    """

    gain: float
    dc_current: float
    bandwidth_cutoff: Optional[float] = None
    ac_corner: Optional[float] = None
    filter_sample_rate: Optional[float] = None

    def power_response(self, frequencies):
        if self.bandwidth_cutoff is None or self.ac_corner is None:
            return np.ones_like(np.asarray(frequencies, dtype=float))
        model = DetectorModel(1.0, bandwidth_cutoff=self.bandwidth_cutoff,
                              ac_corner=self.ac_corner)
        return model.power_response(frequencies, self.filter_sample_rate)


@dataclass(frozen=True, eq=False)
class TraceRecord:
    sample_rate: float
    duration: float
    samples: np.ndarray
    channel_id: int = 1
    calibration: Calibration = Calibration(1.0, 0.0)

    def __post_init__(self):
        samples = np.asarray(self.samples)
        object.__setattr__(self, "samples", samples)
        if not (self.sample_rate > 0 and self.duration > 0):
            raise ValueError("sample rate and duration must be positive")
        expected = round(self.sample_rate * self.duration)
        if samples.ndim != 1 or samples.size != expected:
            raise ValueError(
                f"record holds {samples.size} samples, expected {expected} "
                f"= round(sample_rate * duration)")
        if not np.all(np.isfinite(samples)):
            raise ValueError("trace contains non-finite samples")

    def __len__(self):
        return self.samples.size

    def to_current(self):
        """Samples divided by the net gain, in amperes."""
        return self.samples / self.calibration.gain


def photocurrent_dc(incident_power, wavelength_um, model):
    """DC photocurrent with a soft saturation.

    Linear, ``I = R P``, up to half the saturation current
    ``I_sat = R * saturation_power``; above that knee the current approaches
    ``I_sat`` exponentially with matching slope.
    """
    p = np.asarray(incident_power, dtype=float)
    if np.any(p < 0):
        raise ValueError("incident power must be non-negative")
    r = model.responsivity_at(wavelength_um)
    linear = r * p
    i_sat = r * model.saturation_power
    knee = 0.5 * i_sat
    span = i_sat - knee
    excess = np.maximum(linear - knee, 0.0)
    current = np.where(linear > knee, knee + span * -np.expm1(-excess / span), linear)
    return float(current) if current.ndim == 0 else current


@dataclass(frozen=True)
class ResponsivityFit:
    slope: float
    uncertainty: float
    saturation_onset: Optional[float]
    intercept: float
    r2: float
    n_used: int


def responsivity_fit(points, current_err=None, threshold=3.0):
    """Responsivity (A/W) from ``(incident power W, dc current A)`` pairs.

    The line is fitted over the points below the saturation onset, i.e. the
    lowest power whose residual exceeds ``threshold`` sigma.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 4:
        raise ValueError("need at least four (power, current) points")
    power, current = pts[:, 0], pts[:, 1]
    if np.any(power <= 0) or power.max() < 10 * power.min():
        raise ValueError("incident powers must be positive and span at least a decade")
    reg = LinearRegionRegressor(threshold=threshold).fit(power, current, y_err=current_err)
    if not reg.coef_ > 2 * reg.slope_se_:
        raise ValueError("current does not grow with power: all points saturated")
    return ResponsivityFit(reg.coef_, reg.slope_se_, reg.saturation_onset_,
                           reg.intercept_, reg.r2_, reg.n_used_)


def arm_powers(source, chain, imbalance=0.0):
    """Mean optical power reaching each detector, W."""
    wl = source.wavelength_um
    t_pre = math.prod(e.at(wl) for e in chain.pre_splitter())
    t_post = math.prod(e.at(wl) for e in chain.post_splitter())
    p = source.power_w * t_pre * t_post
    return 0.5 * (1 + imbalance) * p, 0.5 * (1 - imbalance) * p


def source_for_incident_power(source, chain, incident_power):
    """Source re-scaled so that ``incident_power`` reaches the splitter."""
    wl = source.wavelength_um
    t_pre = math.prod(e.at(wl) for e in chain.pre_splitter())
    return replace(source, power_w=incident_power / t_pre)


def _check_synthesis_inputs(source, detectors, imbalance, duration, sample_rate):
    for v in (imbalance, duration, sample_rate):
        if not math.isfinite(v):
            raise ValueError("synthesis parameters must be finite")
    if not -1.0 <= imbalance <= 1.0:
        raise ValueError("splitter imbalance must lie in [-1, 1]")
    if duration <= 0 or sample_rate <= 0:
        raise ValueError("duration and sample rate must be positive")
    for det in detectors:
        if sample_rate < 4 * det.bandwidth_cutoff:
            raise ValueError(
                f"sample rate {sample_rate:.4g} S/s is below 4x the {det.name} bandwidth "
                f"{det.bandwidth_cutoff:.4g} Hz; the record would alias")
    if source.excess_corner_hz >= sample_rate / 2:
        raise ValueError("excess-noise corner must lie below the Nyquist frequency")


def synthesize_balanced_traces(source, chain, detectors, imbalance=0.0, modulation=None,
                               duration=1e-3, sample_rate=625e6, seed=0, record=0,
                               interferer=None):
    """Simulate one acquisition of both detector outputs.

    Parameters
    ----------
    source : LightSource
        Laser at its output; ``chain`` supplies the losses to the detectors.
    detectors : pair of DetectorModel
    imbalance : float
        Splitter imbalance ``|R|^2 - |T|^2``; detector 1 receives ``(1 + imbalance) / 2``.
    interferer : (frequency_hz, amplitude_a), optional
        Sinusoidal pick-up added to each channel after the bandwidth limit,
        with an independent phase per channel.
    record : int
        Index of the acquisition; with ``seed`` it fixes the random stream.

    Returns
    -------
    (TraceRecord, TraceRecord)
    """
    det1, det2 = detectors
    modulation = modulation or ModulationSpec()
    _check_synthesis_inputs(source, detectors, imbalance, duration, sample_rate)
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(record,)))
    n = round(sample_rate * duration)
    dt = 1.0 / sample_rate
    e = ELEMENTARY_CHARGE
    wl = source.wavelength_um

    env = modulation.envelope(n, sample_rate)
    mu = source.power_w * dt / photon_energy(wl) * env  # photons per sample at the source
    p1, p2 = arm_powers(source, chain, imbalance)
    i1 = photocurrent_dc(p1 * env, wl, det1)
    i2 = photocurrent_dc(p2 * env, wl, det2)
    with np.errstate(invalid="ignore", divide="ignore"):
        q1 = np.where(mu > 0, i1 * dt / (e * mu), 0.0)
        q2 = np.where(mu > 0, i2 * dt / (e * mu), 0.0)

    # common-mode source fluctuation, photons per sample
    white = rng.standard_normal(n)
    if source.fano >= 1.0:
        excess = rng.standard_normal(n)
        b, a = signal.butter(1, source.excess_corner_hz, "lowpass", fs=sample_rate)
        excess = signal.lfilter(b, a, excess)
        d_n = np.sqrt(mu) * white + np.sqrt((source.fano - 1.0) * mu) * excess
    else:
        d_n = np.sqrt(source.fano * mu) * white

    # multinomial partition of the photons between detector 1, detector 2 and loss
    var1 = mu * q1 * (1 - q1)
    var2 = mu * q2 * (1 - q2)
    cov = -mu * q1 * q2
    z1 = rng.standard_normal(n)
    z2 = rng.standard_normal(n)
    eps1 = np.sqrt(var1) * z1
    with np.errstate(invalid="ignore", divide="ignore"):
        coupling = np.where(var1 > 0, cov / np.sqrt(var1), 0.0)
        resid = np.where(var1 > 0, var2 - cov * cov / var1, var2)
    eps2 = coupling * z1 + np.sqrt(np.maximum(resid, 0.0)) * z2

    to_amp = e / dt
    records = []
    for idx, (det, q, eps, i_mean) in enumerate(((det1, q1, eps1, i1), (det2, q2, eps2, i2)), 1):
        ac = (q * d_n + eps) * to_amp + (i_mean - i_mean.mean())
        if det.dark_noise_psd > 0:
            ac = ac + math.sqrt(det.dark_noise_psd * sample_rate / 2) * rng.standard_normal(n)
        (bl, al), (bh, ah) = det.filters(sample_rate)
        ac = signal.lfilter(bl, al, ac)
        if interferer is not None:
            freq, amp = interferer
            phase = rng.uniform(0, 2 * np.pi)
            ac = ac + amp * np.sin(2 * np.pi * freq * np.arange(n) * dt + phase)
        ac = signal.lfilter(bh, ah, ac)
        cal = det.calibration(float(np.mean(i_mean)), sample_rate)
        records.append(TraceRecord(sample_rate, duration, ac * det.net_gain, idx, cal))
    return records[0], records[1]
