"""Estimator-style front doors to the spectral analysis.

``WelchPSD`` is a stateless transformer over rows of equally sampled
traces. ``BalancedNoiseAnalyzer`` fits on pairs of detector records and
exposes the sum/difference spectra and every derived metric as fitted
attributes.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from . import spectral
from .statistics import is_shot_noise_limited, outcome_from_spectra


class WelchPSD(TransformerMixin, BaseEstimator):
    """One-sided Welch PSD of each row of ``X``.

    Examples
    --------
    >>> import numpy as np
    >>> X = np.random.default_rng(0).standard_normal((2, 4096))
    >>> WelchPSD(sample_rate=1.0, segment_len=256).fit_transform(X).shape
    (2, 129)
    """

    def __init__(self, sample_rate=625e6, segment_len=spectral.DEFAULT_SEGMENT, window="hann",
                 overlap=0.5):
        self.sample_rate = sample_rate
        self.segment_len = segment_len
        self.window = window
        self.overlap = overlap

    def fit(self, X, y=None):
        X = check_array(X)
        spectral._check_segment(self.segment_len, X.shape[1])
        self.n_features_in_ = X.shape[1]
        self.frequencies_ = np.fft.rfftfreq(self.segment_len, 1.0 / self.sample_rate)
        return self

    def transform(self, X):
        check_is_fitted(self, "frequencies_")
        X = check_array(X)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"expected traces of {self.n_features_in_} samples, got {X.shape[1]}")
        return np.stack([
            spectral.welch_array(row, self.sample_rate, self.segment_len, self.window,
                                 self.overlap).psd
            for row in X
        ])


def _as_pairs(pairs):
    if pairs is None:
        return []
    if isinstance(pairs, tuple) and len(pairs) == 2 and hasattr(pairs[0], "samples"):
        return [pairs]
    return list(pairs)


class BalancedNoiseAnalyzer(BaseEstimator):
    """Characterize a balanced detector from two-channel records.

    Parameters
    ----------
    band_centers : sequence of float
        Centres (Hz) of the analysis windows; the first one is the reference
        window for clearance and the shot-noise verdict.
    band_width : float
        Width of every analysis window, Hz.
    flat_band : (float, float)
        Frequency range taken as the flat reference for the -3 dB cutoff.
    fundamental : float or None
        Square-wave modulation frequency; enables the CMRR estimate.
    quantum_efficiency : float or None
        Detector quantum efficiency, for the effective efficiency.
    deembed : bool
        Divide the current-referred spectra by the front-end filter response
        recorded in the trace calibrations.
    cutoff_segment_len : int or None
        Segment length of a separate, coarser Welch average used only for
        the -3 dB cutoff; fine grids make the first-crossing search trip on
        noise. ``None`` reuses ``segment_len``.
    """

    def __init__(self, segment_len=spectral.DEFAULT_SEGMENT, window="hann", overlap=0.5,
                 band_centers=(spectral.DEFAULT_BAND_CENTER,),
                 band_width=spectral.DEFAULT_BAND_WIDTH, flat_band=(1e6, 5e6),
                 fundamental=None, n_harmonics=5, quantum_efficiency=None, deembed=False,
                 shot_tolerance=0.05, cutoff_segment_len=None):
        self.segment_len = segment_len
        self.window = window
        self.overlap = overlap
        self.band_centers = band_centers
        self.band_width = band_width
        self.flat_band = flat_band
        self.fundamental = fundamental
        self.n_harmonics = n_harmonics
        self.quantum_efficiency = quantum_efficiency
        self.deembed = deembed
        self.shot_tolerance = shot_tolerance
        self.cutoff_segment_len = cutoff_segment_len

    def _spectra(self, pairs, segment_len=None):
        sums, diffs = [], []
        for t1, t2 in pairs:
            s, d = spectral.sum_diff_inpsd(t1, t2, segment_len or self.segment_len, self.window,
                                           self.overlap)
            sums.append(s)
            diffs.append(d)
        return spectral.average_spectra(sums), spectral.average_spectra(diffs)

    def fit(self, pairs, background=None):
        pairs = _as_pairs(pairs)
        if not pairs:
            raise ValueError("no trace pairs to analyse")
        cals = [pairs[0][0].calibration, pairs[0][1].calibration]
        v_sum, v_diff = self._spectra(pairs)
        self.sum_voltage_ = v_sum
        self.diff_voltage_ = v_diff
        self.sum_spectrum_ = spectral.refer_to_current(v_sum, cals, self.deembed)
        self.diff_spectrum_ = spectral.refer_to_current(v_diff, cals, self.deembed)
        self.channel_currents_ = tuple(
            float(np.mean([p[i].calibration.dc_current for p in pairs])) for i in (0, 1))
        self.dc_current_ = sum(self.channel_currents_)
        self.shot_noise_level_ = spectral.shot_noise_psd(self.dc_current_)

        bg_pairs = _as_pairs(background)
        self.background_spectrum_ = None
        if bg_pairs:
            _, bg_diff = self._spectra(bg_pairs)
            self.background_spectrum_ = spectral.refer_to_current(bg_diff, cals, self.deembed)

        self.bands_ = {}
        for center in self.band_centers:
            entry = {
                "sum": spectral.band_average(self.sum_spectrum_, center, self.band_width),
                "diff": spectral.band_average(self.diff_spectrum_, center, self.band_width),
            }
            if self.background_spectrum_ is not None:
                entry["background"] = spectral.band_average(self.background_spectrum_, center,
                                                            self.band_width)
                entry["clearance"] = spectral.clearance(
                    self.diff_spectrum_, self.background_spectrum_, center, self.band_width,
                    self.quantum_efficiency)
            self.bands_[center] = entry

        ref = self.bands_[self.band_centers[0]]
        bg_level = ref["background"].value if "background" in ref else 0.0
        self.clearance_ = ref.get("clearance")
        self.outcome_ = outcome_from_spectra(
            max(ref["sum"].value - bg_level, 0.0), max(ref["diff"].value - bg_level, 0.0),
            self.dc_current_, self.band_width)
        self.verdict_ = (is_shot_noise_limited(self.outcome_, self.shot_tolerance)
                         if self.outcome_.diff_variance > 0 else None)

        self.cmrr_ = None
        if self.fundamental:
            self.cmrr_ = spectral.cmrr_at_harmonics(v_sum, v_diff, self.fundamental,
                                                    self.n_harmonics)

        coarse = v_diff
        if self.cutoff_segment_len and self.cutoff_segment_len != self.segment_len:
            _, coarse = self._spectra(pairs, self.cutoff_segment_len)
        raw_diff = spectral.refer_to_current(coarse, cals, deembed=False)
        self.cutoff_resolution_ = raw_diff.resolution
        try:
            self.cutoff_ = spectral.cutoff_minus_3db(raw_diff, self.flat_band)
            self.cutoff_error_ = None
        except ValueError as exc:
            self.cutoff_ = None
            self.cutoff_error_ = str(exc)
        return self

    def report(self):
        """Plain-data summary of the fitted metrics."""
        check_is_fitted(self, "diff_spectrum_")
        bands = []
        for center, entry in self.bands_.items():
            row = {"center_hz": center, "width_hz": self.band_width}
            for key in ("sum", "diff", "background"):
                if key in entry:
                    row[f"{key}_psd"] = entry[key].value
                    row[f"{key}_psd_se"] = entry[key].uncertainty
            if "clearance" in entry:
                c = entry["clearance"]
                row["clearance"] = c.clearance
                row["equivalent_optical_efficiency"] = c.equivalent_optical_efficiency
                row["effective_quantum_efficiency"] = c.effective_quantum_efficiency
            bands.append(row)
        out = {
            "units": {"psd": "A^2/Hz", "current": "A", "frequency": "Hz", "cmrr": "dB"},
            "dc_current_a": self.dc_current_,
            "channel_currents_a": list(self.channel_currents_),
            "shot_noise_psd": self.shot_noise_level_,
            "resolution_hz": self.diff_spectrum_.resolution,
            "averages": self.diff_spectrum_.averages,
            "bands": bands,
            "shot_noise_verdict": self.verdict_.value if self.verdict_ else None,
            "cutoff_hz": self.cutoff_,
            "cutoff_resolution_hz": self.cutoff_resolution_,
        }
        if self.cutoff_error_:
            out["cutoff_error"] = self.cutoff_error_
        if self.cmrr_ is not None:
            out["cmrr"] = [
                {"harmonic": p.harmonic, "frequency_hz": p.frequency, "cmrr_db": p.cmrr_db,
                 "status": p.status} for p in self.cmrr_
            ]
        return out
