"""Simulator and analysis workbench for mid-infrared balanced homodyne detection."""

__version__ = "0.1.0"

from .statistics import (BalancedOutcome, EfficiencyBudget, Family, PhotonEnsemble, Verdict,
                         balanced_statistics, fock_balanced_outcome, fock_splitter_distribution,
                         is_shot_noise_limited, monte_carlo_balanced)
from .optics import (ChainMode, ChainScenario, OpticalElement, WavelengthTable,
                     detection_efficiency, efficiency_budget, quantum_efficiency_from_responsivity,
                     reference_chain, responsivity_from_qe, total_transmission)
from .frontend import (Calibration, DetectorModel, LightSource, ModulationKind, ModulationSpec,
                       TraceRecord, photocurrent_dc, responsivity_fit, source_for_incident_power,
                       synthesize_balanced_traces)
from .spectral import (Spectrum, band_average, clearance, clearance_spectrum,
                       clearance_vs_power_fit, cmrr_at_harmonics, cutoff_minus_3db,
                       efficiency_from_clearance, shot_noise_psd, sum_diff_inpsd, welch_psd)
from .fitting import LinearRegionRegressor
from .estimators import BalancedNoiseAnalyzer, WelchPSD

__all__ = [
    "BalancedNoiseAnalyzer", "BalancedOutcome", "Calibration", "ChainMode", "ChainScenario",
    "DetectorModel", "EfficiencyBudget", "Family", "LightSource", "LinearRegionRegressor",
    "ModulationKind", "ModulationSpec", "OpticalElement", "PhotonEnsemble", "Spectrum",
    "TraceRecord", "Verdict", "WavelengthTable", "WelchPSD", "balanced_statistics",
    "band_average", "clearance", "clearance_spectrum", "clearance_vs_power_fit",
    "cmrr_at_harmonics", "cutoff_minus_3db", "detection_efficiency", "efficiency_budget",
    "efficiency_from_clearance", "fock_balanced_outcome", "fock_splitter_distribution",
    "is_shot_noise_limited", "monte_carlo_balanced", "photocurrent_dc",
    "quantum_efficiency_from_responsivity", "reference_chain", "responsivity_fit",
    "responsivity_from_qe", "shot_noise_psd", "source_for_incident_power", "sum_diff_inpsd", "synthesize_balanced_traces",
    "total_transmission", "welch_psd",
]
