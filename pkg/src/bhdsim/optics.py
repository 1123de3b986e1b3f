"""Loss budgets from the light source to the detectors."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

from .constants import HC_OVER_E
from .statistics import EfficiencyBudget


class ChainMode(str, enum.Enum):
    HOMODYNE_SIGNAL_PATH = "homodyne_signal_path"
    SOURCE_CHARACTERIZATION = "source_characterization"


class WavelengthTable:
    """Piecewise-linear table of a quantity versus wavelength (um).

    A scalar makes a wavelength-independent table. Lookups outside the
    tabulated range raise ``ValueError``.
    """

    def __init__(self, points: Union[float, Sequence[Sequence[float]]], name="table"):
        self.name = name
        if np.isscalar(points):
            self.constant = float(points)
            self.wavelengths = self.values = None
            return
        arr = np.asarray(points, dtype=float)
        if arr.ndim != 2 or arr.shape[1] != 2 or len(arr) == 0:
            raise ValueError(f"{name}: expected [[wavelength_um, value], ...]")
        order = np.argsort(arr[:, 0])
        wl, val = arr[order, 0], arr[order, 1]
        if np.any(np.diff(wl) <= 0):
            raise ValueError(f"{name}: duplicate wavelengths")
        self.constant = None
        self.wavelengths, self.values = wl, val

    def __call__(self, wavelength_um):
        if self.constant is not None:
            return self.constant
        wl = self.wavelengths
        if not wl[0] <= wavelength_um <= wl[-1]:
            raise ValueError(
                f"{self.name}: wavelength {wavelength_um} um outside tabulated range "
                f"[{wl[0]}, {wl[-1]}] um")
        return float(np.interp(wavelength_um, wl, self.values))

    def all_values(self):
        return [self.constant] if self.constant is not None else list(self.values)

    def to_config(self):
        if self.constant is not None:
            return self.constant
        return [[float(w), float(v)] for w, v in zip(self.wavelengths, self.values)]


@dataclass(frozen=True)
class OpticalElement:
    name: str
    transmissivity: Union[float, Sequence[Sequence[float]]]
    after_splitter: bool = False
    table: WavelengthTable = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        table = WavelengthTable(self.transmissivity, self.name)
        for v in table.all_values():
            if not 0.0 < v <= 1.0:
                raise ValueError(f"{self.name}: transmissivity {v} outside (0, 1]")
        object.__setattr__(self, "table", table)

    def at(self, wavelength_um):
        return self.table(wavelength_um)


@dataclass(frozen=True)
class ChainScenario:
    """Ordered optical elements plus the detector quantum efficiency.

    ``detector_qe`` may be a scalar or a wavelength table like element
    transmissivities.
    """

    mode: ChainMode
    elements: tuple
    detector_qe: Union[float, Sequence[Sequence[float]]] = 1.0

    def __post_init__(self):
        object.__setattr__(self, "mode", ChainMode(self.mode))
        object.__setattr__(self, "elements", tuple(self.elements))
        if not self.elements:
            raise ValueError("an optical chain needs at least one element")
        for v in WavelengthTable(self.detector_qe, "detector_qe").all_values():
            if not 0.0 < v <= 1.0:
                raise ValueError(f"detector_qe {v} outside (0, 1]")

    def qe_at(self, wavelength_um):
        return WavelengthTable(self.detector_qe, "detector_qe")(wavelength_um)

    def pre_splitter(self):
        return [e for e in self.elements if not e.after_splitter]

    def post_splitter(self):
        return [e for e in self.elements if e.after_splitter]


def _product(elements, wavelength_um):
    return math.prod(e.at(wavelength_um) for e in elements)


def total_transmission(chain, wavelength_um):
    """Product of every element's transmissivity at ``wavelength_um``."""
    return _product(chain.elements, wavelength_um)


def detection_efficiency(chain, wavelength_um):
    """Overall detection efficiency of the chain in its scenario.

    When characterizing the source every element counts. For homodyne
    detection of a signal only the elements after the splitter do.
    """
    qe = chain.qe_at(wavelength_um)
    if chain.mode is ChainMode.SOURCE_CHARACTERIZATION:
        return total_transmission(chain, wavelength_um) * qe
    return _product(chain.post_splitter(), wavelength_um) * qe


def efficiency_budget(chain, wavelength_um):
    """``EfficiencyBudget`` for the chain's scenario."""
    qe = chain.qe_at(wavelength_um)
    if chain.mode is ChainMode.SOURCE_CHARACTERIZATION:
        optical = total_transmission(chain, wavelength_um)
    else:
        optical = _product(chain.post_splitter(), wavelength_um)
    return EfficiencyBudget(optical, qe)


def quantum_efficiency_from_responsivity(responsivity, wavelength_um):
    """Electrons per photon, ``R h c / (lambda e)``; responsivity in A/W."""
    if wavelength_um <= 0:
        raise ValueError("wavelength must be positive")
    if responsivity < 0:
        raise ValueError("responsivity must be non-negative")
    return responsivity * HC_OVER_E / (wavelength_um * 1e-6)


def responsivity_from_qe(quantum_efficiency, wavelength_um):
    if wavelength_um <= 0:
        raise ValueError("wavelength must be positive")
    return quantum_efficiency * wavelength_um * 1e-6 / HC_OVER_E


def reference_chain(mode=ChainMode.SOURCE_CHARACTERIZATION, detector_qe=None):
    """Optical chain of the mid-infrared characterization bench.

    Only the isolator's transmissivity (70 % at 4.47 um, 60 % at 4.72 um) is
    a measured figure; the remaining elements are apportioned so that the
    totals come to 55 % and 47 % and the post-splitter optics pass 97.6 %.
    """
    if detector_qe is None:
        detector_qe = [[4.47, quantum_efficiency_from_responsivity(1.48, 4.47)],
                       [4.72, quantum_efficiency_from_responsivity(1.24, 4.72)]]
    band = [[4.4, 1.0], [4.8, 1.0]]
    flat = lambda t: [[w, t] for w, _ in band]  # noqa: E731
    elements = [
        OpticalElement("isolator", [[4.47, 0.70], [4.72, 0.60]]),
        OpticalElement("variable_attenuator", flat(0.90)),
        OpticalElement("steering_mirrors", flat(0.895)),
        OpticalElement("beam_splitter_substrate", flat(0.99), after_splitter=True),
        OpticalElement("focusing_lenses", flat(0.986), after_splitter=True),
    ]
    return ChainScenario(mode, elements, detector_qe)
