import pytest
from hypothesis import given
from hypothesis import strategies as st

from bhdsim.optics import (ChainMode, ChainScenario, OpticalElement, WavelengthTable,
                           detection_efficiency, efficiency_budget,
                           quantum_efficiency_from_responsivity, reference_chain,
                           responsivity_from_qe, total_transmission)


def test_reference_chain_totals():
    chain = reference_chain()
    assert total_transmission(chain, 4.72) == pytest.approx(0.47, abs=0.01)
    assert total_transmission(chain, 4.47) == pytest.approx(0.55, abs=0.01)


def test_detection_efficiency_modes():
    src = reference_chain(ChainMode.SOURCE_CHARACTERIZATION)
    assert detection_efficiency(src, 4.47) == pytest.approx(0.55 * 0.41, abs=0.01)
    hom = reference_chain(ChainMode.HOMODYNE_SIGNAL_PATH)
    assert detection_efficiency(hom, 4.47) == pytest.approx(0.40, abs=0.01)
    assert efficiency_budget(hom, 4.47).overall == pytest.approx(detection_efficiency(hom, 4.47))


def test_identity_chain():
    chain = ChainScenario("source_characterization", [OpticalElement("a", 1.0)], 1.0)
    assert total_transmission(chain, 4.5) == 1.0
    assert detection_efficiency(chain, 4.5) == 1.0


def test_wavelength_outside_table():
    chain = reference_chain()
    with pytest.raises(ValueError, match="isolator"):
        total_transmission(chain, 5.0)


def test_table_interpolates():
    table = WavelengthTable([[4.0, 0.5], [5.0, 1.0]])
    assert table(4.5) == pytest.approx(0.75)
    assert table(4.0) == 0.5
    assert WavelengthTable(0.3)(9.9) == 0.3


def test_element_validation():
    with pytest.raises(ValueError):
        OpticalElement("bad", 0.0)
    with pytest.raises(ValueError):
        OpticalElement("bad", [[4.0, 1.2]])


def test_quantum_efficiency_numbers():
    assert quantum_efficiency_from_responsivity(1.24, 4.72) == pytest.approx(0.33, abs=0.01)
    assert quantum_efficiency_from_responsivity(1.48, 4.47) == pytest.approx(0.41, abs=0.01)
    assert quantum_efficiency_from_responsivity(0.0, 4.0) == 0.0
    with pytest.raises(ValueError):
        quantum_efficiency_from_responsivity(1.0, 0.0)


def test_quantum_efficiency_independent_constants():
    # unit responsivity at 1 um: h c / (1e-6 e) = 1.23984 (CODATA 2018)
    assert quantum_efficiency_from_responsivity(1.0, 1.0) == pytest.approx(1.2398419843, rel=1e-9)


@given(st.floats(1e-3, 1.0), st.floats(0.5, 20.0))
def test_qe_responsivity_round_trip(qe, wl):
    assert quantum_efficiency_from_responsivity(responsivity_from_qe(qe, wl), wl) == pytest.approx(qe)


@given(st.lists(st.floats(0.01, 1.0), min_size=1, max_size=8))
def test_transmission_is_product_and_bounded(ts):
    chain = ChainScenario("source_characterization",
                          [OpticalElement(f"e{i}", t) for i, t in enumerate(ts)], 1.0)
    total = total_transmission(chain, 4.5)
    expected = 1.0
    for t in ts:
        expected *= t
    assert total == pytest.approx(expected)
    assert 0 < total <= min(ts) + 1e-15
