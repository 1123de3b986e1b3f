import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from bhdsim.constants import ELEMENTARY_CHARGE
from bhdsim.frontend import (Calibration, DetectorModel, LightSource, ModulationSpec, TraceRecord,
                             source_for_incident_power, synthesize_balanced_traces)
from bhdsim.optics import reference_chain
from bhdsim.spectral import (Spectrum, average_spectra, band_average, clearance, clearance_spectrum,
                             clearance_vs_power_fit, cmrr_at_harmonics, cutoff_minus_3db,
                             efficiency_from_clearance, refer_to_current, shot_noise_psd,
                             sum_diff_inpsd, welch_array, welch_psd)


def _trace(x, fs=1e3, cal=None):
    return TraceRecord(fs, len(x) / fs, np.asarray(x, float), calibration=cal or Calibration(1.0, 0.0))


def test_white_noise_level():
    sigma, fs, seg = 2.0, 1e3, 256
    x = np.random.default_rng(0).normal(0, sigma, seg * 501)
    spec = welch_array(x, fs, seg)
    assert spec.averages >= 1000
    level = spec.psd[1:-1].mean()
    assert level == pytest.approx(2 * sigma**2 / fs, rel=0.03)


@given(st.integers(0, 2**32 - 1))
def test_unit_variance_noise_integrates_to_one(seed):
    x = np.random.default_rng(seed).standard_normal(1 << 18)
    spec = welch_array(x, 1.0, 1024)
    assert spec.psd.sum() * spec.resolution == pytest.approx(1.0, rel=0.01)


def test_tone_power():
    fs, seg, amp = 1024.0, 1024, 3.0
    t = np.arange(seg * 16) / fs
    spec = welch_array(amp * np.sin(2 * np.pi * 100.0 * t), fs, seg)
    k = 100
    power = spec.psd[k - 2:k + 3].sum() * spec.resolution
    assert power == pytest.approx(amp**2 / 2, rel=0.01)


def test_zero_trace():
    spec = welch_psd(_trace(np.zeros(4096)), 512)
    assert np.all(spec.psd == 0)


def test_welch_errors():
    with pytest.raises(ValueError, match="shorter"):
        welch_array(np.zeros(100), 1.0, 128)
    with pytest.raises(ValueError, match="power of two"):
        welch_array(np.zeros(1000), 1.0, 100)


def test_identical_traces():
    x = np.random.default_rng(1).standard_normal(1 << 14)
    s, d = sum_diff_inpsd(_trace(x), _trace(x), 512)
    single = welch_psd(_trace(x), 512)
    assert np.allclose(d.psd, 0)
    assert np.allclose(s.psd, 4 * single.psd)


def test_independent_traces():
    rng = np.random.default_rng(2)
    a, b = rng.standard_normal((2, 1 << 16))
    s, d = sum_diff_inpsd(_trace(a), _trace(b), 512)
    single = welch_psd(_trace(a), 512)
    assert s.psd[1:-1].mean() == pytest.approx(d.psd[1:-1].mean(), rel=0.03)
    assert s.psd[1:-1].mean() == pytest.approx(2 * single.psd[1:-1].mean(), rel=0.03)


@given(st.integers(0, 2**32 - 1), st.floats(-3, 3))
def test_sum_diff_identity(seed, mix):
    rng = np.random.default_rng(seed)
    a = rng.standard_normal(4096)
    b = mix * a + rng.standard_normal(4096)
    s, d = sum_diff_inpsd(_trace(a), _trace(b), 256)
    p1, p2 = welch_psd(_trace(a), 256), welch_psd(_trace(b), 256)
    assert np.allclose(s.psd + d.psd, 2 * (p1.psd + p2.psd), rtol=1e-9, atol=1e-15)


def test_pair_mismatch_errors():
    with pytest.raises(ValueError, match="sample-rate"):
        sum_diff_inpsd(_trace(np.zeros(1024), 1e3), _trace(np.zeros(1024), 2e3), 256)
    with pytest.raises(ValueError, match="length"):
        sum_diff_inpsd(_trace(np.zeros(1024)), _trace(np.zeros(2048)), 256)


def test_average_spectra_weights_segments():
    f = np.arange(4.0)
    a = Spectrum(f, np.ones(4), 1.0, 1)
    b = Spectrum(f, np.full(4, 4.0), 1.0, 3)
    avg = average_spectra([a, b])
    assert np.allclose(avg.psd, 3.25)
    assert avg.averages == 4
    with pytest.raises(ValueError):
        average_spectra([a, Spectrum(np.arange(5.0), np.ones(5), 1.0, 1)])


def test_refer_to_current_divides_gain():
    f = np.linspace(0, 1e8, 11)
    spec = Spectrum(f, np.full(11, 4.0), 1e7, 1)
    out = refer_to_current(spec, [Calibration(2.0, 0.0), Calibration(2.0, 0.0)])
    assert np.allclose(out.psd, 1.0)
    assert out.unit == "A^2/Hz"


def test_shot_noise_psd():
    assert shot_noise_psd(1e-3) == pytest.approx(3.204e-22, rel=1e-3)
    assert shot_noise_psd(0.0) == 0.0
    assert shot_noise_psd(1e-3) == 2 * ELEMENTARY_CHARGE * 1e-3
    with pytest.raises(ValueError):
        shot_noise_psd(-1.0)


def test_band_average_bounds():
    f = np.linspace(0, 100e6, 1001)
    spec = Spectrum(f, np.ones_like(f), 1e5, 1)
    assert band_average(spec).value == 1.0
    assert band_average(spec).bins == 31
    with pytest.raises(ValueError):
        band_average(spec, 99.5e6, 3e6)


def test_synthesized_sum_above_diff_with_noisy_lo():
    det = DetectorModel(1.24, saturation_power=2.4e-3)
    chain = reference_chain()
    src = source_for_incident_power(LightSource(4.72, 1.0, fano=50.0), chain, 2.2e-3)
    t1, t2 = synthesize_balanced_traces(src, chain, (det, det), 0.002, duration=(1 << 18) / 625e6)
    s, d = sum_diff_inpsd(t1, t2, 4096)
    for center in np.linspace(2e6, 98e6, 17):
        assert band_average(s, center, 4e6).value > 1.5 * band_average(d, center, 4e6).value


# CMRR on common-mode square waves recorded with gains g (1 -/+ eps / 2)

def _cm_pair(eps, fs=62.5e6, n=1 << 20, seed=0, noise=1e-3):
    rng = np.random.default_rng(seed)
    t = np.arange(n) / fs
    square = np.where(np.mod(t * 1e6, 1.0) < 0.5, 1.0, -1.0)
    common = square + 0.05 * rng.standard_normal(n)
    a = (1 - eps / 2) * common + noise * rng.standard_normal(n)
    b = (1 + eps / 2) * common + noise * rng.standard_normal(n)
    return _trace(a, fs), _trace(b, fs)


@pytest.mark.parametrize("eps", [0.01, 0.03, 0.1, 0.3])
def test_cmrr_law(eps):
    s, d = sum_diff_inpsd(*_cm_pair(eps), 16384)
    points = cmrr_at_harmonics(s, d, 1e6, 5)
    assert [p.harmonic for p in points] == [1, 3, 5, 7, 9]
    for p in points:
        assert p.status == "ok"
        assert p.cmrr_db == pytest.approx(20 * math.log10(2 / eps), abs=1.0)


def test_cmrr_ratio_convention_example():
    # g2 / g1 = 1.1: exact leakage 20 log10(2.1 / 0.1) = 26.44 dB
    fs, n = 62.5e6, 1 << 20
    t = np.arange(n) / fs
    square = np.where(np.mod(t * 1e6, 1.0) < 0.5, 1.0, -1.0)
    noise = np.random.default_rng(3).standard_normal((2, n)) * 1e-3
    s, d = sum_diff_inpsd(_trace(square + noise[0], fs), _trace(1.1 * square + noise[1], fs), 16384)
    for p in cmrr_at_harmonics(s, d, 1e6, 3):
        assert p.cmrr_db == pytest.approx(26.0, abs=1.0)


def test_cmrr_ideal_balance_is_floor_limited_above_40db():
    det = DetectorModel(1.24, saturation_power=2.4e-3)
    chain = reference_chain()
    src = source_for_incident_power(LightSource(4.72, 1.0), chain, 2e-3)
    mod = ModulationSpec("square_wave", 1e6, 0.1)
    t1, t2 = synthesize_balanced_traces(src, chain, (det, det), 0.0, mod)
    s, d = sum_diff_inpsd(t1, t2)
    first = cmrr_at_harmonics(s, d, 1e6, 1)[0]
    assert first.cmrr_db > 40
    assert first.status == "floor_limited"


def test_cmrr_below_floor_and_resolution():
    rng = np.random.default_rng(0)
    a, b = rng.standard_normal((2, 1 << 16))
    s, d = sum_diff_inpsd(_trace(a, 62.5e6), _trace(b, 62.5e6), 4096)
    assert cmrr_at_harmonics(s, d, 1e6, 1)[0].status == "below_floor"
    with pytest.raises(ValueError, match="resolvable"):
        cmrr_at_harmonics(s, d, 1e3, 1)


@pytest.mark.parametrize("c, eq, eff", [(7, 0.857, 0.351), (6, 0.833, None), (8, 0.875, 0.359)])
def test_clearance_to_efficiency(c, eq, eff):
    equivalent, effective = efficiency_from_clearance(c, 0.41)
    assert equivalent == pytest.approx(eq, abs=5e-4)
    if eff is not None:
        assert effective == pytest.approx(eff, abs=5e-4)


def test_clearance_ratio_and_errors():
    f = np.linspace(0, 100e6, 1001)
    diff = Spectrum(f, np.full_like(f, 7.0), 1e5, 1)
    bg = Spectrum(f, np.ones_like(f), 1e5, 1)
    rep = clearance(diff, bg, quantum_efficiency=0.41)
    assert rep.clearance == pytest.approx(7.0)
    assert rep.effective_quantum_efficiency == pytest.approx(6 / 7 * 0.41)
    assert np.allclose(clearance_spectrum(diff, bg).psd, 7.0)
    with pytest.raises(ValueError, match="zero"):
        clearance(diff, Spectrum(f, np.zeros_like(f), 1e5, 1))


def test_clearance_fit_exact_line():
    p = np.linspace(0.25e-3, 2e-3, 8)
    fit = clearance_vs_power_fit(np.column_stack([p, 3000.0 * p]))
    assert fit.slope == pytest.approx(3000.0)
    assert fit.saturation_onset is None
    with pytest.raises(ValueError):
        clearance_vs_power_fit([[1e-3, 3.0], [2e-3, 6.0]])


def test_clearance_fit_flags_deviation():
    p = np.linspace(0.25e-3, 3e-3, 12)
    c = 1 + 3000.0 * np.minimum(p, 2e-3)
    fit = clearance_vs_power_fit(np.column_stack([p, c]), np.full(12, 0.05))
    assert fit.saturation_onset == pytest.approx(2.25e-3)
    assert fit.linear_range[1] == pytest.approx(2e-3)


def _grid(df=625e6 / 16384, fmax=312.5e6):
    return np.arange(0, fmax, df), df


def test_cutoff_single_pole():
    f, df = _grid()
    spec = Spectrum(f, 1 / (1 + (f / 120e6) ** 2), df, 1)
    assert abs(cutoff_minus_3db(spec, (1e6, 2e6)) - 120e6) <= df


def test_cutoff_two_pole():
    f, df = _grid()
    spec = Spectrum(f, 1 / (1 + (f / 50e6) ** 2) ** 2, df, 1)
    expected = 50e6 * math.sqrt(math.sqrt(2) - 1)
    assert expected == pytest.approx(32.18e6, abs=0.01e6)
    # no AC coupling here, so the reference can sit well below the roll-off
    assert abs(cutoff_minus_3db(spec, (0.1e6, 0.5e6)) - expected) <= df


def test_cutoff_flat_spectrum():
    f, df = _grid()
    with pytest.raises(ValueError, match="no crossing"):
        cutoff_minus_3db(Spectrum(f, np.ones_like(f), df, 1))


def test_cutoff_ignores_narrow_spur():
    f, df = _grid()
    psd = 1 / (1 + (f / 120e6) ** 2)
    psd[np.argmin(abs(f - 100e6))] *= 1e3
    psd[np.argmin(abs(f - 60e6)) + np.arange(3)] = 0.0
    assert abs(cutoff_minus_3db(Spectrum(f, psd, df, 1), (1e6, 2e6)) - 120e6) <= df


def test_cutoff_rejects_tone_in_flat_band():
    f, df = _grid(625e6 / 512)
    psd = np.ones_like(f)
    psd[4] = 10.0
    psd[6:] = 0.3
    with pytest.raises(ValueError, match="not flat"):
        cutoff_minus_3db(Spectrum(f, psd, df, 1), (1e6, 5e6))
