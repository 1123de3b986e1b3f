import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.stats import binom

from bhdsim.statistics import (EfficiencyBudget, Family, PhotonEnsemble, Verdict,
                               balanced_statistics, fock_balanced_outcome,
                               fock_splitter_distribution, integration_window,
                               is_shot_noise_limited, monte_carlo_balanced, outcome_from_spectra)
from bhdsim.constants import ELEMENTARY_CHARGE


def test_lossless_coherent_is_shot_noise():
    out = balanced_statistics(PhotonEnsemble.coherent(1e6), EfficiencyBudget(1.0))
    assert out.sum_variance == 1e6
    assert out.diff_variance == 1e6
    assert out.diff_mean == 0.0


@given(st.floats(0, 1e9), st.floats(0, 1), st.floats(0.01, 1))
def test_coherent_sum_equals_diff_for_any_loss(mean, eta1, qe):
    out = balanced_statistics(PhotonEnsemble.coherent(mean), EfficiencyBudget(eta1, qe))
    eta = eta1 * qe
    assert out.sum_variance == pytest.approx(eta * mean, rel=1e-12, abs=1e-9)
    assert out.diff_variance == pytest.approx(eta * mean, rel=1e-12, abs=1e-9)


def test_thermal_example():
    # 0.23^2 * 10100 + 0.23 * 0.77 * 100 evaluated directly
    expected = 0.23**2 * 10100 + 0.23 * 0.77 * 100
    assert expected == pytest.approx(552.0)
    out = balanced_statistics(PhotonEnsemble.thermal(100), EfficiencyBudget(0.23))
    assert out.sum_variance == pytest.approx(552.0)
    assert out.diff_variance == pytest.approx(23.0)
    assert is_shot_noise_limited(out) is Verdict.ABOVE


@given(st.floats(1, 1e6), st.floats(0, 100), st.floats(0.01, 1), st.floats(-0.5, 0.5))
def test_imbalance_term(mean, fano, eta, delta):
    src = PhotonEnsemble.with_fano(mean, fano)
    out = balanced_statistics(src, EfficiencyBudget(eta), delta)
    want = eta * mean + eta**2 * delta**2 * (src.variance - mean)
    assert out.diff_variance == pytest.approx(want, rel=1e-9, abs=1e-9)
    assert out.diff_mean == pytest.approx(eta * delta * mean, rel=1e-12, abs=1e-12)


def test_rejects_bad_inputs():
    with pytest.raises(ValueError):
        PhotonEnsemble(-1.0, 1.0)
    with pytest.raises(ValueError):
        PhotonEnsemble(1.0, -1.0, Family.SUPER_POISSONIAN)
    with pytest.raises(ValueError):
        PhotonEnsemble(5.0, 4.0, Family.COHERENT)
    with pytest.raises(ValueError):
        EfficiencyBudget(1.2)
    with pytest.raises(ValueError):
        balanced_statistics(PhotonEnsemble.coherent(1.0), EfficiencyBudget(0.5), 1.5)


def test_loss_coefficients_unitary():
    r, t = EfficiencyBudget(0.3).loss_coefficients
    assert abs(r) ** 2 + abs(t) ** 2 == pytest.approx(1.0)
    assert abs(t) ** 2 == pytest.approx(0.3)


def test_verdicts():
    budget = EfficiencyBudget(0.9)
    assert is_shot_noise_limited(balanced_statistics(PhotonEnsemble.coherent(1e4), budget)) is Verdict.AT
    squeezed = balanced_statistics(PhotonEnsemble.with_fano(1e4, 0.5), budget)
    # 0.81 * 5000 + 0.09 * 1e4 = 4950 < 9000
    assert squeezed.sum_variance == pytest.approx(4950.0)
    assert is_shot_noise_limited(squeezed) is Verdict.SUB
    with pytest.raises(ValueError):
        is_shot_noise_limited(balanced_statistics(PhotonEnsemble.coherent(0), budget))


def _within(mc, exact, attr, k):
    se = getattr(mc, attr + "_se")
    return abs(getattr(mc, attr) - getattr(exact, attr)) <= k * se


def test_monte_carlo_coherent_example():
    src, budget = PhotonEnsemble.coherent(1e4), EfficiencyBudget(0.35)
    mc = monte_carlo_balanced(src, budget, 100_000, seed=1)
    assert abs(mc.diff_variance - 3500.0) <= 3 * mc.diff_variance_se


def test_monte_carlo_fano50_sum_example():
    src, budget = PhotonEnsemble.with_fano(1e4, 50), EfficiencyBudget(0.23)
    mc = monte_carlo_balanced(src, budget, 100_000, seed=2)
    assert _within(mc, balanced_statistics(src, budget), "sum_variance", 3)


@pytest.mark.parametrize("src", [PhotonEnsemble.coherent(50), PhotonEnsemble.thermal(20),
                                 PhotonEnsemble.with_fano(1e3, 3.0)])
def test_monte_carlo_total_loss(src):
    mc = monte_carlo_balanced(src, EfficiencyBudget(0.0), 10_000, seed=0)
    assert mc.sum_mean == mc.sum_variance == mc.diff_mean == mc.diff_variance == 0.0


def test_monte_carlo_deterministic_and_worker_independent():
    src, budget = PhotonEnsemble.thermal(30), EfficiencyBudget(0.5)
    a = monte_carlo_balanced(src, budget, 200_000, seed=9)
    b = monte_carlo_balanced(src, budget, 200_000, seed=9, workers=4)
    assert a == b
    c = monte_carlo_balanced(src, budget, 200_000, seed=10)
    assert c != a


def test_monte_carlo_empirical_family():
    rng = np.random.default_rng(0)
    samples = rng.poisson(200, 5000)
    src = PhotonEnsemble.empirical(samples)
    budget = EfficiencyBudget(0.6)
    mc = monte_carlo_balanced(src, budget, 100_000, seed=3)
    assert _within(mc, balanced_statistics(src, budget), "diff_variance", 4)


def test_monte_carlo_imbalance_matches_closed_form():
    src, budget = PhotonEnsemble.with_fano(1e4, 50), EfficiencyBudget(0.8)
    mc = monte_carlo_balanced(src, budget, 100_000, seed=4, imbalance=0.1)
    exact = balanced_statistics(src, budget, 0.1)
    assert _within(mc, exact, "diff_variance", 4)
    assert _within(mc, exact, "diff_mean", 4)


def test_monte_carlo_errors():
    with pytest.raises(ValueError):
        monte_carlo_balanced(PhotonEnsemble.coherent(10), EfficiencyBudget(0.5), 100)
    with pytest.raises(OverflowError):
        monte_carlo_balanced(PhotonEnsemble.coherent(1e19), EfficiencyBudget(0.5), 10_000)


def test_fock_examples():
    assert fock_splitter_distribution(1) == pytest.approx({(1, 0): 0.5, (0, 1): 0.5})
    assert fock_splitter_distribution(2) == pytest.approx({(2, 0): 0.25, (1, 1): 0.5, (0, 2): 0.25})
    assert fock_splitter_distribution(0) == {(0, 0): 1.0}
    out = fock_balanced_outcome(10, 1.0)
    assert out.diff_variance == pytest.approx(10.0, abs=1e-10)
    assert out.sum_variance == pytest.approx(0.0, abs=1e-10)


@given(st.integers(0, 60), st.floats(0, 1))
def test_fock_matches_binomial(n, r):
    dist = fock_splitter_distribution(n, r)
    pmf = binom.pmf(np.arange(n + 1), n, r)
    for k in range(n + 1):
        assert dist[(k, n - k)] == pytest.approx(pmf[k], abs=1e-12)


@given(st.integers(1, 30), st.floats(0.05, 1))
def test_fock_loss_then_split_is_eq4(n, eta):
    out = fock_balanced_outcome(n, eta)
    assert out.diff_variance == pytest.approx(eta * n, rel=1e-9)
    # number state: Var(n) = 0
    assert out.sum_variance == pytest.approx(eta * (1 - eta) * n, rel=1e-8, abs=1e-9)


def test_fock_truncation():
    with pytest.raises(ValueError):
        fock_splitter_distribution(61)


def test_spectra_to_counts():
    t = integration_window(3e6)
    assert t == pytest.approx(1 / 6e6)
    i = 2e-3
    out = outcome_from_spectra(2 * ELEMENTARY_CHARGE * i, 2 * ELEMENTARY_CHARGE * i, i, 3e6)
    assert out.diff_variance == pytest.approx(out.sum_mean)
    assert math.isclose(out.sum_mean, i * t / ELEMENTARY_CHARGE)
