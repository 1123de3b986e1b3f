"""Photon-number statistics of a balanced detector.

Closed-form moments of the sum and difference photocounts behind a lossy
50/50 splitter, a Monte Carlo thinning simulator that checks them, and an
exact Fock-space beam-splitter for small photon numbers.

Loss of any kind is a beam splitter coupling in vacuum; at the level of
photon counts this is binomial thinning with survival probability ``eta``.
"""

from __future__ import annotations

import enum
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.linalg import expm

from .constants import ELEMENTARY_CHARGE

MC_MIN_WINDOWS = 10_000
FOCK_TRUNCATION = 60
_CHUNK = 1 << 16
_COUNT_LIMIT = 2**62


class Family(str, enum.Enum):
    COHERENT = "coherent"
    THERMAL = "thermal"
    SUPER_POISSONIAN = "super_poissonian"
    SUB_POISSONIAN = "sub_poissonian"
    EMPIRICAL = "empirical"


class Verdict(str, enum.Enum):
    SUB = "sub"
    AT = "at"
    ABOVE = "above"


@dataclass(frozen=True)
class PhotonEnsemble:
    """Photon-number statistics of the light per integration window.

    Use the named constructors; they keep ``variance`` consistent with
    ``family``.
    """

    mean_photons: float
    variance: float
    family: Family = Family.COHERENT
    samples: Optional[np.ndarray] = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "family", Family(self.family))
        if not (self.mean_photons >= 0 and math.isfinite(self.mean_photons)):
            raise ValueError(f"mean_photons must be finite and >= 0, got {self.mean_photons}")
        if not (self.variance >= 0 and math.isfinite(self.variance)):
            raise ValueError(f"variance must be finite and >= 0, got {self.variance}")
        fam = self.family
        if fam is Family.COHERENT and self.variance != self.mean_photons:
            raise ValueError("coherent light has variance equal to its mean")
        if fam is Family.THERMAL and self.variance != self.mean_photons * (1 + self.mean_photons):
            raise ValueError("thermal light has variance mean*(1+mean)")
        if fam is Family.SUPER_POISSONIAN and not self.variance > self.mean_photons:
            raise ValueError("super-Poissonian light needs variance > mean")
        if fam is Family.SUB_POISSONIAN and not self.variance < self.mean_photons:
            raise ValueError("sub-Poissonian light needs variance < mean")
        if fam is Family.EMPIRICAL and self.samples is None:
            raise ValueError("empirical ensemble needs samples")

    @property
    def fano(self):
        return self.variance / self.mean_photons if self.mean_photons > 0 else 1.0

    @classmethod
    def coherent(cls, mean):
        return cls(float(mean), float(mean), Family.COHERENT)

    @classmethod
    def thermal(cls, mean):
        mean = float(mean)
        return cls(mean, mean * (1.0 + mean), Family.THERMAL)

    @classmethod
    def with_fano(cls, mean, fano):
        """Ensemble with variance ``fano * mean``; Fano 1 gives coherent light."""
        if fano < 0:
            raise ValueError("Fano factor must be >= 0")
        if fano == 1:
            return cls.coherent(mean)
        family = Family.SUPER_POISSONIAN if fano > 1 else Family.SUB_POISSONIAN
        return cls(float(mean), float(fano) * float(mean), family)

    @classmethod
    def empirical(cls, samples):
        samples = np.asarray(samples)
        if samples.ndim != 1 or samples.size < 2:
            raise ValueError("empirical samples must be a 1-d array with at least two counts")
        if np.any(samples < 0) or not np.issubdtype(samples.dtype, np.integer):
            raise ValueError("empirical samples must be non-negative integer counts")
        return cls(float(samples.mean()), float(samples.var()), Family.EMPIRICAL,
                   samples.astype(np.int64))


@dataclass(frozen=True)
class EfficiencyBudget:
    """Optical transmission times detector quantum efficiency.

    Zero is accepted for either factor so that total loss can be expressed.
    """

    optical_transmission: float
    quantum_efficiency: float = 1.0

    def __post_init__(self):
        for name in ("optical_transmission", "quantum_efficiency"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {value}")

    @property
    def overall(self):
        return self.optical_transmission * self.quantum_efficiency

    @property
    def loss_coefficients(self):
        """Reflection and transmission amplitudes of the equivalent loss splitter."""
        eta1 = self.optical_transmission
        return 1j * math.sqrt(1.0 - eta1), math.sqrt(eta1)


@dataclass(frozen=True)
class BalancedOutcome:
    sum_mean: float
    sum_variance: float
    diff_mean: float
    diff_variance: float
    # standard errors, only for empirical outcomes
    sum_mean_se: Optional[float] = None
    sum_variance_se: Optional[float] = None
    diff_mean_se: Optional[float] = None
    diff_variance_se: Optional[float] = None
    windows: Optional[int] = None

    def as_dict(self):
        return {k: v for k, v in self.__dict__.items() if v is not None}


def balanced_statistics(source, budget, imbalance=0.0):
    """Exact moments of the detected sum and difference counts.

    With ``eta = budget.overall`` and a perfectly balanced splitter::

        <N+>      = eta <n>
        Var(N+)   = eta**2 Var(n) + eta (1 - eta) <n>
        <N->      = 0
        Var(N-)   = eta <n>

    A splitter with ``|R|^2 - |T|^2 = imbalance`` adds a term
    ``eta**2 imbalance**2 (Var(n) - <n>)`` to ``Var(N-)`` and makes
    ``<N->`` equal to ``eta imbalance <n>``.
    """
    mean, var = source.mean_photons, source.variance
    if mean < 0 or var < 0:
        raise ValueError("photon mean and variance must be non-negative")
    if not -1.0 <= imbalance <= 1.0:
        raise ValueError("imbalance must lie in [-1, 1]")
    eta = budget.overall
    d2 = imbalance * imbalance
    return BalancedOutcome(
        sum_mean=eta * mean,
        sum_variance=eta * eta * var + eta * (1.0 - eta) * mean,
        diff_mean=eta * imbalance * mean,
        diff_variance=eta * mean + eta * eta * d2 * (var - mean),
    )


def _draw_photons(source, rng, size):
    mean = source.mean_photons
    fam = source.family
    if fam is Family.COHERENT:
        return rng.poisson(mean, size)
    if fam is Family.THERMAL:
        return rng.negative_binomial(1, 1.0 / (1.0 + mean), size)
    if fam in (Family.SUPER_POISSONIAN, Family.SUB_POISSONIAN):
        counts = np.rint(rng.normal(mean, math.sqrt(source.variance), size))
        return np.clip(counts, 0, None).astype(np.int64)
    if fam is Family.EMPIRICAL:
        return rng.choice(source.samples, size)
    raise ValueError(f"unsupported photon family {fam!r}")


def _check_count_range(source):
    if source.family is Family.EMPIRICAL:
        top = float(source.samples.max())
    elif source.family is Family.THERMAL:
        # geometric tail: P(n > 60 mean) ~ e^-60
        top = 60.0 * (source.mean_photons + 1.0)
    else:
        top = source.mean_photons + 40.0 * math.sqrt(source.variance) + 40.0
    if top >= _COUNT_LIMIT:
        raise OverflowError(f"photon counts up to ~{top:.3g} overflow 64-bit count arithmetic")


def _simulate_chunk(source, eta, split, seed, index, size):
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(index,)))
    n = _draw_photons(source, rng, size)
    survivors = rng.binomial(n, eta)
    n3 = rng.binomial(survivors, split)
    n4 = survivors - n3
    return n3 + n4, n3 - n4


def _moments(x):
    x = x.astype(np.float64)
    n = x.size
    mean = x.mean()
    dev = x - mean
    var = float(np.mean(dev * dev))
    m4 = float(np.mean(dev**4))
    var_se = math.sqrt(max(m4 - var * var, 0.0) / n)
    return float(mean), math.sqrt(var / n), var * n / (n - 1), var_se


def monte_carlo_balanced(source, budget, windows=100_000, seed=0, imbalance=0.0, workers=1):
    """Empirical sum/difference moments from per-photon sampling.

    Every window draws a photon number from ``source``, keeps each photon
    with probability ``budget.overall`` and routes the survivors to the two
    detectors with probabilities ``(1 +/- imbalance) / 2``.

    Windows are processed in fixed chunks of 65536, chunk ``k`` seeded with
    ``SeedSequence(seed, spawn_key=(k,))``; the result is therefore the same
    for any number of ``workers``.
    """
    if windows < MC_MIN_WINDOWS:
        raise ValueError(f"need at least {MC_MIN_WINDOWS} windows, got {windows}")
    if not -1.0 <= imbalance <= 1.0:
        raise ValueError("imbalance must lie in [-1, 1]")
    if not isinstance(source.family, Family):
        raise ValueError(f"unsupported photon family {source.family!r}")
    _check_count_range(source)
    eta = budget.overall
    split = 0.5 * (1.0 + imbalance)
    sizes = [min(_CHUNK, windows - start) for start in range(0, windows, _CHUNK)]

    def job(k):
        return _simulate_chunk(source, eta, split, seed, k, sizes[k])

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(job, range(len(sizes))))
    else:
        parts = [job(k) for k in range(len(sizes))]
    total = np.concatenate([p[0] for p in parts])
    diff = np.concatenate([p[1] for p in parts])
    s_mean, s_mean_se, s_var, s_var_se = _moments(total)
    d_mean, d_mean_se, d_var, d_var_se = _moments(diff)
    return BalancedOutcome(
        sum_mean=s_mean, sum_variance=s_var, diff_mean=d_mean, diff_variance=d_var,
        sum_mean_se=s_mean_se, sum_variance_se=s_var_se,
        diff_mean_se=d_mean_se, diff_variance_se=d_var_se, windows=windows,
    )


def _splitter_unitary(n, reflectance):
    # two-mode generator a^dag b - a b^dag on the n-photon block, basis |j, n-j>
    theta = math.asin(math.sqrt(reflectance))
    gen = np.zeros((n + 1, n + 1))
    for j in range(n):
        amp = math.sqrt((j + 1) * (n - j))
        gen[j + 1, j] = amp
        gen[j, j + 1] = -amp
    return expm(theta * gen)


def fock_splitter_distribution(n_in, reflectance=0.5, truncation=FOCK_TRUNCATION):
    """Joint photon-number distribution behind a beam splitter for ``|n>|0>``.

    Evolves the input Fock state with the two-mode splitter unitary, so the
    result does not rely on the binomial formula it should reproduce.

    Returns
    -------
    dict
        ``{(n3, n4): probability}`` where ``n3`` counts reflected photons.
    """
    if n_in < 0 or int(n_in) != n_in:
        raise ValueError("photon number must be a non-negative integer")
    n_in = int(n_in)
    if n_in > truncation:
        raise ValueError(f"n_in={n_in} exceeds the Fock truncation {truncation}")
    if not 0.0 <= reflectance <= 1.0:
        raise ValueError("reflectance must lie in [0, 1]")
    if n_in == 0:
        return {(0, 0): 1.0}
    state = _splitter_unitary(n_in, reflectance)[:, n_in]
    probs = state * state
    # basis index j = photons left in the input mode (transmitted)
    return {(n_in - j, j): float(probs[j]) for j in range(n_in + 1)}


def fock_balanced_outcome(n_in, eta, reflectance=0.5, truncation=FOCK_TRUNCATION):
    """Sum/difference moments for a photon-number state, via Fock splitters only.

    Loss is a first splitter with transmittance ``eta`` whose reflected port is
    discarded; the surviving photons meet the detection splitter.
    """
    first = fock_splitter_distribution(n_in, 1.0 - eta, truncation)
    moments = np.zeros(4)
    for (_, kept), p_kept in first.items():
        if p_kept == 0.0:
            continue
        for (n3, n4), p in fock_splitter_distribution(kept, reflectance, truncation).items():
            w = p_kept * p
            s, d = n3 + n4, n3 - n4
            moments += w * np.array([s, s * s, d, d * d])
    return BalancedOutcome(
        sum_mean=moments[0], sum_variance=moments[1] - moments[0] ** 2,
        diff_mean=moments[2], diff_variance=moments[3] - moments[2] ** 2,
    )


def is_shot_noise_limited(outcome, tolerance=0.05):
    """Classify light by comparing sum and difference variances.

    The difference variance is the shot-noise reference; a sum variance
    within ``1 +/- tolerance`` of it is at the shot-noise level.
    """
    if not outcome.diff_variance > 0:
        raise ValueError("difference variance must be positive to serve as shot-noise reference")
    ratio = outcome.sum_variance / outcome.diff_variance
    if ratio < 1.0 - tolerance:
        return Verdict.SUB
    if ratio > 1.0 + tolerance:
        return Verdict.ABOVE
    return Verdict.AT


def integration_window(bandwidth):
    """Counting window matched to an analysis bandwidth, 1 / (2 B)."""
    if bandwidth <= 0:
        raise ValueError("bandwidth must be positive")
    return 0.5 / bandwidth


def outcome_from_spectra(sum_psd, diff_psd, dc_current, bandwidth):
    """Express current-noise levels as photocount moments per window.

    A white one-sided current PSD ``S`` integrated over a window ``T`` gives
    a count variance ``S T / (2 e^2)``; for shot noise ``S = 2 e I`` this
    equals the mean count ``I T / e``.
    """
    if sum_psd < 0 or diff_psd < 0 or dc_current < 0:
        raise ValueError("spectral levels and current must be non-negative")
    t = integration_window(bandwidth)
    e = ELEMENTARY_CHARGE
    return BalancedOutcome(
        sum_mean=dc_current * t / e,
        sum_variance=sum_psd * t / (2 * e * e),
        diff_mean=0.0,
        diff_variance=diff_psd * t / (2 * e * e),
    )
