"""Straight-line fits that stop where the data leave the line.

Detector responsivity and clearance both grow linearly with power until
the detector saturates. ``LinearRegionRegressor`` grows a least-squares
line from the low end of the data and declares saturation at the first
point whose residual exceeds ``threshold`` standard deviations of the
prediction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted, check_X_y, column_or_1d


@dataclass(frozen=True)
class LineFit:
    slope: float
    intercept: float
    slope_se: float
    intercept_se: float
    r2: float
    n_used: int
    linear_range: tuple
    saturation_onset: Optional[float]


def _ols(x, y):
    n = x.size
    xm, ym = x.mean(), y.mean()
    sxx = np.sum((x - xm) ** 2)
    slope = np.sum((x - xm) * (y - ym)) / sxx
    intercept = ym - slope * xm
    resid = y - (intercept + slope * x)
    ssr = float(np.sum(resid**2))
    dof = max(n - 2, 1)
    s2 = ssr / dof
    slope_var = s2 / sxx
    intercept_var = s2 * (1.0 / n + xm * xm / sxx)
    sst = float(np.sum((y - ym) ** 2))
    r2 = 1.0 - ssr / sst if sst > 0 else 1.0
    return slope, intercept, s2, slope_var, intercept_var, r2, xm, sxx


class LinearRegionRegressor(RegressorMixin, BaseEstimator):
    """Least-squares line over the pre-saturation part of a curve.

    Parameters
    ----------
    threshold : float
        Residual cut, in standard deviations, that marks the saturation onset.
    min_points : int
        Fewest data points accepted by ``fit``.
    start_fraction : float
        Fraction of the (sorted) points always treated as linear, at least
        ``min_points``.
    rel_noise_floor : float
        Lower bound on the residual scatter relative to ``max|y|`` so that
        noise-free data do not make every rounding error significant.
    """

    def __init__(self, threshold=3.0, min_points=4, start_fraction=0.3, rel_noise_floor=1e-9):
        self.threshold = threshold
        self.min_points = min_points
        self.start_fraction = start_fraction
        self.rel_noise_floor = rel_noise_floor

    def fit(self, X, y, y_err=None):
        X, y = check_X_y(X, y, ensure_2d=False, y_numeric=True)
        x = column_or_1d(X).astype(float)
        y = np.asarray(y, dtype=float)
        if x.size < self.min_points:
            raise ValueError(f"need at least {self.min_points} points, got {x.size}")
        order = np.argsort(x, kind="stable")
        x, y = x[order], y[order]
        err = None
        if y_err is not None:
            err = column_or_1d(np.asarray(y_err, dtype=float))[order]
        if np.ptp(x) == 0:
            raise ValueError("x values must not all be equal")

        floor = self.rel_noise_floor * float(np.max(np.abs(y)))
        k = min(x.size, max(self.min_points, math.ceil(self.start_fraction * x.size)))
        onset = None
        while k < x.size:
            slope, intercept, s2, slope_var, icpt_var, _, xm, sxx = _ols(x[:k], y[:k])
            if err is not None:
                noise2 = err[k] ** 2
                fit_var = (np.mean(err[:k] ** 2)) * (1.0 / k + (x[k] - xm) ** 2 / sxx)
            else:
                s2 = max(s2, floor * floor)
                noise2 = s2
                fit_var = s2 * (1.0 / k + (x[k] - xm) ** 2 / sxx)
            resid = y[k] - (intercept + slope * x[k])
            if abs(resid) > self.threshold * math.sqrt(noise2 + fit_var):
                onset = float(x[k])
                break
            k += 1
        if k < 3:
            raise ValueError("fewer than three points in the linear region")

        slope, intercept, _, slope_var, icpt_var, r2, _, _ = _ols(x[:k], y[:k])
        self.coef_ = float(slope)
        self.intercept_ = float(intercept)
        self.slope_se_ = math.sqrt(slope_var)
        self.intercept_se_ = math.sqrt(icpt_var)
        self.r2_ = float(r2)
        self.n_used_ = int(k)
        self.linear_range_ = (float(x[0]), float(x[k - 1]))
        self.saturation_onset_ = onset
        return self

    def predict(self, X):
        check_is_fitted(self, "coef_")
        x = column_or_1d(np.asarray(X, dtype=float))
        return self.intercept_ + self.coef_ * x

    def result(self):
        check_is_fitted(self, "coef_")
        return LineFit(self.coef_, self.intercept_, self.slope_se_, self.intercept_se_,
                       self.r2_, self.n_used_, self.linear_range_, self.saturation_onset_)


def linear_fit(x, y):
    """Plain least-squares line over all points, as a ``LineFit``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size < 3:
        raise ValueError("need at least three points")
    slope, intercept, _, slope_var, icpt_var, r2, _, _ = _ols(x, y)
    return LineFit(float(slope), float(intercept), math.sqrt(slope_var), math.sqrt(icpt_var),
                   float(r2), int(x.size), (float(x.min()), float(x.max())), None)
