"""Hölder exponents from exact metrics and from simulated fields."""
from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .covariance import delta_t_sq, delta_x_sq
from .spectrum import exponents

MIN_REPLICAS = 1000


@dataclass
class HolderFit:
    axis: str
    lags: np.ndarray
    values: np.ndarray
    slope: float
    intercept: float
    residual: float
    expected: float | None = None
    tol: float = 0.05

    @property
    def verdict(self):
        if self.expected is None:
            return None
        return bool(abs(self.slope - self.expected) <= self.tol)

    def to_csv(self, path):
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["axis", "lag", "value", "slope", "expected", "verdict"])
            for lag, v in zip(self.lags, self.values):
                w.writerow([self.axis, repr(float(lag)), repr(float(v)), repr(self.slope),
                            "" if self.expected is None else repr(self.expected), self.verdict])


def fit_power_law(lags, values, axis="space", expected=None, tol=0.05) -> HolderFit:
    """OLS of log value on log lag."""
    lags = np.asarray(lags, dtype=float)
    values = np.asarray(values, dtype=float)
    ok = (lags > 0) & (values > 0) & np.isfinite(values)
    if np.unique(lags[ok]).size < 3:
        raise ValueError("need at least 3 distinct positive lags for a regression")
    x, y = np.log(lags[ok]), np.log(values[ok])
    A = np.column_stack([x, np.ones_like(x)])
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = float(np.sqrt(np.mean((A @ coef - y) ** 2)))
    return HolderFit(axis, lags[ok], values[ok], float(coef[0]), float(coef[1]), resid, expected, tol)


def expected_exponent(model, axis):
    """Exponent of the squared metric: 2 alpha in space, alpha ^ 2H in time."""
    a = exponents(model).alpha
    return 2.0 * a if axis == "space" else min(a, 2.0 * model.H)


def fit_holder_exact(model, axis, lag_range, fixed=1.0, n_lags=12, tol=0.05, **kw) -> HolderFit:
    """Slope of the exact squared metric over geometric lags in ``lag_range``.

    ``fixed`` is the time t for both axes (time lags run back from t).
    """
    lo, hi = lag_range
    if n_lags < 3 or not 0 < lo < hi:
        raise ValueError("need n_lags >= 3 and 0 < lo < hi")
    if axis == "time" and hi > fixed / 2.0:
        raise ValueError("time lags must stay within t/2 of the fixed time")
    if axis == "space" and hi > math.pi:
        raise ValueError("spatial lags are circle distances <= pi")
    lags = np.geomspace(lo, hi, n_lags)
    if axis == "space":
        vals = [delta_t_sq(model, fixed, r, **kw) for r in lags]
    elif axis == "time":
        vals = [delta_x_sq(model, fixed - h, fixed, **kw) for h in lags]
    else:
        raise ValueError("axis must be 'space' or 'time'")
    return fit_power_law(lags, vals, axis, expected_exponent(model, axis), tol)


def empirical_variogram(samples, axis, component=0, time_index=-1):
    """(lags, mean squared increments) pooled over replicas and positions."""
    values = np.stack([np.asarray(s.values[component]) for s in samples])   # (R, T, X)
    cfg = samples[0].config
    if axis == "space":
        u = values[:, time_index, :]
        n_x = u.shape[1]
        ks = np.arange(1, n_x // 2 + 1)
        lags = 2.0 * np.pi * ks / n_x
        v = np.array([np.mean((np.roll(u, -k, axis=1) - u) ** 2) for k in ks])
    elif axis == "time":
        t = cfg.t_grid
        j = time_index % t.size
        lags = t[j] - t[:j]
        v = np.array([np.mean((values[:, j, :] - values[:, i, :]) ** 2) for i in range(j)])
        order = np.argsort(lags)
        lags, v = lags[order], v[order]
    else:
        raise ValueError("axis must be 'space' or 'time'")
    return lags, v


def fit_holder_empirical(samples, axis, lag_range, expected=None, tol=0.1, **kw) -> HolderFit:
    if len(samples) < MIN_REPLICAS:
        warnings.warn(f"only {len(samples)} replicas; variogram slopes may be noisy", RuntimeWarning)
    lags, v = empirical_variogram(samples, axis, **kw)
    lo, hi = lag_range
    keep = (lags >= lo * (1 - 1e-12)) & (lags <= hi * (1 + 1e-12))
    if expected is None:
        expected = expected_exponent(samples[0].config.model, axis)
    return fit_power_law(lags[keep], v[keep], axis, expected, tol)


def modulus_statistic(sample, alpha, H, window, component=0):
    """Grid supremum of the normalized space and time increments.

    Space pairs share a time, time pairs share a position; only lags up to
    ``window`` enter.
    """
    u = np.asarray(sample.values[component], dtype=float)         # (T, X)
    cfg = sample.config
    n_x = u.shape[1]
    best_x = 0.0
    for k in range(1, n_x // 2 + 1):
        r = 2.0 * np.pi * k / n_x
        if r > window:
            break
        inc = np.abs(np.roll(u, -k, axis=1) - u).max()
        best_x = max(best_x, inc / (r ** alpha * math.sqrt(math.log1p(1.0 / r))))
    best_t = 0.0
    t = cfg.t_grid
    e = min(alpha / 2.0, H)
    for i in range(t.size):
        for j in range(i + 1, t.size):
            h = t[j] - t[i]
            if h > window:
                break
            inc = np.abs(u[j] - u[i]).max()
            best_t = max(best_t, inc / (h ** e * math.sqrt(math.log1p(1.0 / h))))
    return best_x + best_t


class HolderRegressor(RegressorMixin, BaseEstimator):
    """Power-law fit ``value = exp(intercept) lag**slope`` in the sklearn style."""

    def __init__(self, expected=None, tol=0.05):
        self.expected = expected
        self.tol = tol

    def fit(self, X, y):
        X = check_array(X, ensure_2d=False).ravel()
        y = np.asarray(y, dtype=float).ravel()
        fit = fit_power_law(X, y, expected=self.expected, tol=self.tol)
        self.slope_, self.intercept_, self.residual_ = fit.slope, fit.intercept, fit.residual
        self.fit_ = fit
        return self

    def predict(self, X):
        check_is_fitted(self, "slope_")
        X = check_array(X, ensure_2d=False).ravel()
        return np.exp(self.intercept_) * X ** self.slope_

    def score(self, X, y, sample_weight=None):
        # R^2 in log space, where the regression is done
        check_is_fitted(self, "slope_")
        X = check_array(X, ensure_2d=False).ravel()
        ly = np.log(np.asarray(y, dtype=float).ravel())
        pred = self.intercept_ + self.slope_ * np.log(X)
        ss = np.sum((ly - ly.mean()) ** 2)
        return float(1.0 - np.sum((ly - pred) ** 2) / ss) if ss > 0 else 1.0
