"""Power-law fits ``rho ~ t_a^-kappa`` on log-log axes."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats
from sklearn.base import BaseEstimator, RegressorMixin

from .residual import ResidualCurve

KNEE_THRESHOLD = 0.01


@dataclass(frozen=True)
class PowerLawFit:
    kappa_f: float
    log_prefactor: float
    fit_window: tuple
    ci: tuple
    n_points: int
    residual_rms: float

    @property
    def prefactor(self):
        return float(np.exp(self.log_prefactor))

    def predict(self, t_a):
        return np.exp(self.log_prefactor) * np.asarray(t_a, dtype=float) ** (-self.kappa_f)


def _loglog(t, rho):
    if np.any(rho <= 0):
        raise ValueError("power-law fit needs rho > 0 inside the window")
    return np.log(t), np.log(rho)


def _line(x, y):
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    return slope, intercept, float(np.sqrt(np.mean(resid ** 2)))


def detect_window(t_a, rho, threshold=KNEE_THRESHOLD, min_points=3):
    """Largest contiguous run of points that is straight on log-log axes.

    A window qualifies when the RMS of the log residuals of its linear fit
    is below ``threshold``; among the longest qualifying windows the
    earliest one wins, since plateaus sit at long times. Returns index
    bounds ``(lo, hi)`` with ``hi`` exclusive.
    """
    t = np.asarray(t_a, dtype=float)
    r = np.asarray(rho, dtype=float)
    N = t.size
    for size in range(N, min_points - 1, -1):
        for lo in range(0, N - size + 1):
            seg = slice(lo, lo + size)
            if np.any(r[seg] <= 0):
                continue
            x, y = _loglog(t[seg], r[seg])
            if _line(x, y)[2] < threshold:
                return lo, lo + size
    raise ValueError(f"no window of >= {min_points} points is linear to {threshold} in log-log")


def _window_mask(t, window, rho, threshold):
    if window is None:
        return np.ones(t.size, dtype=bool)
    if isinstance(window, str):
        if window != "auto":
            raise ValueError(f"unknown window {window!r}")
        lo, hi = detect_window(t, rho, threshold)
        mask = np.zeros(t.size, dtype=bool)
        mask[lo:hi] = True
        return mask
    t_min, t_max = window
    return (t >= t_min) & (t <= t_max)


def fit_power_law(curve, window=None, level=0.95, resamples=2000, seed=0, threshold=KNEE_THRESHOLD):
    """Least squares on ``(ln t_a, ln rho)``; ``kappa_f`` is minus the slope.

    ``window`` is ``None`` (all points), ``(t_min, t_max)`` or ``"auto"``
    (knee detector). The interval comes from resampling instances when the
    curve carries its per-instance table, otherwise from the regression
    standard error.
    """
    if not isinstance(curve, ResidualCurve):
        t, r = curve
        curve = ResidualCurve(t, r)
    mask = _window_mask(curve.t_a, window, curve.rho, threshold)
    if mask.sum() < 3:
        raise ValueError("power-law fit needs at least 3 points in the window")
    t = curve.t_a[mask]
    x, y = _loglog(t, curve.rho[mask])
    slope, intercept, rms = _line(x, y)
    if curve.per_instance is not None and curve.per_instance.shape[0] >= 2:
        per = curve.per_instance[:, mask]
        rng = np.random.default_rng(seed)
        k = per.shape[0]
        kap = []
        for _ in range(int(resamples)):
            m = per[rng.integers(0, k, k)].mean(axis=0)
            if np.all(m > 0):
                kap.append(-np.polyfit(x, np.log(m), 1)[0])
        a = (1 - level) / 2
        ci = tuple(float(v) for v in np.quantile(kap, [a, 1 - a])) if kap else (np.nan, np.nan)
    else:
        if x.size > 2:
            lr = stats.linregress(x, y)
            q = stats.t.ppf((1 + level) / 2, x.size - 2)
            ci = (float(-slope - q * lr.stderr), float(-slope + q * lr.stderr))
        else:
            ci = (np.nan, np.nan)
    return PowerLawFit(float(-slope), float(intercept), (float(t[0]), float(t[-1])), ci,
                       int(mask.sum()), rms)


class PowerLawRegressor(RegressorMixin, BaseEstimator):
    """``fit(t_a, rho)`` / ``predict(t_a)`` for the power law ``A * t_a^-kappa``."""

    def __init__(self, window=None, threshold=KNEE_THRESHOLD):
        self.window = window
        self.threshold = threshold

    def fit(self, X, y):
        t = np.asarray(X, dtype=float).ravel()
        order = np.argsort(t)
        fit = fit_power_law(ResidualCurve(t[order], np.asarray(y, dtype=float)[order]),
                            self.window, threshold=self.threshold)
        self.fit_ = fit
        self.kappa_ = fit.kappa_f
        self.prefactor_ = fit.prefactor
        return self

    def predict(self, X):
        return self.fit_.predict(np.asarray(X, dtype=float).ravel())
