"""Minimum of ``P`` i.i.d. Gaussians: CDF, median, asymptotics, block fits.

For the median the form ``mu + sqrt(2) sigma erfcinv(2^((P-1)/P))`` loses
precision because the argument approaches 2; it is evaluated through the
reflection ``erfcinv(2 - e) = -erfcinv(e)`` with ``e = 2 (1 - 2^(-1/P))``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import special
from sklearn.base import BaseEstimator

LN2 = np.log(2.0)
_C0 = np.log(2.0 / (np.pi * np.log(4.0) ** 2))


def _check_sigma_P(sigma, P):
    if np.any(np.asarray(sigma) <= 0):
        raise ValueError("sigma must be positive")
    if np.any(np.asarray(P) < 1):
        raise ValueError("P must be >= 1")


def evt_min_cdf(x, mu, sigma, P):
    """``F_P(x) = 1 - [1 - Phi((x - mu) / sigma)]^P``."""
    _check_sigma_P(sigma, P)
    z = (np.asarray(x, dtype=float) - mu) / sigma
    out = -np.expm1(np.asarray(P, dtype=float) * special.log_ndtr(-z))
    return float(out) if out.ndim == 0 else out


def _median_offset(P):
    """``sqrt(2) erfcinv(2^((P-1)/P))`` as a non-positive number of sigmas."""
    eps = -2.0 * np.expm1(-LN2 / np.asarray(P, dtype=float))
    return -np.sqrt(2.0) * special.erfcinv(eps)


def evt_median(mu, sigma, P):
    """Median of the minimum of ``P`` draws from ``N(mu, sigma^2)``."""
    _check_sigma_P(sigma, P)
    out = mu + sigma * _median_offset(P)
    return float(out) if np.ndim(out) == 0 else out


def evt_asymptotic_median(mu, sigma, P):
    """Large-``P`` forms of the median: ``(full, leading)``.

    ``leading = mu - sigma sqrt(2 ln P)``; ``full`` keeps the next terms,
    ``mu - sigma sqrt(A - ln A)`` with
    ``A = ln(2 / (pi (ln 4)^2)) + ln 2 / P + 2 ln P``.
    """
    _check_sigma_P(sigma, P)
    P = np.asarray(P, dtype=float)
    if np.any(P < 2):
        raise ValueError("asymptotic forms need P >= 2")
    A = _C0 + LN2 / P + 2.0 * np.log(P)
    full = mu - sigma * np.sqrt(A - np.log(A))
    leading = mu - sigma * np.sqrt(2.0 * np.log(P))
    if full.ndim == 0:
        return float(full), float(leading)
    return full, leading


def evt_residual_prediction(a_t, b_t, P):
    """Predicted best-of-``P`` residual energy from run-level mean ``a_t`` and spread ``b_t``."""
    if np.any(np.asarray(b_t) <= 0):
        raise ValueError("b_t must be positive")
    if np.any(np.asarray(P) < 1):
        raise ValueError("P must be >= 1")
    out = np.asarray(a_t, dtype=float) + np.asarray(b_t, dtype=float) * _median_offset(P)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class EvtModel:
    mu: float
    sigma: float
    P: int = 1
    a_t: float = None
    b_t: float = None

    def __post_init__(self):
        _check_sigma_P(self.sigma, self.P)

    def cdf(self, x):
        return evt_min_cdf(x, self.mu, self.sigma, self.P)

    def median(self, P=None):
        return evt_median(self.mu, self.sigma, self.P if P is None else P)


def fit_gaussian(samples):
    """Sample mean and (ddof=1) standard deviation."""
    x = np.asarray(samples, dtype=float).ravel()
    if x.size < 2:
        raise ValueError("need at least two samples")
    return float(x.mean()), float(x.std(ddof=1))


def evt_parameters(minima, E0, n):
    """Instance-averaged residual mean ``a_t`` and spread ``b_t``.

    ``minima`` is (instances, samples): per-run (or per-block) minimum
    energies at one annealing time; each instance is fitted separately.
    """
    m = np.asarray(minima, dtype=float)
    if m.ndim != 2 or m.shape[1] < 2:
        raise ValueError("minima must be (instances, >= 2 samples)")
    mu = m.mean(axis=1)
    sd = m.std(axis=1, ddof=1)
    E0 = np.broadcast_to(np.asarray(E0, dtype=float), mu.shape)
    return float(np.mean((mu - E0) / n)), float(np.mean(sd / n))


@dataclass(frozen=True)
class BlockFit:
    block_size: int
    P: int
    predictions: dict
    rho_actual: float


def evt_block_fit(per_replica_energies, rho_actual, candidate_blocks, E0, n, rtol=0.02):
    """Smallest block size whose EVT prediction matches the measured residual energy.

    ``per_replica_energies`` is (instances, runs, R) at one annealing time.
    For block size ``B`` the replicas are cut into ``P = R / B`` contiguous
    blocks, the block minima give ``(a_t, b_t)`` and the prediction for
    ``P`` blocks is compared to ``rho_actual`` (computed from the best
    replica of each run when ``None``). Non-divisors of ``R`` are skipped.

    Block sizes are tried in increasing order and the first one within
    ``rtol`` of ``rho_actual`` wins. ``B = R`` reproduces the measurement
    by construction, so it is the fallback when nothing smaller matches;
    if no candidate is within tolerance the closest one is returned.
    """
    E = np.asarray(per_replica_energies, dtype=float)
    if E.ndim != 3:
        raise ValueError("per_replica_energies must be (instances, runs, R)")
    I, runs, R = E.shape
    blocks = [int(b) for b in candidate_blocks if int(b) >= 1 and R % int(b) == 0]
    if not blocks:
        raise ValueError("no candidate block size divides R")
    E0 = np.broadcast_to(np.asarray(E0, dtype=float), (I,))
    if rho_actual is None:
        rho_actual = float(np.mean((E.min(axis=2).mean(axis=1) - E0) / n))
    preds = {}
    for B in blocks:
        P = R // B
        bm = E.reshape(I, runs, P, B).min(axis=3).reshape(I, runs * P)
        if bm.shape[1] < 2:
            continue
        a, b = evt_parameters(bm, E0, n)
        preds[B] = evt_residual_prediction(a, b, P) if b > 0 else a
    if not preds:
        raise ValueError("not enough samples to fit any block size")
    scale = max(abs(rho_actual), 1e-300)
    close = [B for B in sorted(preds) if abs(preds[B] - rho_actual) <= rtol * scale]
    best = close[0] if close else min(preds, key=lambda B: (abs(preds[B] - rho_actual), B))
    return BlockFit(best, R // best, preds, float(rho_actual))


class GaussianMinimumModel(BaseEstimator):
    """Fits ``N(mu, sigma)`` to per-run minima; ``predict(P)`` gives the best-of-``P`` median."""

    def fit(self, X, y=None):
        self.mu_, self.sigma_ = fit_gaussian(X)
        return self

    def predict(self, P):
        return evt_median(self.mu_, self.sigma_, np.asarray(P))

    def cdf(self, x, P=1):
        return evt_min_cdf(x, self.mu_, self.sigma_, P)
