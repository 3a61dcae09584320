"""Residual energies and instance-level bootstrap intervals."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import stats

AUDIT_TOL = 1e-9


def residual_energy(E, E0, n, record=None):
    """Per-spin excess energy ``(E - E0) / n``.

    When a ground-energy ``record`` is passed, every energy below its
    ``E0`` is reported to it (lowering ``E0`` and raising the audit error).
    """
    if n <= 0:
        raise ValueError("n must be positive")
    E = np.asarray(E, dtype=float)
    if record is not None:
        lo = float(E.min()) if E.size else np.inf
        record.observe(lo, tol=AUDIT_TOL * n)
    out = (E - np.asarray(E0, dtype=float)) / n
    return float(out) if out.ndim == 0 else out


def bootstrap_ci(samples, level=0.95, resamples=10000, seed=0, statistic=np.mean):
    """Percentile bootstrap interval of ``statistic`` over the samples (instances)."""
    x = np.asarray(samples, dtype=float).ravel()
    if x.size < 2:
        raise ValueError("bootstrap needs at least two samples")
    if not 0 < level < 1:
        raise ValueError("level must lie in (0, 1)")
    if np.all(x == x[0]):
        return float(x[0]), float(x[0])
    res = stats.bootstrap((x,), statistic, n_resamples=int(resamples), confidence_level=level,
                          method="percentile", random_state=np.random.default_rng(seed))
    return float(res.confidence_interval.low), float(res.confidence_interval.high)


@dataclass
class ResidualCurve:
    """Mean residual energy versus annealing time with a bootstrap band.

    ``per_instance`` (instances x times) keeps the instance-level means the
    curve was built from, so fits can be bootstrapped over instances.
    """

    t_a: np.ndarray
    rho: np.ndarray
    ci_lo: np.ndarray = None
    ci_hi: np.ndarray = None
    L: int = None
    n: int = None
    meta: dict = field(default_factory=dict)
    per_instance: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        self.t_a = np.asarray(self.t_a, dtype=float)
        self.rho = np.asarray(self.rho, dtype=float)
        if self.t_a.shape != self.rho.shape or self.t_a.ndim != 1:
            raise ValueError("t_a and rho must be 1-D and of equal length")
        if np.any(np.diff(self.t_a) <= 0):
            raise ValueError("t_a must be strictly increasing")
        self.ci_lo = self.rho.copy() if self.ci_lo is None else np.asarray(self.ci_lo, dtype=float)
        self.ci_hi = self.rho.copy() if self.ci_hi is None else np.asarray(self.ci_hi, dtype=float)
        if np.any(self.ci_lo > self.rho + 1e-12) or np.any(self.ci_hi < self.rho - 1e-12):
            raise ValueError("interval must bracket rho")
        if self.per_instance is not None:
            self.per_instance = np.asarray(self.per_instance, dtype=float)
            if self.per_instance.ndim != 2 or self.per_instance.shape[1] != self.t_a.size:
                raise ValueError("per_instance must be (instances, len(t_a))")

    def __len__(self):
        return self.t_a.size

    @classmethod
    def from_instances(cls, t_a, per_instance, L=None, n=None, level=0.95, resamples=10000,
                       seed=0, meta=None):
        """Curve from an (instances x times) table of instance-mean residual energies."""
        per_instance = np.asarray(per_instance, dtype=float)
        rho = per_instance.mean(axis=0)
        lo, hi = np.empty_like(rho), np.empty_like(rho)
        for k in range(rho.size):
            lo[k], hi[k] = bootstrap_ci(per_instance[:, k], level, resamples, seed)
        lo, hi = np.minimum(lo, rho), np.maximum(hi, rho)
        return cls(t_a, rho, lo, hi, L, n, dict(meta or {}), per_instance)

    @classmethod
    def from_energies(cls, t_a, energies, E0, n, **kw):
        """``energies`` is (instances, runs, times); ``E0`` has one entry per instance.

        Runs are averaged within each instance first, then the instance
        means are averaged and bootstrapped.
        """
        E = np.asarray(energies, dtype=float)
        if E.ndim != 3:
            raise ValueError("energies must be (instances, runs, times)")
        E0 = np.asarray(E0, dtype=float)
        per = (E.mean(axis=1) - E0[:, None]) / n
        return cls.from_instances(t_a, per, n=n, **kw)

    def subset(self, mask):
        mask = np.asarray(mask)
        per = None if self.per_instance is None else self.per_instance[:, mask]
        return ResidualCurve(self.t_a[mask], self.rho[mask], self.ci_lo[mask], self.ci_hi[mask],
                             self.L, self.n, dict(self.meta), per)
