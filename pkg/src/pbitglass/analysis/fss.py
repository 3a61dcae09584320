"""Finite-size-scaling collapse ``(t_a L^-mu, rho L^b)`` of residual-energy curves."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import optimize
from sklearn.base import BaseEstimator, TransformerMixin


@dataclass(frozen=True)
class CollapseParams:
    mu_exp: float
    b_exp: float
    quality: float


def _as_xy(curve):
    if hasattr(curve, "t_a"):
        return np.asarray(curve.t_a, dtype=float), np.asarray(curve.rho, dtype=float), curve.L
    L, t, r = curve
    return np.asarray(t, dtype=float), np.asarray(r, dtype=float), L


def fss_rescale(curves, mu_exp, b_exp):
    """Each curve ``(L, t_a, rho)`` (or a ResidualCurve with ``L``) mapped to ``(L, x, y)``."""
    out = []
    for c in curves:
        t, r, L = _as_xy(c)
        if L is None:
            raise ValueError("every curve needs its size L")
        out.append((L, t * float(L) ** (-mu_exp), r * float(L) ** b_exp))
    return out


def fss_quality(rescaled):
    """Mean squared log deviation of each point from the other curves.

    Every point of every curve is compared with a piecewise-linear
    interpolation (in log-log space) of each other curve whose abscissa
    range covers it. Points with ``y <= 0`` are ignored.
    """
    logs = []
    for _, x, y in rescaled:
        keep = (x > 0) & (y > 0)
        lx, ly = np.log(x[keep]), np.log(y[keep])
        order = np.argsort(lx)
        logs.append((lx[order], ly[order]))
    if len(logs) < 2:
        raise ValueError("collapse needs at least two curves")
    total, count = 0.0, 0
    for i, (xi, yi) in enumerate(logs):
        for j, (xj, yj) in enumerate(logs):
            if i == j or xj.size < 2:
                continue
            inside = (xi >= xj[0]) & (xi <= xj[-1])
            if not inside.any():
                continue
            d = yi[inside] - np.interp(xi[inside], xj, yj)
            total += float(np.sum(d * d))
            count += int(inside.sum())
    if count == 0:
        raise ValueError("rescaled curves do not overlap")
    return total / count


def _objective(curves):
    def f(p):
        try:
            return fss_quality(fss_rescale(curves, p[0], p[1]))
        except ValueError:
            return np.inf

    return f


def fss_fit(curves, mu_grid=None, b_grid=None, fix_b=None):
    """Minimize the collapse quality over ``(mu, b)``: coarse grid, then Nelder-Mead.

    With ``fix_b`` the energy exponent is pinned and only ``mu`` is fitted.
    """
    Ls = {_as_xy(c)[2] for c in curves}
    if len(Ls) < 2:
        raise ValueError("collapse needs at least two distinct sizes")
    mu_grid = np.linspace(0.0, 12.0, 49) if mu_grid is None else np.asarray(mu_grid, dtype=float)
    f = _objective(curves)
    if fix_b is not None:
        b = float(fix_b)
        vals = [f((m, b)) for m in mu_grid]
        m0 = mu_grid[int(np.argmin(vals))]
        res = optimize.minimize(lambda p: f((p[0], b)), [m0], method="Nelder-Mead",
                                options=dict(xatol=1e-6, fatol=1e-12))
        q = float(res.fun)
        if not np.isfinite(q):
            raise ValueError("rescaled curves do not overlap")
        return CollapseParams(float(res.x[0]), b, q)
    b_grid = np.linspace(0.0, 6.0, 25) if b_grid is None else np.asarray(b_grid, dtype=float)
    vals = np.array([[f((m, b)) for b in b_grid] for m in mu_grid])
    i, j = np.unravel_index(int(np.argmin(vals)), vals.shape)
    res = optimize.minimize(f, [mu_grid[i], b_grid[j]], method="Nelder-Mead",
                            options=dict(xatol=1e-6, fatol=1e-12, maxiter=2000))
    q = float(res.fun)
    if not np.isfinite(q):
        raise ValueError("rescaled curves do not overlap")
    return CollapseParams(float(res.x[0]), float(res.x[1]), q)


class FiniteSizeCollapse(TransformerMixin, BaseEstimator):
    """``fit(curves)`` finds the exponents; ``transform(curves)`` rescales them."""

    def __init__(self, fix_b=None, mu_grid=None, b_grid=None):
        self.fix_b = fix_b
        self.mu_grid = mu_grid
        self.b_grid = b_grid

    def fit(self, X, y=None):
        p = fss_fit(X, self.mu_grid, self.b_grid, self.fix_b)
        self.params_ = p
        self.mu_exp_ = p.mu_exp
        self.b_exp_ = p.b_exp
        self.quality_ = p.quality
        return self

    def transform(self, X):
        return fss_rescale(X, self.mu_exp_, self.b_exp_)
