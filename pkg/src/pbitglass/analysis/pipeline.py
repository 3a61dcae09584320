"""From run records to curves, fits, EVT tables and collapses."""
from __future__ import annotations

import warnings
from collections import defaultdict

import numpy as np

from ..instance import GroundEnergyAuditError
from .evt import evt_parameters, evt_residual_prediction
from .fss import fss_fit
from .powerlaw import fit_power_law
from .residual import ResidualCurve, bootstrap_ci

GROUP_KEYS = ("algorithm", "L", "R", "P")


def audit_ground_energies(records, ground):
    """Lower ``E0`` wherever a record undercuts it; returns the ids that changed."""
    changed = []
    lowest = defaultdict(lambda: np.inf)
    for r in records:
        lowest[r["instance_id"]] = min(lowest[r["instance_id"]], r["best_energy"])
    for iid, e in lowest.items():
        if iid not in ground:
            raise KeyError(f"no ground energy for instance {iid}")
        try:
            ground[iid].observe(e)
        except GroundEnergyAuditError as exc:
            warnings.warn(str(exc))
            changed.append(iid)
    return changed


def group_records(records, keys=GROUP_KEYS):
    groups = defaultdict(list)
    for r in records:
        groups[tuple(r[k] for k in keys)].append(r)
    return dict(sorted(groups.items(), key=lambda kv: tuple(str(v) for v in kv[0])))


def instance_table(records, ground, value="best_energy"):
    """(instances x t_a) residual energies, runs averaged within each instance."""
    t_grid = sorted({r["t_a"] for r in records})
    ids = sorted({r["instance_id"] for r in records})
    acc = np.zeros((len(ids), len(t_grid)))
    cnt = np.zeros_like(acc)
    ii = {k: i for i, k in enumerate(ids)}
    tt = {t: k for k, t in enumerate(t_grid)}
    for r in records:
        i, k = ii[r["instance_id"]], tt[r["t_a"]]
        acc[i, k] += (r[value] - ground[r["instance_id"]].E0) / r["n"]
        cnt[i, k] += 1
    if np.any(cnt == 0):
        raise ValueError("every instance needs records at every t_a")
    return np.array(t_grid, dtype=float), acc / cnt, ids


def residual_curves(records, ground, level=0.95, resamples=10000, seed=0):
    """One ResidualCurve per (algorithm, L, R, P) group."""
    out = {}
    for key, recs in group_records(records).items():
        t, per, _ = instance_table(recs, ground)
        n = recs[0]["n"]
        meta = dict(zip(GROUP_KEYS, key))
        if per.shape[0] >= 2:
            curve = ResidualCurve.from_instances(t, per, L=meta["L"], n=n, level=level,
                                                 resamples=resamples, seed=seed, meta=meta)
        else:
            curve = ResidualCurve(t, per[0], L=meta["L"], n=n, meta=meta, per_instance=per)
        out[key] = curve
    return out


def fit_curves(curves, window="auto", level=0.95, seed=0):
    fits = {}
    for key, c in curves.items():
        try:
            fits[key] = fit_power_law(c, window, level=level, seed=seed)
        except ValueError as exc:
            fits[key] = exc
    return fits


def min_over_groups(samples, P):
    """Mean of minima over consecutive groups of ``P`` samples (remainder dropped)."""
    x = np.asarray(samples, dtype=float)
    k = x.size // P
    if k == 0:
        raise ValueError(f"need at least {P} samples, got {x.size}")
    return float(x[: k * P].reshape(k, P).min(axis=1).mean())


def evt_table(minima, E0, n, t_grid, P_values, level=0.95, resamples=10000, seed=0):
    """Measured best-of-``P`` residual energy against the Gaussian prediction.

    ``minima`` is (instances, runs, times) of per-run minimum energies.
    Returns a list of row dicts, one per ``(P, t_a)``.
    """
    m = np.asarray(minima, dtype=float)
    E0 = np.asarray(E0, dtype=float)
    rows = []
    for k, t in enumerate(t_grid):
        a, b = evt_parameters(m[:, :, k], E0, n)
        for P in P_values:
            per = np.array([(min_over_groups(m[i, :, k], P) - E0[i]) / n for i in range(m.shape[0])])
            lo, hi = bootstrap_ci(per, level, resamples, seed)
            pred = evt_residual_prediction(a, b, P) if b > 0 else a
            rows.append(dict(P=int(P), t_a=int(t), rho_measured=float(per.mean()), ci_lo=lo, ci_hi=hi,
                             rho_predicted=float(pred), a_t=a, b_t=b))
    return rows


def evt_slopes(rows, window=None):
    """Power-law exponents of measured and predicted curves for every ``P``."""
    out = []
    for P in sorted({r["P"] for r in rows}):
        sel = sorted((r for r in rows if r["P"] == P), key=lambda r: r["t_a"])
        t = np.array([r["t_a"] for r in sel], dtype=float)
        res = {"P": P}
        for name in ("measured", "predicted"):
            y = np.array([r[f"rho_{name}"] for r in sel])
            try:
                res[f"kappa_{name}"] = fit_power_law((t, y), window).kappa_f
            except ValueError:
                res[f"kappa_{name}"] = float("nan")
        out.append(res)
    return out


def collapse(curves, fix_b=None):
    """Size collapse of curves that share an algorithm (and R, P), one per L."""
    ls = [c for c in curves if c.L is not None]
    return fss_fit(ls, fix_b=fix_b)


def ground_map(ground_records):
    """Accepts a dict from ``read_ground_energies`` or a list of records."""
    if isinstance(ground_records, dict):
        return ground_records
    return {r.instance_id: r for r in ground_records}


__all__ = [
    "audit_ground_energies", "collapse", "evt_slopes", "evt_table",
    "fit_curves", "group_records", "ground_map", "instance_table", "min_over_groups",
    "residual_curves",
]
