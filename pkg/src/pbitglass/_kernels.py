"""Compiled sweep, energy, cluster-move and tempering loops.

All kernels work on a color-sorted relabeling of the problem (see
``engine.SweepPlan``) stored as fixed-width neighbor tables: row ``i`` of
``nbr``/``w`` lists the neighbors of vertex ``i`` padded with zero weights.
Vertices of one color are contiguous and ascending, so a plain loop over
``range(n)`` visits colors in order and never reads a same-color neighbor
that was already updated in the current phase.

Random draws are taken from a numpy ``Generator`` one per p-bit update, in
update order.
"""
import math

import numpy as np
from numba import njit


@njit(cache=True)
def _fill_table(table, fscale, tcoef, amax, bmax):
    for a in range(-amax, amax + 1):
        for b in range(-bmax, bmax + 1):
            table[a + amax, b + bmax] = math.tanh(fscale * a + tcoef * b)


@njit(cache=True)
def _row_table(x, nbr, w, h, table, amax, rng):
    n, d = nbr.shape
    de = 0.0
    for i in range(n):
        a = h[i]
        for k in range(d):
            a += w[i, k] * x[nbr[i, k]]
        u = 2.0 * rng.random() - 1.0
        si = x[i]
        new = 1 if table[int(a) + amax, 0] > u else -1
        x[i] = new
        de += (si - new) * a
    return de


@njit(cache=True)
def _row_tanh(x, nbr, w, h, fs, rng):
    n, d = nbr.shape
    de = 0.0
    for i in range(n):
        a = h[i]
        for k in range(d):
            a += w[i, k] * x[nbr[i, k]]
        u = 2.0 * rng.random() - 1.0
        si = x[i]
        new = 1 if math.tanh(fs * a) > u else -1
        x[i] = new
        de += (si - new) * a
    return de


@njit(cache=True)
def _row_trans_table(x, nbr, w, h, tnbr, tw, table, amax, bmax, rng):
    n, d = nbr.shape
    dt = tnbr.shape[1]
    de = 0.0
    for i in range(n):
        a = h[i]
        for k in range(d):
            a += w[i, k] * x[nbr[i, k]]
        b = 0.0
        for k in range(dt):
            b += tw[i, k] * x[tnbr[i, k]]
        u = 2.0 * rng.random() - 1.0
        si = x[i]
        new = 1 if table[int(a) + amax, int(b) + bmax] > u else -1
        x[i] = new
        de += (si - new) * a
    return de


@njit(cache=True)
def _row_trans_tanh(x, nbr, w, h, tnbr, tw, fs, bt, rng):
    n, d = nbr.shape
    dt = tnbr.shape[1]
    de = 0.0
    for i in range(n):
        a = h[i]
        for k in range(d):
            a += w[i, k] * x[nbr[i, k]]
        b = 0.0
        for k in range(dt):
            b += tw[i, k] * x[tnbr[i, k]]
        u = 2.0 * rng.random() - 1.0
        si = x[i]
        new = 1 if math.tanh(fs * a + bt * b) > u else -1
        x[i] = new
        de += (si - new) * a
    return de


@njit(cache=True)
def sweep_rows(spins, nbr, w, h, tnbr, tw, fscale, tcoef, n_sweeps, use_table, amax, bmax,
               rng, energies, emins, best, etrace, hist, bitpos):
    """Run ``n_sweeps`` chromatic sweeps on every row of ``spins``.

    Row ``r`` sees ``beta*I = fscale[r] * (sum w s + h) + tcoef[s] * (sum tw s)``;
    ``tcoef`` is empty when there is no transverse part. ``energies`` (fixed
    part only) is updated incrementally; optional outputs (zero-length arrays
    disable them): running minimum with its arg-min state, a per-sweep energy
    trace, and a histogram of visited state codes.
    """
    rows, n = spins.shape
    transverse = tnbr.shape[1] > 0
    annealing = tcoef.shape[0] > 0
    track = emins.shape[0] > 0
    tracing = etrace.shape[0] > 0
    record = hist.shape[0] > 0
    na = 2 * amax + 1
    nb = 2 * bmax + 1
    if use_table:
        tables = np.empty((rows, na, nb))
        for r in range(rows):
            _fill_table(tables[r], fscale[r], 0.0, amax, bmax)
    else:
        tables = np.empty((1, 1, 1))
    for s in range(n_sweeps):
        bt = tcoef[s] if annealing else 0.0
        for r in range(rows):
            x = spins[r]
            fs = fscale[r]
            if transverse:
                if use_table:
                    if annealing:
                        _fill_table(tables[r], fs, bt, amax, bmax)
                    de = _row_trans_table(x, nbr, w, h, tnbr, tw, tables[r], amax, bmax, rng)
                else:
                    de = _row_trans_tanh(x, nbr, w, h, tnbr, tw, fs, bt, rng)
            elif use_table:
                de = _row_table(x, nbr, w, h, tables[r], amax, rng)
            else:
                de = _row_tanh(x, nbr, w, h, fs, rng)
            energies[r] += de
            if track and energies[r] < emins[r]:
                emins[r] = energies[r]
                best[r, :] = x
            if tracing:
                etrace[s, r] = energies[r]
            if record:
                code = 0
                for i in range(n):
                    if x[i] > 0:
                        code |= np.int64(1) << bitpos[i]
                hist[r, code] += 1


@njit(cache=True)
def energy_row(x, nbr, w, h):
    e = 0.0
    n, d = nbr.shape
    for i in range(n):
        acc = 0.0
        for k in range(d):
            acc += w[i, k] * x[nbr[i, k]]
        e -= 0.5 * x[i] * acc + h[i] * x[i]
    return e


@njit(cache=True)
def icm_pair(xa, xb, nbr, w, rng, labels, stack):
    """Houdayer cluster move on one replica pair; returns the flipped cluster size.

    Returns 0 when the replicas agree everywhere and ``-1`` when the
    global-flip branch was taken.
    """
    n, d = nbr.shape
    for i in range(n):
        labels[i] = -1
    ncl = 0
    for i in range(n):
        if xa[i] != xb[i] and labels[i] < 0:
            top = 0
            stack[top] = i
            labels[i] = ncl
            while top >= 0:
                v = stack[top]
                top -= 1
                for k in range(d):
                    if w[v, k] == 0.0:
                        continue
                    u = nbr[v, k]
                    if labels[u] < 0 and xa[u] != xb[u]:
                        labels[u] = ncl
                        top += 1
                        stack[top] = u
            ncl += 1
    if ncl == 0:
        return 0
    c = rng.integers(0, ncl)
    size = 0
    for i in range(n):
        if labels[i] == c:
            size += 1
    if 2 * size > n:
        if rng.integers(0, 2) == 0:
            for i in range(n):
                xa[i] = -xa[i]
        else:
            for i in range(n):
                xb[i] = -xb[i]
        return -1
    for i in range(n):
        if labels[i] == c:
            xa[i] = -xa[i]
            xb[i] = -xb[i]
    return size


@njit(cache=True)
def apt_loop(spins, nbr, w, h, betas, M, m, n_attempts, sweeps_per_swap, with_icm,
             use_table, amax, rng, energies, emins, best, traj, acc, att, check):
    """Tempering loop over swap attempts; rows are ordered ``temperature * m + label``.

    Returns the largest drift between tracked and recomputed energies (only
    measured when ``check`` is set).
    """
    rows, n = spins.shape
    empty_i = np.zeros((0, 0), dtype=np.int32)
    empty_w = np.zeros((0, 0))
    empty_f = np.zeros(0)
    empty_t = np.zeros((0, 0))
    empty_h = np.zeros((0, 0), dtype=np.int64)
    empty_b = np.zeros(0, dtype=np.int64)
    fscale = np.empty(rows)
    for r in range(rows):
        fscale[r] = betas[r // m]
    labels = np.empty(n, dtype=np.int64)
    stack = np.empty(n, dtype=np.int64)
    tmp = np.empty(n, dtype=spins.dtype)
    drift = 0.0
    for t in range(1, n_attempts + 1):
        sweep_rows(spins, nbr, w, h, empty_i, empty_w, fscale, empty_f, sweeps_per_swap,
                   use_table, amax, 0, rng, energies, emins, best, empty_t, empty_h, empty_b)
        for r in range(rows):
            e = energy_row(spins[r], nbr, w, h)
            if check:
                dd = abs(e - energies[r])
                if dd > drift:
                    drift = dd
            energies[r] = e
        if with_icm:
            for temp in range(M):
                perm = rng.permutation(m)
                for q in range(0, m - 1, 2):
                    ra = temp * m + perm[q]
                    rb = temp * m + perm[q + 1]
                    icm_pair(spins[ra], spins[rb], nbr, w, rng, labels, stack)
                    for r in (ra, rb):
                        energies[r] = energy_row(spins[r], nbr, w, h)
                        if energies[r] < emins[r]:
                            emins[r] = energies[r]
                            best[r, :] = spins[r]
        start = 0 if t % 2 == 1 else 1
        for i in range(start, M - 1, 2):
            db = betas[i + 1] - betas[i]
            for lab in range(m):
                ra = i * m + lab
                rb = (i + 1) * m + lab
                x = db * (energies[rb] - energies[ra])
                u = rng.random()
                att[i, lab] += 1
                if x >= 0.0 or u < math.exp(x):
                    acc[i, lab] += 1
                    tmp[:] = spins[ra]
                    spins[ra, :] = spins[rb]
                    spins[rb, :] = tmp
                    e = energies[ra]
                    energies[ra] = energies[rb]
                    energies[rb] = e
        lo = emins[0]
        for r in range(1, rows):
            if emins[r] < lo:
                lo = emins[r]
        traj[t - 1] = lo
    return drift
