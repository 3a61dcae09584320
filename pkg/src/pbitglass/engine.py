"""p-bit sampling core.

A p-bit ``i`` reads its local field ``I_i = sum_j J_ij s_j + h_i`` and
outputs ``sgn(tanh(beta * I_i) - r)`` with ``r`` uniform on ``[-1, 1]``, so
``P(+1) = (1 + tanh(beta * I_i)) / 2``. Sweeping colors in sequence samples
the Boltzmann distribution ``exp(-beta E) / Z``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from ._rng import make_rng
from ._validation import check_beta, check_graph, check_spins
from .coloring import Coloring, dsatur, verify_coloring

MAX_ENUMERATION_SPINS = 24

_EMPTY_I = np.zeros((0, 0), dtype=np.int32)
_EMPTY_W = np.zeros((0, 0))
_EMPTY_1 = np.zeros(0)
_EMPTY_HIST = np.zeros((0, 0), dtype=np.int64)
_EMPTY_BITS = np.zeros(0, dtype=np.int64)


def _ell(n, rows, cols, weights, perm_inv):
    """Fixed-width neighbor tables in relabeled indices (padding: self, weight 0)."""
    src = np.concatenate([rows, cols])
    dst = np.concatenate([cols, rows])
    wt = np.concatenate([weights, weights])
    src, dst = perm_inv[src], perm_inv[dst]
    order = np.lexsort((dst, src))
    src, dst, wt = src[order], dst[order], wt[order]
    deg = np.bincount(src, minlength=n)
    d = int(deg.max()) if src.size else 0
    nbr = np.repeat(np.arange(n, dtype=np.int32)[:, None], d, axis=1)
    w = np.zeros((n, d))
    start = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(deg, out=start[1:])
    slot = np.arange(src.size) - start[src]
    nbr[src, slot] = dst
    w[src, slot] = wt
    return np.ascontiguousarray(nbr), w


class SweepPlan:
    """Compiled form of (graph, coloring) consumed by the kernels.

    ``perm[p]`` is the original vertex at update position ``p``; kernels hold
    spins in that order. An optional transverse part (Trotter ring) is kept
    separately because its strength changes every sweep.
    """

    def __init__(self, n, rows, cols, J, h, coloring, t_rows=None, t_cols=None, t_w=None):
        if coloring.n != n:
            raise ValueError(f"coloring has {coloring.n} vertices, graph has {n}")
        self.n = n
        self.coloring = coloring
        self.perm, self.color_ptr = coloring.order()
        self.inv = np.empty(n, dtype=np.int64)
        self.inv[self.perm] = np.arange(n)
        self.nbr, self.w = _ell(n, rows, cols, J, self.inv)
        self.h = np.ascontiguousarray(np.asarray(h, dtype=float)[self.perm])
        if t_rows is not None and len(t_rows):
            self.tnbr, self.tw = _ell(n, t_rows, t_cols, t_w, self.inv)
        else:
            self.tnbr, self.tw = _EMPTY_I, _EMPTY_W
        self.bitpos = self.perm.astype(np.int64)
        ints = lambda a: bool(np.all(a == np.round(a)))
        self.use_table = ints(self.w) and ints(self.h) and ints(self.tw)
        if self.use_table:
            self.amax = int((np.abs(self.w).sum(axis=1) + np.abs(self.h)).max()) if n else 0
            self.bmax = int(np.abs(self.tw).sum(axis=1).max()) if self.tw.size else 0
        else:
            self.amax = self.bmax = 0

    @classmethod
    def from_graph(cls, graph, coloring=None):
        coloring = dsatur(graph) if coloring is None else coloring
        return cls(graph.n, graph.rows, graph.cols, graph.J, graph.h, coloring)

    def to_internal(self, states):
        return np.ascontiguousarray(np.asarray(states, dtype=np.int8)[..., self.perm])

    def to_external(self, states):
        out = np.empty_like(states)
        out[..., self.perm] = states
        return out

    def energies(self, internal_states):
        x = np.atleast_2d(internal_states)
        return np.array([_kernels.energy_row(row, self.nbr, self.w, self.h) for row in x])

    def run(self, internal_states, fscale, n_sweeps, rng, tcoef=None, track=False, trace=False, hist=False):
        """Advance every row of ``internal_states`` in place.

        Returns a dict with whichever diagnostics were requested.
        """
        spins = internal_states
        rows = spins.shape[0]
        fscale = np.ascontiguousarray(np.broadcast_to(np.asarray(fscale, dtype=float), (rows,)))
        tcoef = _EMPTY_1 if tcoef is None else np.ascontiguousarray(tcoef, dtype=float)
        if tcoef.size and tcoef.size != n_sweeps:
            raise ValueError("tcoef must have one entry per sweep")
        out = {}
        energies = self.energies(spins)
        if track:
            emins = energies.copy()
            best = spins.copy()
        else:
            emins = _EMPTY_1
            best = np.zeros((0, 0), dtype=np.int8)
        etrace = np.zeros((n_sweeps, rows)) if trace else _EMPTY_W
        if hist:
            if self.n > MAX_ENUMERATION_SPINS:
                raise ValueError(f"state histogram limited to n <= {MAX_ENUMERATION_SPINS}")
            h = np.zeros((rows, 1 << self.n), dtype=np.int64)
        else:
            h = _EMPTY_HIST
        _kernels.sweep_rows(spins, self.nbr, self.w, self.h, self.tnbr, self.tw, fscale, tcoef,
                            int(n_sweeps), self.use_table, self.amax, self.bmax, rng,
                            energies, emins, best, etrace, h, self.bitpos)
        out["energies"] = energies
        if track:
            out.update(emins=emins, best=best)
        if trace:
            out["etrace"] = etrace
        if hist:
            out["hist"] = h
        return out


@dataclass
class SamplerContext:
    """A graph, its coloring, an inverse temperature and a random stream."""

    graph: object
    beta: float
    coloring: Coloring = None
    rng: np.random.Generator = None
    seed: int = None
    _plan: SweepPlan = field(default=None, init=False, repr=False)

    def __post_init__(self):
        check_graph(self.graph)
        self.beta = check_beta(self.beta)
        if self.coloring is None:
            self.coloring = dsatur(self.graph)
        elif not verify_coloring(self.graph, self.coloring):
            raise ValueError("coloring is not proper for this graph")
        if self.rng is None:
            self.rng = make_rng(self.seed)

    @property
    def plan(self):
        if self._plan is None:
            self._plan = SweepPlan.from_graph(self.graph, self.coloring)
        return self._plan


def local_field(ctx, state, i):
    g = ctx.graph
    if not 0 <= i < g.n:
        raise IndexError(f"spin index {i} out of range [0, {g.n})")
    indptr, indices, weights = g.csr
    lo, hi = indptr[i], indptr[i + 1]
    s = np.asarray(state)
    return float(np.dot(weights[lo:hi], s[indices[lo:hi]]) + g.h[i])


def pbit_activation(beta, field_value, r):
    """Deterministic part of the p-bit: ``sgn(tanh(beta I) - r)`` (ties go to -1)."""
    return 1 if math.tanh(beta * field_value) > r else -1


def pbit_update(ctx, state, i):
    """Draw ``r`` on ``[-1, 1]`` from the context stream and return the new spin."""
    r = 2.0 * ctx.rng.random() - 1.0
    return pbit_activation(ctx.beta, local_field(ctx, state, i), r)


def chromatic_sweep(ctx, state):
    """One Monte Carlo sweep; returns a new state, input left untouched."""
    plan = ctx.plan
    x = plan.to_internal(check_spins(state, ctx.graph.n))[None, :]
    plan.run(x, ctx.beta, 1, ctx.rng)
    return plan.to_external(x[0])


def reference_sweep(graph, coloring, state, beta, uniforms, within_color_order=None):
    """Slow reference sweep with explicit per-vertex draws ``uniforms[v]`` on [0, 1).

    Each color phase computes every field from the state at the start of the
    phase, then sets all spins of that color simultaneously.
    """
    s = check_spins(state, graph.n).astype(np.int64).copy()
    W = graph.to_dense()
    for group in coloring.groups:
        if within_color_order is not None:
            group = within_color_order(group)
        fields = W[group] @ s + graph.h[group]
        r = 2.0 * np.asarray(uniforms)[group] - 1.0
        s[group] = np.where(np.tanh(beta * fields) > r, 1, -1)
    return s.astype(np.int8)


def run_sweeps(ctx, state, n_sweeps, record_energy=False):
    """``n_sweeps`` sweeps from ``state``; optionally returns the per-sweep energies."""
    plan = ctx.plan
    x = plan.to_internal(check_spins(state, ctx.graph.n))[None, :]
    out = plan.run(x, ctx.beta, n_sweeps, ctx.rng, trace=record_energy)
    final = plan.to_external(x[0])
    if record_energy:
        return final, out["etrace"][:, 0]
    return final


def sample_state_histogram(ctx, state, n_sweeps):
    """Counts of visited states (integer codes, bit ``i`` set when spin ``i`` is up)."""
    plan = ctx.plan
    x = plan.to_internal(check_spins(state, ctx.graph.n))[None, :]
    out = plan.run(x, ctx.beta, n_sweeps, ctx.rng, hist=True)
    return out["hist"][0]


def energy(graph, state):
    s = np.asarray(state, dtype=float)
    if s.shape[-1] != graph.n:
        raise ValueError(f"state has length {s.shape[-1]}, graph has {graph.n} spins")
    pair = s[..., graph.rows] * s[..., graph.cols]
    return -(pair @ graph.J) - s @ graph.h


def state_codes_to_spins(codes, n):
    codes = np.asarray(codes, dtype=np.int64)
    bits = (codes[..., None] >> np.arange(n)) & 1
    return (2 * bits - 1).astype(np.int8)


@dataclass
class BoltzmannDistribution:
    """Exact distribution over all ``2**n`` states, indexed by state code."""

    n: int
    beta: float
    energies: np.ndarray
    probabilities: np.ndarray
    log_Z: float

    @property
    def Z(self):
        return math.exp(self.log_Z)

    def states(self):
        return state_codes_to_spins(np.arange(1 << self.n), self.n)


def exact_boltzmann(graph, beta):
    n = graph.n
    if n > MAX_ENUMERATION_SPINS:
        raise ValueError(f"exact enumeration limited to n <= {MAX_ENUMERATION_SPINS}, got {n}")
    beta = check_beta(beta)
    codes = np.arange(1 << n, dtype=np.int64)
    E = np.zeros(codes.size)
    chunk = 1 << 16
    for lo in range(0, codes.size, chunk):
        E[lo:lo + chunk] = energy(graph, state_codes_to_spins(codes[lo:lo + chunk], n))
    logw = -beta * E
    shift = logw.max()
    w = np.exp(logw - shift)
    Zs = w.sum()
    return BoltzmannDistribution(n, beta, E, w / Zs, float(shift + math.log(Zs)))
