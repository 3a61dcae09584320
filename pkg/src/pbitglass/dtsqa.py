"""Discrete-time simulated quantum annealing on a Trotter replica ring.

The transverse-field model is replaced by its classical Suzuki-Trotter
image: ``R`` copies of the problem with couplings ``J_ij / R``, where copy
``k`` couples to copies ``k +- 1 (mod R)`` through ``J_perp``. The ring
coupling grows as the transverse field ``Gamma'`` is annealed to zero::

    J_perp = -(1 / beta) * ln tanh(beta * Gamma' / R)

Replica spin ``(i, k)`` has flat index ``k * n + i``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator

from ._rng import make_rng
from ._validation import check_graph, check_positive_int
from .coloring import dsatur, extend_coloring_replicas
from .engine import SweepPlan, energy
from .instance import CouplingGraph

DEFAULT_BETA_PER_REPLICA = 0.5
DEFAULT_GAMMA_START = 3.0


def jperp(gamma_prime, beta, R):
    """Ring coupling for transverse field ``gamma_prime``; works on arrays too."""
    g = np.asarray(gamma_prime, dtype=float)
    if np.any(g <= 0) or not np.all(np.isfinite(g)):
        raise ValueError("gamma_prime must be positive and finite (clamp the schedule)")
    if beta <= 0:
        raise ValueError("beta must be positive")
    check_positive_int(R, "R")
    out = -np.log(np.tanh(beta * g / R)) / beta
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class AnnealSchedule:
    """Linear ``Gamma'(t)`` from ``gamma_start`` to ``gamma_end`` over ``t_a`` sweeps.

    The value for sweep ``t`` (1-based) is floored at ``epsilon_clamp``,
    which defaults to one linear step, ``gamma_start / t_a``, so the last
    sweep never hits the singular ``Gamma' = 0``.
    """

    t_a: int
    gamma_start: float = DEFAULT_GAMMA_START
    gamma_end: float = 0.0
    epsilon_clamp: float = None

    def __post_init__(self):
        check_positive_int(self.t_a, "t_a")
        if not self.gamma_start > 0:
            raise ValueError("gamma_start must be positive")
        if self.epsilon_clamp is None:
            object.__setattr__(self, "epsilon_clamp", self.gamma_start / self.t_a)
        if not self.epsilon_clamp > 0:
            raise ValueError("epsilon_clamp must be positive")

    def gamma(self, t):
        t = np.asarray(t, dtype=float)
        g = self.gamma_start + (self.gamma_end - self.gamma_start) * t / self.t_a
        return np.maximum(g, self.epsilon_clamp)

    def gammas(self):
        return self.gamma(np.arange(1, self.t_a + 1))


@dataclass
class TrotterStack:
    """R replicas of ``base`` with their states and the current ring coupling."""

    base: CouplingGraph
    R: int
    beta: float = None
    states: np.ndarray = None
    J_perp: float = None

    def __post_init__(self):
        check_graph(self.base)
        self.R = check_positive_int(self.R, "R")
        if self.beta is None:
            self.beta = DEFAULT_BETA_PER_REPLICA * self.R
        if self.J_perp is None:
            self.J_perp = jperp(DEFAULT_GAMMA_START, self.beta, self.R)
        if self.states is None:
            self.states = np.ones((self.R, self.base.n), dtype=np.int8)
        self.states = np.asarray(self.states, dtype=np.int8).reshape(self.R, self.base.n)

    @property
    def n(self):
        return self.base.n

    @property
    def j_parallel_scale(self):
        return 1.0 / self.R

    @property
    def beta_per_replica(self):
        return self.beta / self.R

    def network(self):
        """Materialized ``n*R``-spin graph with the current ``J_perp``."""
        return _materialize(self.base, self.R, self.J_perp)

    def classical_energy(self):
        """Energy of the stacked state under the Trotter Hamiltonian."""
        return float(energy(self.network(), self.states.ravel()))

    def replica_energies(self):
        """Per-replica energies under the original (unscaled) couplings."""
        return energy(self.base, self.states)


def _ring_edges(n, R):
    """Ring bonds as (rows, cols, multiplicity); R=2 collapses to one doubled bond."""
    if R == 1:
        z = np.zeros(0, dtype=np.int64)
        return z, z, np.zeros(0)
    i = np.arange(n)
    if R == 2:
        return i, i + n, np.full(n, 2.0)
    k = np.arange(R)
    a = (k[:, None] * n + i[None, :]).ravel()
    b = (((k[:, None] + 1) % R) * n + i[None, :]).ravel()
    lo, hi = np.minimum(a, b), np.maximum(a, b)
    return lo, hi, np.ones(lo.size)


def _replicated_edges(base, R):
    off = (np.arange(R) * base.n)[:, None]
    rows = (base.rows[None, :] + off).ravel()
    cols = (base.cols[None, :] + off).ravel()
    return rows, cols, np.tile(base.J, R)


def _materialize(base, R, j_perp):
    rows, cols, J = _replicated_edges(base, R)
    tr, tc, mult = _ring_edges(base.n, R)
    return CouplingGraph(
        base.n * R,
        np.concatenate([rows, tr]),
        np.concatenate([cols, tc]),
        np.concatenate([J / R, mult * j_perp]),
        np.tile(base.h, R) / R,
    )


def build_trotter_network(base, R, beta=None, J_perp=None):
    """Return ``(stack, graph)``; ``graph`` carries ``J_ij / R`` and the ring at ``J_perp``.

    ``J_perp`` defaults to its value at the start of the default schedule.
    """
    stack = TrotterStack(base, R, beta=beta, J_perp=J_perp)
    return stack, stack.network()


class TrotterNetwork:
    """Compiled replica network, reusable across runs of the same ``(base, R)``.

    The sweep plan stores the unscaled couplings and a unit-weight ring; the
    kernel applies ``beta / R`` to the former and ``beta * J_perp(t)`` to the
    latter, which keeps the fields integral for EA instances.
    """

    def __init__(self, base, R, coloring=None):
        check_graph(base)
        self.base = base
        self.R = check_positive_int(R, "R")
        base_coloring = dsatur(base) if coloring is None else coloring
        self.coloring = extend_coloring_replicas(base_coloring, self.R, base)
        rows, cols, J = _replicated_edges(base, self.R)
        tr, tc, mult = _ring_edges(base.n, self.R)
        self.plan = SweepPlan(base.n * self.R, rows, cols, J, np.tile(base.h, self.R),
                              self.coloring, tr, tc, mult)

    @property
    def n_spins(self):
        return self.base.n * self.R


@dataclass(frozen=True)
class DtsqaConfig:
    beta_per_replica: float = DEFAULT_BETA_PER_REPLICA
    gamma_start: float = DEFAULT_GAMMA_START
    epsilon_clamp: float = None
    record_correlation: bool = False

    def __post_init__(self):
        if not self.beta_per_replica > 0:
            raise ValueError("beta_per_replica must be positive")

    def schedule(self, t_a):
        return AnnealSchedule(t_a, self.gamma_start, 0.0, self.epsilon_clamp)


@dataclass
class DtsqaResult:
    best_energy: float
    per_replica_energies: np.ndarray
    best_state: np.ndarray
    seed: int
    t_a: int
    R: int = 1
    run_id: int = 0
    correlation: np.ndarray = None
    final_states: np.ndarray = field(default=None, repr=False)

    @property
    def best_replica(self):
        return int(np.argmin(self.per_replica_energies))


def run_dtsqa(base, R, t_a, seed=0, config=None, run_id=0, network=None, keep_states=False):
    """One annealing run; returns the best replica under the unscaled couplings.

    All ``R * n`` spins start uniformly at random. Before sweep ``t`` the
    ring coupling is set from ``Gamma'(t)``, then one chromatic sweep of the
    whole replica network is done at inverse temperature ``beta``.
    """
    config = config or DtsqaConfig()
    t_a = check_positive_int(t_a, "t_a")
    if network is None:
        network = TrotterNetwork(base, R)
    elif network.R != R or (network.base is not base and network.base != base):
        raise ValueError("network was compiled for a different (base, R)")
    R = network.R
    n = base.n
    beta = config.beta_per_replica * R
    rng = make_rng(seed, run_id)
    x = (rng.integers(0, 2, size=R * n) * 2 - 1).astype(np.int8)
    plan = network.plan
    tcoef = beta * jperp(config.schedule(t_a).gammas(), beta, R) if R > 1 else None
    xi = plan.to_internal(x)[None, :]
    plan.run(xi, config.beta_per_replica, t_a, rng, tcoef=tcoef)
    states = plan.to_external(xi[0]).reshape(R, n)
    E = np.atleast_1d(energy(base, states))
    k = int(np.argmin(E))
    return DtsqaResult(
        best_energy=float(E[k]),
        per_replica_energies=E,
        best_state=states[k].copy(),
        seed=seed if not isinstance(seed, np.random.Generator) else None,
        t_a=t_a,
        R=R,
        run_id=run_id,
        correlation=replica_correlation(states) if config.record_correlation else None,
        final_states=states if keep_states else None,
    )


@dataclass
class IndependentResult:
    best_energy: float
    run_minima: np.ndarray
    runs: list = field(repr=False)


def run_dtsqa_independent(base, R, P, t_a, seed=0, config=None, network=None):
    """``P`` independent annealing runs (run ids ``0..P-1``); best of their minima."""
    P = check_positive_int(P, "P")
    network = network or TrotterNetwork(base, R)
    runs = [run_dtsqa(base, R, t_a, seed, config, run_id=p, network=network) for p in range(P)]
    minima = np.array([r.best_energy for r in runs])
    return IndependentResult(float(minima.min()), minima, runs)


def replica_correlation(stack):
    """``C_r = (1/n) sum_i s_{i,0} s_{i,r}`` for ``r = 0..R-1``."""
    states = stack.states if isinstance(stack, TrotterStack) else np.asarray(stack)
    states = np.atleast_2d(states).astype(np.int64)
    n = states.shape[1]
    if n == 0:
        raise ValueError("empty replicas")
    return (states * states[0]).sum(axis=1) / n


def correlation_range(C, threshold=0.5):
    """Number of replica distances ``r >= 1`` (either direction) with ``C_r > threshold``."""
    C = np.asarray(C, dtype=float)
    R = C.size
    d = np.minimum(np.arange(R), R - np.arange(R))
    above = d[(C > threshold) & (d > 0)]
    return int(above.max()) if above.size else 0


class SimulatedQuantumAnnealer(BaseEstimator):
    """Estimator wrapper: ``fit(graph)`` anneals and stores the best state found."""

    def __init__(self, R=32, t_a=1000, P=1, beta_per_replica=DEFAULT_BETA_PER_REPLICA,
                 gamma_start=DEFAULT_GAMMA_START, seed=0):
        self.R = R
        self.t_a = t_a
        self.P = P
        self.beta_per_replica = beta_per_replica
        self.gamma_start = gamma_start
        self.seed = seed

    def fit(self, graph, y=None):
        config = DtsqaConfig(self.beta_per_replica, self.gamma_start)
        res = run_dtsqa_independent(graph, self.R, self.P, self.t_a, self.seed, config)
        best = res.runs[int(np.argmin(res.run_minima))]
        self.best_energy_ = res.best_energy
        self.best_state_ = best.best_state
        self.run_minima_ = res.run_minima
        self.per_replica_energies_ = best.per_replica_energies
        return self

    def predict(self, graph=None):
        return self.best_state_

    def score(self, graph, y=None):
        return -self.best_energy_ / max(graph.n, 1)
