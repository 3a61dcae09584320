"""Adaptive parallel tempering with isoenergetic cluster moves.

The temperature ladder is grown from ``beta0`` in steps ``alpha / sigma_E``,
where ``sigma_E`` is the chain-averaged standard deviation of the energy at
the current rung, until ``sigma_E`` drops below a tolerance. The tempering
loop then alternates sweeps, Houdayer cluster moves between replicas that
share a temperature, and even/odd neighbor swaps between equal labels.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator

from . import _kernels
from ._rng import make_rng
from ._validation import check_graph, check_positive_int, check_spins
from .engine import SweepPlan, _ell

LADDER_STREAM = 1
RUN_STREAM = 2
MAX_RUNGS = 1000
ENERGY_DRIFT_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class TemperatureLadder:
    betas: np.ndarray
    alpha: float = 1.25
    beta0: float = None
    tolerance: float = 0.5
    m_icm: int = 4
    sigmas: np.ndarray = None

    def __post_init__(self):
        b = np.ascontiguousarray(self.betas, dtype=float)
        if b.ndim != 1 or b.size < 2:
            raise ValueError("a ladder needs at least two temperatures")
        if np.any(np.diff(b) <= 0) or b[0] <= 0:
            raise ValueError("betas must be positive and strictly increasing")
        object.__setattr__(self, "betas", b)
        if self.beta0 is None:
            object.__setattr__(self, "beta0", float(b[0]))
        elif not np.isclose(b[0], self.beta0, rtol=0, atol=1e-12):
            raise ValueError("betas[0] must equal beta0")
        check_positive_int(self.m_icm, "m_icm")
        if self.sigmas is not None:
            s = np.asarray(self.sigmas, dtype=float)
            if s.shape != b.shape:
                raise ValueError("sigmas must have one entry per rung")
            object.__setattr__(self, "sigmas", s)

    @property
    def M(self):
        return int(self.betas.size)

    @property
    def n_replicas(self):
        return self.M * self.m_icm

    def with_m_icm(self, m_icm):
        return TemperatureLadder(self.betas, self.alpha, self.beta0, self.tolerance, m_icm, self.sigmas)

    def __eq__(self, other):
        return (isinstance(other, TemperatureLadder) and np.array_equal(self.betas, other.betas)
                and self.m_icm == other.m_icm)

    __hash__ = None


@dataclass(frozen=True)
class AptConfig:
    """Preprocessing and tempering parameters (defaults follow the benchmark setup)."""

    alpha: float = 1.25
    beta0: float = 0.5
    chains: int = 100
    pre_sweeps: int = 10000
    pre_tail: int = 1000
    tolerance: float = None
    m_icm: int = 4
    sweeps_per_swap: int = 1
    n_swap_attempts: int = 1000
    check_energies: bool = False

    def __post_init__(self):
        if not self.alpha > 0 or not self.beta0 > 0:
            raise ValueError("alpha and beta0 must be positive")
        check_positive_int(self.chains, "chains", 2)
        check_positive_int(self.pre_sweeps, "pre_sweeps")
        check_positive_int(self.pre_tail, "pre_tail", 2)
        if self.pre_tail > self.pre_sweeps:
            raise ValueError("pre_tail cannot exceed pre_sweeps")
        check_positive_int(self.m_icm, "m_icm")
        check_positive_int(self.sweeps_per_swap, "sweeps_per_swap")
        check_positive_int(self.n_swap_attempts, "n_swap_attempts")


def default_tolerance(graph):
    """Half the smallest coupling magnitude."""
    J = np.abs(graph.J[graph.J != 0])
    if J.size == 0:
        raise ValueError("graph has no couplings")
    return float(J.min()) / 2


def adaptive_beta_schedule(graph, alpha=1.25, beta0=0.5, chains=100, pre_sweeps=10000,
                           pre_tail=1000, tolerance=None, m_icm=4, seed=0, plan=None):
    """Grow the ladder rung by rung until the energy spread falls below ``tolerance``.

    At each rung ``chains`` chains run ``pre_sweeps`` sweeps (continuing
    from the previous rung), ``sigma_E`` is the mean over chains of the
    energy standard deviation across the last ``pre_tail`` sweeps, and the
    next rung is ``beta + alpha / sigma_E``. The rung at which ``sigma_E``
    first drops below the tolerance is kept as the coldest temperature.
    """
    check_graph(graph)
    if not alpha > 0 or not beta0 > 0:
        raise ValueError("alpha and beta0 must be positive")
    chains = check_positive_int(chains, "chains", 2)
    pre_sweeps = check_positive_int(pre_sweeps, "pre_sweeps")
    pre_tail = check_positive_int(pre_tail, "pre_tail", 2)
    if pre_tail > pre_sweeps:
        raise ValueError("pre_tail cannot exceed pre_sweeps")
    tolerance = default_tolerance(graph) if tolerance is None else float(tolerance)
    plan = plan or SweepPlan.from_graph(graph)
    rng = make_rng(seed, LADDER_STREAM)
    x = plan.to_internal((rng.integers(0, 2, size=(chains, graph.n)) * 2 - 1).astype(np.int8))
    betas, sigmas = [], []
    beta = float(beta0)
    while True:
        plan.run(x, beta, pre_sweeps - pre_tail, rng)
        tail = plan.run(x, beta, pre_tail, rng, trace=True)["etrace"]
        sigma = float(tail.std(axis=0).mean())
        betas.append(beta)
        sigmas.append(sigma)
        if sigma < tolerance:
            break
        if sigma == 0:
            raise RuntimeError(
                f"energy spread vanished at beta={beta:.6g} (frozen chains); increase pre_sweeps"
            )
        if len(betas) >= MAX_RUNGS:
            raise RuntimeError(f"ladder exceeded {MAX_RUNGS} rungs without reaching tolerance")
        beta = beta + alpha / sigma
    if len(betas) < 2:
        raise RuntimeError(
            f"energy spread {sigmas[0]:.3g} already below tolerance {tolerance} at beta0; lower beta0"
        )
    return TemperatureLadder(np.array(betas), alpha, float(beta0), tolerance, m_icm, np.array(sigmas))


def write_ladder_csv(path, ladder):
    sig = ladder.sigmas if ladder.sigmas is not None else np.full(ladder.M, np.nan)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["index", "beta", "sigma_E"])
        for i, (b, s) in enumerate(zip(ladder.betas, sig)):
            w.writerow([i, repr(float(b)), repr(float(s))])


def read_ladder_csv(path, m_icm=4, alpha=1.25, tolerance=0.5):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows or set(rows[0]) != {"index", "beta", "sigma_E"}:
        raise ValueError(f"{path}: expected columns index,beta,sigma_E")
    rows.sort(key=lambda r: int(r["index"]))
    betas = np.array([float(r["beta"]) for r in rows])
    sigmas = np.array([float(r["sigma_E"]) for r in rows])
    return TemperatureLadder(betas, alpha, None, tolerance, m_icm, sigmas)


def swap_probability(delta_E, delta_beta):
    """``min(1, exp(delta_beta * delta_E))``; ``delta_*`` are colder minus hotter."""
    x = np.multiply(delta_beta, delta_E, dtype=float)
    out = np.exp(np.minimum(x, 0.0))
    return float(out) if out.ndim == 0 else out


def metropolis_accept(delta_E, delta_beta, u):
    return np.asarray(u) < swap_probability(delta_E, delta_beta)


def _adjacency(graph):
    """Neighbor tables in the original vertex order, cached on the graph."""
    cached = getattr(graph, "_ell_cache", None)
    if cached is None:
        ident = np.arange(graph.n)
        cached = _ell(graph.n, graph.rows, graph.cols, graph.J, ident)
        graph._ell_cache = cached
    return cached


def icm_move(state_a, state_b, graph, rng, return_size=False):
    """Houdayer move on a replica pair; returns new ``(state_a, state_b)``.

    Clusters are connected components of the sites where the replicas
    disagree. One is chosen uniformly and flipped in both replicas, unless
    it covers more than half the system, in which case one replica is
    flipped entirely. With ``return_size`` the flipped cluster size is also
    returned (0: replicas identical, -1: whole-replica flip).
    """
    check_graph(graph)
    if graph.has_biases():
        raise ValueError("cluster moves require zero biases")
    a = check_spins(state_a, graph.n, "state_a").copy()
    b = check_spins(state_b, graph.n, "state_b").copy()
    nbr, w = _adjacency(graph)
    labels = np.empty(graph.n, dtype=np.int64)
    stack = np.empty(graph.n, dtype=np.int64)
    size = _kernels.icm_pair(a, b, nbr, w, make_rng(rng), labels, stack)
    return (a, b, int(size)) if return_size else (a, b)


@dataclass
class AptEnsemble:
    """Replica states ``(M, m, n)`` with energies and swap counters per (pair, label)."""

    ladder: TemperatureLadder
    states: np.ndarray
    energies: np.ndarray
    accepted: np.ndarray
    attempted: np.ndarray


def swap_acceptance_stats(ensemble, per_label=False):
    """Accepted over attempted swaps for each adjacent temperature pair."""
    att = np.asarray(ensemble.attempted)
    acc = np.asarray(ensemble.accepted)
    if att.sum() == 0:
        raise ValueError("no swaps have been attempted")
    with np.errstate(invalid="ignore", divide="ignore"):
        if per_label:
            return acc / att
        return acc.sum(axis=1) / att.sum(axis=1)


@dataclass
class AptResult:
    trajectory: np.ndarray
    best_energy: float
    best_state: np.ndarray
    acceptance: np.ndarray
    ensemble: AptEnsemble = field(repr=False)
    sweeps_per_swap: int = 1
    seed: int = 0
    run_id: int = 0
    max_drift: float = 0.0

    @property
    def mcs(self):
        """Cumulative sweeps per replica at the end of each swap attempt."""
        return self.sweeps_per_swap * np.arange(1, self.trajectory.size + 1)


def run_apt(graph, ladder, config=None, seed=0, with_icm=True, n_attempts=None, run_id=0, plan=None):
    """Tempering run; returns the running minimum energy after every swap attempt.

    Replicas are stored temperature-major: row ``i * m + label``.
    """
    check_graph(graph)
    config = config or AptConfig()
    m = ladder.m_icm
    M = ladder.M
    if with_icm:
        if m < 2:
            raise ValueError("cluster moves need m_icm >= 2")
        if graph.has_biases():
            raise ValueError("cluster moves require zero biases")
    n_attempts = check_positive_int(config.n_swap_attempts if n_attempts is None else n_attempts, "n_attempts")
    plan = plan or SweepPlan.from_graph(graph)
    rng = make_rng(seed, RUN_STREAM, run_id)
    x = plan.to_internal((rng.integers(0, 2, size=(M * m, graph.n)) * 2 - 1).astype(np.int8))
    energies = plan.energies(x)
    emins = energies.copy()
    best = x.copy()
    traj = np.zeros(n_attempts)
    acc = np.zeros((M - 1, m), dtype=np.int64)
    att = np.zeros((M - 1, m), dtype=np.int64)
    drift = _kernels.apt_loop(x, plan.nbr, plan.w, plan.h, ladder.betas, M, m, n_attempts,
                              config.sweeps_per_swap, bool(with_icm), plan.use_table, plan.amax,
                              rng, energies, emins, best, traj, acc, att, bool(config.check_energies))
    if config.check_energies and drift > ENERGY_DRIFT_TOL:
        raise RuntimeError(f"incremental energies drifted by {drift} from recomputed values")
    k = int(np.argmin(emins))
    states = plan.to_external(x)
    ens = AptEnsemble(ladder, states.reshape(M, m, graph.n), energies.reshape(M, m), acc, att)
    return AptResult(
        trajectory=traj,
        best_energy=float(emins[k]),
        best_state=plan.to_external(best[k]),
        acceptance=swap_acceptance_stats(ens),
        ensemble=ens,
        sweeps_per_swap=config.sweeps_per_swap,
        seed=seed,
        run_id=run_id,
        max_drift=float(drift),
    )


class AdaptiveParallelTempering(BaseEstimator):
    """Estimator wrapper: ``fit(graph)`` builds the ladder and runs tempering."""

    def __init__(self, alpha=1.25, beta0=0.5, chains=100, pre_sweeps=10000, pre_tail=1000,
                 tolerance=None, m_icm=4, sweeps_per_swap=1, n_swap_attempts=1000,
                 with_icm=True, seed=0):
        self.alpha = alpha
        self.beta0 = beta0
        self.chains = chains
        self.pre_sweeps = pre_sweeps
        self.pre_tail = pre_tail
        self.tolerance = tolerance
        self.m_icm = m_icm
        self.sweeps_per_swap = sweeps_per_swap
        self.n_swap_attempts = n_swap_attempts
        self.with_icm = with_icm
        self.seed = seed

    def _config(self):
        return AptConfig(self.alpha, self.beta0, self.chains, self.pre_sweeps, self.pre_tail,
                         self.tolerance, self.m_icm, self.sweeps_per_swap, self.n_swap_attempts)

    def fit(self, graph, y=None, ladder=None):
        config = self._config()
        plan = SweepPlan.from_graph(graph)
        if ladder is None:
            ladder = adaptive_beta_schedule(graph, config.alpha, config.beta0, config.chains,
                                            config.pre_sweeps, config.pre_tail, config.tolerance,
                                            config.m_icm, self.seed, plan)
        res = run_apt(graph, ladder, config, self.seed, self.with_icm, plan=plan)
        self.ladder_ = ladder
        self.best_energy_ = res.best_energy
        self.best_state_ = res.best_state
        self.trajectory_ = res.trajectory
        self.acceptance_ = res.acceptance
        return self

    def predict(self, graph=None):
        return self.best_state_

    def score(self, graph, y=None):
        return -self.best_energy_ / max(graph.n, 1)
