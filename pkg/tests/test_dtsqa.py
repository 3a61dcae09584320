import math

import numpy as np
import pytest
from sklearn.base import clone

from pbitglass.dtsqa import (
    AnnealSchedule,
    DtsqaConfig,
    SimulatedQuantumAnnealer,
    TrotterNetwork,
    TrotterStack,
    build_trotter_network,
    correlation_range,
    jperp,
    replica_correlation,
    run_dtsqa,
    run_dtsqa_independent,
)
from pbitglass.engine import energy, exact_boltzmann
from pbitglass.instance import CouplingGraph, LatticeSpec, build_ea_lattice, ferromagnet

from .conftest import brute_energies, random_graph

# -ln tanh(1.5), 40-digit arbitrary-precision evaluation
NEG_LN_TANH_1_5 = 0.09965653251644364529764966037694924834591


def trotter_energy_oracle(base, R, jp, states):
    """Classical Trotter Hamiltonian by explicit loops over replicas and sites."""
    e = 0.0
    for k in range(R):
        for i, j, w in base.edges:
            e -= w / R * states[k][i] * states[k][j]
        for i in range(base.n):
            e -= base.h[i] / R * states[k][i]
    if R == 2:
        for i in range(base.n):
            e -= 2 * jp * states[0][i] * states[1][i]
    elif R > 2:
        for k in range(R):
            for i in range(base.n):
                e -= jp * states[k][i] * states[(k + 1) % R][i]
    return e


def test_jperp_frozen_value():
    for R in (2, 8, 32):
        beta = 0.5 * R
        assert jperp(3.0, beta, R) * beta == pytest.approx(NEG_LN_TANH_1_5, rel=1e-14)


def test_jperp_limits_and_errors():
    big = jperp(np.array([5.0, 10.0, 20.0]), 16.0, 32)
    assert np.all(big > 0) and np.all(np.diff(big) < 0) and big[-1] < 1e-9
    assert jperp(1e-12, 16.0, 32) > 1.5
    g = np.array([3.0, 1.0, 0.1, 0.01])
    assert np.all(np.diff(jperp(g, 16.0, 32)) > 0)
    for bad in (0.0, -1.0, np.inf):
        with pytest.raises(ValueError):
            jperp(bad, 16.0, 32)
    with pytest.raises(ValueError):
        jperp(1.0, 0.0, 32)


def test_schedule():
    s = AnnealSchedule(10)
    g = s.gammas()
    assert g.size == 10
    assert np.allclose(g[:-1], 3.0 * (1 - np.arange(1, 10) / 10), rtol=0, atol=1e-15)
    assert g[-1] == pytest.approx(0.3)
    # the clamp repeats the last linear step
    assert np.all(np.diff(g)[:-1] < 0) and g[-1] == g[-2]
    assert np.all(np.diff(jperp(g, 16.0, 32)) >= 0)
    with pytest.raises(ValueError):
        AnnealSchedule(0)
    assert AnnealSchedule(4, epsilon_clamp=1.0).gammas().tolist() == [2.25, 1.5, 1.0, 1.0]


def test_network_r1_is_base():
    g = build_ea_lattice(LatticeSpec(3, 3, 3), 0)
    stack, net = build_trotter_network(g, 1)
    assert net == g and stack.j_parallel_scale == 1.0


def test_network_counts_and_scaling():
    g = build_ea_lattice(LatticeSpec(3, 3, 3), 0)
    stack, net = build_trotter_network(g, 4, J_perp=0.3)
    assert net.n == 108 and net.n_edges == 4 * 63 + 4 * 27
    assert stack.beta == 2.0 and stack.beta_per_replica == 0.5
    inner = net.rows // 27 == net.cols // 27
    assert np.allclose(net.J[inner], np.tile(g.J, 4) / 4)
    assert np.all(net.J[~inner] == 0.3)
    with pytest.raises(ValueError):
        build_trotter_network(g, 0)


def test_network_r2_doubled():
    g = build_ea_lattice(LatticeSpec(2, 2, 3), 0)
    _, net = build_trotter_network(g, 2, J_perp=0.25)
    ring = net.rows // g.n != net.cols // g.n
    assert ring.sum() == g.n and np.all(net.J[ring] == 0.5)


@pytest.mark.parametrize("R", [1, 2, 3, 5])
def test_stack_energy_oracle(rng, R):
    g = random_graph(rng, 6, 0.5, biases=True)
    states = rng.choice([-1, 1], (R, 6))
    stack = TrotterStack(g, R, J_perp=0.37, states=states)
    assert stack.classical_energy() == pytest.approx(trotter_energy_oracle(g, R, 0.37, states), abs=1e-12)
    assert np.array_equal(stack.replica_energies(), energy(g, states))


@pytest.mark.parametrize("R", [2, 3, 4])
def test_trotter_kernel_stationary(rng, R):
    base = random_graph(rng, 3, 0.9)
    beta = 0.5 * R
    jp = jperp(1.2, beta, R)
    net = TrotterNetwork(base, R)
    n = 3 * R
    x = net.plan.to_internal(np.ones((1, n)))
    sweeps = 300000
    out = net.plan.run(x, 0.5, sweeps, np.random.default_rng(5), tcoef=np.full(sweeps, beta * jp), hist=True)
    emp = out["hist"][0] / sweeps
    exact = exact_boltzmann(build_trotter_network(base, R, beta, jp)[1], beta).probabilities
    assert 0.5 * np.abs(emp - exact).sum() < 0.02


def test_ferromagnet_found():
    g = ferromagnet(LatticeSpec(3, 3, 3))
    net = TrotterNetwork(g, 8)
    hits = sum(run_dtsqa(g, 8, 300, seed=s, network=net).best_energy == -63 for s in range(100))
    assert hits >= 95


def test_result_contract(ea_small):
    g = ea_small[0]
    E0 = brute_energies(g).min()
    for s in range(10):
        res = run_dtsqa(g, 6, 50, seed=s, keep_states=True)
        assert res.per_replica_energies.shape == (6,)
        assert res.best_energy == res.per_replica_energies.min()
        assert np.all(res.per_replica_energies >= E0)
        assert np.array_equal(res.per_replica_energies, energy(g, res.final_states))
        assert energy(g, res.best_state) == res.best_energy
        assert set(np.unique(res.final_states)) <= {-1, 1}


def test_reproducible_and_config(ea_small):
    g = ea_small[1]
    a = run_dtsqa(g, 4, 100, seed=3)
    b = run_dtsqa(g, 4, 100, seed=3)
    assert np.array_equal(a.per_replica_energies, b.per_replica_energies)
    with pytest.raises(ValueError):
        run_dtsqa(g, 4, 0)
    with pytest.raises(ValueError):
        run_dtsqa(g, 4, 10, network=TrotterNetwork(g, 8))
    with pytest.raises(ValueError):
        DtsqaConfig(beta_per_replica=0)


def test_independent(ea_small):
    g = ea_small[2]
    one = run_dtsqa_independent(g, 4, 1, 50, seed=9)
    assert one.best_energy == run_dtsqa(g, 4, 50, seed=9).best_energy
    many = run_dtsqa_independent(g, 4, 12, 20, seed=9)
    assert many.run_minima.shape == (12,)
    assert np.all(many.best_energy <= many.run_minima)
    assert many.best_energy == many.run_minima.min()
    # distinct streams per run
    assert len({r.best_state.tobytes() for r in many.runs}) > 1


def test_correlation_examples(rng):
    s = rng.choice([-1, 1], (8, 400))
    C = replica_correlation(s)
    assert C[0] == 1.0
    assert np.all(np.abs(C[1:]) <= 4 / math.sqrt(400))
    assert np.all(replica_correlation(np.tile(s[0], (5, 1))) == 1.0)
    assert correlation_range([1.0, 0.9, 0.6, 0.2, 0.1, 0.3, 0.55, 0.95]) == 2
    assert correlation_range([1.0, 0.1, 0.1]) == 0


def test_correlation_broadens_with_annealing_time():
    g = build_ea_lattice(LatticeSpec(5, 5, 6), 3)
    cfg = DtsqaConfig(record_correlation=True)
    net = TrotterNetwork(g, 32)

    def mean_range(t_a):
        return np.mean([correlation_range(run_dtsqa(g, 32, t_a, seed=s, config=cfg, network=net).correlation)
                        for s in range(6)])

    assert mean_range(100) < mean_range(10000)


def test_estimator(ea_small):
    g = ea_small[0]
    est = SimulatedQuantumAnnealer(R=4, t_a=100, P=3, seed=1)
    assert clone(est).get_params() == est.get_params()
    est.fit(g)
    assert est.best_energy_ == est.run_minima_.min()
    assert energy(g, est.predict()) == est.best_energy_
    assert est.score(g) == -est.best_energy_ / g.n


def test_biases_scaled_per_replica():
    g = CouplingGraph.from_edges(2, [(0, 1, 1.0)], h=[1.0, -0.5])
    _, net = build_trotter_network(g, 4, J_perp=0.1)
    assert np.allclose(net.h, np.tile(g.h, 4) / 4)


@pytest.mark.slow
def test_residual_energy_non_increasing_in_ta():
    from . import heavy
    c = heavy.SQA
    E0 = heavy.ground_energies(c["instances"], c["inst_seed"])[:, None, None]
    for R in c["R"]:
        best = np.array([cell[str(R)]["best"] for cell in heavy.sqa_results()])
        rho = ((best - E0) / c["L"] ** 3).mean(axis=(0, 1))
        assert np.all(np.diff(rho) <= 0), (R, rho)
