import itertools

import numpy as np
import pytest

from pbitglass.instance import CouplingGraph, LatticeSpec, build_ea_lattice


def binomial_band(p, n, k=4.0):
    s = np.sqrt(p * (1 - p) / n)
    return p - k * s, p + k * s


def brute_energies(graph):
    """Energies of all 2**n states by explicit term-by-term loops (state code bit i = spin i up)."""
    n = graph.n
    out = np.zeros(1 << n)
    for code in range(1 << n):
        s = [1 if (code >> i) & 1 else -1 for i in range(n)]
        e = 0.0
        for i, j, w in graph.edges:
            e -= w * s[i] * s[j]
        for i in range(n):
            e -= graph.h[i] * s[i]
        out[code] = e
    return out


def random_graph(rng, n, p=0.4, weights=(-1.0, 1.0), biases=False):
    edges = [(i, j, float(rng.choice(weights))) for i, j in itertools.combinations(range(n), 2)
             if rng.random() < p]
    h = rng.normal(size=n) if biases else None
    return CouplingGraph.from_edges(n, edges, h)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def ea4():
    return build_ea_lattice(LatticeSpec(4, 4, 4), 11)


@pytest.fixture(scope="session")
def ea_small():
    """n = 12 open-boundary instances (2x2x3)."""
    spec = LatticeSpec(2, 2, 3, periodic=(False, False, False))
    return [build_ea_lattice(spec, s) for s in (1, 2, 3)]


ACCEPTANCE_LINES = []


def report_criterion(number, title, ok, detail=""):
    line = f"criterion {number:>2} {'PASS' if ok else 'FAIL'}  {title}" + (f"  [{detail}]" if detail else "")
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
