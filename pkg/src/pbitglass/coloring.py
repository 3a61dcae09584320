"""Graph coloring for chromatic (parallel) p-bit sweeps."""
from __future__ import annotations

import csv
import heapq
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True, eq=False)
class Coloring:
    color_of: np.ndarray

    def __post_init__(self):
        c = np.ascontiguousarray(self.color_of, dtype=np.int64)
        if c.ndim != 1 or (c.size and c.min() < 0):
            raise ValueError("color_of must be a 1-D vector of non-negative color indices")
        object.__setattr__(self, "color_of", c)

    @property
    def n(self):
        return self.color_of.size

    @property
    def num_colors(self):
        return int(np.unique(self.color_of).size)

    @property
    def groups(self):
        """Vertex lists per color, ascending color, ascending vertex index."""
        return [np.flatnonzero(self.color_of == c) for c in np.unique(self.color_of)]

    def order(self):
        """Update schedule: vertices sorted by (color, index), plus color offsets."""
        order = np.lexsort((np.arange(self.n), self.color_of))
        counts = np.bincount(self.color_of)
        counts = counts[counts > 0]
        ptr = np.zeros(counts.size + 1, dtype=np.int64)
        np.cumsum(counts, out=ptr[1:])
        return order, ptr

    def __eq__(self, other):
        return isinstance(other, Coloring) and np.array_equal(self.color_of, other.color_of)

    __hash__ = None


def dsatur(graph):
    """Brelaz DSATUR coloring.

    Picks the uncolored vertex with the most distinct neighbor colors; ties go
    to the larger degree in the uncolored subgraph, then the lowest index. The
    vertex receives the smallest color absent from its neighborhood.
    """
    n = graph.n
    indptr, indices, _ = graph.csr
    color = np.full(n, -1, dtype=np.int64)
    neigh_colors = [set() for _ in range(n)]
    udeg = np.diff(indptr).astype(np.int64)
    # max-heap on (saturation, uncolored degree), min on index; stale entries skipped
    heap = [(0, -int(udeg[v]), v) for v in range(n)]
    heapq.heapify(heap)
    stamp = {v: (0, -int(udeg[v])) for v in range(n)}
    while heap:
        s, d, v = heapq.heappop(heap)
        if color[v] >= 0 or stamp[v] != (s, d):
            continue
        used = neigh_colors[v]
        c = 0
        while c in used:
            c += 1
        color[v] = c
        del stamp[v]
        for u in indices[indptr[v]:indptr[v + 1]]:
            if color[u] >= 0:
                continue
            udeg[u] -= 1
            neigh_colors[u].add(c)
            key = (-len(neigh_colors[u]), -int(udeg[u]))
            stamp[u] = key
            heapq.heappush(heap, (key[0], key[1], int(u)))
    return Coloring(color)


def _ring_offsets(R):
    """Colors of an R-cycle: alternating 0/1, with a closing 2 for odd R."""
    r = np.arange(R) % 2
    if R % 2 == 1 and R > 1:
        r[-1] = 2
    return r


def extend_coloring_replicas(base, R, base_graph=None):
    """Proper coloring of ``R`` replicas of ``base_graph`` joined in a ring.

    Vertex ``(i, k)`` has flat index ``k * n + i``. With ``K`` base colors the
    color of ``(i, k)`` is ``(c_i + r_k) mod K'`` where ``r`` colors the
    replica cycle; ``K' = K`` for even ``R`` and ``K + 1`` for odd ``R``.
    Shifting by a nonzero amount modulo ``K'`` never maps a color to itself,
    so ring neighbors always differ.
    """
    if R < 1:
        raise ValueError("R must be >= 1")
    if base_graph is not None and base_graph.n != base.n:
        raise ValueError("coloring and graph sizes differ")
    c = base.color_of
    if R == 1:
        return Coloring(c.copy())
    _, dense = np.unique(c, return_inverse=True)
    K = int(dense.max()) + 1 if dense.size else 1
    r = _ring_offsets(R)
    mod = max(K, 2) if R % 2 == 0 else max(K + 1, 3)
    colors = (dense[None, :] + r[:, None]) % mod
    return Coloring(colors.ravel())


def verify_coloring(graph, coloring):
    if coloring.n != graph.n:
        raise ValueError(f"coloring has {coloring.n} vertices, graph has {graph.n}")
    c = coloring.color_of
    return bool(not np.any(c[graph.rows] == c[graph.cols]))


def write_coloring_csv(path, coloring):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["vertex", "color"])
        w.writerows(enumerate(coloring.color_of.tolist()))


def read_coloring_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    color = np.empty(len(rows), dtype=np.int64)
    for row in rows:
        color[int(row["vertex"])] = int(row["color"])
    return Coloring(color)
