"""Edwards-Anderson lattice instances: construction, file IO, ground energies."""
from __future__ import annotations

import csv
import hashlib
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ._rng import make_rng

FORMAT_TAG = "EA3D"
FORMAT_VERSION = 1


class InstanceFormatError(ValueError):
    """Malformed instance file; the message carries the 1-based line number."""


class GroundEnergyAuditError(RuntimeError):
    """An observed energy undercut the recorded ground energy.

    The record has already been lowered to the observed value when this is
    raised; callers that want to continue can catch it and keep going.
    """

    def __init__(self, record, observed):
        self.record = record
        self.observed = observed
        super().__init__(
            f"instance {record.instance_id}: observed energy {observed} is below "
            f"recorded ground energy; E0 updated to {record.E0}"
        )


@dataclass(frozen=True)
class LatticeSpec:
    """Box of ``Lx*Ly*Lz`` sites, open or periodic per axis.

    The default boundary (open x, open y, periodic z) is the one used for the
    benchmark instances. Periodic wrapping requires at least 3 sites along
    that axis, otherwise the wrap bond would duplicate an interior bond.
    """

    Lx: int
    Ly: int
    Lz: int
    periodic: tuple = (False, False, True)
    missing_sites: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        dims = (self.Lx, self.Ly, self.Lz)
        for name, L in zip("xyz", dims):
            if isinstance(L, bool) or int(L) != L or L <= 0:
                raise ValueError(f"L{name} must be a positive integer, got {L!r}")
        if len(self.periodic) != 3:
            raise ValueError("periodic must have one flag per axis")
        for name, L, per in zip("xyz", dims, self.periodic):
            if per and L < 3:
                raise ValueError(
                    f"periodic boundary along {name} needs L{name} >= 3 (got {L}); "
                    "a wrap bond would duplicate an existing bond"
                )
        object.__setattr__(self, "periodic", tuple(bool(p) for p in self.periodic))
        missing = frozenset(int(s) for s in self.missing_sites)
        bad = [s for s in missing if not 0 <= s < self.n_sites]
        if bad:
            raise ValueError(f"missing_sites out of range [0, {self.n_sites}): {sorted(bad)[:5]}")
        object.__setattr__(self, "missing_sites", missing)

    @property
    def shape(self):
        return (self.Lx, self.Ly, self.Lz)

    @property
    def n_sites(self):
        return self.Lx * self.Ly * self.Lz

    @property
    def n_spins(self):
        return self.n_sites - len(self.missing_sites)

    def site_index(self, x, y, z):
        return (x * self.Ly + y) * self.Lz + z


class CouplingGraph:
    """Sparse Ising problem: couplers ``J_ij`` on edges ``i < j`` and biases ``h_i``.

    Edges are kept sorted by ``(i, j)``; the adjacency (CSR) is derived and
    cached. Instances are immutable by convention.
    """

    def __init__(self, n, rows, cols, J, h=None):
        self.n = int(n)
        self.rows = np.ascontiguousarray(rows, dtype=np.int64)
        self.cols = np.ascontiguousarray(cols, dtype=np.int64)
        self.J = np.ascontiguousarray(J, dtype=np.float64)
        self.h = np.zeros(self.n) if h is None else np.ascontiguousarray(h, dtype=np.float64)
        self._csr = None
        self._validate()

    @classmethod
    def from_edges(cls, n, edges, h=None):
        """Build from ``(i, j, J)`` triples in any order; ``i > j`` is flipped."""
        edges = list(edges)
        if edges:
            arr = np.array([(min(i, j), max(i, j)) for i, j, _ in edges], dtype=np.int64)
            J = np.array([float(e[2]) for e in edges])
            if np.any(arr[:, 0] == arr[:, 1]):
                k = int(np.flatnonzero(arr[:, 0] == arr[:, 1])[0])
                raise ValueError(f"self-loop on vertex {arr[k, 0]}")
            order = np.lexsort((arr[:, 1], arr[:, 0]))
            arr, J = arr[order], J[order]
            rows, cols = arr[:, 0], arr[:, 1]
        else:
            rows = cols = np.zeros(0, dtype=np.int64)
            J = np.zeros(0)
        return cls(n, rows, cols, J, h)

    def _validate(self):
        n = self.n
        if n < 0:
            raise ValueError("n must be non-negative")
        if not (self.rows.shape == self.cols.shape == self.J.shape) or self.rows.ndim != 1:
            raise ValueError("edge arrays must be 1-D and of equal length")
        if self.h.shape != (n,):
            raise ValueError(f"h must have length {n}")
        m = self.rows.size
        if m == 0:
            return
        if self.rows.min() < 0 or self.cols.max() >= n:
            raise ValueError(f"edge endpoint out of range [0, {n})")
        if np.any(self.rows >= self.cols):
            k = int(np.flatnonzero(self.rows >= self.cols)[0])
            if self.rows[k] == self.cols[k]:
                raise ValueError(f"self-loop on vertex {self.rows[k]}")
            raise ValueError(f"edge ({self.rows[k]}, {self.cols[k]}) must satisfy i < j")
        key = self.rows * n + self.cols
        if np.any(np.diff(key) < 0):
            order = np.argsort(key, kind="stable")
            self.rows, self.cols, self.J = self.rows[order], self.cols[order], self.J[order]
            key = key[order]
        dup = np.flatnonzero(np.diff(key) == 0)
        if dup.size:
            k = int(dup[0])
            raise ValueError(f"duplicate edge ({self.rows[k]}, {self.cols[k]})")
        if not np.all(np.isfinite(self.J)) or not np.all(np.isfinite(self.h)):
            raise ValueError("couplings and biases must be finite")

    @property
    def n_edges(self):
        return int(self.rows.size)

    @property
    def edges(self):
        return [(int(i), int(j), float(w)) for i, j, w in zip(self.rows, self.cols, self.J)]

    @property
    def csr(self):
        """``(indptr, indices, weights)`` with both directions of every edge."""
        if self._csr is None:
            src = np.concatenate([self.rows, self.cols])
            dst = np.concatenate([self.cols, self.rows])
            w = np.concatenate([self.J, self.J])
            order = np.lexsort((dst, src))
            src, dst, w = src[order], dst[order], w[order]
            indptr = np.zeros(self.n + 1, dtype=np.int64)
            np.cumsum(np.bincount(src, minlength=self.n), out=indptr[1:])
            self._csr = (indptr, dst, w)
        return self._csr

    @property
    def degrees(self):
        return np.diff(self.csr[0])

    @property
    def max_degree(self):
        return int(self.degrees.max()) if self.n else 0

    def neighbors(self, i):
        indptr, indices, weights = self.csr
        lo, hi = indptr[i], indptr[i + 1]
        return list(zip(indices[lo:hi].tolist(), weights[lo:hi].tolist()))

    def to_dense(self):
        W = np.zeros((self.n, self.n))
        W[self.rows, self.cols] = self.J
        W[self.cols, self.rows] = self.J
        return W

    def has_biases(self):
        return bool(np.any(self.h != 0))

    def is_integral(self):
        """True when every coupler and bias is an integer (table-driven kernels apply)."""
        return bool(np.all(self.J == np.round(self.J)) and np.all(self.h == np.round(self.h)))

    def is_ea(self):
        return bool(np.all(np.abs(self.J) == 1.0) and not self.has_biases())

    def __eq__(self, other):
        if not isinstance(other, CouplingGraph):
            return NotImplemented
        return (
            self.n == other.n
            and np.array_equal(self.rows, other.rows)
            and np.array_equal(self.cols, other.cols)
            and np.array_equal(self.J, other.J)
            and np.array_equal(self.h, other.h)
        )

    __hash__ = None

    def __repr__(self):
        return f"CouplingGraph(n={self.n}, n_edges={self.n_edges})"


def lattice_bonds(spec):
    """Canonical bond list of the full box: ``(site, neighbor, axis)`` arrays.

    Order is by site index, then axis x, y, z; coupling draws follow it.
    """
    Lx, Ly, Lz = spec.shape
    x, y, z = np.meshgrid(np.arange(Lx), np.arange(Ly), np.arange(Lz), indexing="ij")
    site = spec.site_index(x, y, z)
    src, dst, axis = [], [], []
    for a, (coord, L) in enumerate(zip((x, y, z), spec.shape)):
        if spec.periodic[a]:
            mask = np.ones_like(coord, dtype=bool)
        else:
            mask = coord < L - 1
        nxt = [x, y, z]
        nxt[a] = (coord + 1) % L
        nsite = spec.site_index(*nxt)
        src.append(site[mask])
        dst.append(nsite[mask])
        axis.append(np.full(mask.sum(), a))
    src, dst, axis = (np.concatenate(v) for v in (src, dst, axis))
    order = np.lexsort((axis, src))
    return src[order], dst[order], axis[order]


def build_ea_lattice(spec, seed):
    """Random +-1 EA instance on ``spec``; couplings drawn in canonical bond order.

    Couplings are drawn for the full box before missing sites are removed, so
    a site mask does not change the couplings of the surviving bonds.
    """
    src, dst, _ = lattice_bonds(spec)
    rng = make_rng(seed)
    J = rng.integers(0, 2, size=src.size) * 2 - 1
    keep_site = np.ones(spec.n_sites, dtype=bool)
    if spec.missing_sites:
        keep_site[list(spec.missing_sites)] = False
    label = np.cumsum(keep_site) - 1
    keep = keep_site[src] & keep_site[dst]
    a, b = label[src[keep]], label[dst[keep]]
    rows, cols = np.minimum(a, b), np.maximum(a, b)
    return CouplingGraph(int(keep_site.sum()), rows, cols, J[keep].astype(float))


def ferromagnet(spec):
    """All couplers +1 on the lattice of ``spec`` (test and sanity instance)."""
    g = build_ea_lattice(spec, 0)
    return CouplingGraph(g.n, g.rows, g.cols, np.ones(g.n_edges))


# --- file format -----------------------------------------------------------

def _format_coupling(v):
    if float(v).is_integer() and abs(v) < 2**53:
        return str(int(v))
    return repr(float(v))


def dumps_instance(graph, comments=()):
    if graph.has_biases():
        raise ValueError("instance files carry couplers only; graph has nonzero biases")
    lines = [f"# {c}" for c in comments]
    lines.append(f"{FORMAT_TAG} {FORMAT_VERSION} {graph.n} {graph.n_edges}")
    lines.extend(
        f"{i} {j} {_format_coupling(w)}" for i, j, w in zip(graph.rows.tolist(), graph.cols.tolist(), graph.J.tolist())
    )
    return "\n".join(lines) + "\n"


def instance_id(graph):
    """Content hash of the canonical (comment-free) serialization.

    Graphs with biases have no file form; their biases are appended to the
    hashed text so distinct problems never share an id.
    """
    if graph.has_biases():
        text = dumps_instance(CouplingGraph(graph.n, graph.rows, graph.cols, graph.J))
        text += "h " + " ".join(repr(float(v)) for v in graph.h) + "\n"
    else:
        text = dumps_instance(graph)
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def save_instance(graph, path, comments=()):
    Path(path).write_text(dumps_instance(graph, comments), newline="\n")


def loads_instance(text):
    header = None
    edges = []
    seen = {}
    for lineno, raw in enumerate(text.split("\n"), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if header is None and len(parts) == 3 and parts[0] != FORMAT_TAG:
            header = (None, None)
        if header is None:
            if len(parts) != 4 or parts[0] != FORMAT_TAG:
                raise InstanceFormatError(f"line {lineno}: expected header '{FORMAT_TAG} 1 <n> <n_edges>'")
            try:
                version, n, m = int(parts[1]), int(parts[2]), int(parts[3])
            except ValueError:
                raise InstanceFormatError(f"line {lineno}: non-integer header field") from None
            if version != FORMAT_VERSION:
                raise InstanceFormatError(f"line {lineno}: unsupported format version {version}")
            if n < 0 or m < 0:
                raise InstanceFormatError(f"line {lineno}: negative count in header")
            header = (n, m)
            continue
        if len(parts) != 3:
            raise InstanceFormatError(f"line {lineno}: expected '<i> <j> <J>', got {line!r}")
        try:
            i, j = int(parts[0]), int(parts[1])
            w = float(parts[2])
        except ValueError:
            raise InstanceFormatError(f"line {lineno}: cannot parse edge {line!r}") from None
        if not math.isfinite(w):
            raise InstanceFormatError(f"line {lineno}: non-finite coupling")
        if not i < j:
            raise InstanceFormatError(f"line {lineno}: edge ({i}, {j}) must satisfy i < j")
        if i < 0 or (header[0] is not None and j >= header[0]):
            raise InstanceFormatError(f"line {lineno}: edge ({i}, {j}) out of range for n={header[0]}")
        if (i, j) in seen:
            raise InstanceFormatError(
                f"line {lineno}: duplicate edge ({i}, {j}) (first seen on line {seen[(i, j)]})"
            )
        seen[(i, j)] = lineno
        edges.append((i, j, w))
    if header is None:
        raise InstanceFormatError("line 1: missing header")
    n, m = header
    if n is None:
        # headerless edge list: size inferred from the largest index
        n = max(j for _, j, _ in edges) + 1
        m = len(edges)
    if len(edges) != m:
        raise ValueError(f"header declares {m} edges but file contains {len(edges)}")
    return CouplingGraph.from_edges(n, edges)


def load_instance(path):
    return loads_instance(Path(path).read_text())


# --- ground energies -------------------------------------------------------

@dataclass
class GroundEnergyRecord:
    instance_id: str
    E0: float
    provenance: str = "estimated"
    estimate_error_per_site: float = 0.0

    def __post_init__(self):
        if self.provenance not in ("external", "estimated"):
            raise ValueError(f"provenance must be 'external' or 'estimated', got {self.provenance!r}")
        if self.estimate_error_per_site < 0:
            raise ValueError("estimate_error_per_site must be >= 0")

    def observe(self, energy, tol=1e-9):
        """Audit an observed energy; lower E0 and raise if it undercuts the record."""
        if energy < self.E0 - tol:
            self.E0 = float(energy)
            raise GroundEnergyAuditError(self, energy)


GROUND_CSV_FIELDS = ("instance_id", "E0", "provenance", "err_per_site")


def write_ground_energies(path, records):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(GROUND_CSV_FIELDS)
        for r in sorted(records, key=lambda r: r.instance_id):
            w.writerow([r.instance_id, repr(float(r.E0)), r.provenance, repr(float(r.estimate_error_per_site))])


def read_ground_energies(path):
    out = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != GROUND_CSV_FIELDS:
            raise ValueError(f"{path}: expected columns {','.join(GROUND_CSV_FIELDS)}")
        for row in reader:
            rec = GroundEnergyRecord(
                row["instance_id"], float(row["E0"]), row["provenance"], float(row["err_per_site"])
            )
            out[rec.instance_id] = rec
    return out


def estimate_ground_energy(graph, budget_sweeps, config=None, seed=0, ladder=None, n_restarts=1, name=None):
    """Putative ground energy: the lowest energy APT+ICM visits within the budget.

    ``budget_sweeps`` is per replica. With ``n_restarts > 1`` the spread
    between the best and the median restart minimum is reported as the
    per-site error estimate.
    """
    from .apt import AptConfig, adaptive_beta_schedule, run_apt

    if budget_sweeps <= 0:
        raise ValueError("budget_sweeps must be positive")
    config = config or AptConfig()
    if ladder is None:
        ladder = adaptive_beta_schedule(
            graph,
            alpha=config.alpha,
            beta0=config.beta0,
            chains=config.chains,
            pre_sweeps=config.pre_sweeps,
            pre_tail=config.pre_tail,
            tolerance=config.tolerance,
            m_icm=config.m_icm,
            seed=seed,
        )
    n_attempts = max(1, -(-int(budget_sweeps) // config.sweeps_per_swap))
    minima = []
    for r in range(n_restarts):
        res = run_apt(graph, ladder, config, seed=seed, with_icm=ladder.m_icm >= 2, n_attempts=n_attempts, run_id=r)
        minima.append(res.best_energy)
    E0 = float(min(minima))
    err = float(np.median(minima) - E0) / max(graph.n, 1) if n_restarts > 1 else 0.0
    return GroundEnergyRecord(name or instance_id(graph), E0, "estimated", err)
