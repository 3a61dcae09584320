"""Versioned run records (CSV) and run configurations (JSON)."""
from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

SCHEMA_VERSION = 1

ALGORITHMS = ("dtsqa", "dtsqa-independent", "apt", "apt-icm")

RECORD_FIELDS = (
    "schema_version", "config_hash", "algorithm", "instance_id", "L", "n", "seed", "R", "P",
    "t_a", "best_energy", "mean_energy", "extra",
)


class SchemaError(ValueError):
    """Record file written by an incompatible schema version."""


def canonical_json(obj):
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def config_hash(config):
    d = config.to_dict() if hasattr(config, "to_dict") else config
    d = {k: v for k, v in d.items() if k not in ("threads", "out_dir")}
    return hashlib.sha256(canonical_json(d).encode()).hexdigest()[:16]


@dataclass
class RunConfig:
    """Everything needed to re-run a grid of solver runs.

    The grid is instances x seeds x ``t_grid``; each seed is one
    independent run (``P`` runs for ``dtsqa-independent``). ``ladder`` is
    ``per-instance``, ``shared`` or a path to a ladder CSV.
    """

    algorithm: str
    instances: list
    seeds: list = field(default_factory=lambda: [0])
    t_grid: list = field(default_factory=lambda: [10, 100, 1000])
    out_dir: str = "runs"
    R: int = 32
    P: int = 1
    beta_per_replica: float = 0.5
    gamma_start: float = 3.0
    alpha: float = 1.25
    beta0: float = 0.5
    chains: int = 100
    pre_sweeps: int = 10000
    pre_tail: int = 1000
    tolerance: float = None
    m_icm: int = 4
    sweeps_per_swap: int = 1
    ladder: str = "per-instance"
    record_replicas: bool = False
    record_correlation: bool = False
    threads: int = 1
    schema_version: int = SCHEMA_VERSION

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"algorithm must be one of {', '.join(ALGORITHMS)}")
        if not isinstance(self.instances, (list, tuple)):
            raise ValueError("instances must be a list of paths")
        self.instances = [str(p) for p in self.instances]
        if not self.seeds or any(not isinstance(s, int) or s < 0 for s in self.seeds):
            raise ValueError("seeds must be a non-empty list of non-negative integers")
        if not self.t_grid or any(not isinstance(t, int) or t < 1 for t in self.t_grid):
            raise ValueError("t_grid must be a non-empty list of positive integers")
        if sorted(set(self.t_grid)) != list(self.t_grid):
            raise ValueError("t_grid must be strictly increasing")
        for name in ("R", "P", "chains", "pre_sweeps", "pre_tail", "m_icm", "sweeps_per_swap", "threads"):
            v = getattr(self, name)
            if not isinstance(v, int) or isinstance(v, bool) or v < 1:
                raise ValueError(f"{name} must be a positive integer")
        if self.pre_tail < 2 or self.pre_tail > self.pre_sweeps:
            raise ValueError("pre_tail must lie in [2, pre_sweeps]")
        for name in ("beta_per_replica", "gamma_start", "alpha", "beta0"):
            if not float(getattr(self, name)) > 0:
                raise ValueError(f"{name} must be positive")
        if self.algorithm == "apt-icm" and self.m_icm < 2:
            raise ValueError("apt-icm needs m_icm >= 2")
        if self.algorithm.startswith("apt") and any(t % self.sweeps_per_swap for t in self.t_grid):
            raise ValueError("every t_a must be a multiple of sweeps_per_swap")
        if self.ladder not in ("per-instance", "shared") and not Path(self.ladder).exists():
            raise ValueError(f"ladder file {self.ladder} not found")
        if self.schema_version != SCHEMA_VERSION:
            raise SchemaError(f"config schema {self.schema_version}, expected {SCHEMA_VERSION}")

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config fields: {', '.join(sorted(unknown))}")
        return cls(**d)

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n")

    @classmethod
    def load(cls, path):
        return cls.from_dict(json.loads(Path(path).read_text()))

    @property
    def hash(self):
        return config_hash(self)


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (dict, list)):
        return canonical_json(v)
    return "" if v is None else str(v)


def write_records(path, records):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RECORD_FIELDS)
        for r in records:
            w.writerow([_fmt(r.get(k)) for k in RECORD_FIELDS])


_INT = ("schema_version", "L", "n", "seed", "R", "P", "t_a")
_FLOAT = ("best_energy", "mean_energy")


def read_records(path):
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != RECORD_FIELDS:
            raise SchemaError(f"{path}: columns do not match record schema {SCHEMA_VERSION}")
        out = []
        for row in reader:
            if int(row["schema_version"]) != SCHEMA_VERSION:
                raise SchemaError(f"{path}: record schema {row['schema_version']}, expected {SCHEMA_VERSION}")
            rec = dict(row)
            for k in _INT:
                rec[k] = int(row[k]) if row[k] != "" else None
            for k in _FLOAT:
                rec[k] = float(row[k]) if row[k] != "" else None
            rec["extra"] = json.loads(row["extra"]) if row["extra"] else {}
            out.append(rec)
    return out


def record_sort_key(r):
    return (r["algorithm"], r["instance_id"], r["seed"], r["R"], r["P"], r["t_a"])
