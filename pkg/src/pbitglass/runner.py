"""Execution of a run grid with per-cell checkpoints.

DT-SQA cells are ``(instance, seed, t_a)``. APT cells are
``(instance, seed)``: the running minimum of one tempering run evaluated at
every ``t_a`` of the grid equals a run stopped at that ``t_a``, because
nothing in the run depends on its length. Finished cells are written to
``<out_dir>/cells`` and skipped on restart; the merged ``records.csv`` is
sorted so its bytes depend only on the configuration.
"""
from __future__ import annotations

import json
import multiprocessing as mp
import re
import time
from pathlib import Path

from ._rng import derive_seed
from .apt import AptConfig, adaptive_beta_schedule, read_ladder_csv, run_apt, write_ladder_csv
from .dtsqa import DtsqaConfig, TrotterNetwork, run_dtsqa, run_dtsqa_independent
from .engine import SweepPlan
from .instance import instance_id, load_instance
from .records import SCHEMA_VERSION, canonical_json, record_sort_key, write_records

_LATTICE_RE = re.compile(r"^#\s*lattice\s+(\d+)\s+(\d+)\s+(\d+)", re.M)


def instance_size_label(path, n):
    """Linear size from a ``# lattice Lx Ly Lz`` comment, else the cube root of ``n``."""
    m = _LATTICE_RE.search(Path(path).read_text())
    if m:
        return int(m.group(1))
    return int(round(n ** (1.0 / 3.0)))


def grid_cells(config):
    cells = []
    for i in range(len(config.instances)):
        for s in config.seeds:
            if config.algorithm.startswith("apt"):
                cells.append((i, s, None))
            else:
                cells.extend((i, s, t) for t in config.t_grid)
    return cells


def _cell_name(cell):
    i, s, t = cell
    return f"i{i:05d}-s{s}" + ("" if t is None else f"-t{t}")


class _Instances:
    """Lazily loaded instances and their compiled networks, one set per worker."""

    def __init__(self, config):
        self.config = config
        self.graphs = {}
        self.nets = {}
        self.plans = {}

    def graph(self, i):
        if i not in self.graphs:
            path = self.config.instances[i]
            g = load_instance(path)
            self.graphs[i] = (g, instance_id(g), instance_size_label(path, g.n))
        return self.graphs[i]

    def network(self, i):
        if i not in self.nets:
            self.nets[i] = TrotterNetwork(self.graph(i)[0], self.config.R)
        return self.nets[i]

    def plan(self, i):
        if i not in self.plans:
            self.plans[i] = SweepPlan.from_graph(self.graph(i)[0])
        return self.plans[i]


def _base_record(config, chash, g, iid, L, seed):
    return dict(schema_version=SCHEMA_VERSION, config_hash=chash, algorithm=config.algorithm,
                instance_id=iid, L=L, n=g.n, seed=seed)


def apt_config(config):
    return AptConfig(alpha=config.alpha, beta0=config.beta0, chains=config.chains,
                     pre_sweeps=config.pre_sweeps, pre_tail=config.pre_tail,
                     tolerance=config.tolerance, m_icm=config.m_icm,
                     sweeps_per_swap=config.sweeps_per_swap)


def run_cell(config, cell, inst, ladders=None):
    """Records of one cell plus the number of attempted spin updates."""
    i, seed, t_a = cell
    g, iid, L = inst.graph(i)
    chash = config.hash
    alg = config.algorithm
    if alg in ("dtsqa", "dtsqa-independent"):
        dcfg = DtsqaConfig(config.beta_per_replica, config.gamma_start,
                           record_correlation=config.record_correlation)
        net = inst.network(i)
        rseed = derive_seed(seed, t_a)
        rec = _base_record(config, chash, g, iid, L, seed)
        rec.update(R=config.R, t_a=t_a)
        if alg == "dtsqa":
            res = run_dtsqa(g, config.R, t_a, rseed, dcfg, network=net)
            extra = {}
            if config.record_replicas:
                extra["per_replica"] = res.per_replica_energies.tolist()
            if res.correlation is not None:
                extra["C_r"] = [round(float(c), 12) for c in res.correlation]
            rec.update(P=1, best_energy=res.best_energy,
                       mean_energy=float(res.per_replica_energies.mean()), extra=extra)
            updates = g.n * config.R * t_a
        else:
            res = run_dtsqa_independent(g, config.R, config.P, t_a, rseed, dcfg, network=net)
            extra = {"run_minima": res.run_minima.tolist()}
            rec.update(P=config.P, best_energy=res.best_energy,
                       mean_energy=float(res.run_minima.mean()), extra=extra)
            updates = g.n * config.R * t_a * config.P
        return [rec], updates
    ladder = ladders[i]
    cfg = apt_config(config)
    n_attempts = max(config.t_grid) // config.sweeps_per_swap
    res = run_apt(g, ladder, cfg, seed=seed, with_icm=alg == "apt-icm", n_attempts=n_attempts,
                  plan=inst.plan(i))
    recs = []
    acc = [round(float(a), 12) for a in res.acceptance]
    for t_a in config.t_grid:
        k = t_a // config.sweeps_per_swap
        rec = _base_record(config, chash, g, iid, L, seed)
        rec.update(R=ladder.n_replicas, P=1, t_a=t_a, best_energy=float(res.trajectory[k - 1]),
                   mean_energy=None, extra=dict(attempt=k, M=ladder.M, m_icm=ladder.m_icm, acceptance=acc))
        recs.append(rec)
    return recs, g.n * ladder.n_replicas * n_attempts * config.sweeps_per_swap


def prepare_ladders(config, out_dir, inst):
    """Ladder per instance (cached in ``<out_dir>/ladders``), shared, or from a file."""
    if not config.algorithm.startswith("apt"):
        return None
    ldir = Path(out_dir) / "ladders"
    ldir.mkdir(parents=True, exist_ok=True)
    cfg = apt_config(config)

    def build(i, name):
        path = ldir / f"{name}.csv"
        if path.exists():
            return read_ladder_csv(path, m_icm=config.m_icm, alpha=config.alpha)
        g = inst.graph(i)[0]
        lad = adaptive_beta_schedule(g, cfg.alpha, cfg.beta0, cfg.chains, cfg.pre_sweeps, cfg.pre_tail,
                                     cfg.tolerance, cfg.m_icm, seed=config.seeds[0], plan=inst.plan(i))
        write_ladder_csv(path, lad)
        return read_ladder_csv(path, m_icm=config.m_icm, alpha=config.alpha)

    n = len(config.instances)
    if config.ladder == "per-instance":
        return {i: build(i, inst.graph(i)[1]) for i in range(n)}
    if config.ladder == "shared":
        lad = build(0, "shared") if n else None
        return {i: lad for i in range(n)}
    lad = read_ladder_csv(config.ladder, m_icm=config.m_icm, alpha=config.alpha)
    return {i: lad for i in range(n)}


_WORKER = {}


def _init_worker(config_dict, out_dir):
    from .records import RunConfig

    config = RunConfig.from_dict(config_dict)
    inst = _Instances(config)
    _WORKER.update(config=config, inst=inst, ladders=prepare_ladders(config, out_dir, inst))


def _work(cell):
    w = _WORKER
    t = time.perf_counter()
    try:
        recs, updates = run_cell(w["config"], cell, w["inst"], w["ladders"])
    except Exception as exc:  # reported per cell, the grid continues
        return cell, None, 0, 0.0, f"{type(exc).__name__}: {exc}"
    return cell, recs, updates, time.perf_counter() - t, None


def run_grid(config, out_dir=None, progress=None):
    """Run every missing cell, merge all cell records and write the summary.

    Returns the summary dict; ``summary['failed']`` lists failing cells.
    """
    out = Path(out_dir or config.out_dir)
    cdir = out / "cells"
    cdir.mkdir(parents=True, exist_ok=True)
    config.save(out / "config.json")
    cells = grid_cells(config)
    todo = [c for c in cells if not (cdir / f"{_cell_name(c)}.json").exists()]
    cfg_dict = config.to_dict()
    failed, updates, busy = [], 0, 0.0
    t0 = time.perf_counter()
    if todo:
        # ladders are built once up front so workers only read them
        _init_worker(cfg_dict, out)
        if config.threads > 1 and len(todo) > 1:
            ctx = mp.get_context("spawn")
            with ctx.Pool(config.threads, _init_worker, (cfg_dict, out)) as pool:
                results = pool.imap_unordered(_work, todo, chunksize=1)
                for item in results:
                    updates, busy = _store(item, cdir, failed, updates, busy, progress)
        else:
            for c in todo:
                updates, busy = _store(_work(c), cdir, failed, updates, busy, progress)
    wall = time.perf_counter() - t0
    records = []
    for c in cells:
        p = cdir / f"{_cell_name(c)}.json"
        if p.exists():
            records.extend(json.loads(p.read_text()))
    records.sort(key=record_sort_key)
    write_records(out / "records.csv", records)
    summary = dict(
        schema_version=SCHEMA_VERSION,
        config_hash=config.hash,
        algorithm=config.algorithm,
        seeds=list(config.seeds),
        cells=len(cells),
        cells_run=len(todo),
        records=len(records),
        expected_records=len(config.instances) * len(config.seeds) * len(config.t_grid),
        failed=[dict(cell=_cell_name(c), error=e) for c, e in failed],
    )
    if config.algorithm.startswith("apt") and records:
        ex = records[0]["extra"]
        summary["replicas_per_run"] = ex["M"] * ex["m_icm"]
        summary["ladder_rungs"] = ex["M"]
    (out / "summary.json").write_text(json.dumps(summary, sort_keys=True, indent=2) + "\n")
    summary["wall_seconds"] = wall
    summary["attempted_updates"] = updates
    summary["flips_per_second"] = updates / busy if busy > 0 else 0.0
    return summary


def _store(item, cdir, failed, updates, busy, progress):
    cell, recs, n_up, dt, err = item
    if err is not None:
        failed.append((cell, err))
    else:
        path = cdir / f"{_cell_name(cell)}.json"
        tmp = path.with_suffix(".tmp")
        tmp.write_text(canonical_json(recs))
        tmp.replace(path)
        updates += n_up
        busy += dt
    if progress is not None:
        progress(cell, err)
    return updates, busy
