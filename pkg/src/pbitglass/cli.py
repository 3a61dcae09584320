"""Command-line front end: ``generate``, ``color``, ``run``, ``ground-truth``, ``analyze``.

Exit codes: 0 success, 1 usage error, 2 runtime failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
import warnings
from pathlib import Path

import numpy as np

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _positive(s):
    v = int(s)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {s}")
    return v


def _nonneg(s):
    v = int(s)
    if v < 0:
        raise argparse.ArgumentTypeError(f"expected a non-negative integer, got {s}")
    return v


def _instance_paths(args):
    paths = list(args.instances or [])
    if getattr(args, "manifest", None):
        mdir = Path(args.manifest).parent
        with open(args.manifest, newline="") as fh:
            paths.extend(str(mdir / row["file"]) for row in csv.DictReader(fh))
    if not paths:
        raise UsageError("no instances given (use --instances or --manifest)")
    missing = [p for p in paths if not Path(p).exists()]
    if missing:
        raise FileNotFoundError(f"instance file not found: {missing[0]}")
    return paths


# -- generate ------------------------------------------------------------------------------

def cmd_generate(args):
    from ._rng import derive_seed
    from .instance import LatticeSpec, build_ea_lattice, instance_id, save_instance

    shape = args.shape or [args.size] * 3
    missing = frozenset()
    if args.missing_sites:
        text = Path(args.missing_sites).read_text().split()
        missing = frozenset(int(v) for v in text)
    spec = LatticeSpec(*shape, missing_sites=missing)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for k in range(args.count):
        s = derive_seed(args.seed, k)
        g = build_ea_lattice(spec, s)
        name = f"inst_{k:05d}.txt"
        save_instance(g, out / name, comments=[f"lattice {spec.Lx} {spec.Ly} {spec.Lz}", f"seed {s}"])
        rows.append([k, name, instance_id(g), s, g.n, g.n_edges])
    with open(out / "manifest.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["index", "file", "instance_id", "seed", "n", "n_edges"])
        w.writerows(rows)
    print(f"wrote {args.count} instances to {out}")
    return EXIT_OK


# -- color ---------------------------------------------------------------------------------

def cmd_color(args):
    from .coloring import dsatur, extend_coloring_replicas, verify_coloring, write_coloring_csv
    from .dtsqa import _materialize
    from .instance import load_instance

    g = load_instance(args.instance)
    col = dsatur(g)
    target = g
    if args.replicas > 1:
        col = extend_coloring_replicas(col, args.replicas, g)
        target = _materialize(g, args.replicas, 1.0)
    ok = verify_coloring(target, col)
    if args.out:
        write_coloring_csv(args.out, col)
    print(json.dumps(dict(n=col.n, colors=col.num_colors, replicas=args.replicas, proper=ok)))
    return EXIT_OK if ok else EXIT_RUNTIME


# -- run -----------------------------------------------------------------------------------

_RUN_FIELDS = ("algorithm", "seeds", "t_grid", "R", "P", "beta_per_replica", "gamma_start", "alpha",
               "beta0", "chains", "pre_sweeps", "pre_tail", "tolerance", "m_icm", "sweeps_per_swap",
               "ladder", "record_replicas", "record_correlation", "threads")


def _run_config(args):
    from .records import RunConfig

    if args.config:
        d = json.loads(Path(args.config).read_text())
    else:
        d = {}
    for name in _RUN_FIELDS:
        v = getattr(args, name, None)
        if v is not None and v is not False:
            d[name] = v
    if args.instances or args.manifest:
        d["instances"] = _instance_paths(args)
    if args.out_dir:
        d["out_dir"] = args.out_dir
    if "algorithm" not in d or "instances" not in d:
        raise UsageError("run needs --algorithm and instances (flags or --config)")
    try:
        return RunConfig.from_dict(d)
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from None


def cmd_run(args):
    from .runner import run_grid

    config = _run_config(args)
    missing = [p for p in config.instances if not Path(p).exists()]
    if missing:
        raise FileNotFoundError(f"instance file not found: {missing[0]}")

    def progress(cell, err):
        if err:
            print(f"cell {cell} failed: {err}", file=sys.stderr)

    summary = run_grid(config, progress=progress)
    lines = [f"records: {summary['records']} / {summary['expected_records']} "
             f"(cells run: {summary['cells_run']} of {summary['cells']})",
             f"config hash: {summary['config_hash']}"]
    if "replicas_per_run" in summary:
        lines.append(f"replicas per run: {summary['replicas_per_run']} "
                     f"({summary['ladder_rungs']} temperatures x {config.m_icm})")
    if args.throughput:
        lines.append(f"throughput: {summary['flips_per_second']:.4g} attempted flips/s "
                     f"over {summary['attempted_updates']} updates")
    print("\n".join(lines))
    if summary["failed"]:
        print(f"{len(summary['failed'])} cells failed", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


# -- ground-truth --------------------------------------------------------------------------

def cmd_ground_truth(args):
    from .apt import AptConfig
    from .instance import estimate_ground_energy, load_instance, write_ground_energies

    cfg = AptConfig(alpha=args.alpha, beta0=args.beta0, chains=args.chains, pre_sweeps=args.pre_sweeps,
                    pre_tail=args.pre_tail, tolerance=args.tolerance, m_icm=args.m_icm)
    records = []
    for p in _instance_paths(args):
        g = load_instance(p)
        rec = estimate_ground_energy(g, args.budget_sweeps, cfg, seed=args.seed, n_restarts=args.restarts)
        records.append(rec)
        print(f"{rec.instance_id} E0={rec.E0:g} err/site={rec.estimate_error_per_site:.3g}")
    write_ground_energies(args.out, records)
    return EXIT_OK


# -- analyze -------------------------------------------------------------------------------

def _write_rows(path, rows, header):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([repr(v) if isinstance(v, float) else v for v in (r[h] for h in header)])


def cmd_analyze(args):
    from .analysis import pipeline as pl
    from .instance import read_ground_energies
    from .records import read_records

    records = []
    for p in args.records:
        records.extend(read_records(p))
    if not records:
        raise ValueError("no records to analyze")
    ground = read_ground_energies(args.ground)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        pl.audit_ground_energies(records, ground)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    out = Path(args.out)
    window = tuple(args.window) if args.window else "auto"

    if args.mode == "evt":
        recs = [r for r in records if r["algorithm"] == "dtsqa-independent"]
        if not recs:
            raise ValueError("evt mode needs dtsqa-independent records")
        t_grid = sorted({r["t_a"] for r in recs})
        ids = sorted({r["instance_id"] for r in recs})
        per = {(i, t): [] for i in ids for t in t_grid}
        for r in sorted(recs, key=lambda r: (r["instance_id"], r["seed"], r["t_a"])):
            per[(r["instance_id"], r["t_a"])].extend(r["extra"]["run_minima"])
        runs = min(len(v) for v in per.values())
        minima = np.array([[per[(i, t)][:runs] for t in t_grid] for i in ids]).transpose(0, 2, 1)
        E0 = np.array([ground[i].E0 for i in ids])
        rows = pl.evt_table(minima, E0, recs[0]["n"], t_grid, args.p_values, seed=args.seed)
        _write_rows(out, rows, ["P", "t_a", "rho_measured", "ci_lo", "ci_hi", "rho_predicted", "a_t", "b_t"])
        slopes = pl.evt_slopes(rows, None if window == "auto" else window)
        _write_rows(out.with_name(out.stem + "_slopes.csv"), slopes, ["P", "kappa_measured", "kappa_predicted"])
        print(f"wrote {out}")
        return EXIT_OK

    curves = pl.residual_curves(records, ground, seed=args.seed)
    if args.mode == "residual":
        rows = []
        for key, c in curves.items():
            meta = dict(zip(pl.GROUP_KEYS, key))
            for k in range(len(c)):
                rows.append(dict(meta, t_a=int(c.t_a[k]), rho=float(c.rho[k]), ci_lo=float(c.ci_lo[k]),
                                 ci_hi=float(c.ci_hi[k]), instances=c.per_instance.shape[0]))
        _write_rows(out, rows, list(pl.GROUP_KEYS) + ["t_a", "rho", "ci_lo", "ci_hi", "instances"])
    elif args.mode == "fit":
        rows = []
        for key, f in pl.fit_curves(curves, window, seed=args.seed).items():
            meta = dict(zip(pl.GROUP_KEYS, key))
            if isinstance(f, Exception):
                print(f"warning: no fit for {meta}: {f}", file=sys.stderr)
                continue
            rows.append(dict(meta, kappa_f=f.kappa_f, ci_lo=f.ci[0], ci_hi=f.ci[1], t_min=f.fit_window[0],
                             t_max=f.fit_window[1], n_points=f.n_points, log_prefactor=f.log_prefactor))
        _write_rows(out, rows, list(pl.GROUP_KEYS) + ["kappa_f", "ci_lo", "ci_hi", "t_min", "t_max",
                                                      "n_points", "log_prefactor"])
    else:
        rows = []
        by_alg = {}
        for key, c in curves.items():
            by_alg.setdefault((key[0], key[2], key[3]), []).append(c)
        for (alg, R, P), cs in by_alg.items():
            p = pl.collapse(cs, fix_b=args.fix_b)
            rows.append(dict(algorithm=alg, R=R, P=P, sizes=" ".join(str(c.L) for c in cs),
                             mu_exp=p.mu_exp, b_exp=p.b_exp, quality=p.quality))
        _write_rows(out, rows, ["algorithm", "R", "P", "sizes", "mu_exp", "b_exp", "quality"])
    print(f"wrote {out}")
    return EXIT_OK


# -- parser --------------------------------------------------------------------------------

def build_parser():
    p = _Parser(prog="pbitglass", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    g = sub.add_parser("generate", help="write random EA lattice instances and a manifest")
    shape = g.add_mutually_exclusive_group(required=True)
    shape.add_argument("--size", type=_positive, help="cube edge L (L x L x L)")
    shape.add_argument("--shape", type=_positive, nargs=3, metavar=("LX", "LY", "LZ"))
    g.add_argument("--count", type=_nonneg, required=True)
    g.add_argument("--seed", type=_nonneg, default=0)
    g.add_argument("--missing-sites", help="file with site indices to delete")
    g.add_argument("--out-dir", required=True)
    g.set_defaults(func=cmd_generate)

    c = sub.add_parser("color", help="DSATUR coloring of an instance or its replica network")
    c.add_argument("--instance", required=True)
    c.add_argument("--replicas", type=_positive, default=1)
    c.add_argument("--out")
    c.set_defaults(func=cmd_color)

    r = sub.add_parser("run", help="run a solver over an instance x seed x t_a grid")
    r.add_argument("--config", help="JSON run configuration; flags override its fields")
    r.add_argument("--algorithm", choices=("dtsqa", "dtsqa-independent", "apt", "apt-icm"))
    r.add_argument("--instances", nargs="+")
    r.add_argument("--manifest")
    r.add_argument("--seeds", type=_nonneg, nargs="+")
    r.add_argument("--t-grid", dest="t_grid", type=_positive, nargs="+")
    r.add_argument("--replicas", dest="R", type=_positive)
    r.add_argument("--independent-runs", dest="P", type=_positive)
    r.add_argument("--beta-per-replica", type=float)
    r.add_argument("--gamma-start", type=float)
    r.add_argument("--alpha", type=float)
    r.add_argument("--beta0", type=float)
    r.add_argument("--chains", type=_positive)
    r.add_argument("--pre-sweeps", type=_positive)
    r.add_argument("--pre-tail", type=_positive)
    r.add_argument("--tolerance", type=float)
    r.add_argument("--m-icm", type=_positive)
    r.add_argument("--sweeps-per-swap", type=_positive)
    r.add_argument("--ladder", help="per-instance, shared, or a ladder CSV")
    r.add_argument("--record-replicas", action="store_true")
    r.add_argument("--record-correlation", action="store_true")
    r.add_argument("--threads", type=_positive)
    r.add_argument("--out-dir")
    r.add_argument("--throughput", action="store_true", help="report attempted flips per second")
    r.set_defaults(func=cmd_run)

    t = sub.add_parser("ground-truth", help="estimate ground energies with APT+ICM")
    t.add_argument("--instances", nargs="+")
    t.add_argument("--manifest")
    t.add_argument("--budget-sweeps", type=_positive, required=True)
    t.add_argument("--restarts", type=_positive, default=1)
    t.add_argument("--seed", type=_nonneg, default=0)
    t.add_argument("--alpha", type=float, default=1.25)
    t.add_argument("--beta0", type=float, default=0.5)
    t.add_argument("--chains", type=_positive, default=100)
    t.add_argument("--pre-sweeps", type=_positive, default=10000)
    t.add_argument("--pre-tail", type=_positive, default=1000)
    t.add_argument("--tolerance", type=float)
    t.add_argument("--m-icm", type=_positive, default=4)
    t.add_argument("--out", required=True)
    t.set_defaults(func=cmd_ground_truth)

    a = sub.add_parser("analyze", help="residual curves, exponent fits, EVT tables, size collapse")
    a.add_argument("--records", nargs="+", required=True)
    a.add_argument("--ground", required=True, help="ground-energy CSV")
    a.add_argument("--mode", choices=("residual", "fit", "evt", "collapse"), required=True)
    a.add_argument("--window", type=float, nargs=2, metavar=("T_MIN", "T_MAX"))
    a.add_argument("--p-values", type=_positive, nargs="+", default=[1, 10, 50])
    a.add_argument("--fix-b", type=float)
    a.add_argument("--seed", type=_nonneg, default=0)
    a.add_argument("--out", required=True)
    a.set_defaults(func=cmd_analyze)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"pbitglass: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:
        print(f"pbitglass: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
