import csv
import json

import pytest

from pbitglass.cli import main
from pbitglass.instance import LatticeSpec, build_ea_lattice, read_ground_energies, save_instance
from pbitglass.records import (
    SCHEMA_VERSION,
    RunConfig,
    SchemaError,
    config_hash,
    read_records,
    write_records,
)
from pbitglass.runner import grid_cells, run_grid


@pytest.fixture(scope="module")
def inst_files(tmp_path_factory):
    d = tmp_path_factory.mktemp("inst")
    paths = []
    for k in range(2):
        p = d / f"inst_{k}.txt"
        save_instance(build_ea_lattice(LatticeSpec(3, 3, 3), 40 + k), p, comments=["lattice 3 3 3"])
        paths.append(str(p))
    return paths


def _sqa_config(paths, tmp_path, **kw):
    base = dict(algorithm="dtsqa", instances=paths, seeds=[0, 1], t_grid=[5, 20], R=4,
                out_dir=str(tmp_path / "runs"))
    base.update(kw)
    return RunConfig(**base)


_APT_KW = dict(algorithm="apt-icm", chains=4, pre_sweeps=200, pre_tail=50, t_grid=[10, 40])


# -- configs and records ------------------------------------------------------------------

def test_config_validation(inst_files, tmp_path):
    cfg = _sqa_config(inst_files, tmp_path)
    path = tmp_path / "c.json"
    cfg.save(path)
    assert RunConfig.load(path) == cfg
    assert RunConfig.load(path).hash == cfg.hash
    assert config_hash(dict(cfg.to_dict(), threads=8)) == cfg.hash
    assert config_hash(dict(cfg.to_dict(), R=8)) != cfg.hash
    bad = [dict(algorithm="sa"), dict(seeds=[]), dict(seeds=[-1]), dict(t_grid=[10, 5]), dict(t_grid=[0]),
           dict(R=0), dict(P=1.5), dict(pre_tail=1), dict(beta_per_replica=0.0), dict(ladder="nope.csv"),
           dict(algorithm="apt-icm", m_icm=1), dict(algorithm="apt", sweeps_per_swap=3, t_grid=[10])]
    for kw in bad:
        with pytest.raises(ValueError):
            _sqa_config(inst_files, tmp_path, **kw)
    with pytest.raises(SchemaError):
        _sqa_config(inst_files, tmp_path, schema_version=SCHEMA_VERSION + 1)
    with pytest.raises(ValueError, match="unknown"):
        RunConfig.from_dict(dict(cfg.to_dict(), colour="red"))


def test_records_round_trip(tmp_path):
    rec = dict(schema_version=SCHEMA_VERSION, config_hash="abc", algorithm="apt", instance_id="x", L=8, n=512,
               seed=3, R=None, P=1, t_a=100, best_energy=-812.0, mean_energy=None,
               extra={"M": 30, "trajectory": [1.5, 2.0]})
    write_records(tmp_path / "r.csv", [rec])
    assert read_records(tmp_path / "r.csv") == [rec]
    text = (tmp_path / "r.csv").read_text().replace("\n1,abc", "\n2,abc")
    (tmp_path / "bad.csv").write_text(text)
    with pytest.raises(SchemaError):
        read_records(tmp_path / "bad.csv")
    (tmp_path / "cols.csv").write_text("a,b\n1,2\n")
    with pytest.raises(SchemaError):
        read_records(tmp_path / "cols.csv")


# -- runner -------------------------------------------------------------------------------

def test_grid_cardinality(inst_files, tmp_path):
    cfg = _sqa_config(inst_files, tmp_path, seeds=[0, 1, 2], t_grid=[5, 10, 20])
    assert len(grid_cells(cfg)) == 2 * 3 * 3
    apt = _sqa_config(inst_files, tmp_path, seeds=[0, 1, 2], **_APT_KW)
    assert len(grid_cells(apt)) == 2 * 3
    s = run_grid(cfg)
    assert s["records"] == s["expected_records"] == 18 and not s["failed"]
    recs = read_records(tmp_path / "runs" / "records.csv")
    assert {(r["instance_id"], r["seed"], r["t_a"]) for r in recs} == {
        (r["instance_id"], s_, t) for r in recs for s_ in (0, 1, 2) for t in (5, 10, 20)}
    assert all(r["config_hash"] == cfg.hash and r["n"] == 27 and r["L"] == 3 for r in recs)


@pytest.mark.parametrize("kw", [dict(), dict(algorithm="dtsqa-independent", P=3), _APT_KW,
                                dict(_APT_KW, algorithm="apt", m_icm=1)])
def test_rerun_bit_identical(inst_files, tmp_path, kw):
    a = _sqa_config(inst_files, tmp_path, out_dir=str(tmp_path / "a"), **kw)
    b = _sqa_config(inst_files, tmp_path, out_dir=str(tmp_path / "b"), **kw)
    sa = run_grid(a)
    run_grid(b)
    assert not sa["failed"]
    ra = (tmp_path / "a" / "records.csv").read_bytes()
    assert ra == (tmp_path / "b" / "records.csv").read_bytes()
    assert (tmp_path / "a" / "summary.json").read_bytes() == (tmp_path / "b" / "summary.json").read_bytes()
    assert sa["records"] == sa["expected_records"]


def test_resume(inst_files, tmp_path):
    cfg = _sqa_config(inst_files, tmp_path)
    run_grid(cfg)
    full = (tmp_path / "runs" / "records.csv").read_bytes()
    cells = sorted((tmp_path / "runs" / "cells").glob("*.json"))
    for p in cells[::2]:
        p.unlink()
    s = run_grid(cfg)
    assert s["cells_run"] == len(cells[::2])
    assert (tmp_path / "runs" / "records.csv").read_bytes() == full
    assert run_grid(cfg)["cells_run"] == 0


def test_apt_summary_replicas(inst_files, tmp_path):
    s = run_grid(_sqa_config(inst_files, tmp_path, **_APT_KW))
    recs = read_records(tmp_path / "runs" / "records.csv")
    assert s["replicas_per_run"] == recs[0]["extra"]["M"] * 4 == s["ladder_rungs"] * 4
    assert [r["t_a"] for r in recs[:2]] == [10, 40]


def test_failed_cell_reported(tmp_path):
    bad = tmp_path / "bad.txt"
    bad.write_text("3\n0 1 x\n")
    s = run_grid(RunConfig(algorithm="dtsqa", instances=[str(bad)], t_grid=[5], R=2, out_dir=str(tmp_path / "o")))
    assert len(s["failed"]) == 1 and s["records"] == 0


# -- command line -------------------------------------------------------------------------

def test_cli_generate_deterministic(tmp_path, capsys):
    for d in ("a", "b"):
        assert main(["generate", "--size", "3", "--count", "3", "--seed", "4", "--out-dir", str(tmp_path / d)]) == 0
    for f in ("manifest.csv", "inst_00000.txt", "inst_00002.txt"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
    rows = list(csv.DictReader(open(tmp_path / "a" / "manifest.csv")))
    assert len(rows) == 3 and rows[0]["n_edges"] == "63"
    assert main(["generate", "--size", "3", "--count", "0", "--out-dir", str(tmp_path / "e")]) == 0
    assert list(csv.DictReader(open(tmp_path / "e" / "manifest.csv"))) == []


def test_cli_exit_codes(tmp_path, capsys):
    with pytest.raises(SystemExit) as e:
        main(["generate", "--size", "0", "--count", "1", "--out-dir", str(tmp_path)])
    assert e.value.code == 1
    with pytest.raises(SystemExit) as e:
        main(["frobnicate"])
    assert e.value.code == 1
    assert main(["run", "--algorithm", "dtsqa"]) == 1
    bad = tmp_path / "bad.txt"
    bad.write_text("2\n0 5 1\n")
    assert main(["color", "--instance", str(bad)]) == 2
    assert "pbitglass:" in capsys.readouterr().err


def test_cli_color(tmp_path, capsys, inst_files):
    assert main(["color", "--instance", inst_files[0], "--replicas", "3"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["n"] == 81 and out["replicas"] == 3 and out["proper"] and out["colors"] >= 3


def test_cli_end_to_end(tmp_path, capsys):
    d = tmp_path / "inst"
    assert main(["generate", "--shape", "4", "4", "4", "--count", "2", "--seed", "1", "--out-dir", str(d)]) == 0
    assert main(["ground-truth", "--manifest", str(d / "manifest.csv"), "--budget-sweeps", "300", "--chains", "4",
                 "--pre-sweeps", "200", "--pre-tail", "50", "--out", str(tmp_path / "E0.csv")]) == 0
    ground = read_ground_energies(tmp_path / "E0.csv")
    assert len(ground) == 2
    for R, out in ((4, "r4"), (8, "r8")):
        assert main(["run", "--algorithm", "dtsqa-independent", "--manifest", str(d / "manifest.csv"),
                     "--seeds", "0", "1", "--t-grid", "2", "4", "8", "--replicas", str(R), "--independent-runs", "3",
                     "--out-dir", str(tmp_path / out)]) == 0
    capsys.readouterr()
    recs = [str(tmp_path / o / "records.csv") for o in ("r4", "r8")]
    for mode in ("residual", "fit", "evt"):
        out = tmp_path / f"{mode}.csv"
        assert main(["analyze", "--records", *recs, "--ground", str(tmp_path / "E0.csv"), "--mode", mode,
                     "--p-values", "1", "2", "--window", "2", "8", "--out", str(out)]) == 0, capsys.readouterr().err
        rows = list(csv.DictReader(open(out)))
        assert rows
    res = list(csv.DictReader(open(tmp_path / "residual.csv")))
    assert all(float(r["rho"]) >= 0 for r in res)
    assert (tmp_path / "evt_slopes.csv").exists()
    assert main(["analyze", "--records", *recs, "--ground", str(tmp_path / "E0.csv"), "--mode", "collapse",
                 "--out", str(tmp_path / "c.csv")]) == 2


def test_cli_run_config_file_and_overrides(tmp_path, capsys, inst_files):
    cfg = _sqa_config(inst_files, tmp_path, out_dir=str(tmp_path / "x"))
    cfg.save(tmp_path / "c.json")
    assert main(["run", "--config", str(tmp_path / "c.json"), "--t-grid", "7", "--throughput"]) == 0
    out = capsys.readouterr().out
    recs = read_records(tmp_path / "x" / "records.csv")
    assert {r["t_a"] for r in recs} == {7}
    assert "flips" in out or "throughput" in out
