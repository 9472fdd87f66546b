import csv
import json

import numpy as np
import pytest

from distmsf import cli, oracle
from distmsf.graph import encode_edges, empty_edges, read_binary


def test_generate_grid(tmp_path, capsys):
    out = tmp_path / "g.bin"
    assert cli.main(["generate", "grid2d:rows=4,cols=4", str(out)]) == 0
    n, edges = read_binary(out)
    assert n == 16 and edges.shape[0] == 48
    assert "m=48" in capsys.readouterr().out


def test_generate_empty_is_header_only(tmp_path):
    out = tmp_path / "e.bin"
    assert cli.main(["generate", "gnm:n=5,m=0", str(out)]) == 0
    assert out.stat().st_size == 16 + len(encode_edges(empty_edges()))
    assert read_binary(out)[1].shape[0] == 0


def test_generate_byte_identical(tmp_path):
    a, b = tmp_path / "a.bin", tmp_path / "b.bin"
    cli.main(["generate", "rmat:scale=8,edges=600", str(a), "-p", "1"])
    cli.main(["generate", "rmat:scale=8,edges=600", str(b), "-p", "3"])
    assert a.read_bytes() == b.read_bytes()


def test_run_verify_and_csv(tmp_path, capsys):
    table = tmp_path / "runs.csv"
    code = cli.main(["run", "gnm:n=300,m=1500", "--algo", "filter", "-p", "3", "--verify", "--csv", str(table)])
    assert code == 0
    report = json.loads(capsys.readouterr().out)
    assert report["verified"] is True
    assert set(cli.CSV_FIELDS) - {"status", "reps", "time_mean", "time_var", "throughput_mean"} <= set(report)
    rows = list(csv.DictReader(open(table)))
    assert len(rows) == 1 and rows[0]["status"] == "ok"


def test_algorithms_agree():
    spec = "gnm:n=400,m=2400,seed=7"
    ref = cli.run_once(spec, "kruskal", 1)
    for algo, p in [("filter", 1), ("boruvka", 4), ("filter", 4)]:
        r = cli.run_once(spec, algo, p)
        assert r["msf_total_weight"] == ref["msf_total_weight"]
        assert r["msf_digest"] == ref["msf_digest"]


def test_grid_and_direct_alltoall_agree():
    spec = "rgg2d:n=500,deg=6"
    a = cli.run_once(spec, "boruvka", 9, alltoall="grid")
    b = cli.run_once(spec, "boruvka", 9, alltoall="direct")
    assert a["msf_total_weight"] == b["msf_total_weight"] and a["msf_digest"] == b["msf_digest"]


def test_text_input(tmp_path):
    f = tmp_path / "g.txt"
    f.write_text("1 2 4\n2 3 2\n1 3 1\n3 4 7\n")
    r = cli.run_once(str(f), "boruvka", 2, verify=True)
    assert r["msf_total_weight"] == 10 and r["verified"]


def test_verify_failure_exit_code(monkeypatch, capsys):
    monkeypatch.setattr(oracle, "verify_msf", lambda *a: oracle.Verdict.CYCLE)
    assert cli.main(["run", "grid2d:rows=3,cols=3", "-p", "2", "--verify"]) == 2


def test_errors_exit_one(capsys):
    assert cli.main(["run", "gnm:n=3,m=99"]) == 1
    assert cli.main(["run", "/nonexistent/file.bin"]) == 1
    assert cli.main(["bench"]) == 1


@pytest.mark.parametrize("algo", ["boruvka", "filter"])
def test_deterministic_reports(algo):
    a = cli.run_once("rmat:scale=9,edges=3000", algo, 4, seed=11)
    b = cli.run_once("rmat:scale=9,edges=3000", algo, 4, seed=11)
    assert cli.stable_view(a) == cli.stable_view(b)


def test_bench_matrix(tmp_path):
    ini = tmp_path / "m.ini"
    ini.write_text("[matrix]\nalgos = boruvka, filter\np = 1, 2, 4\n"
                   "specs = gnm:n=200,m=800; grid2d:rows=10,cols=10\nreps = 2\nwarmup = 0\n")
    out = tmp_path / "m.csv"
    assert cli.main(["bench", str(ini), "-o", str(out)]) == 0
    rows = list(csv.DictReader(open(out)))
    assert len(rows) == 12
    assert all(r["status"] == "ok" and r["time_var"] != "" for r in rows)
    assert len({(r["algorithm"], r["p"], r["graph"]) for r in rows}) == 12


def test_phase_coverage():
    r = cli.run_once("gnm:n=3000,m=24000", "boruvka", 4)
    assert sum(r["phase_times"].values()) >= 0.95 * r["total_time"]
    r = cli.run_once("gnm:n=3000,m=24000", "filter", 4)
    assert sum(r["phase_times"].values()) >= 0.95 * r["total_time"]
