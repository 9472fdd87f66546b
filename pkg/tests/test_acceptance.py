"""End-to-end exit criteria. Each test prints one PASS/FAIL line."""
import csv
import io
import json
import math
import time

import numpy as np
import pytest
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components, minimum_spanning_tree

from distmsf import cli, oracle
from distmsf.boruvka import BoruvkaConfig, mst
from distmsf.collectives import two_level_alltoall
from distmsf.filter_boruvka import FilterConfig, filter_mst
from distmsf.generators import gather_sorted, generate, num_vertices, parse_spec
from distmsf.graph import EDGE_DTYPE, decode_edges, encode_edges, sort_edges
from distmsf.transport import run_spmd

pytestmark = pytest.mark.acceptance

PS = (1, 2, 3, 4, 8, 16)
N_INSTANCES = 200


def report(capsys, name, ok, detail=""):
    with capsys.disabled():
        print(f"\n[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
    assert ok, f"{name}: {detail}"


def instance_spec(i):
    seed = 1000 + i
    kind, k = i % 5, i // 5
    if kind == 0:
        n = (64, 256, 1024, 4096)[k % 4]
        return f"gnm:n={n},m={n * (2, 4, 8, 16)[(k // 4) % 4]},seed={seed}"
    if kind == 1:
        r, c = ((8, 8), (16, 16), (32, 32), (64, 64), (17, 40))[k % 5]
        return f"grid2d:rows={r},cols={c},seed={seed}"
    if kind in (2, 3):
        n = (256, 1024, 4096)[k % 3]
        return f"rgg{kind}d:n={n},deg={(4, 8)[k % 2]},seed={seed}"
    scale = (8, 10, 12)[k % 3]
    return f"rmat:scale={scale},edges={8 << scale},seed={seed}"


def _solve(comm, spec, preprocess):
    g = generate(comm, spec)
    everything = comm.allgatherv(g.edges)
    t = 2 * comm.size
    b = mst(comm, g, BoruvkaConfig(base_case_threshold=t, preprocess=preprocess))
    f = filter_mst(comm, g, FilterConfig(base_case_threshold=t, preprocess=preprocess, trace=True))
    ids = [np.sort(comm.allgatherv(r.edges["id"])) for r in (b, f)]
    pre = [np.sort(comm.allgatherv(r.preprocess_ids)) for r in (b, f)]
    return dict(edges=everything, ids=ids, weights=[b.total_weight, f.total_weight], pre=pre,
                rounds=b.rounds, trace=f.trace, info=[b.info, f.info])


@pytest.fixture(scope="module")
def matrix():
    """All 200 instances, both algorithms; runs once and feeds several criteria."""
    start = time.perf_counter()
    runs = []
    for i in range(N_INSTANCES):
        spec = parse_spec(instance_spec(i))
        p = PS[i % len(PS)]
        out = run_spmd(p, _solve, args=(spec, (i // len(PS)) % 2 == 0), seed=i)[0]
        out.update(i=i, spec=str(spec), p=p, n=num_vertices(spec))
        runs.append(out)
    return runs, time.perf_counter() - start


def test_c1_oracle_equivalence(matrix, capsys):
    runs, elapsed = matrix
    bad = []
    for r in runs:
        ref, weight, _ = oracle.kruskal(r["edges"])
        ref = np.array(sorted(ref), dtype=np.int64)
        for algo, ids, w in zip(("boruvka", "filter"), r["ids"], r["weights"]):
            if not (np.array_equal(ids, ref) and w == weight):
                bad.append((r["spec"], r["p"], algo))
    ok = not bad and elapsed < 600
    report(capsys, "C1 oracle equivalence", ok,
           f"{2 * len(runs)} runs, {len(bad)} mismatches, {elapsed:.0f}s (limit 600s) {bad[:3]}")


def _scipy_weight_and_count(edges, n):
    canon = edges[edges["src"] < edges["dst"]]
    # lightest parallel per pair; scipy would otherwise sum duplicates
    order = np.lexsort((canon["w"], canon["dst"], canon["src"]))
    canon = canon[order]
    first = np.ones(canon.shape[0], dtype=bool)
    first[1:] = (canon["src"][1:] != canon["src"][:-1]) | (canon["dst"][1:] != canon["dst"][:-1])
    canon = canon[first]
    a = coo_matrix((canon["w"].astype(np.float64), (canon["src"], canon["dst"])), shape=(n, n)).tocsr()
    tree = minimum_spanning_tree(a)
    ncomp = connected_components(a, directed=False)[0]
    return int(round(tree.sum())), n - ncomp


def test_c2_weight_equivalence(matrix, capsys):
    runs, _ = matrix
    bad = []
    for r in runs:
        assert r["edges"]["w"].min() >= 1 and r["edges"]["w"].max() < 255
        weight, count = _scipy_weight_and_count(r["edges"], r["n"])
        for algo, ids, w in zip(("boruvka", "filter"), r["ids"], r["weights"]):
            if w != weight or ids.shape[0] != count:
                bad.append((r["spec"], r["p"], algo))
    report(capsys, "C2 weight-only equivalence", not bad, f"{2 * len(runs)} runs vs scipy, {len(bad)} mismatches")


def test_c3_round_bounds(matrix, capsys):
    runs, _ = matrix
    bad = []
    for r in runs:
        limit = math.ceil(math.log2(max(r["n"], 2))) + 1
        if len(r["rounds"]) > limit or not all(s.halved for s in r["rounds"]):
            bad.append((r["spec"], r["p"], len(r["rounds"]), limit))
    total = sum(len(r["rounds"]) for r in runs)
    report(capsys, "C3 round bounds and halving", not bad, f"{total} rounds checked, {len(bad)} violations")


def _alltoall_configs(comm):
    rng = np.random.default_rng([comm.size, comm.rank])
    dtype = np.dtype([("a", "<i8"), ("b", "<u4")])
    bad = 0
    for k in range(50):
        density = (0.0, 0.1, 0.5, 1.0)[k % 4]
        batch = []
        for j in range(comm.size):
            cnt = int(rng.integers(0, 6)) if rng.random() < density else 0
            b = np.zeros(cnt, dtype=dtype)
            b["a"] = rng.integers(-10**9, 10**9, cnt)
            b["b"] = j
            batch.append(b)
        got = two_level_alltoall(comm, batch)
        want = comm.alltoallv(batch)
        bad += any(g.tobytes() != w.tobytes() for g, w in zip(got, want))
    # per-phase destination counts of a full exchange
    full = [np.zeros(3, dtype=dtype) for _ in range(comm.size)]
    comm.stats.dest_counts.clear()
    two_level_alltoall(comm, full)
    return bad, list(comm.stats.dest_counts)


def test_c4_two_level_alltoall(capsys):
    bad = 0
    for p in range(1, 21):
        bad += sum(r[0] for r in run_spmd(p, _alltoall_configs))
    counts = [c for r in run_spmd(16, _alltoall_configs) for c in r[1]]
    ok = bad == 0 and max(counts) <= 2 * math.sqrt(16)
    report(capsys, "C4 two-level all-to-all", ok,
           f"p=1..20 x 50 batches, {bad} mismatches; p=16 max destinations per phase {max(counts)} (limit 8)")


def test_c5_filter_safety(matrix, capsys):
    runs, _ = matrix
    violations = discarded = 0
    for r in runs:
        e = r["edges"]
        ends = dict(zip(e["id"].tolist(), zip(e["src"].tolist(), e["dst"].tolist())))
        msf = set(r["ids"][1].tolist())
        for event in r["trace"]:
            uf = oracle.UnionFind()
            for i in event["accumulated"].tolist():
                uf.union(*ends[i])
            for i in event["discarded"].tolist():
                discarded += 1
                u, v = ends[i]
                violations += i in msf or uf.find(u) != uf.find(v)
    ok = violations == 0 and discarded > 0
    report(capsys, "C5 filter safety", ok, f"{discarded} discarded edges replayed, {violations} violations")


def _grid_preprocessing(comm):
    g = generate(comm, "grid2d:rows=64,cols=64")
    return mst(comm, g, BoruvkaConfig(base_case_threshold=8)).info


def test_c6_preprocessing(matrix, capsys):
    runs, _ = matrix
    violations = checked = 0
    for r in runs:
        ref = set(oracle.kruskal(r["edges"])[0])
        for pre in r["pre"]:
            checked += pre.shape[0]
            violations += len(set(pre.tolist()) - ref)
    info = run_spmd(4, _grid_preprocessing)[0]
    removed = 1 - info["vertices_after"] / info["vertices_before"]
    ok = violations == 0 and checked > 0 and removed >= 0.5
    report(capsys, "C6 preprocessing safety and effect", ok,
           f"{checked} preprocessing ids, {violations} outside the oracle; grid 64x64 p=4 removes {removed:.1%}")


def test_c7_compression(capsys):
    rng = np.random.default_rng(7)
    m = 10**6
    rand = np.zeros(m, dtype=EDGE_DTYPE)
    rand["src"] = np.sort(rng.integers(0, 2**31 - 1, m))
    rand["dst"] = rng.integers(0, 2**31 - 1, m)
    rand["w"] = rng.integers(0, 2**32 - 1, m, dtype=np.uint64)
    rand["id"] = rng.permutation(m)
    rand = sort_edges(rand)
    rand_ok = np.array_equal(decode_edges(encode_edges(rand)), rand)
    gen = run_spmd(1, lambda c: gather_sorted(c, generate(c, "gnm:n=131072,m=500000")))[0]
    blob = encode_edges(gen)
    ratio = len(blob) / (28 * gen.shape[0])
    ok = rand_ok and gen.shape[0] == m and np.array_equal(decode_edges(blob), gen) and ratio < 0.5
    report(capsys, "C7 compression", ok, f"round trips ok={rand_ok}, generator input at {ratio:.1%} of 28 B/edge")


def _cli_json(args, capsys):
    capsys.readouterr()
    assert cli.main(args) == 0
    return json.loads(capsys.readouterr().out)


def test_c8_determinism(capsys):
    cases = [["run", "rmat:scale=10,edges=8000", "--algo", a, "-p", p] for a in cli.ALGORITHMS for p in ("1", "6")]
    cases.append(["run", "rgg2d:n=2000,deg=6", "--algo", "filter", "-p", "9", "--alltoall", "grid"])
    same = 0
    for args in cases:
        a, b = (cli.stable_view(_cli_json(args, capsys)) for _ in range(2))
        same += a == b
    report(capsys, "C8 determinism", same == len(cases), f"{same}/{len(cases)} command lines byte-identical")


def _base_calls(comm, spec):
    return filter_mst(comm, generate(comm, spec)).info["base_calls"]


def test_c9_recursion_depth(capsys):
    within = total = 0
    for ratio in (4, 8, 16):
        limit = 2 * math.ceil(math.log2(ratio)) + 2
        for seed in range(50):
            calls = run_spmd(4, _base_calls, args=(f"gnm:n=4096,m={4096 * ratio},seed={seed}",))[0]
            within += calls <= limit
            total += 1
    report(capsys, "C9 filter recursion", within >= 0.95 * total, f"{within}/{total} seeds within the base-call bound")


def test_c10_weak_scaling_csv(capsys):
    buf = io.StringIO()
    assert cli.bench(cli.preset_matrix("weak-scaling"), buf) is not None
    rows = list(csv.DictReader(io.StringIO(buf.getvalue())))
    ps = [1, 2, 4, 8, 16]
    complete = all(r[f] != "" for r in rows for f in cli.CSV_FIELDS if f != "verified")
    ok = (complete and all(r["status"] == "ok" for r in rows)
          and [(r["algorithm"], int(r["p"])) for r in rows] == [(a, p) for a in ("boruvka", "filter") for p in ps]
          and all(int(r["m"]) == (1 << 14) * int(r["p"]) for r in rows))
    report(capsys, "C10 weak-scaling CSV", ok, f"{len(rows)} rows, complete={complete}")
