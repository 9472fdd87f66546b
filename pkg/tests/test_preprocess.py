import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import distributed, random_canonical
from distmsf import oracle
from distmsf.graph import build_distributed_graph, dedup_sorted, edges_from_tuples, sort_edges
from distmsf.preprocess import (
    dedup_parallel_hashed,
    local_boruvka_guarded,
    local_preprocessing,
    reestablish_sorted,
    should_preprocess,
)
from distmsf.transport import run_spmd


def one_pe(rows):
    e = sort_edges(edges_from_tuples(rows))
    return run_spmd(1, lambda c: build_distributed_graph(c, e, check=False))[0]


def test_should_preprocess():
    assert should_preprocess(one_pe([(1, 2, 1, 0), (2, 1, 1, 0)]))
    rows = [(1, 2, 1, 0), (2, 1, 1, 0)] + [(1, 100 + k, 1, k + 1) for k in range(9)] + \
           [(2, 200 + k, 1, k + 20) for k in range(9)]
    assert should_preprocess(one_pe(rows))          # exactly 2 of 20
    assert not should_preprocess(one_pe(rows + [(2, 300, 1, 99)]))
    gnm_like = [(1, 2, 1, 0)] + [(1, 100 + k, 1, k + 1) for k in range(49)]
    assert not should_preprocess(one_pe(gnm_like))  # 2% local
    assert not should_preprocess(one_pe([]))


def test_guarded_examples():
    res = local_boruvka_guarded(one_pe([(1, 2, 1, 0), (2, 1, 1, 0), (2, 3, 2, 1), (3, 2, 2, 1)]))
    assert sorted(res.mst_edge_ids.tolist()) == [0, 1]
    assert res.contracted_edges.shape[0] == 0
    assert len(set(res.local_label.values.tolist())) == 1
    # vertex 1: local edge weight 5, cut edge weight 3 -> stays
    res = local_boruvka_guarded(one_pe([(1, 2, 5, 0), (1, 9, 3, 1), (2, 1, 5, 0), (2, 8, 1, 2)]))
    assert res.mst_edge_ids.tolist() == []
    res = local_boruvka_guarded(one_pe([(1, 8, 1, 0), (2, 9, 1, 1)]))
    assert res.mst_edge_ids.tolist() == [] and res.contracted_edges.shape[0] == 2
    assert np.array_equal(res.local_label.keys, res.local_label.values)


def _audit(graph, e):
    """No non-shared vertex of ``e`` keeps a contractible local edge as its minimum."""
    shared = graph.shared_vertices
    for u in np.unique(e["src"]):
        if int(u) in shared:
            continue
        mine = e[e["src"] == u]
        best = mine[np.lexsort((mine["id"], mine["w"]))[0]]
        d = int(best["dst"])
        assert not (graph.is_local(d) and d not in shared), f"vertex {u} still has a local minimum"


@pytest.mark.parametrize("p", [1, 2, 3, 4])
@pytest.mark.parametrize("seed", range(6))
def test_preprocessing_safety_fixed_point_audit(p, seed):
    n = [30, 120, 400][seed % 3]
    canon = random_canonical(n, 3 * n, seed)
    # make the input local-heavy: keep mostly short-range edges
    canon = canon[np.abs(canon["dst"] - canon["src"]) < max(4, n // 8)]

    def body(comm, g, everything):
        first = local_boruvka_guarded(g)
        _audit(g, first.contracted_edges)
        # same ownership, contracted edges: nothing left to contract
        again = local_boruvka_guarded(dataclasses.replace(g, edges=sort_edges(first.contracted_edges)))
        out, ids, info = local_preprocessing(comm, g)
        return everything, ids, again.mst_edge_ids, info
    res = distributed(p, canon, body)
    ref = oracle.kruskal(res[0][0])[0]
    pre = set(np.concatenate([r[1] for r in res]).tolist())
    assert pre <= ref
    assert all(r[2].shape[0] == 0 for r in res)


def test_dedup_examples():
    e = edges_from_tuples([(1, 2, 3, 0), (1, 2, 7, 1), (1, 2, 9, 2)])
    assert dedup_parallel_hashed(e)[["src", "dst", "w"]].tolist() == [(1, 2, 3)]
    e = sort_edges(edges_from_tuples([(1, 2, 3, 0), (2, 3, 1, 1), (3, 1, 4, 2)]))
    assert np.array_equal(dedup_parallel_hashed(e), e)


@pytest.mark.parametrize("backend", ["numpy", "numba"])
@settings(max_examples=10, deadline=None)
@given(seed=st.integers(0, 2**31))
def test_dedup_matches_sort_scan(backend, seed):
    rng = np.random.default_rng(seed)
    m = 10_000
    e = edges_from_tuples(list(zip(rng.integers(0, 60, m).tolist(), rng.integers(0, 60, m).tolist(),
                                   rng.integers(1, 255, m).tolist(), range(m))))
    got = dedup_parallel_hashed(e, backend=backend)
    assert np.array_equal(got, dedup_sorted(sort_edges(e)))


def _reestablish(old, new):
    def prog(c):
        g = build_distributed_graph(c, sort_edges(edges_from_tuples(old[c.rank])))
        out = reestablish_sorted(c, edges_from_tuples(new[c.rank]), g)
        return out.edges[["src", "dst"]].tolist(), c.stats.counters["reestablish_fallback"]
    return run_spmd(len(old), prog)


def test_reestablish_without_shared():
    res = _reestablish([[(1, 2, 1, 0)], [(2, 1, 1, 0)]], [[(1, 4, 1, 0), (1, 3, 1, 1)], [(2, 9, 1, 2)]])
    assert [r[0] for r in res] == [[(1, 3), (1, 4)], [(2, 9)]]


def test_reestablish_merges_boundary_run():
    pad0 = [(2, 3, 1, 10), (3, 2, 1, 10), (4, 1, 1, 11)]
    pad1 = [(10, 11, 1, 12), (11, 10, 1, 12), (12, 9, 1, 13)]
    old = [[(1, 5, 1, 0), (5, 1, 1, 0), (5, 2, 1, 1)] + pad0, [(5, 7, 1, 2), (5, 9, 1, 3), (9, 5, 1, 3)] + pad1]
    new = [[(5, 8, 1, 0), (1, 5, 1, 1), (5, 3, 1, 2)] + pad0, [(5, 4, 1, 3), (5, 9, 1, 4), (9, 5, 1, 5)] + pad1]
    res = _reestablish(old, new)
    assert res[0][0] == [(1, 5), (2, 3), (3, 2), (4, 1), (5, 3), (5, 4)]
    assert res[1][0] == [(5, 8), (5, 9), (9, 5), (10, 11), (11, 10), (12, 9)]
    assert res[0][1] == 0


def test_reestablish_fallback():
    old = [[(1, 5, 1, 0), (5, 1, 1, 0)], [(5, 7, 1, 1), (5, 9, 1, 2)], [(7, 5, 1, 1), (9, 5, 1, 2)]]
    new = [[(5, 9, 1, 0), (1, 5, 1, 1)], [(5, 2, 1, 2), (5, 3, 1, 3)], [(7, 5, 1, 4), (9, 5, 1, 5)]]
    res = _reestablish(old, new)
    glued = [x for r in res for x in r[0]]
    assert glued == sorted(glued)
    assert res[0][1] == 1
