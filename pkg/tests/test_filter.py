import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import distributed, ids_of, random_canonical
from distmsf import oracle
from distmsf.errors import IndexOutOfRange, PeFailure
from distmsf.filter_boruvka import (
    DistributedParentArray,
    FilterConfig,
    compress_parents,
    filter_mst,
    is_sparse,
    request_labels,
)
from distmsf.graph import make_edges
from distmsf.transport import run_spmd

# small gates so that modest inputs actually recurse
EAGER = dict(min_edges_per_pe=4, sparsity_degree=1, sample_rate=0.5)


def solve(p, canon, **kw):
    cfg = FilterConfig(**{**EAGER, "base_case_threshold": 2 * p, **kw})
    return distributed(p, canon, lambda c, g, a: (filter_mst(c, g, cfg), a))


def test_is_sparse():
    canon = random_canonical(40, 50, 1)

    def body(comm, g, a):
        m = comm.allreduce(int(g.edges.shape[0]))
        return (m,
                is_sparse(comm, g, m // 4, FilterConfig(min_edges_per_pe=1)),
                is_sparse(comm, g, m // 4 - 1, FilterConfig(min_edges_per_pe=1)),
                is_sparse(comm, g, 1, FilterConfig(min_edges_per_pe=1000)),
                is_sparse(comm, g, 1, FilterConfig(min_edges_per_pe=1, min_partition_edges_per_pe=1000)))
    m, at_four, above, few, partition_gate = distributed(2, canon, body)[0]
    assert at_four and not above and few and partition_gate


def test_compress_identity_and_chain():
    def prog(c):
        P = DistributedParentArray(c, 8)
        ident = compress_parents(c, P)
        P.block[:] = np.minimum(np.arange(P.lo, P.hi) + 1, 7)
        chain = compress_parents(c, P)
        return ident, chain, P.gather(c).tolist()
    res = run_spmd(3, prog)
    assert res[0][0] == 0
    assert res[0][1] <= 3
    assert res[0][2] == [7] * 8


def test_request_labels_and_bounds():
    def prog(c):
        P = DistributedParentArray(c, 10)
        P.write(c, np.array([3, 9, 4]) if c.rank == 0 else np.zeros(0, np.int64),
                np.array([1, 1, 2]) if c.rank == 0 else np.zeros(0, np.int64))
        return request_labels(c, np.array([9, 3, 0, 9, 4]), P).tolist()
    assert all(r == [1, 1, 0, 1, 2] for r in run_spmd(4, prog))

    def bad(c):
        P = DistributedParentArray(c, 10)
        return request_labels(c, np.array([10]), P)
    with pytest.raises(PeFailure) as exc:
        run_spmd(2, bad)
    assert isinstance(exc.value.cause, IndexOutOfRange)


@pytest.mark.parametrize("pre", [False, True])
@settings(max_examples=25, deadline=None)
@given(p=st.integers(1, 5), n=st.integers(2, 120), deg=st.integers(1, 8), seed=st.integers(0, 2**31))
def test_matches_kruskal(pre, p, n, deg, seed):
    res = solve(p, random_canonical(n, n * deg, seed), preprocess=pre)
    ref, weight, _ = oracle.kruskal(res[0][1])
    assert ids_of([r[0] for r in res]) == ref
    assert all(r[0].total_weight == weight for r in res)


def replay_trace(trace, everything, msf_ids):
    """Every discarded edge closes a cycle in already accepted edges and is not in the MSF."""
    ends = {int(i): (int(s), int(d)) for s, d, i in zip(everything["src"], everything["dst"], everything["id"])}
    for event in trace:
        uf = oracle.UnionFind()
        for i in event["accumulated"].tolist():
            uf.union(*ends[i])
        for i in event["discarded"].tolist():
            assert i not in msf_ids
            u, v = ends[i]
            assert uf.find(u) == uf.find(v)


@pytest.mark.parametrize("p", [1, 2, 4])
@pytest.mark.parametrize("seed", range(4))
def test_filter_safety_trace(p, seed):
    res = solve(p, random_canonical(200, 1600, seed), trace=True, preprocess=False)
    r0 = res[0][0]
    ref = oracle.kruskal(res[0][1])[0]
    assert r0.trace, "expected at least one filter step"
    assert sum(e["discarded"].shape[0] for e in r0.trace) > 0
    replay_trace(r0.trace, res[0][1], ref)


@pytest.mark.parametrize("p", [1, 3])
def test_all_equal_weights(p):
    canon = random_canonical(100, 600, 5)
    canon["w"] = 7
    res = solve(p, canon)
    ref, weight, _ = oracle.kruskal(res[0][1])
    assert ids_of([r[0] for r in res]) == ref and res[0][0].total_weight == weight


def test_heavy_tail_pivot():
    # nearly every edge carries the maximum weight; the pivot must still split
    canon = random_canonical(150, 900, 9)
    canon["w"] = np.where(np.arange(canon.shape[0]) % 10 == 0, 1, 2**32 - 1)
    res = solve(2, canon)
    ref, weight, _ = oracle.kruskal(res[0][1])
    assert ids_of([r[0] for r in res]) == ref and res[0][0].total_weight == weight
    assert res[0][0].info["base_calls"] >= 2


def test_single_edge_and_empty_heavy():
    res = solve(2, make_edges(np.array([0]), np.array([1]), np.array([3])))
    assert res[0][0].total_weight == 3
