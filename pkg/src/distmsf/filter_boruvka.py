"""Filter-Borůvka: split edges at a sampled median, solve the light half,
drop heavy edges that became internal to a component, then solve the rest.

Component representatives live in a distributed parent array ``P`` that
the Borůvka rounds write to; every filter step reads roots out of it.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .boruvka import (
    BoruvkaConfig,
    EdgeArchive,
    MsfResult,
    boruvka_rounds,
    redistribute,
    redistribute_mst,
)
from .collectives import sampled_median, smart_alltoall
from .errors import CycleDetected, IndexOutOfRange, PivotDegenerate
from .graph import build_distributed_graph, global_vertex_count
from .timing import PhaseTimer
from .transport import partition_by_dest

MAX_PIVOT_RETRIES = 8
_KEY_DTYPE = np.dtype([("w", "<u4"), ("id", "<i8")])


@dataclass
class FilterConfig:
    sparsity_degree: int = 4
    min_edges_per_pe: int = 1000
    # gate for further partitioning; None means the same as min_edges_per_pe
    min_partition_edges_per_pe: int | None = None
    merge_back_fraction: float = 0.05
    sample_rate: float = 0.01
    preprocess: bool = True
    base_case_threshold: int | None = None
    trace: bool = False


class DistributedParentArray:
    """Array over vertex ids ``0..n-1``; PE i owns ``i*n//p .. (i+1)*n//p``."""

    def __init__(self, comm, n):
        self.n = int(n)
        self.p = comm.size
        self.bounds = np.array([i * self.n // self.p for i in range(self.p + 1)], dtype=np.int64)
        self.lo, self.hi = int(self.bounds[comm.rank]), int(self.bounds[comm.rank + 1])
        self.block = np.arange(self.lo, self.hi, dtype=np.int64)

    def owner(self, v):
        v = np.asarray(v, dtype=np.int64)
        if v.shape[0] and (v.min() < 0 or v.max() >= self.n):
            raise IndexOutOfRange(f"vertex outside 0..{self.n - 1}")
        return np.searchsorted(self.bounds, v, side="right") - 1

    def write(self, comm, vertices, roots):
        """Collective: ``P[vertices[k]] = roots[k]``."""
        vertices = np.asarray(vertices, dtype=np.int64)
        recs = np.empty(vertices.shape[0], dtype=[("v", "<i8"), ("r", "<i8")])
        recs["v"], recs["r"] = vertices, roots
        got = np.concatenate(smart_alltoall(comm, partition_by_dest(recs, self.owner(vertices), comm.size)))
        self.block[got["v"] - self.lo] = got["r"]

    def request(self, comm, vertices):
        """Collective: current ``P`` entries of ``vertices``."""
        vertices = np.asarray(vertices, dtype=np.int64)
        q, inv = np.unique(vertices, return_inverse=True)
        own = self.owner(q)
        batch = partition_by_dest(q, own, comm.size)
        replies = [self.block[r - self.lo] for r in smart_alltoall(comm, batch)]
        back = smart_alltoall(comm, replies)
        vals = np.empty(q.shape[0], dtype=np.int64)
        order = np.argsort(own, kind="stable")
        vals[order] = np.concatenate(back) if q.shape[0] else vals[:0]
        return vals[inv].reshape(vertices.shape)

    def compress(self, comm):
        """Collective pointer doubling until every entry is a root; returns iterations."""
        limit = math.ceil(math.log2(max(self.n, 2))) + 1
        iterations = 0
        while True:
            idx = np.flatnonzero(self.block != np.arange(self.lo, self.hi))
            grand = self.request(comm, self.block[idx])
            changed = grand != self.block[idx]
            self.block[idx] = grand
            if not comm.allreduce(bool(changed.any()), "or"):
                return iterations
            iterations += 1
            if iterations > limit:
                raise CycleDetected("parent array does not converge to roots")

    def gather(self, comm):
        return comm.allgatherv(self.block)


def request_labels(comm, vertices, parents):
    return parents.request(comm, vertices)


def compress_parents(comm, parents):
    return parents.compress(comm)


def is_sparse(comm, graph, n_remaining, cfg=None):
    cfg = cfg or FilterConfig()
    m = comm.allreduce(int(graph.edges.shape[0]))
    per_pe = max(cfg.min_edges_per_pe, cfg.min_partition_edges_per_pe or 0)
    return m <= cfg.sparsity_degree * n_remaining or m < per_pe * comm.size


def filter_edges(comm, heavy, parents):
    """Relabel heavy edges by their current roots; drop the ones inside a component.

    Returns ``(graph, discarded ids on this PE)``.
    """
    src = parents.request(comm, heavy["src"])
    dst = parents.request(comm, heavy["dst"])
    inside = src == dst
    out = heavy[~inside].copy()
    out["src"], out["dst"] = src[~inside], dst[~inside]
    return redistribute(comm, out), heavy["id"][inside]


@dataclass
class _State:
    cfg: FilterConfig
    parents: DistributedParentArray
    timer: PhaseTimer
    n_remaining: int
    found: list = field(default_factory=list)
    base_calls: int = 0
    max_depth: int = 0
    pivot_retries: int = 0
    merged_back: int = 0
    trace: list = field(default_factory=list)


def _pivot(comm, graph, state):
    e = graph.edges
    keys = np.empty(e.shape[0], dtype=_KEY_DTYPE)
    keys["w"], keys["id"] = e["w"], e["id"]
    total = comm.allreduce(int(e.shape[0]))
    for _ in range(MAX_PIVOT_RETRIES + 1):
        piv = sampled_median(comm, keys, state.cfg.sample_rate, fields=("w", "id"))
        light = (e["w"] < piv["w"]) | ((e["w"] == piv["w"]) & (e["id"] <= piv["id"]))
        nl = comm.allreduce(int(light.sum()))
        if 0 < nl < total:
            return light
        state.pivot_retries += 1
    raise PivotDegenerate("no pivot splits the edge set")


def _direct(comm, graph, state):
    bcfg = BoruvkaConfig(base_case_threshold=state.cfg.base_case_threshold, preprocess=False)
    ids, _, _ = boruvka_rounds(comm, graph, bcfg, state.timer, state.parents)
    state.found.append(ids)
    state.base_calls += 1


def _trace_event(comm, state, discarded):
    acc = comm.allgatherv(np.concatenate(state.found))
    state.trace.append({"discarded": comm.allgatherv(discarded), "accumulated": acc})


def rec_filter_mst(comm, graph, state, depth=0, has_parent=False):
    """Solve ``graph``; returns heavy edges handed back to the caller, if any."""
    state.max_depth = max(state.max_depth, depth)
    if is_sparse(comm, graph, state.n_remaining, state.cfg):
        _direct(comm, graph, state)
        return graph.edges[:0]
    with state.timer.phase("pivot_selection"):
        try:
            light = _pivot(comm, graph, state)
        except PivotDegenerate:
            light = None
    if light is None:
        _direct(comm, graph, state)
        return graph.edges[:0]
    with state.timer.phase("filter"):
        heavy = graph.edges[~light]
        light_graph = build_distributed_graph(comm, graph.edges[light], check=False)
    back = rec_filter_mst(comm, light_graph, state, depth + 1, True)
    heavy = np.concatenate((heavy, back))
    before = comm.allreduce(int(heavy.shape[0]))
    with state.timer.phase("filter"):
        compress_parents(comm, state.parents)
        heavy_graph, dropped = filter_edges(comm, heavy, state.parents)
        if state.cfg.trace:
            _trace_event(comm, state, dropped)
    after = comm.allreduce(int(heavy_graph.edges.shape[0]))
    if after == 0:
        return graph.edges[:0]
    if has_parent and after < state.cfg.merge_back_fraction * before:
        state.merged_back += 1
        return heavy_graph.edges
    # nothing can be handed back from here: the caller's heavy set is already filtered
    rec_filter_mst(comm, heavy_graph, state, depth + 1, False)
    return graph.edges[:0]


def filter_mst(comm, graph, cfg=None, timer=None):
    """Collective: MSF of ``graph`` by Filter-Borůvka (see :class:`MsfResult`)."""
    from .preprocess import local_preprocessing

    cfg = cfg or FilterConfig()
    timer = timer or PhaseTimer()
    with timer.phase("mst_redistribution"):
        archive = EdgeArchive(comm, graph)
    pre_ids = np.zeros(0, dtype=np.int64)
    info = {}
    if cfg.preprocess:
        with timer.phase("local_preprocessing"):
            graph, pre_ids, info = local_preprocessing(comm, graph)
    with timer.phase("filter"):
        top = graph.edges["src"].max() if graph.edges.shape[0] else -1
        n = comm.allreduce(int(top), "max") + 1
        parents = DistributedParentArray(comm, n)
        n_remaining = global_vertex_count(comm, graph)
    state = _State(cfg, parents, timer, n_remaining, found=[pre_ids])
    rec_filter_mst(comm, graph, state)
    with timer.phase("filter"):
        compress_parents(comm, parents)
    with timer.phase("mst_redistribution"):
        edges = redistribute_mst(comm, np.concatenate(state.found), archive)
        total = comm.allreduce(int(edges["w"].sum(dtype=np.int64)))
    info.update(base_calls=state.base_calls, max_depth=state.max_depth,
                pivot_retries=state.pivot_retries,
                merged_back=state.merged_back, n_remaining=n_remaining)
    res = MsfResult(edges, total, timer.as_dict(), [], pre_ids, info)
    res.trace = state.trace
    res.parents = parents
    return res
