"""Distributed Borůvka MSF over a 1D-partitioned, sorted edge list.

Every comparison between edges uses the pair ``(w, id)``. Ids are global
ranks of the canonical edges in ``(lo, hi, w)`` order, so ``(w, id)`` orders
edges exactly like ``(w, lo, hi)`` and keeps doing so after endpoints are
relabelled.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .collectives import distributed_sort, exchange, smart_alltoall
from .errors import (
    CycleDetected,
    MissingGhostLabel,
    UnknownEdgeId,
    UnlabeledVertex,
    VertexCountOverThreshold,
)
from .graph import (
    SORT_FIELDS,
    build_distributed_graph,
    decode_edges,
    dedup_sorted,
    encode_edges,
    global_vertex_count,
    pe_range,
    vertex_home_pe,
)
from .timing import PhaseTimer
from .transport import partition_by_dest

DEFAULT_THRESHOLD = 35000
MSF_DTYPE = np.dtype([("id", "<i8"), ("src", "<i8"), ("dst", "<i8"), ("w", "<u4")])
_I64_MAX = np.iinfo(np.int64).max
_U32_MAX = np.iinfo(np.uint32).max


@dataclass
class BoruvkaConfig:
    base_case_threshold: int | None = None
    preprocess: bool = True
    record_parents: object = None

    def threshold(self, p, n0):
        t = self.base_case_threshold
        if t is None:
            t = max(2 * p, DEFAULT_THRESHOLD)
        return max(p, min(t, max(n0, 0)))


@dataclass
class RoundStats:
    vertices: int
    edges: int
    nonshared: int
    nonshared_roots: int
    doubling_iterations: int

    @property
    def halved(self):
        return 2 * self.nonshared_roots <= self.nonshared


@dataclass
class MsfResult:
    edges: np.ndarray
    total_weight: int
    phase_timings: dict
    rounds: list = field(default_factory=list)
    preprocess_ids: np.ndarray | None = None
    info: dict = field(default_factory=dict)

    @property
    def ids(self):
        return self.edges["id"]


@dataclass
class LabelMap:
    """Sorted ``keys`` mapped to ``values``."""

    keys: np.ndarray
    values: np.ndarray

    @classmethod
    def identity(cls, keys):
        keys = np.asarray(keys, dtype=np.int64)
        return cls(keys, keys.copy())

    @classmethod
    def from_pairs(cls, keys, values):
        keys = np.asarray(keys, dtype=np.int64)
        order = np.argsort(keys, kind="stable")
        keys, values = keys[order], np.asarray(values, dtype=np.int64)[order]
        keep = np.ones(keys.shape[0], dtype=bool)
        keep[1:] = keys[1:] != keys[:-1]
        return cls(keys[keep], values[keep])

    def find(self, v):
        """``(values, found)`` for a query array."""
        v = np.asarray(v, dtype=np.int64)
        if not self.keys.shape[0]:
            return np.zeros(v.shape, dtype=np.int64), np.zeros(v.shape, dtype=bool)
        idx = np.minimum(np.searchsorted(self.keys, v), self.keys.shape[0] - 1)
        found = self.keys[idx] == v
        return np.where(found, self.values[idx], v), found

    def __len__(self):
        return self.keys.shape[0]


# -- one round -----------------------------------------------------------------

def _segment_bounds(src):
    """Start of every run of equal ``src`` plus the end offset."""
    starts = np.flatnonzero(np.concatenate(([True], src[1:] != src[:-1])))
    return np.append(starts, src.shape[0]).astype(np.int64)


def min_edges(graph):
    """Lightest incident edge of every non-shared local vertex, in vertex order."""
    e = graph.edges
    if not e.shape[0]:
        return e[:0].copy()
    bounds = _segment_bounds(e["src"])
    best = kernels.segmented_argmin(bounds, e["w"], e["id"])
    cand = e[best]
    shared = np.array(sorted(graph.shared_vertices), dtype=np.int64)
    return cand[~np.isin(cand["src"], shared)]


def global_shared_vertices(graph):
    """Every vertex whose edge run straddles a PE boundary (replicated data only)."""
    ne = np.flatnonzero(graph.nonempty)
    if ne.shape[0] < 2:
        return np.zeros(0, dtype=np.int64)
    a = graph.lexmax["src"][ne[:-1]]
    b = graph.lexmin["src"][ne[1:]]
    return np.unique(a[a == b]).astype(np.int64)


def _parents_of(comm, graph, parent, query, shared_all):
    """Current parent of every vertex in ``query`` (one request/reply exchange)."""
    V = graph.vertices
    q = np.unique(query)
    at_shared = np.isin(q, shared_all)
    local = graph.is_local(q) & ~at_shared
    remote = q[~local & ~at_shared]
    dest = vertex_home_pe(graph, remote) if remote.shape[0] else remote
    comm.stats.counters["pd_requests"] += int(remote.shape[0])
    batch = partition_by_dest(remote, dest, comm.size)
    replies = []
    for reqs in smart_alltoall(comm, batch):
        hit = np.searchsorted(V, reqs)
        if reqs.shape[0] and (hit.max() >= V.shape[0] or not (V[hit] == reqs).all()):
            raise UnlabeledVertex("pointer-doubling request for a vertex this PE does not hold")
        comm.stats.counters["pd_requests_to_shared"] += int(np.isin(reqs, shared_all).sum())
        replies.append(parent[hit])
    back = smart_alltoall(comm, replies)
    keys = np.concatenate([q[local]] + batch)
    vals = np.concatenate([parent[np.searchsorted(V, q[local])]] + back)
    # shared vertices are roots: they answer with themselves
    shared_q = q[at_shared]
    keys = np.concatenate((keys, shared_q))
    vals = np.concatenate((vals, shared_q))
    return LabelMap.from_pairs(keys, vals).find(query)[0]


def contract_components(comm, graph, candidates, shared_all=None):
    """Root the candidate pseudo-forest and shortcut it to stars by pointer doubling.

    Returns ``(labels, mst_ids, iterations)`` where ``labels`` covers every
    local vertex. 2-cycles are rooted at the smaller vertex; shared vertices
    are roots and are never asked for their parent.
    """
    if shared_all is None:
        shared_all = global_shared_vertices(graph)
    V = graph.vertices
    parent = V.copy()
    pos = np.searchsorted(V, candidates["src"])
    parent[pos] = candidates["dst"]
    cand_id = np.full(V.shape[0], -1, dtype=np.int64)
    cand_id[pos] = candidates["id"]
    active = np.zeros(V.shape[0], dtype=bool)
    active[pos] = True
    # a parent that is a shared vertex is a root already, no request needed
    at_shared = active & np.isin(parent, shared_all)
    comm.stats.counters["pd_shared_shortcuts"] += int(at_shared.sum())
    active &= ~at_shared

    n = global_vertex_count(comm, graph)
    limit = math.ceil(math.log2(max(n, 2))) + 2
    iterations = 0
    while comm.allreduce(bool(active.any()), "or"):
        iterations += 1
        if iterations > limit:
            raise CycleDetected("pointer doubling did not converge")
        u = np.flatnonzero(active)
        par = parent[u]
        grand = _parents_of(comm, graph, parent, par, shared_all)
        new_parent = parent.copy()
        done = grand == par
        if iterations == 1:
            two = grand == V[u]
            root_here = two & (V[u] < par)
            new_parent[u[root_here]] = V[u[root_here]]
            cand_id[u[root_here]] = -1
            done |= two
            grand = np.where(two, new_parent[u], grand)
        new_parent[u[~done]] = grand[~done]
        active[u[done]] = False
        parent = new_parent
    return LabelMap(V, parent), cand_id[cand_id >= 0], iterations


def exchange_labels(comm, labels, graph):
    """Tell the home PE of every back edge the new label of our endpoint."""
    e = graph.edges
    if e.shape[0]:
        lo, hi = pe_range(graph, e["dst"], e["src"])
    else:
        lo = hi = np.zeros(0, dtype=np.int64)
    span = hi - lo + 1
    u = np.repeat(e["src"], span)
    t = np.repeat(lo, span) + (np.arange(u.shape[0]) - np.repeat(np.cumsum(span) - span, span))
    away = t != comm.rank
    u, t = u[away], t[away]
    key = np.unique(np.stack((t, u), axis=1), axis=0) if u.shape[0] else np.zeros((0, 2), np.int64)
    recs = np.empty(key.shape[0], dtype=[("v", "<i8"), ("label", "<i8")])
    recs["v"] = key[:, 1]
    recs["label"], found = labels.find(key[:, 1])
    if not found.all():
        raise UnlabeledVertex(f"PE {comm.rank}: no label for a local vertex")
    got = exchange(comm, recs, key[:, 0])
    ghost = LabelMap.from_pairs(got["v"], got["label"])
    need = e["dst"][~graph.is_local(e["dst"])]
    if need.shape[0]:
        _, ok = ghost.find(need)
        if not ok.all():
            raise MissingGhostLabel(f"PE {comm.rank}: ghost {need[~ok][0]} received no label")
    return ghost


def relabel(labels, ghost, edges):
    """Map endpoints through the label maps and drop self-loops."""
    out = edges.copy()
    src, ok = labels.find(edges["src"])
    if not ok.all():
        raise UnlabeledVertex(f"vertex {edges['src'][~ok][0]} has no label")
    dl, dok = labels.find(edges["dst"])
    dg, gok = ghost.find(edges["dst"])
    if not (dok | gok).all():
        raise UnlabeledVertex(f"vertex {edges['dst'][~(dok | gok)][0]} has no label")
    out["src"] = src
    out["dst"] = np.where(dok, dl, dg)
    return out[out["src"] != out["dst"]]


def redistribute(comm, edges):
    """Sort globally and keep the lightest edge per (src, dst), across PE boundaries too."""
    ordered = dedup_sorted(distributed_sort(comm, edges, SORT_FIELDS))
    last = ordered[-1:] if ordered.shape[0] else ordered
    lasts = comm.allgather(last)
    prev = next((x for x in reversed(lasts[:comm.rank]) if x.shape[0]), None)
    if prev is not None and ordered.shape[0]:
        dup = (ordered["src"] == prev["src"][0]) & (ordered["dst"] == prev["dst"][0])
        ordered = ordered[~dup]
    return build_distributed_graph(comm, ordered, check=False)


# -- base case -------------------------------------------------------------------

_SLOT_DTYPE = np.dtype([("w", "<u4"), ("id", "<i8"), ("dst", "<i8")])


def replicated_labels(comm, graph):
    """Sorted distinct vertex labels of the whole graph, on every PE."""
    mine = graph.vertices
    ordered = distributed_sort(comm, mine)
    return np.unique(comm.allgatherv(ordered))


def base_case(comm, graph, threshold, parents=None):
    """Replicated Borůvka on a graph with at most ``threshold`` vertices."""
    labels = replicated_labels(comm, graph)
    n = labels.shape[0]
    if n > threshold:
        raise VertexCountOverThreshold(f"{n} vertices exceed the base-case threshold {threshold}")
    e = graph.edges
    src = np.searchsorted(labels, e["src"]).astype(np.int64)
    dst = np.searchsorted(labels, e["dst"]).astype(np.int64)
    w, ids = e["w"], e["id"]
    comp = np.arange(n, dtype=np.int64)
    picked = []
    rounds = 0
    while n:
        cs, cd = comp[src], comp[dst]
        live = cs != cd
        src, dst, w, ids = src[live], dst[live], w[live], ids[live]
        cs, cd = cs[live], cd[live]
        best = kernels.scatter_min(cs, w, ids, n)
        vec = np.empty(n, dtype=_SLOT_DTYPE)
        vec["w"] = _U32_MAX
        vec["id"] = _I64_MAX
        vec["dst"] = -1
        have = best >= 0
        vec["w"][have] = w[best[have]]
        vec["id"][have] = ids[best[have]]
        vec["dst"][have] = cd[best[have]]
        red = comm.allreduce_vec(vec, "min_by_key")
        has = red["dst"] >= 0
        if not has.any():
            break
        rounds += 1
        parent = np.arange(n, dtype=np.int64)
        parent[has] = red["dst"][has]
        two_root = has & (parent[parent] == np.arange(n)) & (np.arange(n) < parent)
        merged = has & ~two_root
        slot = np.flatnonzero(merged)
        # every PE knows all picks; each keeps a share so ids are not duplicated
        picked.append(red["id"][slot[slot % comm.size == comm.rank]])
        root = kernels.root_pseudoforest(parent)
        comp = root[comp]
    if parents is not None:
        lo, hi = n * comm.rank // comm.size, n * (comm.rank + 1) // comm.size
        parents.write(comm, labels[lo:hi], labels[comp[lo:hi]])
    ids_out = np.concatenate(picked) if picked else np.zeros(0, dtype=np.int64)
    return ids_out, rounds


# -- result delivery ---------------------------------------------------------------

class EdgeArchive:
    """Compressed copy of this PE's original slice plus replicated id ranges.

    The canonical (src < dst) edges of a slice carry a contiguous block of
    ids, so the PE that owns an id follows from the replicated ranges.
    """

    def __init__(self, comm, graph):
        e = graph.edges
        canon = e[e["src"] < e["dst"]]
        ids = np.sort(canon["id"])
        if ids.shape[0] and ids[-1] - ids[0] + 1 != ids.shape[0]:
            raise ValueError("edge ids must be global ranks of canonical edges")
        rng = (int(ids[0]), int(ids[-1]) + 1) if ids.shape[0] else (0, 0)
        self.ranges = np.array(comm.allgather(rng), dtype=np.int64).reshape(-1, 2)
        self.blob = encode_edges(e)

    def owner(self, ids):
        lo, hi = self.ranges[:, 0], self.ranges[:, 1]
        order = np.flatnonzero(hi > lo)
        k = np.searchsorted(lo[order], ids, side="right") - 1
        own = order[np.maximum(k, 0)] if order.shape[0] else np.zeros_like(ids)
        bad = (k < 0) | (ids >= hi[own]) if order.shape[0] else np.ones(ids.shape, bool)
        if np.any(bad):
            raise UnknownEdgeId(f"edge id {ids[bad][0]} has no home PE")
        return own

    def materialize(self, comm, ids):
        e = decode_edges(self.blob)
        canon = e[e["src"] < e["dst"]]
        canon = canon[np.argsort(canon["id"], kind="stable")]
        lo = self.ranges[comm.rank, 0]
        k = ids - lo
        if k.shape[0] and (k.min() < 0 or k.max() >= canon.shape[0]):
            raise UnknownEdgeId(f"PE {comm.rank} does not hold some requested ids")
        hit = canon[k]
        out = np.empty(ids.shape[0], dtype=MSF_DTYPE)
        for f in ("id", "src", "dst", "w"):
            out[f] = hit[f]
        return out


def redistribute_mst(comm, mst_ids, archive):
    """Route MSF ids to their home PEs and decode the original endpoints there."""
    ids = np.unique(np.asarray(mst_ids, dtype=np.int64))
    got = exchange(comm, ids, archive.owner(ids) if ids.shape[0] else ids)
    return archive.materialize(comm, np.unique(got))


# -- driver --------------------------------------------------------------------------

def boruvka_rounds(comm, graph, config, timer, parents=None):
    """Main loop and base case; returns ``(mst ids found here, round stats, base rounds)``."""
    with timer.phase("redistribute"):
        n0 = global_vertex_count(comm, graph)
    threshold = config.threshold(comm.size, n0)
    found, rounds = [], []
    while True:
        with timer.phase("redistribute"):
            n = global_vertex_count(comm, graph)
            m = comm.allreduce(int(graph.edges.shape[0]))
        if n <= threshold or m == 0:
            break
        with timer.phase("min_edges"):
            cand = min_edges(graph)
        with timer.phase("contraction"):
            shared_all = global_shared_vertices(graph)
            labels, ids, iters = contract_components(comm, graph, cand, shared_all)
            found.append(ids)
            nonshared = comm.allreduce(int(cand.shape[0]))
            root_of = labels.find(cand["src"])[0]
            roots = comm.allreduce(int((root_of == cand["src"]).sum()))
            if parents is not None:
                parents.write(comm, labels.keys, labels.values)
        rounds.append(RoundStats(n, m, nonshared, roots, iters))
        with timer.phase("label_exchange"):
            ghost = exchange_labels(comm, labels, graph)
        with timer.phase("redistribute"):
            graph = redistribute(comm, relabel(labels, ghost, graph.edges))
    with timer.phase("base_case"):
        ids, base_rounds = base_case(comm, graph, threshold, parents)
        found.append(ids)
    return np.concatenate(found), rounds, base_rounds


def mst(comm, graph, config=None, timer=None):
    """Collective: minimum spanning forest of ``graph`` (see :class:`MsfResult`)."""
    from .preprocess import local_preprocessing

    config = config or BoruvkaConfig()
    timer = timer or PhaseTimer()
    with timer.phase("mst_redistribution"):
        archive = EdgeArchive(comm, graph)
    pre_ids = np.zeros(0, dtype=np.int64)
    info = {}
    if config.preprocess:
        with timer.phase("local_preprocessing"):
            graph, pre_ids, info = local_preprocessing(comm, graph)
    ids, rounds, base_rounds = boruvka_rounds(comm, graph, config, timer, config.record_parents)
    info["base_case_rounds"] = base_rounds
    with timer.phase("mst_redistribution"):
        edges = redistribute_mst(comm, np.concatenate((pre_ids, ids)), archive)
        total = comm.allreduce(int(edges["w"].sum(dtype=np.int64)))
    return MsfResult(edges, total, timer.as_dict(), rounds, pre_ids, info)
