"""Communication-free contraction of edges that are provably in the MSF.

A vertex whose lightest incident edge is local (both endpoints on this PE
and neither shared with a neighbour PE) can contract along that edge by
the cut property. Repeating this until no vertex qualifies leaves only
vertices whose lightest edge crosses the cut.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .boruvka import LabelMap, exchange_labels, global_shared_vertices
from .collectives import distributed_sort
from .graph import (
    SORT_FIELDS,
    build_distributed_graph,
    dedup_sorted,
    global_vertex_count,
    pack_pair,
    sort_edges,
    vertex_home_pe,
)

LOCAL_FRACTION = 0.1
LIGHT_FRACTION = 0.1
HASH_LIMIT = 1 << 20
# below this many edges the light-first pass is not worth the extra sort
TWO_PHASE_MIN_EDGES = 4096


@dataclass
class LocalContractionResult:
    contracted_edges: np.ndarray
    mst_edge_ids: np.ndarray
    local_label: LabelMap


def should_preprocess(graph, fraction=LOCAL_FRACTION):
    """True iff at least ``fraction`` of this PE's edges are local (inclusive)."""
    m = graph.edges.shape[0]
    if m == 0:
        return False
    return int(graph.local_edge_mask().sum()) >= fraction * m


def _contract_rounds(comp, es, ed, w, ids, blocked, picked):
    """Guarded Borůvka rounds over dense slots; updates ``comp`` in place."""
    n = comp.shape[0]
    slots = np.arange(n, dtype=np.int64)
    while es.shape[0]:
        cs = comp[es]
        cd = np.where(ed >= 0, comp[np.maximum(ed, 0)], -1)
        live = cs != cd
        es, ed, w, ids, cs, cd = es[live], ed[live], w[live], ids[live], cs[live], cd[live]
        if not es.shape[0]:
            break
        best = kernels.scatter_min(cs, w, ids, n)
        has = best >= 0
        target = np.full(n, -1, dtype=np.int64)
        target[has] = cd[best[has]]
        cand = has & (target >= 0) & ~blocked
        if not cand.any():
            break
        parent = slots.copy()
        parent[cand] = target[cand]
        two_root = cand & (parent[parent] == slots) & (slots < parent)
        merged = cand & ~two_root
        picked.append(ids[best[merged]])
        root = kernels.root_pseudoforest(parent)
        comp[:] = root[comp]


def local_boruvka_guarded(graph, two_phase=True):
    """Contract along local edges that are lighter than every incident cut edge.

    Shared vertices take no part: they never select an edge and are never
    selected. With ``two_phase`` the lighter half of the edges (by
    ``(w, id)``) is contracted first, after which heavy edges inside a
    component vanish as self-loops before the full pass.
    """
    e = graph.edges
    V = graph.vertices
    n = V.shape[0]
    shared = np.array(sorted(graph.shared_vertices), dtype=np.int64)
    blocked = np.isin(V, shared)
    es = np.searchsorted(V, e["src"]).astype(np.int64)
    target_ok = graph.is_local(e["dst"]) & ~np.isin(e["dst"], shared)
    ed = np.where(target_ok, np.searchsorted(V, e["dst"]), -1).astype(np.int64)
    comp = np.arange(n, dtype=np.int64)
    picked = []
    if two_phase and e.shape[0] >= TWO_PHASE_MIN_EDGES:
        order = np.lexsort((e["id"], e["w"]))
        light = np.zeros(e.shape[0], dtype=bool)
        light[order[: e.shape[0] // 2]] = True
        _contract_rounds(comp, es[light], ed[light], e["w"][light], e["id"][light], blocked, picked)
    _contract_rounds(comp, es, ed, e["w"], e["id"], blocked, picked)

    out = e.copy()
    out["src"] = V[comp[es]]
    out["dst"] = np.where(ed >= 0, V[comp[np.maximum(ed, 0)]], e["dst"])
    out = out[out["src"] != out["dst"]]
    ids = np.concatenate(picked) if picked else np.zeros(0, dtype=np.int64)
    return LocalContractionResult(out, ids, LabelMap(V.copy(), V[comp]))


def dedup_parallel_hashed(edges, light_fraction=LIGHT_FRACTION, backend=None):
    """Keep only the lightest edge per directed (src, dst) pair; output sorted.

    Light edges (below a weight quantile) are deduplicated first and their
    pairs put in a hash set; heavier edges parallel to a light one are
    dropped by a membership scan before the final sort.
    """
    m = edges.shape[0]
    if m < 64:
        return dedup_sorted(sort_edges(edges))
    sample = edges["w"][:: 100] if m >= 100 else edges["w"]
    pivot = np.quantile(sample, light_fraction, method="lower")
    light = edges["w"] < pivot
    nl = int(light.sum())
    if nl == 0 or nl > HASH_LIMIT:
        return dedup_sorted(sort_edges(edges))
    lights = dedup_sorted(sort_edges(edges[light]))
    heavy = edges[~light]
    table = pack_pair(lights["src"], lights["dst"])
    drop = kernels.member_mask(table, pack_pair(heavy["src"], heavy["dst"]), backend=backend)
    rest = np.concatenate((lights, heavy[~drop]))
    return dedup_sorted(sort_edges(rest))


def _merge_boundary_runs(comm, local, old_graph, in_run):
    """Sort the runs of boundary-shared vertices across PEs.

    Each run is sent to the first PE holding that vertex, merged there and
    cut back into pieces of the original sizes in rank order.
    """
    runs = local[in_run]
    owner = vertex_home_pe(old_graph, runs["src"]) if runs.shape[0] else np.zeros(0, np.int64)
    order = np.argsort(owner, kind="stable")
    counts = np.bincount(owner, minlength=comm.size)
    bounds = np.concatenate(([0], np.cumsum(counts)))
    runs = runs[order]
    incoming = comm.alltoallv([runs[bounds[j]:bounds[j + 1]] for j in range(comm.size)])
    back = [runs[:0]] * comm.size
    pieces = {j: [] for j in range(comm.size)}
    verts = np.unique(np.concatenate([r["src"] for r in incoming]))
    for s in verts:
        parts = [(j, r[r["src"] == s]) for j, r in enumerate(incoming)]
        parts = [(j, r) for j, r in parts if r.shape[0]]
        merged = sort_edges(np.concatenate([r for _, r in parts]))
        off = 0
        for j, r in parts:
            pieces[j].append(merged[off:off + r.shape[0]])
            off += r.shape[0]
    for j, ps in pieces.items():
        if ps:
            back[j] = np.concatenate(ps)
    returned = np.concatenate(comm.alltoallv(back))
    return sort_edges(np.concatenate((local[~in_run], returned)))


def reestablish_sorted(comm, edges, old_graph):
    """Collective: rebuild the global order after a src-preserving local contraction.

    Only vertices shared between PEs can be out of order across a boundary.
    If those runs make up more than half of some PE's slice, a full
    distributed sort is used instead.
    """
    local = sort_edges(edges)
    shared_all = global_shared_vertices(old_graph)
    in_run = np.isin(local["src"], shared_all)
    heavy = 2 * int(in_run.sum()) > local.shape[0]
    if comm.allreduce(heavy, "or"):
        comm.stats.counters["reestablish_fallback"] += 1
        local = distributed_sort(comm, local, SORT_FIELDS)
    elif shared_all.shape[0]:
        local = _merge_boundary_runs(comm, local, old_graph, in_run)
    return build_distributed_graph(comm, local)


def local_preprocessing(comm, graph, two_phase=True):
    """Collective: contract local MSF edges on every PE that qualifies.

    Returns ``(graph', mst_ids, info)``. PEs below the local-edge fraction
    keep their edges but still take part in the label exchange.
    """
    info = {"vertices_before": global_vertex_count(comm, graph)}
    mine = should_preprocess(graph)
    info["preprocessing_pes"] = comm.allreduce(int(mine))
    if not info["preprocessing_pes"]:
        info["vertices_after"] = info["vertices_before"]
        return graph, np.zeros(0, dtype=np.int64), info
    if mine:
        res = local_boruvka_guarded(graph, two_phase)
    else:
        res = LocalContractionResult(graph.edges.copy(), np.zeros(0, dtype=np.int64),
                                     LabelMap.identity(graph.vertices))
    ghost = exchange_labels(comm, res.local_label, graph)
    edges = res.contracted_edges
    remote = ~graph.is_local(edges["dst"])
    edges["dst"][remote] = ghost.find(edges["dst"][remote])[0]
    edges = edges[edges["src"] != edges["dst"]]
    edges = dedup_parallel_hashed(edges)
    out = reestablish_sorted(comm, edges, graph)
    info["vertices_after"] = global_vertex_count(comm, out)
    return out, res.mst_edge_ids, info
