"""Edges, the 1D-partitioned distributed graph, and edge-list IO.

An edge is a packed 28-byte record ``(src, dst, w, id)``. Both directions
of an undirected edge carry the same ``id``. Ids are the rank of the
undirected edge in ``(lo, hi, w)`` order, so for equal weights comparing
ids is the same as comparing ``(lo, hi)``; this is why MST logic compares
``(w, id)`` and stays consistent after endpoints have been relabelled.
"""
from __future__ import annotations

import enum
import logging
import struct
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np

from . import kernels
from .errors import (FormatError, LocalOrderViolation, TruncatedStream, UnknownVertex,
                     UnsortedInput)

log = logging.getLogger(__name__)

EDGE_DTYPE = np.dtype([("src", "<i8"), ("dst", "<i8"), ("w", "<u4"), ("id", "<i8")])
assert EDGE_DTYPE.itemsize == 28

SENTINEL = np.iinfo(np.int64).max
SORT_FIELDS = ("src", "dst", "w", "id")

MAGIC = b"MSTF"
VERSION = 1
FLAG_IDS = 1
_HEADER = struct.Struct("<4sHHQ")


def make_edges(src, dst, w, ids=None):
    src = np.asarray(src, dtype=np.int64)
    out = np.empty(src.shape[0], dtype=EDGE_DTYPE)
    out["src"] = src
    out["dst"] = dst
    out["w"] = w
    out["id"] = -1 if ids is None else ids
    return out


def edges_from_tuples(rows):
    """``[(u, v, w), ...]`` or ``[(u, v, w, id), ...]`` to an edge array."""
    rows = list(rows)
    if not rows:
        return np.empty(0, dtype=EDGE_DTYPE)
    cols = list(zip(*rows))
    return make_edges(cols[0], cols[1], cols[2], cols[3] if len(cols) > 3 else None)


def empty_edges():
    return np.empty(0, dtype=EDGE_DTYPE)


def sort_edges(edges):
    order = np.lexsort((edges["id"], edges["w"], edges["dst"], edges["src"]))
    return edges[order]


def is_sorted(edges):
    """Lexicographic ``(src, dst, w)`` order check."""
    if edges.shape[0] < 2:
        return True
    s, d, w = edges["src"], edges["dst"], edges["w"]
    gt = (s[:-1] > s[1:]) | ((s[:-1] == s[1:]) & ((d[:-1] > d[1:]) | ((d[:-1] == d[1:]) & (w[:-1] > w[1:]))))
    return not gt.any()


def pack_pair(src, dst):
    """Order-preserving int64 key of (src, dst); needs ids below 2**31."""
    src = np.asarray(src, dtype=np.int64)
    dst = np.asarray(dst, dtype=np.int64)
    return (src << 32) | dst


class VertexClass(enum.Enum):
    LOCAL = "Local"
    GHOST = "Ghost"
    SHARED_WITH_PREV = "SharedWithPrev"
    SHARED_WITH_NEXT = "SharedWithNext"
    SHARED_BOTH = "SharedBoth"


def _sentinel_record():
    r = np.zeros(1, dtype=EDGE_DTYPE)
    r["src"] = SENTINEL
    r["dst"] = SENTINEL
    r["w"] = np.iinfo(np.uint32).max
    r["id"] = -1
    return r


@dataclass(frozen=True, eq=False)
class DistributedGraph:
    """One PE's view of the partitioned graph.

    ``lexmin[i]``/``lexmax[i]`` hold the first/last edge of PE i (sentinel
    for an empty PE) and are identical on every PE.
    """

    rank: int
    edges: np.ndarray
    lexmin: np.ndarray
    lexmax: np.ndarray

    @property
    def p(self):
        return self.lexmin.shape[0]

    @property
    def nonempty(self):
        return self.lexmin["src"] != SENTINEL

    def _neighbor(self, step):
        ne = self.nonempty
        i = self.rank + step
        while 0 <= i < self.p:
            if ne[i]:
                return i
            i += step
        return None

    @property
    def shared_prev(self):
        """Vertex shared with the previous non-empty PE, or None."""
        if not self.edges.shape[0]:
            return None
        j = self._neighbor(-1)
        v = int(self.edges["src"][0])
        return v if j is not None and int(self.lexmax["src"][j]) == v else None

    @property
    def shared_next(self):
        if not self.edges.shape[0]:
            return None
        j = self._neighbor(+1)
        v = int(self.edges["src"][-1])
        return v if j is not None and int(self.lexmin["src"][j]) == v else None

    @property
    def shared_vertices(self):
        return {v for v in (self.shared_prev, self.shared_next) if v is not None}

    @cached_property
    def vertices(self):
        """Sorted distinct sources (V_i)."""
        s = self.edges["src"]
        if not s.shape[0]:
            return s[:0].copy()
        keep = np.ones(s.shape[0], dtype=bool)
        keep[1:] = s[1:] != s[:-1]
        return s[keep]

    def local_vertices(self):
        return self.vertices

    def is_local(self, v):
        loc = self.vertices
        v = np.asarray(v)
        if not loc.shape[0]:
            return np.zeros(v.shape, dtype=bool)
        idx = np.minimum(np.searchsorted(loc, v), loc.shape[0] - 1)
        return loc[idx] == v

    def local_edge_mask(self):
        return self.is_local(self.edges["dst"])

    def boundary_duplicates(self):
        """Number of PE boundaries straddled by a vertex run (global, replicated)."""
        ne = np.flatnonzero(self.nonempty)
        if ne.shape[0] < 2:
            return 0
        return int((self.lexmax["src"][ne[:-1]] == self.lexmin["src"][ne[1:]]).sum())


def build_distributed_graph(comm, local_sorted_edges, check=True):
    """Collective: wrap a locally sorted slice and replicate first/last edges."""
    edges = np.asarray(local_sorted_edges, dtype=EDGE_DTYPE)
    if check and not is_sorted(edges):
        raise LocalOrderViolation(f"PE {comm.rank}: local edge slice is not sorted")
    if edges.shape[0]:
        ends = np.concatenate((edges[:1], edges[-1:]))
    else:
        ends = np.concatenate((_sentinel_record(), _sentinel_record()))
    both = comm.allgatherv(ends).reshape(-1, 2)
    g = DistributedGraph(comm.rank, edges, both[:, 0].copy(), both[:, 1].copy())
    if check:
        ne = np.flatnonzero(g.nonempty)
        a, b = g.lexmax[ne[:-1]], g.lexmin[ne[1:]]
        bad = (a["src"] > b["src"]) | ((a["src"] == b["src"]) & (a["dst"] > b["dst"]))
        if bad.any():
            raise LocalOrderViolation("concatenated slices are not globally sorted")
    return g


def home_pe(graph, src, dst):
    """Largest non-empty rank whose first edge is <= (src, dst); vectorised.

    Sentinel (empty) PEs are skipped. Keys smaller than every first edge go
    to the first non-empty PE.
    """
    ne = np.flatnonzero(graph.nonempty)
    scalar = np.ndim(src) == 0
    if ne.shape[0] == 0:
        out = np.zeros(np.shape(src), dtype=np.int64)
        return int(out) if scalar else out
    bounds = pack_pair(graph.lexmin["src"][ne], graph.lexmin["dst"][ne])
    k = np.searchsorted(bounds, pack_pair(src, dst), side="right") - 1
    out = ne[np.maximum(k, 0)]
    return int(out) if scalar else out


def pe_range(graph, src, dst):
    """First and last non-empty PE that may hold edges keyed ``(src, dst)``.

    Parallel edges can make one key span several PEs; usually both ends
    coincide with :func:`home_pe`.
    """
    ne = np.flatnonzero(graph.nonempty)
    hi = np.asarray(home_pe(graph, src, dst))
    if ne.shape[0] == 0:
        return hi, hi
    ends = pack_pair(graph.lexmax["src"][ne], graph.lexmax["dst"][ne])
    k = np.searchsorted(ends, pack_pair(src, dst), side="left")
    lo = ne[np.minimum(k, ne.shape[0] - 1)]
    return np.minimum(lo, hi), hi


def vertex_home_pe(graph, v):
    """First non-empty PE that holds edges with source ``v``; vectorised."""
    ne = np.flatnonzero(graph.nonempty)
    scalar = np.ndim(v) == 0
    if ne.shape[0] == 0:
        out = np.zeros(np.shape(v), dtype=np.int64)
        return int(out) if scalar else out
    k = np.searchsorted(graph.lexmax["src"][ne], v, side="left")
    out = ne[np.minimum(k, ne.shape[0] - 1)]
    return int(out) if scalar else out


def classify_vertex(v, graph):
    """Classify ``v`` from this PE's point of view without communicating."""
    e = graph.edges
    as_src = bool(graph.is_local(v))
    if not as_src:
        if (e["dst"] == v).any():
            return VertexClass.GHOST
        raise UnknownVertex(f"vertex {v} does not occur on PE {graph.rank}")
    prev = graph.shared_prev == v
    nxt = graph.shared_next == v
    if prev and nxt:
        return VertexClass.SHARED_BOTH
    if prev:
        return VertexClass.SHARED_WITH_PREV
    if nxt:
        return VertexClass.SHARED_WITH_NEXT
    return VertexClass.LOCAL


def global_vertex_count(comm, graph):
    """Distinct vertices with at least one edge, over all PEs."""
    local = graph.local_vertices().shape[0]
    return comm.allreduce(local) - graph.boundary_duplicates()


# -- varint-delta codec ---------------------------------------------------------

def _zigzag(x):
    x = x.astype(np.int64)
    return ((x << 1) ^ (x >> 63)).view(np.uint64)


def _unzigzag(z):
    z = z.astype(np.uint64)
    return ((z >> np.uint64(1)) ^ (-(z & np.uint64(1)).astype(np.int64)).view(np.uint64)).view(np.int64)


def encode_edges(edges, backend=None):
    """Varint-delta encoding of a sorted edge sequence.

    Per edge: LEB128(src - prev_src), zigzag(dst - src), LEB128(w),
    zigzag(id - prev_id); both ``prev`` values start at 0.
    """
    edges = np.asarray(edges, dtype=EDGE_DTYPE)
    if not is_sorted(edges):
        raise UnsortedInput("encode_edges needs (src, dst, w)-sorted input")
    n = edges.shape[0]
    src = edges["src"]
    vals = np.empty((n, 4), dtype=np.uint64)
    vals[:, 0] = np.diff(src, prepend=0).astype(np.uint64)
    vals[:, 1] = _zigzag(edges["dst"] - src)
    vals[:, 2] = edges["w"]
    vals[:, 3] = _zigzag(np.diff(edges["id"], prepend=0))
    return kernels.varint_encode(vals.reshape(-1), backend=backend).tobytes()


def decode_edges(buf, backend=None):
    vals = kernels.varint_decode(np.frombuffer(bytes(buf), dtype=np.uint8), backend=backend)
    if vals.shape[0] % 4:
        raise TruncatedStream("byte stream ends inside an edge record")
    vals = vals.reshape(-1, 4)
    out = np.empty(vals.shape[0], dtype=EDGE_DTYPE)
    src = np.cumsum(vals[:, 0].view(np.int64))
    out["src"] = src
    out["dst"] = src + _unzigzag(vals[:, 1])
    out["w"] = vals[:, 2]
    out["id"] = np.cumsum(_unzigzag(vals[:, 3]))
    return out


# -- files ----------------------------------------------------------------------

def write_binary(path, edges, n):
    """Header ``MSTF | version u16 | flags u16 | n u64`` followed by the codec payload."""
    payload = encode_edges(edges)
    data = _HEADER.pack(MAGIC, VERSION, FLAG_IDS, int(n)) + payload
    Path(path).write_bytes(data)
    return len(data)


def read_binary(path):
    """Return ``(n, edges)`` from a binary edge-list file."""
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise FormatError(f"{path}: shorter than the 16-byte header")
    magic, version, flags, n = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    return n, decode_edges(data[_HEADER.size:])


def read_text(path):
    """Undirected ``u v w`` lines to canonical edges (lo < hi), lightest parallel kept.

    Self-loops are dropped; ``#`` starts a comment.
    """
    rows = np.loadtxt(path, dtype=np.int64, comments="#", ndmin=2)
    if rows.size == 0:
        return empty_edges(), 0
    if rows.shape[1] != 3:
        raise FormatError(f"{path}: expected 3 columns, got {rows.shape[1]}")
    u, v, w = rows[:, 0], rows[:, 1], rows[:, 2]
    if (u < 1).any() or (v < 1).any() or (w < 0).any():
        raise FormatError(f"{path}: vertex labels must be >= 1 and weights >= 0")
    loops = u == v
    if loops.any():
        log.warning("%s: dropping %d self-loops", path, int(loops.sum()))
    keep = ~loops
    e = make_edges(np.minimum(u, v)[keep], np.maximum(u, v)[keep], w[keep])
    e = dedup_sorted(sort_edges(e))
    return e, int(rows[:, :2].max())


def dedup_sorted(edges):
    """Keep the first edge of every (src, dst) run of a sorted array."""
    if edges.shape[0] < 2:
        return edges
    keep = np.ones(edges.shape[0], dtype=bool)
    keep[1:] = (edges["src"][1:] != edges["src"][:-1]) | (edges["dst"][1:] != edges["dst"][:-1])
    return edges[keep]


def mirror(edges):
    """Back edges (dst, src, w, id)."""
    out = edges.copy()
    out["src"] = edges["dst"]
    out["dst"] = edges["src"]
    return out


def symmetrize_and_number(comm, canonical):
    """Collective: number canonical edges (lo < hi) and add their back edges.

    Ids are global ranks in ``(lo, hi, w)`` order. Returns the balanced,
    globally sorted :class:`DistributedGraph`.
    """
    from .collectives import distributed_sort

    canonical = np.asarray(canonical, dtype=EDGE_DTYPE)
    ordered = distributed_sort(comm, canonical, ("src", "dst", "w"))
    offset = comm.prefix_sum(int(ordered.shape[0]))
    ordered = ordered.copy()
    ordered["id"] = offset + np.arange(ordered.shape[0], dtype=np.int64)
    both = np.concatenate((ordered, mirror(ordered)))
    slice_ = distributed_sort(comm, both, SORT_FIELDS)
    return build_distributed_graph(comm, slice_)


def scatter_global_edges(comm, edges_or_none, n_hint=None):
    """Collective: rank 0 holds a full directed, numbered edge list; split it evenly."""
    if comm.rank == 0:
        e = sort_edges(np.asarray(edges_or_none, dtype=EDGE_DTYPE))
        bounds = [e.shape[0] * i // comm.size for i in range(comm.size + 1)]
        batch = [e[bounds[j]:bounds[j + 1]] for j in range(comm.size)]
    else:
        batch = [empty_edges() for _ in range(comm.size)]
    recv = comm.alltoallv(batch)
    return build_distributed_graph(comm, np.concatenate(recv))
