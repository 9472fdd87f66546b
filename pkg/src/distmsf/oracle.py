"""Sequential reference MSF algorithms and an MSF checker.

Everything here is deliberately plain Python over the gathered edge list
and shares no code with the distributed path: edges are ordered by
``(w, min(u, v), max(u, v), id)`` directly, never by the ``(w, id)``
shortcut the distributed algorithms rely on.
"""
from __future__ import annotations

import enum
import math

from .errors import UnknownEdgeId


class UnionFind:
    """Union by rank with path compression over arbitrary hashable vertices."""

    def __init__(self, vertices=()):
        self.parent = {}
        self.rank = {}
        for v in vertices:
            self.add(v)

    def add(self, v):
        if v not in self.parent:
            self.parent[v] = v
            self.rank[v] = 0

    def find(self, v):
        self.add(v)
        root = v
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[v] != root:
            self.parent[v], v = root, self.parent[v]
        return root

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return False
        if self.rank[ra] < self.rank[rb]:
            ra, rb = rb, ra
        self.parent[rb] = ra
        if self.rank[ra] == self.rank[rb]:
            self.rank[ra] += 1
        return True

    def components(self):
        return len({self.find(v) for v in self.parent})


def _undirected(edges):
    """One ``(w, lo, hi, id)`` tuple per undirected edge id."""
    seen = {}
    for u, v, w, i in zip(edges["src"].tolist(), edges["dst"].tolist(),
                          edges["w"].tolist(), edges["id"].tolist()):
        if u == v:
            continue
        key = (w, min(u, v), max(u, v), i)
        if i < 0:
            seen[key] = key
        else:
            seen.setdefault(i, key)
    return sorted(seen.values())


def _result(chosen, uf):
    ids = {e[3] for e in chosen}
    return ids, sum(e[0] for e in chosen), {v: uf.find(v) for v in uf.parent}


def kruskal(edges):
    """Return ``(mst_ids, total_weight, component_root_of)``."""
    und = _undirected(edges)
    uf = UnionFind()
    for _, u, v, _ in und:
        uf.add(u)
        uf.add(v)
    chosen = [e for e in und if uf.union(e[1], e[2])]
    return _result(chosen, uf)


def sequential_boruvka(edges, return_rounds=False):
    """Textbook Borůvka rounds with explicit contraction and relabelling."""
    und = _undirected(edges)
    # (key, a, b) with current endpoint labels; the key never changes
    cur = [(e, e[1], e[2]) for e in und]
    vertices = {x for e in und for x in (e[1], e[2])}
    uf = UnionFind(vertices)
    chosen = []
    rounds = 0
    while cur:
        rounds += 1
        best = {}
        for key, a, b in cur:
            for x, y in ((a, b), (b, a)):
                if x not in best or key < best[x][0]:
                    best[x] = (key, y)
        # pseudo trees: parent = other endpoint; 2-cycles rooted at the smaller label
        parent = {x: y for x, (_, y) in best.items()}
        for x, y in list(parent.items()):
            if parent.get(y) == x and x < y:
                parent[x] = x
        picked = [key for x, (key, _) in best.items() if parent[x] != x]
        chosen.extend(picked)
        label = {}
        for x in parent:
            path = [x]
            while parent[path[-1]] != path[-1]:
                path.append(parent[path[-1]])
            for y in path:
                label[y] = path[-1]
        for key in picked:
            uf.union(key[1], key[2])
        nxt = {}
        for key, a, b in cur:
            a, b = label.get(a, a), label.get(b, b)
            if a == b:
                continue
            pair = (min(a, b), max(a, b))
            if pair not in nxt or key < nxt[pair][0]:
                nxt[pair] = (key, a, b)
        cur = list(nxt.values())
    ids, weight, roots = _result(chosen, uf)
    if return_rounds:
        return (ids, weight, roots), rounds
    return ids, weight, roots


def filter_kruskal(edges, base_size=16):
    """Quicksort-style recursion that filters heavy edges against the light MSF."""
    und = _undirected(edges)
    uf = UnionFind({x for e in und for x in (e[1], e[2])})
    chosen = []

    def rec(es):
        if len(es) <= base_size:
            for e in sorted(es):
                if uf.union(e[1], e[2]):
                    chosen.append(e)
            return
        pivot = sorted(es)[len(es) // 2]
        light = [e for e in es if e <= pivot]
        heavy = [e for e in es if e > pivot]
        rec(light)
        rec([e for e in heavy if uf.find(e[1]) != uf.find(e[2])])

    rec(und)
    return _result(chosen, uf)


class Verdict(enum.Enum):
    OK = "ok"
    CYCLE = "cycle"
    NOT_SPANNING = "not_spanning"
    WRONG_WEIGHT = "wrong_weight"


def verify_msf(graph_edges, candidate_ids):
    """Check a candidate id set: acyclic, spanning per component, minimum weight."""
    und = {e[3]: e for e in _undirected(graph_edges)}
    uf = UnionFind({x for e in und.values() for x in (e[1], e[2])})
    weight = 0
    for i in candidate_ids:
        if i not in und:
            raise UnknownEdgeId(f"edge id {i} is not in the graph")
        w, u, v, _ = und[i]
        if not uf.union(u, v):
            return Verdict.CYCLE
        weight += w
    full = UnionFind(uf.parent)
    for _, u, v, _ in und.values():
        full.union(u, v)
    if uf.components() != full.components():
        return Verdict.NOT_SPANNING
    if weight != kruskal(graph_edges)[1]:
        return Verdict.WRONG_WEIGHT
    return Verdict.OK


def max_boruvka_rounds(n):
    return math.ceil(math.log2(n)) if n > 1 else 0
