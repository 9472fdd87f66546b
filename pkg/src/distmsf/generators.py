"""Seeded graph generators: GNM, 2D grid, 2D/3D random geometric, RMAT.

Every random quantity comes from a counter-based hash of the seed and a
stable key (pair index, point index, candidate index, endpoint pair), so
the generated edge set does not depend on how many PEs produced it.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .collectives import distributed_sort
from .errors import InvalidSpec
from .graph import EDGE_DTYPE, make_edges, symmetrize_and_number

FAMILIES = ("gnm", "grid2d", "rgg2d", "rgg3d", "rmat")
DEFAULT_SEED = 42
RMAT_PROBS = (0.57, 0.19, 0.19, 0.05)
# fixed work split: keeps generation independent of p
BLOCKS = 256

_M1 = np.uint64(0x9E3779B97F4A7C15)
_M2 = np.uint64(0xBF58476D1CE4E5B9)
_M3 = np.uint64(0x94D049BB133111EB)


def splitmix64(x):
    """Vectorised splitmix64 finaliser over uint64 (wrapping arithmetic)."""
    with np.errstate(over="ignore"):
        z = np.asarray(x, dtype=np.uint64) + _M1
        z = (z ^ (z >> np.uint64(30))) * _M2
        z = (z ^ (z >> np.uint64(27))) * _M3
        return z ^ (z >> np.uint64(31))


def _stream(seed, tag, key):
    k = np.asarray(key, dtype=np.int64).view(np.uint64)
    base = splitmix64(np.uint64(seed & 0xFFFFFFFFFFFFFFFF) ^ splitmix64(np.uint64(tag)))
    return splitmix64(k ^ base)


def uniform01(seed, tag, key):
    return (_stream(seed, tag, key) >> np.uint64(11)).astype(np.float64) * (1.0 / (1 << 53))


def edge_weights(seed, lo, hi, wmin=1, wmax=255):
    """Weight of the undirected edge {lo, hi}: uniform in [wmin, wmax)."""
    key = (np.asarray(lo, dtype=np.int64) << 32) | np.asarray(hi, dtype=np.int64)
    h = _stream(seed, 1, key)
    return (wmin + (h % np.uint64(wmax - wmin))).astype(np.uint32)


@dataclass
class GeneratorSpec:
    family: str
    params: dict = field(default_factory=dict)
    seed: int = DEFAULT_SEED
    wmin: int = 1
    wmax: int = 255

    def __str__(self):
        parts = [f"{k}={v}" for k, v in self.params.items()]
        parts += [f"seed={self.seed}"]
        if (self.wmin, self.wmax) != (1, 255):
            parts += [f"wmin={self.wmin}", f"wmax={self.wmax}"]
        return f"{self.family}:" + ",".join(parts)


_INT_KEYS = {"n", "m", "rows", "cols", "scale", "edges"}
_FLOAT_KEYS = {"d", "deg"}


def parse_spec(text, default_seed=DEFAULT_SEED):
    """Parse ``family:key=value,...`` (e.g. ``gnm:n=4096,m=32768,seed=1``)."""
    family, _, rest = text.strip().partition(":")
    family = family.lower()
    if family not in FAMILIES:
        raise InvalidSpec(f"unknown generator family {family!r}")
    params, seed, wmin, wmax = {}, default_seed, 1, 255
    for item in filter(None, rest.split(",")):
        key, eq, val = item.partition("=")
        key = key.strip()
        if not eq:
            raise InvalidSpec(f"malformed parameter {item!r}")
        try:
            if key == "seed":
                seed = int(val)
            elif key == "wmin":
                wmin = int(val)
            elif key == "wmax":
                wmax = int(val)
            elif key in _INT_KEYS:
                params[key] = int(val)
            elif key in _FLOAT_KEYS:
                params[key] = float(val)
            else:
                raise InvalidSpec(f"unknown parameter {key!r} for {family}")
        except ValueError:
            raise InvalidSpec(f"bad value for {key}: {val!r}") from None
    spec = GeneratorSpec(family, params, seed, wmin, wmax)
    validate(spec)
    return spec


def _need(spec, *keys):
    missing = [k for k in keys if k not in spec.params]
    if missing:
        raise InvalidSpec(f"{spec.family} needs {', '.join(missing)}")


def validate(spec):
    p = spec.params
    if not 1 <= spec.wmin < spec.wmax <= 2**32 - 1:
        raise InvalidSpec("weights need 1 <= wmin < wmax")
    if spec.family == "gnm":
        _need(spec, "n", "m")
        if p["n"] < 1 or p["m"] < 0 or p["m"] > p["n"] * (p["n"] - 1) // 2:
            raise InvalidSpec(f"gnm needs n >= 1 and 0 <= m <= n(n-1)/2, got {p}")
    elif spec.family == "grid2d":
        _need(spec, "rows", "cols")
        if p["rows"] < 1 or p["cols"] < 1:
            raise InvalidSpec("grid2d needs rows, cols >= 1")
    elif spec.family in ("rgg2d", "rgg3d"):
        _need(spec, "n")
        if "d" not in p and "deg" not in p:
            raise InvalidSpec(f"{spec.family} needs d or deg")
        if p["n"] < 1 or p.get("d", 1.0) <= 0 or p.get("deg", 1.0) <= 0:
            raise InvalidSpec(f"{spec.family} needs n >= 1 and a positive radius")
    elif spec.family == "rmat":
        _need(spec, "scale", "edges")
        if not 1 <= p["scale"] <= 30 or p["edges"] < 0:
            raise InvalidSpec("rmat needs 1 <= scale <= 30 and edges >= 0")
        n = 1 << p["scale"]
        if p["edges"] > n * (n - 1) // 2:
            raise InvalidSpec("rmat edges exceed the number of vertex pairs")
    if max(num_vertices(spec), 1) > 2**31:
        raise InvalidSpec("vertex ids must stay below 2**31")


def num_vertices(spec):
    p = spec.params
    if spec.family == "grid2d":
        return p["rows"] * p["cols"]
    if spec.family == "rmat":
        return 1 << p["scale"]
    return p["n"]


def rgg_radius(n, avg_degree, dim):
    """Radius giving roughly ``avg_degree`` neighbours (boundary effects ignored)."""
    ball = math.pi if dim == 2 else 4.0 * math.pi / 3.0
    return (avg_degree / (max(n - 1, 1) * ball)) ** (1.0 / dim)


def _my_blocks(rank, p):
    return range(rank, BLOCKS, p)


# -- families (canonical lo < hi pairs for this PE's share) --------------------

def _pair_from_index(k, n):
    """Row-major index over {(i, j): i < j < n} back to (i, j)."""
    k = np.asarray(k, dtype=np.int64)
    nf = n - 0.5
    i = np.floor(nf - np.sqrt(np.maximum(nf * nf - 2.0 * k, 0.0))).astype(np.int64)
    i = np.clip(i, 0, max(n - 2, 0))
    start = i * n - i * (i + 1) // 2
    # float rounding can be off by one either way
    for _ in range(2):
        over = start > k
        i = np.where(over, i - 1, i)
        start = i * n - i * (i + 1) // 2
        nxt = (i + 1) * n - (i + 1) * (i + 2) // 2
        under = nxt <= k
        i = np.where(under, i + 1, i)
        start = i * n - i * (i + 1) // 2
    return i, k - start + i + 1


_HYPER_LIMIT = 10**9


def _split_counts(seed, sizes, m):
    """How many of ``m`` sampled pairs fall in each block, by halving the block range.

    Each split is a hypergeometric draw; populations beyond numpy's limit
    use a binomial draw clamped to the feasible range instead.
    """
    counts = np.zeros(len(sizes), dtype=np.int64)

    def rec(lo, hi, k, node):
        if k == 0:
            return
        if hi - lo == 1:
            counts[lo] = k
            return
        mid = (lo + hi) // 2
        left, right = int(sizes[lo:mid].sum()), int(sizes[mid:hi].sum())
        rng = np.random.default_rng([seed, 0, node])
        if left < _HYPER_LIMIT and right < _HYPER_LIMIT:
            kl = int(rng.hypergeometric(left, right, k)) if left and right else (k if left else 0)
        else:
            kl = int(rng.binomial(k, left / (left + right)))
            kl = min(max(kl, k - right), left)
        rec(lo, mid, kl, 2 * node)
        rec(mid, hi, k - kl, 2 * node + 1)

    rec(0, len(sizes), int(m), 1)
    return counts


def _gnm(spec, rank, p):
    n, m = spec.params["n"], spec.params["m"]
    total = n * (n - 1) // 2
    bounds = [total * b // BLOCKS for b in range(BLOCKS + 1)]
    sizes = np.diff(bounds)
    counts = _split_counts(spec.seed, sizes, m)
    out = []
    for b in _my_blocks(rank, p):
        if counts[b]:
            rng = np.random.default_rng([spec.seed, 1, b])
            out.append(bounds[b] + np.sort(rng.choice(int(sizes[b]), int(counts[b]), replace=False)))
    idx = np.concatenate(out) if out else np.zeros(0, dtype=np.int64)
    return _pair_from_index(idx, n)


def _grid2d(spec, rank, p):
    rows, cols = spec.params["rows"], spec.params["cols"]
    r = np.arange(rank, rows, p, dtype=np.int64)
    c = np.arange(cols, dtype=np.int64)
    v = (r[:, None] * cols + c[None, :]).ravel()
    rr = np.repeat(r, cols)
    cc = np.tile(c, r.shape[0])
    right = cc < cols - 1
    down = rr < rows - 1
    lo = np.concatenate((v[right], v[down]))
    hi = np.concatenate((v[right] + 1, v[down] + cols))
    return lo, hi


def _rgg(spec, rank, p, dim):
    n = spec.params["n"]
    d = spec.params.get("d") or rgg_radius(n, spec.params["deg"], dim)
    idx = np.arange(n, dtype=np.int64)
    pts = np.stack([uniform01(spec.seed, 10 + k, idx) for k in range(dim)], axis=1)
    cells_per_dim = max(1, min(int(1.0 / d), 1 << (20 // dim)))
    cell = np.minimum((pts * cells_per_dim).astype(np.int64), cells_per_dim - 1)
    flat = np.zeros(n, dtype=np.int64)
    for k in range(dim):
        flat = flat * cells_per_dim + cell[:, k]
    order = np.argsort(flat, kind="stable")
    sflat = flat[order]
    ncells = cells_per_dim ** dim
    starts = np.searchsorted(sflat, np.arange(ncells + 1))
    # points are dealt to PEs by cell, round-robin over fixed cell blocks
    mine = idx[(flat % BLOCKS) % p == rank]
    los, his = [], []
    offsets = np.array(np.meshgrid(*[[-1, 0, 1]] * dim, indexing="ij")).reshape(dim, -1).T
    for off in offsets:
        nb = cell[mine] + off
        ok = ((nb >= 0) & (nb < cells_per_dim)).all(axis=1)
        a = mine[ok]
        nflat = np.zeros(a.shape[0], dtype=np.int64)
        for k in range(dim):
            nflat = nflat * cells_per_dim + nb[ok][:, k]
        cnt = starts[nflat + 1] - starts[nflat]
        a_rep = np.repeat(a, cnt)
        first = np.repeat(starts[nflat], cnt)
        within = np.arange(a_rep.shape[0]) - np.repeat(np.cumsum(cnt) - cnt, cnt)
        b = order[first + within]
        keep = a_rep < b
        a_rep, b = a_rep[keep], b[keep]
        dist2 = ((pts[a_rep] - pts[b]) ** 2).sum(axis=1)
        close = dist2 <= d * d
        los.append(a_rep[close])
        his.append(b[close])
    return np.concatenate(los), np.concatenate(his)


def _rmat_candidates(spec, start, stop):
    scale = spec.params["scale"]
    k = np.arange(start, stop, dtype=np.int64)
    u = np.zeros(k.shape[0], dtype=np.int64)
    v = np.zeros(k.shape[0], dtype=np.int64)
    a, b, c, _ = RMAT_PROBS
    for level in range(scale):
        x = uniform01(spec.seed, 100 + level, k)
        right = ((x >= a) & (x < a + b)) | (x >= a + b + c)
        down = x >= a + b
        u = (u << 1) | down
        v = (v << 1) | right
    return k, u, v


def _rmat(comm, spec):
    """First ``edges`` distinct undirected non-loop candidates in candidate order."""
    m = spec.params["edges"]
    if m == 0:
        return np.zeros(0, np.int64), np.zeros(0, np.int64)
    attempts = min(10 * m, int(1.5 * m) + 64)
    while True:
        lo_i = attempts * comm.rank // comm.size
        hi_i = attempts * (comm.rank + 1) // comm.size
        k, u, v = _rmat_candidates(spec, lo_i, hi_i)
        keep = u != v
        k, lo, hi = k[keep], np.minimum(u, v)[keep], np.maximum(u, v)[keep]
        key = (lo << 32) | hi
        # global first occurrence per pair
        recs = np.empty(k.shape[0], dtype=[("key", "<i8"), ("k", "<i8")])
        recs["key"], recs["k"] = key, k
        recs = distributed_sort(comm, recs, ("key", "k"))
        first = np.ones(recs.shape[0], dtype=bool)
        first[1:] = recs["key"][1:] != recs["key"][:-1]
        lasts = comm.allgather(int(recs["key"][-1]) if recs.shape[0] else None)
        prev = next((x for x in reversed(lasts[:comm.rank]) if x is not None), None)
        if prev is not None and recs.shape[0] and recs["key"][0] == prev:
            first[0] = False
        recs = recs[first]
        ks = np.sort(comm.allgatherv(recs["k"]))
        if ks.shape[0] >= m or attempts >= 10 * m:
            cut = ks[min(m, ks.shape[0]) - 1] if ks.shape[0] else -1
            recs = recs[recs["k"] <= cut]
            return recs["key"] >> 32, recs["key"] & 0xFFFFFFFF
        attempts = 10 * m


def canonical_edges(comm, spec):
    """This PE's share of the canonical (lo < hi) weighted edges."""
    rank, p = comm.rank, comm.size
    if spec.family == "gnm":
        lo, hi = _gnm(spec, rank, p)
    elif spec.family == "grid2d":
        lo, hi = _grid2d(spec, rank, p)
    elif spec.family == "rgg2d":
        lo, hi = _rgg(spec, rank, p, 2)
    elif spec.family == "rgg3d":
        lo, hi = _rgg(spec, rank, p, 3)
    else:
        lo, hi = _rmat(comm, spec)
    return make_edges(lo, hi, edge_weights(spec.seed, lo, hi, spec.wmin, spec.wmax))


def generate(comm, spec):
    """Collective: globally sorted, numbered, back-edge-complete graph for ``spec``."""
    if isinstance(spec, str):
        spec = parse_spec(spec)
    return symmetrize_and_number(comm, canonical_edges(comm, spec))


def gather_sorted(comm, graph):
    return comm.allgatherv(graph.edges)


def partition_independence_check(spec, p1, p2, seed=0):
    """Generating with ``p1`` and ``p2`` PEs yields the same global edge sequence."""
    from .transport import run_spmd

    if isinstance(spec, str):
        spec = parse_spec(spec)

    def prog(comm):
        return gather_sorted(comm, generate(comm, spec))

    a = run_spmd(p1, prog, seed=seed)[0]
    b = run_spmd(p2, prog, seed=seed)[0]
    return a.dtype == b.dtype == EDGE_DTYPE and np.array_equal(a, b)
