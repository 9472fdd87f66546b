"""Vectorised numpy implementations of the hot loops.

Every function here has a twin in ``_numba`` with identical results,
including how ties are broken (earliest position wins).
"""
import numpy as np

OK, TRUNCATED, OVERFLOW, CYCLE = 0, 1, 2, 3

_POW7 = np.array([1 << (7 * k) for k in range(1, 10)], dtype=np.uint64)


def segmented_argmin(starts, w, ids):
    k = starts.shape[0] - 1
    if k <= 0:
        return np.empty(0, dtype=np.int64)
    seg = np.repeat(np.arange(k, dtype=np.int64), np.diff(starts))
    order = np.lexsort((ids, w, seg))
    return order[starts[:-1]].astype(np.int64)


def scatter_min(slot, w, ids, nslots):
    best = np.full(nslots, -1, dtype=np.int64)
    if slot.shape[0] == 0:
        return best
    order = np.lexsort((ids, w, slot))
    s = slot[order]
    first = np.ones(s.shape[0], dtype=bool)
    first[1:] = s[1:] != s[:-1]
    best[s[first]] = order[first]
    return best


def root_pseudoforest(parent):
    n = parent.shape[0]
    p = parent.astype(np.int64, copy=True)
    if n == 0:
        return p, OK
    idx = np.arange(n, dtype=np.int64)
    two_cycle = (p[p] == idx) & (p != idx) & (idx < p)
    p[two_cycle] = idx[two_cycle]
    limit = int(np.ceil(np.log2(n + 1))) + 2
    for _ in range(limit):
        nxt = p[p]
        if np.array_equal(nxt, p):
            return p, OK
        p = nxt
    if np.array_equal(p[p], p):
        return p, OK
    return p, CYCLE


def varint_encode(values):
    v = values.astype(np.uint64, copy=False)
    if v.shape[0] == 0:
        return np.empty(0, dtype=np.uint8)
    lengths = 1 + (v[:, None] >= _POW7[None, :]).sum(axis=1)
    total = int(lengths.sum())
    starts = np.cumsum(lengths) - lengths
    pos = np.arange(total, dtype=np.int64) - np.repeat(starts, lengths)
    val = np.repeat(v, lengths)
    out = ((val >> (7 * pos).astype(np.uint64)) & np.uint64(0x7F)).astype(np.uint8)
    cont = pos < np.repeat(lengths, lengths) - 1
    out[cont] |= 0x80
    return out


def varint_decode(buf):
    b = np.asarray(buf, dtype=np.uint8)
    if b.shape[0] == 0:
        return np.empty(0, dtype=np.uint64), OK
    term = (b & 0x80) == 0
    ends = np.flatnonzero(term)
    if ends.shape[0] == 0 or not term[-1]:
        return np.empty(0, dtype=np.uint64), TRUNCATED
    starts = np.empty_like(ends)
    starts[0] = 0
    starts[1:] = ends[:-1] + 1
    lens = ends - starts + 1
    if lens.max() > 10:
        return np.empty(0, dtype=np.uint64), OVERFLOW
    pos = np.arange(b.shape[0], dtype=np.int64) - np.repeat(starts, lens)
    contrib = (b & 0x7F).astype(np.uint64) << (7 * pos).astype(np.uint64)
    return np.add.reduceat(contrib, starts), OK


def member_mask(table_keys, query_keys):
    return np.isin(query_keys, table_keys)
