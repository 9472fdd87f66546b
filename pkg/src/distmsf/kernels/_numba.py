import numpy as np
from numba import njit

OK, TRUNCATED, OVERFLOW, CYCLE = 0, 1, 2, 3


@njit(cache=True, nogil=True)
def segmented_argmin(starts, w, ids):
    k = starts.shape[0] - 1
    if k < 0:
        k = 0
    out = np.empty(k, dtype=np.int64)
    for s in range(k):
        best = starts[s]
        for j in range(starts[s] + 1, starts[s + 1]):
            if w[j] < w[best] or (w[j] == w[best] and ids[j] < ids[best]):
                best = j
        out[s] = best
    return out


@njit(cache=True, nogil=True)
def scatter_min(slot, w, ids, nslots):
    best = np.full(nslots, -1, dtype=np.int64)
    for j in range(slot.shape[0]):
        s = slot[j]
        b = best[s]
        if b < 0 or w[j] < w[b] or (w[j] == w[b] and ids[j] < ids[b]):
            best[s] = j
    return best


@njit(cache=True, nogil=True)
def root_pseudoforest(parent):
    n = parent.shape[0]
    p = parent.astype(np.int64)
    for i in range(n):
        j = parent[i]
        if j != i and parent[j] == i and i < j:
            p[i] = i
    root = np.empty(n, dtype=np.int64)
    for i in range(n):
        x = i
        steps = 0
        while p[x] != x:
            x = p[x]
            steps += 1
            if steps > n:
                return root, CYCLE
        root[i] = x
        # path compression
        y = i
        while p[y] != x:
            z = p[y]
            p[y] = x
            y = z
    return root, OK


@njit(cache=True, nogil=True)
def varint_encode(values):
    n = values.shape[0]
    total = 0
    for i in range(n):
        v = np.uint64(values[i])
        total += 1
        while v >= 128:
            v >>= np.uint64(7)
            total += 1
    out = np.empty(total, dtype=np.uint8)
    pos = 0
    for i in range(n):
        v = np.uint64(values[i])
        while v >= 128:
            out[pos] = np.uint8((v & np.uint64(0x7F)) | np.uint64(0x80))
            v >>= np.uint64(7)
            pos += 1
        out[pos] = np.uint8(v)
        pos += 1
    return out


@njit(cache=True, nogil=True)
def varint_decode(buf):
    n = buf.shape[0]
    count = 0
    for i in range(n):
        if buf[i] < 128:
            count += 1
    out = np.empty(count, dtype=np.uint64)
    if n > 0 and buf[n - 1] >= 128:
        return out[:0], TRUNCATED
    k = 0
    acc = np.uint64(0)
    shift = 0
    nbytes = 0
    for i in range(n):
        b = np.uint64(buf[i])
        nbytes += 1
        if nbytes > 10:
            return out[:0], OVERFLOW
        acc |= (b & np.uint64(0x7F)) << np.uint64(shift)
        shift += 7
        if b < 128:
            out[k] = acc
            k += 1
            acc = np.uint64(0)
            shift = 0
            nbytes = 0
    return out, OK


@njit(cache=True, nogil=True)
def _slot(key, mask):
    h = np.uint64(key) * np.uint64(0x9E3779B97F4A7C15)
    h ^= h >> np.uint64(29)
    return np.int64(h & np.uint64(mask))


@njit(cache=True, nogil=True)
def member_mask(table_keys, query_keys):
    # open addressing, linear probing; keys are non-negative so -1 marks empty
    size = 16
    while size < 2 * table_keys.shape[0]:
        size *= 2
    mask = size - 1
    table = np.full(size, -1, dtype=np.int64)
    for i in range(table_keys.shape[0]):
        key = table_keys[i]
        s = _slot(key, mask)
        while table[s] != -1 and table[s] != key:
            s = (s + 1) & mask
        table[s] = key
    out = np.zeros(query_keys.shape[0], dtype=np.bool_)
    for i in range(query_keys.shape[0]):
        key = query_keys[i]
        s = _slot(key, mask)
        while table[s] != -1:
            if table[s] == key:
                out[i] = True
                break
            s = (s + 1) & mask
    return out
