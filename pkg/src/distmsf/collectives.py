"""Communication built on the transport: grid all-to-all and distributed sorting."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import EmptyGlobalInput
from .transport import partition_by_dest

BYTE_THRESHOLD = 500
QUICKSORT_THRESHOLD = 512
OVERSAMPLING = 16


# -- two-level grid all-to-all -------------------------------------------------

@dataclass(frozen=True)
class GridCoords:
    p: int

    @property
    def c(self):
        return math.isqrt(self.p)

    @property
    def r(self):
        return -(-self.p // self.c)

    def column(self, i):
        return i % self.c

    def row(self, i):
        return i // self.c

    @property
    def incomplete(self):
        return self.p != self.c * self.r

    def row_group(self, j):
        """Row whose second-phase communicator delivers to ``j``.

        PEs of an incomplete last row are appended to row ``column(j)``.
        """
        j = np.asarray(j)
        last = (j // self.c == self.r - 1) & self.incomplete
        return np.where(last, j % self.c, j // self.c)

    def row_index(self, j):
        """Rank of ``j`` inside its second-phase row communicator."""
        j = np.asarray(j)
        last = (j // self.c == self.r - 1) & self.incomplete
        return np.where(last, self.c, j % self.c)


def grid_intermediate(i, j, p):
    """PE that relays a message from ``i`` to ``j``: column of i, row group of j."""
    g = GridCoords(p)
    return g.row_group(j) * g.c + g.column(i)


def _grid_comms(comm):
    g = GridCoords(comm.size)
    col = comm.split(g.column(comm.rank), comm.rank)
    row = comm.split(int(g.row_group(comm.rank)), comm.rank)
    return col, row


def _wrapped_dtype(dtype):
    return np.dtype([("s", "<i4"), ("d", "<i4"), ("r", dtype)])


def two_level_alltoall(comm, batch):
    """Same result as ``comm.alltoallv(batch)`` with two hops over a sqrt(p) grid.

    Every record carries its sender rank so the receiver can restore
    ascending-sender order.
    """
    p = comm.size
    if p == 1:
        return comm.alltoallv(batch)
    dtype = np.asarray(batch[0]).dtype
    g = GridCoords(p)
    col, row = comm.cached("grid", lambda: _grid_comms(comm))
    wd = _wrapped_dtype(dtype)
    counts = [b.shape[0] for b in batch]
    recs = np.empty(sum(counts), dtype=wd)
    recs["s"] = comm.rank
    recs["d"] = np.repeat(np.arange(p), counts)
    if recs.shape[0]:
        recs["r"] = np.concatenate(batch)
    # phase 1: along my column to the relay in the destination's row group
    hop = grid_intermediate(comm.rank, recs["d"], p) // g.c
    got = np.concatenate(col.alltoallv(partition_by_dest(recs, hop, col.size)))
    # phase 2: along the relay's row to the destination
    got = np.concatenate(row.alltoallv(partition_by_dest(got, g.row_index(got["d"]), row.size)))
    order = np.argsort(got["s"], kind="stable")
    got = got[order]
    bounds = np.searchsorted(got["s"], np.arange(p + 1))
    return [got["r"][bounds[i]:bounds[i + 1]].copy() for i in range(p)]


def choose_strategy(comm, batch):
    """``'grid'`` iff p >= 4 and the global mean message size is below 500 bytes."""
    if comm.alltoall_strategy in ("direct", "grid"):
        return comm.alltoall_strategy
    if comm.size < 4:
        return "direct"
    nbytes = sum(b.nbytes for j, b in enumerate(batch) if j != comm.rank)
    msgs = sum(1 for j, b in enumerate(batch) if j != comm.rank and b.shape[0])
    tot_bytes, tot_msgs = comm.allreduce(np.array([nbytes, msgs], dtype=np.int64))
    if tot_msgs == 0:
        return "direct"
    return "grid" if tot_bytes / tot_msgs < BYTE_THRESHOLD else "direct"


def smart_alltoall(comm, batch):
    strategy = choose_strategy(comm, batch)
    comm.stats.counters[f"alltoall_{strategy}"] += 1
    if strategy == "grid":
        return two_level_alltoall(comm, batch)
    return comm.alltoallv(batch)


def exchange(comm, records, dest):
    """Route ``records[k]`` to rank ``dest[k]``; returns received records concatenated."""
    return np.concatenate(smart_alltoall(comm, partition_by_dest(records, dest, comm.size)))


# -- sorting ---------------------------------------------------------------------

def _key_columns(recs, fields):
    """Sort columns, most significant first, ending with the origin tag."""
    r = recs["r"]
    cols = [r] if fields is None else [r[f] for f in fields]
    return cols + [recs["tag"]]


def _local_order(recs, fields):
    return np.lexsort(tuple(reversed(_key_columns(recs, fields))))


def _lex_le(recs, fields, pivot):
    """Mask of records whose key is <= the key of the single record ``pivot``."""
    cols = _key_columns(recs, fields)
    pcols = _key_columns(pivot, fields)
    less = np.zeros(recs.shape[0], dtype=bool)
    tie = np.ones(recs.shape[0], dtype=bool)
    for c, pc in zip(cols, pcols):
        less |= tie & (c < pc[0])
        tie &= c == pc[0]
    return less | tie


def _quicksort(comm, recs, fields):
    """Recursive bisection quicksort over rank groups (hypercube style for any p)."""
    if comm.size == 1:
        return recs[_local_order(recs, fields)]
    k = min(recs.shape[0], OVERSAMPLING)
    sample = recs[comm.rng.choice(recs.shape[0], size=k, replace=False)] if k else recs[:0]
    samples = comm.allgatherv(sample)
    lo_size = comm.size // 2
    if samples.shape[0] == 0:
        return recs[:0]
    samples = samples[_local_order(samples, fields)]
    pos = min(samples.shape[0] - 1, max(0, (samples.shape[0] * lo_size) // comm.size - 1))
    low = _lex_le(recs, fields, samples[pos:pos + 1])
    hi_size = comm.size - lo_size
    dest = np.where(low, comm.rank % lo_size, lo_size + comm.rank % hi_size)
    got = np.concatenate(comm.alltoallv(partition_by_dest(recs, dest, comm.size)))
    half = comm.cached("halves", lambda: comm.split(int(comm.rank >= lo_size), comm.rank))
    return _quicksort(half, got, fields)


def _sample_sort(comm, recs, fields):
    recs = recs[_local_order(recs, fields)]
    n = recs.shape[0]
    idx = (np.arange(OVERSAMPLING) * n) // OVERSAMPLING if n else np.empty(0, dtype=np.int64)
    samples = _quicksort(comm, recs[idx], fields)
    samples = comm.allgatherv(samples)
    s = samples.shape[0]
    splitters = samples[[(j * s) // comm.size for j in range(1, comm.size)]] if s else samples
    # bucket = number of splitters strictly below the record
    both = np.concatenate((recs, splitters))
    flag = np.concatenate((np.zeros(n, np.int8), np.ones(splitters.shape[0], np.int8)))
    order = np.lexsort((flag,) + tuple(reversed(_key_columns(both, fields))))
    below = np.cumsum(flag[order]) - flag[order]
    bucket = np.empty(both.shape[0], dtype=np.int64)
    bucket[order] = below
    got = np.concatenate(comm.alltoallv(partition_by_dest(recs, bucket[:n], comm.size)))
    return got[_local_order(got, fields)]


def _rebalance(comm, recs):
    total = comm.allreduce(int(recs.shape[0]))
    start = comm.prefix_sum(int(recs.shape[0]))
    gpos = start + np.arange(recs.shape[0], dtype=np.int64)
    dest = (gpos * comm.size) // max(total, 1)
    return np.concatenate(comm.alltoallv(partition_by_dest(recs, dest, comm.size)))


def distributed_sort(comm, local, fields=None, algorithm="auto"):
    """Collective sort; returns this rank's slice of the globally sorted sequence.

    ``fields`` names the key fields of a structured array (most significant
    first); ``None`` sorts plain values. Equal keys are ordered by origin
    (rank, index), and the output is rebalanced to within one element of
    the average. Hypercube quicksort is used below 512 elements per PE on
    average, single-level sample sort above.
    """
    local = np.asarray(local)
    n = local.shape[0]
    if comm.size == 1:
        if fields is None:
            return local[np.argsort(local, kind="stable")]
        return local[np.lexsort(tuple(local[f] for f in reversed(fields)))]
    wd = np.dtype([("tag", "<i8"), ("r", local.dtype)])
    recs = np.empty(n, dtype=wd)
    recs["tag"] = (np.int64(comm.rank) << 40) + np.arange(n, dtype=np.int64)
    recs["r"] = local
    if algorithm == "auto":
        total = comm.allreduce(n)
        algorithm = "quicksort" if total / comm.size < QUICKSORT_THRESHOLD else "samplesort"
    comm.stats.counters[f"sort_{algorithm}"] += 1
    if algorithm == "quicksort":
        out = _quicksort(comm, recs, fields)
    else:
        out = _sample_sort(comm, recs, fields)
    return _rebalance(comm, out)["r"].copy()


def sampled_median(comm, values, sample_rate=0.01, fields=None):
    """Median of a uniform sample (with replacement) of all PEs' values.

    Each non-empty PE draws ``max(1, ceil(rate * local_count))`` samples;
    the samples are sorted with :func:`distributed_sort` and the element at
    global position ``floor(total / 2)`` is broadcast by its owner.
    ``sample_rate=None`` takes every value instead of sampling.
    """
    values = np.asarray(values)
    n = values.shape[0]
    if sample_rate is None:
        sample = values
    else:
        k = max(1, math.ceil(sample_rate * n)) if n else 0
        sample = values[comm.rng.integers(0, n, size=k)] if k else values[:0]
    ordered = distributed_sort(comm, sample, fields)
    counts = comm.allgather(int(ordered.shape[0]))
    total = sum(counts)
    if total == 0:
        raise EmptyGlobalInput("sampled_median needs at least one value")
    target = total // 2
    offsets = np.cumsum([0] + counts)
    owner = int(np.searchsorted(offsets, target, side="right") - 1)
    mine = ordered[target - offsets[owner]] if comm.rank == owner else None
    return comm.broadcast(mine, owner)
