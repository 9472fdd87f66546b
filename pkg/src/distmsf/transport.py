"""Deterministic in-process SPMD runtime.

``run_spmd`` starts one thread per logical PE. PEs share nothing except
their communicators; every collective is a full synchronisation point
built from a single slot exchange guarded by two barriers::

    write own slot -> barrier -> read peers' slots -> barrier

Each collective also publishes ``(epoch, kind)``; if the ranks of one
communicator disagree, they all raise :class:`DeadlockDetected` instead
of silently exchanging unrelated data.
"""
from __future__ import annotations

import logging
import threading
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .errors import DeadlockDetected, LengthMismatch, PeFailure, RecordSizeMismatch

log = logging.getLogger(__name__)

DEFAULT_TIMEOUT = 300.0


@dataclass
class CommStats:
    """Per-PE communication counters. All fields only ever grow."""

    messages_sent: int = 0
    bytes_sent: int = 0
    records_sent: int = 0
    records_received: int = 0
    collective_calls: Counter = field(default_factory=Counter)
    # distinct non-self destinations of every alltoallv this PE entered
    dest_counts: list = field(default_factory=list)
    # algorithm-level counters, e.g. pointer-doubling requests by kind
    counters: Counter = field(default_factory=Counter)

    def as_dict(self):
        return {
            "messages_sent": self.messages_sent,
            "bytes_sent": self.bytes_sent,
            "records_sent": self.records_sent,
            "records_received": self.records_received,
            "collective_calls": dict(sorted(self.collective_calls.items())),
            "max_distinct_destinations": max(self.dest_counts, default=0),
            "counters": dict(sorted(self.counters.items())),
        }

    def merge(self, other: "CommStats") -> "CommStats":
        out = CommStats(
            self.messages_sent + other.messages_sent,
            self.bytes_sent + other.bytes_sent,
            self.records_sent + other.records_sent,
            self.records_received + other.records_received,
            self.collective_calls + other.collective_calls,
            self.dest_counts + other.dest_counts,
            self.counters + other.counters,
        )
        return out


class _Aborted(Exception):
    """Raised inside surviving PEs once another PE has failed."""


class _World:
    def __init__(self, p, timeout):
        self.p = p
        self.timeout = timeout
        self.groups = []
        self.lock = threading.Lock()
        self.aborted = False

    def new_group(self, size):
        g = _Group(size, self)
        with self.lock:
            self.groups.append(g)
            if self.aborted:
                g.barrier.abort()
        return g

    def abort(self):
        with self.lock:
            self.aborted = True
            groups = list(self.groups)
        for g in groups:
            g.barrier.abort()


class _Group:
    def __init__(self, size, world):
        self.size = size
        self.world = world
        self.barrier = threading.Barrier(size)
        self.slots = [None] * size
        self.tags = [None] * size
        self.result = None


class Communicator:
    """Handle of one PE on one (sub-)communicator.

    Collectives must be entered by every member in the same program order.
    """

    def __init__(self, group, rank, stats, rng, world_rank, alltoall_strategy="auto"):
        self._group = group
        self.rank = rank
        self.size = group.size
        self.stats = stats
        self.rng = rng
        self.world_rank = world_rank
        self.alltoall_strategy = alltoall_strategy
        self._epoch = 0
        self._cache = {}

    def __repr__(self):
        return f"Communicator(rank={self.rank}, size={self.size})"

    # -- core exchange ------------------------------------------------------
    def _wait(self):
        try:
            self._group.barrier.wait(timeout=self._group.world.timeout)
        except threading.BrokenBarrierError:
            if self._group.world.aborted:
                raise _Aborted() from None
            raise DeadlockDetected(
                f"PE {self.world_rank}: collective #{self._epoch} timed out waiting for peers"
            ) from None

    def _enter(self, kind, payload):
        self._epoch += 1
        self.stats.collective_calls[kind.split(":")[0]] += 1
        g = self._group
        g.slots[self.rank] = payload
        g.tags[self.rank] = (self._epoch, kind)
        self._wait()
        tags = list(g.tags)
        if any(t != tags[0] for t in tags):
            raise DeadlockDetected(f"collective mismatch on communicator of size {self.size}: {tags}")

    def _exchange(self, kind, payload):
        """Everyone deposits ``payload``; returns the list of all payloads."""
        self._enter(kind, payload)
        out = list(self._group.slots)
        self._wait()
        return out

    def _reduce(self, kind, payload, fn):
        """Rank 0 combines all payloads with ``fn``; everyone gets the result."""
        self._enter(kind, payload)
        g = self._group
        if self.rank == 0:
            g.result = fn(list(g.slots))
        self._wait()
        return g.result

    # -- collectives --------------------------------------------------------
    def barrier(self):
        self._exchange("barrier", None)

    def broadcast(self, value, root=0):
        return self._exchange(f"broadcast:{root}", value if self.rank == root else None)[root]

    def allgather(self, obj):
        """List of every rank's ``obj`` in rank order."""
        return self._exchange("allgather", obj)

    def allgatherv(self, local):
        """Concatenation of every rank's array in rank order."""
        parts = self._exchange("allgatherv", np.asarray(local))
        nonempty = [a for a in parts if a.shape[0]]
        if not nonempty:
            return np.asarray(local)[:0].copy()
        return np.concatenate(nonempty)

    def prefix_sum(self, value):
        """Exclusive prefix sum over ranks (rank 0 gets zero)."""
        vals = self._exchange("prefix_sum", value)
        total = 0 * value
        for v in vals[: self.rank]:
            total = total + v
        return total

    def allreduce(self, value, op="sum"):
        return self._reduce(f"allreduce:{op}", value, _SCALAR_OPS[op])

    def allreduce_vec(self, values, op="sum", key=("w", "id")):
        """Element-wise reduction of equal-length vectors.

        ``op='min_by_key'`` expects structured records and keeps, per slot,
        the record that is lexicographically smallest on ``key``.
        """
        values = np.asarray(values)
        lengths = self._exchange("allreduce_vec:len", values.shape[0])
        if any(n != lengths[0] for n in lengths):
            raise LengthMismatch(f"allreduce_vec lengths differ: {lengths}")
        if op == "min_by_key":
            fn = lambda vs: _min_by_key(vs, key)
        elif op in _VEC_OPS:
            fn = _VEC_OPS[op]
        else:
            raise ValueError(f"unknown reduction {op!r}")
        return self._reduce(f"allreduce_vec:{op}", values, fn).copy()

    def alltoallv(self, batch):
        """Personalised exchange; ``batch[j]`` is the array of records for rank j.

        Returns a list indexed by sender rank. Records from one sender keep
        their send order.
        """
        if len(batch) != self.size:
            raise ValueError(f"batch has {len(batch)} destinations, communicator has {self.size}")
        itemsizes = {np.asarray(b).dtype.itemsize for b in batch}
        if len(itemsizes) != 1:
            raise RecordSizeMismatch(f"PE {self.rank} mixes record sizes {sorted(itemsizes)}")
        self._count_send(batch)
        slots = self._exchange("alltoallv", (itemsizes.pop(), batch))
        sizes = {s for s, _ in slots}
        if len(sizes) != 1:
            raise RecordSizeMismatch(f"record sizes differ across senders: {sorted(sizes)}")
        recv = [np.array(b[self.rank], copy=True) for _, b in slots]
        self.stats.records_received += sum(r.shape[0] for r in recv)
        return recv

    def _count_send(self, batch):
        dests = 0
        for j, b in enumerate(batch):
            n = b.shape[0]
            self.stats.records_sent += n
            if j != self.rank and n:
                dests += 1
                self.stats.messages_sent += 1
                self.stats.bytes_sent += b.nbytes
        self.stats.dest_counts.append(dests)

    def split(self, color, key=0):
        """MPI_Comm_split analogue. ``color=None`` opts out and returns None."""
        info = self._exchange("split", (color, key, self.rank))
        members = {}
        for c, k, r in info:
            if c is not None:
                members.setdefault(c, []).append((k, r))
        mine = sorted(members.get(color, [])) if color is not None else []
        leader = min(r for _, r in mine) if mine else None
        group = self._group.world.new_group(len(mine)) if leader == self.rank else None
        groups = self._exchange("split:publish", group)
        if color is None:
            return None
        new_rank = [r for _, r in mine].index(self.rank)
        return Communicator(groups[leader], new_rank, self.stats, self.rng,
                            self.world_rank, self.alltoall_strategy)

    def cached(self, name, factory):
        """Memoise a derived object (e.g. grid sub-communicators) per communicator.

        ``factory`` may call collectives, so every rank must ask for the same
        name at the same program step.
        """
        if name not in self._cache:
            self._cache[name] = factory()
        return self._cache[name]


def _min_by_key(vals, key):
    out = vals[0].copy()
    for v in vals[1:]:
        better = np.zeros(out.shape[0], dtype=bool)
        tie = np.ones(out.shape[0], dtype=bool)
        for f in key:
            better |= tie & (v[f] < out[f])
            tie &= v[f] == out[f]
        out[better] = v[better]
    return out


def _vec_fold(fn):
    def fold(vals):
        out = np.array(vals[0], copy=True)
        for v in vals[1:]:
            out = fn(out, v)
        return out
    return fold


_VEC_OPS = {"sum": _vec_fold(np.add), "max": _vec_fold(np.maximum), "min": _vec_fold(np.minimum)}
_SCALAR_OPS = {
    "sum": lambda vs: sum(vs[1:], vs[0]),
    "max": max,
    "min": min,
    "or": any,
    "and": all,
}


def partition_by_dest(records, dest, p):
    """Split ``records`` into a p-entry batch by destination rank (stable)."""
    dest = np.asarray(dest, dtype=np.int64)
    order = np.argsort(dest, kind="stable")
    counts = np.bincount(dest, minlength=p)
    bounds = np.concatenate(([0], np.cumsum(counts)))
    sorted_recs = records[order]
    return [sorted_recs[bounds[j]:bounds[j + 1]] for j in range(p)]


def run_spmd(p, program, seed=0, args=(), timeout=DEFAULT_TIMEOUT, alltoall_strategy="auto"):
    """Run ``program(comm, *args)`` on ``p`` logical PEs; return per-rank results.

    The RNG of rank ``r`` is seeded from ``(seed, r)``, so equal inputs and
    seed give equal outputs. The first PE to fail determines the raised
    error: :class:`DeadlockDetected` as is, anything else wrapped in
    :class:`PeFailure`.
    """
    if p < 1:
        raise ValueError("p must be >= 1")
    world = _World(p, timeout)
    root = world.new_group(p)
    results = [None] * p
    failures = []
    fail_lock = threading.Lock()

    def body(rank):
        comm = Communicator(root, rank, CommStats(), np.random.default_rng([seed, rank]),
                            rank, alltoall_strategy)
        try:
            results[rank] = program(comm, *args)
        except _Aborted:
            pass
        except BaseException as exc:  # noqa: BLE001 - re-raised in the caller
            with fail_lock:
                failures.append((rank, exc))
            world.abort()

    if p == 1:
        body(0)
    else:
        threads = [threading.Thread(target=body, args=(r,), name=f"pe-{r}", daemon=True)
                   for r in range(p)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
    if failures:
        rank, exc = failures[0]
        if isinstance(exc, DeadlockDetected):
            raise exc
        log.debug("PE %d failed", rank, exc_info=exc)
        raise PeFailure(rank, exc) from exc
    return results
