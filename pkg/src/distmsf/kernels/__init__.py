"""Hot inner loops with a numba path and a pure-numpy fallback.

The backend is chosen once at import time from ``DISTMSF_BACKEND``
(``numba`` or ``numpy``; default ``numba`` when it imports). Both
backends return identical results, so the flag only changes speed.
Pass ``backend=`` to any wrapper to force one path, which is what the
equivalence tests and ``benchmarks/bench_kernels.py`` do.
"""
import os

import numpy as np

from .. import errors
from . import _numpy

try:
    from . import _numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    _numba = None

_requested = os.environ.get("DISTMSF_BACKEND", "numba").strip().lower()
if _requested not in ("numba", "numpy"):
    raise ValueError(f"DISTMSF_BACKEND must be 'numba' or 'numpy', got {_requested!r}")
BACKEND = "numba" if (_requested == "numba" and _numba is not None) else "numpy"

_IMPLS = {"numpy": _numpy}
if _numba is not None:
    _IMPLS["numba"] = _numba


def available_backends():
    return sorted(_IMPLS)


def _impl(backend):
    return _IMPLS[backend or BACKEND]


def segmented_argmin(starts, w, ids, backend=None):
    """Index of the (w, id)-minimum inside each segment ``starts[k]:starts[k+1]``.

    Segments must be non-empty. On exact ties the earliest position wins.
    """
    return _impl(backend).segmented_argmin(
        np.ascontiguousarray(starts, dtype=np.int64),
        np.ascontiguousarray(w),
        np.ascontiguousarray(ids, dtype=np.int64),
    )


def scatter_min(slot, w, ids, nslots, backend=None):
    """Per-slot index of the (w, id)-minimum entry, ``-1`` for empty slots."""
    return _impl(backend).scatter_min(
        np.ascontiguousarray(slot, dtype=np.int64),
        np.ascontiguousarray(w),
        np.ascontiguousarray(ids, dtype=np.int64),
        int(nslots),
    )


def root_pseudoforest(parent, backend=None):
    """Roots of a pseudo-forest given as dense parent indices.

    Each component is a tree whose root either points at itself or sits
    in a 2-cycle; a 2-cycle is broken at its smaller index.
    """
    roots, status = _impl(backend).root_pseudoforest(np.ascontiguousarray(parent, dtype=np.int64))
    if status != _numpy.OK:
        raise errors.CycleDetected("parent pointers contain a cycle longer than two")
    return roots


def varint_encode(values, backend=None):
    """LEB128 encoding of a uint64 array."""
    return _impl(backend).varint_encode(np.ascontiguousarray(values, dtype=np.uint64))


def varint_decode(buf, backend=None):
    values, status = _impl(backend).varint_decode(np.ascontiguousarray(buf, dtype=np.uint8))
    if status == _numpy.TRUNCATED:
        raise errors.TruncatedStream("byte stream ends inside a varint")
    if status == _numpy.OVERFLOW:
        raise errors.ContinuationOverflow("varint longer than 10 bytes")
    return values


def member_mask(table_keys, query_keys, backend=None):
    """``query_keys[i] in set(table_keys)`` for non-negative int64 keys."""
    return _impl(backend).member_mask(
        np.ascontiguousarray(table_keys, dtype=np.int64),
        np.ascontiguousarray(query_keys, dtype=np.int64),
    )


def warmup(backend=None):
    """Call every kernel once on tiny inputs so JIT loading stays out of timings."""
    w = np.array([3, 1], dtype=np.uint32)
    ids = np.array([0, 1], dtype=np.int64)
    segmented_argmin(np.array([0, 2]), w, ids, backend=backend)
    scatter_min(np.array([0, 0]), w, ids, 1, backend=backend)
    root_pseudoforest(np.array([1, 0]), backend=backend)
    varint_decode(varint_encode(np.array([300], dtype=np.uint64), backend=backend), backend=backend)
    member_mask(ids, ids, backend=backend)
