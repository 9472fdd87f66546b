import numpy as np
import pytest

from distmsf.graph import make_edges, symmetrize_and_number
from distmsf.transport import run_spmd


def random_canonical(n, m, seed, wmax=255):
    """Canonical (lo < hi) edges of a random multigraph; parallels allowed."""
    rng = np.random.default_rng(seed)
    u = rng.integers(0, n, m)
    v = rng.integers(0, n, m)
    keep = u != v
    u, v = u[keep], v[keep]
    w = rng.integers(1, wmax, u.shape[0])
    return make_edges(np.minimum(u, v), np.maximum(u, v), w)


def distributed(p, canonical, body, seed=0, **kw):
    """Number ``canonical`` on p PEs and run ``body(comm, graph, all_edges)``."""

    def prog(comm):
        g = symmetrize_and_number(comm, canonical[comm.rank::comm.size])
        return body(comm, g, comm.allgatherv(g.edges))

    return run_spmd(p, prog, seed=seed, **kw)


def ids_of(results, key=lambda r: r.edges["id"]):
    return set(np.concatenate([np.asarray(key(r), dtype=np.int64) for r in results]).tolist())


@pytest.fixture
def canon():
    return random_canonical
