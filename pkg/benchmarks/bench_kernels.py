"""Time every hot kernel under both backends on the same inputs.

    python benchmarks/bench_kernels.py [--size 1000000] [--repeat 5]

The first numba call per kernel is a JIT warm-up and is not timed.
Outputs are compared so a speedup never hides a wrong answer.
"""
import argparse
import time

import numpy as np

from distmsf import kernels


def make_inputs(size, seed=0):
    rng = np.random.default_rng(seed)
    w = rng.integers(0, 2**32 - 1, size, dtype=np.uint64).astype(np.uint32)
    ids = rng.permutation(size).astype(np.int64)
    starts = np.unique(np.concatenate(([0], rng.integers(1, size, size // 8), [size])))
    nslots = max(size // 16, 1)
    slot = rng.integers(0, nslots, size)
    # random tree plus a few 2-cycles
    parent = np.minimum(np.arange(size), rng.integers(0, size, size))
    parent[0] = 0
    parent[1], parent[2] = 2, 1
    values = rng.integers(0, 2**40, size, dtype=np.uint64)
    table = rng.integers(0, 4 * size, size // 2)
    query = rng.integers(0, 4 * size, size)
    buf = kernels.varint_encode(values, backend="numpy")
    return {
        "segmented_argmin": (starts, w, ids),
        "scatter_min": (slot, w, ids, nslots),
        "root_pseudoforest": (parent,),
        "varint_encode": (values,),
        "varint_decode": (buf,),
        "member_mask": (table, query),
    }


def best_of(fn, args, backend, repeat):
    out = fn(*args, backend=backend)
    best = float("inf")
    for _ in range(repeat):
        t = time.perf_counter()
        fn(*args, backend=backend)
        best = min(best, time.perf_counter() - t)
    return best, out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--size", type=int, default=1_000_000)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    backends = kernels.available_backends()
    inputs = make_inputs(args.size)
    print(f"{'kernel':<20}" + "".join(f"{b + ' (ms)':>14}" for b in backends) + f"{'speedup':>10}  same")
    for name, fargs in inputs.items():
        fn = getattr(kernels, name)
        times, outs = {}, {}
        for b in backends:
            times[b], outs[b] = best_of(fn, fargs, b, args.repeat)
        same = all(np.array_equal(outs[b], outs[backends[0]]) for b in backends)
        speed = times["numpy"] / times["numba"] if "numba" in times and times["numba"] > 0 else float("nan")
        print(f"{name:<20}" + "".join(f"{times[b] * 1e3:>14.2f}" for b in backends) + f"{speed:>9.1f}x  {same}")


if __name__ == "__main__":
    main()
