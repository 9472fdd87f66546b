"""Command-line harness: ``generate``, ``run`` and ``bench``.

``run`` prints one JSON report (schema in README.md); ``bench`` writes a
CSV with one row per (algorithm, p, graph, seed) cell.
"""
from __future__ import annotations

import argparse
import configparser
import csv
import hashlib
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import kernels, oracle
from .boruvka import BoruvkaConfig, mst
from .errors import InvalidSpec, MsfError
from .filter_boruvka import FilterConfig, filter_mst
from .generators import DEFAULT_SEED, generate, num_vertices, parse_spec
from .graph import (
    MAGIC,
    read_binary,
    read_text,
    scatter_global_edges,
    symmetrize_and_number,
    write_binary,
)
from .timing import PHASES, PhaseTimer
from .transport import CommStats, run_spmd

log = logging.getLogger("distmsf")

ALGORITHMS = ("boruvka", "filter", "kruskal")
TIMING_FIELDS = ("phase_times", "total_time", "throughput")
CSV_FIELDS = [
    "algorithm", "p", "graph", "seed", "status", "n", "m", "reps",
    "msf_total_weight", "msf_edge_count", "time_mean", "time_var",
    "throughput_mean", "verified",
]


# -- input -------------------------------------------------------------------------

def _is_spec(source):
    return ":" in source and not Path(source).exists()


def _load_file(path):
    """``(kind, payload, n)``: numbered directed edges or canonical text edges."""
    with open(path, "rb") as fh:
        head = fh.read(len(MAGIC))
    if head == MAGIC:
        n, edges = read_binary(path)
        return "directed", edges, n
    edges, n = read_text(path)
    return "canonical", edges, n


def _build_graph(comm, source):
    if isinstance(source, tuple):
        kind, payload, _ = source
        if kind == "directed":
            return scatter_global_edges(comm, payload if comm.rank == 0 else None)
        return symmetrize_and_number(comm, payload[comm.rank::comm.size])
    return generate(comm, source)


# -- run -----------------------------------------------------------------------------

def _program(comm, source, algo, preprocess, threshold, gather):
    graph = _build_graph(comm, source)
    m = comm.allreduce(int(graph.edges.shape[0]))
    everything = comm.allgatherv(graph.edges) if gather else None
    comm.barrier()
    timer = PhaseTimer()
    start = time.perf_counter()
    if algo == "boruvka":
        res = mst(comm, graph, BoruvkaConfig(base_case_threshold=threshold, preprocess=preprocess), timer)
        ids, weight, info = res.edges["id"], res.total_weight, dict(res.info)
        info["rounds"] = len(res.rounds)
    elif algo == "filter":
        res = filter_mst(comm, graph, FilterConfig(base_case_threshold=threshold, preprocess=preprocess), timer)
        ids, weight, info = res.edges["id"], res.total_weight, dict(res.info)
    else:
        full = comm.allgatherv(graph.edges)
        with timer.phase("sequential"):
            if comm.rank == 0:
                kid, weight, _ = oracle.kruskal(full)
                ids = np.array(sorted(kid), dtype=np.int64)
            else:
                ids, weight = np.zeros(0, dtype=np.int64), None
        weight = comm.broadcast(weight, 0)
        info = {}
    total = time.perf_counter() - start
    all_ids = np.sort(comm.allgatherv(np.asarray(ids, dtype=np.int64)))
    return {
        "m": m,
        "ids": all_ids,
        "weight": int(weight),
        "info": info,
        "phases": dict(timer.totals),
        "total": total,
        "stats": comm.stats,
        "edges": everything,
    }


def _digest(ids):
    return hashlib.sha256(np.ascontiguousarray(ids, dtype="<i8").tobytes()).hexdigest()


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.floating):
        return float(x)
    return x


def run_once(source, algo, p, seed=DEFAULT_SEED, preprocess=True, alltoall="auto",
             threshold=None, verify=False):
    """Run one algorithm and return the report dict (see README for the schema)."""
    if algo not in ALGORITHMS:
        raise ValueError(f"unknown algorithm {algo!r}")
    label = source
    if _is_spec(source):
        payload = parse_spec(source, default_seed=seed)
        label = str(payload)
    else:
        payload = _load_file(source)
    kernels.warmup()
    out = run_spmd(p, _program, seed=seed,
                   args=(payload, algo, preprocess, threshold, verify),
                   alltoall_strategy=alltoall)
    head = out[0]
    stats = CommStats()
    for o in out:
        stats = stats.merge(o["stats"])
    if isinstance(payload, tuple):
        n = payload[2]
    else:
        n = num_vertices(payload)
    verified = None
    if verify:
        verified = oracle.verify_msf(head["edges"], head["ids"].tolist()) is oracle.Verdict.OK
    total = head["total"]
    report = {
        "algorithm": algo,
        "p": p,
        "graph": label,
        "seed": seed,
        "n": n,
        "m": head["m"],
        "preprocess": preprocess,
        "alltoall": alltoall,
        "msf_total_weight": head["weight"],
        "msf_edge_count": int(head["ids"].shape[0]),
        "msf_digest": _digest(head["ids"]),
        "verified": verified,
        "info": head["info"],
        "comm": stats.as_dict(),
        "phase_times": {k: head["phases"].get(k, 0.0) for k in PHASES},
        "total_time": total,
        "throughput": head["m"] / total if total > 0 else 0.0,
    }
    return _jsonable(report)


def stable_view(report):
    """The report without wall-clock fields, serialised deterministically."""
    return json.dumps({k: v for k, v in report.items() if k not in TIMING_FIELDS}, sort_keys=True)


# -- bench ---------------------------------------------------------------------------

def _split_list(text, conv=str, commas=True):
    """Items separated by newlines or ``;`` (and by commas when ``commas``)."""
    text = text.replace(";", "\n")
    if commas:
        text = text.replace(",", "\n")
    return [conv(x.strip()) for x in text.splitlines() if x.strip()]


def read_bench_config(path):
    """INI file, section ``[matrix]``; see README for the keys."""
    cp = configparser.ConfigParser()
    if not cp.read(path):
        raise FileNotFoundError(path)
    if "matrix" not in cp:
        raise InvalidSpec(f"{path}: missing [matrix] section")
    sec = cp["matrix"]
    preset = sec.get("preset")
    if preset:
        cfg = preset_matrix(preset)
    else:
        cfg = {
            "algos": _split_list(sec.get("algos", "boruvka")),
            "p": _split_list(sec.get("p", "1"), int),
            # generator specs contain commas themselves
            "specs": _split_list(sec.get("specs", ""), commas=False),
            "seeds": [DEFAULT_SEED],
        }
        bad = set(cfg["algos"]) - set(ALGORITHMS)
        if bad or not cfg["specs"]:
            raise InvalidSpec(f"{path}: unknown algorithms {sorted(bad)} or no specs")
    if "seeds" in sec:
        cfg["seeds"] = _split_list(sec["seeds"], int)
    cfg["reps"] = sec.getint("reps", cfg.get("reps", 3))
    cfg["warmup"] = sec.getint("warmup", cfg.get("warmup", 1))
    cfg["preprocess"] = sec.getboolean("preprocess", True)
    cfg["alltoall"] = sec.get("alltoall", "auto")
    if cfg["reps"] < 1 or cfg["warmup"] < 0:
        raise InvalidSpec("reps must be >= 1 and warmup >= 0")
    return cfg


EDGES_PER_PE = 1 << 14


def preset_matrix(name):
    """Built-in matrices. ``weak-scaling``: 2**14 directed GNM edges per PE."""
    if name != "weak-scaling":
        raise InvalidSpec(f"unknown preset {name!r}")
    ps = [1, 2, 4, 8, 16]
    specs = {p: f"gnm:n={1024 * p},m={EDGES_PER_PE * p // 2}" for p in ps}
    return {"algos": ["boruvka", "filter"], "p": ps, "specs": None, "per_p": specs,
            "seeds": [DEFAULT_SEED], "reps": 3, "warmup": 1}


def bench(cfg, out=None):
    """Run the matrix; returns CSV rows (dicts) and writes them if ``out`` is given."""
    rows = []
    for algo in cfg["algos"]:
        for p in sorted(cfg["p"]):
            specs = [cfg["per_p"][p]] if cfg.get("per_p") else cfg["specs"]
            for spec in specs:
                for seed in cfg["seeds"]:
                    rows.append(_bench_cell(cfg, algo, p, spec, seed))
    if out is not None:
        write_csv(rows, out)
    return rows


def _bench_cell(cfg, algo, p, spec, seed):
    row = {"algorithm": algo, "p": p, "graph": spec, "seed": seed, "reps": cfg["reps"]}
    try:
        times, reps = [], []
        for i in range(cfg["warmup"] + cfg["reps"]):
            rep = run_once(spec, algo, p, seed, cfg.get("preprocess", True), cfg.get("alltoall", "auto"))
            if i >= cfg["warmup"]:
                reps.append(rep)
                times.append(rep["total_time"])
        last = reps[-1]
        row.update(
            status="ok", n=last["n"], m=last["m"],
            msf_total_weight=last["msf_total_weight"], msf_edge_count=last["msf_edge_count"],
            time_mean=float(np.mean(times)), time_var=float(np.var(times, ddof=1)) if len(times) > 1 else 0.0,
            throughput_mean=float(np.mean([r["throughput"] for r in reps])), verified="",
        )
    except Exception as exc:  # noqa: BLE001 - recorded in the row, matrix continues
        log.error("bench cell %s p=%d %s failed: %s", algo, p, spec, exc)
        row.update(status=f"failed: {type(exc).__name__}")
    return row


def write_csv(rows, out):
    fh = open(out, "w", newline="") if isinstance(out, (str, Path)) else out
    try:
        w = csv.DictWriter(fh, fieldnames=CSV_FIELDS, restval="")
        w.writeheader()
        w.writerows(rows)
    finally:
        if fh is not out:
            fh.close()


# -- commands ----------------------------------------------------------------------

def cmd_generate(args):
    spec = parse_spec(args.spec, default_seed=args.seed)
    edges = run_spmd(args.p, lambda comm: comm.allgatherv(generate(comm, spec).edges), seed=args.seed)[0]
    n = num_vertices(spec)
    size = write_binary(args.out, edges, n)
    print(f"n={n} m={edges.shape[0]} bytes={size}")
    return 0


def cmd_run(args):
    report = run_once(args.input, args.algo, args.p, args.seed, not args.no_preprocess,
                      args.alltoall, args.threshold, args.verify)
    print(json.dumps(report, indent=2, sort_keys=True))
    if args.csv:
        row = {k: report.get(k, "") for k in CSV_FIELDS}
        row.update(status="ok", reps=1, time_mean=report["total_time"], time_var=0.0,
                   throughput_mean=report["throughput"])
        new = not Path(args.csv).exists()
        with open(args.csv, "a", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=CSV_FIELDS, restval="")
            if new:
                w.writeheader()
            w.writerow(row)
    if args.verify and not report["verified"]:
        print("verification failed", file=sys.stderr)
        return 2
    return 0


def cmd_bench(args):
    cfg = preset_matrix(args.preset) if args.preset else read_bench_config(args.config)
    rows = bench(cfg, args.out or sys.stdout)
    return 0 if all(r["status"] == "ok" for r in rows) else 1


def build_parser():
    ap = argparse.ArgumentParser(prog="distmsf", description="Distributed MSF: generate graphs, run and benchmark.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="cmd", required=True)

    g = sub.add_parser("generate", help="write a generated graph as a binary edge list")
    g.add_argument("spec")
    g.add_argument("out")
    g.add_argument("--seed", type=int, default=DEFAULT_SEED)
    g.add_argument("-p", type=int, default=1)
    g.set_defaults(fn=cmd_generate)

    r = sub.add_parser("run", help="compute an MSF and print a JSON report")
    r.add_argument("input", help="binary/text edge list or generator spec")
    r.add_argument("--algo", choices=ALGORITHMS, default="boruvka")
    r.add_argument("-p", type=int, default=4)
    r.add_argument("--seed", type=int, default=DEFAULT_SEED)
    r.add_argument("--verify", action="store_true")
    r.add_argument("--no-preprocess", action="store_true")
    r.add_argument("--alltoall", choices=("auto", "direct", "grid"), default="auto")
    r.add_argument("--threshold", type=int, default=None, help="base-case vertex threshold")
    r.add_argument("--csv", help="append a summary row to this CSV file")
    r.set_defaults(fn=cmd_run)

    b = sub.add_parser("bench", help="run a benchmark matrix and write CSV")
    b.add_argument("config", nargs="?")
    b.add_argument("--preset", choices=("weak-scaling",))
    b.add_argument("-o", "--out")
    b.set_defaults(fn=cmd_bench)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.cmd == "bench" and not (args.config or args.preset):
        print("bench needs a config file or --preset", file=sys.stderr)
        return 1
    try:
        return args.fn(args)
    except (MsfError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
