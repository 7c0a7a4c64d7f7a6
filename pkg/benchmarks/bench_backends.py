#!/usr/bin/env python3
"""Benchmark the greedy-merge kernel: numba JIT vs pure-numpy fallback.

Times the two backends on (a) raw merge loops over synthetic community graphs
and (b) the full optimal-subgraph clustering of a synthetic corpus, then
checks that both backends produce identical partitions.

Usage:
    python benchmarks/bench_backends.py [--nodes N] [--events E] [--repeats R]
"""

from __future__ import annotations

import argparse
import os
import statistics
import time

import numpy as np

from dpevent._accel import HAS_NUMBA
from dpevent.corpus import SynthConfig, generate
from dpevent.entropy import minimize_edges, resolve_parents, two_dim_se, \
    _community_aggregates
from dpevent.graphsynth import MessageGraph, build_graph
from dpevent.partition import cluster
from dpevent.privacy import PrivacyParams, SimilarityOracle


def random_community_graph(rng, n, avg_degree=12.0):
    m = int(avg_degree * n / 2)
    codes = rng.choice(n * (n - 1) // 2, size=m, replace=False)
    # decode condensed index vectorized
    i = (n - 2 - np.floor(np.sqrt(-8.0 * codes + 4 * n * (n - 1) - 7) / 2.0 - 0.5)).astype(np.int64)
    j = (codes + i + 1 - (i * (2 * n - i - 1)) // 2).astype(np.int64)
    w = rng.uniform(0.01, 1.0, size=m)
    return MessageGraph(n=n, u=i, v=j, w=w, provenance=np.ones(m, np.uint8))


def bench_merge_kernel(graph, backend, repeats):
    os.environ["DPEVENT_BACKEND"] = backend
    times = []
    result = None
    for _ in range(repeats):
        vol, V, g, ilog, ea, eb, ew = _community_aggregates(graph,
                                                            np.arange(graph.n, dtype=np.int64))
        parent = np.arange(graph.n, dtype=np.int64)
        t0 = time.perf_counter()
        minimize_edges(ea, eb, ew, V, g, ilog, parent, vol)
        times.append(time.perf_counter() - t0)
        result = resolve_parents(parent)
    return statistics.median(times), result


def bench_cluster(graph, backend, repeats):
    os.environ["DPEVENT_BACKEND"] = backend
    times = []
    result = None
    for _ in range(repeats):
        t0 = time.perf_counter()
        run = cluster(graph, q0=400)
        times.append(time.perf_counter() - t0)
        result = run.final
    return statistics.median(times), result


def main():
    parser = argparse.ArgumentParser(description="numba vs numpy merge-kernel benchmark")
    parser.add_argument("--nodes", type=int, default=3000,
                        help="community-graph sizes up to N (default 3000)")
    parser.add_argument("--events", type=int, default=20,
                        help="events in the end-to-end corpus (default 20)")
    parser.add_argument("--repeats", type=int, default=3)
    args = parser.parse_args()

    if not HAS_NUMBA:
        print("numba not importable; nothing to compare")
        return

    rng = np.random.default_rng(7)
    sizes = [n for n in (300, 1000, args.nodes) if n >= 10]

    print(f"{'workload':<28s} {'numpy (s)':>10s} {'numba (s)':>10s} {'speedup':>8s}  agree")
    print("-" * 68)

    # JIT warmup outside the timed region
    warm = random_community_graph(rng, 50)
    bench_merge_kernel(warm, "numba", 1)

    for n in sizes:
        graph = random_community_graph(rng, n)
        t_np, r_np = bench_merge_kernel(graph, "numpy", args.repeats)
        t_nb, r_nb = bench_merge_kernel(graph, "numba", args.repeats)
        agree = bool(np.array_equal(r_np, r_nb))
        print(f"merge kernel n={n:<13d} {t_np:>10.4f} {t_nb:>10.4f} {t_np / t_nb:>7.1f}x  {agree}")

    corpus = generate(SynthConfig(num_events=args.events, points_per_event=200, dim=32,
                                  attribute_sharing_prob=0.7, seed=1))
    oracle = SimilarityOracle(corpus, PrivacyParams(epsilon=15.0, seed=2))
    graph, _ = build_graph(corpus, oracle, k_max=40)
    t_np, p_np = bench_cluster(graph, "numpy", max(1, args.repeats - 1))
    t_nb, p_nb = bench_cluster(graph, "numba", max(1, args.repeats - 1))
    agree = p_np.same_as(p_nb)
    h_np = two_dim_se(graph, p_np)
    h_nb = two_dim_se(graph, p_nb)
    print(f"cluster e2e n={graph.n:<12d} {t_np:>10.4f} {t_nb:>10.4f} {t_np / t_nb:>7.1f}x  {agree}")
    print(f"\nfinal H2: numpy {h_np:.12f}  numba {h_nb:.12f}  |diff| {abs(h_np - h_nb):.2e}")
    os.environ.pop("DPEVENT_BACKEND", None)


if __name__ == "__main__":
    main()
