#!/usr/bin/env python3
"""Benchmark the graph kernels: numba-compiled vs pure-Python fallback.

Run without arguments: times the compiled path, then re-executes itself with
MPALIGN_DISABLE_NUMBA=1 to time the fallback, and prints the speedups.
"""

import json
import os
import subprocess
import sys
import time

import numpy as np

from mpalign import kernels
from mpalign.communities import lpc
from mpalign.graph import AlignmentGraph


def make_graphs(n_graphs=60, n_languages=8, tokens_per_lang=9, seed=0):
    rng = np.random.default_rng(seed)
    graphs = []
    for _ in range(n_graphs):
        tokens = {
            f"l{i:02d}": [f"w{j}" for j in range(tokens_per_lang)]
            for i in range(n_languages)
        }
        n = n_languages * tokens_per_lang
        edges = set()
        for _ in range(4 * n):
            u = int(rng.integers(n))
            v = int(rng.integers(n))
            if u // tokens_per_lang != v // tokens_per_lang:
                edges.add((min(u, v), max(u, v)))
        graphs.append(AlignmentGraph("bench", tokens, np.array(sorted(edges))))
    return graphs


def bench(fn, repeats=3):
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - start)
    return best


def run_suite():
    graphs = make_graphs()
    kernels.warmup()

    def centrality_pass():
        for g in graphs:
            kernels.centrality_bundle(g.indptr, g.indices, g.n)

    def component_pass():
        for g in graphs:
            kernels.connected_component_labels(g.indptr, g.indices, g.n)

    def lpc_pass():
        for i, g in enumerate(graphs):
            lpc(g, seed=i)

    return {
        "numba": kernels.HAVE_NUMBA,
        "centralities_s": bench(centrality_pass),
        "components_s": bench(component_pass),
        "label_propagation_s": bench(lpc_pass),
    }


def main():
    results = run_suite()
    mode = "numba" if results["numba"] else "pure-python/numpy fallback"
    print(f"kernel timings ({mode}, best of 3, {60} graphs of 72 nodes):")
    for key in ("centralities_s", "components_s", "label_propagation_s"):
        print(f"  {key[:-2]:>20}: {results[key] * 1000:9.2f} ms")

    if results["numba"] and "--no-fallback" not in sys.argv:
        env = dict(os.environ, MPALIGN_DISABLE_NUMBA="1")
        proc = subprocess.run(
            [sys.executable, __file__, "--json"],
            capture_output=True, text=True, env=env, check=True,
        )
        fallback = json.loads(proc.stdout)
        print("fallback timings (MPALIGN_DISABLE_NUMBA=1):")
        for key in ("centralities_s", "components_s", "label_propagation_s"):
            speedup = fallback[key] / results[key]
            print(
                f"  {key[:-2]:>20}: {fallback[key] * 1000:9.2f} ms "
                f"(numba speedup {speedup:6.1f}x)"
            )


if __name__ == "__main__":
    if "--json" in sys.argv:
        print(json.dumps(run_suite()))
    else:
        main()
