"""Hot graph kernels: BFS distances, components, centrality accumulation, label updates.

All kernels operate on a CSR adjacency (``indptr``, ``indices``; int64) of an
undirected, loop-free graph. They are compiled with numba when it is available.
Set ``MPALIGN_DISABLE_NUMBA=1`` to force the uncompiled pure-Python/numpy path
(same functions, much slower); ``benchmarks/bench_kernels.py`` compares both.
"""

import os

import numpy as np

_env = os.environ.get("MPALIGN_DISABLE_NUMBA", "").strip().lower()
NUMBA_DISABLED = _env in {"1", "true", "yes", "on"}

if NUMBA_DISABLED:
    HAVE_NUMBA = False
else:
    try:
        import numba

        HAVE_NUMBA = True
    except ImportError:  # pragma: no cover - numba is a hard dependency
        HAVE_NUMBA = False


def jit(func):
    """Compile *func* with numba when enabled, otherwise return it unchanged."""
    if HAVE_NUMBA:
        return numba.njit(cache=True)(func)
    return func


@jit
def connected_component_labels(indptr, indices, n):
    """Label nodes by connected component (labels in discovery order) and count them."""
    labels = np.full(n, -1, np.int64)
    queue = np.empty(n, np.int64)
    comp = 0
    for start in range(n):
        if labels[start] >= 0:
            continue
        labels[start] = comp
        queue[0] = start
        head, tail = 0, 1
        while head < tail:
            v = queue[head]
            head += 1
            for e in range(indptr[v], indptr[v + 1]):
                w = indices[e]
                if labels[w] < 0:
                    labels[w] = comp
                    queue[tail] = w
                    tail += 1
        comp += 1
    return labels, comp


@jit
def bfs_distances(indptr, indices, n):
    """All-pairs hop distances; -1 marks unreachable pairs."""
    dist = np.full((n, n), -1, np.int32)
    queue = np.empty(n, np.int64)
    for s in range(n):
        dist[s, s] = 0
        queue[0] = s
        head, tail = 0, 1
        while head < tail:
            v = queue[head]
            head += 1
            dv = dist[s, v]
            for e in range(indptr[v], indptr[v + 1]):
                w = indices[e]
                if dist[s, w] < 0:
                    dist[s, w] = dv + 1
                    queue[tail] = w
                    tail += 1
    return dist


@jit
def centrality_bundle(indptr, indices, n):
    """Degree, closeness, betweenness, load, and harmonic centrality in one pass.

    Closeness is the within-component value scaled by (|C|-1)/(n-1); harmonic
    sums reciprocal distances over n-1; betweenness uses pair-counting
    accumulation and load equal flow splitting among shortest-path successors
    toward each target, both scaled by 2/((n-1)(n-2)) over unordered pairs.
    """
    degree = np.zeros(n, np.float64)
    closeness = np.zeros(n, np.float64)
    betweenness = np.zeros(n, np.float64)
    load = np.zeros(n, np.float64)
    harmonic = np.zeros(n, np.float64)
    for v in range(n):
        degree[v] = indptr[v + 1] - indptr[v]
    if n <= 1:
        return degree, closeness, betweenness, load, harmonic

    dist = bfs_distances(indptr, indices, n)

    for v in range(n):
        total = 0.0
        reach = 0.0
        hsum = 0.0
        for w in range(n):
            d = dist[v, w]
            if d > 0:
                total += d
                reach += 1.0
                hsum += 1.0 / d
        if total > 0.0:
            closeness[v] = (reach / total) * (reach / (n - 1.0))
        harmonic[v] = hsum / (n - 1.0)

    order = np.empty(n, np.int64)
    bucket = np.empty(n + 1, np.int64)
    sigma = np.zeros(n, np.float64)
    delta = np.zeros(n, np.float64)
    flow = np.zeros(n, np.float64)
    nsucc = np.zeros(n, np.int64)

    for s in range(n):
        # counting sort of reachable nodes by distance from s
        maxd = 0
        cnt = 0
        for v in range(n):
            d = dist[s, v]
            if d >= 0:
                cnt += 1
                if d > maxd:
                    maxd = d
        for d in range(maxd + 2):
            bucket[d] = 0
        for v in range(n):
            d = dist[s, v]
            if d >= 0:
                bucket[d + 1] += 1
        for d in range(maxd + 1):
            bucket[d + 1] += bucket[d]
        for v in range(n):
            d = dist[s, v]
            if d >= 0:
                order[bucket[d]] = v
                bucket[d] += 1

        # Brandes: shortest-path counts forward, dependencies backward
        for i in range(cnt):
            sigma[order[i]] = 0.0
            delta[order[i]] = 0.0
        sigma[s] = 1.0
        for i in range(cnt):
            v = order[i]
            dv = dist[s, v]
            sv = sigma[v]
            for e in range(indptr[v], indptr[v + 1]):
                w = indices[e]
                if dist[s, w] == dv + 1:
                    sigma[w] += sv
        for i in range(cnt - 1, -1, -1):
            v = order[i]
            dv = dist[s, v]
            coeff = (1.0 + delta[v]) / sigma[v]
            for e in range(indptr[v], indptr[v + 1]):
                w = indices[e]
                if dist[s, w] == dv - 1:
                    delta[w] += sigma[w] * coeff
            if v != s:
                betweenness[v] += delta[v]

        # load toward target s: unit packets split equally at branch points
        for i in range(cnt):
            v = order[i]
            flow[v] = 0.0
            k = 0
            if v != s:
                dv = dist[s, v]
                for e in range(indptr[v], indptr[v + 1]):
                    w = indices[e]
                    if dist[s, w] == dv - 1:
                        k += 1
            nsucc[v] = k
        for i in range(cnt - 1, -1, -1):
            v = order[i]
            if v == s:
                continue
            f = 1.0 + flow[v]
            share = f / nsucc[v]
            dv = dist[s, v]
            for e in range(indptr[v], indptr[v + 1]):
                w = indices[e]
                if dist[s, w] == dv - 1:
                    flow[w] += share
            load[v] += f - 1.0

    if n > 2:
        scale = 1.0 / ((n - 1.0) * (n - 2.0))
        for v in range(n):
            betweenness[v] *= scale
            load[v] *= scale
    return degree, closeness, betweenness, load, harmonic


@jit
def label_propagation_update(indptr, indices, labels, subset):
    """One synchronous update of *subset*: most frequent neighbor label, ties to smallest."""
    n = labels.shape[0]
    counts = np.zeros(n, np.int64)
    new_labels = labels.copy()
    for k in range(subset.shape[0]):
        v = subset[k]
        if indptr[v + 1] == indptr[v]:
            continue
        best_label = -1
        best_count = 0
        for e in range(indptr[v], indptr[v + 1]):
            lw = labels[indices[e]]
            counts[lw] += 1
            c = counts[lw]
            if c > best_count or (c == best_count and lw < best_label):
                best_count = c
                best_label = lw
        for e in range(indptr[v], indptr[v + 1]):
            counts[labels[indices[e]]] = 0
        new_labels[v] = best_label
    return new_labels


@jit
def label_propagation_stable(indptr, indices, labels):
    """True iff every non-isolated node's label is a mode of its neighborhood."""
    n = labels.shape[0]
    counts = np.zeros(n, np.int64)
    for v in range(n):
        if indptr[v + 1] == indptr[v]:
            continue
        best = 0
        for e in range(indptr[v], indptr[v + 1]):
            lw = labels[indices[e]]
            counts[lw] += 1
            if counts[lw] > best:
                best = counts[lw]
        own = counts[labels[v]]
        for e in range(indptr[v], indptr[v + 1]):
            counts[labels[indices[e]]] = 0
        if own < best or own == 0:
            return False
    return True


def warmup():
    """Trigger JIT compilation of every kernel on a tiny graph."""
    indptr = np.array([0, 1, 2], np.int64)
    indices = np.array([1, 0], np.int64)
    connected_component_labels(indptr, indices, 2)
    centrality_bundle(indptr, indices, 2)
    labels = np.arange(2, dtype=np.int64)
    subset = np.array([0], np.int64)
    label_propagation_update(indptr, indices, labels, subset)
    label_propagation_stable(indptr, indices, labels)
