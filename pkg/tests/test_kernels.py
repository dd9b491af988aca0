"""Kernel-level checks, including pure-Python fallback parity via subprocess."""

import json
import os
import subprocess
import sys

import numpy as np

from mpalign import kernels

from oracles import random_graph

PARITY_SNIPPET = """
import json
import numpy as np
from mpalign import kernels

indptr = np.array({indptr}, np.int64)
indices = np.array({indices}, np.int64)
n = {n}
out = kernels.centrality_bundle(indptr, indices, n)
labels, count = kernels.connected_component_labels(indptr, indices, n)
print(json.dumps({{
    "numba": kernels.HAVE_NUMBA,
    "bundle": [list(map(float, a)) for a in out],
    "labels": labels.tolist(),
    "count": int(count),
}}))
"""


def test_warmup_compiles():
    kernels.warmup()


def test_fallback_path_matches_jit(rng):
    g = random_graph(rng, 8, 0.4)
    jit_out = kernels.centrality_bundle(g.indptr, g.indices, g.n)
    labels, count = kernels.connected_component_labels(g.indptr, g.indices, g.n)

    code = PARITY_SNIPPET.format(
        indptr=g.indptr.tolist(), indices=g.indices.tolist(), n=g.n
    )
    env = dict(os.environ, MPALIGN_DISABLE_NUMBA="1")
    proc = subprocess.run(
        [sys.executable, "-c", code], capture_output=True, text=True, env=env,
        check=True,
    )
    payload = json.loads(proc.stdout)
    assert payload["numba"] is False
    for ours, theirs in zip(jit_out, payload["bundle"]):
        np.testing.assert_allclose(ours, np.asarray(theirs), atol=1e-12)
    assert payload["labels"] == labels.tolist()
    assert payload["count"] == count


def test_label_update_tie_breaks_to_smallest(rng):
    # node 0 adjacent to labels {1, 2}: tie resolved toward 1
    indptr = np.array([0, 2, 3, 4], np.int64)
    indices = np.array([1, 2, 0, 0], np.int64)
    labels = np.arange(3, dtype=np.int64)
    new = kernels.label_propagation_update(
        indptr, indices, labels, np.array([0], np.int64)
    )
    assert new[0] == 1
