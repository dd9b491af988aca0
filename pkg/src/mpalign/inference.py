"""Alignment induction: symmetric pair scores, row-softmax thresholding, GDFA.

The score matrix for a language pair inside one sentence averages the decoder
output over both argument orders, so transposing the pair transposes the
matrix exactly. Directional candidate sets keep, per row, the best cell whose
row-softmax mass exceeds ``alpha / row_length``; grow-diag-final-and then
symmetrizes the forward and backward sets.
"""

from dataclasses import dataclass

import numpy as np

from . import gnn
from .features import FeatureConfig, SentenceFeatures

NEIGHBOR_OFFSETS = ((-1, 0), (1, 0), (0, -1), (0, 1), (-1, -1), (-1, 1), (1, -1), (1, 1))

LinkSet = set[tuple[int, int]]


@dataclass(frozen=True)
class ScoreMatrix:
    source_lang: str
    target_lang: str
    values: np.ndarray  # (m, l)
    mode: str  # "logit" or "prob"


def score_matrix(
    sf: SentenceFeatures,
    params: dict[str, np.ndarray],
    lang_x: str,
    lang_y: str,
    config: FeatureConfig,
    mode: str = "logit",
) -> ScoreMatrix:
    """Score every (x_i, y_j) pair; the result is symmetric under role swap."""
    g = sf.graph
    if lang_x not in g.offsets or lang_y not in g.offsets:
        missing = lang_x if lang_x not in g.offsets else lang_y
        raise ValueError(f"sentence {g.sentence_id}: language {missing!r} not present")
    if mode not in ("logit", "prob"):
        raise ValueError(f"unknown score mode {mode!r}")
    start_x, m = g.offsets[lang_x]
    start_y, l = g.offsets[lang_y]
    P = gnn.as_leaves(params)
    hidden = gnn.encode(sf, P, config)
    xs = np.repeat(np.arange(start_x, start_x + m), l)
    ys = np.tile(np.arange(start_y, start_y + l), m)
    p_fwd, l_fwd = gnn.decode_pairs(hidden, xs, ys, P)
    p_bwd, l_bwd = gnn.decode_pairs(hidden, ys, xs, P)
    if mode == "logit":
        fwd, bwd = l_fwd.data, l_bwd.data
    else:
        fwd, bwd = p_fwd.data, p_bwd.data
    values = 0.5 * (fwd.reshape(m, l) + bwd.reshape(m, l))
    return ScoreMatrix(lang_x, lang_y, values.astype(np.float64), mode)


def _row_softmax(s: np.ndarray) -> np.ndarray:
    shifted = s - s.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def threshold_directional(s: np.ndarray, alpha: float, direction: str = "forward") -> LinkSet:
    """Per-row best cell among those whose row-softmax exceeds alpha/row_length.

    ``forward`` thresholds the rows of ``s``; ``backward`` works on the
    transpose and reports links in the original (row, column) orientation.
    """
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    if direction == "backward":
        return {(i, j) for j, i in threshold_directional(s.T, alpha, "forward")}
    if direction != "forward":
        raise ValueError(f"unknown direction {direction!r}")
    s = np.asarray(s, dtype=np.float64)
    if s.size == 0:
        return set()
    probs = _row_softmax(s)
    thr = alpha / s.shape[1]
    links: LinkSet = set()
    for i in range(s.shape[0]):
        surviving = np.nonzero(probs[i] > thr)[0]
        if surviving.size:
            j = surviving[np.argmax(s[i, surviving])]
            links.add((i, int(j)))
    return links


def gdfa(
    forward: LinkSet,
    backward: LinkSet,
    m: int,
    l: int,
    extra_union: LinkSet | None = None,
) -> LinkSet:
    """Grow-diag-final-and over the forward/backward candidate sets.

    Grow-diag runs in synchronous rounds: all candidates are tested against
    the alignment as it stood at the start of the round, which makes the
    fixpoint independent of enumeration order. Final-and scans forward links,
    then backward, then any extra union links, each sorted ascending.
    """
    forward = set(forward)
    backward = set(backward)
    union = forward | backward
    if extra_union:
        union |= set(extra_union)
    for i, j in union:
        if not (0 <= i < m and 0 <= j < l):
            raise ValueError(f"link ({i},{j}) outside a {m}x{l} sentence pair")

    aligned = forward & backward
    rows = {i for i, _ in aligned}
    cols = {j for _, j in aligned}

    candidates = union - aligned
    while True:
        added = set()
        for i, j in candidates:
            if (i in rows) and (j in cols):
                continue
            for di, dj in NEIGHBOR_OFFSETS:
                if (i + di, j + dj) in aligned:
                    added.add((i, j))
                    break
        if not added:
            break
        aligned |= added
        rows |= {i for i, _ in added}
        cols |= {j for _, j in added}
        candidates -= added

    scan = sorted(forward - aligned) + sorted(backward - forward - aligned)
    if extra_union:
        scan += sorted(set(extra_union) - forward - backward - aligned)
    for i, j in scan:
        if i not in rows and j not in cols:
            aligned.add((i, j))
            rows.add(i)
            cols.add(j)
    return aligned


def tgdfa(
    sf: SentenceFeatures,
    params: dict[str, np.ndarray],
    lang_x: str,
    lang_y: str,
    config: FeatureConfig,
    alpha: float = 2.0,
    mode: str = "logit",
) -> LinkSet:
    s = score_matrix(sf, params, lang_x, lang_y, config, mode)
    forward = threshold_directional(s.values, alpha, "forward")
    backward = threshold_directional(s.values, alpha, "backward")
    m, l = s.values.shape
    return gdfa(forward, backward, m, l)


def tgdfa_plus_orig(
    sf: SentenceFeatures,
    params: dict[str, np.ndarray],
    lang_x: str,
    lang_y: str,
    config: FeatureConfig,
    orig_gdfa: LinkSet,
    alpha: float = 2.0,
    mode: str = "logit",
) -> LinkSet:
    """TGDFA with the bilingual aligner's GDFA links added to the union only."""
    s = score_matrix(sf, params, lang_x, lang_y, config, mode)
    forward = threshold_directional(s.values, alpha, "forward")
    backward = threshold_directional(s.values, alpha, "backward")
    m, l = s.values.shape
    return gdfa(forward, backward, m, l, extra_union=orig_gdfa)
