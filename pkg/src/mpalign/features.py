"""Node features: centralities, z-scoring, co-occurrence word vectors, assembly.

Every node of a sentence graph is described by five graph centralities
(z-scored and lifted to 4 dims each by a learned affine map), two community
memberships (32-dim embeddings for each detector), token position (32),
language (20) and word identity (100), concatenated to a 236-dim input vector.
"""

import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg

from . import kernels
from .communities import Partition, detect
from .corpus import MultiParallelCorpus
from .graph import AlignmentGraph

CENTRALITY_NAMES = ("degree", "closeness", "betweenness", "load", "harmonic")

BLOCK_WIDTHS = {
    "centrality": 20,  # 5 centralities x 4
    "community": 64,  # 32 per detector
    "position": 32,
    "language": 20,
    "word": 100,
}
BLOCK_ORDER = ("centrality", "community", "position", "language", "word")


def centralities(g: AlignmentGraph) -> np.ndarray:
    """(n, 5) float64 matrix, columns ordered as CENTRALITY_NAMES."""
    deg, clo, btw, load, har = kernels.centrality_bundle(g.indptr, g.indices, g.n)
    return np.stack([deg, clo, btw, load, har], axis=1)


@dataclass(frozen=True)
class FeatureStandardizer:
    """Per-centrality mean/std over all nodes of the training graphs."""

    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, matrices: Iterable[np.ndarray]) -> "FeatureStandardizer":
        stacked = np.concatenate([np.asarray(m, dtype=np.float64) for m in matrices], axis=0)
        if stacked.shape[0] == 0:
            raise ValueError("cannot fit a standardizer on zero nodes")
        mean = stacked.mean(axis=0)
        std = stacked.std(axis=0)
        std = np.where(std > 0.0, std, 1.0)  # constant feature -> z = 0
        return cls(mean, std)

    def apply(self, x: np.ndarray) -> np.ndarray:
        return (np.asarray(x, dtype=np.float64) - self.mean) / self.std


def per_graph_standardize(x: np.ndarray) -> np.ndarray:
    """Alternative scaling mode: z-score within a single graph's nodes."""
    x = np.asarray(x, dtype=np.float64)
    mean = x.mean(axis=0)
    std = x.std(axis=0)
    std = np.where(std > 0.0, std, 1.0)
    return (x - mean) / std


@dataclass(frozen=True)
class FeatureConfig:
    cent_dim: int = 4
    comm_dim: int = 32
    pos_dim: int = 32
    lang_dim: int = 20
    word_dim: int = 100
    pos_table: int = 160  # positions clamp at pos_table - 1
    comm_table: int = 257  # community ids cap at comm_table - 2, last row = overflow
    ablate: tuple[str, ...] = ()

    def __post_init__(self):
        unknown = set(self.ablate) - set(BLOCK_WIDTHS)
        if unknown:
            raise ValueError(f"unknown ablation block(s): {sorted(unknown)}")

    def active(self, block: str) -> bool:
        return block not in self.ablate

    @property
    def input_dim(self) -> int:
        return sum(w for b, w in BLOCK_WIDTHS.items() if self.active(b))


@dataclass
class FeatureEmbeddings:
    """Learnable feature-lift parameters (owned by the model, grouped here)."""

    cent_w: np.ndarray  # (5, 4)
    cent_b: np.ndarray  # (5, 4)
    comm_gmc: np.ndarray  # (comm_table, 32)
    comm_lpc: np.ndarray  # (comm_table, 32)
    pos: np.ndarray  # (pos_table, 32)
    lang: np.ndarray  # (n_languages, 20)
    word: np.ndarray  # (vocab+1, 100), last row = UNK


def community_indices(p: Partition, cap: int) -> np.ndarray:
    """Canonical community ids clipped into the embedding table (overflow bucket last)."""
    return np.minimum(p.labels, cap).astype(np.int64)


def assemble_features(
    z_cent: np.ndarray,
    comm_gmc_idx: np.ndarray,
    comm_lpc_idx: np.ndarray,
    pos_idx: np.ndarray,
    lang_idx: np.ndarray,
    word_idx: np.ndarray,
    emb: FeatureEmbeddings,
    config: FeatureConfig,
) -> np.ndarray:
    """Reference (non-differentiable) assembly of the per-node input matrix."""
    n = z_cent.shape[0]
    if lang_idx.size and (lang_idx.min() < 0 or lang_idx.max() >= emb.lang.shape[0]):
        raise ValueError("language index outside the embedding table")
    blocks = []
    if config.active("centrality"):
        cent = [
            z_cent[:, k : k + 1] * emb.cent_w[k : k + 1, :] + emb.cent_b[k : k + 1, :]
            for k in range(len(CENTRALITY_NAMES))
        ]
        blocks.append(np.concatenate(cent, axis=1))
    if config.active("community"):
        blocks.append(emb.comm_gmc[comm_gmc_idx])
        blocks.append(emb.comm_lpc[comm_lpc_idx])
    if config.active("position"):
        blocks.append(emb.pos[pos_idx])
    if config.active("language"):
        blocks.append(emb.lang[lang_idx])
    if config.active("word"):
        blocks.append(emb.word[word_idx])
    out = np.concatenate(blocks, axis=1) if blocks else np.zeros((n, 0))
    assert out.shape[1] == config.input_dim
    return out


# ---------------------------------------------------------------------------
# word vectors from verse co-occurrence


def build_word_vocab(
    corpus: MultiParallelCorpus, sentence_ids: Sequence[str] | None = None
) -> dict[tuple[str, str], int]:
    """(language, word-type) -> row index, over the retained sentences only."""
    ids = sorted(corpus.sentences) if sentence_ids is None else sorted(sentence_ids)
    seen = set()
    for sid in ids:
        for lang, toks in corpus.sentences[sid].items():
            for tok in toks:
                seen.add((lang, tok))
    return {key: i for i, key in enumerate(sorted(seen))}


def train_word_embeddings(
    corpus: MultiParallelCorpus,
    vocab: Mapping[tuple[str, str], int],
    dim: int = 100,
    sentence_ids: Sequence[str] | None = None,
    dense_cutoff: int = 4_000_000,
) -> np.ndarray:
    """Sentence-occurrence word vectors: PPMI-weighted binary (type x sentence)
    matrix, rank-``dim`` truncated SVD, rows scaled by sqrt singular values.

    Returns a float32 table of shape (len(vocab)+1, dim); the last row is the
    all-zero UNK initialization. Rank deficits are padded with zero columns.
    """
    ids = sorted(corpus.sentences) if sentence_ids is None else sorted(sentence_ids)
    col_of = {sid: j for j, sid in enumerate(ids)}
    rows, cols = [], []
    for sid in ids:
        j = col_of[sid]
        for lang, toks in corpus.sentences[sid].items():
            for tok in set(toks):
                key = (lang, tok)
                if key in vocab:
                    rows.append(vocab[key])
                    cols.append(j)
    n_rows, n_cols = len(vocab), len(ids)
    table = np.zeros((n_rows + 1, dim), dtype=np.float32)
    if not rows or n_cols == 0:
        return table

    occ = sp.csr_matrix(
        (np.ones(len(rows)), (rows, cols)), shape=(n_rows, n_cols), dtype=np.float64
    )
    occ.sum_duplicates()
    occ.data[:] = 1.0
    total = occ.sum()
    row_sum = np.asarray(occ.sum(axis=1)).ravel()
    col_sum = np.asarray(occ.sum(axis=0)).ravel()
    ppmi = occ.tocoo()
    vals = np.log(ppmi.data * total / (row_sum[ppmi.row] * col_sum[ppmi.col]))
    vals = np.maximum(vals, 0.0)
    ppmi = sp.csr_matrix((vals, (ppmi.row, ppmi.col)), shape=occ.shape)

    k = min(dim, n_rows - 1, n_cols - 1)
    if k < 1:
        return table
    if n_rows * n_cols <= dense_cutoff:
        u, s, _ = np.linalg.svd(ppmi.toarray(), full_matrices=False)
        u, s = u[:, :k], s[:k]
    else:
        v0 = np.full(min(ppmi.shape), 1.0 / math.sqrt(min(ppmi.shape)))
        u, s, _ = scipy.sparse.linalg.svds(ppmi, k=k, v0=v0)
        order = np.argsort(s)[::-1]
        u, s = u[:, order], s[order]
    # deterministic sign: largest-magnitude component of each column positive
    for j in range(u.shape[1]):
        i = int(np.argmax(np.abs(u[:, j])))
        if u[i, j] < 0:
            u[:, j] = -u[:, j]
    emb = u * np.sqrt(np.maximum(s, 0.0))
    table[:n_rows, : emb.shape[1]] = emb.astype(np.float32)
    return table


# ---------------------------------------------------------------------------
# model-ready sentence bundles


@dataclass
class SentenceFeatures:
    """Constant per-sentence inputs for the link predictor."""

    graph: AlignmentGraph
    z_cent: np.ndarray  # (n, 5) standardized centralities
    comm_gmc: np.ndarray  # (n,) table indices
    comm_lpc: np.ndarray
    pos_idx: np.ndarray
    lang_idx: np.ndarray
    word_idx: np.ndarray
    att_center: np.ndarray  # attention slots: receiving node per slot
    att_nbr: np.ndarray  # attended node per slot (self slot first per node)
    att_starts: np.ndarray  # slot segment start per node


def attention_slots(g: AlignmentGraph) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Self slot plus one slot per neighbor for every node, grouped by node."""
    center, nbr, starts = [], [], []
    for v in range(g.n):
        starts.append(len(center))
        center.append(v)
        nbr.append(v)
        for w in g.neighbors(v):
            center.append(v)
            nbr.append(int(w))
    return (
        np.asarray(center, dtype=np.int64),
        np.asarray(nbr, dtype=np.int64),
        np.asarray(starts, dtype=np.int64),
    )


def derive_seed(base: int, tag: str) -> int:
    """Stable per-sentence/per-purpose RNG seed."""
    import hashlib

    digest = hashlib.blake2s(f"{base}:{tag}".encode()).digest()
    return int.from_bytes(digest[:8], "little")


def featurize(
    g: AlignmentGraph,
    standardizer: FeatureStandardizer | None,
    lang_index: Mapping[str, int],
    vocab: Mapping[tuple[str, str], int],
    config: FeatureConfig,
    *,
    raw_centralities: np.ndarray | None = None,
    gamma: float = 1.0,
    lpc_seed_base: int = 0,
    lpc_portion: float = 0.5,
    lpc_max_iters: int = 100,
    per_graph_scaling: bool = False,
) -> SentenceFeatures:
    """Compute every constant model input for one sentence graph."""
    raw = centralities(g) if raw_centralities is None else raw_centralities
    if per_graph_scaling:
        z = per_graph_standardize(raw)
    else:
        if standardizer is None:
            raise ValueError("global scaling requires a fitted standardizer")
        z = standardizer.apply(raw)

    p_gmc = detect(g, "gmc", gamma=gamma)
    p_lpc = detect(
        g,
        "lpc",
        seed=derive_seed(lpc_seed_base, f"lpc:{g.sentence_id}"),
        portion=lpc_portion,
        max_iters=lpc_max_iters,
    )
    cap = config.comm_table - 1
    unk = len(vocab)
    lang_idx = np.empty(g.n, dtype=np.int64)
    word_idx = np.empty(g.n, dtype=np.int64)
    for v in range(g.n):
        lang = g.languages[g.node_lang[v]]
        if lang not in lang_index:
            raise ValueError(f"sentence {g.sentence_id}: language {lang!r} not in model")
        lang_idx[v] = lang_index[lang]
        word_idx[v] = vocab.get((lang, g.words[v]), unk)
    center, nbr, starts = attention_slots(g)
    return SentenceFeatures(
        graph=g,
        z_cent=z,
        comm_gmc=community_indices(p_gmc, cap),
        comm_lpc=community_indices(p_lpc, cap),
        pos_idx=np.minimum(g.node_pos, config.pos_table - 1),
        lang_idx=lang_idx,
        word_idx=word_idx,
        att_center=center,
        att_nbr=nbr,
        att_starts=starts,
    )
