"""Graph-attention link predictor: encoder, decoder, loss, optimizer, training.

The encoder is two single-head graph-attention layers followed by a fully
connected layer (ReLU between layers); the decoder scores a node pair from the
concatenated hidden states through a two-layer MLP ending in a sigmoid.
Training iterates sentence graphs, splits each graph's edges into batches of
positives and samples two in-sentence negatives per positive.
"""

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .features import (
    BLOCK_WIDTHS,
    CENTRALITY_NAMES,
    FeatureConfig,
    SentenceFeatures,
    derive_seed,
)

LEAKY_SLOPE = 0.2
LOSS_EPS = 1e-7

# parameter names in checkpoint order
PARAM_NAMES = (
    "gat1.W",
    "gat1.a",
    "gat2.W",
    "gat2.a",
    "enc.W",
    "enc.b",
    "dec1.W",
    "dec1.b",
    "dec2.W",
    "dec2.b",
    "feat.cent_w",
    "feat.cent_b",
    "feat.comm_gmc",
    "feat.comm_lpc",
    "feat.pos",
    "feat.lang",
    "feat.word",
)

_BLOCK_PARAMS = {
    "centrality": ("feat.cent_w", "feat.cent_b"),
    "community": ("feat.comm_gmc", "feat.comm_lpc"),
    "position": ("feat.pos",),
    "language": ("feat.lang",),
    "word": ("feat.word",),
}


class NonFiniteGradientError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    hidden: int = 512
    lr: float = 1e-3
    betas: tuple[float, float] = (0.9, 0.999)
    adam_eps: float = 1e-8
    weight_decay: float = 0.01
    batch_size: int = 400
    epochs: int = 1
    train_sample: int = 6400
    seed: int = 0
    resample_negatives: bool = True
    feature: FeatureConfig = field(default_factory=FeatureConfig)


def _xavier(rng: np.random.Generator, fan_in: int, fan_out: int, shape) -> np.ndarray:
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(np.float32)


def init_params(
    config: TrainConfig,
    n_languages: int,
    vocab_size: int,
    rng: np.random.Generator,
    word_table: np.ndarray | None = None,
) -> dict[str, np.ndarray]:
    """Uniform +-sqrt(6/(fan_in+fan_out)) weights, zero biases; the word table
    comes from the co-occurrence SVD when supplied. Ablated feature blocks are
    zeroed (and later frozen by the optimizer)."""
    fc = config.feature
    d_in = fc.input_dim
    h = config.hidden
    params = {
        "gat1.W": _xavier(rng, d_in, h, (d_in, h)),
        "gat1.a": _xavier(rng, 2 * h, 1, (2 * h, 1)),
        "gat2.W": _xavier(rng, h, h, (h, h)),
        "gat2.a": _xavier(rng, 2 * h, 1, (2 * h, 1)),
        "enc.W": _xavier(rng, h, h, (h, h)),
        "enc.b": np.zeros((1, h), dtype=np.float32),
        "dec1.W": _xavier(rng, 2 * h, h, (2 * h, h)),
        "dec1.b": np.zeros((1, h), dtype=np.float32),
        "dec2.W": _xavier(rng, h, 1, (h, 1)),
        "dec2.b": np.zeros((1, 1), dtype=np.float32),
        "feat.cent_w": _xavier(rng, 1, fc.cent_dim, (5, fc.cent_dim)),
        "feat.cent_b": np.zeros((5, fc.cent_dim), dtype=np.float32),
        "feat.comm_gmc": _xavier(
            rng, fc.comm_table, fc.comm_dim, (fc.comm_table, fc.comm_dim)
        ),
        "feat.comm_lpc": _xavier(
            rng, fc.comm_table, fc.comm_dim, (fc.comm_table, fc.comm_dim)
        ),
        "feat.pos": _xavier(rng, fc.pos_table, fc.pos_dim, (fc.pos_table, fc.pos_dim)),
        "feat.lang": _xavier(rng, n_languages, fc.lang_dim, (n_languages, fc.lang_dim)),
        "feat.word": (
            word_table.astype(np.float32)
            if word_table is not None
            else _xavier(rng, vocab_size + 1, fc.word_dim, (vocab_size + 1, fc.word_dim))
        ),
    }
    for block in fc.ablate:
        for name in _BLOCK_PARAMS[block]:
            params[name] = np.zeros_like(params[name])
    return params


def frozen_param_names(config: FeatureConfig) -> set[str]:
    return {name for block in config.ablate for name in _BLOCK_PARAMS[block]}


def as_leaves(params: dict[str, np.ndarray], dtype=None) -> dict[str, Tensor]:
    return {
        name: Tensor(arr if dtype is None else arr.astype(dtype), requires_grad=True)
        for name, arr in params.items()
    }


# ---------------------------------------------------------------------------
# forward pieces


def assemble(sf: SentenceFeatures, P: dict[str, Tensor], config: FeatureConfig) -> Tensor:
    dtype = P["gat1.W"].dtype
    blocks: list[Tensor] = []
    if config.active("centrality"):
        z = ad.constant(sf.z_cent.astype(dtype))
        for k in range(len(CENTRALITY_NAMES)):
            zk = ad.constant(sf.z_cent[:, k : k + 1].astype(dtype))
            wk = ad.narrow(P["feat.cent_w"], k, k + 1)
            bk = ad.narrow(P["feat.cent_b"], k, k + 1)
            blocks.append(zk @ wk + bk)
    if config.active("community"):
        blocks.append(ad.rows(P["feat.comm_gmc"], sf.comm_gmc))
        blocks.append(ad.rows(P["feat.comm_lpc"], sf.comm_lpc))
    if config.active("position"):
        blocks.append(ad.rows(P["feat.pos"], sf.pos_idx))
    if config.active("language"):
        blocks.append(ad.rows(P["feat.lang"], sf.lang_idx))
    if config.active("word"):
        blocks.append(ad.rows(P["feat.word"], sf.word_idx))
    return ad.concat(blocks, axis=1)


def gat_layer(
    x: Tensor, W: Tensor, a: Tensor, sf: SentenceFeatures, attn_out: list | None = None
) -> Tensor:
    """Single-head attention layer: softmax over each node's neighborhood plus itself."""
    h = W.shape[1]
    wx = x @ W
    a_center = ad.narrow(a, 0, h)
    a_nbr = ad.narrow(a, h, 2 * h)
    s_center = wx @ a_center  # (n, 1)
    s_nbr = wx @ a_nbr
    logits = ad.leaky_relu(
        ad.rows(s_center, sf.att_center) + ad.rows(s_nbr, sf.att_nbr), LEAKY_SLOPE
    )
    shift = ad.segment_max_constant(logits.data, sf.att_starts)
    ex = ad.exp(logits - ad.constant(shift[sf.att_center]))
    denom = ad.segment_sum(ex, sf.att_starts)
    alpha = ex / ad.rows(denom, sf.att_center)
    if attn_out is not None:
        attn_out.append(alpha.data.copy())
    msgs = ad.rows(wx, sf.att_nbr) * alpha
    return ad.segment_sum(msgs, sf.att_starts)


def encode(
    sf: SentenceFeatures,
    P: dict[str, Tensor],
    config: FeatureConfig,
    attn_out: list | None = None,
) -> Tensor:
    x = assemble(sf, P, config)
    x = ad.relu(gat_layer(x, P["gat1.W"], P["gat1.a"], sf, attn_out))
    x = ad.relu(gat_layer(x, P["gat2.W"], P["gat2.a"], sf, attn_out))
    return x @ P["enc.W"] + P["enc.b"]


def decode_pairs(
    hidden: Tensor, us: np.ndarray, vs: np.ndarray, P: dict[str, Tensor]
) -> tuple[Tensor, Tensor]:
    """(probabilities, logits) for each (u, v) pair; order of u and v matters."""
    z = ad.concat([ad.rows(hidden, us), ad.rows(hidden, vs)], axis=1)
    z = ad.relu(z @ P["dec1.W"] + P["dec1.b"])
    logits = z @ P["dec2.W"] + P["dec2.b"]
    return ad.sigmoid(logits), logits


def batch_loss(p_pos: Tensor, p_neg: Tensor | None, eps: float = LOSS_EPS) -> Tensor:
    """Binary cross-entropy: -mean log p+ - mean log(1 - p-), probabilities clamped."""
    loss = ad.mean(-log_clamped(p_pos, eps))
    if p_neg is not None and p_neg.data.size:
        one = ad.constant(np.asarray(1.0, dtype=p_neg.dtype))
        loss = loss + ad.mean(-log_clamped(one - p_neg, eps))
    return loss


def log_clamped(p: Tensor, eps: float) -> Tensor:
    return ad.log(ad.clip(p, eps, 1.0 - eps))


# ---------------------------------------------------------------------------
# batching


def sample_negatives(
    sf: SentenceFeatures, us: np.ndarray, vs: np.ndarray, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """Two in-sentence corruptions per positive: resample the v side, then the
    u side, keeping the counterpart fixed. Sides with a single token yield no
    negative."""
    g = sf.graph
    neg_u, neg_v = [], []
    for u, v in zip(us, vs):
        lu = g.languages[g.node_lang[u]]
        lv = g.languages[g.node_lang[v]]
        start_u, count_u = g.offsets[lu]
        start_v, count_v = g.offsets[lv]
        if count_v >= 2:
            j = int(rng.integers(count_v - 1))
            if start_v + j >= v:
                j += 1
            neg_u.append(u)
            neg_v.append(start_v + j)
        if count_u >= 2:
            i = int(rng.integers(count_u - 1))
            if start_u + i >= u:
                i += 1
            neg_u.append(start_u + i)
            neg_v.append(v)
    return np.asarray(neg_u, dtype=np.int64), np.asarray(neg_v, dtype=np.int64)


def edge_batches(
    sf: SentenceFeatures, batch_size: int, rng: np.random.Generator
) -> Iterable[tuple[np.ndarray, np.ndarray]]:
    edges = sf.graph.edges
    if not len(edges):
        return
    perm = rng.permutation(len(edges))
    for start in range(0, len(edges), batch_size):
        chunk = edges[perm[start : start + batch_size]]
        yield chunk[:, 0], chunk[:, 1]


# ---------------------------------------------------------------------------
# optimizer


class AdamW:
    """Decoupled weight decay applied to the parameters before the adaptive step."""

    def __init__(
        self,
        params: dict[str, np.ndarray],
        lr: float = 1e-3,
        betas: tuple[float, float] = (0.9, 0.999),
        eps: float = 1e-8,
        weight_decay: float = 0.01,
        frozen: set[str] | None = None,
    ):
        self.params = params
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.frozen = frozen or set()
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, grads: dict[str, np.ndarray | None]) -> None:
        self.t += 1
        bc1 = 1.0 - self.b1**self.t
        bc2 = 1.0 - self.b2**self.t
        for name, p in self.params.items():
            if name in self.frozen:
                continue
            g = grads.get(name)
            if g is None:
                g = np.zeros_like(p)
            elif not np.all(np.isfinite(g)):
                raise NonFiniteGradientError(f"non-finite gradient for {name}")
            if self.weight_decay:
                p -= self.lr * self.weight_decay * p
            m = self.m[name]
            v = self.v[name]
            m += (1.0 - self.b1) * (g - m)
            v += (1.0 - self.b2) * (g * g - v)
            p -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)


# ---------------------------------------------------------------------------
# training


@dataclass
class TrainResult:
    params: dict[str, np.ndarray]
    batch_losses: list[float]
    sentences_used: list[str]


def train_model(
    feats: Sequence[SentenceFeatures],
    config: TrainConfig,
    n_languages: int,
    vocab_size: int,
    word_table: np.ndarray | None = None,
    progress: Callable[[int, float], None] | None = None,
) -> TrainResult:
    """One (or more) epochs over the sentence graphs.

    The encoder consumes the full sentence graph for every batch; encoder,
    decoder, and feature-embedding parameters are updated after each batch.
    When the pool exceeds ``train_sample`` a random subsample is drawn first.
    """
    usable = [sf for sf in feats if sf.graph.m > 0]
    if not usable:
        raise ValueError("training needs at least one graph with edges")
    rng = np.random.default_rng(config.seed)
    if len(usable) > config.train_sample:
        idx = rng.choice(len(usable), size=config.train_sample, replace=False)
        usable = [usable[i] for i in sorted(idx)]

    params = init_params(config, n_languages, vocab_size, rng, word_table)
    frozen = frozen_param_names(config.feature)
    opt = AdamW(
        params,
        lr=config.lr,
        betas=config.betas,
        eps=config.adam_eps,
        weight_decay=config.weight_decay,
        frozen=frozen,
    )

    losses: list[float] = []
    for epoch in range(config.epochs):
        order = rng.permutation(len(usable))
        for si in order:
            sf = usable[si]
            # without per-epoch resampling the batch split and negatives repeat
            epoch_tag = epoch if config.resample_negatives else 0
            srng = np.random.default_rng(
                derive_seed(config.seed, f"batch:{epoch_tag}:{sf.graph.sentence_id}")
            )
            nrng = srng
            for us, vs in edge_batches(sf, config.batch_size, srng):
                neg_u, neg_v = sample_negatives(sf, us, vs, nrng)
                P = as_leaves(params)
                hidden = encode(sf, P, config.feature)
                p_pos, _ = decode_pairs(hidden, us, vs, P)
                p_neg = None
                if len(neg_u):
                    p_neg, _ = decode_pairs(hidden, neg_u, neg_v, P)
                loss = batch_loss(p_pos, p_neg)
                loss.backward()
                opt.step({name: t.grad for name, t in P.items()})
                losses.append(float(loss.data))
                if progress is not None:
                    progress(len(losses), losses[-1])
    return TrainResult(
        params=params,
        batch_losses=losses,
        sentences_used=[sf.graph.sentence_id for sf in usable],
    )


# ---------------------------------------------------------------------------
# gradient verification


@dataclass
class GradCheckReport:
    max_rel_error: float
    n_checked: int
    n_kink_skipped: int
    worst: tuple[str, int, float, float, float] | None  # name, index, analytic, fd, rel
    failures: list[str]

    @property
    def ok(self) -> bool:
        return not self.failures


def _forward_loss(
    sf: SentenceFeatures,
    params: dict[str, np.ndarray],
    config: FeatureConfig,
    us: np.ndarray,
    vs: np.ndarray,
    neg_u: np.ndarray,
    neg_v: np.ndarray,
) -> tuple[float, dict[str, Tensor]]:
    P = as_leaves(params)
    hidden = encode(sf, P, config)
    p_pos, _ = decode_pairs(hidden, us, vs, P)
    p_neg = None
    if len(neg_u):
        p_neg, _ = decode_pairs(hidden, neg_u, neg_v, P)
    loss = batch_loss(p_pos, p_neg)
    return loss, P


def compare_grads(
    forward: Callable[[], float],
    params: dict[str, np.ndarray],
    analytic: dict[str, np.ndarray],
    rng: np.random.Generator,
    sample_fraction: float = 0.01,
    h: float = 1e-5,
    tolerance: float = 1e-4,
    denom_floor: float = 1e-6,
) -> GradCheckReport:
    """Central finite differences on a stratified random sample of parameters.

    The relative error uses ``max(|analytic|, |fd|, denom_floor)`` as the
    denominator: central differences at step ``h`` on an O(1) loss carry about
    ``1e-11`` of absolute noise in 64-bit, so components smaller than the floor
    can only be compared on an absolute scale.

    Samples whose two probe points land in different activation regions (a
    ReLU/LeakyReLU/clip kink lies within ``h`` of the evaluation point) are
    skipped and counted: the difference quotient does not estimate the
    derivative there. The region test compares traced activation masks and is
    independent of the measured values.
    """
    max_rel = 0.0
    worst = None
    failures: set[str] = set()
    checked = 0
    kinked = 0
    for name in sorted(params):
        arr = params[name]
        size = arr.size
        k = max(1, int(round(sample_fraction * size)))
        idx = rng.choice(size, size=min(k, size), replace=False)
        flat = arr.reshape(-1)
        ana = analytic[name].reshape(-1)
        for i in idx:
            orig = flat[i]
            flat[i] = orig + h
            with ad.trace_masks() as masks_plus:
                f_plus = forward()
            flat[i] = orig - h
            with ad.trace_masks() as masks_minus:
                f_minus = forward()
            flat[i] = orig
            if not ad.same_masks(masks_plus, masks_minus):
                kinked += 1
                continue
            fd = (f_plus - f_minus) / (2.0 * h)
            a = float(ana[i])
            rel = abs(a - fd) / max(abs(a), abs(fd), denom_floor)
            checked += 1
            if rel > max_rel:
                max_rel = rel
                worst = (name, int(i), a, fd, rel)
            if rel >= tolerance:
                failures.add(name)
    return GradCheckReport(max_rel, checked, kinked, worst, sorted(failures))


def gradient_check(
    sf: SentenceFeatures,
    params: dict[str, np.ndarray],
    config: FeatureConfig,
    seed: int = 0,
    sample_fraction: float = 0.01,
    h: float = 1e-5,
    tolerance: float = 1e-4,
    max_positives: int = 16,
) -> GradCheckReport:
    """Verify analytic gradients of encoder+decoder+loss in 64-bit arithmetic."""
    rng = np.random.default_rng(seed)
    params64 = {k: v.astype(np.float64) for k, v in params.items()}
    edges = sf.graph.edges
    if not len(edges):
        raise ValueError("gradient check needs a graph with edges")
    take = min(max_positives, len(edges))
    sel = rng.choice(len(edges), size=take, replace=False)
    us, vs = edges[sel, 0], edges[sel, 1]
    neg_u, neg_v = sample_negatives(sf, us, vs, rng)

    loss, P = _forward_loss(sf, params64, config, us, vs, neg_u, neg_v)
    loss.backward()
    analytic = {
        name: (t.grad if t.grad is not None else np.zeros_like(t.data))
        for name, t in P.items()
    }

    def forward() -> float:
        val, _ = _forward_loss(sf, params64, config, us, vs, neg_u, neg_v)
        return float(val.data)

    return compare_grads(
        forward, params64, analytic, rng, sample_fraction=sample_fraction, h=h,
        tolerance=tolerance,
    )
