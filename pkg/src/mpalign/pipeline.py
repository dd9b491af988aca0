"""End-to-end orchestration: graphs -> communities -> features -> train -> align -> eval.

Each stage writes its artifacts together with a ``.key`` file holding a content
hash of its inputs and configuration; a rerun with unchanged inputs skips the
stage and reuses the artifacts byte-for-byte.
"""

import hashlib
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import evaluation
from .checkpoint import load_checkpoint, save_checkpoint
from .communities import detect
from .corpus import (
    BilingualAlignmentSet,
    GoldAlignment,
    MultiParallelCorpus,
    load_corpus,
    load_gold,
    load_pharaoh,
    write_pharaoh,
)
from .features import (
    FeatureConfig,
    FeatureStandardizer,
    SentenceFeatures,
    build_word_vocab,
    centralities,
    derive_seed,
    featurize,
    train_word_embeddings,
)
from .gnn import TrainConfig, train_model
from .graph import AlignmentGraph, build_graph
from .inference import tgdfa, tgdfa_plus_orig

logger = logging.getLogger(__name__)


@dataclass
class PipelineConfig:
    data_dir: str
    out_dir: str
    pair: tuple[str, str]
    gold: str | None = None
    orig: str | None = None
    train_ids: str | None = None
    test_ids: str | None = None
    one_based: bool = False
    # hyperparameters
    alpha: float = 2.0
    method: str = "tgdfa"  # "tgdfa" or "tgdfa+orig"
    threshold_on: str = "logit"  # or "prob"
    lr: float = 1e-3
    batch_size: int = 400
    epochs: int = 1
    train_sample: int = 6400
    seed: int = 0
    hidden: int = 512
    ablate: tuple[str, ...] = ()
    resample_negatives: bool = True
    gamma: float = 1.0
    lpc_portion: float = 0.5
    lpc_max_iters: int = 100
    standardize: str = "global"  # or "per-graph"
    threads: int = 1
    eval_bins: int = 0

    @classmethod
    def from_dict(cls, raw: Mapping) -> "PipelineConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise ValueError(f"unknown pipeline config keys: {sorted(unknown)}")
        cfg = cls(**raw)
        cfg.validate()
        return cfg

    def validate(self) -> None:
        if self.method not in ("tgdfa", "tgdfa+orig"):
            raise ValueError(f"unknown method {self.method!r}")
        if self.method == "tgdfa+orig" and not self.orig:
            raise ValueError("method tgdfa+orig requires an --orig alignment file")
        if self.threshold_on not in ("logit", "prob"):
            raise ValueError(f"unknown threshold mode {self.threshold_on!r}")
        if self.standardize not in ("global", "per-graph"):
            raise ValueError(f"unknown standardize mode {self.standardize!r}")
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")
        if len(self.pair) != 2 or self.pair[0] == self.pair[1]:
            raise ValueError("pair must name two distinct languages")

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            hidden=self.hidden,
            lr=self.lr,
            batch_size=self.batch_size,
            epochs=self.epochs,
            train_sample=self.train_sample,
            seed=self.seed,
            resample_negatives=self.resample_negatives,
            feature=FeatureConfig(ablate=tuple(self.ablate)),
        )


# ---------------------------------------------------------------------------
# input discovery and loading


def discover_corpus_files(data_dir: str | Path) -> dict[str, Path]:
    files = sorted(Path(data_dir).glob("*.txt"))
    corpus = {}
    for path in files:
        if path.stem in ("train_ids", "test_ids"):
            continue
        corpus[path.stem] = path
    if not corpus:
        raise FileNotFoundError(f"no <lang>.txt corpus files under {data_dir}")
    return corpus


def discover_alignment_files(data_dir: str | Path) -> dict[tuple[str, str], Path]:
    out = {}
    for path in sorted(Path(data_dir).glob("*.align")):
        la, sep, lb = path.stem.partition("-")
        if not sep:
            raise ValueError(f"alignment file {path} is not named <langA>-<langB>.align")
        out[(la, lb)] = path
    return out


def load_inputs(
    data_dir: str | Path, one_based: bool = False
) -> tuple[MultiParallelCorpus, list[BilingualAlignmentSet]]:
    corpus = load_corpus(discover_corpus_files(data_dir))
    asets = [
        load_pharaoh(path, pair, one_based=one_based)
        for pair, path in discover_alignment_files(data_dir).items()
    ]
    return corpus, asets


def build_all_graphs(
    corpus: MultiParallelCorpus,
    alignments: Sequence[BilingualAlignmentSet],
    threads: int = 1,
) -> dict[str, AlignmentGraph]:
    ids = corpus.sentence_ids()

    def one(sid: str) -> AlignmentGraph:
        return build_graph(sid, corpus.sentences[sid], alignments)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            graphs = list(pool.map(one, ids))
    else:
        graphs = [one(sid) for sid in ids]
    return dict(zip(ids, graphs))


def read_id_file(path: str | Path) -> list[str]:
    return [line.strip() for line in Path(path).read_text().splitlines() if line.strip()]


# ---------------------------------------------------------------------------
# cache plumbing


def _hash_file(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def stage_key(parts: Mapping) -> str:
    return hashlib.sha256(
        json.dumps(parts, sort_keys=True, default=str).encode()
    ).hexdigest()


def cache_valid(key: str, artifacts: Iterable[Path]) -> bool:
    artifacts = list(artifacts)
    key_path = artifacts[0].with_suffix(artifacts[0].suffix + ".key")
    return (
        all(a.exists() for a in artifacts)
        and key_path.exists()
        and key_path.read_text().strip() == key
    )


def write_key(key: str, artifacts: Sequence[Path]) -> None:
    key_path = artifacts[0].with_suffix(artifacts[0].suffix + ".key")
    key_path.write_text(key + "\n")


# ---------------------------------------------------------------------------
# featurization shared by train and align stages


def featurize_ids(
    graphs: Mapping[str, AlignmentGraph],
    ids: Sequence[str],
    standardizer: FeatureStandardizer | None,
    lang_index: Mapping[str, int],
    vocab: Mapping[tuple[str, str], int],
    config: FeatureConfig,
    cfg: PipelineConfig,
    raw_cent: Mapping[str, np.ndarray] | None = None,
) -> list[SentenceFeatures]:
    def one(sid: str) -> SentenceFeatures:
        return featurize(
            graphs[sid],
            standardizer,
            lang_index,
            vocab,
            config,
            raw_centralities=None if raw_cent is None else raw_cent[sid],
            gamma=cfg.gamma,
            lpc_seed_base=cfg.seed,
            lpc_portion=cfg.lpc_portion,
            lpc_max_iters=cfg.lpc_max_iters,
            per_graph_scaling=cfg.standardize == "per-graph",
        )

    if cfg.threads > 1:
        with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            return list(pool.map(one, ids))
    return [one(sid) for sid in ids]


def compute_centralities(
    graphs: Mapping[str, AlignmentGraph], ids: Sequence[str], threads: int = 1
) -> dict[str, np.ndarray]:
    def one(sid: str) -> np.ndarray:
        return centralities(graphs[sid])

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            mats = list(pool.map(one, ids))
    else:
        mats = [one(sid) for sid in ids]
    return dict(zip(ids, mats))


def write_communities_tsv(
    graphs: Mapping[str, AlignmentGraph],
    algorithm: str,
    path: Path,
    *,
    gamma: float,
    seed: int,
    portion: float,
    max_iters: int,
) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for sid in sorted(graphs):
            g = graphs[sid]
            p = detect(
                g,
                algorithm,
                gamma=gamma,
                seed=derive_seed(seed, f"lpc:{sid}"),
                portion=portion,
                max_iters=max_iters,
            )
            items = " ".join(f"{v}:{c}" for v, c in enumerate(p.labels))
            fh.write(f"{sid}\t{items}\n")


# ---------------------------------------------------------------------------
# the pipeline


class StageError(RuntimeError):
    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage
        self.cause = cause


def run_pipeline(cfg: PipelineConfig) -> dict[str, Path]:
    cfg.validate()
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    artifacts: dict[str, Path] = {}

    input_hashes = {
        str(p): _hash_file(p)
        for p in sorted(discover_corpus_files(cfg.data_dir).values())
    }
    for pair, path in discover_alignment_files(cfg.data_dir).items():
        input_hashes[str(path)] = _hash_file(path)
    base = {
        "inputs": input_hashes,
        "one_based": cfg.one_based,
        "gamma": cfg.gamma,
        "lpc": [cfg.lpc_portion, cfg.lpc_max_iters],
        "seed": cfg.seed,
    }

    try:
        corpus, asets = load_inputs(cfg.data_dir, one_based=cfg.one_based)
        graphs = build_all_graphs(corpus, asets, threads=cfg.threads)
    except Exception as exc:  # noqa: BLE001 - stage boundary
        raise StageError("build-graph", exc) from exc

    all_ids = sorted(graphs)
    train_ids = read_id_file(cfg.train_ids) if cfg.train_ids else all_ids
    train_ids = [sid for sid in train_ids if sid in graphs]
    if cfg.test_ids:
        test_ids = [sid for sid in read_id_file(cfg.test_ids) if sid in graphs]
    else:
        test_ids = all_ids

    # -- communities stage (artifacts are diagnostics; features recompute) --
    try:
        comm_key = stage_key({**base, "stage": "communities"})
        comm_paths = [out / "communities_gmc.tsv", out / "communities_lpc.tsv"]
        if cache_valid(comm_key, comm_paths):
            logger.info("communities: cache hit")
        else:
            for algo, path in zip(("gmc", "lpc"), comm_paths):
                write_communities_tsv(
                    graphs,
                    algo,
                    path,
                    gamma=cfg.gamma,
                    seed=cfg.seed,
                    portion=cfg.lpc_portion,
                    max_iters=cfg.lpc_max_iters,
                )
            write_key(comm_key, comm_paths)
        artifacts["communities_gmc"] = comm_paths[0]
        artifacts["communities_lpc"] = comm_paths[1]
    except Exception as exc:
        raise StageError("communities", exc) from exc

    # -- features stage -------------------------------------------------------
    tc = cfg.train_config()
    feat_dir = out / "features"
    feat_key = stage_key(
        {
            **base,
            "stage": "features",
            "train_ids": train_ids,
            "word_dim": tc.feature.word_dim,
        }
    )
    feat_paths = [
        feat_dir / "standardizer.json",
        feat_dir / "word_vocab.json",
        feat_dir / "word_vectors.npy",
    ]
    try:
        if cache_valid(feat_key, feat_paths):
            logger.info("features: cache hit")
        else:
            pieces = features_stage(cfg, corpus, graphs, train_ids, tc.feature.word_dim)
            write_feature_artifacts(feat_dir, *pieces)
            write_key(feat_key, feat_paths)
        artifacts["features"] = feat_dir
    except Exception as exc:
        raise StageError("features", exc) from exc

    # -- train stage ---------------------------------------------------------
    model_path = out / "model.mpwa"
    log_path = out / "train_log.json"
    train_key = stage_key(
        {
            **base,
            "stage": "train",
            "features_key": feat_key,
            "train_ids": train_ids,
            "standardize": cfg.standardize,
            "train": {
                "hidden": tc.hidden,
                "lr": tc.lr,
                "batch": tc.batch_size,
                "epochs": tc.epochs,
                "sample": tc.train_sample,
                "ablate": list(tc.feature.ablate),
                "resample_negatives": tc.resample_negatives,
            },
        }
    )
    try:
        if cache_valid(train_key, [model_path, log_path]):
            logger.info("train: cache hit")
        else:
            train_stage(
                cfg, corpus, graphs, train_ids, model_path, log_path,
                precomputed=read_feature_artifacts(feat_dir),
            )
            write_key(train_key, [model_path, log_path])
        artifacts["model"] = model_path
        artifacts["train_log"] = log_path
    except Exception as exc:
        raise StageError("train", exc) from exc

    # -- align stage ----------------------------------------------------------
    pair_tag = f"{cfg.pair[0]}-{cfg.pair[1]}"
    align_path = out / f"{pair_tag}.{cfg.method.replace('+', '-')}.align"
    align_key = stage_key(
        {
            **base,
            "stage": "align",
            "train_key": train_key,
            "pair": list(cfg.pair),
            "alpha": cfg.alpha,
            "method": cfg.method,
            "threshold_on": cfg.threshold_on,
            "orig": _hash_file(cfg.orig) if cfg.orig else None,
            "test_ids": test_ids,
        }
    )
    try:
        if cache_valid(align_key, [align_path]):
            logger.info("align: cache hit")
        else:
            align_with_model(
                model_path,
                graphs,
                corpus,
                test_ids,
                cfg,
                align_path,
            )
            write_key(align_key, [align_path])
        artifacts["alignments"] = align_path
    except Exception as exc:
        raise StageError("align", exc) from exc

    # -- eval stage -----------------------------------------------------------
    if cfg.gold:
        eval_path = out / "eval.tsv"
        eval_key = stage_key(
            {
                **base,
                "stage": "eval",
                "align_key": align_key,
                "gold": _hash_file(cfg.gold),
                "bins": cfg.eval_bins,
            }
        )
        try:
            if cache_valid(eval_key, [eval_path]):
                logger.info("eval: cache hit")
            else:
                evaluate_predictions(cfg, corpus, test_ids, align_path, eval_path)
                write_key(eval_key, [eval_path])
            artifacts["eval"] = eval_path
        except Exception as exc:
            raise StageError("eval", exc) from exc

    return artifacts


def features_stage(
    cfg: PipelineConfig,
    corpus: MultiParallelCorpus,
    graphs: Mapping[str, AlignmentGraph],
    train_ids: Sequence[str],
    word_dim: int,
) -> tuple[FeatureStandardizer, dict, np.ndarray]:
    train_graphs = {sid: graphs[sid] for sid in train_ids}
    raw_cent = compute_centralities(train_graphs, train_ids, cfg.threads)
    standardizer = FeatureStandardizer.fit([raw_cent[sid] for sid in train_ids])
    vocab = build_word_vocab(corpus, train_ids)
    word_table = train_word_embeddings(
        corpus, vocab, dim=word_dim, sentence_ids=train_ids
    )
    return standardizer, vocab, word_table


def write_feature_artifacts(
    out_dir: Path, standardizer: FeatureStandardizer, vocab: dict, table: np.ndarray
) -> list[Path]:
    out_dir.mkdir(parents=True, exist_ok=True)
    std_path = out_dir / "standardizer.json"
    vocab_path = out_dir / "word_vocab.json"
    table_path = out_dir / "word_vectors.npy"
    std_path.write_text(
        json.dumps(
            {"mean": standardizer.mean.tolist(), "std": standardizer.std.tolist()}
        )
        + "\n"
    )
    vocab_path.write_text(
        json.dumps([list(k) for k in sorted(vocab, key=vocab.get)]) + "\n"
    )
    np.save(table_path, table)
    return [std_path, vocab_path, table_path]


def read_feature_artifacts(out_dir: Path):
    std = json.loads((out_dir / "standardizer.json").read_text())
    standardizer = FeatureStandardizer(
        np.asarray(std["mean"], dtype=np.float64), np.asarray(std["std"], dtype=np.float64)
    )
    vocab_list = json.loads((out_dir / "word_vocab.json").read_text())
    vocab = {tuple(item): i for i, item in enumerate(vocab_list)}
    table = np.load(out_dir / "word_vectors.npy")
    return standardizer, vocab, table


def train_stage(
    cfg: PipelineConfig,
    corpus: MultiParallelCorpus,
    graphs: Mapping[str, AlignmentGraph],
    train_ids: Sequence[str],
    model_path: Path,
    log_path: Path | None = None,
    precomputed: tuple[FeatureStandardizer, dict, np.ndarray] | None = None,
) -> None:
    tc = cfg.train_config()
    if precomputed is None:
        precomputed = features_stage(cfg, corpus, graphs, train_ids, tc.feature.word_dim)
    standardizer, vocab, word_table = precomputed
    lang_index = {lang: i for i, lang in enumerate(corpus.languages)}
    feats = featurize_ids(
        graphs, train_ids, standardizer, lang_index, vocab, tc.feature, cfg
    )
    result = train_model(feats, tc, len(corpus.languages), len(vocab), word_table)
    save_checkpoint(
        model_path, result.params, standardizer, corpus.languages, vocab, tc
    )
    if log_path is not None:
        log_path.write_text(
            json.dumps(
                {
                    "batch_losses": result.batch_losses,
                    "n_sentences": len(result.sentences_used),
                }
            )
            + "\n"
        )


def align_with_model(
    model_path: Path,
    graphs: Mapping[str, AlignmentGraph],
    corpus: MultiParallelCorpus,
    test_ids: Sequence[str],
    cfg: PipelineConfig,
    out_path: Path,
) -> None:
    params, standardizer, languages, vocab, tc = load_checkpoint(model_path)
    lang_index = {lang: i for i, lang in enumerate(languages)}
    orig = (
        load_pharaoh(cfg.orig, cfg.pair, one_based=cfg.one_based) if cfg.orig else None
    )
    la, lb = cfg.pair
    result = BilingualAlignmentSet(cfg.pair)
    ids = [
        sid
        for sid in test_ids
        if la in corpus.sentences.get(sid, {}) and lb in corpus.sentences.get(sid, {})
    ]
    feats = featurize_ids(
        graphs, ids, standardizer, lang_index, vocab, tc.feature, cfg
    )
    for sf in feats:
        sid = sf.graph.sentence_id
        if cfg.method == "tgdfa+orig":
            links = tgdfa_plus_orig(
                sf, params, la, lb, tc.feature,
                orig_gdfa=orig.links.get(sid, set()) if orig else set(),
                alpha=cfg.alpha, mode=cfg.threshold_on,
            )
        else:
            links = tgdfa(
                sf, params, la, lb, tc.feature, alpha=cfg.alpha, mode=cfg.threshold_on
            )
        result.links[sid] = links
    write_pharaoh(result, out_path)


def evaluate_predictions(
    cfg: PipelineConfig,
    corpus: MultiParallelCorpus,
    test_ids: Sequence[str],
    align_path: Path,
    eval_path: Path,
) -> None:
    gold_all = load_gold(cfg.gold, cfg.pair, one_based=cfg.one_based)
    keep = set(test_ids) & set(gold_all.possible) & set(corpus.sentences)
    gold = GoldAlignment(cfg.pair)
    for sid in keep:
        gold.sure[sid] = gold_all.sure.get(sid, set())
        gold.possible[sid] = gold_all.possible[sid]

    rows = []
    input_path = discover_alignment_files(cfg.data_dir).get(tuple(cfg.pair))
    if input_path is not None:
        baseline = load_pharaoh(input_path, cfg.pair, one_based=cfg.one_based)
        preds = {sid: baseline.links.get(sid, set()) for sid in keep}
        rows.append(("input", evaluation.score(preds, gold), preds))
    predicted = load_pharaoh(align_path, cfg.pair)
    preds = {sid: predicted.links.get(sid, set()) for sid in keep}
    rows.append((f"gnn-{cfg.method}", evaluation.score(preds, gold), preds))

    with open(eval_path, "w", encoding="utf-8") as fh:
        header = "method\tprecision\trecall\tf1\taer\tmacro_f1"
        if cfg.eval_bins:
            header += "".join(f"\tf1_bin{b}" for b in range(1, cfg.eval_bins + 1))
        fh.write(header + "\n")
        for name, report, preds in rows:
            line = (
                f"{name}\t{report.precision:.6f}\t{report.recall:.6f}"
                f"\t{report.f1:.6f}\t{report.aer:.6f}\t{report.macro_f1:.6f}"
            )
            if cfg.eval_bins:
                bins = evaluation.frequency_bins(
                    preds, gold, corpus, cfg.pair[0], n_bins=cfg.eval_bins
                )
                for rep in bins:
                    line += "\t" + (f"{rep.f1:.6f}" if rep is not None else "-")
            fh.write(line + "\n")
