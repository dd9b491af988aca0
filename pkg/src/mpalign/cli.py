"""Command line interface.

Subcommands: synth, build-graph, communities, features, train, align, eval,
project, pipeline. Every subcommand is deterministic under --seed when run
single-threaded; failures exit nonzero with a stage-tagged message.
"""

import argparse
import sys
from pathlib import Path

from . import pipeline as pl
from .corpus import load_gold, load_pharaoh, load_pos_tagged
from .evaluation import frequency_bins, score
from .features import (
    FeatureStandardizer,
    build_word_vocab,
    train_word_embeddings,
)
from .graph import dump_graph
from .projection import ProjectionSource, filter_x, project, write_conll
from .synth import SynthConfig, generate, write_synth


def _pair(text: str) -> tuple[str, str]:
    parts = text.split(",")
    if len(parts) != 2:
        raise argparse.ArgumentTypeError("expected LANG,LANG")
    return parts[0], parts[1]


def _csv(text: str) -> list[str]:
    return [p for p in text.split(",") if p]


def _add_data_arg(p: argparse.ArgumentParser) -> None:
    p.add_argument(
        "--data",
        required=True,
        help="directory with <lang>.txt corpus files and <a>-<b>.align files",
    )
    p.add_argument(
        "--one-based",
        action="store_true",
        help="treat alignment/gold indices as 1-based",
    )


def _add_cd_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--gamma", type=float, default=1.0, help="modularity resolution")
    p.add_argument("--lpc-portion", type=float, default=0.5,
                   help="fraction of nodes updated per label propagation round")
    p.add_argument("--lpc-max-iters", type=int, default=100)


def _add_train_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--epochs", type=int, default=1)
    p.add_argument("--batch-size", type=int, default=400)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--train-sample", type=int, default=6400,
                   help="max sentences sampled for training")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--hidden", type=int, default=512)
    p.add_argument("--ablate", type=_csv, default=[],
                   help="feature blocks to drop: centrality,community,position,language,word")
    p.add_argument("--fixed-negatives", action="store_true",
                   help="reuse the same negative samples in every epoch")
    p.add_argument("--standardize", choices=("global", "per-graph"), default="global")
    p.add_argument("--train-ids", help="file with one training sentence id per line")
    p.add_argument("--threads", type=int, default=1)


def _add_align_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--pair", type=_pair, required=True, help="source,target languages")
    p.add_argument("--alpha", type=float, default=2.0)
    p.add_argument("--method", choices=("tgdfa", "tgdfa+orig"), default="tgdfa")
    p.add_argument("--orig", help="bilingual GDFA links for tgdfa+orig")
    p.add_argument("--threshold-on", choices=("logit", "prob"), default="logit",
                   dest="threshold_on")
    p.add_argument("--test-ids", help="file with one sentence id per line to align")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="mpalign",
        description="Multiparallel word alignment toolkit",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a planted-concept corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--sentences", type=int, default=200)
    p.add_argument("--languages", type=int, default=4)
    p.add_argument("--vocab", type=int, default=150)
    p.add_argument("--len-min", type=int, default=6)
    p.add_argument("--len-max", type=int, default=10)
    p.add_argument("--edge-drop", type=float, default=0.0)
    p.add_argument("--edge-noise", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--test-size", type=int, default=0)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("build-graph", help="dump sentence graphs as text")
    _add_data_arg(p)
    p.add_argument("--out", required=True)
    p.add_argument("--sentence", help="dump only this sentence id")
    p.set_defaults(func=cmd_build_graph)

    p = sub.add_parser("communities", help="per-sentence community assignments")
    _add_data_arg(p)
    _add_cd_args(p)
    p.add_argument("--algorithm", choices=("gmc", "lpc"), required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_communities)

    p = sub.add_parser("features", help="fit the standardizer and word vectors")
    _add_data_arg(p)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--train-ids")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--word-tsv", action="store_true",
                   help="also dump word vectors as lang word v1..v100")
    p.set_defaults(func=cmd_features)

    p = sub.add_parser("train", help="train the link predictor")
    _add_data_arg(p)
    _add_cd_args(p)
    _add_train_args(p)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("align", help="induce alignments with a trained model")
    _add_data_arg(p)
    _add_cd_args(p)
    _add_align_args(p)
    p.add_argument("--model", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--standardize", choices=("global", "per-graph"), default="global")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_align)

    p = sub.add_parser("eval", help="score predictions against gold links")
    p.add_argument("--pred", type=_csv, required=True, help="prediction file(s)")
    p.add_argument("--names", type=_csv, default=None, help="method name per file")
    p.add_argument("--gold", required=True)
    p.add_argument("--pair", type=_pair, default=("src", "tgt"))
    p.add_argument("--one-based", action="store_true")
    p.add_argument("--bins", type=int, default=0, help="frequency bins to report")
    p.add_argument("--data", help="corpus directory (needed for --bins)")
    p.add_argument("--out", help="write TSV here instead of stdout")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("project", help="project POS tags through alignments")
    _add_data_arg(p)
    p.add_argument("--target", required=True, help="target language code")
    p.add_argument("--sources", type=_csv, required=True)
    p.add_argument("--alignments", type=_csv, required=True,
                   help="target-source Pharaoh file per source language")
    p.add_argument("--tags", type=_csv, required=True,
                   help="tok/TAG file per source language")
    p.add_argument("--swap", action="store_true",
                   help="alignment files are source-target instead of target-source")
    p.add_argument("--x-threshold", type=float, default=0.5)
    p.add_argument("--priority", type=_csv, default=None,
                   help="tie-break language order (default: --sources order)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_project)

    p = sub.add_parser("pipeline", help="run all stages with caching")
    _add_data_arg(p)
    _add_cd_args(p)
    _add_train_args(p)
    _add_align_args(p)
    p.add_argument("--gold")
    p.add_argument("--eval-bins", type=int, default=0)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_pipeline)
    return ap


def cmd_synth(args) -> int:
    cfg = SynthConfig(
        n_sentences=args.sentences,
        n_languages=args.languages,
        vocab=args.vocab,
        len_min=args.len_min,
        len_max=args.len_max,
        edge_drop_rate=args.edge_drop,
        edge_noise_rate=args.edge_noise,
        seed=args.seed,
        n_test=args.test_size,
    )
    write_synth(generate(cfg), args.out)
    print(f"wrote synthetic corpus to {args.out}")
    return 0


def cmd_build_graph(args) -> int:
    corpus, asets = pl.load_inputs(args.data, one_based=args.one_based)
    graphs = pl.build_all_graphs(corpus, asets)
    ids = [args.sentence] if args.sentence else sorted(graphs)
    with open(args.out, "w", encoding="utf-8") as fh:
        for sid in ids:
            fh.write(f"# sentence {sid}\n")
            fh.write(dump_graph(graphs[sid]))
    print(f"dumped {len(ids)} graph(s) to {args.out}")
    return 0


def cmd_communities(args) -> int:
    corpus, asets = pl.load_inputs(args.data, one_based=args.one_based)
    graphs = pl.build_all_graphs(corpus, asets)
    pl.write_communities_tsv(
        graphs,
        args.algorithm,
        Path(args.out),
        gamma=args.gamma,
        seed=args.seed,
        portion=args.lpc_portion,
        max_iters=args.lpc_max_iters,
    )
    print(f"wrote {args.algorithm} communities for {len(graphs)} sentences to {args.out}")
    return 0


def cmd_features(args) -> int:
    corpus, asets = pl.load_inputs(args.data, one_based=args.one_based)
    graphs = pl.build_all_graphs(corpus, asets, threads=args.threads)
    ids = (
        [s for s in pl.read_id_file(args.train_ids) if s in graphs]
        if args.train_ids
        else sorted(graphs)
    )
    raw = pl.compute_centralities(graphs, ids, args.threads)
    standardizer = FeatureStandardizer.fit([raw[sid] for sid in ids])
    vocab = build_word_vocab(corpus, ids)
    table = train_word_embeddings(corpus, vocab, sentence_ids=ids)
    out = Path(args.out)
    pl.write_feature_artifacts(out, standardizer, vocab, table)
    if args.word_tsv:
        with open(out / "word_vectors.tsv", "w", encoding="utf-8") as fh:
            for (lang, word), idx in sorted(vocab.items(), key=lambda kv: kv[1]):
                vec = " ".join(f"{x:.6f}" for x in table[idx])
                fh.write(f"{lang}\t{word}\t{vec}\n")
    print(f"fitted features over {len(ids)} sentences; artifacts in {out}")
    return 0


def _pipeline_config(args, **extra) -> pl.PipelineConfig:
    cfg = pl.PipelineConfig(
        data_dir=args.data,
        out_dir=extra.pop("out_dir"),
        pair=extra.pop("pair", ("", "")),
        one_based=args.one_based,
        gamma=args.gamma,
        lpc_portion=args.lpc_portion,
        lpc_max_iters=args.lpc_max_iters,
        **extra,
    )
    cfg.validate()
    return cfg


def cmd_train(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cfg = _pipeline_config(
        args,
        out_dir=args.out,
        pair=("", ""),
        train_ids=args.train_ids,
        lr=args.lr,
        batch_size=args.batch_size,
        epochs=args.epochs,
        train_sample=args.train_sample,
        seed=args.seed,
        hidden=args.hidden,
        ablate=tuple(args.ablate),
        resample_negatives=not args.fixed_negatives,
        standardize=args.standardize,
        threads=args.threads,
    )
    corpus, asets = pl.load_inputs(args.data, one_based=args.one_based)
    graphs = pl.build_all_graphs(corpus, asets, threads=args.threads)
    ids = (
        [s for s in pl.read_id_file(args.train_ids) if s in graphs]
        if args.train_ids
        else sorted(graphs)
    )
    pl.train_stage(cfg, corpus, graphs, ids, out / "model.mpwa", out / "train_log.json")
    print(f"trained on {len(ids)} sentences; checkpoint at {out / 'model.mpwa'}")
    return 0


def cmd_align(args) -> int:
    cfg = _pipeline_config(
        args,
        out_dir=str(Path(args.out).parent),
        pair=args.pair,
        orig=args.orig,
        alpha=args.alpha,
        method=args.method,
        threshold_on=args.threshold_on,
        seed=args.seed,
        standardize=args.standardize,
        threads=args.threads,
        test_ids=args.test_ids,
    )
    corpus, asets = pl.load_inputs(args.data, one_based=args.one_based)
    graphs = pl.build_all_graphs(corpus, asets, threads=args.threads)
    ids = (
        [s for s in pl.read_id_file(args.test_ids) if s in graphs]
        if args.test_ids
        else sorted(graphs)
    )
    pl.align_with_model(Path(args.model), graphs, corpus, ids, cfg, Path(args.out))
    print(f"aligned {len(ids)} sentences -> {args.out}")
    return 0


def cmd_eval(args) -> int:
    names = args.names or [Path(p).stem for p in args.pred]
    if len(names) != len(args.pred):
        raise SystemExit("--names must match --pred")
    gold = load_gold(args.gold, args.pair, one_based=args.one_based)
    corpus = None
    if args.bins:
        if not args.data:
            raise SystemExit("--bins requires --data for corpus frequencies")
        corpus, _ = pl.load_inputs(args.data, one_based=args.one_based)

    lines = []
    header = "method\tprecision\trecall\tf1\taer\tmacro_f1"
    if args.bins:
        header += "".join(f"\tf1_bin{b}" for b in range(1, args.bins + 1))
    lines.append(header)
    for name, path in zip(names, args.pred):
        aset = load_pharaoh(path, args.pair, one_based=args.one_based)
        preds = {sid: aset.links.get(sid, set()) for sid in gold.possible}
        rep = score(preds, gold)
        line = (
            f"{name}\t{rep.precision:.6f}\t{rep.recall:.6f}\t{rep.f1:.6f}"
            f"\t{rep.aer:.6f}\t{rep.macro_f1:.6f}"
        )
        if args.bins:
            for bin_rep in frequency_bins(preds, gold, corpus, args.pair[0], args.bins):
                line += "\t" + (f"{bin_rep.f1:.6f}" if bin_rep is not None else "-")
        lines.append(line)
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_project(args) -> int:
    if not (len(args.sources) == len(args.alignments) == len(args.tags)):
        raise SystemExit("--sources, --alignments and --tags must align")
    from mpalign.corpus import load_corpus

    corpus = load_corpus(pl.discover_corpus_files(args.data))
    if args.target not in corpus.languages:
        raise SystemExit(f"target language {args.target!r} not in corpus")
    tagged = {lang: load_pos_tagged(path) for lang, path in zip(args.sources, args.tags)}
    links = {}
    for lang, path in zip(args.sources, args.alignments):
        aset = load_pharaoh(path, (args.target, lang), one_based=args.one_based)
        links[lang] = aset.swapped() if args.swap else aset

    sentences = []
    for sid in corpus.sentence_ids():
        toks = corpus.sentences[sid].get(args.target)
        if toks is None:
            continue
        sources = []
        for lang in args.sources:
            sent_tags = tagged[lang].get(sid)
            if sent_tags is None:
                continue
            sources.append(
                ProjectionSource(lang, sent_tags, links[lang].links.get(sid, set()))
            )
        if sources:
            sentences.append(project(sid, toks, sources, priority=args.priority))
    kept = filter_x(sentences, threshold=args.x_threshold)
    write_conll(kept, args.out)
    print(
        f"projected {len(sentences)} sentences, kept {len(kept)} "
        f"after the X filter -> {args.out}"
    )
    return 0


def cmd_pipeline(args) -> int:
    cfg = _pipeline_config(
        args,
        out_dir=args.out,
        pair=args.pair,
        gold=args.gold,
        orig=args.orig,
        train_ids=args.train_ids,
        test_ids=args.test_ids,
        alpha=args.alpha,
        method=args.method,
        threshold_on=args.threshold_on,
        lr=args.lr,
        batch_size=args.batch_size,
        epochs=args.epochs,
        train_sample=args.train_sample,
        seed=args.seed,
        hidden=args.hidden,
        ablate=tuple(args.ablate),
        resample_negatives=not args.fixed_negatives,
        standardize=args.standardize,
        threads=args.threads,
        eval_bins=args.eval_bins,
    )
    artifacts = pl.run_pipeline(cfg)
    for name, path in artifacts.items():
        print(f"{name}: {path}")
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except pl.StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
