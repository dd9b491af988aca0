"""Alignment scoring: precision/recall/F1/AER, frequency bins, community baseline.

Counts are micro-aggregated: the per-sentence counts |A|, |A&S|, |A&P| and |S|
are summed before ratios are taken. A per-sentence macro average is reported
as a secondary statistic.
"""

from dataclasses import dataclass
from typing import Iterable, Mapping

import numpy as np

from .communities import detect, refine_edges
from .corpus import GoldAlignment, MultiParallelCorpus
from .graph import AlignmentGraph

LinkSet = set[tuple[int, int]]


@dataclass(frozen=True)
class EvalReport:
    precision: float
    recall: float
    f1: float
    aer: float
    n_predicted: int
    n_sure: int
    sure_hits: int
    possible_hits: int
    macro_precision: float
    macro_recall: float
    macro_f1: float
    macro_aer: float
    notes: tuple[str, ...] = ()


def _ratios(n_pred, n_sure, sure_hits, possible_hits):
    notes = []
    if n_pred == 0:
        precision = 1.0
        notes.append("no predicted links: precision defined as 1")
    else:
        precision = possible_hits / n_pred
    if n_sure == 0:
        recall = 1.0
        notes.append("no sure links: recall defined as 1")
    else:
        recall = sure_hits / n_sure
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    denom = n_pred + n_sure
    aer = 1.0 - (sure_hits + possible_hits) / denom if denom else 0.0
    return precision, recall, f1, aer, notes


def score(predicted: Mapping[str, LinkSet], gold: GoldAlignment) -> EvalReport:
    """Score predictions against sure/possible gold links over the gold sentences.

    Every predicted sentence must be covered by the gold set; gold sentences
    without predictions count as empty predictions.
    """
    unknown = set(predicted) - set(gold.possible)
    if unknown:
        raise ValueError(f"predictions for sentences without gold: {sorted(unknown)[:5]}")
    n_pred = n_sure = sure_hits = possible_hits = 0
    macro = []
    for sid in sorted(gold.possible):
        a = predicted.get(sid, set())
        s = gold.sure.get(sid, set())
        p = gold.possible[sid]
        counts = (len(a), len(s), len(a & s), len(a & p))
        n_pred += counts[0]
        n_sure += counts[1]
        sure_hits += counts[2]
        possible_hits += counts[3]
        macro.append(_ratios(*counts)[:4])
    precision, recall, f1, aer, notes = _ratios(n_pred, n_sure, sure_hits, possible_hits)
    macro_arr = np.asarray(macro) if macro else np.zeros((1, 4))
    return EvalReport(
        precision=precision,
        recall=recall,
        f1=f1,
        aer=aer,
        n_predicted=n_pred,
        n_sure=n_sure,
        sure_hits=sure_hits,
        possible_hits=possible_hits,
        macro_precision=float(macro_arr[:, 0].mean()),
        macro_recall=float(macro_arr[:, 1].mean()),
        macro_f1=float(macro_arr[:, 2].mean()),
        macro_aer=float(macro_arr[:, 3].mean()),
        notes=tuple(notes),
    )


def word_frequencies(corpus: MultiParallelCorpus, lang: str) -> dict[str, int]:
    counts: dict[str, int] = {}
    for sid in corpus.sentences:
        for tok in corpus.sentences[sid].get(lang, ()):
            counts[tok] = counts.get(tok, 0) + 1
    return counts


def frequency_bins(
    predicted: Mapping[str, LinkSet],
    gold: GoldAlignment,
    corpus: MultiParallelCorpus,
    source_lang: str,
    n_bins: int = 4,
) -> list[EvalReport | None]:
    """Per-bin scores; bin 1 holds the most frequent source word types.

    Source tokens are assigned to quantile bins of the word-type frequency
    distribution; a link belongs to the bin of its source token. Empty bins
    are reported as None.
    """
    freq = word_frequencies(corpus, source_lang)
    if not freq:
        raise ValueError(f"no tokens for source language {source_lang!r}")
    counts = np.asarray(sorted(freq.values()), dtype=np.float64)
    qs = np.quantile(counts, np.linspace(0, 1, n_bins + 1)[1:-1]) if n_bins > 1 else []

    def bin_of(count: int) -> int:
        # bin 1 = highest frequency
        for b in range(n_bins - 1):
            if count >= qs[n_bins - 2 - b]:
                return b + 1
        return n_bins

    def split(links: LinkSet, sid: str) -> list[LinkSet]:
        out: list[LinkSet] = [set() for _ in range(n_bins)]
        toks = corpus.sentences[sid].get(source_lang)
        for i, j in links:
            if toks is None or not 0 <= i < len(toks):
                continue
            out[bin_of(freq[toks[i]]) - 1].add((i, j))
        return out

    reports: list[EvalReport | None] = []
    for b in range(n_bins):
        pred_b: dict[str, LinkSet] = {}
        gold_b = GoldAlignment(gold.lang_pair)
        occupied = False
        for sid in gold.possible:
            pred_b[sid] = split(predicted.get(sid, set()), sid)[b]
            gold_b.sure[sid] = split(gold.sure.get(sid, set()), sid)[b]
            gold_b.possible[sid] = split(gold.possible[sid], sid)[b] | gold_b.sure[sid]
            if pred_b[sid] or gold_b.possible[sid]:
                occupied = True
        reports.append(score(pred_b, gold_b) if occupied else None)
    return reports


def community_links(
    g: AlignmentGraph, partition, lang_pair: tuple[str, str]
) -> LinkSet:
    """Pair links implied by a community partition (refined clique edges)."""
    la, lb = lang_pair
    if la not in g.offsets or lb not in g.offsets:
        return set()
    refined = refine_edges(g, partition)
    links: LinkSet = set()
    la_idx = g.languages.index(la)
    lb_idx = g.languages.index(lb)
    for u, v in refined.edges:
        lu, lv = g.node_lang[u], g.node_lang[v]
        if lu == la_idx and lv == lb_idx:
            links.add((int(g.node_pos[u]), int(g.node_pos[v])))
        elif lu == lb_idx and lv == la_idx:
            links.add((int(g.node_pos[v]), int(g.node_pos[u])))
    return links


def community_alignment_eval(
    graphs: Iterable[AlignmentGraph],
    algorithm: str,
    gold: GoldAlignment,
    lang_pair: tuple[str, str],
    *,
    gamma: float = 1.0,
    seed: int = 0,
) -> EvalReport:
    """Score the links a community detector implies for one language pair."""
    from .features import derive_seed

    predicted: dict[str, LinkSet] = {}
    for g in graphs:
        if g.sentence_id not in gold.possible:
            continue
        p = detect(
            g, algorithm, gamma=gamma, seed=derive_seed(seed, f"lpc:{g.sentence_id}")
        )
        predicted[g.sentence_id] = community_links(g, p, lang_pair)
    return score(predicted, gold)
