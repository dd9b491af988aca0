"""Synthetic multiparallel corpora with planted concept alignments.

Every sentence is a sequence of distinct concepts. Each language realizes a
concept as its own word form and scrambles token order with a deterministic
language-specific permutation (rotation, reversed for odd languages), so
positions correlate across languages without being identical. Gold links for
the designated pair are the concept identities; the input alignments are the
gold links of every pair with a fraction dropped and random wrong links added.
"""

from dataclasses import dataclass, field
from itertools import combinations
from pathlib import Path

import numpy as np

from .corpus import (
    BilingualAlignmentSet,
    GoldAlignment,
    MultiParallelCorpus,
    write_gold,
    write_pharaoh,
)


@dataclass
class SynthConfig:
    n_sentences: int = 200
    n_languages: int = 4
    vocab: int = 150
    len_min: int = 6
    len_max: int = 10
    edge_drop_rate: float = 0.0
    edge_noise_rate: float = 0.0
    seed: int = 0
    n_test: int = 0

    def __post_init__(self):
        if not 0 <= self.edge_drop_rate <= 1 or not 0 <= self.edge_noise_rate <= 1:
            raise ValueError("drop/noise rates must lie in [0, 1]")
        if self.len_max > self.vocab:
            raise ValueError("vocab must be at least len_max (concepts are distinct)")
        if self.len_min < 1 or self.len_max < self.len_min:
            raise ValueError("need 1 <= len_min <= len_max")


@dataclass
class SynthResult:
    config: SynthConfig
    corpus: MultiParallelCorpus
    alignments: dict[tuple[str, str], BilingualAlignmentSet]
    gold: GoldAlignment
    pair: tuple[str, str]
    train_ids: list[str]
    test_ids: list[str]
    concepts: dict[str, list[int]] = field(default_factory=dict)


def language_code(index: int) -> str:
    return f"l{index:02d}"


def _position_of(concept_slot: int, lang_index: int, length: int) -> int:
    """Deterministic per-language scramble: rotate, reverse odd languages."""
    rotated = (concept_slot + 3 * lang_index) % length
    if lang_index % 2 == 1:
        return length - 1 - rotated
    return rotated


def generate(config: SynthConfig) -> SynthResult:
    rng = np.random.default_rng(config.seed)
    langs = [language_code(i) for i in range(config.n_languages)]
    pair = (langs[0], langs[1])

    sentences: dict[str, dict[str, list[str]]] = {}
    concepts: dict[str, list[int]] = {}
    positions: dict[str, dict[str, list[int]]] = {}
    for s in range(config.n_sentences):
        sid = f"v{s:05d}"
        length = int(rng.integers(config.len_min, config.len_max + 1))
        sent_concepts = rng.choice(config.vocab, size=length, replace=False).tolist()
        concepts[sid] = sent_concepts
        sentences[sid] = {}
        positions[sid] = {}
        for li, lang in enumerate(langs):
            toks = [""] * length
            pos_of_slot = [0] * length
            for slot, concept in enumerate(sent_concepts):
                pos = _position_of(slot, li, length)
                toks[pos] = f"{lang}w{concept:04d}"
                pos_of_slot[slot] = pos
            sentences[sid][lang] = toks
            positions[sid][lang] = pos_of_slot

    corpus = MultiParallelCorpus(langs, sentences)

    gold = GoldAlignment(pair)
    alignments: dict[tuple[str, str], BilingualAlignmentSet] = {}
    for la, lb in combinations(langs, 2):
        alignments[(la, lb)] = BilingualAlignmentSet((la, lb))
    for sid, sent_concepts in concepts.items():
        length = len(sent_concepts)
        for la, lb in combinations(langs, 2):
            pos_a = positions[sid][la]
            pos_b = positions[sid][lb]
            true_links = {(pos_a[slot], pos_b[slot]) for slot in range(length)}
            if (la, lb) == pair:
                gold.sure[sid] = set(true_links)
                gold.possible[sid] = set(true_links)
            kept = {
                link
                for link in sorted(true_links)
                if rng.random() >= config.edge_drop_rate
            }
            n_noise = int(rng.binomial(length, config.edge_noise_rate))
            for _ in range(n_noise):
                for _attempt in range(20):
                    i = int(rng.integers(length))
                    j = int(rng.integers(length))
                    if (i, j) not in true_links and (i, j) not in kept:
                        kept.add((i, j))
                        break
            alignments[(la, lb)].links[sid] = kept

    ids = sorted(sentences)
    n_test = min(config.n_test, len(ids))
    train_ids = ids[: len(ids) - n_test]
    test_ids = ids[len(ids) - n_test :]
    return SynthResult(
        config=config,
        corpus=corpus,
        alignments=alignments,
        gold=gold,
        pair=pair,
        train_ids=train_ids,
        test_ids=test_ids,
        concepts=concepts,
    )


def write_synth(result: SynthResult, out_dir: str | Path) -> None:
    """Materialize the corpus layout the pipeline consumes."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for lang in result.corpus.languages:
        with open(out / f"{lang}.txt", "w", encoding="utf-8") as fh:
            for sid in sorted(result.corpus.sentences):
                toks = result.corpus.sentences[sid].get(lang)
                if toks:
                    fh.write(f"{sid}\t{' '.join(toks)}\n")
    for (la, lb), aset in result.alignments.items():
        write_pharaoh(aset, out / f"{la}-{lb}.align")
    write_gold(result.gold, out / f"{result.pair[0]}-{result.pair[1]}.gold")
    (out / "train_ids.txt").write_text("".join(f"{sid}\n" for sid in result.train_ids))
    (out / "test_ids.txt").write_text("".join(f"{sid}\n" for sid in result.test_ids))
    meta = {
        "pair": list(result.pair),
        "languages": list(result.corpus.languages),
        "n_sentences": result.config.n_sentences,
        "seed": result.config.seed,
        "edge_drop_rate": result.config.edge_drop_rate,
        "edge_noise_rate": result.config.edge_noise_rate,
        "len_min": result.config.len_min,
        "len_max": result.config.len_max,
        "vocab": result.config.vocab,
    }
    import json

    (out / "meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
