"""Corpus, alignment, gold-standard, and POS file parsing and serialization.

File formats (all UTF-8, one sentence per line, fields joined by a tab):

* corpus ``<lang>.txt``:      ``sentence_id<TAB>tok tok ...``
* alignments ``<a>-<b>.align``: ``sentence_id<TAB>i-j i-j ...`` (Pharaoh pairs)
* gold ``.gold``:             like Pharaoh; ``i-j`` sure, ``i?j`` possible-only
* POS ``<lang>.pos``:         ``sentence_id<TAB>tok/TAG tok/TAG ...``

Indices are 0-based internally; pass ``one_based=True`` for 1-based inputs.
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

logger = logging.getLogger(__name__)

UPOS_TAGS = frozenset(
    "ADJ ADP ADV AUX CCONJ DET INTJ NOUN NUM PART PRON PROPN PUNCT SCONJ SYM VERB X".split()
)


class CorpusFormatError(ValueError):
    """Raised for malformed corpus/alignment/gold/POS files."""


@dataclass
class MultiParallelCorpus:
    languages: list[str]
    sentences: dict[str, dict[str, list[str]]]
    dropped_ids: int = 0

    def tokens(self, sentence_id: str, lang: str) -> list[str]:
        return self.sentences[sentence_id][lang]

    def sentence_ids(self) -> list[str]:
        return sorted(self.sentences)

    def __eq__(self, other) -> bool:
        if not isinstance(other, MultiParallelCorpus):
            return NotImplemented
        return self.languages == other.languages and self.sentences == other.sentences


@dataclass
class BilingualAlignmentSet:
    lang_pair: tuple[str, str]
    links: dict[str, set[tuple[int, int]]] = field(default_factory=dict)

    def swapped(self) -> "BilingualAlignmentSet":
        """Same link set with the two languages (and index roles) exchanged."""
        la, lb = self.lang_pair
        return BilingualAlignmentSet(
            (lb, la), {sid: {(j, i) for i, j in s} for sid, s in self.links.items()}
        )


@dataclass
class GoldAlignment:
    lang_pair: tuple[str, str]
    sure: dict[str, set[tuple[int, int]]] = field(default_factory=dict)
    possible: dict[str, set[tuple[int, int]]] = field(default_factory=dict)

    def sentence_ids(self) -> list[str]:
        return sorted(self.possible)


def _read_tabbed(path: Path):
    """Yield (line_no, sentence_id, payload) triples, skipping blank lines."""
    with open(path, encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line.strip():
                continue
            if "\t" not in line:
                raise CorpusFormatError(f"{path}:{line_no}: missing tab separator")
            sid, payload = line.split("\t", 1)
            if not sid:
                raise CorpusFormatError(f"{path}:{line_no}: empty sentence id")
            yield line_no, sid, payload


def load_corpus(paths: Mapping[str, str | Path]) -> MultiParallelCorpus:
    """Load per-language token files; keep only sentence ids shared by >= 2 languages."""
    per_lang: dict[str, dict[str, list[str]]] = {}
    for lang in sorted(paths):
        path = Path(paths[lang])
        seen: dict[str, list[str]] = {}
        for line_no, sid, payload in _read_tabbed(path):
            if sid in seen:
                raise CorpusFormatError(f"{path}:{line_no}: duplicate sentence id {sid!r}")
            toks = payload.split()
            if not toks:
                raise CorpusFormatError(f"{path}:{line_no}: sentence {sid!r} has no tokens")
            seen[sid] = toks
        per_lang[lang] = seen

    counts: dict[str, int] = {}
    for table in per_lang.values():
        for sid in table:
            counts[sid] = counts.get(sid, 0) + 1
    keep = {sid for sid, c in counts.items() if c >= 2}
    dropped = len(counts) - len(keep)
    if dropped:
        logger.info("dropped %d sentence ids present in fewer than 2 languages", dropped)

    sentences: dict[str, dict[str, list[str]]] = {}
    for lang, table in per_lang.items():
        for sid, toks in table.items():
            if sid in keep:
                sentences.setdefault(sid, {})[lang] = toks
    return MultiParallelCorpus(sorted(per_lang), sentences, dropped_ids=dropped)


def _parse_index_pair(item: str, sep: str, path, line_no: int, one_based: bool):
    left, _, right = item.partition(sep)
    try:
        i, j = int(left), int(right)
    except ValueError:
        raise CorpusFormatError(f"{path}:{line_no}: bad link {item!r}") from None
    if one_based:
        i, j = i - 1, j - 1
    if i < 0 or j < 0:
        raise CorpusFormatError(f"{path}:{line_no}: negative index in {item!r}")
    return i, j


def load_pharaoh(
    path: str | Path, lang_pair: tuple[str, str], one_based: bool = False
) -> BilingualAlignmentSet:
    """Load Pharaoh-style ``i-j`` links. Duplicates are merged; order is irrelevant."""
    path = Path(path)
    links: dict[str, set[tuple[int, int]]] = {}
    for line_no, sid, payload in _read_tabbed_allow_empty(path):
        out = links.setdefault(sid, set())
        for item in payload.split():
            out.add(_parse_index_pair(item, "-", path, line_no, one_based))
    return BilingualAlignmentSet(lang_pair, links)


def _read_tabbed_allow_empty(path: Path):
    """Like _read_tabbed but a line ``sid<TAB>`` (no payload) is allowed."""
    with open(path, encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line.strip():
                continue
            if "\t" not in line:
                # a bare id means an empty link list
                sid = line.strip()
                if " " in sid:
                    raise CorpusFormatError(f"{path}:{line_no}: missing tab separator")
                yield line_no, sid, ""
                continue
            sid, payload = line.split("\t", 1)
            if not sid:
                raise CorpusFormatError(f"{path}:{line_no}: empty sentence id")
            yield line_no, sid, payload


def write_pharaoh(aset: BilingualAlignmentSet, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for sid in sorted(aset.links):
            items = " ".join(f"{i}-{j}" for i, j in sorted(aset.links[sid]))
            fh.write(f"{sid}\t{items}\n")


def load_gold(
    path: str | Path, lang_pair: tuple[str, str] = ("", ""), one_based: bool = False
) -> GoldAlignment:
    """Load gold links; ``i-j`` items are sure, ``i?j`` possible-only.

    The possible set always includes the sure set after loading.
    """
    path = Path(path)
    gold = GoldAlignment(lang_pair)
    for line_no, sid, payload in _read_tabbed_allow_empty(path):
        sure = gold.sure.setdefault(sid, set())
        poss = gold.possible.setdefault(sid, set())
        for item in payload.split():
            if "?" in item:
                poss.add(_parse_index_pair(item, "?", path, line_no, one_based))
            else:
                sure.add(_parse_index_pair(item, "-", path, line_no, one_based))
        poss |= sure
    return gold


def write_gold(gold: GoldAlignment, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for sid in sorted(gold.possible):
            sure = gold.sure.get(sid, set())
            items = [f"{i}-{j}" for i, j in sorted(sure)]
            items += [f"{i}?{j}" for i, j in sorted(gold.possible[sid] - sure)]
            fh.write(f"{sid}\t{' '.join(items)}\n")


def load_pos_tagged(path: str | Path) -> dict[str, list[tuple[str, str]]]:
    """Load one language's ``tok/TAG`` file; tags must be UPOS (or ``X``)."""
    path = Path(path)
    out: dict[str, list[tuple[str, str]]] = {}
    for line_no, sid, payload in _read_tabbed(path):
        if sid in out:
            raise CorpusFormatError(f"{path}:{line_no}: duplicate sentence id {sid!r}")
        pairs = []
        for item in payload.split():
            tok, sep, tag = item.rpartition("/")
            if not sep or not tok:
                raise CorpusFormatError(f"{path}:{line_no}: bad token/tag {item!r}")
            if tag not in UPOS_TAGS:
                raise CorpusFormatError(f"{path}:{line_no}: unknown tag {tag!r}")
            pairs.append((tok, tag))
        if not pairs:
            raise CorpusFormatError(f"{path}:{line_no}: sentence {sid!r} has no tokens")
        out[sid] = pairs
    return out


def write_pos_tagged(tagged: Mapping[str, Iterable[tuple[str, str]]], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for sid in sorted(tagged):
            items = " ".join(f"{tok}/{tag}" for tok, tag in tagged[sid])
            fh.write(f"{sid}\t{items}\n")
