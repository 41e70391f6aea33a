"""Parallel corpora, vocabularies and integer encoding."""
from __future__ import annotations

import enum
import logging
from collections import Counter
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

from .pinyin import SyllableTable, Token, parse_mixed, render_mixed

log = logging.getLogger(__name__)

PAD, BOS, EOS, UNK = "<pad>", "<s>", "</s>", "<unk>"
RESERVED = (PAD, BOS, EOS, UNK)
PAD_ID, BOS_ID, EOS_ID, UNK_ID = 0, 1, 2, 3
MAX_LEN = 64


class CorpusFormatError(ValueError):
    pass


class Provenance(str, enum.Enum):
    OTTD = "OTTD"
    SMTD = "SMTD"
    NATD = "NATD"
    ANT = "ANT"
    MIX = "MIX"


@dataclass(frozen=True)
class SentencePair:
    source: tuple[Token, ...]
    target: tuple[str, ...]
    # token positions rewritten by a noise builder (empty for untouched pairs)
    positions: tuple[int, ...] = ()


@dataclass
class ParallelCorpus:
    pairs: list[SentencePair]
    provenance: Provenance = Provenance.OTTD
    dropped: int = 0

    def __len__(self) -> int:
        return len(self.pairs)

    def __iter__(self):
        return iter(self.pairs)

    def with_provenance(self, provenance: Provenance) -> "ParallelCorpus":
        return replace(self, provenance=provenance, pairs=list(self.pairs))


def token_key(tok) -> str:
    return tok if isinstance(tok, str) else tok.text


def split_target(text: str) -> tuple[str, ...]:
    return tuple(text.lower().split())


def parse_parallel(lines: Iterable[str], table: SyllableTable, max_len: int = MAX_LEN) -> ParallelCorpus:
    pairs = []
    dropped = 0
    for lineno, raw in enumerate(lines, 1):
        line = raw.rstrip("\n")
        if not line:
            continue
        fields = line.split("\t")
        if len(fields) != 2:
            raise CorpusFormatError(f"line {lineno}: expected <source>TAB<target>")
        src = tuple(parse_mixed(fields[0], table))
        tgt = split_target(fields[1])
        if not src or not tgt or len(src) > max_len or len(tgt) > max_len:
            dropped += 1
            continue
        pairs.append(SentencePair(src, tgt))
    if dropped:
        log.info("dropped %d pairs violating length bounds", dropped)
    return ParallelCorpus(pairs, Provenance.OTTD, dropped)


def load_parallel(path, table: SyllableTable, max_len: int = MAX_LEN) -> ParallelCorpus:
    with open(path, encoding="utf-8") as fh:
        return parse_parallel(fh, table, max_len)


def format_pair(pair: SentencePair) -> str:
    return f"{render_mixed(pair.source)}\t{' '.join(pair.target)}"


def save_parallel(corpus: ParallelCorpus, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for pair in corpus.pairs:
            fh.write(format_pair(pair) + "\n")


@dataclass(frozen=True)
class Vocabulary:
    itos: tuple[str, ...]
    stoi: dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.itos[: len(RESERVED)] != RESERVED:
            raise ValueError("vocabulary must start with the reserved tokens")
        stoi = {s: i for i, s in enumerate(self.itos)}
        if len(stoi) != len(self.itos):
            raise ValueError("duplicate vocabulary entries")
        object.__setattr__(self, "stoi", stoi)

    def __len__(self) -> int:
        return len(self.itos)

    def __contains__(self, tok) -> bool:
        return token_key(tok) in self.stoi

    def id(self, tok) -> int:
        return self.stoi.get(token_key(tok), UNK_ID)


def vocab_from_counts(counts: Counter, min_count: int = 1, extra: Iterable[str] = (), specials: Sequence[str] = ()) -> Vocabulary:
    if min_count < 1:
        raise ValueError("min_count must be >= 1")
    keep = {t: n for t, n in counts.items() if n >= min_count}
    for t in extra:
        keep.setdefault(t, counts.get(t, 0))
    for t in (*RESERVED, *specials):
        keep.pop(t, None)
    ordered = sorted(keep, key=lambda t: (-keep[t], t))
    return Vocabulary((*RESERVED, *specials, *ordered))


def build_vocab(corpora: Sequence[ParallelCorpus], side: str, min_count: int = 1,
                table: SyllableTable | None = None) -> Vocabulary:
    """Frequency-ordered vocabulary; the source side always carries the full syllable inventory."""
    if side not in ("source", "target"):
        raise ValueError(f"side must be 'source' or 'target', got {side!r}")
    counts: Counter = Counter()
    for corpus in corpora:
        for pair in corpus.pairs:
            seq = pair.source if side == "source" else pair.target
            counts.update(token_key(t) for t in seq)
    extra = table.syllables if (side == "source" and table is not None) else ()
    return vocab_from_counts(counts, min_count, extra)


def encode(vocab: Vocabulary, tokens: Sequence) -> list[int]:
    return [vocab.id(t) for t in tokens]


def decode(vocab: Vocabulary, ids: Sequence[int]) -> list[str]:
    out = []
    for i in ids:
        if not 0 <= i < len(vocab):
            raise IndexError(f"id {i} out of range for vocabulary of size {len(vocab)}")
        out.append(vocab.itos[i])
    return out
