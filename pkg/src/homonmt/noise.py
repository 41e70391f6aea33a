"""Homophone-noise test sets, syllable-mixed and noise-adversarial training data.

All randomness comes from numpy generators seeded by ``SeedSequence([seed, *path])`` so a
sentence's draws depend only on the seed and its index, never on iteration order.
"""
from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .corpus import ParallelCorpus, Provenance, SentencePair
from .pinyin import (HanChar, Syllable, SyllableTable, Token, homophones, parse_mixed,  # noqa: F401
                     render_mixed)

__all__ = [
    "Mode", "NoiseSpec", "SubstitutionRecord", "stream", "select_positions", "make_ant",
    "make_smtd", "make_natd", "augment_corpus", "noisy_corpus", "render_mixed", "parse_mixed",
    "DEFAULT_RATIOS", "uniform_ratio_sampler", "write_sidecar",
]

DEFAULT_RATIOS = (0.1, 0.2, 0.3, 0.4, 0.5)


class Mode(str, enum.Enum):
    HOMOPHONE = "homophone"
    SYLLABLE_MIX = "syllable-mix"


@dataclass(frozen=True)
class NoiseSpec:
    ratio: float = 0.1
    seed: int = 0
    mode: Mode = Mode.HOMOPHONE

    def __post_init__(self):
        if not 0.0 <= self.ratio <= 1.0:
            raise ValueError(f"ratio must be in [0, 1], got {self.ratio}")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")


@dataclass(frozen=True)
class SubstitutionRecord:
    position: int
    original: Token
    replacement: Token

    def __post_init__(self):
        if not isinstance(self.original, HanChar):
            raise ValueError("only characters are substituted")
        if self.original == self.replacement:
            raise ValueError("replacement must differ from the original")


def stream(seed: int, *path: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, *path])))


def substitution_count(ratio: float, k: int) -> int:
    # round half up; Python's round() is banker's rounding
    return min(k, int(math.floor(ratio * k + 0.5)))


def substitutable(tokens: Sequence[Token], table: SyllableTable, mode: Mode) -> list[int]:
    out = []
    for i, tok in enumerate(tokens):
        if not isinstance(tok, HanChar) or tok.char not in table:
            continue
        if mode is Mode.HOMOPHONE and not homophones(table, tok.char):
            continue
        out.append(i)
    return out


def select_positions(tokens: Sequence[Token], ratio: float, rng: np.random.Generator,
                     table: SyllableTable, mode: Mode = Mode.HOMOPHONE) -> list[int]:
    """Exactly round(ratio * k) of the k substitutable positions, uniformly, sorted."""
    if not 0.0 <= ratio <= 1.0:
        raise ValueError(f"ratio must be in [0, 1], got {ratio}")
    candidates = substitutable(tokens, table, mode)
    n = substitution_count(ratio, len(candidates))
    if n == 0:
        return []
    picked = rng.choice(len(candidates), size=n, replace=False)
    return sorted(candidates[j] for j in picked)


def make_ant(tokens: Sequence[Token], table: SyllableTable, spec: NoiseSpec,
             rng: np.random.Generator | None = None) -> tuple[list[Token], list[SubstitutionRecord]]:
    """Replace a fraction of characters by a different character with the same syllable."""
    if spec.mode is not Mode.HOMOPHONE:
        raise ValueError("make_ant needs a homophone NoiseSpec")
    rng = rng if rng is not None else stream(spec.seed)
    out = list(tokens)
    records = []
    for pos in select_positions(tokens, spec.ratio, rng, table, Mode.HOMOPHONE):
        cands = homophones(table, tokens[pos].char)
        new = HanChar(cands[int(rng.integers(len(cands)))])
        out[pos] = new
        records.append(SubstitutionRecord(pos, tokens[pos], new))
    return out, records


def make_smtd(tokens: Sequence[Token], table: SyllableTable, spec: NoiseSpec,
              rng: np.random.Generator | None = None) -> tuple[list[Token], list[SubstitutionRecord]]:
    """Replace a fraction of characters by their own syllable."""
    if spec.mode is not Mode.SYLLABLE_MIX:
        raise ValueError("make_smtd needs a syllable-mix NoiseSpec")
    for i, tok in enumerate(tokens):
        if isinstance(tok, HanChar):
            table.syllable_of(tok.char, i)
    rng = rng if rng is not None else stream(spec.seed)
    out = list(tokens)
    records = []
    for pos in select_positions(tokens, spec.ratio, rng, table, Mode.SYLLABLE_MIX):
        new = Syllable(table.char_to_syllable[tokens[pos].char])
        out[pos] = new
        records.append(SubstitutionRecord(pos, tokens[pos], new))
    return out, records


def make_natd(smtd_source: Sequence[Token], original: Sequence[Token],
              records: Sequence[SubstitutionRecord], table: SyllableTable,
              rng: np.random.Generator) -> tuple[list[Token], int]:
    """Put a random different homophone at every syllable-mix position.

    Returns the noisy tokens and the number of recorded positions kept unchanged because
    their character has no homophone.
    """
    if len(smtd_source) != len(original):
        raise ValueError("syllable-mixed and original sources differ in length")
    out = list(original)
    kept = 0
    for rec in records:
        cands = homophones(table, rec.original.char)
        if not cands:
            kept += 1
            continue
        out[rec.position] = HanChar(cands[int(rng.integers(len(cands)))])
    return out, kept


def uniform_ratio_sampler(ratios: Sequence[float] = DEFAULT_RATIOS) -> Callable[[np.random.Generator], float]:
    def sample(rng: np.random.Generator) -> float:
        return float(ratios[int(rng.integers(len(ratios)))])
    return sample


def augment_corpus(corpus: ParallelCorpus, table: SyllableTable, copies: int = 3,
                   ratio_sampler: Callable[[np.random.Generator], float] | None = None,
                   seed: int = 0) -> ParallelCorpus:
    """Originals followed by ``copies`` syllable-mixed passes over the corpus."""
    if copies < 0:
        raise ValueError("copies must be >= 0")
    sampler = ratio_sampler or uniform_ratio_sampler()
    pairs = [SentencePair(p.source, p.target) for p in corpus.pairs]
    for c in range(copies):
        for i, pair in enumerate(corpus.pairs):
            rng = stream(seed, c, i)
            spec = NoiseSpec(sampler(rng), seed, Mode.SYLLABLE_MIX)
            mixed, recs = make_smtd(pair.source, table, spec, rng)
            pairs.append(SentencePair(tuple(mixed), pair.target, tuple(r.position for r in recs)))
    return ParallelCorpus(pairs, Provenance.MIX)


def adversarial_corpus(corpus: ParallelCorpus, table: SyllableTable, copies: int = 3,
                       ratio_sampler: Callable[[np.random.Generator], float] | None = None,
                       seed: int = 0) -> tuple[ParallelCorpus, int]:
    """Originals plus ``copies`` homophone passes placed at the syllable-mix positions."""
    sampler = ratio_sampler or uniform_ratio_sampler()
    pairs = [SentencePair(p.source, p.target) for p in corpus.pairs]
    kept_total = 0
    for c in range(copies):
        for i, pair in enumerate(corpus.pairs):
            rng = stream(seed, c, i)
            spec = NoiseSpec(sampler(rng), seed, Mode.SYLLABLE_MIX)
            mixed, recs = make_smtd(pair.source, table, spec, rng)
            noisy, kept = make_natd(mixed, pair.source, recs, table, stream(seed, c, i, 1))
            kept_total += kept
            pairs.append(SentencePair(tuple(noisy), pair.target, tuple(r.position for r in recs)))
    return ParallelCorpus(pairs, Provenance.MIX), kept_total


def noisy_corpus(corpus: ParallelCorpus, table: SyllableTable, spec: NoiseSpec) -> ParallelCorpus:
    """Corpus-level ANT (homophone) or SMTD (syllable-mix) construction at a fixed ratio."""
    build = make_ant if spec.mode is Mode.HOMOPHONE else make_smtd
    pairs = []
    for i, pair in enumerate(corpus.pairs):
        toks, recs = build(pair.source, table, spec, stream(spec.seed, i))
        pairs.append(SentencePair(tuple(toks), pair.target, tuple(r.position for r in recs)))
    prov = Provenance.ANT if spec.mode is Mode.HOMOPHONE else Provenance.SMTD
    return ParallelCorpus(pairs, prov)


def write_sidecar(path, corpus: ParallelCorpus, config: dict) -> None:
    """JSON record of how a derived dataset was built."""
    doc = {
        "provenance": corpus.provenance.value,
        "config": config,
        "positions": [list(p.positions) for p in corpus.pairs],
    }
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(doc, fh, ensure_ascii=False, indent=1, sort_keys=True)
        fh.write("\n")
