"""Corpus BLEU and the noise-ratio robustness sweep."""
from __future__ import annotations

import hashlib
import json
import math
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Sequence

from .corpus import ParallelCorpus
from .noise import Mode, NoiseSpec, noisy_corpus
from .pinyin import SyllableTable, Token, render_mixed

MAX_ORDER = 4


@dataclass(frozen=True)
class BleuScore:
    score: float
    precisions: tuple[float, ...]
    brevity_penalty: float
    hyp_len: int
    ref_len: int
    smoothed: tuple[bool, ...] = ()

    def to_dict(self) -> dict:
        return asdict(self)


def _ngrams(seq: Sequence[str], n: int) -> Counter:
    return Counter(tuple(seq[i:i + n]) for i in range(len(seq) - n + 1))


def bleu(hypotheses: Sequence[Sequence[str]], references: Sequence[Sequence[str]],
         max_order: int = MAX_ORDER) -> BleuScore:
    """Case-insensitive corpus BLEU-4 against one reference per hypothesis.

    Orders n >= 2 with zero matches are add-one smoothed; orders with no hypothesis
    n-grams at all are left out of the geometric mean.
    """
    if len(hypotheses) != len(references):
        raise ValueError("hypothesis and reference counts differ")
    if not hypotheses:
        raise ValueError("empty corpus")
    matches = [0] * max_order
    totals = [0] * max_order
    hyp_len = ref_len = 0
    for hyp, ref in zip(hypotheses, references):
        hyp = [w.lower() for w in hyp]
        ref = [w.lower() for w in ref]
        hyp_len += len(hyp)
        ref_len += len(ref)
        for n in range(1, max_order + 1):
            h, r = _ngrams(hyp, n), _ngrams(ref, n)
            matches[n - 1] += sum(min(c, r[g]) for g, c in h.items())
            totals[n - 1] += max(0, len(hyp) - n + 1)
    precisions, smoothed, logs = [], [], []
    for n in range(max_order):
        if totals[n] == 0:
            precisions.append(0.0)
            smoothed.append(False)
            continue
        if matches[n] == 0 and n > 0:
            p = 1.0 / (totals[n] + 1)
            smoothed.append(True)
        else:
            p = matches[n] / totals[n]
            smoothed.append(False)
        precisions.append(p)
        logs.append(math.log(p) if p > 0 else -math.inf)
    if hyp_len == 0:
        return BleuScore(0.0, tuple(precisions), 0.0, hyp_len, ref_len, tuple(smoothed))
    bp = 1.0 if hyp_len >= ref_len else math.exp(1 - ref_len / hyp_len)
    geo = 0.0 if any(l == -math.inf for l in logs) else math.exp(sum(logs) / len(logs))
    score = min(100.0, 100.0 * bp * geo)
    return BleuScore(score, tuple(precisions), bp, hyp_len, ref_len, tuple(smoothed))


# ---------------------------------------------------------------- systems and sweep

@dataclass
class System:
    """A translator, optionally preceded by the homophone detector."""
    name: str
    model: object
    detector: object | None = None
    beta: float = 0.1
    beam_size: int = 4
    _cache: dict = field(default_factory=dict, repr=False)

    def prepare(self, tokens: Sequence[Token], table: SyllableTable) -> list[Token]:
        from . import detector as det

        tokens = list(tokens)
        if self.detector is not None:
            report = det.score(self.detector, tokens, table, self.beta)
            tokens = det.to_mixed(tokens, report, table)
        return self.model.prepare_source(tokens, table)

    def translate(self, tokens: Sequence[Token], table: SyllableTable) -> list[str]:
        from .sanmt import translate

        src = self.prepare(tokens, table)
        key = tuple(src)
        if key not in self._cache:
            self._cache[key] = translate(self.model, src, self.beam_size)
        return self._cache[key]


def corpus_hash(corpus: ParallelCorpus) -> str:
    h = hashlib.sha256()
    for pair in corpus.pairs:
        h.update(render_mixed(pair.source).encode("utf-8"))
        h.update(b"\n")
    return h.hexdigest()


def evaluate_system(system: System, corpus: ParallelCorpus, table: SyllableTable,
                    threads: int = 1) -> tuple[BleuScore, list[list[str]]]:
    """BLEU of one system on one corpus; each distinct prepared source is decoded once."""
    from .sanmt import translate

    pool = ThreadPoolExecutor(threads) if threads > 1 else None
    mapper = pool.map if pool else map
    try:
        prepared = list(mapper(lambda s: tuple(system.prepare(s, table)), [p.source for p in corpus.pairs]))
        todo = [src for src in dict.fromkeys(prepared) if src not in system._cache]
        outs = list(mapper(lambda src: translate(system.model, src, system.beam_size), todo))
    finally:
        if pool:
            pool.shutdown()
    system._cache.update(zip(todo, outs))
    hyps = [system._cache[src] for src in prepared]
    return bleu(hyps, [p.target for p in corpus.pairs]), hyps


@dataclass
class SweepReport:
    ratios: list[float]
    systems: list[str]
    cells: dict[str, dict[str, BleuScore]]  # system -> ratio label -> score
    corpus_hashes: dict[str, str]  # ratio label -> hash of the shared noisy sources
    metadata: dict

    def bleu_at(self, system: str, ratio: float | str) -> float:
        return self.cells[system][ratio_label(ratio)].score

    def to_json(self) -> str:
        doc = {
            "metadata": self.metadata,
            "ratios": self.ratios,
            "systems": self.systems,
            "corpus_hashes": self.corpus_hashes,
            "cells": {s: {r: c.to_dict() for r, c in row.items()} for s, row in self.cells.items()},
        }
        return json.dumps(doc, ensure_ascii=False, indent=1, sort_keys=True) + "\n"

    def to_tsv(self) -> str:
        labels = ["clean"] + [ratio_label(r) for r in self.ratios if r != 0]
        meta = json.dumps(self.metadata, ensure_ascii=False, sort_keys=True, separators=(",", ":"))
        lines = ["# " + meta, "system\t" + "\t".join(labels)]
        for s in self.systems:
            lines.append(s + "\t" + "\t".join(f"{self.cells[s][l].score:.2f}" for l in labels))
        return "\n".join(lines) + "\n"


def ratio_label(ratio: float | str) -> str:
    if isinstance(ratio, str):
        return ratio
    return "clean" if ratio == 0 else f"{ratio:g}"


def run_sweep(systems: Sequence[System], clean_test: ParallelCorpus, table: SyllableTable,
              ratios: Sequence[float], seed: int = 0, threads: int = 1,
              metadata: dict | None = None) -> SweepReport:
    """Score every system on the clean test and on one shared homophone-noise set per ratio."""
    for r in ratios:
        if not 0 <= r <= 1:
            raise ValueError(f"ratio {r} outside [0, 1]")
    grid = [0.0] + [float(r) for r in ratios if r != 0]
    tests = {}
    for r in grid:
        tests[ratio_label(r)] = clean_test if r == 0 else noisy_corpus(clean_test, table, NoiseSpec(r, seed, Mode.HOMOPHONE))
    cells: dict[str, dict[str, BleuScore]] = {s.name: {} for s in systems}
    for label, test in tests.items():
        for s in systems:
            cells[s.name][label], _ = evaluate_system(s, test, table, threads)
    meta = {"seed": seed, "smoothing": "add-one for n>=2 orders with zero matches",
            "betas": {s.name: (s.beta if s.detector is not None else None) for s in systems},
            "beam_sizes": {s.name: s.beam_size for s in systems}}
    meta.update(metadata or {})
    return SweepReport([float(r) for r in ratios], [s.name for s in systems], cells,
                       {k: corpus_hash(v) for k, v in tests.items()}, meta)
