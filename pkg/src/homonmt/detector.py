"""Homophone-error detector.

A transformer encoder reads the syllable transcription of a sentence and predicts the
character at every position. A character whose predicted probability falls below the
threshold ``beta`` is taken to be a homophone error and rewritten to its syllable.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import torch

from . import nnet
from .corpus import PAD_ID, RESERVED, Vocabulary
from .noise import Mode, NoiseSpec, make_ant, stream, substitutable
from .pinyin import (Foreign, HanChar, Syllable, SyllableTable, Token, UnmappedCharacterError,
                     tokenize, transcribe)

log = logging.getLogger(__name__)

FOREIGN = "<foreign>"
DEFAULT_BETA = 0.1


@dataclass
class DetectorModel:
    config: nnet.ModelConfig
    params: nnet.Params
    in_vocab: Vocabulary
    out_vocab: Vocabulary


def input_vocab(table: SyllableTable) -> Vocabulary:
    return Vocabulary((*RESERVED, FOREIGN, *table.syllables))


def output_vocab(table: SyllableTable) -> Vocabulary:
    return Vocabulary((*RESERVED, FOREIGN, *table.chars))


def build_self_supervised_data(sentences: Sequence[str], table: SyllableTable
                               ) -> tuple[list[tuple[list[str], list[str]]], int]:
    """(syllables, characters) training pairs; sentences with unmapped characters are dropped.

    Foreign runs become the ``<foreign>`` placeholder on both sides.
    """
    data, dropped = [], 0
    for text in sentences:
        tokens = tokenize(text)
        try:
            syls = transcribe(table, tokens)
        except UnmappedCharacterError:
            dropped += 1
            continue
        if not tokens:
            continue
        inp = [FOREIGN if isinstance(s, Foreign) else s.text for s in syls]
        lab = [FOREIGN if isinstance(t, Foreign) else t.text for t in tokens]
        data.append((inp, lab))
    if dropped:
        log.info("dropped %d sentences with characters outside the table", dropped)
    return data, dropped


def detector_config(table: SyllableTable, **overrides) -> nnet.ModelConfig:
    overrides.setdefault("n_dec_layers", 0)
    return nnet.ModelConfig(src_vocab=len(input_vocab(table)), tgt_vocab=len(output_vocab(table)), **overrides)


def init_params(cfg: nnet.ModelConfig, seed: int) -> nnet.Params:
    gen = torch.Generator().manual_seed(seed)
    params = nnet.init_encoder(cfg, gen)
    return nnet.init_output(params, "out", cfg.d_model, cfg.tgt_vocab, gen)


def expected_shapes(cfg: nnet.ModelConfig) -> dict[str, tuple]:
    return {k: tuple(v.shape) for k, v in init_params(cfg, 0).items()}


def char_logits(model_or_cfg, params, ids: torch.Tensor, gen: torch.Generator | None = None) -> torch.Tensor:
    cfg = model_or_cfg
    pad = ids == PAD_ID
    hidden = nnet.encoder_forward(cfg, params, ids, pad, gen)
    return nnet.linear(hidden, params, "out")


def _pad(seqs: list[list[int]], fill: int = PAD_ID) -> torch.Tensor:
    width = max(len(s) for s in seqs)
    return torch.tensor([s + [fill] * (width - len(s)) for s in seqs], dtype=torch.long)


def train_detector(dataset: Sequence[tuple[list[str], list[str]]], table: SyllableTable, seed: int = 0,
                   train_cfg: nnet.TrainConfig | None = None, **model_overrides) -> tuple[DetectorModel, list[dict]]:
    """Maximum-likelihood training of syllables -> characters; placeholder labels are not scored."""
    if not dataset:
        raise ValueError("empty detector training set")
    train_cfg = train_cfg or nnet.TrainConfig(label_smoothing=0.0)
    cfg = detector_config(table, **model_overrides)
    in_vocab, out_vocab = input_vocab(table), output_vocab(table)
    foreign_out = out_vocab.id(FOREIGN)
    xs = [[in_vocab.id(s) for s in inp] for inp, _ in dataset]
    ys = [[PAD_ID if c == foreign_out else c for c in (out_vocab.id(ch) for ch in lab)] for _, lab in dataset]
    params = init_params(cfg, seed)

    rng = stream(seed, 0xDE7)
    n = len(xs)
    n_held = min(max(1, int(round(train_cfg.heldout_fraction * n))), 512) if n > 1 else 0
    perm = rng.permutation(n)
    held, train = perm[:n_held].tolist(), perm[n_held:].tolist() or perm.tolist()
    lengths = np.array([len(xs[i]) for i in train])

    def epoch_batches(epoch):
        batches = nnet.length_batches(lengths, train_cfg.batch_tokens, stream(seed, 0xB47, epoch))
        return [[train[j] for j in b] for b in batches]

    def loss_on(idx, gen, smoothing=train_cfg.label_smoothing):
        logits = char_logits(cfg, params, _pad([xs[i] for i in idx]), gen)
        targets = _pad([ys[i] for i in idx])
        if not bool((targets != PAD_ID).any()):
            return (logits * 0.0).sum()
        return nnet.cross_entropy(logits, targets, PAD_ID, smoothing)

    held_batches = [held[i:i + 64] for i in range(0, len(held), 64)] or [train[:64]]

    def heldout_loss():
        vals = [loss_on(idx, None, 0.0).item() for idx in held_batches]
        return float(np.mean(vals))

    best, history = nnet.train_loop(params, epoch_batches, loss_on, heldout_loss, train_cfg, seed, log=log.info)
    for t in best.values():
        t.requires_grad_(False)
    return DetectorModel(cfg, best, in_vocab, out_vocab), history


# ---------------------------------------------------------------- scoring

@dataclass(frozen=True)
class LLSReport:
    tokens: tuple[Token, ...]
    lls: tuple[float, ...]  # natural-log probability of the observed character; 0 where not scored
    flagged: tuple[bool, ...]
    beta: float
    unknown: tuple[int, ...] = ()  # positions whose character is not in the table

    def reflag(self, beta: float) -> "LLSReport":
        return LLSReport(self.tokens, self.lls, _flags(self.tokens, self.lls, beta, self.unknown), beta, self.unknown)

    def to_dict(self) -> dict:
        return {
            "tokens": [t.text for t in self.tokens],
            "lls": [None if math.isinf(v) else v for v in self.lls],
            "flagged": list(self.flagged),
            "unknown": list(self.unknown),
            "beta": self.beta,
        }


def _flags(tokens, lls, beta, unknown) -> tuple[bool, ...]:
    unknown = set(unknown)
    return tuple(
        isinstance(tok, HanChar) and (i in unknown or math.exp(v) < beta)
        for i, (tok, v) in enumerate(zip(tokens, lls))
    )


def score(model: DetectorModel, sentence: Sequence[Token], table: SyllableTable,
          beta: float = DEFAULT_BETA) -> LLSReport:
    """Log-likelihood of each observed character given the sentence's whole syllable sequence."""
    if not 0.0 < beta < 1.0:
        raise ValueError("beta must be in (0, 1)")
    tokens = tuple(sentence)
    if not tokens:
        return LLSReport((), (), (), beta)
    ids, unknown = [], []
    for i, tok in enumerate(tokens):
        if isinstance(tok, HanChar):
            if tok.char in table:
                ids.append(model.in_vocab.id(table.char_to_syllable[tok.char]))
            else:
                unknown.append(i)
                ids.append(model.in_vocab.id(FOREIGN))
        elif isinstance(tok, Syllable):
            ids.append(model.in_vocab.id(tok.syllable))
        else:
            ids.append(model.in_vocab.id(FOREIGN))
    with torch.no_grad():
        logp = torch.log_softmax(char_logits(model.config, model.params, torch.tensor(ids)), dim=-1)
    lls = []
    for i, tok in enumerate(tokens):
        if isinstance(tok, HanChar):
            if i in unknown:
                lls.append(-math.inf)
            else:
                lls.append(min(0.0, float(logp[i, model.out_vocab.id(tok.char)])))
        else:
            lls.append(0.0)
    return LLSReport(tokens, tuple(lls), _flags(tokens, lls, beta, unknown), beta, tuple(unknown))


def to_mixed(sentence: Sequence[Token], report: LLSReport, table: SyllableTable) -> list[Token]:
    """Rewrite flagged characters to syllables; unknown characters stay as they are."""
    out = []
    for i, (tok, flag) in enumerate(zip(sentence, report.flagged)):
        if flag and isinstance(tok, HanChar) and tok.char in table:
            out.append(Syllable(table.char_to_syllable[tok.char]))
        else:
            out.append(tok)
    return out


# ---------------------------------------------------------------- held-out evaluation

@dataclass(frozen=True)
class DetectionMetrics:
    precision: float
    recall: float
    mean_lls_error: float
    mean_lls_clean: float
    n_errors: int
    n_flagged: int
    n_true_flags: int
    n_clean_positions: int

    def to_dict(self) -> dict:
        return self.__dict__.copy()


def inject_single_errors(sentences: Sequence[str], table: SyllableTable, seed: int):
    """One homophone substitution per sentence (sentences with nothing substitutable are skipped)."""
    out = []
    for i, text in enumerate(sentences):
        tokens = tokenize(text)
        k = len(substitutable(tokens, table, Mode.HOMOPHONE))
        if not k:
            continue
        # ratio 1/k selects exactly one position
        noisy, recs = make_ant(tokens, table, NoiseSpec(1.0 / k, seed, Mode.HOMOPHONE), stream(seed, i))
        if len(recs) == 1:
            out.append((noisy, recs[0].position))
    return out


def detection_metrics(model: DetectorModel, sentences: Sequence[str], table: SyllableTable,
                      beta: float = DEFAULT_BETA, seed: int = 0) -> DetectionMetrics:
    """Flag precision/recall and mean LLS at injected-error vs clean positions."""
    err_lls, clean_lls = [], []
    flagged = true_flags = 0
    cases = inject_single_errors(sentences, table, seed)
    for noisy, pos in cases:
        rep = score(model, noisy, table, beta)
        for i, tok in enumerate(noisy):
            if not isinstance(tok, HanChar):
                continue
            (err_lls if i == pos else clean_lls).append(rep.lls[i])
            if rep.flagged[i]:
                flagged += 1
                true_flags += i == pos
    n_err = len(cases)
    return DetectionMetrics(
        precision=true_flags / flagged if flagged else 0.0,
        recall=true_flags / n_err if n_err else 0.0,
        mean_lls_error=float(np.mean(err_lls)) if err_lls else 0.0,
        mean_lls_clean=float(np.mean(clean_lls)) if clean_lls else 0.0,
        n_errors=n_err, n_flagged=flagged, n_true_flags=true_flags, n_clean_positions=len(clean_lls),
    )


# ---------------------------------------------------------------- persistence

def save_model(model: DetectorModel, path, extra: dict | None = None) -> None:
    meta = {
        "kind": "detector",
        "config": model.config.to_dict(),
        "in_vocab": list(model.in_vocab.itos),
        "out_vocab": list(model.out_vocab.itos),
    }
    if extra:
        meta["run"] = extra
    nnet.save_checkpoint(path, meta, model.params)


def load_model(path) -> DetectorModel:
    meta, params = nnet.load_checkpoint(path, lambda m: expected_shapes(nnet.ModelConfig(**m["config"])))
    if meta.get("kind") != "detector":
        raise nnet.CheckpointError(f"{path}: not a detector checkpoint")
    return DetectorModel(nnet.ModelConfig(**meta["config"]), params,
                         Vocabulary(tuple(meta["in_vocab"])), Vocabulary(tuple(meta["out_vocab"])))
