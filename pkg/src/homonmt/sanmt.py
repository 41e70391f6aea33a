"""Syllable-aware encoder-decoder translation: training recipes and beam search."""
from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import torch

from . import nnet
from .corpus import (BOS_ID, EOS_ID, PAD_ID, ParallelCorpus, Provenance, SentencePair, Vocabulary,
                     build_vocab, decode, encode)
from .noise import adversarial_corpus, augment_corpus, stream
from .pinyin import SyllableTable, Token, transcribe

log = logging.getLogger(__name__)


class TrainingMode(str, enum.Enum):
    BASELINE = "baseline"
    ROBUST = "robust"
    ADVERSARIAL = "adversarial"
    CPNMT = "cpnmt"


class EmptyInputError(ValueError):
    pass


def build_training_set(corpus: ParallelCorpus, table: SyllableTable, mode: TrainingMode,
                       seed: int = 0, copies: int = 3, ratio_sampler=None) -> ParallelCorpus:
    """Training data for one mode.

    baseline: the original pairs; robust: originals + ``copies`` syllable-mixed passes;
    adversarial: originals + ``copies`` homophone passes at the syllable-mixed positions;
    cpnmt: every source fully converted to syllables.
    """
    if corpus.provenance is not Provenance.OTTD:
        raise ValueError(f"expected original (OTTD) data, got {corpus.provenance.value}")
    mode = TrainingMode(mode)
    if mode is TrainingMode.BASELINE:
        return corpus.with_provenance(Provenance.OTTD)
    if mode is TrainingMode.ROBUST:
        return augment_corpus(corpus, table, copies, ratio_sampler, seed)
    if mode is TrainingMode.ADVERSARIAL:
        out, kept = adversarial_corpus(corpus, table, copies, ratio_sampler, seed)
        if kept:
            log.info("%d syllable-mix positions had no homophone and kept their character", kept)
        return out
    pairs = [SentencePair(tuple(transcribe(table, p.source)), p.target) for p in corpus.pairs]
    return ParallelCorpus(pairs, Provenance.MIX)


@dataclass
class NmtModel:
    config: nnet.ModelConfig
    params: nnet.Params
    src_vocab: Vocabulary
    tgt_vocab: Vocabulary
    mode: TrainingMode = TrainingMode.BASELINE

    def prepare_source(self, tokens: Sequence[Token], table: SyllableTable) -> list[Token]:
        """CPNMT models read syllables only; others take the tokens as given."""
        if self.mode is TrainingMode.CPNMT:
            return transcribe(table, tokens)
        return list(tokens)


def nmt_config(src_vocab: int, tgt_vocab: int, **overrides) -> nnet.ModelConfig:
    return nnet.ModelConfig(src_vocab=src_vocab, tgt_vocab=tgt_vocab, **overrides)


def init_params(cfg: nnet.ModelConfig, seed: int) -> nnet.Params:
    gen = torch.Generator().manual_seed(seed)
    params = nnet.init_encoder(cfg, gen)
    params.update(nnet.init_decoder(cfg, gen))
    return params


def expected_shapes(cfg: nnet.ModelConfig) -> dict[str, tuple]:
    return {k: tuple(v.shape) for k, v in init_params(cfg, 0).items()}


def _pad(seqs: list[list[int]]) -> torch.Tensor:
    width = max(len(s) for s in seqs)
    return torch.tensor([s + [PAD_ID] * (width - len(s)) for s in seqs], dtype=torch.long)


def seq2seq_logits(cfg: nnet.ModelConfig, params, src: torch.Tensor, tgt_in: torch.Tensor,
                   gen: torch.Generator | None = None) -> torch.Tensor:
    src_pad = src == PAD_ID
    memory = nnet.encoder_forward(cfg, params, src, src_pad, gen)
    hidden = nnet.decoder_forward(cfg, params, tgt_in, memory, src_pad, gen)
    return nnet.linear(hidden, params, "dec.out")


def encode_pairs(pairs: Sequence[SentencePair], src_vocab: Vocabulary, tgt_vocab: Vocabulary):
    src = [encode(src_vocab, p.source) for p in pairs]
    tgt = [[BOS_ID] + encode(tgt_vocab, p.target) + [EOS_ID] for p in pairs]
    return src, tgt


def batch_loss(cfg, params, src_ids, tgt_ids, idx, gen, smoothing):
    src = _pad([src_ids[i] for i in idx])
    tgt = _pad([tgt_ids[i] for i in idx])
    logits = seq2seq_logits(cfg, params, src, tgt[:, :-1], gen)
    return nnet.cross_entropy(logits, tgt[:, 1:], PAD_ID, smoothing)


def train_nmt(training_set: ParallelCorpus, table: SyllableTable, seed: int = 0,
              mode: TrainingMode = TrainingMode.BASELINE, train_cfg: nnet.TrainConfig | None = None,
              **model_overrides) -> tuple[NmtModel, list[dict]]:
    """Token-batched training; returns the model with the best held-out loss and the loss history."""
    if not len(training_set):
        raise ValueError("empty training set")
    train_cfg = train_cfg or nnet.TrainConfig(label_smoothing=0.1)
    src_vocab = build_vocab([training_set], "source", 1, table)
    tgt_vocab = build_vocab([training_set], "target", 1)
    cfg = nmt_config(len(src_vocab), len(tgt_vocab), **model_overrides)
    params = init_params(cfg, seed)

    src_ids, tgt_ids = encode_pairs(training_set.pairs, src_vocab, tgt_vocab)
    rng = stream(seed, 0xA11)
    n = len(src_ids)
    n_held = min(max(1, int(round(train_cfg.heldout_fraction * n))), 512) if n > 1 else 0
    perm = rng.permutation(n)
    held, train = perm[:n_held].tolist(), perm[n_held:].tolist() or perm.tolist()
    lengths = np.array([len(src_ids[i]) + len(tgt_ids[i]) for i in train])

    def epoch_batches(epoch):
        batches = nnet.length_batches(lengths, train_cfg.batch_tokens, stream(seed, 0xB47, epoch))
        return [[train[j] for j in b] for b in batches]

    def loss_on(idx, gen):
        return batch_loss(cfg, params, src_ids, tgt_ids, idx, gen, train_cfg.label_smoothing)

    held_batches = [held[i:i + 64] for i in range(0, len(held), 64)] or [train[:64]]

    def heldout_loss():
        total, count = 0.0, 0
        for idx in held_batches:
            total += batch_loss(cfg, params, src_ids, tgt_ids, idx, None, 0.0).item() * len(idx)
            count += len(idx)
        return total / count

    best, history = nnet.train_loop(params, epoch_batches, loss_on, heldout_loss, train_cfg, seed,
                                    log=log.info)
    for t in best.values():
        t.requires_grad_(False)
    return NmtModel(cfg, best, src_vocab, tgt_vocab, TrainingMode(mode)), history


# ---------------------------------------------------------------- decoding

@dataclass
class Hypothesis:
    ids: tuple[int, ...]
    logprob: float
    finished: bool = False

    @property
    def score(self) -> float:
        """Length-normalised log probability (length counts generated tokens incl. EOS)."""
        return self.logprob / max(1, len(self.ids) - 1)


def _step_logprobs(model: NmtModel, prefixes: list[tuple[int, ...]], memory, src_pad) -> torch.Tensor:
    ids = torch.tensor(prefixes, dtype=torch.long)
    k = len(prefixes)
    hidden = nnet.decoder_forward(model.config, model.params, ids, memory.expand(k, -1, -1),
                                  src_pad.expand(k, -1))
    return torch.log_softmax(nnet.linear(hidden[:, -1], model.params, "dec.out"), dim=-1)


def _encode_source(model: NmtModel, source: Sequence[Token]):
    if not source:
        raise EmptyInputError("empty source sequence")
    src = torch.tensor([encode(model.src_vocab, source)], dtype=torch.long)
    src_pad = src == PAD_ID
    memory = nnet.encoder_forward(model.config, model.params, src, src_pad)
    return memory, src_pad


def greedy_decode(model: NmtModel, source: Sequence[Token], max_out_len: int | None = None) -> Hypothesis:
    return _search(model, source, 1, max_out_len)


def _search(model: NmtModel, source: Sequence[Token], beam_size: int, max_out_len: int | None) -> Hypothesis:
    if beam_size < 1:
        raise ValueError("beam_size must be >= 1")
    max_out_len = 2 * len(source) + 8 if max_out_len is None else max_out_len
    max_out_len = min(max_out_len, model.config.max_len - 1)
    with torch.no_grad():
        memory, src_pad = _encode_source(model, source)
        alive = [Hypothesis((BOS_ID,), 0.0)]
        finished: list[Hypothesis] = []
        for t in range(max_out_len + 1):
            lp = _step_logprobs(model, [h.ids for h in alive], memory, src_pad).numpy()
            if t == max_out_len:
                # length cap reached: only EOS may follow
                allowed = np.full_like(lp, -np.inf)
                allowed[:, EOS_ID] = lp[:, EOS_ID]
                lp = allowed
            total = np.array([h.logprob for h in alive])[:, None] + lp
            flat = total.ravel()
            # highest score first; ties go to the lower (hypothesis, token id) index
            order = np.lexsort((np.arange(flat.size), -flat))[:beam_size]
            vocab = lp.shape[1]
            nxt = []
            for j in order.tolist():
                if not np.isfinite(flat[j]):
                    continue
                h, tok = divmod(j, vocab)
                hyp = Hypothesis(alive[h].ids + (tok,), float(flat[j]), tok == EOS_ID)
                (finished if hyp.finished else nxt).append(hyp)
            alive = nxt
            if len(finished) >= beam_size or not alive:
                break
    pool = finished or alive
    return max(pool, key=lambda h: (h.score, [-i for i in h.ids]))


def beam_search(model: NmtModel, source: Sequence[Token], beam_size: int = 4,
                max_out_len: int | None = None) -> Hypothesis:
    """Beam search with length normalisation; the greedy hypothesis always competes,
    so the result never scores below greedy decoding."""
    best = _search(model, source, beam_size, max_out_len)
    if beam_size > 1:
        greedy = _search(model, source, 1, max_out_len)
        if greedy.score > best.score:
            best = greedy
    return best


def translate(model: NmtModel, source: Sequence[Token], beam_size: int = 4,
              max_out_len: int | None = None) -> list[str]:
    best = beam_search(model, source, beam_size, max_out_len)
    ids = [i for i in best.ids[1:] if i != EOS_ID]
    return decode(model.tgt_vocab, ids)


def sequence_logprob(model: NmtModel, source: Sequence[Token], target_ids: Sequence[int]) -> float:
    """Log probability of BOS + ``target_ids`` under the model (for consistency checks)."""
    with torch.no_grad():
        memory, src_pad = _encode_source(model, source)
        ids = torch.tensor([[BOS_ID, *target_ids]], dtype=torch.long)
        hidden = nnet.decoder_forward(model.config, model.params, ids[:, :-1], memory, src_pad)
        lp = torch.log_softmax(nnet.linear(hidden, model.params, "dec.out"), dim=-1)
        return float(lp[0].gather(1, ids[0, 1:, None]).sum())


# ---------------------------------------------------------------- persistence

def save_model(model: NmtModel, path, extra: dict | None = None) -> None:
    meta = {
        "kind": "nmt",
        "mode": model.mode.value,
        "config": model.config.to_dict(),
        "src_vocab": list(model.src_vocab.itos),
        "tgt_vocab": list(model.tgt_vocab.itos),
    }
    if extra:
        meta["run"] = extra
    nnet.save_checkpoint(path, meta, model.params)


def load_model(path) -> NmtModel:
    meta, params = nnet.load_checkpoint(path, lambda m: expected_shapes(nnet.ModelConfig(**m["config"])))
    if meta.get("kind") != "nmt":
        raise nnet.CheckpointError(f"{path}: not a translation checkpoint")
    cfg = nnet.ModelConfig(**meta["config"])
    return NmtModel(cfg, params, Vocabulary(tuple(meta["src_vocab"])), Vocabulary(tuple(meta["tgt_vocab"])),
                    TrainingMode(meta["mode"]))
