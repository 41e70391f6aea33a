import itertools
import math

import numpy as np
import pytest
import torch

from homonmt import corpus, fixture, nnet, noise, pinyin, sanmt
from homonmt.corpus import BOS_ID, EOS_ID, Provenance, SentencePair, Vocabulary
from homonmt.pinyin import HanChar, Syllable
from homonmt.sanmt import TrainingMode

TINY = dict(d_model=16, n_heads=2, d_ff=32, n_layers=1, n_dec_layers=1, dropout_rate=0.0)


def fixture_corpus(table, n=100, seed=0):
    return corpus.parse_parallel(fixture.iter_lines(fixture.generate(n, seed)), table)


def random_model(table, src_words=("jian", "yi", "suo"), tgt_words=("a", "b"), seed=0, **overrides):
    src_vocab = Vocabulary((*corpus.RESERVED, *src_words))
    tgt_vocab = Vocabulary((*corpus.RESERVED, *tgt_words))
    cfg = sanmt.nmt_config(len(src_vocab), len(tgt_vocab), **{**TINY, **overrides})
    params = sanmt.init_params(cfg, seed)
    for t in params.values():
        t.requires_grad_(False)
    return sanmt.NmtModel(cfg, params, src_vocab, tgt_vocab)


# ---------------------------------------------------------------- training sets

def test_training_set_sizes(table):
    oc = fixture_corpus(table)
    assert len(oc) == 100
    sizes = {m: len(sanmt.build_training_set(oc, table, m, seed=1)) for m in TrainingMode}
    assert sizes == {TrainingMode.BASELINE: 100, TrainingMode.ROBUST: 400,
                     TrainingMode.ADVERSARIAL: 400, TrainingMode.CPNMT: 100}


def test_robust_set_keeps_originals_first(table):
    oc = fixture_corpus(table, 20)
    ts = sanmt.build_training_set(oc, table, "robust", seed=3)
    assert [p.source for p in ts.pairs[:20]] == [p.source for p in oc.pairs]
    assert [p.target for p in ts.pairs[20:40]] == [p.target for p in oc.pairs]
    assert any(isinstance(t, Syllable) for p in ts.pairs[20:] for t in p.source)


def test_adversarial_set_has_only_characters(table):
    oc = fixture_corpus(table, 20)
    ts = sanmt.build_training_set(oc, table, "adversarial", seed=3)
    assert all(not isinstance(t, Syllable) for p in ts.pairs for t in p.source)
    for orig, noisy in zip(oc.pairs * 3, ts.pairs[20:]):
        assert pinyin.transcribe(table, noisy.source) == pinyin.transcribe(table, orig.source)


def test_cpnmt_source_is_all_syllables(table):
    oc = corpus.parse_parallel(["建一所小学\tbuild a primary school"], table)
    ts = sanmt.build_training_set(oc, table, TrainingMode.CPNMT)
    assert pinyin.render_mixed(ts.pairs[0].source) == "jian yi suo xiao xue"


def test_training_set_requires_original_data(table):
    oc = fixture_corpus(table, 5).with_provenance(Provenance.ANT)
    with pytest.raises(ValueError):
        sanmt.build_training_set(oc, table, "robust")


def test_cpnmt_model_transcribes_its_input(table):
    model = random_model(table)
    model.mode = TrainingMode.CPNMT
    assert model.prepare_source(pinyin.tokenize("建一"), table) == [Syllable("jian"), Syllable("yi")]


# ---------------------------------------------------------------- decoding

def test_empty_input_is_an_error(table):
    with pytest.raises(sanmt.EmptyInputError):
        sanmt.translate(random_model(table), [])


def test_beam_one_is_greedy(table):
    model = random_model(table, seed=4)
    src = [Syllable("jian"), Syllable("yi")]
    assert sanmt.beam_search(model, src, 1).ids == sanmt.greedy_decode(model, src).ids


def test_max_out_len_one_emits_at_most_one_token(table):
    model = random_model(table, seed=2)
    for beam in (1, 3):
        hyp = sanmt.beam_search(model, [Syllable("suo")], beam, max_out_len=1)
        assert hyp.ids[0] == BOS_ID and hyp.ids[-1] == EOS_ID
        assert len(hyp.ids) <= 3


@pytest.mark.parametrize("seed", range(6))
def test_beam_never_scores_below_greedy(table, seed):
    model = random_model(table, tgt_words=("a", "b", "c", "d"), seed=seed)
    src = [Syllable("jian"), Syllable("suo"), Syllable("yi")]
    greedy = sanmt.greedy_decode(model, src)
    for beam in (2, 4, 8):
        assert sanmt.beam_search(model, src, beam).score >= greedy.score - 1e-12


def test_hypothesis_logprob_matches_rescoring(table):
    model = random_model(table, seed=5)
    src = [Syllable("yi"), Syllable("jian")]
    hyp = sanmt.beam_search(model, src, 3)
    assert hyp.logprob == pytest.approx(sanmt.sequence_logprob(model, src, hyp.ids[1:]), abs=1e-9)


@pytest.mark.parametrize("seed", range(4))
def test_wide_beam_matches_exhaustive_search(table, seed):
    """With the beam wider than the search space, beam search is exhaustive."""
    model = random_model(table, seed=seed)
    src = [Syllable("jian"), Syllable("yi")]
    cap = 2
    V = len(model.tgt_vocab)
    best, best_seq = -math.inf, None
    for length in range(cap + 1):
        for prefix in itertools.product([i for i in range(V) if i != EOS_ID], repeat=length):
            seq = (*prefix, EOS_ID)
            s = sanmt.sequence_logprob(model, src, seq) / len(seq)
            if s > best + 1e-12:
                best, best_seq = s, seq
    hyp = sanmt.beam_search(model, src, beam_size=V ** cap + V, max_out_len=cap)
    assert hyp.ids[1:] == best_seq
    assert hyp.score == pytest.approx(best, abs=1e-9)


def test_decoding_is_deterministic(table):
    model = random_model(table, tgt_words=("a", "b", "c"), seed=9)
    src = [Syllable("jian"), Syllable("yi"), Syllable("suo")]
    assert sanmt.translate(model, src) == sanmt.translate(model, src)


# ---------------------------------------------------------------- training

def test_training_is_deterministic(table):
    oc = fixture_corpus(table, 30)
    cfg = nnet.TrainConfig(steps=6, batch_tokens=128, lr=1e-3, warmup=2, eval_every=3)
    a, ha = sanmt.train_nmt(oc, table, seed=3, train_cfg=cfg, **TINY)
    b, hb = sanmt.train_nmt(oc, table, seed=3, train_cfg=cfg, **TINY)
    assert ha == hb
    assert all(torch.equal(a.params[k], b.params[k]) for k in a.params)


def test_memorizes_a_single_pair(table):
    oc = corpus.parse_parallel(["建一所小学\tbuild a primary school"], table)
    cfg = nnet.TrainConfig(steps=150, batch_tokens=64, lr=3e-3, warmup=10, eval_every=50)
    model, _ = sanmt.train_nmt(oc, table, seed=0, train_cfg=cfg, **TINY)
    assert sanmt.translate(model, oc.pairs[0].source) == ["build", "a", "primary", "school"]


def test_learns_a_copy_language(table):
    """Characters in, their syllables out: exact-match accuracy on unseen strings."""
    chars = list("建一所小学请拼写")
    rng = np.random.default_rng(0)

    def sample(n):
        out = []
        for _ in range(n):
            s = "".join(rng.choice(chars, size=int(rng.integers(2, 6))))
            out.append(f"{s}\t{pinyin.render_mixed(pinyin.transcribe(table, pinyin.tokenize(s)))}")
        return out

    train = corpus.parse_parallel(sample(600), table)
    test = corpus.parse_parallel(sample(60), table)
    cfg = nnet.TrainConfig(steps=500, batch_tokens=512, lr=3e-3, warmup=50, eval_every=100)
    model, hist = sanmt.train_nmt(train, table, seed=0, train_cfg=cfg,
                                  d_model=32, n_heads=2, d_ff=64, n_layers=1, n_dec_layers=1, dropout_rate=0.0)
    assert hist[-1]["heldout_loss"] < hist[0]["heldout_loss"]
    exact = np.mean([sanmt.translate(model, p.source, beam_size=2) == list(p.target) for p in test.pairs])
    assert exact > 0.9


def test_checkpoint_roundtrip(table, tmp_path):
    model = random_model(table, seed=1)
    model.mode = TrainingMode.ROBUST
    path = tmp_path / "m.ckpt"
    sanmt.save_model(model, path, {"note": "x"})
    back = sanmt.load_model(path)
    assert back.mode is TrainingMode.ROBUST
    assert back.src_vocab.itos == model.src_vocab.itos and back.tgt_vocab.itos == model.tgt_vocab.itos
    src = [Syllable("jian")]
    assert sanmt.translate(back, src) == sanmt.translate(model, src)


def test_loading_wrong_kind_fails(table, tmp_path):
    path = tmp_path / "d.ckpt"
    nnet.save_checkpoint(path, {"kind": "detector", "config": nnet.ModelConfig().to_dict()}, {})
    with pytest.raises(nnet.CheckpointError):
        sanmt.load_model(path)
