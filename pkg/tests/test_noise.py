import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from homonmt import corpus, fixture, noise, pinyin
from homonmt.noise import Mode, NoiseSpec
from homonmt.pinyin import HanChar, Syllable


def toks(text):
    return pinyin.tokenize(text)


def test_noise_spec_bounds():
    with pytest.raises(ValueError):
        NoiseSpec(1.5)
    with pytest.raises(ValueError):
        NoiseSpec(0.1, seed=-1)


def test_select_positions_counts(table):
    sent = toks("建一所小学他们明天")
    k = len(noise.substitutable(sent, table, Mode.HOMOPHONE))
    assert k == 9
    rng = noise.stream(0)
    assert noise.select_positions(sent, 0.0, rng, table) == []
    assert noise.select_positions(sent, 1.0, rng, table) == list(range(9))
    ten = toks("建一所小学他们明天来")
    assert len(noise.select_positions(ten, 0.3, noise.stream(3), table)) == 3


def test_select_positions_deterministic(table):
    sent = toks("建一所小学他们明天来")
    a = noise.select_positions(sent, 0.5, noise.stream(11, 2), table)
    b = noise.select_positions(sent, 0.5, noise.stream(11, 2), table)
    assert a == b


def test_round_half_up():
    assert noise.substitution_count(0.05, 10) == 1
    assert noise.substitution_count(0.25, 10) == 3
    assert noise.substitution_count(0.1, 4) == 0


def test_make_ant_worked_example(small_table):
    sent = toks("建一所小学")
    # search for a seed whose draw reproduces the worked example
    for seed in range(200):
        noisy, recs = noise.make_ant(sent, small_table, NoiseSpec(1.0, seed), noise.stream(seed))
        # only 一 has homophones in the small table, so it is the single substitutable position
        assert [r.position for r in recs] == [1]
        if pinyin.render_plain(noisy) == "建议所小学":
            break
    else:
        pytest.fail("no seed produced 议")
    assert recs[0].original == HanChar("一") and recs[0].replacement == HanChar("议")


def test_make_ant_ratio_zero_and_singletons(table, small_table):
    sent = toks("建一所小学")
    assert noise.make_ant(sent, table, NoiseSpec(0.0, 1)) == (sent, [])
    singles = toks("建所小学")
    assert noise.make_ant(singles, small_table, NoiseSpec(1.0, 1))[0] == singles


def test_make_smtd_examples(table):
    sent = toks("建一所小学")
    mixed, recs = noise.make_smtd(sent, table, NoiseSpec(0.2, 0, Mode.SYLLABLE_MIX))
    assert len(recs) == 1 and mixed[recs[0].position] == Syllable(table.char_to_syllable[sent[recs[0].position].char])
    assert noise.make_smtd(sent, table, NoiseSpec(0.0, 0, Mode.SYLLABLE_MIX))[0] == sent
    two = [Syllable("jian"), Syllable("yi")] + sent[2:]
    assert pinyin.render_mixed(two) == "jian yi 所小学"


def test_make_smtd_unmapped(small_table):
    with pytest.raises(pinyin.UnmappedCharacterError):
        noise.make_smtd(toks("建国"), small_table, NoiseSpec(0.5, 0, Mode.SYLLABLE_MIX))


def test_mode_checked(table):
    with pytest.raises(ValueError):
        noise.make_ant(toks("建"), table, NoiseSpec(0.1, 0, Mode.SYLLABLE_MIX))
    with pytest.raises(ValueError):
        noise.make_smtd(toks("建"), table, NoiseSpec(0.1, 0, Mode.HOMOPHONE))


def test_make_natd(small_table):
    orig = toks("建一所小学")
    rec = noise.SubstitutionRecord(1, HanChar("一"), Syllable("yi"))
    mixed = orig[:1] + [Syllable("yi")] + orig[2:]
    seen = set()
    for seed in range(50):
        out, kept = noise.make_natd(mixed, orig, [rec], small_table, noise.stream(seed))
        assert kept == 0 and out[0] == orig[0] and out[2:] == orig[2:]
        seen.add(out[1].char)
    assert seen == {"议", "医"}
    assert noise.make_natd(orig, orig, [], small_table, noise.stream(0)) == (orig, 0)
    lone = noise.SubstitutionRecord(0, HanChar("建"), Syllable("jian"))
    out, kept = noise.make_natd([Syllable("jian")] + orig[1:], orig, [lone], small_table, noise.stream(0))
    assert out == orig and kept == 1


def _corpus(table, n, seed=0):
    return corpus.parse_parallel(fixture.iter_lines(fixture.generate(n, seed)), table)


def test_augment_corpus_sizes(table):
    c = _corpus(table, 100)
    out = noise.augment_corpus(c, table, copies=3, seed=1)
    assert len(out) == 400 and out.provenance is corpus.Provenance.MIX
    assert [p.source for p in out.pairs[:100]] == [p.source for p in c.pairs]
    zero = noise.augment_corpus(c, table, copies=0)
    assert [p.source for p in zero.pairs] == [p.source for p in c.pairs] and zero.provenance is corpus.Provenance.MIX
    degenerate = noise.augment_corpus(c, table, copies=3, ratio_sampler=lambda rng: 0.0)
    assert [p.source for p in degenerate.pairs] == [p.source for p in c.pairs] * 4


def test_augment_deterministic(table):
    c = _corpus(table, 50)
    a = noise.augment_corpus(c, table, seed=9)
    b = noise.augment_corpus(c, table, seed=9)
    assert a.pairs == b.pairs
    assert noise.augment_corpus(c, table, seed=10).pairs != a.pairs


def test_adversarial_reuses_syllable_positions(table):
    c = _corpus(table, 40)
    smtd = noise.augment_corpus(c, table, seed=5)
    natd, _ = noise.adversarial_corpus(c, table, seed=5)
    for s, n in zip(smtd.pairs, natd.pairs):
        assert s.positions == n.positions
        for pos in n.positions:
            assert isinstance(n.source[pos], HanChar)
            assert s.source[pos] == Syllable(table.char_to_syllable[n.source[pos].char])


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**32), ratio=st.floats(0, 1))
def test_builders_preserve_length_and_homophony(table, seed, ratio):
    sent = toks("医生明天在北京建一所新小学")
    noisy, recs = noise.make_ant(sent, table, NoiseSpec(ratio, seed))
    assert len(noisy) == len(sent)
    for r in recs:
        assert r.original != r.replacement
        assert table.char_to_syllable[r.original.char] == table.char_to_syllable[r.replacement.char]
        assert noisy[r.position] == r.replacement
    mixed, _ = noise.make_smtd(sent, table, NoiseSpec(ratio, seed, Mode.SYLLABLE_MIX))
    assert len(mixed) == len(sent)
    assert pinyin.transcribe(table, mixed) == pinyin.transcribe(table, sent)


def test_empirical_rate(table):
    sents = [toks(p.source) for p in fixture.generate(1500, 8)]
    c = corpus.ParallelCorpus([corpus.SentencePair(tuple(s), ("x",)) for s in sents])
    out = noise.noisy_corpus(c, table, NoiseSpec(0.3, 4))
    k = sum(len(noise.substitutable(s, table, Mode.HOMOPHONE)) for s in sents)
    n = sum(len(p.positions) for p in out.pairs)
    assert k >= 10_000
    assert abs(n / k - 0.3) <= 0.02


def test_sidecar(tmp_path, table):
    c = noise.noisy_corpus(_corpus(table, 5), table, NoiseSpec(0.5, 3))
    path = tmp_path / "side.json"
    noise.write_sidecar(path, c, {"seed": 3, "ratio": 0.5})
    import json
    doc = json.loads(path.read_text(encoding="utf-8"))
    assert doc["provenance"] == "ANT" and doc["config"]["seed"] == 3
    assert doc["positions"] == [list(p.positions) for p in c.pairs]
