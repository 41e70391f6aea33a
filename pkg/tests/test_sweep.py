import json

import pytest

from homonmt import corpus, detector, evaluation, fixture, noise, sanmt
from homonmt.evaluation import System, corpus_hash, evaluate_system, run_sweep

TINY = dict(d_model=16, n_heads=2, d_ff=32, n_layers=1, n_dec_layers=1, dropout_rate=0.0)


@pytest.fixture(scope="module")
def setup(table):
    test = corpus.parse_parallel(fixture.iter_lines(fixture.generate(12, 9)), table)
    src_vocab = corpus.build_vocab([test], "source", 1, table)
    tgt_vocab = corpus.build_vocab([test], "target", 1)
    cfg = sanmt.nmt_config(len(src_vocab), len(tgt_vocab), **TINY)
    params = sanmt.init_params(cfg, 0)
    model = sanmt.NmtModel(cfg, params, src_vocab, tgt_vocab)
    dcfg = detector.detector_config(table, d_model=16, n_heads=2, d_ff=32, n_layers=1)
    det = detector.DetectorModel(dcfg, detector.init_params(dcfg, 0), detector.input_vocab(table),
                                 detector.output_vocab(table))
    return test, model, det


def test_clean_only_sweep_equals_direct_evaluation(table, setup):
    test, model, _ = setup
    report = run_sweep([System("base", model, beam_size=2)], test, table, [0])
    hyps = [sanmt.translate(model, p.source, 2) for p in test.pairs]
    direct = evaluation.bleu(hyps, [p.target for p in test.pairs])
    assert list(report.cells["base"]) == ["clean"]
    assert report.bleu_at("base", 0) == direct.score


def test_never_flagging_detector_is_the_identity(table, setup):
    test, model, det = setup
    systems = [System("plain", model, beam_size=2), System("guarded", model, det, beta=1e-300, beam_size=2)]
    report = run_sweep(systems, test, table, [0.2, 0.5], seed=3)
    for label in ("clean", "0.2", "0.5"):
        assert report.cells["plain"][label] == report.cells["guarded"][label]


def test_noisy_sets_are_shared_and_reproducible(table, setup):
    test, model, _ = setup
    systems = [System("a", model, beam_size=1), System("b", model, beam_size=2)]
    r1 = run_sweep(systems, test, table, [0.1, 0.3], seed=5)
    r2 = run_sweep(systems, test, table, [0.1, 0.3], seed=5)
    assert r1.to_json() == r2.to_json()
    assert r1.corpus_hashes["clean"] == corpus_hash(test)
    ant = noise.noisy_corpus(test, table, noise.NoiseSpec(0.3, 5))
    assert r1.corpus_hashes["0.3"] == corpus_hash(ant)
    assert r1.corpus_hashes["0.3"] != r1.corpus_hashes["clean"]


def test_grid_is_exactly_the_requested_ratios(table, setup):
    test, model, _ = setup
    report = run_sweep([System("m", model, beam_size=1)], test, table, [0.4, 0.1], seed=0)
    assert report.ratios == [0.4, 0.1]
    assert set(report.cells["m"]) == {"clean", "0.4", "0.1"}
    doc = json.loads(report.to_json())
    assert doc["metadata"]["smoothing"].startswith("add-one")
    tsv = report.to_tsv().splitlines()
    assert tsv[0].startswith("# ") and tsv[1] == "system\tclean\t0.4\t0.1"


def test_ratio_outside_unit_interval(table, setup):
    test, model, _ = setup
    with pytest.raises(ValueError):
        run_sweep([System("m", model)], test, table, [1.5])


def test_threads_do_not_change_results(table, setup):
    test, model, det = setup
    one, _ = evaluate_system(System("m", model, det, beam_size=2), test, table, threads=1)
    four, _ = evaluate_system(System("m", model, det, beam_size=2), test, table, threads=4)
    assert one == four
