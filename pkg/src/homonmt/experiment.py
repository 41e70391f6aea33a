"""End-to-end experiment: fixture data -> detector -> translators -> noise-ratio sweep."""
from __future__ import annotations

import json
import logging
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

from . import __version__, corpus, detector, fixture, nnet, sanmt
from .evaluation import System, run_sweep
from .pinyin import SyllableTable, parse_mixed, render_mixed, tokenize

log = logging.getLogger(__name__)

WORKED_EXAMPLE = "建议所小学"


@dataclass(frozen=True)
class Preset:
    sizes: fixture.FixtureSizes = fixture.FixtureSizes()
    detector_steps: int = 800
    nmt_steps: int = 1000
    lr: float = 1e-3
    warmup: int = 200
    batch_tokens: int = 1024
    eval_every: int = 250
    d_model: int = 64
    n_heads: int = 4
    d_ff: int = 256
    n_layers: int = 2
    dropout_rate: float = 0.1
    ratios: tuple[float, ...] = (0.1, 0.2, 0.3, 0.4, 0.5)
    beta: float = detector.DEFAULT_BETA
    beam_size: int = 4
    modes: tuple[str, ...] = ("baseline", "robust", "cpnmt")

    def model_overrides(self) -> dict:
        return dict(d_model=self.d_model, n_heads=self.n_heads, d_ff=self.d_ff, n_layers=self.n_layers,
                    n_dec_layers=self.n_layers, dropout_rate=self.dropout_rate)

    def train_config(self, steps: int, smoothing: float) -> nnet.TrainConfig:
        return nnet.TrainConfig(steps=steps, batch_tokens=self.batch_tokens, lr=self.lr, warmup=self.warmup,
                                eval_every=self.eval_every, label_smoothing=smoothing)

    def to_dict(self) -> dict:
        return asdict(self)


PRESETS = {
    "fixture": Preset(),
    # seconds-scale smoke run; too small for the directional results to hold
    "tiny": Preset(sizes=fixture.FixtureSizes(monolingual=120, detector_heldout=30, train=120, test=20),
                   detector_steps=30, nmt_steps=30, eval_every=15, d_model=16, n_heads=2, d_ff=32,
                   n_layers=1, ratios=(0.1, 0.3)),
}


@dataclass
class PipelineResult:
    out_dir: Path
    report: dict
    timings: dict = field(default_factory=dict)


def _write_lines(path: Path, lines) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for line in lines:
            fh.write(line + "\n")


def _write_json(path: Path, doc) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(json.dumps(doc, ensure_ascii=False, indent=1, sort_keys=True) + "\n")


def run_pipeline(out_dir, table: SyllableTable, preset: Preset, seed: int = 0, threads: int = 1,
                 config: dict | None = None) -> PipelineResult:
    """Build fixture data, train the detector and every translator, run the sweep.

    Everything written is a function of (preset, seed); ``config`` is echoed into each
    artifact verbatim.
    """
    out = Path(out_dir)
    (out / "data").mkdir(parents=True, exist_ok=True)
    echo = {"version": __version__, "seed": seed, "preset": preset.to_dict(), **(config or {})}
    timings: dict[str, float] = {}

    t0 = time.perf_counter()
    splits = fixture.build_fixture(seed, preset.sizes)
    _write_lines(out / "data" / "train.tsv", fixture.iter_lines(splits["train"]))
    _write_lines(out / "data" / "test.tsv", fixture.iter_lines(splits["test"]))
    _write_lines(out / "data" / "monolingual.txt", fixture.iter_lines(splits["monolingual"], False))
    _write_lines(out / "data" / "detector_heldout.txt", fixture.iter_lines(splits["detector_heldout"], False))
    train = corpus.load_parallel(out / "data" / "train.tsv", table)
    test = corpus.load_parallel(out / "data" / "test.tsv", table)
    timings["build"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    data, _ = detector.build_self_supervised_data([p.source for p in splits["monolingual"]], table)
    det, det_hist = detector.train_detector(data, table, seed, preset.train_config(preset.detector_steps, 0.0),
                                            **preset.model_overrides())
    detector.save_model(det, out / "detector.ckpt", echo)
    timings["train-detector"] = time.perf_counter() - t0
    t0 = time.perf_counter()
    metrics = detector.detection_metrics(det, [p.source for p in splits["detector_heldout"]], table,
                                         preset.beta, seed)
    timings["detector-eval"] = time.perf_counter() - t0
    _write_json(out / "detector_eval.json", {"config": echo, "metrics": metrics.to_dict(), "history": det_hist})
    log.info("detector precision %.3f recall %.3f", metrics.precision, metrics.recall)

    models = {}
    histories = {}
    for k, mode in enumerate(preset.modes):
        t0 = time.perf_counter()
        ts = sanmt.build_training_set(train, table, mode, seed)
        model, hist = sanmt.train_nmt(ts, table, seed + 1 + k, mode,
                                      preset.train_config(preset.nmt_steps, 0.1), **preset.model_overrides())
        sanmt.save_model(model, out / f"{mode}.ckpt", echo)
        models[mode] = model
        histories[mode] = hist
        timings[f"train-{mode}"] = time.perf_counter() - t0

    systems = []
    for mode, model in models.items():
        if mode == "robust":
            systems.append(System("sanmt", model, det, preset.beta, preset.beam_size))
            systems.append(System("robust-nodetector", model, None, preset.beta, preset.beam_size))
        else:
            systems.append(System(mode, model, None, preset.beta, preset.beam_size))
    t0 = time.perf_counter()
    report = run_sweep(systems, test, table, preset.ratios, seed, threads, {"config": echo})
    timings["sweep"] = time.perf_counter() - t0
    (out / "sweep.json").write_text(report.to_json(), encoding="utf-8", newline="\n")
    (out / "sweep.tsv").write_text(report.to_tsv(), encoding="utf-8", newline="\n")

    demo = {}
    if "robust" in models:
        rep = detector.score(det, tokenize(WORKED_EXAMPLE), table, preset.beta)
        mixed = detector.to_mixed(rep.tokens, rep, table)
        demo = {
            "input": WORKED_EXAMPLE,
            "lls": rep.to_dict()["lls"],
            "flagged": list(rep.flagged),
            "mixed": render_mixed(mixed),
            "translation": " ".join(sanmt.translate(models["robust"], mixed, preset.beam_size)),
            "translation_of_rendered": " ".join(sanmt.translate(
                models["robust"], parse_mixed(render_mixed(mixed), table), preset.beam_size)),
        }
    summary = {
        "config": echo,
        "detector": metrics.to_dict(),
        "sweep": {s: {r: c.score for r, c in row.items()} for s, row in report.cells.items()},
        "worked_example": demo,
        "nmt_history": histories,
    }
    _write_json(out / "report.json", summary)
    return PipelineResult(out, summary, timings)


def tiny_preset(**changes) -> Preset:
    return replace(PRESETS["tiny"], **changes)
