"""Command-line interface: ``homonmt <subcommand> [options]``.

Every subcommand accepts ``--seed``, ``--threads``, ``--table`` and ``--config``. The config
file holds flat ``key = value`` lines whose keys are option names (``beam-size`` or
``beam_size``); explicit flags win over the file, the file wins over built-in defaults.

Failures print one line to stderr, ``homonmt: error[usage]: ...`` (exit 2) or
``homonmt: error[runtime]: <Type>: ...`` (exit 1).
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from dataclasses import replace
from pathlib import Path

import torch

from . import __version__, corpus, detector, experiment, nnet, noise, sanmt
from .evaluation import System, evaluate_system, run_sweep
from .pinyin import (SyllableTable, default_table, load_table, parse_mixed, render_mixed,
                     tokenize, transcribe)

log = logging.getLogger("homonmt")

EXIT_RUNTIME = 1
EXIT_USAGE = 2
# options that never influence outputs and so stay out of the echoed config
_NOT_ECHOED = {"func", "config", "verbose", "threads", "command"}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def existing_file(value: str) -> str:
    if not Path(value).is_file():
        raise argparse.ArgumentTypeError(f"no such file: {value}")
    return value


def probability(value: str) -> float:
    v = float(value)
    if not 0.0 <= v <= 1.0:
        raise argparse.ArgumentTypeError(f"{value} is outside [0, 1]")
    return v


def open_unit(value: str) -> float:
    v = float(value)
    if not 0.0 < v < 1.0:
        raise argparse.ArgumentTypeError(f"{value} is outside (0, 1)")
    return v


def positive_int(value: str) -> int:
    v = int(value)
    if v < 1:
        raise argparse.ArgumentTypeError(f"{value} must be >= 1")
    return v


# ---------------------------------------------------------------- helpers

def _read_lines(path) -> list[str]:
    with open(path, encoding="utf-8", newline="") as fh:
        return [line.rstrip("\n").rstrip("\r") for line in fh]


def _write_text(path, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _write_json(path, doc) -> None:
    _write_text(path, json.dumps(doc, ensure_ascii=False, indent=1, sort_keys=True) + "\n")


def _echo(args) -> dict:
    cfg = {k: v for k, v in sorted(vars(args).items()) if k not in _NOT_ECHOED}
    return {"command": args.command, "version": __version__, **cfg}


def _table(args) -> SyllableTable:
    return load_table(args.table) if args.table else default_table()


def _meta_sidecar(path, args, **extra) -> None:
    _write_json(f"{path}.json", {"config": _echo(args), **extra})


def _source_column(line: str) -> str:
    return line.split("\t", 1)[0]


def _train_config(args, smoothing: float) -> nnet.TrainConfig:
    return nnet.TrainConfig(steps=args.steps, batch_tokens=args.batch_tokens, lr=args.lr, warmup=args.warmup,
                            eval_every=args.eval_every, label_smoothing=smoothing)


def _model_overrides(args) -> dict:
    return dict(d_model=args.d_model, n_heads=args.n_heads, d_ff=args.d_ff, n_layers=args.n_layers,
                dropout_rate=args.dropout)


# ---------------------------------------------------------------- subcommands

def cmd_convert(args) -> None:
    table = _table(args)
    out = []
    for lineno, line in enumerate(_read_lines(args.input), 1):
        try:
            out.append(render_mixed(transcribe(table, tokenize(line))))
        except KeyError as exc:
            raise ValueError(f"line {lineno}: {exc}") from None
    _write_text(args.output, "".join(s + "\n" for s in out))
    _meta_sidecar(args.output, args)


def cmd_inject_noise(args) -> None:
    """Line-wise noise; lines that receive no substitution are copied through untouched."""
    table = _table(args)
    spec = noise.NoiseSpec(args.ratio, args.seed, noise.Mode(args.mode))
    build = noise.make_ant if spec.mode is noise.Mode.HOMOPHONE else noise.make_smtd
    out, positions = [], []
    for i, line in enumerate(_read_lines(args.input)):
        src, sep, rest = line.partition("\t")
        toks, recs = build(parse_mixed(src, table), table, spec, noise.stream(args.seed, i))
        positions.append([r.position for r in recs])
        out.append(line if not recs else render_mixed(toks) + sep + rest)
    _write_text(args.output, "".join(s + "\n" for s in out))
    prov = corpus.Provenance.ANT if spec.mode is noise.Mode.HOMOPHONE else corpus.Provenance.SMTD
    _meta_sidecar(args.output, args, provenance=prov.value, positions=positions,
                  ratio_policy={"ratio": args.ratio, "count": "round(ratio * k), half up"})


def cmd_augment(args) -> None:
    table = _table(args)
    data = corpus.load_parallel(args.input, table)
    if args.kind == "smtd":
        aug = noise.augment_corpus(data, table, args.copies, seed=args.seed)
    else:
        aug, kept = noise.adversarial_corpus(data, table, args.copies, seed=args.seed)
        log.info("%d positions had no homophone and kept their character", kept)
    corpus.save_parallel(aug, args.output)
    noise.write_sidecar(f"{args.output}.json", aug, {
        **_echo(args), "ratio_policy": "per-sentence ratio uniform over " + ",".join(map(str, noise.DEFAULT_RATIOS)),
    })


def cmd_train_detector(args) -> None:
    table = _table(args)
    sentences = [_source_column(l) for l in _read_lines(args.input) if l.strip()]
    data, dropped = detector.build_self_supervised_data(sentences, table)
    model, hist = detector.train_detector(data, table, args.seed, _train_config(args, 0.0), **_model_overrides(args))
    detector.save_model(model, args.output, {**_echo(args), "history": hist, "dropped": dropped})


def cmd_detect(args) -> None:
    table = _table(args)
    model = detector.load_model(args.detector)
    records = []
    for line in _read_lines(args.input):
        toks = parse_mixed(_source_column(line), table)
        rep = detector.score(model, toks, table, args.beta)
        d = rep.to_dict()
        records.append({"tokens": d["tokens"], "lls": d["lls"], "flags": d["flagged"], "unknown": d["unknown"],
                        "mixed": render_mixed(detector.to_mixed(toks, rep, table))})
    _write_text(args.output, "".join(json.dumps(r, ensure_ascii=False, sort_keys=True) + "\n" for r in records))
    _meta_sidecar(args.output, args)


def cmd_train_nmt(args) -> None:
    table = _table(args)
    data = corpus.load_parallel(args.train, table)
    ts = sanmt.build_training_set(data, table, args.mode, args.seed, args.copies)
    model, hist = sanmt.train_nmt(ts, table, args.seed, args.mode, _train_config(args, args.label_smoothing),
                                  n_dec_layers=args.n_layers, **_model_overrides(args))
    sanmt.save_model(model, args.output, {**_echo(args), "history": hist})


def _system(name: str, model_path: str, det_path: str | None, args) -> System:
    det = detector.load_model(det_path) if det_path else None
    return System(name, sanmt.load_model(model_path), det, args.beta, args.beam_size)


def cmd_translate(args) -> None:
    table = _table(args)
    system = _system("cli", args.model, args.detector, args)
    out = []
    for line in _read_lines(args.input):
        toks = parse_mixed(_source_column(line), table)
        out.append(" ".join(system.translate(toks, table)) if toks else "")
    _write_text(args.output, "".join(s + "\n" for s in out))
    _meta_sidecar(args.output, args)


def cmd_evaluate(args) -> None:
    table = _table(args)
    test = corpus.load_parallel(args.test, table)
    if args.ratio > 0:
        test = noise.noisy_corpus(test, table, noise.NoiseSpec(args.ratio, args.seed, noise.Mode.HOMOPHONE))
    system = _system("cli", args.model, args.detector, args)
    score, hyps = evaluate_system(system, test, table, args.threads)
    _write_json(args.output, {"config": _echo(args), "bleu": score.to_dict(),
                              "hypotheses": [" ".join(h) for h in hyps]})


def cmd_sweep(args) -> None:
    table = _table(args)
    test = corpus.load_parallel(args.test, table)
    systems = []
    for spec in args.system:
        name, sep, paths = spec.partition("=")
        if not sep or not name:
            raise UsageError(f"--system expects NAME=MODEL[,DETECTOR], got {spec!r}")
        model_path, _, det_path = paths.partition(",")
        for p in filter(None, (model_path, det_path)):
            if not Path(p).is_file():
                raise UsageError(f"no such file: {p}")
        systems.append(_system(name, model_path, det_path or None, args))
    report = run_sweep(systems, test, table, args.ratios, args.seed, args.threads, {"config": _echo(args)})
    _write_text(f"{args.output}.json", report.to_json())
    _write_text(f"{args.output}.tsv", report.to_tsv())


def cmd_pipeline(args) -> None:
    table = _table(args)
    preset = experiment.PRESETS[args.preset]
    changes = {k: getattr(args, k) for k in ("detector_steps", "nmt_steps") if getattr(args, k) is not None}
    preset = replace(preset, **changes)
    cfg = {k: v for k, v in _echo(args).items() if k not in ("seed", "version")}
    result = experiment.run_pipeline(args.output, table, preset, args.seed, args.threads, cfg)
    # wall-clock timings go to stderr only, never into artifacts
    print("timings " + json.dumps({k: round(v, 2) for k, v in result.timings.items()}, sort_keys=True),
          file=sys.stderr)
    print((Path(args.output) / "sweep.tsv").read_text(encoding="utf-8"), end="")


# ---------------------------------------------------------------- parser

def _common(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("common options")
    g.add_argument("--seed", type=int, default=0, help="master seed; all randomness derives from it (default 0)")
    g.add_argument("--threads", type=positive_int, default=os.cpu_count() or 1,
                   help="sentence-level worker threads; results do not depend on it (default: all cores)")
    g.add_argument("--table", type=existing_file, default=None,
                   help="character<TAB>syllable table (default: the shipped GB2312 level-1 table)")
    g.add_argument("--config", type=existing_file, default=None,
                   help="flat key = value file supplying defaults for any option")
    g.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")


def _model_opts(p: argparse.ArgumentParser, steps: int) -> None:
    g = p.add_argument_group("model and training")
    g.add_argument("--steps", type=positive_int, default=steps, help=f"optimizer steps (default {steps})")
    g.add_argument("--lr", type=float, default=1e-3, help="peak learning rate (default 1e-3)")
    g.add_argument("--warmup", type=int, default=200, help="linear warmup steps (default 200)")
    g.add_argument("--batch-tokens", type=positive_int, default=1024, help="token budget per batch (default 1024)")
    g.add_argument("--eval-every", type=positive_int, default=250, help="held-out evaluation period in steps")
    g.add_argument("--d-model", type=positive_int, default=64, help="model width (default 64)")
    g.add_argument("--n-heads", type=positive_int, default=4, help="attention heads (default 4)")
    g.add_argument("--d-ff", type=positive_int, default=256, help="feed-forward width (default 256)")
    g.add_argument("--n-layers", type=int, default=2, help="layers per stack (default 2)")
    g.add_argument("--dropout", type=float, default=0.1, help="dropout rate (default 0.1)")


def _decode_opts(p: argparse.ArgumentParser) -> None:
    p.add_argument("--model", type=existing_file, help="translation checkpoint (required)")
    p.add_argument("--detector", type=existing_file, default=None,
                   help="detector checkpoint; when given, flagged characters are rewritten first")
    p.add_argument("--beta", type=open_unit, default=detector.DEFAULT_BETA, help="flag threshold (default 0.1)")
    p.add_argument("--beam-size", type=positive_int, default=4, help="beam width (default 4)")


REQUIRED = {
    "convert": ("input", "output"),
    "inject-noise": ("input", "output", "ratio"),
    "augment": ("input", "output"),
    "train-detector": ("input", "output"),
    "detect": ("detector", "input", "output"),
    "train-nmt": ("train", "output"),
    "translate": ("model", "input", "output"),
    "evaluate": ("model", "test", "output"),
    "sweep": ("system", "test", "output"),
    "pipeline": ("output",),
}


def build_parser() -> tuple[argparse.ArgumentParser, dict[str, argparse.ArgumentParser]]:
    parser = _Parser(prog="homonmt", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=f"homonmt {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    subs = {}

    def add(name, func, help_):
        p = sub.add_parser(name, help=help_, description=help_)
        p.set_defaults(func=func)
        _common(p)
        subs[name] = p
        return p

    p = add("convert", cmd_convert, "transcribe every Chinese character of each line to its syllable")
    p.add_argument("--input", type=existing_file, help="UTF-8 text, one sentence per line (required)")
    p.add_argument("--output", help="output text file; a .json sidecar records the config (required)")

    p = add("inject-noise", cmd_inject_noise, "substitute a fraction of characters with homophones or syllables")
    p.add_argument("--input", type=existing_file, help="sentences or source<TAB>target pairs (required)")
    p.add_argument("--output", help="noisy copy of the input; positions go to <output>.json (required)")
    p.add_argument("--ratio", type=probability, help="fraction of substitutable characters to replace (required)")
    p.add_argument("--mode", choices=[m.value for m in noise.Mode], default="homophone",
                   help="homophone characters (test noise) or syllables (training noise)")

    p = add("augment", cmd_augment, "append syllable-mixed (or homophone) copies of a parallel corpus")
    p.add_argument("--input", type=existing_file, help="source<TAB>target corpus (required)")
    p.add_argument("--output", help="augmented corpus; positions go to <output>.json (required)")
    p.add_argument("--copies", type=int, default=3, help="noisy passes over the corpus (default 3)")
    p.add_argument("--kind", choices=["smtd", "natd"], default="smtd",
                   help="smtd: syllables at the chosen positions; natd: homophones at the same positions")

    p = add("train-detector", cmd_train_detector, "train the syllable-to-character homophone detector")
    p.add_argument("--input", type=existing_file, help="monolingual text; a TAB ends the sentence (required)")
    p.add_argument("--output", help="detector checkpoint path (required)")
    _model_opts(p, 800)

    p = add("detect", cmd_detect, "score characters and rewrite likely homophone errors to syllables")
    p.add_argument("--detector", type=existing_file, help="detector checkpoint (required)")
    p.add_argument("--input", type=existing_file, help="text lines (mixed transcripts allowed) (required)")
    p.add_argument("--output", help="JSON lines: tokens, lls, flags, mixed (required)")
    p.add_argument("--beta", type=open_unit, default=detector.DEFAULT_BETA,
                   help="flag a character when its probability is below beta (default 0.1)")

    p = add("train-nmt", cmd_train_nmt, "train a translation model")
    p.add_argument("--train", type=existing_file, help="source<TAB>target corpus (required)")
    p.add_argument("--output", help="checkpoint path (required)")
    p.add_argument("--mode", choices=[m.value for m in sanmt.TrainingMode], default="robust",
                   help="training recipe (default robust)")
    p.add_argument("--copies", type=int, default=3, help="noisy passes for robust/adversarial (default 3)")
    p.add_argument("--label-smoothing", type=float, default=0.1, help="label smoothing (default 0.1)")
    _model_opts(p, 1000)

    p = add("translate", cmd_translate, "translate mixed-transcript lines")
    _decode_opts(p)
    p.add_argument("--input", type=existing_file, help="one source per line (required)")
    p.add_argument("--output", help="one translation per line (required)")

    p = add("evaluate", cmd_evaluate, "BLEU of one system on one test corpus")
    _decode_opts(p)
    p.add_argument("--test", type=existing_file, help="source<TAB>reference corpus (required)")
    p.add_argument("--ratio", type=probability, default=0.0, help="homophone noise ratio applied first (default 0)")
    p.add_argument("--output", help="JSON report (required)")

    p = add("sweep", cmd_sweep, "BLEU grid over systems and noise ratios")
    p.add_argument("--system", action="append", metavar="NAME=MODEL[,DETECTOR]",
                   help="a system to evaluate; repeat for several (required)")
    p.add_argument("--test", type=existing_file, help="clean source<TAB>reference corpus (required)")
    p.add_argument("--ratios", type=probability, nargs="+", default=list(noise.DEFAULT_RATIOS),
                   help="noise ratios (default 0.1 0.2 0.3 0.4 0.5)")
    p.add_argument("--beta", type=open_unit, default=detector.DEFAULT_BETA, help="flag threshold (default 0.1)")
    p.add_argument("--beam-size", type=positive_int, default=4, help="beam width (default 4)")
    p.add_argument("--output", help="report prefix; writes PREFIX.json and PREFIX.tsv (required)")

    p = add("pipeline", cmd_pipeline, "fixture data, detector, translators and the robustness sweep in one run")
    p.add_argument("--preset", choices=sorted(experiment.PRESETS), default="fixture", help="experiment size")
    p.add_argument("--output", help="run directory (required)")
    p.add_argument("--detector-steps", type=positive_int, default=None, help="override the preset")
    p.add_argument("--nmt-steps", type=positive_int, default=None, help="override the preset")
    return parser, subs


def _read_config(path: str) -> dict[str, str]:
    values = {}
    for lineno, raw in enumerate(_read_lines(path), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise UsageError(f"{path}:{lineno}: expected key = value")
        values[key.strip().replace("-", "_")] = value.strip()
    return values


def _apply_config(sub: argparse.ArgumentParser, values: dict[str, str]) -> None:
    actions = {a.dest: a for a in sub._actions if a.dest not in ("help", "config")}
    defaults = {}
    for key, raw in values.items():
        action = actions.get(key)
        if action is None:
            raise UsageError(f"unknown config key: {key}")
        try:
            if isinstance(action, argparse._StoreTrueAction):
                if raw.lower() not in ("true", "false", "1", "0", "yes", "no"):
                    raise ValueError(raw)
                value = raw.lower() in ("true", "1", "yes")
            else:
                conv = action.type or str
                items = raw.split() if action.nargs in ("+", "*") or isinstance(action, argparse._AppendAction) else [raw]
                value = [conv(v) for v in items]
                if action.choices is not None and any(v not in action.choices for v in value):
                    raise ValueError(f"choose from {', '.join(map(str, action.choices))}")
                if action.nargs not in ("+", "*") and not isinstance(action, argparse._AppendAction):
                    value = value[0]
        except (ValueError, argparse.ArgumentTypeError) as exc:
            raise UsageError(f"config key {key}: {exc}") from None
        defaults[key] = value
    sub.set_defaults(**defaults)


def parse_args(argv: list[str]) -> argparse.Namespace:
    parser, subs = build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        raise UsageError("a subcommand is required")
    if args.config:
        _apply_config(subs[args.command], _read_config(args.config))
        args = parser.parse_args(argv)
    missing = [k for k in REQUIRED[args.command] if getattr(args, k) is None]
    if missing:
        raise UsageError("missing required option(s): " + ", ".join("--" + m.replace("_", "-") for m in missing))
    return args


def _one_line(msg: str) -> str:
    return " ".join(str(msg).split())


def main(argv: list[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = parse_args(argv)
    except UsageError as exc:
        print(f"homonmt: error[usage]: {_one_line(exc)}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr,
                        format="%(asctime)s %(name)s %(message)s")
    # intra-op parallelism changes float summation order; keep it fixed for reproducibility
    torch.set_num_threads(1)
    t0 = time.perf_counter()
    try:
        args.func(args)
    except UsageError as exc:
        print(f"homonmt: error[usage]: {_one_line(exc)}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # noqa: BLE001 - every failure becomes one parsable line
        print(f"homonmt: error[runtime]: {type(exc).__name__}: {_one_line(exc)}", file=sys.stderr)
        return EXIT_RUNTIME
    log.info("%s finished in %.1fs", args.command, time.perf_counter() - t0)
    return 0


if __name__ == "__main__":
    sys.exit(main())
