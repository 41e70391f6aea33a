"""Detector precision/recall as the flag threshold beta varies.

Scores the held-out sentences of a finished fixture run once and re-thresholds the
stored log-likelihoods, so the whole curve costs one forward pass per sentence.
"""
import argparse
import math
from pathlib import Path

import torch

from homonmt import detector, pinyin


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--run", default="runs/fixture", help="output directory of a pipeline run")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--betas", type=float, nargs="+", default=[1e-4, 1e-3, 0.01, 0.05, 0.1, 0.3, 0.5, 0.9])
    args = parser.parse_args()
    torch.set_num_threads(1)

    run = Path(args.run)
    table = pinyin.default_table()
    model = detector.load_model(run / "detector.ckpt")
    sentences = (run / "data" / "detector_heldout.txt").read_text(encoding="utf-8").splitlines()
    cases = detector.inject_single_errors(sentences, table, args.seed)
    reports = [(detector.score(model, noisy, table), pos) for noisy, pos in cases]

    print("beta\tprecision\trecall\tflags")
    for beta in args.betas:
        flagged = hits = 0
        for rep, pos in reports:
            flags = rep.reflag(beta).flagged
            flagged += sum(flags)
            hits += flags[pos]
        precision = hits / flagged if flagged else math.nan
        print(f"{beta:g}\t{precision:.3f}\t{hits / len(reports):.3f}\t{flagged}")


if __name__ == "__main__":
    main()
