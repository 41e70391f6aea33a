"""Run the fixture experiment end to end and print the BLEU grid.

Same computation as ``homonmt pipeline --preset fixture``; handy for poking at the
preset from Python (e.g. ``--nmt-steps 500`` to see an undertrained grid).
"""
import argparse
import logging
from dataclasses import replace

import torch

from homonmt import experiment, pinyin


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="runs/fixture")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--preset", choices=sorted(experiment.PRESETS), default="fixture")
    parser.add_argument("--nmt-steps", type=int, default=None)
    parser.add_argument("--detector-steps", type=int, default=None)
    args = parser.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(name)s %(message)s")
    torch.set_num_threads(1)

    preset = experiment.PRESETS[args.preset]
    if args.nmt_steps:
        preset = replace(preset, nmt_steps=args.nmt_steps)
    if args.detector_steps:
        preset = replace(preset, detector_steps=args.detector_steps)
    result = experiment.run_pipeline(args.out, pinyin.default_table(), preset, args.seed)
    print((result.out_dir / "sweep.tsv").read_text(encoding="utf-8"))
    det = result.report["detector"]
    print(f"detector precision {det['precision']:.3f} recall {det['recall']:.3f} "
          f"mean LLS error {det['mean_lls_error']:.2f} clean {det['mean_lls_clean']:.3f}")
    print("worked example:", result.report["worked_example"])
    for stage, sec in result.timings.items():
        print(f"{stage:>16s} {sec:7.1f}s")


if __name__ == "__main__":
    main()
