#!/usr/bin/env python3
"""Paired-seed comparison of the frequency-domain network and its
spatial twin on the synthetic fundus dataset.

For each seed the script trains both architectures on the same data
budget (the twin uses a 62-pixel extent so both flatten to the same
feature width), writes one report directory per run, and finishes with
the paired comparison: speed, parameter counts, metric deltas, and —
with five or more seeds — the signed-rank significance of the
accuracy, AUC, and wall-clock differences.

Runs are skipped when their report already exists, so the sweep can be
resumed or extended by raising ``--seeds``.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from fdcnn.cli import main as fdcnn_main

ARCHS = ("fdcnn", "cnn")


def run(argv: list[str]) -> None:
    code = fdcnn_main(argv)
    if code != 0:
        sys.exit(code)


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--seeds", type=int, default=5,
                        help="number of paired seeds (>= 5 enables the signed-rank test)")
    parser.add_argument("--n-per-class", type=int, default=500)
    parser.add_argument("--epochs", type=int, default=15)
    parser.add_argument("--batch-size", type=int, default=2)
    parser.add_argument("--learning-rate", type=float, default=4e-3)
    parser.add_argument("--weight-decay", type=float, default=1e-6)
    parser.add_argument("--augment", action="store_true")
    parser.add_argument("--out-dir", type=Path, default=Path("runs/fdcnn_vs_cnn"))
    args = parser.parse_args()
    if args.seeds < 1:
        parser.error("--seeds must be >= 1")

    report_paths: dict[str, list[str]] = {arch: [] for arch in ARCHS}
    for seed in range(args.seeds):
        for arch in ARCHS:
            run_dir = args.out_dir / f"{arch}-seed{seed}"
            report_paths[arch].append(str(run_dir / "report.json"))
            if (run_dir / "report.json").is_file():
                print(f"skipping {run_dir}: report already present")
                continue
            argv = ["train", "--arch", arch, "--synth",
                    "--n-per-class", str(args.n_per_class),
                    "--epochs", str(args.epochs),
                    "--batch-size", str(args.batch_size),
                    "--learning-rate", str(args.learning_rate),
                    "--weight-decay", str(args.weight_decay),
                    "--seed", str(seed),
                    "--out", str(run_dir)]
            if args.augment:
                argv.append("--augment")
            run(argv)

    run(["report", "--a", *report_paths["fdcnn"], "--b", *report_paths["cnn"],
         "--out", str(args.out_dir / "comparison.json")])
    print(f"\ncomparison written to {args.out_dir / 'comparison.json'}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
