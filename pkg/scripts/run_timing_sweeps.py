#!/usr/bin/env python3
"""Run the three standard timing sweeps and summarize the trends.

Produces three CSV files (channel sweep, kernel sweep, pooling sweep)
via the ``fdcnn`` command line, then prints the median timings and the
derived trend numbers: where the frequency-domain layer overtakes the
summed spatial convolution, how flat its kernel-size profile is, and
how the pooling crop scales against spatial max pooling.

The CSVs are the plotting contract: any external tool can render them,
e.g.  ``python3 -c "import pandas as pd; ..."`` or a spreadsheet.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from fdcnn.cli import main as fdcnn_main


def run(argv: list[str]) -> None:
    code = fdcnn_main(argv)
    if code != 0:
        sys.exit(code)


def summarize(out_dir: Path) -> None:
    from fdcnn.bench import read_csv

    channel_records = read_csv(out_dir / "conv_channels.csv")
    print("\nchannel sweep (seconds, median):")
    print(f"  {'cin/cout':>10} {'fdc':>12} {'full_fdc':>12} {'cov':>12} {'cov-fdc':>12}")
    by_pair: dict[tuple[int, int], dict[str, float]] = {}
    for r in channel_records:
        by_pair.setdefault((r.cin, r.cout), {})[r.layer] = r.seconds
    for (cin, cout), t in sorted(by_pair.items()):
        gap = t["cov"] - t["fdc"]
        print(f"  {f'{cin}/{cout}':>10} {t['fdc']:>12.6f} {t['full_fdc']:>12.6f} "
              f"{t['cov']:>12.6f} {gap:>12.6f}")

    kernel_records = read_csv(out_dir / "conv_kernels.csv")
    by_kernel: dict[int, dict[str, float]] = {}
    for r in kernel_records:
        by_kernel.setdefault(r.kernel, {})[r.layer] = r.seconds
    print("\nkernel sweep (seconds, median):")
    print(f"  {'kernel':>10} {'fdc':>12} {'full_fdc':>12} {'cov':>12}")
    for kernel, t in sorted(by_kernel.items()):
        print(f"  {kernel:>10} {t['fdc']:>12.6f} {t['full_fdc']:>12.6f} {t['cov']:>12.6f}")
    fdc_times = [t["fdc"] for t in by_kernel.values()]
    spread = (max(fdc_times) - min(fdc_times)) / min(fdc_times)
    print(f"  frequency-domain spread over kernels: {spread:.1%}")

    pool_records = read_csv(out_dir / "pool_sizes.csv")
    by_size: dict[int, dict[str, float]] = {}
    for r in pool_records:
        by_size.setdefault(r.size, {})[r.layer] = r.seconds
    print("\npooling sweep (seconds, median):")
    print(f"  {'size':>10} {'fdp':>14} {'max_pool':>12} {'avg_pool':>12}")
    for size, t in sorted(by_size.items()):
        print(f"  {size:>10} {t['fdp']:>14.9f} {t['max_pool']:>12.6f} {t['avg_pool']:>12.6f}")
    sizes = sorted(by_size)
    growth = by_size[sizes[-1]]["max_pool"] / by_size[sizes[0]]["max_pool"]
    flatness = max(t["fdp"] for t in by_size.values()) / min(t["fdp"] for t in by_size.values())
    print(f"  spatial max-pool growth {sizes[0]}->{sizes[-1]}: {growth:.0f}x; "
          f"frequency crop max/min: {flatness:.2f}x")


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out-dir", type=Path, default=Path("runs/bench"))
    parser.add_argument("--repeats", type=int, default=5)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--threads", type=int, default=None,
                        help="BLAS/OpenMP threads (default: single-threaded)")
    parser.add_argument("--quick", action="store_true",
                        help="small grids for a fast smoke run")
    args = parser.parse_args()
    args.out_dir.mkdir(parents=True, exist_ok=True)

    common = ["--repeats", str(args.repeats), "--seed", str(args.seed)]
    if args.threads is not None:
        common += ["--threads", str(args.threads)]
    channels = ["--pairs", "2/4,8/16", "--image-size", "64"] if args.quick else []
    kernels = ["--kernels", "3,5", "--image-size", "64"] if args.quick else []
    sizes = ["--sizes", "64,128"] if args.quick else []

    run(["bench-conv", "--axis", "channels", *channels, *common,
         "--csv", str(args.out_dir / "conv_channels.csv")])
    run(["bench-conv", "--axis", "kernel", *kernels, *common,
         "--csv", str(args.out_dir / "conv_kernels.csv")])
    run(["bench-pool", *sizes, *common,
         "--csv", str(args.out_dir / "pool_sizes.csv")])
    summarize(args.out_dir)
    return 0


if __name__ == "__main__":
    sys.exit(main())
