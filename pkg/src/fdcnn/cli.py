"""Command-line interface: benchmark sweeps, training/evaluation runs,
paired comparison reports, and dataset preprocessing.

Thread policy: BLAS and OpenMP pools are pinned before numpy first loads
— benchmarks are single-threaded by default so timings are stable.  The
default comes from FDCNN_THREADS (falling back to 1); ``--threads``
overrides per invocation.  This module therefore imports numpy and the
rest of the package lazily, inside the command functions.

Exit codes: 0 on success; 1 with a one-line ``error: <message>`` on
stderr for runtime failures; 2 for usage errors.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

ARCH_CHOICES = ("fdcnn", "cnn", "vgg16", "vgg16-1fullfdc", "vgg16-3fullfdc")

_THREAD_ENV_VARS = (
    "OMP_NUM_THREADS",
    "OPENBLAS_NUM_THREADS",
    "MKL_NUM_THREADS",
    "NUMEXPR_NUM_THREADS",
)

_VGG_MINI_DIVISOR = 8


def _pin_threads(threads) -> None:
    count = threads if threads is not None else os.environ.get("FDCNN_THREADS", "1")
    for var in _THREAD_ENV_VARS:
        if threads is not None:
            os.environ[var] = str(count)
        else:
            os.environ.setdefault(var, str(count))


def _parse_pair(text: str) -> tuple[int, int]:
    try:
        cin, cout = text.split("/")
        return int(cin), int(cout)
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"expected a channel pair like 8/16, got {text!r}"
        ) from None


def _parse_pairs(text: str) -> tuple[tuple[int, int], ...]:
    return tuple(_parse_pair(part) for part in text.split(","))


def _parse_ints(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(part) for part in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a comma-separated integer list, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fdcnn",
        description="Frequency-domain CNN toolkit: benchmarks, training, reports.",
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--threads", type=int, default=None,
                        help="BLAS/OpenMP thread count (default: FDCNN_THREADS or 1)")
    sub = parser.add_subparsers(dest="command", required=True)

    bench_conv = sub.add_parser(
        "bench-conv", parents=[common],
        help="time the convolution layers over a sweep axis",
    )
    bench_conv.add_argument("--axis", choices=("channels", "kernel", "image_size"),
                            default="channels")
    bench_conv.add_argument("--image-size", type=int, default=512)
    bench_conv.add_argument("--kernel", type=int, default=3)
    bench_conv.add_argument("--channels", type=_parse_pair, default=(8, 16),
                            metavar="CIN/COUT",
                            help="channel pair for kernel/image_size sweeps")
    bench_conv.add_argument("--pairs", type=_parse_pairs, default=None,
                            metavar="CIN/COUT,...",
                            help="channel-pair grid for the channels sweep")
    bench_conv.add_argument("--kernels", type=_parse_ints, default=None, metavar="K,...")
    bench_conv.add_argument("--sizes", type=_parse_ints, default=None, metavar="N,...")
    bench_conv.add_argument("--repeats", type=int, default=5)
    bench_conv.add_argument("--seed", type=int, default=0)
    bench_conv.add_argument("--csv", required=True, help="output CSV path")
    bench_conv.set_defaults(func=cmd_bench_conv)

    bench_pool = sub.add_parser(
        "bench-pool", parents=[common],
        help="time the halving pooling layers across image sizes",
    )
    bench_pool.add_argument("--sizes", type=_parse_ints, default=None, metavar="N,...")
    bench_pool.add_argument("--channels", type=int, default=4)
    bench_pool.add_argument("--repeats", type=int, default=5)
    bench_pool.add_argument("--seed", type=int, default=0)
    bench_pool.add_argument("--csv", required=True, help="output CSV path")
    bench_pool.set_defaults(func=cmd_bench_pool)

    def add_data_arguments(p: argparse.ArgumentParser) -> None:
        p.add_argument("--synth", action="store_true",
                       help="use the deterministic synthetic dataset")
        p.add_argument("--n-per-class", type=int, default=500)
        p.add_argument("--data-dir", type=Path, default=None)
        p.add_argument("--labels-csv", type=Path, default=None)
        p.add_argument("--image-size", type=int, default=None,
                       help="input extent (default: per-architecture)")

    def add_model_arguments(p: argparse.ArgumentParser) -> None:
        p.add_argument("--arch", choices=ARCH_CHOICES, default="fdcnn")
        p.add_argument("--model-config", type=Path, default=None,
                       help="model description JSON overriding --arch")
        p.add_argument("--mini", action="store_true",
                       help=f"divide VGG16 widths by {_VGG_MINI_DIVISOR} for desk-scale runs")

    train = sub.add_parser("train", parents=[common], help="train and report")
    add_model_arguments(train)
    add_data_arguments(train)
    train.add_argument("--epochs", type=int, default=15)
    train.add_argument("--batch-size", type=int, default=4)
    train.add_argument("--learning-rate", type=float, default=1e-5)
    train.add_argument("--weight-decay", type=float, default=1e-6)
    train.add_argument("--seed", type=int, default=0)
    train.add_argument("--augment", action="store_true",
                       help="random rotation/flip augmentation each epoch")
    train.add_argument("--out", type=Path, required=True,
                       help="output directory for report.json, loss_trace.csv, weights.npz")
    train.set_defaults(func=cmd_train)

    evaluate = sub.add_parser("eval", parents=[common],
                              help="evaluate saved weights on a dataset split")
    add_model_arguments(evaluate)
    add_data_arguments(evaluate)
    evaluate.add_argument("--weights", type=Path, required=True)
    evaluate.add_argument("--split", choices=("train", "val", "test"), default="test")
    evaluate.add_argument("--seed", type=int, default=0)
    evaluate.add_argument("--out", type=Path, default=None, help="optional metrics JSON path")
    evaluate.set_defaults(func=cmd_eval)

    report = sub.add_parser(
        "report", parents=[common],
        help="compare paired run reports (speed, parameters, metrics, significance)",
    )
    report.add_argument("--a", type=Path, nargs="+", required=True,
                        help="report.json files for architecture A, one per seed")
    report.add_argument("--b", type=Path, nargs="+", required=True,
                        help="paired report.json files for architecture B")
    report.add_argument("--out", type=Path, default=None, help="optional comparison JSON path")
    report.set_defaults(func=cmd_repro_report)

    preprocess = sub.add_parser("preprocess", parents=[common],
                                help="write a preprocessed-image cache directory")
    preprocess.add_argument("--in-dir", type=Path, required=True)
    preprocess.add_argument("--out-dir", type=Path, required=True)
    preprocess.add_argument("--image-size", type=int, default=512)
    preprocess.add_argument("--mask-threshold", type=float, default=None,
                            help="mask threshold on the 0..255 scale (default 10)")
    preprocess.add_argument("--clip-limit", type=float, default=None,
                            help="contrast-equalization clip limit (default 2.0)")
    preprocess.add_argument("--grid", type=int, default=None,
                            help="equalization tile grid (default 8)")
    preprocess.set_defaults(func=cmd_preprocess)

    return parser


def cmd_bench_conv(args) -> int:
    from . import bench

    kwargs = dict(
        image_size=args.image_size,
        kernel=args.kernel,
        channel_pair=args.channels,
        repeats=args.repeats,
        seed=args.seed,
    )
    if args.pairs is not None:
        kwargs["channel_pairs"] = args.pairs
    if args.kernels is not None:
        kwargs["kernels"] = args.kernels
    if args.sizes is not None:
        kwargs["sizes"] = args.sizes
    records = bench.sweep_conv(args.axis, **kwargs)
    bench.write_csv(records, args.csv)
    skipped = sum(1 for r in records if r.seconds is None)
    print(f"bench-conv axis={args.axis}: wrote {len(records)} records "
          f"({skipped} skipped) to {args.csv}")
    return 0


def cmd_bench_pool(args) -> int:
    from . import bench

    kwargs = dict(channels=args.channels, repeats=args.repeats, seed=args.seed)
    if args.sizes is not None:
        kwargs["sizes"] = args.sizes
    records = bench.sweep_pool(**kwargs)
    bench.write_csv(records, args.csv)
    print(f"bench-pool: wrote {len(records)} records to {args.csv}")
    return 0


def _default_extent(arch: str) -> int:
    if arch == "fdcnn":
        return 64
    if arch == "cnn":
        return 62
    from .architectures import DEFAULT_VGG_EXTENT

    return DEFAULT_VGG_EXTENT


def _build_spec(args, extent: int):
    from . import architectures

    if args.model_config is not None:
        return architectures.ModelSpec.from_json(Path(args.model_config).read_text())
    if args.mini and not args.arch.startswith("vgg16"):
        raise ValueError("--mini applies to the vgg16 variants only")
    if args.arch == "fdcnn":
        return architectures.build_fdcnn(scale=extent)
    if args.arch == "cnn":
        return architectures.build_cnn_equivalent(input_extent=extent)
    variant = {"vgg16": "vgg16", "vgg16-1fullfdc": "1fullfdc", "vgg16-3fullfdc": "3fullfdc"}
    return architectures.build_vgg16_variant(
        variant[args.arch], scale=extent,
        width_divisor=_VGG_MINI_DIVISOR if args.mini else 1,
    )


def _load_data(args, extent: int):
    from . import imaging

    if args.synth:
        if args.data_dir is not None or args.labels_csv is not None:
            raise ValueError("--synth and --data-dir/--labels-csv are mutually exclusive")
        dataset = imaging.synth_dataset(args.n_per_class, extent, args.seed)
        return dataset, f"synth:{args.n_per_class}x{extent}:seed{args.seed}"
    if args.data_dir is None or args.labels_csv is None:
        raise ValueError("provide --synth, or both --data-dir and --labels-csv")
    dataset = imaging.load_dataset(
        args.data_dir, args.labels_csv, seed=args.seed, image_size=extent
    )
    return dataset, str(args.data_dir)


def _make_augment_fn(seed: int):
    import numpy as np

    from .imaging import augment

    def augment_fn(pixels, epoch: int, index: int):
        img = pixels[0] if pixels.ndim == 3 else pixels
        rng = np.random.default_rng(np.random.SeedSequence((seed, 1, epoch, index)))
        return augment(img, rng)

    return augment_fn


def cmd_train(args) -> int:
    from .nn import TrainConfig
    from .reports import run_training, save_weights, write_loss_trace

    extent = args.image_size if args.image_size is not None else _default_extent(args.arch)
    spec = _build_spec(args, extent)
    if spec.input_extent != extent:
        raise ValueError(
            f"model expects {spec.input_extent}-pixel inputs but --image-size is {extent}"
        )
    dataset, data_source = _load_data(args, extent)
    cfg = TrainConfig(
        learning_rate=args.learning_rate,
        weight_decay=args.weight_decay,
        batch_size=args.batch_size,
        epochs=args.epochs,
        seed=args.seed,
    )
    arch = args.arch if args.model_config is None else args.model_config.stem
    augment_fn = _make_augment_fn(args.seed) if args.augment else None
    model, report = run_training(
        arch, spec, dataset, cfg, augment_fn=augment_fn, data_source=data_source
    )
    out: Path = args.out
    out.mkdir(parents=True, exist_ok=True)
    report.save(out / "report.json")
    write_loss_trace(out / "loss_trace.csv", report.epoch_losses)
    save_weights(out / "weights.npz", model.parameters())
    m = report.metrics
    print(
        f"train arch={arch} data={data_source} epochs={cfg.epochs} seed={cfg.seed}: "
        f"accuracy={m.accuracy:.4f} precision={m.precision:.4f} recall={m.recall:.4f} "
        f"auc={m.auc:.4f} loss={m.loss:.4f} wall={report.wall_seconds:.2f}s -> {out}"
    )
    return 0


def cmd_eval(args) -> int:
    import json

    from .architectures import instantiate
    from .nn import evaluate
    from .reports import load_weights

    extent = args.image_size if args.image_size is not None else _default_extent(args.arch)
    spec = _build_spec(args, extent)
    dataset, data_source = _load_data(args, extent)
    model = instantiate(spec, seed=args.seed)
    model.load_parameters(load_weights(args.weights))
    metrics = evaluate(model, dataset.split(args.split))
    payload = metrics.as_dict()
    print(f"eval arch={args.arch} data={data_source} split={args.split}: "
          + json.dumps(payload))
    if args.out is not None:
        args.out.write_text(json.dumps(payload, indent=2) + "\n")
    return 0


def cmd_repro_report(args) -> int:
    import json

    import numpy as np

    from .reports import RunReport, compare_reports, format_comparison, wilcoxon_over_reports
    from .stats import wilcoxon_signed_rank

    if len(args.a) != len(args.b):
        raise ValueError(f"--a and --b must pair up; got {len(args.a)} vs {len(args.b)}")
    reports_a = [RunReport.load(p) for p in args.a]
    reports_b = [RunReport.load(p) for p in args.b]
    comparison = compare_reports(reports_a[0], reports_b[0])
    wilcoxon = None
    if len(reports_a) >= 5:
        wall_a = np.array([r.wall_seconds for r in reports_a])
        wall_b = np.array([r.wall_seconds for r in reports_b])
        wilcoxon = {
            "accuracy": wilcoxon_over_reports(reports_a, reports_b, measure="accuracy"),
            "auc": wilcoxon_over_reports(reports_a, reports_b, measure="auc"),
            "wall_seconds": wilcoxon_signed_rank(wall_a, wall_b),
        }
    else:
        print(f"note: {len(reports_a)} pair(s) given; signed-rank test needs >= 5")
    print(format_comparison(comparison, wilcoxon))
    if args.out is not None:
        payload = dict(comparison)
        if wilcoxon:
            payload["wilcoxon"] = {
                measure: {
                    "statistic": res.statistic,
                    "p_value": res.p_value,
                    "n_nonzero": res.n_nonzero,
                    "method": res.method,
                }
                for measure, res in wilcoxon.items()
            }
        args.out.write_text(json.dumps(payload, indent=2) + "\n")
    return 0


def cmd_preprocess(args) -> int:
    from . import imaging

    in_dir: Path = args.in_dir
    out_dir: Path = args.out_dir
    if not in_dir.is_dir():
        raise ValueError(f"--in-dir {in_dir} is not a directory")
    out_dir.mkdir(parents=True, exist_ok=True)
    kwargs = {}
    if args.mask_threshold is not None:
        kwargs["threshold"] = args.mask_threshold
    if args.clip_limit is not None:
        kwargs["clip_limit"] = args.clip_limit
    if args.grid is not None:
        kwargs["grid"] = args.grid
    paths = sorted(p for p in in_dir.iterdir() if p.suffix.lower() in (".png", ".ppm"))
    if not paths:
        raise ValueError(f"no PNG/PPM images in {in_dir}")
    for path in paths:
        raster = imaging.read_image(path)
        pixels = imaging.preprocess(raster, size=args.image_size, image_id=path.stem, **kwargs)
        imaging.write_image(out_dir / (path.stem + ".png"), pixels)
    print(f"preprocess: wrote {len(paths)} images to {out_dir}")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    _pin_threads(args.threads)
    try:
        return args.func(args)
    except KeyboardInterrupt:
        print("error: interrupted", file=sys.stderr)
        return 130
    except Exception as exc:  # surface a one-line machine-parsable error
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
