"""Micro-benchmark harness for the convolution and pooling layers.

Protocol: every timed call's output shape is audited once before timing
counts; then 2 warm-up calls (which also warm any kernel-spectrum cache,
matching the steady state inside a network) and the median of >= 5
repeats on a monotonic clock.  Calls faster than a few milliseconds are
looped and averaged per repeat so the clock granularity cannot dominate.

The frequency-domain convolution is timed on pre-transformed input — the
tensor it actually receives inside the all-frequency pipeline; the "full"
variant includes both domain transforms and artifact removal.  All three
convolution layers consume the same random volume.

Grid points that exhaust memory become records with ``seconds = None``
(empty CSV cell), never crashes.
"""

from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .fdlayers import FdcLayer, FdpLayer, fdc_forward, fdp_forward, full_fdc_forward, kaiming_init
from .nn import avg_pool2, max_pool2
from .spatial import ConvConfig, KernelBank, conv_over_volume
from .spectral import rfft2, rfft_shift
from .tensors import RealTensor

__all__ = [
    "BenchRecord",
    "median_time",
    "sweep_conv",
    "sweep_pool",
    "write_csv",
    "read_csv",
    "CONV_SWEEP_AXES",
    "DEFAULT_CHANNEL_PAIRS",
    "DEFAULT_KERNEL_GRID",
    "DEFAULT_CONV_SIZES",
    "DEFAULT_POOL_SIZES",
]

CONV_SWEEP_AXES = ("channels", "kernel", "image_size")
DEFAULT_CHANNEL_PAIRS = ((2, 4), (4, 8), (8, 16), (16, 32), (32, 64), (64, 128), (128, 256), (256, 512))
DEFAULT_KERNEL_GRID = (3, 5, 7, 9, 11)
DEFAULT_CONV_SIZES = (64, 128, 256, 512)
DEFAULT_POOL_SIZES = (64, 128, 256, 512, 1024)

CSV_COLUMNS = ("layer", "cin", "cout", "kernel", "size", "seconds")

_MIN_REPEATS = 5
_TARGET_SECONDS = 0.005
_MAX_INNER_LOOPS = 20000


@dataclass(frozen=True)
class BenchRecord:
    """One timed grid point; ``seconds`` is None for a skipped point."""

    layer: str
    cin: int
    cout: int
    kernel: int
    size: int
    seconds: Optional[float]
    repeats: int

    def __post_init__(self) -> None:
        if self.repeats < _MIN_REPEATS:
            raise ValueError(f"repeats must be >= {_MIN_REPEATS}, got {self.repeats}")
        if self.seconds is not None and not self.seconds > 0:
            raise ValueError(f"measured time must be > 0, got {self.seconds}")


def median_time(
    fn: Callable[[], object],
    *,
    repeats: int = _MIN_REPEATS,
    warmups: int = 2,
    target_seconds: float = _TARGET_SECONDS,
) -> float:
    """Median per-call wall time over ``repeats`` measurements."""
    if repeats < _MIN_REPEATS:
        raise ValueError(f"repeats must be >= {_MIN_REPEATS}, got {repeats}")
    estimate = math.inf
    for _ in range(max(warmups, 1)):
        start = time.perf_counter()
        fn()
        estimate = min(estimate, time.perf_counter() - start)
    inner = max(1, min(_MAX_INNER_LOOPS, math.ceil(target_seconds / max(estimate, 1e-9))))
    samples = []
    for _ in range(repeats):
        start = time.perf_counter()
        for _ in range(inner):
            fn()
        samples.append((time.perf_counter() - start) / inner)
    return float(np.median(samples))


def _audited(fn: Callable[[], object], expected_shape: tuple) -> None:
    out = fn()
    got = out.data.shape if hasattr(out, "data") else np.asarray(out).shape
    if tuple(got) != tuple(expected_shape):
        raise AssertionError(f"shape audit failed: expected {expected_shape}, got {got}")


def _point_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence((seed, 5, index)))


def _conv_point(
    cin: int,
    cout: int,
    kernel: int,
    size: int,
    repeats: int,
    rng: np.random.Generator,
    dtype,
) -> list[BenchRecord]:
    cfg = ConvConfig(in_channels=cin, out_channels=cout, kernel_height=kernel, kernel_width=kernel)
    volume = RealTensor(rng.standard_normal((1, cin, size, size)).astype(dtype))
    records: list[BenchRecord] = []

    def run(layer_name: str, build: Callable[[], tuple[Callable[[], object], tuple]]) -> None:
        try:
            fn, expected = build()
            _audited(fn, expected)
            seconds = median_time(fn, repeats=repeats)
        except MemoryError:
            seconds = None
        records.append(
            BenchRecord(layer=layer_name, cin=cin, cout=cout, kernel=kernel,
                        size=size, seconds=seconds, repeats=repeats)
        )

    def build_fdc():
        bank = kaiming_init(KernelBank.allocate(cfg, layout="cic"), seed=0)
        layer = FdcLayer(bank.with_weights(bank.weights.astype(dtype)))
        spectra = rfft2(volume)
        return (lambda: fdc_forward(layer, spectra)), (1, cout, size, size // 2 + 1)

    def build_full_fdc():
        bank = kaiming_init(KernelBank.allocate(cfg, layout="cic"), seed=0)
        layer = FdcLayer(bank.with_weights(bank.weights.astype(dtype)))
        out = size - kernel + 1
        return (lambda: full_fdc_forward(layer, volume)), (1, cout, out, out)

    def build_cov():
        bank = kaiming_init(KernelBank.allocate(cfg, layout="cov"), seed=0)
        bank = bank.with_weights(bank.weights.astype(dtype))
        out = size - kernel + 1
        return (lambda: conv_over_volume(volume, bank)), (1, cout, out, out)

    run("fdc", build_fdc)
    run("full_fdc", build_full_fdc)
    run("cov", build_cov)
    return records


def sweep_conv(
    axis: str,
    *,
    image_size: int = 512,
    kernel: int = 3,
    channel_pair: tuple[int, int] = (8, 16),
    channel_pairs: Sequence[tuple[int, int]] = DEFAULT_CHANNEL_PAIRS,
    kernels: Sequence[int] = DEFAULT_KERNEL_GRID,
    sizes: Sequence[int] = DEFAULT_CONV_SIZES,
    repeats: int = _MIN_REPEATS,
    seed: int = 0,
    dtype=np.float32,
) -> list[BenchRecord]:
    """Times the three convolution layers over one sweep axis, all other
    parameters fixed: ``channels`` walks (cin, cout) pairs at fixed size
    and kernel; ``kernel`` walks kernel sizes at a fixed channel pair;
    ``image_size`` walks extents."""
    if axis not in CONV_SWEEP_AXES:
        raise ValueError(f"unknown sweep axis {axis!r}; expected one of {CONV_SWEEP_AXES}")
    if axis == "channels":
        grid = [(cin, cout, kernel, image_size) for cin, cout in channel_pairs]
    elif axis == "kernel":
        grid = [(channel_pair[0], channel_pair[1], k, image_size) for k in kernels]
    else:
        grid = [(channel_pair[0], channel_pair[1], kernel, s) for s in sorted(sizes)]
    records: list[BenchRecord] = []
    for index, (cin, cout, k, size) in enumerate(grid):
        records.extend(_conv_point(cin, cout, k, size, repeats, _point_rng(seed, index), dtype))
    return records


def sweep_pool(
    *,
    sizes: Sequence[int] = DEFAULT_POOL_SIZES,
    channels: int = 4,
    repeats: int = _MIN_REPEATS,
    seed: int = 0,
    dtype=np.float32,
) -> list[BenchRecord]:
    """Times the halving pooling layers across image sizes, ascending.
    Frequency-domain pooling consumes a pre-shifted spectrum (its pipeline
    position); spatial poolings consume the raw volume."""
    records: list[BenchRecord] = []
    for index, size in enumerate(sorted(sizes)):
        rng = _point_rng(seed, index)
        volume = RealTensor(rng.standard_normal((1, channels, size, size)).astype(dtype))
        half = size // 2
        spectra = rfft_shift(rfft2(volume))
        fdp_layer = FdpLayer(half, half)

        points: list[tuple[str, int, Callable[[], object], tuple]] = [
            ("fdp", 0, lambda: fdp_forward(fdp_layer, spectra, shifted=True),
             (1, channels, half, half // 2 + 1)),
            ("max_pool", 2, lambda: max_pool2(volume.data), (1, channels, half, half)),
            ("avg_pool", 2, lambda: avg_pool2(volume.data), (1, channels, half, half)),
        ]
        for layer_name, k, fn, expected in points:
            try:
                _audited(fn, expected)
                seconds = median_time(fn, repeats=repeats)
            except MemoryError:
                seconds = None
            records.append(
                BenchRecord(layer=layer_name, cin=channels, cout=channels, kernel=k,
                            size=size, seconds=seconds, repeats=repeats)
            )
    return records


def write_csv(records: Sequence[BenchRecord], path: Union[str, Path]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for r in records:
            seconds = "" if r.seconds is None else f"{r.seconds:.9e}"
            writer.writerow([r.layer, r.cin, r.cout, r.kernel, r.size, seconds])


def read_csv(path: Union[str, Path]) -> list[BenchRecord]:
    records: list[BenchRecord] = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != list(CSV_COLUMNS):
            raise ValueError(f"{path}: expected header {CSV_COLUMNS}, got {header}")
        for row in reader:
            if len(row) != len(CSV_COLUMNS):
                raise ValueError(f"{path}: malformed row {row}")
            layer, cin, cout, kernel, size, seconds = row
            records.append(
                BenchRecord(
                    layer=layer, cin=int(cin), cout=int(cout), kernel=int(kernel),
                    size=int(size), seconds=float(seconds) if seconds else None,
                    repeats=_MIN_REPEATS,
                )
            )
    return records
