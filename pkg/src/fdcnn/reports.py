"""Training-run reports and paired comparisons.

Serialization is deterministic so seeded reruns produce byte-identical
artifacts: weight archives are written through zipfile with a frozen
timestamp (np.savez would embed the current time), JSON key order is
fixed, and everything timing- or memory-related is grouped under a
``resources`` key that comparisons ignore.
"""

from __future__ import annotations

import io
import json
import math
import time
import zipfile
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .architectures import (
    Model,
    ModelSpec,
    conv_weight_count,
    conv_weight_factors,
    count_parameters,
    instantiate,
)
from .nn import EpochLoss, Metrics, TrainConfig, evaluate
from .nn import train as nn_train
from .stats import WilcoxonResult, wilcoxon_signed_rank

__all__ = [
    "RunReport",
    "run_training",
    "save_weights",
    "load_weights",
    "write_loss_trace",
    "read_loss_trace",
    "compare_reports",
    "wilcoxon_over_reports",
    "format_comparison",
]


def _none_if_nan(x: float) -> Optional[float]:
    return None if x is None or math.isnan(x) else float(x)


def _nan_if_none(x: Optional[float]) -> float:
    return float("nan") if x is None else float(x)


@dataclass(frozen=True)
class RunReport:
    arch: str
    data_source: str
    config: TrainConfig
    epoch_losses: tuple[EpochLoss, ...]
    metrics: Metrics
    parameter_count: int
    conv_weight_count: int
    conv_weight_factors: tuple[int, ...]
    wall_seconds: float
    peak_rss_bytes: Optional[int]

    def __post_init__(self) -> None:
        object.__setattr__(self, "epoch_losses", tuple(self.epoch_losses))
        object.__setattr__(self, "conv_weight_factors", tuple(self.conv_weight_factors))
        if len(self.epoch_losses) != self.config.epochs:
            raise ValueError(
                f"report holds {len(self.epoch_losses)} epoch records for a "
                f"{self.config.epochs}-epoch config"
            )

    def comparable_dict(self) -> dict:
        """Everything except the resources group — the part of the report
        that must be bit-identical across seeded reruns."""
        m = self.metrics
        return {
            "arch": self.arch,
            "data_source": self.data_source,
            "config": {
                "learning_rate": self.config.learning_rate,
                "weight_decay": self.config.weight_decay,
                "batch_size": self.config.batch_size,
                "epochs": self.config.epochs,
                "seed": self.config.seed,
            },
            "epoch_losses": [
                {"epoch": e.epoch, "train_loss": e.train_loss,
                 "val_loss": _none_if_nan(e.val_loss)}
                for e in self.epoch_losses
            ],
            "metrics": {
                "accuracy": m.accuracy,
                "precision": _none_if_nan(m.precision),
                "recall": _none_if_nan(m.recall),
                "auc": _none_if_nan(m.auc),
                "loss": m.loss,
                "true_positive": m.true_positive,
                "false_positive": m.false_positive,
                "true_negative": m.true_negative,
                "false_negative": m.false_negative,
            },
            "parameters": {
                "total": self.parameter_count,
                "conv_weights": self.conv_weight_count,
                "conv_weight_factors": list(self.conv_weight_factors),
            },
        }

    def to_dict(self) -> dict:
        out = self.comparable_dict()
        out["resources"] = {
            "wall_seconds": self.wall_seconds,
            "peak_rss_bytes": self.peak_rss_bytes,
        }
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "RunReport":
        cfg = TrainConfig(**data["config"])
        losses = tuple(
            EpochLoss(epoch=e["epoch"], train_loss=e["train_loss"],
                      val_loss=_nan_if_none(e["val_loss"]))
            for e in data["epoch_losses"]
        )
        m = data["metrics"]
        metrics = Metrics(
            accuracy=m["accuracy"],
            precision=_nan_if_none(m["precision"]),
            recall=_nan_if_none(m["recall"]),
            auc=_nan_if_none(m["auc"]),
            loss=m["loss"],
            true_positive=m["true_positive"],
            false_positive=m["false_positive"],
            true_negative=m["true_negative"],
            false_negative=m["false_negative"],
        )
        resources = data.get("resources", {})
        return cls(
            arch=data["arch"],
            data_source=data.get("data_source", ""),
            config=cfg,
            epoch_losses=losses,
            metrics=metrics,
            parameter_count=data["parameters"]["total"],
            conv_weight_count=data["parameters"]["conv_weights"],
            conv_weight_factors=tuple(data["parameters"]["conv_weight_factors"]),
            wall_seconds=resources.get("wall_seconds", 0.0),
            peak_rss_bytes=resources.get("peak_rss_bytes"),
        )

    def save(self, path: Union[str, Path]) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def load(cls, path: Union[str, Path]) -> "RunReport":
        return cls.from_dict(json.loads(Path(path).read_text()))


def _peak_rss_bytes() -> Optional[int]:
    try:
        import resource

        return int(resource.getrusage(resource.RUSAGE_SELF).ru_maxrss) * 1024
    except Exception:
        return None


def run_training(
    arch: str,
    spec: ModelSpec,
    dataset,
    cfg: TrainConfig,
    *,
    augment_fn: Optional[Callable] = None,
    data_source: str = "",
) -> tuple[Model, RunReport]:
    """Instantiate, train, evaluate on the test split, and assemble the
    report.  Wall time covers the training loop only; peak resident
    memory is the best-effort OS high-water mark for the whole process."""
    model = instantiate(spec, seed=cfg.seed)
    start = time.perf_counter()
    _, trace = nn_train(model, dataset, cfg, augment_fn=augment_fn)
    wall = time.perf_counter() - start
    metrics = evaluate(model, dataset.test)
    report = RunReport(
        arch=arch,
        data_source=data_source,
        config=cfg,
        epoch_losses=tuple(trace),
        metrics=metrics,
        parameter_count=count_parameters(spec),
        conv_weight_count=conv_weight_count(spec),
        conv_weight_factors=conv_weight_factors(spec),
        wall_seconds=wall,
        peak_rss_bytes=_peak_rss_bytes(),
    )
    return model, report


def save_weights(path: Union[str, Path], params: dict[str, np.ndarray]) -> None:
    """npz-compatible archive with frozen member timestamps, so identical
    parameters produce identical bytes."""
    with zipfile.ZipFile(path, "w", zipfile.ZIP_STORED) as zf:
        for name in sorted(params):
            buf = io.BytesIO()
            np.lib.format.write_array(buf, np.ascontiguousarray(params[name]), version=(1, 0))
            info = zipfile.ZipInfo(name + ".npy", date_time=(1980, 1, 1, 0, 0, 0))
            zf.writestr(info, buf.getvalue())


def load_weights(path: Union[str, Path]) -> dict[str, np.ndarray]:
    with np.load(path) as archive:
        return {name: archive[name] for name in archive.files}


def write_loss_trace(path: Union[str, Path], trace: Sequence[EpochLoss]) -> None:
    lines = ["epoch,train_loss,val_loss"]
    for e in trace:
        val = "" if math.isnan(e.val_loss) else repr(e.val_loss)
        lines.append(f"{e.epoch},{e.train_loss!r},{val}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_loss_trace(path: Union[str, Path]) -> list[EpochLoss]:
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0] != "epoch,train_loss,val_loss":
        raise ValueError(f"{path}: not a loss-trace file")
    out = []
    for line in lines[1:]:
        epoch, train_loss, val_loss = line.split(",")
        out.append(EpochLoss(epoch=int(epoch), train_loss=float(train_loss),
                             val_loss=float(val_loss) if val_loss else float("nan")))
    return out


def compare_reports(a: RunReport, b: RunReport) -> dict:
    """Pairwise comparison: speed, parameter counts with the per-layer
    weight-reduction factors, and metric deltas (a minus b)."""
    if len(a.epoch_losses) != len(b.epoch_losses):
        raise ValueError(
            f"mismatched epoch counts: {len(a.epoch_losses)} vs {len(b.epoch_losses)}"
        )
    factor_product = 1
    for c in a.conv_weight_factors:
        factor_product *= c
    deltas = {
        name: getattr(a.metrics, name) - getattr(b.metrics, name)
        for name in ("accuracy", "precision", "recall", "auc", "loss")
    }
    return {
        "arch_a": a.arch,
        "arch_b": b.arch,
        "speed": {
            "wall_seconds_a": a.wall_seconds,
            "wall_seconds_b": b.wall_seconds,
            "a_faster_percent": (
                100.0 * (b.wall_seconds - a.wall_seconds) / b.wall_seconds
                if b.wall_seconds > 0
                else float("nan")
            ),
        },
        "memory": {
            "peak_rss_bytes_a": a.peak_rss_bytes,
            "peak_rss_bytes_b": b.peak_rss_bytes,
        },
        "parameters": {
            "total_a": a.parameter_count,
            "total_b": b.parameter_count,
            "conv_weights_a": a.conv_weight_count,
            "conv_weights_b": b.conv_weight_count,
            "conv_ratio_b_over_a": (
                b.conv_weight_count / a.conv_weight_count if a.conv_weight_count else float("nan")
            ),
            "per_layer_factors": list(a.conv_weight_factors),
            "factor_product": factor_product,
        },
        "metric_deltas_a_minus_b": deltas,
        "metrics_a": a.metrics.as_dict(),
        "metrics_b": b.metrics.as_dict(),
    }


def wilcoxon_over_reports(
    reports_a: Sequence[RunReport],
    reports_b: Sequence[RunReport],
    *,
    measure: str = "accuracy",
) -> WilcoxonResult:
    """Paired signed-rank test of a test-set measure over N seeded
    repetitions of both architectures."""
    if len(reports_a) != len(reports_b):
        raise ValueError(f"need paired reports, got {len(reports_a)} vs {len(reports_b)}")
    a = np.array([getattr(r.metrics, measure) for r in reports_a], dtype=np.float64)
    b = np.array([getattr(r.metrics, measure) for r in reports_b], dtype=np.float64)
    return wilcoxon_signed_rank(a, b)


def format_comparison(
    comparison: dict, wilcoxon: Optional[dict[str, WilcoxonResult]] = None
) -> str:
    """Human-readable table for the comparison dict."""
    speed = comparison["speed"]
    params = comparison["parameters"]
    lines = [
        f"comparison: {comparison['arch_a']} (A) vs {comparison['arch_b']} (B)",
        f"  wall seconds        A {speed['wall_seconds_a']:.3f}   B {speed['wall_seconds_b']:.3f}"
        f"   (A faster by {speed['a_faster_percent']:.2f}%)",
        f"  parameters total    A {params['total_a']}   B {params['total_b']}",
        f"  conv weights        A {params['conv_weights_a']}   B {params['conv_weights_b']}"
        f"   (B/A = {params['conv_ratio_b_over_a']:.2f})",
        f"  per-layer factors   {params['per_layer_factors']}"
        f"   (product {params['factor_product']})",
    ]
    for name in ("accuracy", "precision", "recall", "auc", "loss"):
        av = comparison["metrics_a"][name]
        bv = comparison["metrics_b"][name]
        dv = comparison["metric_deltas_a_minus_b"][name]
        lines.append(f"  {name:<19} A {av:.4f}   B {bv:.4f}   (delta {dv:+.4f})")
    if wilcoxon:
        for measure, result in wilcoxon.items():
            lines.append(
                f"  wilcoxon[{measure}]  W+={result.statistic:.1f}  "
                f"p={result.p_value:.6f}  n={result.n_nonzero}  ({result.method})"
            )
    return "\n".join(lines)
