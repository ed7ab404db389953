"""Minimal spatial-domain training stack.

Everything here is plain numpy with hand-derived backward passes; the
gradient_check harness (central differences, double precision) is the
arbiter for every differentiable op in the repository.

Model protocol expected by ``train`` / ``evaluate`` (duck-typed; see the
architectures module for the concrete implementation):

* ``forward(batch, train=bool) -> logits`` for a (B, C, H, W) array
* ``backward(logit_gradient)`` accumulating parameter gradients
* ``parameter_store() -> ParameterStore`` (arrays shared with the layers)
* ``gradients() -> dict`` aligned with the store, ``zero_gradients()``
* ``after_update()`` for any cached state keyed to weight versions

Dataset protocol: ``.train`` / ``.val`` sequences of objects exposing
``pixels`` (2-D float raster in [0, 1]) and ``label`` (0 or 1).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .stats import auc_score
from .tensors import RealTensor

__all__ = [
    "ADAM_BETA1",
    "ADAM_BETA2",
    "ADAM_EPSILON",
    "TrainConfig",
    "Metrics",
    "EpochLoss",
    "ParameterStore",
    "relu",
    "relu_backward",
    "max_pool2",
    "max_pool2_backward",
    "avg_pool2",
    "avg_pool2_backward",
    "fully_connected",
    "fully_connected_backward",
    "softmax",
    "cross_entropy",
    "cross_entropy_with_gradient",
    "adam_step",
    "train",
    "evaluate",
    "gradient_check",
    "GradientCheckReport",
]

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPSILON = 1e-8

_EVAL_BATCH = 32


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-5
    weight_decay: float = 1e-6
    batch_size: int = 4
    epochs: int = 15
    seed: int = 0

    def __post_init__(self) -> None:
        if not self.learning_rate > 0:
            raise ValueError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.epochs < 0:
            raise ValueError(f"epochs must be >= 0, got {self.epochs}")
        if self.weight_decay < 0:
            raise ValueError(f"weight_decay must be >= 0, got {self.weight_decay}")


@dataclass(frozen=True)
class Metrics:
    """Threshold-0.5 confusion metrics plus rank-based AUC for a binary
    head.  Ratios that are undefined on the given split (no positives,
    single class, ...) are NaN, never silently zero."""

    accuracy: float
    precision: float
    recall: float
    auc: float
    loss: float
    true_positive: int
    false_positive: int
    true_negative: int
    false_negative: int

    def as_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "precision": self.precision,
            "recall": self.recall,
            "auc": self.auc,
            "loss": self.loss,
            "true_positive": self.true_positive,
            "false_positive": self.false_positive,
            "true_negative": self.true_negative,
            "false_negative": self.false_negative,
        }


@dataclass(frozen=True)
class EpochLoss:
    epoch: int
    train_loss: float
    val_loss: float


@dataclass
class ParameterStore:
    """Named parameters with their Adam moments and the shared step
    counter.  The arrays are the live layer weights (not copies), so an
    in-place optimizer step is visible to the model immediately."""

    params: dict[str, np.ndarray]
    first_moment: dict[str, np.ndarray] = field(default_factory=dict)
    second_moment: dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0

    def __post_init__(self) -> None:
        for name, p in self.params.items():
            self.first_moment.setdefault(name, np.zeros_like(p))
            self.second_moment.setdefault(name, np.zeros_like(p))
            for moments in (self.first_moment, self.second_moment):
                if moments[name].shape != p.shape:
                    raise ValueError(f"moment shape mismatch for parameter {name!r}")
        if self.step < 0:
            raise ValueError("step counter must be >= 0")


def _unwrap(x: Union[RealTensor, np.ndarray]) -> tuple[np.ndarray, bool]:
    if isinstance(x, RealTensor):
        return x.data, True
    return np.asarray(x), False


def _rewrap(a: np.ndarray, wrap: bool) -> Union[RealTensor, np.ndarray]:
    return RealTensor._trusted(a) if wrap else a


def relu(x: Union[RealTensor, np.ndarray]) -> Union[RealTensor, np.ndarray]:
    """Elementwise max(0, x)."""
    a, wrap = _unwrap(x)
    return _rewrap(np.maximum(a, 0.0), wrap)


def relu_backward(x: Union[RealTensor, np.ndarray], upstream: np.ndarray) -> np.ndarray:
    """Gradient mask: 1 where x > 0, 0 elsewhere (subgradient 0 at 0)."""
    a, _ = _unwrap(x)
    return np.asarray(upstream) * (a > 0.0)


def _pool_windows(a: np.ndarray) -> np.ndarray:
    h, w = a.shape[-2], a.shape[-1]
    if h % 2 != 0 or w % 2 != 0:
        raise ValueError(f"2x2 pooling requires even extents, got {h}x{w}")
    return a.reshape(a.shape[:-2] + (h // 2, 2, w // 2, 2))


def max_pool2(x: Union[RealTensor, np.ndarray]) -> Union[RealTensor, np.ndarray]:
    """2x2 window, stride 2, max."""
    a, wrap = _unwrap(x)
    return _rewrap(_pool_windows(a).max(axis=(-3, -1)), wrap)


def max_pool2_backward(x: Union[RealTensor, np.ndarray], upstream: np.ndarray) -> np.ndarray:
    """Routes each window's gradient to the first-scanned maximum."""
    a, _ = _unwrap(x)
    g = np.asarray(upstream)
    win = np.moveaxis(_pool_windows(a), -3, -2)  # (..., h/2, w/2, 2, 2)
    flat = win.reshape(win.shape[:-2] + (4,))
    arg = flat.argmax(axis=-1)
    grad_flat = np.zeros_like(flat)
    np.put_along_axis(grad_flat, arg[..., None], g[..., None], axis=-1)
    grad_win = grad_flat.reshape(win.shape)
    return np.moveaxis(grad_win, -2, -3).reshape(a.shape)


def avg_pool2(x: Union[RealTensor, np.ndarray]) -> Union[RealTensor, np.ndarray]:
    """2x2 window, stride 2, mean."""
    a, wrap = _unwrap(x)
    return _rewrap(_pool_windows(a).mean(axis=(-3, -1)), wrap)


def avg_pool2_backward(x: Union[RealTensor, np.ndarray], upstream: np.ndarray) -> np.ndarray:
    a, _ = _unwrap(x)
    g = np.asarray(upstream)
    return (np.broadcast_to(g[..., :, None, :, None] / 4.0,
                            a.shape[:-2] + (g.shape[-2], 2, g.shape[-1], 2))
            .reshape(a.shape))


def fully_connected(x: np.ndarray, weights: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """Affine map on flattened features: (B, F) @ (O, F)^T + (O,)."""
    x = np.asarray(x)
    if x.ndim != 2 or weights.ndim != 2 or x.shape[1] != weights.shape[1]:
        raise ValueError(
            f"fully_connected expects (B, F) features against (O, F) weights; "
            f"got {x.shape} and {weights.shape}"
        )
    if bias.shape != (weights.shape[0],):
        raise ValueError(f"bias shape {bias.shape} does not match {weights.shape[0]} outputs")
    return x @ weights.T + bias


def fully_connected_backward(
    x: np.ndarray, weights: np.ndarray, upstream: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Returns (input grad, weight grad, bias grad)."""
    g = np.asarray(upstream)
    return g @ weights, g.T @ np.asarray(x), g.sum(axis=0)


def softmax(logits: np.ndarray) -> np.ndarray:
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _check_labels(logits: np.ndarray, labels: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    z = np.asarray(logits, dtype=np.float64)
    if z.ndim == 1:
        z = z[None]
    y = np.atleast_1d(np.asarray(labels))
    if y.shape != (z.shape[0],):
        raise ValueError(f"expected {z.shape[0]} labels, got shape {y.shape}")
    if np.any(y < 0) or np.any(y >= z.shape[1]):
        raise ValueError(f"label out of range for {z.shape[1]} classes: {y}")
    if not np.all(np.isfinite(z)):
        raise ValueError("logits must be finite")
    return z, y.astype(np.int64)


def cross_entropy(logits: np.ndarray, label: Union[int, np.ndarray]) -> float:
    """Mean softmax negative log-likelihood, stabilized by max subtraction."""
    z, y = _check_labels(logits, label)
    shifted = z - z.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=1))
    picked = shifted[np.arange(z.shape[0]), y]
    return float(np.mean(log_norm - picked))


def cross_entropy_with_gradient(
    logits: np.ndarray, label: Union[int, np.ndarray]
) -> tuple[float, np.ndarray]:
    """Loss plus d(mean loss)/d(logits) = (softmax - one_hot) / batch."""
    z, y = _check_labels(logits, label)
    p = softmax(z)
    grad = p.copy()
    grad[np.arange(z.shape[0]), y] -= 1.0
    grad /= z.shape[0]
    shifted = z - z.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=1))
    loss = float(np.mean(log_norm - shifted[np.arange(z.shape[0]), y]))
    return loss, grad.reshape(np.asarray(logits).shape)


def adam_step(store: ParameterStore, grads: dict, cfg: TrainConfig) -> ParameterStore:
    """One in-place Adam update.  Weight decay enters as an additive
    lambda*theta term in the gradient before the moment updates."""
    extra = set(grads) - set(store.params)
    missing = set(store.params) - set(grads)
    if extra or missing:
        raise ValueError(
            f"gradient keys do not align with parameters "
            f"(missing={sorted(missing)}, unexpected={sorted(extra)})"
        )
    store.step += 1
    t = store.step
    bias1 = 1.0 - ADAM_BETA1**t
    bias2 = 1.0 - ADAM_BETA2**t
    for name, p in store.params.items():
        g = np.asarray(grads[name])
        if g.shape != p.shape:
            raise ValueError(f"gradient shape {g.shape} != parameter shape {p.shape} for {name!r}")
        if cfg.weight_decay:
            g = g + cfg.weight_decay * p
        m = store.first_moment[name]
        v = store.second_moment[name]
        m *= ADAM_BETA1
        m += (1.0 - ADAM_BETA1) * g
        v *= ADAM_BETA2
        v += (1.0 - ADAM_BETA2) * np.square(g)
        p -= cfg.learning_rate * (m / bias1) / (np.sqrt(v / bias2) + ADAM_EPSILON)
    return store


def _stack_batch(samples: Sequence, indices: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    images = np.stack([np.asarray(samples[i].pixels, dtype=np.float64) for i in indices])
    labels = np.array([samples[i].label for i in indices], dtype=np.int64)
    if images.ndim == 3:
        images = images[:, None]
    return images, labels


def _mean_loss(model, samples: Sequence) -> float:
    if not samples:
        return float("nan")
    total = 0.0
    for start in range(0, len(samples), _EVAL_BATCH):
        idx = np.arange(start, min(start + _EVAL_BATCH, len(samples)))
        images, labels = _stack_batch(samples, idx)
        logits = model.forward(images, train=False)
        total += cross_entropy(logits, labels) * len(idx)
    return total / len(samples)


def train(
    model,
    dataset,
    cfg: TrainConfig,
    *,
    augment_fn: Optional[Callable[[np.ndarray, int, int], np.ndarray]] = None,
    on_epoch: Optional[Callable[[EpochLoss], None]] = None,
):
    """Seeded mini-batch loop: shuffle, forward, cross-entropy backward,
    Adam.  Records training and validation loss each epoch.  Ragged final
    batches are trained on, not dropped.

    ``augment_fn(pixels, epoch, sample_index)`` is applied to training
    images only; the sample index is the dataset position, so augmentation
    draws are independent of the shuffle order.
    """
    samples = list(dataset.train)
    if not samples:
        raise ValueError("cannot train on an empty dataset")
    store = model.parameter_store()
    trace: list[EpochLoss] = []
    for epoch in range(cfg.epochs):
        rng = np.random.default_rng(np.random.SeedSequence((cfg.seed, 0, epoch)))
        order = rng.permutation(len(samples))
        epoch_total = 0.0
        for start in range(0, len(order), cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            images, labels = _stack_batch(samples, idx)
            if augment_fn is not None:
                images = np.stack(
                    [augment_fn(images[k], epoch, int(idx[k])) for k in range(len(idx))]
                )
                if images.ndim == 3:
                    images = images[:, None]
            model.zero_gradients()
            logits = model.forward(images, train=True)
            loss, logit_grad = cross_entropy_with_gradient(logits, labels)
            model.backward(logit_grad)
            adam_step(store, model.gradients(), cfg)
            model.after_update()
            epoch_total += loss * len(idx)
        record = EpochLoss(
            epoch=epoch,
            train_loss=epoch_total / len(samples),
            val_loss=_mean_loss(model, list(dataset.val)),
        )
        trace.append(record)
        if on_epoch is not None:
            on_epoch(record)
    return model, trace


def evaluate(model, dataset_split: Sequence) -> Metrics:
    """Threshold-0.5 confusion metrics and Mann-Whitney AUC over the
    positive-class softmax scores of a binary head."""
    samples = list(dataset_split)
    if not samples:
        raise ValueError("cannot evaluate an empty split")
    scores = np.empty(len(samples), dtype=np.float64)
    labels = np.empty(len(samples), dtype=np.int64)
    total_loss = 0.0
    for start in range(0, len(samples), _EVAL_BATCH):
        idx = np.arange(start, min(start + _EVAL_BATCH, len(samples)))
        images, batch_labels = _stack_batch(samples, idx)
        logits = model.forward(images, train=False)
        if logits.ndim != 2 or logits.shape[1] != 2:
            raise ValueError(f"evaluate requires a binary head; got logits {logits.shape}")
        total_loss += cross_entropy(logits, batch_labels) * len(idx)
        scores[idx] = softmax(logits)[:, 1]
        labels[idx] = batch_labels
    predicted = (scores > 0.5).astype(np.int64)
    tp = int(np.sum((predicted == 1) & (labels == 1)))
    fp = int(np.sum((predicted == 1) & (labels == 0)))
    tn = int(np.sum((predicted == 0) & (labels == 0)))
    fn = int(np.sum((predicted == 0) & (labels == 1)))
    nan = float("nan")
    return Metrics(
        accuracy=(tp + tn) / len(samples),
        precision=tp / (tp + fp) if tp + fp else nan,
        recall=tp / (tp + fn) if tp + fn else nan,
        auc=auc_score(labels, scores),
        loss=total_loss / len(samples),
        true_positive=tp,
        false_positive=fp,
        true_negative=tn,
        false_negative=fn,
    )


@dataclass(frozen=True)
class GradientCheckReport:
    max_relative_error: float
    per_input: tuple[float, ...]
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.max_relative_error <= self.tolerance


_FD_STEP = 1e-5


def gradient_check(op, inputs: Sequence[np.ndarray], tolerance: float) -> GradientCheckReport:
    """Central finite differences (step 1e-5, double precision) against the
    analytic gradients returned by ``op``.

    ``op(*inputs) -> (scalar_loss, gradients)`` with one gradient per
    input.  The relative error for each input is
    max|analytic - numeric| / max((max|analytic|, max|numeric|, 1e-12)).
    Inputs sitting exactly on non-differentiable points (relu at 0) are
    the caller's responsibility to avoid.
    """
    arrays = [np.array(x, dtype=np.float64) for x in inputs]
    _, analytic = op(*arrays)
    analytic = [np.asarray(g, dtype=np.float64) for g in analytic]
    if len(analytic) != len(arrays):
        raise ValueError(f"op returned {len(analytic)} gradients for {len(arrays)} inputs")
    errors = []
    for which, x in enumerate(arrays):
        numeric = np.zeros_like(x)
        flat = x.reshape(-1)
        num_flat = numeric.reshape(-1)
        for j in range(flat.size):
            keep = flat[j]
            flat[j] = keep + _FD_STEP
            up, _ = op(*arrays)
            flat[j] = keep - _FD_STEP
            down, _ = op(*arrays)
            flat[j] = keep
            num_flat[j] = (up - down) / (2.0 * _FD_STEP)
        a = analytic[which]
        if a.shape != x.shape:
            raise ValueError(f"gradient {which} has shape {a.shape}, input has {x.shape}")
        scale = max(float(np.max(np.abs(a)) if a.size else 0.0),
                    float(np.max(np.abs(numeric)) if numeric.size else 0.0), 1e-12)
        errors.append(float(np.max(np.abs(a - numeric)) / scale) if a.size else 0.0)
    return GradientCheckReport(
        max_relative_error=max(errors) if errors else 0.0,
        per_input=tuple(errors),
        tolerance=tolerance,
    )
