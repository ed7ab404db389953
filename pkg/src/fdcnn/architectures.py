"""Declarative model builders and the runtime that executes them.

A ModelSpec is a validated, serializable description: an ordered list of
LayerSpecs plus input geometry.  Validation propagates shapes end to end
before any allocation, so a spec that validates never fails at runtime on
conforming inputs.  ``Model`` instantiates a spec into layer objects with
forward/backward passes wired for the training stack.

Architecture notes, fixed here rather than configurable:

* The frequency-domain pipeline shifts the spectrum once, immediately
  after the forward transform; frequency layers therefore always see
  shifted spectra, and the inverse-transform layer unshifts first.
* The all-frequency classifier uses exactly one ReLU, after the inverse
  transform and before the dense head.
* The VGG16 variants replace block-4 convolutions with drop-in
  frequency-domain layers; every convolution (either kind) is followed by
  a ReLU, as in the standard topology.
* Frequency-domain convolutions are bias-free; spatial convolutions carry
  biases.  Parameter-ratio comparisons between paired architectures use
  kernel weights only so the channel-independence effect is isolated.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from . import nn as _nn
from .fdlayers import (
    FdcLayer,
    FdpLayer,
    fdc_backward,
    fdc_forward,
    fdp_backward,
    fdp_forward,
    full_fdc_backward,
    full_fdc_forward,
    kaiming_init,
)
from .spatial import ConvConfig, KernelBank, conv_over_volume
from .spectral import irfft2, irfft2_adjoint, reduced_width, rfft2, rfft2_adjoint
from .tensors import ComplexTensor, RealTensor, crop_region, zero_pad

__all__ = [
    "LAYER_KINDS",
    "LayerSpec",
    "ModelSpec",
    "ShapeStage",
    "shape_trace",
    "count_parameters",
    "conv_weight_count",
    "conv_weight_factors",
    "build_fdcnn",
    "build_cnn_equivalent",
    "build_vgg16_variant",
    "VGG_VARIANTS",
    "DEFAULT_VGG_EXTENT",
    "Model",
    "instantiate",
]

LAYER_KINDS = (
    "fdc",
    "full_fdc",
    "spatial_conv",
    "fdp",
    "max_pool",
    "relu",
    "flatten",
    "dense",
    "rfft",
    "irfft_with_artifact_removal",
)

_REQUIRED_FIELDS = {
    "fdc": ("in_channels", "out_channels", "kernel_size"),
    "full_fdc": ("in_channels", "out_channels", "kernel_size"),
    "spatial_conv": ("in_channels", "out_channels", "kernel_size"),
    "fdp": ("pool_target",),
    "dense": ("in_channels", "out_channels"),
    "irfft_with_artifact_removal": ("kernel_size",),
    "max_pool": (),
    "relu": (),
    "flatten": (),
    "rfft": (),
}

_FIELD_NAMES = ("in_channels", "out_channels", "kernel_size", "pool_target")


@dataclass(frozen=True)
class LayerSpec:
    """One layer of a model description.  For dense layers the channel
    fields hold flattened feature counts."""

    kind: str
    in_channels: Optional[int] = None
    out_channels: Optional[int] = None
    kernel_size: Optional[int] = None
    pool_target: Optional[int] = None

    def __post_init__(self) -> None:
        if self.kind not in LAYER_KINDS:
            raise ValueError(f"unknown layer kind {self.kind!r}; expected one of {LAYER_KINDS}")
        required = _REQUIRED_FIELDS[self.kind]
        for name in _FIELD_NAMES:
            value = getattr(self, name)
            if name in required and value is None:
                raise ValueError(f"{self.kind} layer requires field {name!r}")
            if name not in required and value is not None:
                raise ValueError(f"{self.kind} layer does not take field {name!r}")
        for name in required:
            value = getattr(self, name)
            if value < 1:
                raise ValueError(f"{self.kind} field {name!r} must be >= 1, got {value}")
        if self.kind in ("fdc", "full_fdc") and self.out_channels % self.in_channels != 0:
            raise ValueError(
                f"{self.kind} layer needs out_channels divisible by in_channels; "
                f"got {self.out_channels}/{self.in_channels}"
            )
        if self.kernel_size is not None and self.kernel_size % 2 == 0:
            raise ValueError(f"kernel size must be odd, got {self.kernel_size}")

    def to_dict(self) -> dict:
        out = {"kind": self.kind}
        for name in _FIELD_NAMES:
            value = getattr(self, name)
            if value is not None:
                out[name] = value
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "LayerSpec":
        unknown = set(data) - {"kind", *_FIELD_NAMES}
        if unknown:
            raise ValueError(f"unknown layer spec keys: {sorted(unknown)}")
        return cls(**data)


@dataclass(frozen=True)
class ShapeStage:
    """Shape after one layer.  In the 'features' domain the flattened
    feature count is reported in ``channels`` with unit extents."""

    index: int
    kind: str
    domain: str  # "spatial" | "frequency" | "features"
    channels: int
    height: int
    width: int


@dataclass(frozen=True)
class ModelSpec:
    layers: tuple[LayerSpec, ...]
    input_extent: int
    input_channels: int = 1
    class_count: int = 2

    def __post_init__(self) -> None:
        object.__setattr__(self, "layers", tuple(self.layers))
        if self.input_extent < 1 or self.input_channels < 1 or self.class_count < 2:
            raise ValueError("input extent/channels must be >= 1 and class count >= 2")
        shape_trace(self)  # full propagation; raises naming the failing layer

    def to_dict(self) -> dict:
        return {
            "input_extent": self.input_extent,
            "input_channels": self.input_channels,
            "class_count": self.class_count,
            "layers": [layer.to_dict() for layer in self.layers],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ModelSpec":
        unknown = set(data) - {"input_extent", "input_channels", "class_count", "layers"}
        if unknown:
            raise ValueError(f"unknown model spec keys: {sorted(unknown)}")
        layers = tuple(LayerSpec.from_dict(d) for d in data["layers"])
        return cls(
            layers=layers,
            input_extent=data["input_extent"],
            input_channels=data.get("input_channels", 1),
            class_count=data.get("class_count", 2),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "ModelSpec":
        return cls.from_dict(json.loads(text))


def _fail(index: int, kind: str, message: str) -> ValueError:
    return ValueError(f"layer {index} ({kind}): {message}")


def shape_trace(spec: ModelSpec) -> tuple[ShapeStage, ...]:
    """Propagate shapes through every layer, enforcing the chaining rules;
    raises with the failing layer named."""
    domain = "spatial"
    c, h, w = spec.input_channels, spec.input_extent, spec.input_extent
    last_fdc_kernel: Optional[int] = None
    stages: list[ShapeStage] = []
    for i, layer in enumerate(spec.layers):
        kind = layer.kind
        if kind == "rfft":
            if domain != "spatial":
                raise _fail(i, kind, f"forward transform requires spatial input, in {domain}")
            if h % 2 != 0:
                raise _fail(i, kind, f"spectrum shift requires even height, got {h}")
            domain = "frequency"
            last_fdc_kernel = None
        elif kind == "fdc":
            if domain != "frequency":
                raise _fail(i, kind, "frequency-domain convolution outside a transform region")
            if layer.in_channels != c:
                raise _fail(i, kind, f"expects {layer.in_channels} channels, gets {c}")
            if layer.kernel_size > min(h, w):
                raise _fail(i, kind, f"kernel {layer.kernel_size} exceeds extents {h}x{w}")
            c = layer.out_channels
            last_fdc_kernel = layer.kernel_size
        elif kind == "fdp":
            if domain != "frequency":
                raise _fail(i, kind, "frequency-domain pooling outside a transform region")
            t = layer.pool_target
            if t >= h or t >= w:
                raise _fail(i, kind, f"target {t} not smaller than extents {h}x{w}")
            if (h - t) % 2 != 0:
                raise _fail(i, kind, f"cannot remove {h}-{t} rows symmetrically")
            h = w = t
        elif kind == "irfft_with_artifact_removal":
            if domain != "frequency":
                raise _fail(i, kind, "inverse transform requires frequency-domain input")
            expected = last_fdc_kernel if last_fdc_kernel is not None else 1
            if layer.kernel_size != expected:
                raise _fail(
                    i, kind,
                    f"artifact cut {layer.kernel_size} does not match the preceding "
                    f"frequency-domain kernel size {expected}",
                )
            cut = layer.kernel_size - 1
            if h - cut < 1 or w - cut < 1:
                raise _fail(i, kind, f"artifact cut {cut} exhausts extents {h}x{w}")
            h, w = h - cut, w - cut
            domain = "spatial"
        elif kind in ("full_fdc", "spatial_conv"):
            if domain != "spatial":
                raise _fail(i, kind, f"spatial-domain layer applied in {domain} domain")
            if layer.in_channels != c:
                raise _fail(i, kind, f"expects {layer.in_channels} channels, gets {c}")
            n = layer.kernel_size
            if h - n + 1 < 1 or w - n + 1 < 1:
                raise _fail(i, kind, f"kernel {n} exceeds extents {h}x{w}")
            c = layer.out_channels
            h, w = h - n + 1, w - n + 1
        elif kind == "max_pool":
            if domain != "spatial":
                raise _fail(i, kind, f"spatial pooling applied in {domain} domain")
            if h % 2 != 0 or w % 2 != 0:
                raise _fail(i, kind, f"2x2 pooling requires even extents, got {h}x{w}")
            h, w = h // 2, w // 2
        elif kind == "relu":
            if domain == "frequency":
                raise _fail(i, kind, "activation undefined on complex spectra")
        elif kind == "flatten":
            if domain != "spatial":
                raise _fail(i, kind, f"flatten requires spatial input, in {domain}")
            c, h, w = c * h * w, 1, 1
            domain = "features"
        elif kind == "dense":
            if domain != "features":
                raise _fail(i, kind, "dense layer requires flattened features")
            if layer.in_channels != c:
                raise _fail(i, kind, f"expects {layer.in_channels} features, gets {c}")
            c = layer.out_channels
        stages.append(ShapeStage(index=i, kind=kind, domain=domain, channels=c, height=h, width=w))
    if domain != "features":
        raise ValueError(f"model ends in {domain} domain; expected a dense head")
    if c != spec.class_count:
        raise ValueError(f"final layer emits {c} features; class count is {spec.class_count}")
    return tuple(stages)


def _layer_parameter_count(layer: LayerSpec) -> int:
    if layer.kind in ("fdc", "full_fdc"):
        return layer.out_channels * layer.kernel_size**2
    if layer.kind == "spatial_conv":
        return layer.out_channels * layer.in_channels * layer.kernel_size**2 + layer.out_channels
    if layer.kind == "dense":
        return layer.out_channels * layer.in_channels + layer.out_channels
    return 0


def _as_spec(model: Union["Model", ModelSpec]) -> ModelSpec:
    return model if isinstance(model, ModelSpec) else model.spec


def count_parameters(model: Union["Model", ModelSpec]) -> int:
    """Total trainable scalars, computed from the declaration (no
    allocation): S*n*n per frequency-domain convolution, S*C*n*n + S per
    spatial convolution, out*(in+1) per dense layer."""
    return sum(_layer_parameter_count(layer) for layer in _as_spec(model).layers)


def conv_weight_count(model: Union["Model", ModelSpec]) -> int:
    """Kernel weights only (no biases) across all convolution layers,
    the basis for paired-architecture ratio comparisons."""
    total = 0
    for layer in _as_spec(model).layers:
        if layer.kind in ("fdc", "full_fdc"):
            total += layer.out_channels * layer.kernel_size**2
        elif layer.kind == "spatial_conv":
            total += layer.out_channels * layer.in_channels * layer.kernel_size**2
    return total


def conv_weight_factors(model: Union["Model", ModelSpec]) -> tuple[int, ...]:
    """Per-convolution-layer weight-reduction factor of the channel-
    independent layout versus a summed convolution of the same channel
    plan: exactly C for each layer, in model order."""
    return tuple(
        layer.in_channels
        for layer in _as_spec(model).layers
        if layer.kind in ("fdc", "full_fdc", "spatial_conv")
    )


# --------------------------------------------------------------------------
# Builders


def build_fdcnn(
    scale: int = 64,
    channel_plan: Sequence[int] = (1, 2, 4, 8, 16),
    *,
    kernel_size: int = 3,
    dense_widths: Sequence[int] = (32,),
    class_count: int = 2,
) -> ModelSpec:
    """All-frequency classifier: one forward transform (with shift), then
    alternating frequency-domain convolution and pooling stages (pooling
    halves the extent after each convolution), one inverse transform with
    artifact removal, one ReLU, and a dense head.  Exactly two domain
    transforms per forward pass."""
    stages = len(channel_plan) - 1
    if stages < 1:
        raise ValueError("channel plan needs at least one stage")
    layers: list[LayerSpec] = [LayerSpec(kind="rfft")]
    extent = scale
    for i in range(stages):
        layers.append(
            LayerSpec(
                kind="fdc",
                in_channels=channel_plan[i],
                out_channels=channel_plan[i + 1],
                kernel_size=kernel_size,
            )
        )
        if extent % 2 != 0:
            raise ValueError(f"extent {extent} cannot be halved at pooling stage {i}")
        extent //= 2
        layers.append(LayerSpec(kind="fdp", pool_target=extent))
    layers.append(LayerSpec(kind="irfft_with_artifact_removal", kernel_size=kernel_size))
    layers.append(LayerSpec(kind="relu"))
    layers.append(LayerSpec(kind="flatten"))
    features = channel_plan[-1] * (extent - (kernel_size - 1)) ** 2
    for width in dense_widths:
        layers.append(LayerSpec(kind="dense", in_channels=features, out_channels=width))
        features = width
    layers.append(LayerSpec(kind="dense", in_channels=features, out_channels=class_count))
    return ModelSpec(layers=tuple(layers), input_extent=scale,
                     input_channels=channel_plan[0], class_count=class_count)


def build_cnn_equivalent(
    channel_plan: Sequence[int] = (1, 2, 4, 8, 16),
    *,
    input_extent: Optional[int] = None,
    kernel_size: int = 3,
    dense_widths: Sequence[int] = (32,),
    class_count: int = 2,
) -> ModelSpec:
    """Spatial twin of build_fdcnn: the same channel plan as summed
    (convolution-over-volume) layers, 2x2 max pooling and a ReLU after
    every pooling, and the identical dense head.

    The default input extent is 64 - (kernel_size - 1): the frequency
    model's first stage loses kernel_size - 1 pixels to artifact removal,
    so starting the spatial model smaller by the same margin makes every
    stage boundary (and the flattened feature count) line up exactly.
    """
    if input_extent is None:
        input_extent = 64 - (kernel_size - 1)
    stages = len(channel_plan) - 1
    if stages < 1:
        raise ValueError("channel plan needs at least one stage")
    layers: list[LayerSpec] = []
    extent = input_extent
    for i in range(stages):
        layers.append(
            LayerSpec(
                kind="spatial_conv",
                in_channels=channel_plan[i],
                out_channels=channel_plan[i + 1],
                kernel_size=kernel_size,
            )
        )
        extent -= kernel_size - 1
        if extent < 2 or extent % 2 != 0:
            raise ValueError(f"extent {extent} cannot be max-pooled at stage {i}")
        layers.append(LayerSpec(kind="max_pool"))
        extent //= 2
        layers.append(LayerSpec(kind="relu"))
    layers.append(LayerSpec(kind="flatten"))
    features = channel_plan[-1] * extent**2
    for width in dense_widths:
        layers.append(LayerSpec(kind="dense", in_channels=features, out_channels=width))
        features = width
    layers.append(LayerSpec(kind="dense", in_channels=features, out_channels=class_count))
    return ModelSpec(layers=tuple(layers), input_extent=input_extent,
                     input_channels=channel_plan[0], class_count=class_count)


VGG_VARIANTS = ("vgg16", "1fullfdc", "3fullfdc")

# Standard VGG16 block widths and convolution counts; block 4 is where the
# variants substitute frequency-domain layers.
_VGG_BLOCKS = ((64, 2), (128, 2), (256, 3), (512, 3), (512, 3))
_VGG_REPLACED_BLOCK = 3
_VGG_HEAD_WIDTH = 4096

# Smallest extent on which the padding-free 13-convolution chain reaches a
# 1x1 block-5 output; the documented default for desk-scale runs.
DEFAULT_VGG_EXTENT = 212


def build_vgg16_variant(
    variant: str,
    scale: int = DEFAULT_VGG_EXTENT,
    *,
    width_divisor: int = 1,
    in_channels: int = 1,
    class_count: int = 2,
) -> ModelSpec:
    """VGG16 topology with padding-free convolutions and a ReLU after
    every convolution.  Variant '1fullfdc' replaces the first block-4
    convolution with a frequency-domain drop-in; '3fullfdc' replaces all
    three.  ``width_divisor`` scales every channel and head width down for
    desk-scale runs while preserving the replacement structure."""
    if variant not in VGG_VARIANTS:
        raise ValueError(f"unknown variant {variant!r}; expected one of {VGG_VARIANTS}")
    if width_divisor < 1:
        raise ValueError("width divisor must be >= 1")
    replaced = {0} if variant == "1fullfdc" else {0, 1, 2} if variant == "3fullfdc" else set()
    layers: list[LayerSpec] = []
    c = in_channels
    extent = scale
    for block_index, (width, conv_count) in enumerate(_VGG_BLOCKS):
        out = max(1, width // width_divisor)
        for conv_index in range(conv_count):
            kind = (
                "full_fdc"
                if block_index == _VGG_REPLACED_BLOCK and conv_index in replaced
                else "spatial_conv"
            )
            layers.append(
                LayerSpec(kind=kind, in_channels=c, out_channels=out, kernel_size=3)
            )
            layers.append(LayerSpec(kind="relu"))
            c = out
            extent -= 2
            if extent < 1:
                raise ValueError(f"input extent {scale} exhausted in block {block_index + 1}")
        if extent % 2 != 0:
            raise ValueError(
                f"extent {extent} after block {block_index + 1} is odd; "
                f"cannot max-pool (try the default extent {DEFAULT_VGG_EXTENT})"
            )
        layers.append(LayerSpec(kind="max_pool"))
        extent //= 2
    layers.append(LayerSpec(kind="flatten"))
    features = c * extent**2
    head = max(1, _VGG_HEAD_WIDTH // width_divisor)
    for _ in range(2):
        layers.append(LayerSpec(kind="dense", in_channels=features, out_channels=head))
        layers.append(LayerSpec(kind="relu"))
        features = head
    layers.append(LayerSpec(kind="dense", in_channels=features, out_channels=class_count))
    return ModelSpec(layers=tuple(layers), input_extent=scale,
                     input_channels=in_channels, class_count=class_count)


# --------------------------------------------------------------------------
# Runtime


def _layer_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence((seed, 2, index)).generate_state(1)[0])


class _RfftAdapter:
    params: dict = {}

    def __init__(self, spec: LayerSpec, seed: int):
        pass

    def forward(self, x: np.ndarray, train: bool) -> ComplexTensor:
        t = rfft2(RealTensor._trusted(np.asarray(x, dtype=np.float64)))
        self._height = t.height
        shifted = np.roll(t.data, t.height // 2, axis=-2)
        return ComplexTensor._trusted(shifted, t.spatial_width)

    def backward(self, upstream: ComplexTensor) -> np.ndarray:
        unshifted = np.roll(upstream.data, -(self._height // 2), axis=-2)
        return rfft2_adjoint(
            ComplexTensor._trusted(unshifted, upstream.spatial_width)
        ).data

    def gradients(self) -> dict:
        return {}

    def zero_gradients(self) -> None:
        pass

    def after_update(self) -> None:
        pass


class _FdcAdapter:
    def __init__(self, spec: LayerSpec, seed: int):
        cfg = ConvConfig(
            in_channels=spec.in_channels,
            out_channels=spec.out_channels,
            kernel_height=spec.kernel_size,
            kernel_width=spec.kernel_size,
        )
        bank = kaiming_init(KernelBank.allocate(cfg, layout="cic"), _layer_seed(seed, 0))
        self.layer = FdcLayer(bank)
        self.params = {"kernels": self.layer.weights}
        self._grad = np.zeros_like(self.layer.weights)

    def forward(self, x: ComplexTensor, train: bool) -> ComplexTensor:
        self._input = x
        return fdc_forward(self.layer, x, shifted=True)

    def backward(self, upstream: ComplexTensor) -> ComplexTensor:
        input_grad, kernel_grad = fdc_backward(self.layer, self._input, upstream, shifted=True)
        self._grad += kernel_grad
        return input_grad

    def gradients(self) -> dict:
        return {"kernels": self._grad}

    def zero_gradients(self) -> None:
        self._grad[...] = 0.0

    def after_update(self) -> None:
        self.layer.invalidate_cache()


class _FullFdcAdapter:
    def __init__(self, spec: LayerSpec, seed: int):
        cfg = ConvConfig(
            in_channels=spec.in_channels,
            out_channels=spec.out_channels,
            kernel_height=spec.kernel_size,
            kernel_width=spec.kernel_size,
        )
        bank = kaiming_init(KernelBank.allocate(cfg, layout="cic"), _layer_seed(seed, 0))
        self.layer = FdcLayer(bank)
        self.params = {"kernels": self.layer.weights}
        self._grad = np.zeros_like(self.layer.weights)

    def forward(self, x: np.ndarray, train: bool) -> np.ndarray:
        self._input = np.asarray(x)
        return full_fdc_forward(self.layer, self._input)

    def backward(self, upstream: np.ndarray) -> np.ndarray:
        input_grad, kernel_grad = full_fdc_backward(self.layer, self._input, upstream)
        self._grad += kernel_grad
        return input_grad

    def gradients(self) -> dict:
        return {"kernels": self._grad}

    def zero_gradients(self) -> None:
        self._grad[...] = 0.0

    def after_update(self) -> None:
        self.layer.invalidate_cache()


class _SpatialConvAdapter:
    def __init__(self, spec: LayerSpec, seed: int):
        cfg = ConvConfig(
            in_channels=spec.in_channels,
            out_channels=spec.out_channels,
            kernel_height=spec.kernel_size,
            kernel_width=spec.kernel_size,
        )
        self.bank = kaiming_init(KernelBank.allocate(cfg, layout="cov"), _layer_seed(seed, 0))
        self.bias = np.zeros(spec.out_channels, dtype=np.float64)
        self.params = {"kernels": self.bank.weights, "bias": self.bias}
        self._kernel_grad = np.zeros_like(self.bank.weights)
        self._bias_grad = np.zeros_like(self.bias)

    def forward(self, x: np.ndarray, train: bool) -> np.ndarray:
        self._input = np.asarray(x)
        out = conv_over_volume(RealTensor._trusted(self._input), self.bank)
        return out.data + self.bias[None, :, None, None]

    def backward(self, upstream: np.ndarray) -> np.ndarray:
        from numpy.lib.stride_tricks import sliding_window_view

        g = np.asarray(upstream)
        x = self._input
        k = self.bank.weights
        n = k.shape[-1]
        windows = sliding_window_view(x, (n, n), axis=(2, 3))
        self._kernel_grad += np.einsum("bcijpq,bsij->scpq", windows, g, optimize=True)
        self._bias_grad += g.sum(axis=(0, 2, 3))
        padded = np.pad(g, ((0, 0), (0, 0), (n - 1, n - 1), (n - 1, n - 1)))
        gwin = sliding_window_view(padded, (n, n), axis=(2, 3))
        flipped = k[:, :, ::-1, ::-1]
        return np.einsum("bsijpq,scpq->bcij", gwin, flipped, optimize=True)

    def gradients(self) -> dict:
        return {"kernels": self._kernel_grad, "bias": self._bias_grad}

    def zero_gradients(self) -> None:
        self._kernel_grad[...] = 0.0
        self._bias_grad[...] = 0.0

    def after_update(self) -> None:
        pass


class _FdpAdapter:
    params: dict = {}

    def __init__(self, spec: LayerSpec, seed: int):
        self.layer = FdpLayer(spec.pool_target, spec.pool_target)

    def forward(self, x: ComplexTensor, train: bool) -> ComplexTensor:
        self._input_height = x.height
        self._input_spatial_width = x.spatial_width
        return fdp_forward(self.layer, x, shifted=True)

    def backward(self, upstream: ComplexTensor) -> ComplexTensor:
        return fdp_backward(
            self.layer, upstream, self._input_height, self._input_spatial_width
        )

    def gradients(self) -> dict:
        return {}

    def zero_gradients(self) -> None:
        pass

    def after_update(self) -> None:
        pass


class _IrfftArtifactAdapter:
    params: dict = {}

    def __init__(self, spec: LayerSpec, seed: int):
        self.kernel_size = spec.kernel_size

    def forward(self, x: ComplexTensor, train: bool) -> np.ndarray:
        self._height = x.height
        self._spatial_width = x.spatial_width
        unshifted = np.roll(x.data, -(x.height // 2), axis=-2)
        spatial = irfft2(ComplexTensor._trusted(unshifted, x.spatial_width))
        cut = self.kernel_size - 1
        if cut:
            spatial = crop_region(spatial, cut, 0, cut, 0)
        return spatial.data

    def backward(self, upstream: np.ndarray) -> ComplexTensor:
        cut = self.kernel_size - 1
        g = RealTensor._trusted(np.asarray(upstream))
        if cut:
            g = zero_pad(g, cut, 0, cut, 0)
        spec_grad = irfft2_adjoint(g)
        shifted = np.roll(spec_grad.data, self._height // 2, axis=-2)
        return ComplexTensor._trusted(shifted, self._spatial_width)

    def gradients(self) -> dict:
        return {}

    def zero_gradients(self) -> None:
        pass

    def after_update(self) -> None:
        pass


class _MaxPoolAdapter:
    params: dict = {}

    def __init__(self, spec: LayerSpec, seed: int):
        pass

    def forward(self, x: np.ndarray, train: bool) -> np.ndarray:
        self._input = np.asarray(x)
        return _nn.max_pool2(self._input)

    def backward(self, upstream: np.ndarray) -> np.ndarray:
        return _nn.max_pool2_backward(self._input, upstream)

    def gradients(self) -> dict:
        return {}

    def zero_gradients(self) -> None:
        pass

    def after_update(self) -> None:
        pass


class _ReluAdapter:
    params: dict = {}

    def __init__(self, spec: LayerSpec, seed: int):
        pass

    def forward(self, x: np.ndarray, train: bool) -> np.ndarray:
        self._input = np.asarray(x)
        return _nn.relu(self._input)

    def backward(self, upstream: np.ndarray) -> np.ndarray:
        return _nn.relu_backward(self._input, upstream)

    def gradients(self) -> dict:
        return {}

    def zero_gradients(self) -> None:
        pass

    def after_update(self) -> None:
        pass


class _FlattenAdapter:
    params: dict = {}

    def __init__(self, spec: LayerSpec, seed: int):
        pass

    def forward(self, x: np.ndarray, train: bool) -> np.ndarray:
        self._shape = np.asarray(x).shape
        return np.asarray(x).reshape(self._shape[0], -1)

    def backward(self, upstream: np.ndarray) -> np.ndarray:
        return np.asarray(upstream).reshape(self._shape)

    def gradients(self) -> dict:
        return {}

    def zero_gradients(self) -> None:
        pass

    def after_update(self) -> None:
        pass


class _DenseAdapter:
    def __init__(self, spec: LayerSpec, seed: int):
        rng = np.random.default_rng(_layer_seed(seed, 0))
        fan_in = spec.in_channels
        self.weights = rng.normal(0.0, np.sqrt(2.0 / fan_in), (spec.out_channels, fan_in))
        self.bias = np.zeros(spec.out_channels, dtype=np.float64)
        self.params = {"weights": self.weights, "bias": self.bias}
        self._weight_grad = np.zeros_like(self.weights)
        self._bias_grad = np.zeros_like(self.bias)

    def forward(self, x: np.ndarray, train: bool) -> np.ndarray:
        self._input = np.asarray(x)
        return _nn.fully_connected(self._input, self.weights, self.bias)

    def backward(self, upstream: np.ndarray) -> np.ndarray:
        input_grad, weight_grad, bias_grad = _nn.fully_connected_backward(
            self._input, self.weights, upstream
        )
        self._weight_grad += weight_grad
        self._bias_grad += bias_grad
        return input_grad

    def gradients(self) -> dict:
        return {"weights": self._weight_grad, "bias": self._bias_grad}

    def zero_gradients(self) -> None:
        self._weight_grad[...] = 0.0
        self._bias_grad[...] = 0.0

    def after_update(self) -> None:
        pass


_ADAPTERS = {
    "rfft": _RfftAdapter,
    "fdc": _FdcAdapter,
    "full_fdc": _FullFdcAdapter,
    "spatial_conv": _SpatialConvAdapter,
    "fdp": _FdpAdapter,
    "irfft_with_artifact_removal": _IrfftArtifactAdapter,
    "max_pool": _MaxPoolAdapter,
    "relu": _ReluAdapter,
    "flatten": _FlattenAdapter,
    "dense": _DenseAdapter,
}


class Model:
    """Executable model: one adapter per layer spec, parameters shared by
    reference with the optimizer store so in-place updates are visible."""

    def __init__(self, spec: ModelSpec, seed: int = 0):
        self.spec = spec
        self.seed = seed
        self.layers = [
            _ADAPTERS[layer.kind](layer, _layer_seed(seed, i))
            for i, layer in enumerate(spec.layers)
        ]
        self._store: Optional[_nn.ParameterStore] = None

    def forward(self, batch: np.ndarray, train: bool = False) -> np.ndarray:
        x = np.asarray(batch, dtype=np.float64)
        if x.ndim == 3:
            x = x[:, None]
        if x.ndim != 4 or x.shape[1] != self.spec.input_channels or (
            x.shape[2] != self.spec.input_extent or x.shape[3] != self.spec.input_extent
        ):
            raise ValueError(
                f"expected batch of {self.spec.input_channels}x{self.spec.input_extent}"
                f"x{self.spec.input_extent} images, got {x.shape}"
            )
        out = x
        for adapter in self.layers:
            out = adapter.forward(out, train)
        return out

    def backward(self, logit_gradient: np.ndarray):
        g = logit_gradient
        for adapter in reversed(self.layers):
            g = adapter.backward(g)
        return g

    def parameters(self) -> dict[str, np.ndarray]:
        out: dict[str, np.ndarray] = {}
        for i, adapter in enumerate(self.layers):
            for name, array in adapter.params.items():
                out[f"layer{i:02d}.{name}"] = array
        return out

    def gradients(self) -> dict[str, np.ndarray]:
        out: dict[str, np.ndarray] = {}
        for i, adapter in enumerate(self.layers):
            for name, array in adapter.gradients().items():
                out[f"layer{i:02d}.{name}"] = array
        return out

    def zero_gradients(self) -> None:
        for adapter in self.layers:
            adapter.zero_gradients()

    def after_update(self) -> None:
        for adapter in self.layers:
            adapter.after_update()

    def parameter_store(self) -> _nn.ParameterStore:
        if self._store is None:
            self._store = _nn.ParameterStore(params=self.parameters())
        return self._store

    def load_parameters(self, arrays: dict[str, np.ndarray]) -> None:
        params = self.parameters()
        missing = set(params) - set(arrays)
        extra = set(arrays) - set(params)
        if missing or extra:
            raise ValueError(
                f"parameter sets differ (missing={sorted(missing)}, unexpected={sorted(extra)})"
            )
        for name, value in arrays.items():
            if params[name].shape != value.shape:
                raise ValueError(f"shape mismatch loading {name!r}")
            params[name][...] = value
        self.after_update()


def instantiate(spec: ModelSpec, seed: int = 0) -> Model:
    return Model(spec, seed)
