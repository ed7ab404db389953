"""Spatial-domain reference engine: valid correlation, multi-channel
convolutions over volume, and their weight accounting.

The single-kernel op is the defining double sum; the volume op is the same
arithmetic expressed as a patch-matrix product (classic im2col lowering,
loop-tiled over output rows so the workspace stays bounded) so the timing
baseline is a credible CPU implementation rather than a strawman.  A naive
quadruple-loop oracle lives in the tests and pins both.

Orientation: the kernel is NOT flipped — out[i,j] = sum I[i+k, j+l] K[k,l]
(deep-learning convention, i.e. correlation).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .tensors import RealTensor

__all__ = [
    "ConvConfig",
    "KernelBank",
    "OpCounter",
    "conv2d_valid",
    "conv_over_volume",
    "weight_count_cov",
]

# Bound on the transient patch-matrix workspace of the im2col lowering.
_IM2COL_WORKSPACE_BYTES = 128 * 1024 * 1024


@dataclass(frozen=True)
class ConvConfig:
    """Channel and kernel extents of one convolution layer: C input
    channels, S output channels, an n x n kernel (odd n only — even
    kernels make wrap-around attribution ambiguous)."""

    in_channels: int
    out_channels: int
    kernel_height: int
    kernel_width: int

    def __post_init__(self) -> None:
        if min(self.in_channels, self.out_channels, self.kernel_height, self.kernel_width) < 1:
            raise ValueError(f"all config extents must be >= 1, got {self}")
        if self.kernel_height % 2 == 0 or self.kernel_width % 2 == 0:
            raise ValueError(
                f"kernel extents must be odd, got {self.kernel_height}x{self.kernel_width}"
            )


@dataclass(frozen=True)
class OpCounter:
    """Mutable tally of single-channel 2-D products performed, used to
    compare the channel-product counts of the convolution strategies."""

    counts: dict = field(default_factory=lambda: {"channel_products": 0})

    def add(self, n: int) -> None:
        self.counts["channel_products"] += n

    @property
    def channel_products(self) -> int:
        return self.counts["channel_products"]


@dataclass(frozen=True)
class KernelBank:
    """Learnable kernels plus their layout.

    * ``cov`` layout: weights shaped (S, C, n, n) — S * C single-channel
      kernels, summed over channels at apply time.
    * ``cic`` layout: weights shaped (S, n, n) — S single-channel kernels,
      each applied to exactly one input channel, outputs concatenated.
    """

    config: ConvConfig
    layout: str
    weights: np.ndarray

    def __post_init__(self) -> None:
        if self.layout not in ("cov", "cic"):
            raise ValueError(f"layout must be 'cov' or 'cic', got {self.layout!r}")
        cfg = self.config
        expected = (
            (cfg.out_channels, cfg.in_channels, cfg.kernel_height, cfg.kernel_width)
            if self.layout == "cov"
            else (cfg.out_channels, cfg.kernel_height, cfg.kernel_width)
        )
        w = np.asarray(self.weights)
        if w.shape != expected:
            raise ValueError(
                f"{self.layout} weights must have shape {expected}, got {w.shape}"
            )
        object.__setattr__(self, "weights", w)

    @property
    def weight_count(self) -> int:
        return int(np.prod(self.weights.shape))

    def with_weights(self, weights: np.ndarray) -> "KernelBank":
        return KernelBank(self.config, self.layout, weights)

    @classmethod
    def allocate(
        cls, config: ConvConfig, layout: str, dtype: np.dtype = np.float64
    ) -> "KernelBank":
        """Zero-weight bank of the layout-correct shape."""
        shape = (
            (config.out_channels, config.in_channels, config.kernel_height, config.kernel_width)
            if layout == "cov"
            else (config.out_channels, config.kernel_height, config.kernel_width)
        )
        return cls(config, layout, np.zeros(shape, dtype=dtype))


def weight_count_cov(cfg: ConvConfig) -> int:
    """S * C * n_h * n_w."""
    return cfg.out_channels * cfg.in_channels * cfg.kernel_height * cfg.kernel_width


def _raster(x) -> np.ndarray:
    if isinstance(x, RealTensor):
        a = x.data
        if a.shape[0] != 1 or a.shape[1] != 1:
            raise ValueError("conv2d_valid takes a single-channel slice")
        return a[0, 0]
    a = np.asarray(x)
    if a.ndim != 2:
        raise ValueError(f"conv2d_valid takes a 2-D raster, got shape {a.shape}")
    return a


def conv2d_valid(image, kernel) -> np.ndarray:
    """Valid correlation of one raster with one kernel:
    out[i,j] = sum_{k,l} image[i+k, j+l] * kernel[k,l],
    output extent N - n + 1 per axis."""
    img = _raster(image)
    ker = np.asarray(kernel)
    if ker.ndim != 2:
        raise ValueError(f"kernel must be 2-D, got shape {ker.shape}")
    if ker.shape[0] > img.shape[0] or ker.shape[1] > img.shape[1]:
        raise ValueError(f"kernel {ker.shape} larger than image {img.shape}")
    windows = sliding_window_view(img, ker.shape)
    return np.einsum("ijkl,kl->ij", windows, ker, optimize=True)


def _conv_volume_single(
    image: np.ndarray, kmat: np.ndarray, nh: int, nw: int, chunk_rows: int
) -> np.ndarray:
    """One (C, H, W) volume against a (C*nh*nw, S) kernel matrix."""
    C, H, W = image.shape
    oh, ow = H - nh + 1, W - nw + 1
    S = kmat.shape[1]
    windows = sliding_window_view(image, (nh, nw), axis=(1, 2))  # (C, oh, ow, nh, nw)
    out = np.empty((oh, ow, S), dtype=image.dtype)
    for r0 in range(0, oh, chunk_rows):
        r1 = min(r0 + chunk_rows, oh)
        patches = np.ascontiguousarray(
            windows[:, r0:r1].transpose(1, 2, 0, 3, 4)
        ).reshape((r1 - r0) * ow, C * nh * nw)
        out[r0:r1] = (patches @ kmat).reshape(r1 - r0, ow, S)
    return out.transpose(2, 0, 1)


def conv_over_volume(
    image: Union[RealTensor, np.ndarray],
    bank: KernelBank,
    counter: Optional[OpCounter] = None,
) -> Union[RealTensor, np.ndarray]:
    """Multi-channel convolution: output channel s = sum over input channels
    of conv2d_valid(I_c, K_sc).  Accepts (B, C, H, W) or (C, H, W) input;
    output spatial extent is N - n + 1.

    The per-volume channel-product count is S*C (every kernel meets every
    input channel); batches multiply it.
    """
    if bank.layout != "cov":
        raise ValueError("conv_over_volume requires a bank in cov layout")
    wrap = isinstance(image, RealTensor)
    a = image.data if wrap else np.asarray(image)
    squeeze = a.ndim == 3
    if squeeze:
        a = a[None]
    if a.ndim != 4:
        raise ValueError(f"image must be (B, C, H, W) or (C, H, W), got shape {a.shape}")
    cfg = bank.config
    if a.shape[1] != cfg.in_channels:
        raise ValueError(
            f"image has {a.shape[1]} channels but bank expects {cfg.in_channels}"
        )
    nh, nw = cfg.kernel_height, cfg.kernel_width
    if a.shape[2] < nh or a.shape[3] < nw:
        raise ValueError(f"image extent {a.shape[2:]} smaller than kernel {nh}x{nw}")

    weights = bank.weights.astype(a.dtype, copy=False)
    kmat = np.ascontiguousarray(weights.reshape(cfg.out_channels, -1).T)
    ow = a.shape[3] - nw + 1
    row_bytes = ow * cfg.in_channels * nh * nw * a.dtype.itemsize
    chunk_rows = max(1, _IM2COL_WORKSPACE_BYTES // max(1, row_bytes))
    out = np.stack([_conv_volume_single(vol, kmat, nh, nw, chunk_rows) for vol in a])
    if counter is not None:
        counter.add(a.shape[0] * cfg.out_channels * cfg.in_channels)
    if squeeze:
        out = out[0]
    return RealTensor._trusted(out) if wrap else out
