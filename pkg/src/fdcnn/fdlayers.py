"""Frequency-domain convolution and pooling layers.

The convolution here is a pointwise product of spectra (one product per
kernel, never summed over channels): each input channel is treated as an
independent image and meets exactly J = S/C kernels, so the layer performs
S single-channel products where a summed multi-channel convolution performs
S*C, and carries S*n*n weights instead of S*C*n*n.

Orientation bookkeeping, fixed by the spatial-equivalence tests:

* ``fdc_forward`` pads kernels to the image extents at the top-left corner
  exactly as stored and multiplies spectra — circular convolution.  A
  kernel that is a delta at (0,0) is the identity at any size.
* ``full_fdc_forward`` additionally lays each kernel out rotated 180 deg
  inside the top-left block before padding.  Circular convolution with
  that layout, cropped n-1 at the top/left (where the wrap-around lands),
  equals the valid un-flipped correlation of the reference engine.

Pooling crops the shifted spectrum to a rectangle: rows symmetrically from
top and bottom, columns from the right only (the reduced layout stores no
left-mirror columns).  The crop is pure slicing — O(1) views, no copy —
which is what makes its constant-time benchmark behavior real.
"""

from __future__ import annotations

from typing import Optional, Union

import numpy as np
import scipy.fft as _fft

from .spatial import ConvConfig, KernelBank, OpCounter
from .spectral import irfft2, irfft2_adjoint, reduced_width, rfft2, rfft2_adjoint
from .tensors import ComplexTensor, RealTensor, crop_region, zero_pad

__all__ = [
    "FdcLayer",
    "FdpLayer",
    "weight_count_cic",
    "kaiming_init",
    "cic",
    "fdc_forward",
    "fdc_backward",
    "remove_artifacts",
    "full_fdc_forward",
    "full_fdc_backward",
    "fdp_forward",
    "fdp_backward",
]


def weight_count_cic(cfg: ConvConfig) -> int:
    """S * n_h * n_w — independent of the input channel count."""
    return cfg.out_channels * cfg.kernel_height * cfg.kernel_width


def kaiming_init(bank: KernelBank, seed: int) -> KernelBank:
    """Draw weights ~ Normal(0, sqrt(2 / fan_in)); fan_in is n*n for the
    cic layout (each kernel sees one channel) and n*n*C for cov."""
    cfg = bank.config
    fan_in = cfg.kernel_height * cfg.kernel_width
    if bank.layout == "cov":
        fan_in *= cfg.in_channels
    rng = np.random.default_rng(seed)
    weights = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=bank.weights.shape)
    return bank.with_weights(weights)


class FdcLayer:
    """State of one frequency-domain convolution layer: a kernel bank in
    cic layout plus a cache of transformed kernel spectra.

    The cache is keyed by (image extents, dtype, layout flags) and tagged
    with a weight version; ``invalidate_cache`` must be called after any
    weight update (the trainer does) so kernels are re-transformed exactly
    once per weight version per geometry.  Single-writer contract: weight
    updates require exclusive access; concurrent forward passes are safe.
    """

    def __init__(self, bank: KernelBank):
        if bank.layout != "cic":
            raise ValueError("FdcLayer requires a kernel bank in cic layout")
        if bank.config.kernel_height != bank.config.kernel_width:
            raise ValueError("FdcLayer kernels must be square")
        self.bank = bank
        self._version = 0
        self._spectra: dict[tuple, tuple[int, np.ndarray]] = {}

    @property
    def kernel_size(self) -> int:
        return self.bank.config.kernel_height

    @property
    def out_channels(self) -> int:
        return self.bank.config.out_channels

    @property
    def weights(self) -> np.ndarray:
        return self.bank.weights

    def invalidate_cache(self) -> None:
        self._version += 1
        self._spectra.clear()

    def kernel_spectra(
        self, height: int, width: int, dtype: np.dtype, *, flip: bool, shifted: bool
    ) -> np.ndarray:
        """Transformed kernels (S, H, W//2+1) for the given image geometry;
        ``dtype`` is the spectra dtype the products will run in."""
        real_dtype = np.empty(0, dtype=dtype).real.dtype
        key = (height, width, real_dtype.str, flip, shifted)
        hit = self._spectra.get(key)
        if hit is not None and hit[0] == self._version:
            return hit[1]
        n = self.kernel_size
        block = self.weights[:, ::-1, ::-1] if flip else self.weights
        padded = np.zeros((self.out_channels, height, width), dtype=real_dtype)
        padded[:, :n, :n] = block
        spectra = _fft.rfft2(padded, axes=(-2, -1))
        if shifted:
            spectra = np.roll(spectra, height // 2, axis=-2)
        self._spectra[key] = (self._version, spectra)
        return spectra


class FdpLayer:
    """Target spatial extents of one frequency-domain pooling layer."""

    def __init__(self, target_height: int, target_width: int):
        if target_height < 1 or target_width < 1:
            raise ValueError("pooling targets must be >= 1")
        self.target_height = target_height
        self.target_width = target_width


def _require_mod(S: int, C: int) -> int:
    if S % C != 0:
        raise ValueError(
            f"channel-independent convolution requires S mod C = 0; got S={S}, C={C}"
        )
    return S // C


def cic(
    images: ComplexTensor,
    kernels_fd: ComplexTensor,
    counter: Optional[OpCounter] = None,
) -> ComplexTensor:
    """Channel Independent Convolution in the frequency domain.

    Kernels are partitioned contiguously: kernels [c*J, (c+1)*J) belong to
    input channel c, and output channel c*J + j is the pointwise product of
    image channel c with kernel c*J + j.  Exactly S channel products per
    volume; outputs are concatenated, never summed.
    """
    if images.spatial_width != kernels_fd.spatial_width or images.height != kernels_fd.height:
        raise ValueError(
            f"image spectra {images.spatial_shape} and kernel spectra "
            f"{kernels_fd.spatial_shape} must share extents"
        )
    if kernels_fd.batch != 1:
        raise ValueError("kernel spectra carry channels, not batches")
    B, C, H, Wr = images.data.shape
    S = kernels_fd.channels
    J = _require_mod(S, C)
    grouped = kernels_fd.data[0].reshape(C, J, H, Wr)
    out = (images.data[:, :, None, :, :] * grouped[None]).reshape(B, S, H, Wr)
    if counter is not None:
        counter.add(B * S)
    return ComplexTensor._trusted(out, images.spatial_width)


def fdc_forward(
    layer: FdcLayer,
    images: ComplexTensor,
    *,
    shifted: bool = False,
    counter: Optional[OpCounter] = None,
) -> ComplexTensor:
    """Frequency-domain convolution: pad kernels to the image extents
    (top-left), transform them, and apply the channel-independent product.
    The input images are already spectra and are never transformed.

    ``shifted`` declares that the incoming spectra are in shifted row
    order; kernel spectra are then shifted identically so the product is
    the same convolution in permuted coordinates.
    """
    if not isinstance(images, ComplexTensor):
        raise TypeError("fdc_forward expects frequency-domain images")
    H, W = images.height, images.spatial_width
    if shifted and H % 2 != 0:
        raise ValueError("shifted spectra require an even height")
    spectra = layer.kernel_spectra(H, W, images.data.dtype, flip=False, shifted=shifted)
    kernels_fd = ComplexTensor._trusted(spectra[None], W)
    return cic(images, kernels_fd, counter=counter)


def remove_artifacts(image: Union[RealTensor, np.ndarray], kernel_size: int) -> Union[RealTensor, np.ndarray]:
    """Cut the n-1 wrap-around rows/columns from the top and left, leaving
    the N - n + 1 region a valid spatial convolution would produce."""
    if kernel_size < 1:
        raise ValueError("kernel size must be >= 1")
    cut = kernel_size - 1
    if cut == 0:
        return image
    wrap = isinstance(image, RealTensor)
    t = image if wrap else RealTensor._trusted(np.asarray(image))
    if t.height <= cut or t.width <= cut:
        raise ValueError(
            f"image extent {t.height}x{t.width} too small to remove {cut} artifact pixels"
        )
    out = crop_region(t, cut, 0, cut, 0)
    return out if wrap else out.data.reshape(np.asarray(image).shape[:-2] + out.data.shape[-2:])


def full_fdc_forward(
    layer: FdcLayer,
    images: Union[RealTensor, np.ndarray],
    *,
    distribute_artifacts: bool = False,
    counter: Optional[OpCounter] = None,
) -> Union[RealTensor, np.ndarray]:
    """Drop-in replacement for a spatial convolution layer: transform,
    channel-independent product, inverse transform, artifact removal.
    Output shape (B, C*J, N-n+1, N-n+1).

    With ``distribute_artifacts`` the wrap-around band is rotated to split
    evenly across the borders instead of being cropped (size-preserving);
    default off.
    """
    wrap = isinstance(images, RealTensor)
    x = images if wrap else RealTensor(np.asarray(images))
    n = layer.kernel_size
    H, W = x.height, x.width
    spectra = layer.kernel_spectra(H, W, np.result_type(x.dtype, np.complex64),
                                   flip=True, shifted=False)
    kernels_fd = ComplexTensor._trusted(spectra[None], W)
    product = cic(rfft2(x), kernels_fd, counter=counter)
    y = irfft2(product)
    if distribute_artifacts:
        shift = -((n - 1) // 2)
        out = RealTensor._trusted(np.roll(y.data, (shift, shift), axis=(-2, -1)))
    else:
        out = remove_artifacts(y, n)
    return out if wrap else out.data


def fdc_backward(
    layer: FdcLayer,
    images: ComplexTensor,
    upstream_gradient: ComplexTensor,
    *,
    shifted: bool = False,
) -> tuple[ComplexTensor, np.ndarray]:
    """Adjoints of fdc_forward with respect to the real inner product on
    spectra: the adjoint of a pointwise product is a pointwise product
    with the conjugate, and kernel gradients flow back through the
    kernel's forward transform to real spatial tensors (S, n, n)."""
    B, C, H, Wr = images.data.shape
    S = upstream_gradient.channels
    J = _require_mod(S, C)
    W = images.spatial_width
    if upstream_gradient.data.shape != (B, S, H, Wr):
        raise ValueError(
            f"upstream gradient shape {upstream_gradient.data.shape} does not match "
            f"forward output ({B}, {S}, {H}, {Wr})"
        )
    spectra = layer.kernel_spectra(H, W, images.data.dtype, flip=False, shifted=shifted)
    g = upstream_gradient.data.reshape(B, C, J, H, Wr)
    grouped = spectra.reshape(C, J, H, Wr)
    input_grad = (g * np.conj(grouped[None])).sum(axis=2)
    kernel_spec_grad = (g * np.conj(images.data[:, :, None])).sum(axis=0).reshape(S, H, Wr)
    kernel_grad = _kernel_spectra_adjoint(kernel_spec_grad, layer.kernel_size, W,
                                          flip=False, shifted=shifted)
    return ComplexTensor._trusted(input_grad, W), kernel_grad


def _kernel_spectra_adjoint(
    spec_grad: np.ndarray, n: int, spatial_width: int, *, flip: bool, shifted: bool
) -> np.ndarray:
    """Adjoint of FdcLayer.kernel_spectra: undo shift, pull back through the
    forward transform, crop the n x n block, undo the layout rotation."""
    H = spec_grad.shape[-2]
    if shifted:
        spec_grad = np.roll(spec_grad, H // 2, axis=-2)
    padded_grad = rfft2_adjoint(ComplexTensor._trusted(spec_grad[None], spatial_width))
    block = padded_grad.data[0, :, :n, :n]
    return block[:, ::-1, ::-1] if flip else block.copy()


def full_fdc_backward(
    layer: FdcLayer,
    images: Union[RealTensor, np.ndarray],
    upstream_gradient: Union[RealTensor, np.ndarray],
    *,
    distribute_artifacts: bool = False,
) -> tuple[np.ndarray, np.ndarray]:
    """Adjoint chain of full_fdc_forward: artifact-removal adjoint is
    top/left zero-padding, then the inverse-transform, product, and
    forward-transform adjoints in reverse order.  Returns plain arrays
    (input gradient (B, C, H, W), kernel gradient (S, n, n))."""
    x = images if isinstance(images, RealTensor) else RealTensor(np.asarray(images))
    g = upstream_gradient.data if isinstance(upstream_gradient, RealTensor) else np.asarray(upstream_gradient)
    n = layer.kernel_size
    B, C, H, W = x.data.shape
    S = layer.out_channels
    J = _require_mod(S, C)
    if distribute_artifacts:
        shift = (n - 1) // 2
        g_full = np.roll(g, (shift, shift), axis=(-2, -1))
    else:
        cut = n - 1
        g_full = zero_pad(RealTensor._trusted(g), cut, 0, cut, 0).data if cut else g
    product_grad = irfft2_adjoint(RealTensor._trusted(g_full))
    spectra = layer.kernel_spectra(H, W, product_grad.data.dtype, flip=True, shifted=False)
    x_fd = rfft2(x)
    gp = product_grad.data.reshape(B, C, J, H, x_fd.reduced_width)
    grouped = spectra.reshape(C, J, H, x_fd.reduced_width)
    input_spec_grad = (gp * np.conj(grouped[None])).sum(axis=2)
    input_grad = rfft2_adjoint(ComplexTensor._trusted(input_spec_grad, W)).data
    kernel_spec_grad = (gp * np.conj(x_fd.data[:, :, None])).sum(axis=0).reshape(S, H, -1)
    kernel_grad = _kernel_spectra_adjoint(kernel_spec_grad, n, W, flip=True, shifted=False)
    return input_grad, kernel_grad


def fdp_forward(layer: FdpLayer, images: ComplexTensor, shifted: bool) -> ComplexTensor:
    """Frequency-domain pooling: crop the shifted spectrum to the target
    extents — (H - target)/2 rows from top and bottom each, and all
    frequency columns beyond floor(target_width/2)+1 from the right.  The
    result is a zero-copy view with the recorded spatial width updated.

    The caller must assert the shift state explicitly; unshifted spectra
    are rejected rather than guessed at.
    """
    if shifted is not True:
        raise ValueError(
            "frequency-domain pooling operates on shifted spectra only; pass shifted=True"
        )
    H, SW = images.height, images.spatial_width
    th, tw = layer.target_height, layer.target_width
    if th >= H or tw >= SW:
        raise ValueError(
            f"pooling target {th}x{tw} must be strictly smaller than input {H}x{SW}"
        )
    if (H - th) % 2 != 0:
        raise ValueError(
            f"cannot remove rows symmetrically: input height {H} and target {th} "
            f"differ by an odd count"
        )
    top = (H - th) // 2
    view = images.data[..., top : top + th, : reduced_width(tw)]
    return ComplexTensor._trusted(view, tw)


def fdp_backward(
    layer: FdpLayer,
    upstream_gradient: ComplexTensor,
    input_height: int,
    input_spatial_width: int,
) -> ComplexTensor:
    """Adjoint of the pooling crop: zero-insertion into the removed bins."""
    th, tw = layer.target_height, layer.target_width
    g = upstream_gradient.data
    if g.shape[-2] != th or g.shape[-1] != reduced_width(tw):
        raise ValueError(
            f"upstream gradient {g.shape[-2:]} does not match pooling target {th}x{tw}"
        )
    top = (input_height - th) // 2
    out = np.zeros(g.shape[:-2] + (input_height, reduced_width(input_spatial_width)), dtype=g.dtype)
    out[..., top : top + th, : g.shape[-1]] = g
    return ComplexTensor._trusted(out, input_spatial_width)
