"""2-D real-to-complex transforms, the half-width bookkeeping, the vertical
spectrum shift, kernel padding, and the adjoint maps used by training.

Conventions (fixed for the whole package):

* the forward transform is unnormalized; the inverse carries ``1/(H*W)``,
  so the convolution theorem needs no extra scale factor;
* a real ``(H, W)`` raster transforms to ``(H, W//2 + 1)`` complex bins
  (Hermitian-reduced width); the originating width rides on the tensor;
* the shift swaps the top and bottom halves of the rows (even heights
  only), placing low frequencies middle-left; columns are untouched.

The FFT engine is ``scipy.fft`` (pocketfft).  It preserves single
precision (float32 in, complex64 out) where ``numpy.fft`` silently
upcasts, which matters for the single-precision benchmark policy.
Correctness against the defining quadruple-sum DFT is pinned by the tests.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass

import numpy as np
import scipy.fft as _fft

from .tensors import ComplexTensor, RealTensor

__all__ = [
    "FftPlan",
    "FftPlanCache",
    "PLAN_CACHE",
    "reduced_width",
    "rfft2",
    "irfft2",
    "rfft_shift",
    "pad_kernel_to_image",
    "rfft2_adjoint",
    "irfft2_adjoint",
]


def reduced_width(spatial_width: int) -> int:
    """Number of stored frequency columns for a real signal of this width."""
    return spatial_width // 2 + 1


@dataclass(frozen=True)
class FftPlan:
    """Reusable per-size derived data.

    The transform engine keeps its own twiddle tables internally; what is
    worth amortizing across calls here is the Hermitian bookkeeping that
    the adjoint maps and energy accounting need.  ``column_weights`` holds
    the multiplicity of each stored column in the full spectrum: 1 for the
    self-conjugate columns (DC, and Nyquist when the width is even), 2 for
    every column whose mirror was dropped.
    """

    height: int
    width: int
    reduced: int
    column_weights: np.ndarray

    @staticmethod
    def build(height: int, width: int) -> "FftPlan":
        r = reduced_width(width)
        w = np.full(r, 2.0)
        w[0] = 1.0
        if width % 2 == 0:
            w[-1] = 1.0
        w.flags.writeable = False
        return FftPlan(height=height, width=width, reduced=r, column_weights=w)


class FftPlanCache:
    """Size-keyed plan store; safe for concurrent lookups."""

    def __init__(self) -> None:
        self._plans: dict[tuple[int, int], FftPlan] = {}
        self._lock = threading.Lock()

    def get(self, height: int, width: int) -> FftPlan:
        key = (height, width)
        plan = self._plans.get(key)
        if plan is None:
            with self._lock:
                plan = self._plans.get(key)
                if plan is None:
                    plan = FftPlan.build(height, width)
                    self._plans[key] = plan
        return plan

    def __len__(self) -> int:
        return len(self._plans)


PLAN_CACHE = FftPlanCache()


def rfft2(x: RealTensor) -> ComplexTensor:
    """Per (batch, channel) slice, the unnormalized 2-D DFT keeping the
    first floor(W/2)+1 columns; height unchanged."""
    if not isinstance(x, RealTensor):
        x = RealTensor(np.asarray(x))
    spectrum = _fft.rfft2(x.data, axes=(-2, -1))
    return ComplexTensor._trusted(spectrum, x.width)


def irfft2(x: ComplexTensor) -> RealTensor:
    """Inverse transform with 1/(H*W) normalization; the recorded spatial
    width disambiguates the reduced layout.  Output is real by
    construction (the Hermitian-implied imaginary residue never
    materializes)."""
    if not isinstance(x, ComplexTensor):
        raise TypeError("irfft2 expects a complex tensor carrying its spatial width")
    if x.reduced_width != reduced_width(x.spatial_width):
        raise ValueError(
            f"recorded spatial width {x.spatial_width} inconsistent with "
            f"{x.reduced_width} stored columns"
        )
    image = _fft.irfft2(x.data, s=(x.height, x.spatial_width), axes=(-2, -1))
    return RealTensor._trusted(image)


def rfft_shift(x: ComplexTensor) -> ComplexTensor:
    """Swap the top and bottom row halves: rows [H/2, H) move to the top.
    Columns are untouched.  Requires even height; applying the shift twice
    is the identity."""
    H = x.height
    if H % 2 != 0:
        raise ValueError(f"rfft_shift requires an even height, got {H}")
    return ComplexTensor._trusted(np.roll(x.data, H // 2, axis=-2), x.spatial_width)


def pad_kernel_to_image(k: RealTensor, image_height: int, image_width: int) -> RealTensor:
    """Place each kernel at the top-left corner (row 0, col 0) of a zero
    raster with the image's extents."""
    if not isinstance(k, RealTensor):
        k = RealTensor(np.asarray(k))
    kh, kw = k.height, k.width
    if kh > image_height or kw > image_width:
        raise ValueError(
            f"kernel {kh}x{kw} larger than image {image_height}x{image_width}"
        )
    out = np.zeros(k.data.shape[:-2] + (image_height, image_width), dtype=k.dtype)
    out[..., :kh, :kw] = k.data
    return RealTensor._trusted(out)


# ---------------------------------------------------------------------------
# Adjoints (with respect to the real inner product Re<a, b>)
# ---------------------------------------------------------------------------
#
# Training treats the reduced complex layout as a real vector space of
# (Re, Im) pairs.  Under that inner product:
#
# * the adjoint of the unnormalized forward transform R applied to an
#   upstream spectrum-gradient G is  H*W * Re(ifft2(embed(G)))  where
#   embed places the stored columns into a full-width grid with zeros at
#   the dropped mirrors;
# * the adjoint of the normalized inverse transform applied to an
#   upstream image-gradient g is  (w / (H*W)) * rfft2(g)  with w the
#   Hermitian column weights (dropped mirrors fold in as the factor 2).
#
# Both are pinned by inner-product identity tests and end-to-end finite
# differences.

def rfft2_adjoint(g: ComplexTensor) -> RealTensor:
    """Adjoint of rfft2: map a spectrum-gradient back to an image-gradient."""
    H, W = g.height, g.spatial_width
    full = np.zeros(g.data.shape[:-1] + (W,), dtype=g.data.dtype)
    full[..., : g.reduced_width] = g.data
    image = (H * W) * _fft.ifft2(full, axes=(-2, -1)).real
    return RealTensor._trusted(image)


def irfft2_adjoint(g: RealTensor, plans: FftPlanCache = PLAN_CACHE) -> ComplexTensor:
    """Adjoint of irfft2: map an image-gradient to a spectrum-gradient."""
    if not isinstance(g, RealTensor):
        g = RealTensor(np.asarray(g))
    H, W = g.height, g.width
    plan = plans.get(H, W)
    spectrum = _fft.rfft2(g.data, axes=(-2, -1))
    spectrum *= plan.column_weights / (H * W)
    return ComplexTensor._trusted(spectrum, W)
