"""Immutable rank-4 real and complex tensors plus the pointwise algebra,
channel concatenation, and region cropping everything else builds on.

Layout is row-major ``(batch, channel, height, width)`` everywhere.  A
complex tensor holds the half-width layout produced by a real-to-complex
transform: a spatial ``(H, W)`` raster maps to ``(H, W//2 + 1)`` complex
bins, so the originating spatial width cannot be recovered from the array
shape alone (``W`` and ``W-1`` collide for even/odd) and is recorded on the
tensor so inversion is unambiguous.

Tensors are frozen values: construction validates finiteness once and
exposes a read-only view; operations never mutate and never re-validate.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

__all__ = [
    "Shape",
    "RealTensor",
    "ComplexTensor",
    "hadamard",
    "concat_channels",
    "crop_region",
    "zero_pad",
]


@dataclass(frozen=True)
class Shape:
    """Extents of a rank-4 tensor; for complex tensors ``width`` counts
    frequency bins (the Hermitian-reduced extent)."""

    batch: int
    channels: int
    height: int
    width: int

    def __post_init__(self) -> None:
        for name in ("batch", "channels", "height", "width"):
            if getattr(self, name) < 1:
                raise ValueError(f"shape extent {name} must be >= 1, got {getattr(self, name)}")

    @property
    def element_count(self) -> int:
        return self.batch * self.channels * self.height * self.width

    def as_tuple(self) -> tuple[int, int, int, int]:
        return (self.batch, self.channels, self.height, self.width)


def _freeze(a: np.ndarray) -> np.ndarray:
    view = a.view()
    view.flags.writeable = False
    return view


def _as_rank4(a: np.ndarray, what: str) -> np.ndarray:
    if a.ndim == 2:
        a = a[None, None]
    elif a.ndim == 3:
        a = a[None]
    if a.ndim != 4:
        raise ValueError(f"{what} must have rank <= 4 with trailing (height, width); got shape {a.shape}")
    return a


@dataclass(frozen=True)
class RealTensor:
    """Dense real values in (batch, channel, height, width) order.

    Rank-2/3 input arrays are promoted by prepending singleton axes, so a
    bare raster is the (1, 1, H, W) tensor.
    """

    data: np.ndarray

    def __post_init__(self) -> None:
        a = np.asarray(self.data)
        if not np.issubdtype(a.dtype, np.floating):
            a = a.astype(np.float64)
        a = _as_rank4(a, "real tensor")
        if not np.all(np.isfinite(a)):
            raise ValueError("real tensor contains non-finite values")
        object.__setattr__(self, "data", _freeze(a))

    @classmethod
    def _trusted(cls, data: np.ndarray) -> "RealTensor":
        """Wrap an internally produced array without re-validating."""
        t = object.__new__(cls)
        object.__setattr__(t, "data", _freeze(_as_rank4(data, "real tensor")))
        return t

    @property
    def shape(self) -> Shape:
        return Shape(*self.data.shape)

    @property
    def batch(self) -> int:
        return self.data.shape[0]

    @property
    def channels(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[2]

    @property
    def width(self) -> int:
        return self.data.shape[3]

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype


@dataclass(frozen=True)
class ComplexTensor:
    """Dense complex values in (batch, channel, height, bins) order, where
    bins = floor(spatial_width/2) + 1 for the recorded ``spatial_width``."""

    data: np.ndarray
    spatial_width: int

    def __post_init__(self) -> None:
        a = np.asarray(self.data)
        if not np.issubdtype(a.dtype, np.complexfloating):
            a = a.astype(np.complex128)
        a = _as_rank4(a, "complex tensor")
        expected = self.spatial_width // 2 + 1
        if a.shape[-1] != expected:
            raise ValueError(
                f"reduced width {a.shape[-1]} inconsistent with recorded spatial width "
                f"{self.spatial_width} (expected {expected} bins)"
            )
        if not np.all(np.isfinite(a)):
            raise ValueError("complex tensor contains non-finite values")
        object.__setattr__(self, "data", _freeze(a))

    @classmethod
    def _trusted(cls, data: np.ndarray, spatial_width: int) -> "ComplexTensor":
        """Wrap an internally produced array without re-validating."""
        t = object.__new__(cls)
        object.__setattr__(t, "data", _freeze(_as_rank4(data, "complex tensor")))
        object.__setattr__(t, "spatial_width", spatial_width)
        return t

    @property
    def shape(self) -> Shape:
        return Shape(*self.data.shape)

    @property
    def batch(self) -> int:
        return self.data.shape[0]

    @property
    def channels(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[2]

    @property
    def reduced_width(self) -> int:
        return self.data.shape[3]

    @property
    def spatial_shape(self) -> tuple[int, int]:
        return (self.data.shape[2], self.spatial_width)

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype


Tensor = Union[RealTensor, ComplexTensor]


def hadamard(a: ComplexTensor, b: ComplexTensor) -> ComplexTensor:
    """Pointwise complex product.  Shapes, including the recorded spatial
    width, must match exactly."""
    if not isinstance(a, ComplexTensor) or not isinstance(b, ComplexTensor):
        raise TypeError("hadamard operates on complex tensors")
    if a.data.shape != b.data.shape or a.spatial_width != b.spatial_width:
        raise ValueError(
            f"hadamard shape mismatch: {a.data.shape} (spatial width {a.spatial_width}) "
            f"vs {b.data.shape} (spatial width {b.spatial_width})"
        )
    return ComplexTensor._trusted(a.data * b.data, a.spatial_width)


def concat_channels(parts: Sequence[Tensor]) -> Tensor:
    """Concatenate along the channel axis; channel order follows part order,
    then within-part order."""
    if len(parts) == 0:
        raise ValueError("concat_channels requires at least one part")
    first = parts[0]
    kinds = {type(p) for p in parts}
    if len(kinds) != 1:
        raise TypeError("concat_channels parts must all be the same tensor kind")
    for p in parts[1:]:
        if (p.batch, p.height) != (first.batch, first.height) or p.data.shape[-1] != first.data.shape[-1]:
            raise ValueError(
                f"concat_channels extent mismatch: {p.data.shape} vs {first.data.shape}"
            )
    stacked = np.concatenate([p.data for p in parts], axis=1)
    if isinstance(first, ComplexTensor):
        for p in parts[1:]:
            if p.spatial_width != first.spatial_width:
                raise ValueError("concat_channels parts disagree on recorded spatial width")
        return ComplexTensor._trusted(stacked, first.spatial_width)
    return RealTensor._trusted(stacked)


def crop_region(
    t: Tensor,
    rows_top: int,
    rows_bottom: int,
    cols_left: int,
    cols_right: int,
) -> Tensor:
    """Remove the given number of rows/columns from each side of the last two
    axes; retained values are bit-identical (the result is a view)."""
    for name, v in (("rows_top", rows_top), ("rows_bottom", rows_bottom),
                    ("cols_left", cols_left), ("cols_right", cols_right)):
        if v < 0:
            raise ValueError(f"crop_region {name} must be >= 0, got {v}")
    H, W = t.data.shape[-2:]
    if rows_top + rows_bottom >= H or cols_left + cols_right >= W:
        raise ValueError(
            f"crop_region removals ({rows_top}+{rows_bottom} rows, {cols_left}+{cols_right} cols) "
            f"must be strictly smaller than extents ({H}x{W})"
        )
    region = t.data[..., rows_top : H - rows_bottom, cols_left : W - cols_right]
    if isinstance(t, ComplexTensor):
        # Cropping bins invalidates the recorded width relation in general;
        # the frequency-pooling layer handles its own bookkeeping, so plain
        # crops of complex tensors keep a consistent record only when the
        # column count is unchanged.
        if cols_left == 0 and cols_right == 0:
            return ComplexTensor._trusted(region, t.spatial_width)
        raise ValueError(
            "crop_region cannot trim frequency-bin columns of a complex tensor; "
            "use the frequency-domain pooling operation, which re-records the spatial width"
        )
    return RealTensor._trusted(region)


def zero_pad(
    t: RealTensor,
    rows_top: int,
    rows_bottom: int,
    cols_left: int,
    cols_right: int,
) -> RealTensor:
    """Complementary inverse of crop_region on the retained region."""
    if min(rows_top, rows_bottom, cols_left, cols_right) < 0:
        raise ValueError("zero_pad amounts must be >= 0")
    padded = np.pad(
        t.data,
        ((0, 0), (0, 0), (rows_top, rows_bottom), (cols_left, cols_right)),
    )
    return RealTensor._trusted(padded)
