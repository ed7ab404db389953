"""Fundus-image preprocessing, augmentation, and dataset assembly.

Conventions, recorded once:

* Rasters on the 0..255 scale (integer or float) are "display" scale;
  rasters in [0, 1] float are "normalized" scale.  ``preprocess`` ends in
  normalized scale; LabeledImage.pixels are always normalized.
* Bilinear interpolation uses half-pixel-center geometry, so a same-size
  resize is the identity and a 2x downscale averages 2x2 blocks.
* Augmentation consumes its generator in a fixed order (rotation angle,
  horizontal-flip draw, vertical-flip draw) so seeded streams reproduce.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence, Union

import numpy as np
from PIL import Image

__all__ = [
    "LabeledImage",
    "Dataset",
    "to_grayscale",
    "mask_and_crop",
    "resize",
    "clahe",
    "rotate",
    "augment",
    "preprocess",
    "load_dataset",
    "synth_dataset",
    "read_image",
    "write_image",
]

DEFAULT_SPLIT = (0.6, 0.2, 0.2)
DEFAULT_THRESHOLD = 10.0
DEFAULT_CLIP_LIMIT = 2.0
DEFAULT_GRID = (8, 8)

_IMAGE_EXTENSIONS = (".png", ".ppm")


@dataclass(frozen=True)
class LabeledImage:
    """A grayscale raster in normalized [0, 1] scale with a binary label."""

    id: str
    pixels: np.ndarray
    label: int

    def __post_init__(self) -> None:
        p = np.asarray(self.pixels, dtype=np.float64)
        if p.ndim != 2:
            raise ValueError(f"image {self.id!r}: pixels must be 2-D, got shape {p.shape}")
        if p.size and (p.min() < 0.0 or p.max() > 1.0):
            raise ValueError(
                f"image {self.id!r}: pixels outside normalized [0, 1] "
                f"(range {p.min():.3f}..{p.max():.3f})"
            )
        if self.label not in (0, 1):
            raise ValueError(f"image {self.id!r}: label must be 0 or 1, got {self.label}")
        object.__setattr__(self, "pixels", p)


@dataclass(frozen=True)
class Dataset:
    train: tuple[LabeledImage, ...]
    val: tuple[LabeledImage, ...]
    test: tuple[LabeledImage, ...]
    fractions: tuple[float, float, float] = DEFAULT_SPLIT

    def __post_init__(self) -> None:
        object.__setattr__(self, "train", tuple(self.train))
        object.__setattr__(self, "val", tuple(self.val))
        object.__setattr__(self, "test", tuple(self.test))
        if not math.isclose(sum(self.fractions), 1.0, abs_tol=1e-9):
            raise ValueError(f"split fractions must sum to 1, got {self.fractions}")
        ids = [s.id for split in (self.train, self.val, self.test) for s in split]
        if len(ids) != len(set(ids)):
            raise ValueError("dataset splits share image ids")

    def split(self, name: str) -> tuple[LabeledImage, ...]:
        try:
            return {"train": self.train, "val": self.val, "test": self.test}[name]
        except KeyError:
            raise ValueError(f"unknown split {name!r}; expected train, val, or test") from None


# --------------------------------------------------------------------------
# Pixel-level stages


def to_grayscale(rgb: np.ndarray) -> np.ndarray:
    """Luminance combination 0.299 R + 0.587 G + 0.114 B.  Integer input
    is rounded back to uint8; float input stays float."""
    a = np.asarray(rgb)
    if a.ndim != 3 or a.shape[2] != 3:
        raise ValueError(f"expected an H x W x 3 raster, got shape {a.shape}")
    weights = np.array([0.299, 0.587, 0.114])
    gray = a.astype(np.float64) @ weights
    if np.issubdtype(a.dtype, np.integer):
        return np.rint(gray).clip(0, 255).astype(np.uint8)
    return gray


def mask_and_crop(gray: np.ndarray, threshold: float, *, image_id: str = "") -> np.ndarray:
    """Threshold mask (pixel > threshold), then the tight bounding box of
    mask-true pixels."""
    a = np.asarray(gray)
    if a.ndim != 2:
        raise ValueError(f"expected a grayscale raster, got shape {a.shape}")
    mask = a > threshold
    if not mask.any():
        label = image_id or "<unnamed>"
        raise ValueError(f"image {label!r}: threshold {threshold} leaves an empty mask")
    rows = np.flatnonzero(mask.any(axis=1))
    cols = np.flatnonzero(mask.any(axis=0))
    return a[rows[0] : rows[-1] + 1, cols[0] : cols[-1] + 1]


def _bilinear_gather(img: np.ndarray, sy: np.ndarray, sx: np.ndarray, *, zero_fill: bool) -> np.ndarray:
    h, w = img.shape
    y0 = np.floor(sy).astype(np.int64)
    x0 = np.floor(sx).astype(np.int64)
    wy = sy - y0
    wx = sx - x0
    out = np.zeros(sy.shape, dtype=np.float64)
    for dy, dx, weight in (
        (0, 0, (1 - wy) * (1 - wx)),
        (0, 1, (1 - wy) * wx),
        (1, 0, wy * (1 - wx)),
        (1, 1, wy * wx),
    ):
        yy = y0 + dy
        xx = x0 + dx
        if zero_fill:
            inside = (yy >= 0) & (yy < h) & (xx >= 0) & (xx < w)
            vals = img[yy.clip(0, h - 1), xx.clip(0, w - 1)] * inside
        else:
            vals = img[yy.clip(0, h - 1), xx.clip(0, w - 1)]
        out += weight * vals
    return out


def resize(raster: np.ndarray, target: int) -> np.ndarray:
    """Bilinear resize to target x target with half-pixel centers and
    edge clamping."""
    a = np.asarray(raster, dtype=np.float64)
    if a.ndim != 2 or a.size == 0:
        raise ValueError(f"expected a nonempty grayscale raster, got shape {a.shape}")
    if target < 1:
        raise ValueError(f"resize target must be >= 1, got {target}")
    h, w = a.shape
    sy = (np.arange(target) + 0.5) * (h / target) - 0.5
    sx = (np.arange(target) + 0.5) * (w / target) - 0.5
    grid_y, grid_x = np.meshgrid(sy, sx, indexing="ij")
    return _bilinear_gather(a, grid_y, grid_x, zero_fill=False)


def clahe(
    raster: np.ndarray,
    clip_limit: float = DEFAULT_CLIP_LIMIT,
    grid: Union[int, tuple[int, int]] = DEFAULT_GRID,
) -> np.ndarray:
    """Contrast-limited adaptive histogram equalization on the 0..255
    scale: per-tile clipped histograms with uniform excess redistribution,
    then bilinear blending between the four nearest tile mappings."""
    a = np.asarray(raster, dtype=np.float64)
    if a.ndim != 2:
        raise ValueError(f"expected a grayscale raster, got shape {a.shape}")
    gh, gw = (grid, grid) if isinstance(grid, int) else grid
    h, w = a.shape
    if gh < 1 or gw < 1 or gh > h or gw > w:
        raise ValueError(f"grid {gh}x{gw} invalid for a {h}x{w} image")
    tile_h = -(-h // gh)
    tile_w = -(-w // gw)
    padded = np.pad(a, ((0, tile_h * gh - h), (0, tile_w * gw - w)), mode="edge")
    levels = np.clip(np.rint(padded), 0, 255).astype(np.int64)
    area = tile_h * tile_w
    limit = max(1, int(clip_limit * area / 256.0))
    maps = np.empty((gh, gw, 256), dtype=np.float64)
    for i in range(gh):
        for j in range(gw):
            tile = levels[i * tile_h : (i + 1) * tile_h, j * tile_w : (j + 1) * tile_w]
            hist = np.bincount(tile.reshape(-1), minlength=256).astype(np.float64)
            excess = np.maximum(hist - limit, 0.0).sum()
            hist = np.minimum(hist, limit)
            hist += excess // 256
            hist[: int(excess % 256)] += 1.0
            maps[i, j] = np.cumsum(hist) * (255.0 / area)
    v = levels[:h, :w]
    fy = (np.arange(h) - (tile_h - 1) / 2.0) / tile_h
    fx = (np.arange(w) - (tile_w - 1) / 2.0) / tile_w
    i0 = np.clip(np.floor(fy).astype(np.int64), 0, max(gh - 2, 0))
    j0 = np.clip(np.floor(fx).astype(np.int64), 0, max(gw - 2, 0))
    u = np.clip(fy - i0, 0.0, 1.0)[:, None] if gh > 1 else np.zeros((h, 1))
    t = np.clip(fx - j0, 0.0, 1.0)[None, :] if gw > 1 else np.zeros((1, w))
    i1 = np.minimum(i0 + 1, gh - 1)
    j1 = np.minimum(j0 + 1, gw - 1)
    ii0, jj0 = i0[:, None], j0[None, :]
    ii1, jj1 = i1[:, None], j1[None, :]
    out = (
        (1 - u) * (1 - t) * maps[ii0, jj0, v]
        + (1 - u) * t * maps[ii0, jj1, v]
        + u * (1 - t) * maps[ii1, jj0, v]
        + u * t * maps[ii1, jj1, v]
    )
    return out


def rotate(image: np.ndarray, degrees: float) -> np.ndarray:
    """Rotate about the image center with bilinear resampling and zero
    fill.  A positive angle moves a pixel at (row, col) = (0, +d) toward
    (+d, 0): output[y, x] samples the input at the back-rotated
    coordinate (cy + cos*dy - sin*dx, cx + sin*dy + cos*dx)."""
    a = np.asarray(image, dtype=np.float64)
    if a.ndim != 2:
        raise ValueError(f"expected a grayscale raster, got shape {a.shape}")
    h, w = a.shape
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    rad = math.radians(degrees)
    cos_t, sin_t = math.cos(rad), math.sin(rad)
    dy = np.arange(h)[:, None] - cy
    dx = np.arange(w)[None, :] - cx
    sy = cy + cos_t * dy - sin_t * dx
    sx = cx + sin_t * dy + cos_t * dx
    return _bilinear_gather(a, sy, sx, zero_fill=True)


def augment(image: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Random full-circle rotation plus independent 50% horizontal and
    vertical flips.  Draw order: angle, horizontal, vertical."""
    a = np.asarray(image, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"augmentation expects a square grayscale image, got {a.shape}")
    angle = float(rng.uniform(0.0, 360.0))
    flip_h = bool(rng.random() < 0.5)
    flip_v = bool(rng.random() < 0.5)
    out = rotate(a, angle) if angle != 0.0 else a
    if flip_h:
        out = out[:, ::-1]
    if flip_v:
        out = out[::-1, :]
    return np.ascontiguousarray(out)


def preprocess(
    raster: np.ndarray,
    *,
    threshold: float = DEFAULT_THRESHOLD,
    size: int = 512,
    clip_limit: float = DEFAULT_CLIP_LIMIT,
    grid: Union[int, tuple[int, int]] = DEFAULT_GRID,
    image_id: str = "",
) -> np.ndarray:
    """Full chain on a display-scale raster: grayscale (if color), mask +
    tight crop, resize, contrast equalization; returns normalized [0, 1]."""
    a = np.asarray(raster)
    if a.ndim == 3:
        a = to_grayscale(a)
    gray = mask_and_crop(a, threshold, image_id=image_id)
    resized = resize(gray, size)
    equalized = clahe(resized, clip_limit=clip_limit, grid=grid)
    return np.clip(equalized / 255.0, 0.0, 1.0)


# --------------------------------------------------------------------------
# Raster file I/O (PNG / PPM via Pillow)


def read_image(path: Union[str, Path]) -> np.ndarray:
    """Display-scale array: (H, W) for grayscale files, (H, W, 3) for
    color."""
    with Image.open(path) as img:
        if img.mode in ("L", "I;16", "I"):
            return np.asarray(img.convert("L"))
        return np.asarray(img.convert("RGB"))


def write_image(path: Union[str, Path], raster: np.ndarray) -> None:
    """Writes grayscale rasters; accepts display scale or normalized."""
    a = np.asarray(raster)
    if a.ndim != 2:
        raise ValueError(f"expected a grayscale raster, got shape {a.shape}")
    if np.issubdtype(a.dtype, np.floating):
        scale = 255.0 if a.size and a.max() <= 1.0 else 1.0
        a = np.clip(np.rint(a * scale), 0, 255).astype(np.uint8)
    Image.fromarray(a.astype(np.uint8), mode="L").save(path)


# --------------------------------------------------------------------------
# Dataset assembly


def _split_counts(n: int, fractions: Sequence[float]) -> tuple[int, int, int]:
    """Floor for train and val, remainder to test."""
    n_train = int(n * fractions[0])
    n_val = int(n * fractions[1])
    return n_train, n_val, n - n_train - n_val


def load_dataset(
    image_dir: Union[str, Path],
    labels_csv: Union[str, Path],
    split: Sequence[float] = DEFAULT_SPLIT,
    seed: int = 0,
    *,
    image_size: int = 512,
    apply_preprocessing: bool = True,
    threshold: float = DEFAULT_THRESHOLD,
    clip_limit: float = DEFAULT_CLIP_LIMIT,
    grid: Union[int, tuple[int, int]] = DEFAULT_GRID,
) -> Dataset:
    """Reads a labels CSV (header ``id_code,diagnosis``; ``id`` also
    accepted) and the named image files, maps severity grades 1-4 to the
    positive class (0 stays negative), then shuffles with the seed and
    splits by the given fractions (floor/floor/remainder).

    With ``apply_preprocessing`` off, images are only grayscaled, resized,
    and normalized.
    """
    image_dir = Path(image_dir)
    rows: list[tuple[str, int]] = []
    with open(labels_csv, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{labels_csv}: empty labels file") from None
        header = [col.strip() for col in header]
        id_col = next((header.index(c) for c in ("id_code", "id") if c in header), None)
        if id_col is None or "diagnosis" not in header:
            raise ValueError(
                f"{labels_csv}: expected columns id_code (or id) and diagnosis, got {header}"
            )
        diag_col = header.index("diagnosis")
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) <= max(id_col, diag_col):
                raise ValueError(f"{labels_csv} line {lineno}: expected {len(header)} columns")
            image_id = row[id_col].strip()
            raw = row[diag_col].strip()
            try:
                grade = int(raw)
            except ValueError:
                raise ValueError(f"{labels_csv} line {lineno}: non-integer label {raw!r}") from None
            if grade not in (0, 1, 2, 3, 4):
                raise ValueError(f"{labels_csv} line {lineno}: unknown severity grade {grade}")
            rows.append((image_id, 0 if grade == 0 else 1))

    samples: list[LabeledImage] = []
    for image_id, label in rows:
        path = next(
            (image_dir / f"{image_id}{ext}" for ext in _IMAGE_EXTENSIONS
             if (image_dir / f"{image_id}{ext}").exists()),
            None,
        )
        if path is None:
            tried = ", ".join(f"{image_id}{ext}" for ext in _IMAGE_EXTENSIONS)
            raise FileNotFoundError(f"no image file for id {image_id!r} in {image_dir} (tried {tried})")
        raster = read_image(path)
        if apply_preprocessing:
            pixels = preprocess(
                raster, threshold=threshold, size=image_size,
                clip_limit=clip_limit, grid=grid, image_id=image_id,
            )
        else:
            gray = to_grayscale(raster) if raster.ndim == 3 else raster
            pixels = np.clip(resize(gray, image_size) / 255.0, 0.0, 1.0)
        samples.append(LabeledImage(id=image_id, pixels=pixels, label=label))

    rng = np.random.default_rng(np.random.SeedSequence((seed, 3)))
    order = rng.permutation(len(samples))
    n_train, n_val, _ = _split_counts(len(samples), split)
    shuffled = [samples[i] for i in order]
    return Dataset(
        train=tuple(shuffled[:n_train]),
        val=tuple(shuffled[n_train : n_train + n_val]),
        test=tuple(shuffled[n_train + n_val :]),
        fractions=tuple(split),
    )


# --------------------------------------------------------------------------
# Synthetic desk-scale dataset


def _value_noise(extent: int, cells: int, rng: np.random.Generator) -> np.ndarray:
    """Smooth zero-mean field: coarse Gaussian grid upsampled bilinearly."""
    coarse = rng.normal(0.0, 1.0, (cells, cells))
    return resize(coarse, extent)


# The synthetic texture is confined to fine scales: frequency components
# below this cutoff (cycles per image, both axes) are removed outright.
_TEXTURE_HIGHPASS_CUTOFF = 4


def _highpass(field: np.ndarray, cutoff: int = _TEXTURE_HIGHPASS_CUTOFF) -> np.ndarray:
    """Zero every 2-D frequency component with both |f_y| and |f_x| at or
    below the cutoff, leaving only fine-scale structure."""
    spectrum = np.fft.rfft2(field)
    h = field.shape[0]
    rows = np.r_[0 : cutoff + 1, h - cutoff : h] if cutoff + 1 < h - cutoff else np.arange(h)
    spectrum[np.ix_(rows, np.arange(min(cutoff + 1, spectrum.shape[1])))] = 0.0
    return np.fft.irfft2(spectrum, s=field.shape)


def _render_base(extent: int, rng: np.random.Generator) -> tuple[np.ndarray, float, float, float]:
    """Fundus-like disk: center-weighted disc on black with positional
    jitter and a smooth texture.

    The texture is made brightness-neutral over the disc (its disc-weighted
    mean is subtracted) and the disc geometry is held nearly constant, so
    the coarse structure of every render is stable.  Classifiers then
    cannot key on incidental brightness or position variation between
    renders — the lesion mass added for class 1 is the only consistent
    coarse-scale cue, and per-image texture carries the fine-scale
    variability.
    """
    cy = extent / 2.0 + rng.uniform(-0.25, 0.25)
    cx = extent / 2.0 + rng.uniform(-0.25, 0.25)
    radius = extent * 0.42 * rng.uniform(0.998, 1.002)
    yy = np.arange(extent)[:, None] - cy
    xx = np.arange(extent)[None, :] - cx
    r = np.hypot(yy, xx)
    edge = 1.0 / (1.0 + np.exp((r - radius) / 1.2))
    profile = 0.22 + 0.10 * np.clip(1.0 - (r / radius) ** 2, 0.0, 1.0)
    texture = _highpass(_value_noise(extent, max(8, extent // 4), rng))
    texture *= 0.05 / max(float(texture.std()), 1e-12)
    texture -= (edge * texture).sum() / edge.sum()
    img = edge * np.clip(profile + texture, 0.0, 1.0)
    return np.clip(img, 0.0, 1.0), cy, cx, radius


# Lesion geometry (normalized pixel scale).  Dots sit in a mid annulus of
# the disc where the base is dim enough that a bright bump never clips.
_DOT_COUNT = 5
_DOT_SIGMA = (0.95, 1.15)
_DOT_AMP = (0.38, 0.43)
_DOT_ANNULUS = (0.15, 0.55)
_STREAK_COUNT = 2
_STREAK_DEPTH = 0.25
_STREAK_WIDTH = 0.55
_STREAK_LENGTH = (0.05, 0.08)


def _add_lesions(
    img: np.ndarray, rng: np.random.Generator, cy: float, cx: float, radius: float
) -> np.ndarray:
    """Positive-class features: small bright dots (microaneurysm
    caricature) in the disc's mid annulus plus two short dark streaks."""
    extent = img.shape[0]
    out = img.copy()
    yy = np.arange(extent)[:, None]
    xx = np.arange(extent)[None, :]
    lo2, hi2 = _DOT_ANNULUS[0] ** 2, _DOT_ANNULUS[1] ** 2
    for _ in range(_DOT_COUNT):
        ang = rng.uniform(0.0, 2.0 * math.pi)
        rad = radius * math.sqrt(rng.uniform(lo2, hi2))
        py, px = cy + rad * math.sin(ang), cx + rad * math.cos(ang)
        sigma = rng.uniform(*_DOT_SIGMA)
        amp = rng.uniform(*_DOT_AMP)
        d2 = (yy - py) ** 2 + (xx - px) ** 2
        out += amp * np.exp(-d2 / (2.0 * sigma**2))
    for _ in range(_STREAK_COUNT):
        ang = rng.uniform(0.0, 2.0 * math.pi)
        rad = radius * 0.5 * math.sqrt(rng.uniform(0.0, 1.0))
        py, px = cy + rad * math.sin(ang), cx + rad * math.cos(ang)
        theta = rng.uniform(0.0, math.pi)
        length = extent * rng.uniform(*_STREAK_LENGTH)
        dy, dx = math.sin(theta), math.cos(theta)
        t = np.clip((yy - py) * dy + (xx - px) * dx, 0.0, length)
        dist2 = (yy - (py + t * dy)) ** 2 + (xx - (px + t * dx)) ** 2
        out -= _STREAK_DEPTH * np.exp(-dist2 / (2.0 * _STREAK_WIDTH**2))
    return np.clip(out, 0.0, 1.0)


def synth_dataset(n_per_class: int, extent: int, seed: int) -> Dataset:
    """Deterministic two-class dataset: class 0 = rendered disc, class 1 =
    the same disc with localized lesions added.  Images i of the two
    classes share a base rendering, so the only class signal is the
    lesions.  Splits are stratified per class (floor/floor/remainder) so
    every split keeps both classes."""
    if n_per_class < 1:
        raise ValueError(f"n_per_class must be >= 1, got {n_per_class}")
    if extent < 16:
        raise ValueError(f"extent must be >= 16, got {extent}")
    negatives: list[LabeledImage] = []
    positives: list[LabeledImage] = []
    for i in range(n_per_class):
        rng = np.random.default_rng(np.random.SeedSequence((seed, 4, i)))
        base, cy, cx, radius = _render_base(extent, rng)
        negatives.append(LabeledImage(id=f"synth0-{i:04d}", pixels=base, label=0))
        lesioned = _add_lesions(base, rng, cy, cx, radius)
        positives.append(LabeledImage(id=f"synth1-{i:04d}", pixels=lesioned, label=1))
    rng = np.random.default_rng(np.random.SeedSequence((seed, 3)))
    splits: dict[str, list[LabeledImage]] = {"train": [], "val": [], "test": []}
    for bucket in (negatives, positives):
        order = rng.permutation(len(bucket))
        n_train, n_val, _ = _split_counts(len(bucket), DEFAULT_SPLIT)
        shuffled = [bucket[i] for i in order]
        splits["train"].extend(shuffled[:n_train])
        splits["val"].extend(shuffled[n_train : n_train + n_val])
        splits["test"].extend(shuffled[n_train + n_val :])
    for name, bucket in splits.items():
        order = rng.permutation(len(bucket))
        splits[name] = [bucket[i] for i in order]
    return Dataset(
        train=tuple(splits["train"]),
        val=tuple(splits["val"]),
        test=tuple(splits["test"]),
        fractions=DEFAULT_SPLIT,
    )
