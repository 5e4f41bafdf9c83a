"""Synthetic image generation, trivial feature extraction, and PCA.

The clustering stage is agnostic to where features come from: they can be
produced here from synthetic images, or supplied externally as an XFV1
file (e.g. activations of a pre-trained network exported by another tool).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np


class ZeroRowError(ValueError):
    """A feature row has zero Euclidean norm and cannot be normalized."""


COLORS = {
    "red": (1.0, -1.0, -1.0),
    "green": (-1.0, 1.0, -1.0),
    "blue": (-1.0, -1.0, 1.0),
    "yellow": (1.0, 1.0, -1.0),
    "magenta": (1.0, -1.0, 1.0),
    "cyan": (-1.0, 1.0, 1.0),
}

SHAPES = ("circle", "square", "triangle", "cross", "ring", "diamond")

# 6 background-color x foreground-shape combinations used by default runs
DEFAULT_COMBOS = (
    "red-circle", "green-square", "blue-triangle",
    "yellow-cross", "magenta-ring", "cyan-diamond",
)


@dataclass
class ImageSet:
    """Batch of images as an (n, c, h, w) array with values in [-1, 1]."""

    pixels: np.ndarray
    truth_labels: np.ndarray | None = None

    def __post_init__(self):
        self.pixels = np.asarray(self.pixels, dtype=np.float32)
        if self.pixels.ndim != 4:
            raise ValueError(f"ImageSet needs (n, c, h, w) pixels, got {self.pixels.shape}")
        if self.truth_labels is not None:
            self.truth_labels = np.asarray(self.truth_labels, dtype=np.int64)
            if self.truth_labels.shape != (self.pixels.shape[0],):
                raise ValueError("truth_labels length does not match image count")

    @property
    def count(self):
        return self.pixels.shape[0]

    @property
    def channels(self):
        return self.pixels.shape[1]

    @property
    def height(self):
        return self.pixels.shape[2]

    @property
    def width(self):
        return self.pixels.shape[3]

    def validate(self):
        if not np.all(np.isfinite(self.pixels)):
            raise ValueError("ImageSet contains non-finite pixels")
        if self.pixels.size and (self.pixels.min() < -1.0 or self.pixels.max() > 1.0):
            raise ValueError("ImageSet pixels outside [-1, 1]")
        return self


@dataclass
class FeatureMatrix:
    """Row-major (n, d) matrix of per-image feature vectors."""

    values: np.ndarray
    normalized: bool = False

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise ValueError(f"FeatureMatrix needs a 2-d array, got {self.values.shape}")

    @property
    def rows(self):
        return self.values.shape[0]

    @property
    def cols(self):
        return self.values.shape[1]


@dataclass
class PcaModel:
    mean: np.ndarray        # (d,)
    components: np.ndarray  # (d, r), orthonormal columns
    variances: np.ndarray   # (r,), nonincreasing

    @property
    def input_dim(self):
        return self.components.shape[0]

    @property
    def output_dim(self):
        return self.components.shape[1]


def _shape_mask(shape, size, cx, cy, r):
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    dx, dy = xx - cx, yy - cy
    if shape == "circle":
        return dx * dx + dy * dy <= r * r
    if shape == "square":
        return (np.abs(dx) <= r * 0.82) & (np.abs(dy) <= r * 0.82)
    if shape == "triangle":
        return (dy >= -r) & (dy <= r) & (np.abs(dx) <= (dy + r) * 0.55)
    if shape == "cross":
        bar = r * 0.38
        inside = (np.abs(dx) <= r) & (np.abs(dy) <= r)
        return inside & ((np.abs(dx) <= bar) | (np.abs(dy) <= bar))
    if shape == "ring":
        d2 = dx * dx + dy * dy
        return (d2 <= r * r) & (d2 >= (0.55 * r) ** 2)
    if shape == "diamond":
        return np.abs(dx) + np.abs(dy) <= r * 1.1
    raise ValueError(f"unknown shape {shape!r}")


def parse_combo(name: str):
    parts = name.split("-")
    if len(parts) != 2 or parts[0] not in COLORS or parts[1] not in SHAPES:
        raise ValueError(f"unknown attribute combination {name!r}; expected "
                         f"<color>-<shape> with color in {sorted(COLORS)} "
                         f"and shape in {SHAPES}")
    return parts[0], parts[1]


def generate_synthetic_dataset(spec, image_size: int = 16, seed: int = 0) -> ImageSet:
    """Colored-background/foreground-shape images with per-combination labels.

    `spec` maps combination names like "red-circle" to image counts, in
    label order. Per-image jitter (center, radius, color, pixel noise) is
    drawn from a generator seeded with `seed`, so output is deterministic.
    """
    items = list(spec.items()) if isinstance(spec, dict) else list(spec)
    if len(items) < 2:
        raise ValueError("need at least 2 attribute combinations")
    if image_size < 8:
        raise ValueError(f"image_size must be >= 8, got {image_size}")
    for name, count in items:
        parse_combo(name)
        if int(count) <= 0:
            raise ValueError(f"combination {name!r} has non-positive count {count}")

    rng = np.random.default_rng(seed)
    total = sum(int(c) for _, c in items)
    pixels = np.empty((total, 3, image_size, image_size), dtype=np.float32)
    labels = np.empty(total, dtype=np.int64)
    fg = np.array([0.9, 0.9, 0.9])

    i = 0
    for label, (name, count) in enumerate(items):
        color, shape = parse_combo(name)
        base = np.array(COLORS[color])
        for _ in range(int(count)):
            cx = image_size / 2 - 0.5 + rng.uniform(-1.0, 1.0)
            cy = image_size / 2 - 0.5 + rng.uniform(-1.0, 1.0)
            r = image_size * 0.30 + rng.uniform(-1.0, 1.0)
            tint = rng.uniform(-0.05, 0.05, size=3)
            img = np.empty((3, image_size, image_size), dtype=np.float64)
            img[:] = (base + tint)[:, None, None]
            mask = _shape_mask(shape, image_size, cx, cy, r)
            img[:, mask] = fg[:, None]
            img += rng.normal(0.0, 0.02, size=img.shape)
            pixels[i] = np.clip(img, -1.0, 1.0)
            labels[i] = label
            i += 1
    return ImageSet(pixels=pixels, truth_labels=labels)


def default_spec(combos: int = 6, per_combo: int = 100):
    if not 2 <= combos <= len(DEFAULT_COMBOS):
        raise ValueError(f"combos must be in [2, {len(DEFAULT_COMBOS)}]")
    return {name: per_combo for name in DEFAULT_COMBOS[:combos]}


def extract_trivial_features(images: ImageSet, downsample: int = 4) -> FeatureMatrix:
    """Per-channel global means concatenated with a box-downsampled grid.

    Output dimension is c + c*(h/f)*(w/f).
    """
    n, c, h, w = images.pixels.shape
    if downsample <= 0 or h % downsample or w % downsample:
        raise ValueError(f"downsample factor {downsample} does not divide {h}x{w}")
    px = images.pixels.astype(np.float64)
    means = px.mean(axis=(2, 3))
    f = downsample
    pooled = px.reshape(n, c, h // f, f, w // f, f).mean(axis=(3, 5))
    return FeatureMatrix(np.concatenate([means, pooled.reshape(n, -1)], axis=1))


def l2_normalize_rows(features: FeatureMatrix) -> FeatureMatrix:
    norms = np.linalg.norm(features.values, axis=1)
    zero = np.where(norms == 0.0)[0]
    if zero.size:
        raise ZeroRowError(f"row {zero[0]} has zero norm")
    return FeatureMatrix(features.values / norms[:, None], normalized=True)


def fit_pca(features: FeatureMatrix, r: int) -> PcaModel:
    """Principal directions of the rows, population (1/n) covariance scaling.

    Sign convention: the largest-magnitude entry of every component is
    positive, which makes golden files reproducible across BLAS builds.
    """
    x = features.values
    n, d = x.shape
    if not 1 <= r <= min(n, d):
        raise ValueError(f"PCA dimension r={r} out of range [1, {min(n, d)}]")
    if not np.all(np.isfinite(x)):
        raise ValueError("fit_pca: non-finite features")
    mean = x.mean(axis=0)
    _, s, vt = np.linalg.svd(x - mean, full_matrices=False)
    components = vt[:r].T.copy()
    variances = (s[:r] ** 2) / n
    for j in range(r):
        col = components[:, j]
        if col[np.argmax(np.abs(col))] < 0:
            components[:, j] = -col
    return PcaModel(mean=mean, components=components, variances=variances)


def clamp_pca_dim(r: int, n: int, d: int) -> int:
    """Clamp a requested PCA dimension to min(n, d), warning when it bites."""
    limit = min(n, d)
    if r > limit:
        warnings.warn(f"PCA dimension {r} clamped to {limit} for {n}x{d} features",
                      stacklevel=2)
        return limit
    return r


def project_pca(model: PcaModel, features: FeatureMatrix) -> FeatureMatrix:
    if features.cols != model.input_dim:
        raise ValueError(f"project_pca: features have {features.cols} dims, "
                         f"model expects {model.input_dim}")
    return FeatureMatrix((features.values - model.mean) @ model.components)
