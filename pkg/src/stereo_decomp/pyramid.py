"""Multi-scale feature pyramids for both views.

Arrays follow a channel-first layout: images are ``(H, W)``, feature maps are
``(C, H, W)``. Level 0 is the reference (coarsest) resolution, level ``L`` the
padded input resolution.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError

NORM_RADIUS = 3
NORM_EPS = 1e-4
N_CENSUS_MAX = 8
LUMA = (0.299, 0.587, 0.114)

# 3x3 census neighbourhood, row-major, centre excluded
CENSUS_OFFSETS = [(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)]


@dataclass(frozen=True)
class PyramidConfig:
    levels: int = 3
    scale: int = 2
    reference_height: int | None = None
    reference_width: int | None = None
    reference_disparities: int = 4
    feature_channels: int = 11

    def __post_init__(self):
        if self.levels < 0:
            raise InvalidInputError("levels must be >= 0")
        if self.scale < 2:
            raise InvalidInputError("scale must be an integer >= 2")
        if self.reference_disparities < 1:
            raise InvalidInputError("reference_disparities must be >= 1")
        if not 3 <= self.feature_channels <= 3 + N_CENSUS_MAX:
            raise InvalidInputError("feature_channels must lie in [3, 11]")

    @property
    def factor(self) -> int:
        return self.scale ** self.levels

    def disparities(self, level: int) -> int:
        return self.reference_disparities * self.scale ** level


@dataclass
class FittedImage:
    """Single-channel image padded to a multiple of ``s**L``."""

    data: np.ndarray
    original_shape: tuple[int, int]

    def crop(self, arr: np.ndarray) -> np.ndarray:
        h, w = self.original_shape
        return arr[..., :h, :w]


@dataclass
class FeaturePyramid:
    left: list[np.ndarray]
    right: list[np.ndarray]
    scale: int
    images_left: list[np.ndarray] = field(default_factory=list)
    images_right: list[np.ndarray] = field(default_factory=list)

    @property
    def levels(self) -> int:
        return len(self.left) - 1


def to_luminance(image: np.ndarray) -> np.ndarray:
    img = np.asarray(image, dtype=np.float64)
    if img.ndim == 2:
        out = img
    elif img.ndim == 3 and img.shape[0] == 1:
        out = img[0]
    elif img.ndim == 3 and img.shape[0] == 3:
        out = LUMA[0] * img[0] + LUMA[1] * img[1] + LUMA[2] * img[2]
    else:
        raise InvalidInputError(f"expected a (H, W), (1, H, W) or (3, H, W) image, got {img.shape}")
    if out.size == 0:
        raise InvalidInputError("image has zero area")
    if not np.all(np.isfinite(out)):
        raise InvalidInputError("image contains non-finite values")
    return out


def fit_input(image: np.ndarray, config: PyramidConfig) -> FittedImage:
    lum = to_luminance(image)
    h, w = lum.shape
    f = config.factor
    ph = -h % f
    pw = -w % f
    data = np.pad(lum, ((0, ph), (0, pw)), mode="edge") if (ph or pw) else lum.copy()
    return FittedImage(data=data, original_shape=(h, w))


def area_downsample(arr: np.ndarray, s: int) -> np.ndarray:
    """Average non-overlapping ``s x s`` blocks over the last two axes."""
    *lead, h, w = arr.shape
    if h % s or w % s:
        raise InvalidInputError(f"shape {(h, w)} is not divisible by {s}")
    blocks = arr.reshape(*lead, h // s, s, w // s, s)
    return blocks.mean(axis=(-3, -1))


def image_pyramid(image: np.ndarray, levels: int, s: int) -> list[np.ndarray]:
    pyr = [np.asarray(image, dtype=np.float64)]
    for _ in range(levels):
        pyr.append(area_downsample(pyr[-1], s))
    return pyr[::-1]


def _shift(img: np.ndarray, dy: int, dx: int) -> np.ndarray:
    """``out[r, c] = img[r + dy, c + dx]`` with edge replication."""
    h, w = img.shape
    rows = np.clip(np.arange(h) + dy, 0, h - 1)
    cols = np.clip(np.arange(w) + dx, 0, w - 1)
    return img[rows][:, cols]


def _box_sum(img: np.ndarray, radius: int) -> np.ndarray:
    # explicit shifted sums keep every output a function of its window only
    acc = np.zeros_like(img)
    for dx in range(-radius, radius + 1):
        acc += _shift(img, 0, dx)
    out = np.zeros_like(img)
    for dy in range(-radius, radius + 1):
        out += _shift(acc, dy, 0)
    return out


def level_features(img: np.ndarray, feature_channels: int = 11) -> np.ndarray:
    """Features of one pyramid level.

    Channel 0 is the locally normalised intensity, channels 1-2 the
    horizontal and vertical central differences divided by the same local
    standard deviation, and the remaining channels are census signs over the
    3x3 neighbourhood (+1 brighter, -1 darker, 0 tie).
    """
    n = (2 * NORM_RADIUS + 1) ** 2
    mean = _box_sum(img, NORM_RADIUS) / n
    var = np.maximum(_box_sum(img * img, NORM_RADIUS) / n - mean * mean, 0.0)
    inv_std = 1.0 / np.sqrt(var + NORM_EPS)

    feats = np.empty((feature_channels,) + img.shape)
    feats[0] = (img - mean) * inv_std
    feats[1] = 0.5 * (_shift(img, 0, 1) - _shift(img, 0, -1)) * inv_std
    feats[2] = 0.5 * (_shift(img, 1, 0) - _shift(img, -1, 0)) * inv_std
    for k, (dy, dx) in enumerate(CENSUS_OFFSETS[: feature_channels - 3]):
        feats[3 + k] = np.sign(_shift(img, dy, dx) - img)
    return feats


def matching_embedding(feats: np.ndarray, gain: float | None) -> np.ndarray:
    """Rescale each pixel's feature vector to squared norm ``gain``.

    Dot products of the result are ``gain`` times the cosine similarity, so
    scores are bounded and bright pixels do not dominate the correlation.
    Zero vectors stay zero. ``gain=None`` returns the features unchanged.
    """
    if gain is None:
        return feats
    norm = np.sqrt(np.einsum("chw,chw->hw", feats, feats))
    scale = np.divide(np.sqrt(gain), norm, out=np.zeros_like(norm), where=norm > 0)
    return feats * scale


def extract_features(image: FittedImage | np.ndarray, config: PyramidConfig) -> list[np.ndarray]:
    data = image.data if isinstance(image, FittedImage) else np.asarray(image, dtype=np.float64)
    if data.shape[0] % config.factor or data.shape[1] % config.factor:
        raise InvalidInputError("image must be fitted to a multiple of s**L first")
    return [level_features(im, config.feature_channels)
            for im in image_pyramid(data, config.levels, config.scale)]


def build_feature_pyramid(left: FittedImage, right: FittedImage, config: PyramidConfig) -> FeaturePyramid:
    if left.data.shape != right.data.shape:
        raise InvalidInputError("left and right images differ in size")
    il = image_pyramid(left.data, config.levels, config.scale)
    ir = image_pyramid(right.data, config.levels, config.scale)
    fl = [level_features(im, config.feature_channels) for im in il]
    fr = [level_features(im, config.feature_channels) for im in ir]
    return FeaturePyramid(left=fl, right=fr, scale=config.scale, images_left=il, images_right=ir)


def _corner_positions(n_in: int, n_out: int) -> np.ndarray:
    if n_in == 1 or n_out == 1:
        return np.zeros(n_out)
    return np.arange(n_out) * ((n_in - 1) / (n_out - 1))


def interp_axis(arr: np.ndarray, axis: int, pos: np.ndarray) -> np.ndarray:
    """Linear interpolation of ``arr`` along ``axis`` at fractional ``pos``."""
    n = arr.shape[axis]
    pos = np.clip(pos, 0, n - 1)
    i0 = np.floor(pos).astype(np.intp)
    i1 = np.minimum(i0 + 1, n - 1)
    t = pos - i0
    shape = [1] * arr.ndim
    shape[axis] = -1
    t = t.reshape(shape)
    a0 = np.take(arr, i0, axis=axis)
    a1 = np.take(arr, i1, axis=axis)
    return a0 * (1.0 - t) + a1 * t


def upsample_features(feats: np.ndarray, s: int) -> np.ndarray:
    """Corner-aligned bilinear upsampling by ``s`` over the last two axes."""
    h, w = feats.shape[-2:]
    out = interp_axis(feats, feats.ndim - 2, _corner_positions(h, s * h))
    return interp_axis(out, feats.ndim - 1, _corner_positions(w, s * w))
