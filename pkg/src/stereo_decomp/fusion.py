"""Upsampling, soft/hard fusion and refinement of disparity maps.

Disparities are stored in pixels of their own level, so moving one level up
multiplies values by ``s``.
"""
from __future__ import annotations

import numpy as np

from .dense import DisparityMap
from .errors import InvalidInputError
from .pyramid import area_downsample, interp_axis
from .sparse import SparseField

CHUNK_ROWS = 64


def _center_positions(n_in: int, s: int) -> np.ndarray:
    return (np.arange(n_in * s) + 0.5) / s - 0.5


def bilinear_upsample(arr: np.ndarray, s: int) -> np.ndarray:
    """Pixel-centre aligned bilinear upsampling, edges clamped."""
    h, w = arr.shape
    out = interp_axis(arr, 0, _center_positions(h, s))
    return interp_axis(out, 1, _center_positions(w, s))


def upsample_disparity(prev: DisparityMap, guide: np.ndarray | None, s: int,
                       sigma_r: float = 1.0) -> DisparityMap:
    """Joint-bilateral upsampling of a coarse disparity map.

    Each fine pixel combines its four nearest coarse samples with bilinear
    (tent) spatial weights of half-width ``s`` fine pixels, multiplied by a
    range weight ``exp(-(g_fine - g_coarse)^2 / sigma_r^2)`` where the coarse
    guide is the block average of the fine guide. With ``guide=None`` or a
    uniform guide this is exactly bilinear upsampling.
    """
    h, w = prev.shape
    if guide is not None and guide.shape != (h * s, w * s):
        raise InvalidInputError(f"guide shape {guide.shape} != {(h * s, w * s)}")
    vals = np.where(prev.valid, prev.values, 0.0) * s
    valid = prev.valid.astype(np.float64)

    py = np.clip(_center_positions(h, s), 0, h - 1)
    px = np.clip(_center_positions(w, s), 0, w - 1)
    y0 = np.floor(py).astype(np.intp)
    x0 = np.floor(px).astype(np.intp)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    ty = (py - y0)[:, None]
    tx = (px - x0)[None, :]

    coarse_guide = area_downsample(guide, s) if guide is not None else None
    num = np.zeros((h * s, w * s))
    den = np.zeros((h * s, w * s))
    for ys, wy in ((y0, 1.0 - ty), (y1, ty)):
        for xs, wx in ((x0, 1.0 - tx), (x1, tx)):
            wgt = wy * wx * valid[np.ix_(ys, xs)]
            if coarse_guide is not None:
                diff = guide - coarse_guide[np.ix_(ys, xs)]
                wgt = wgt * np.exp(-(diff * diff) / sigma_r ** 2)
            num += wgt * vals[np.ix_(ys, xs)]
            den += wgt
    ok = den > 0
    out = np.divide(num, den, out=np.zeros_like(num), where=ok)
    return DisparityMap(out, ok)


def occlusion_from_lr(d_left: DisparityMap, d_right: DisparityMap, tau: float = 1.0) -> np.ndarray:
    """Left-right consistency: ``True`` marks occluded (or unverifiable) pixels."""
    if d_left.shape != d_right.shape:
        raise InvalidInputError("left and right disparity maps differ in size")
    h, w = d_left.shape
    cols = np.arange(w)[None, :] - np.rint(d_left.values).astype(np.int64)
    inside = (cols >= 0) & (cols < w)
    cc = np.clip(cols, 0, w - 1)
    rows = np.arange(h)[:, None]
    other = d_right.values[rows, cc]
    other_valid = d_right.valid[rows, cc]
    consistent = inside & other_valid & d_left.valid & (np.abs(d_left.values - other) <= tau)
    return ~consistent


def soft_mask(field: SparseField, occlusion: np.ndarray | None, sigma_v: float = 1.0) -> np.ndarray:
    """Closed-form confidence mask ``exp(-V/sigma_v^2)``, zeroed when occluded."""
    mask = np.zeros(field.shape)
    m = np.exp(-field.variance / sigma_v ** 2)
    if occlusion is not None:
        m = np.where(occlusion[field.rows, field.cols], 0.0, m)
    mask[field.rows, field.cols] = m
    return mask


def soft_fuse(upsampled: DisparityMap, field: SparseField, mask: np.ndarray) -> DisparityMap:
    out = upsampled.values.copy()
    r, c = field.rows, field.cols
    m = mask[r, c]
    out[r, c] = upsampled.values[r, c] * (1.0 - m) + field.disparity * m
    valid = upsampled.valid.copy()
    valid[r, c] |= m > 0
    return DisparityMap(out, valid)


def hard_fuse(upsampled: DisparityMap, field: SparseField) -> DisparityMap:
    out = upsampled.values.copy()
    out[field.rows, field.cols] = field.disparity
    valid = upsampled.valid.copy()
    valid[field.rows, field.cols] = True
    return DisparityMap(out, valid)


def _weighted_median_rows(vals, valid, guide, radius, sigma_r, r0, r1):
    h, w = vals.shape
    r = radius
    pv = np.pad(vals, r, mode="edge")
    pm = np.pad(valid, r)
    pg = np.pad(guide, r, mode="edge")
    centre = guide[r0:r1]
    stack_v, stack_w = [], []
    for dy in range(-r, r + 1):
        for dx in range(-r, r + 1):
            sl = (slice(r0 + r + dy, r1 + r + dy), slice(r + dx, r + dx + w))
            diff = pg[sl] - centre
            stack_v.append(pv[sl])
            stack_w.append(np.exp(-(diff * diff) / sigma_r ** 2) * pm[sl])
    v = np.stack(stack_v, axis=-1)
    wt = np.stack(stack_w, axis=-1)
    order = np.argsort(v, axis=-1, kind="stable")
    v = np.take_along_axis(v, order, axis=-1)
    cw = np.cumsum(np.take_along_axis(wt, order, axis=-1), axis=-1)
    half = 0.5 * cw[..., -1:]
    idx = np.argmax(cw >= half, axis=-1)
    return np.take_along_axis(v, idx[..., None], axis=-1)[..., 0], cw[..., -1] > 0


def refine(disp: DisparityMap, guide: np.ndarray | None, radius: int = 2, sigma_r: float = 1.0) -> DisparityMap:
    """One pass of guide-weighted median filtering; ``radius=0`` is the identity."""
    if radius < 0:
        raise InvalidInputError("radius must be >= 0")
    if radius == 0:
        return disp.copy()
    g = np.zeros(disp.shape) if guide is None else guide
    out = disp.values.copy()
    ok = disp.valid.copy()
    for r0 in range(0, disp.shape[0], CHUNK_ROWS):
        r1 = min(r0 + CHUNK_ROWS, disp.shape[0])
        med, has = _weighted_median_rows(disp.values, disp.valid, g, radius, sigma_r, r0, r1)
        out[r0:r1] = np.where(has, med, out[r0:r1])
        ok[r0:r1] |= has
    return DisparityMap(out, ok)
