"""Exhaustive matching at the reference resolution.

Scores are channel dot products (cross-correlation), so larger is better.
Reductions run in a fixed order (channels, window offsets, disparities) so
results are bit-identical to a scalar loop performing the same steps.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidConfigError, InvalidInputError


@dataclass
class DisparityMap:
    values: np.ndarray
    valid: np.ndarray

    @classmethod
    def from_values(cls, values) -> "DisparityMap":
        v = np.asarray(values, dtype=np.float64)
        return cls(values=v, valid=np.ones(v.shape, dtype=bool))

    @property
    def shape(self):
        return self.values.shape

    def copy(self) -> "DisparityMap":
        return DisparityMap(self.values.copy(), self.valid.copy())


@dataclass
class CostVolume:
    scores: np.ndarray  # (H, W, D); -inf where invalid
    valid: np.ndarray   # (H, W, D) bool

    @property
    def disparities(self) -> int:
        return self.scores.shape[2]

    @property
    def evaluations(self) -> int:
        return int(self.valid.sum())


def correlate(fl: np.ndarray, fr: np.ndarray) -> np.ndarray:
    """Per-pixel dot product over the channel axis, summed channel by channel."""
    acc = np.zeros(fl.shape[1:])
    for ch in range(fl.shape[0]):
        acc += fl[ch] * fr[ch]
    return acc


def build_cost_volume(fl: np.ndarray, fr: np.ndarray, n_disp: int) -> CostVolume:
    if fl.shape != fr.shape:
        raise InvalidInputError(f"feature shapes differ: {fl.shape} vs {fr.shape}")
    _, h, w = fl.shape
    if n_disp < 1 or n_disp > w:
        raise InvalidConfigError(f"disparity count {n_disp} must lie in [1, width={w}]")
    scores = np.full((h, w, n_disp), -np.inf)
    valid = np.zeros((h, w, n_disp), dtype=bool)
    for d in range(n_disp):
        scores[:, d:, d] = correlate(fl[:, :, d:], fr[:, :, : w - d])
        valid[:, d:, d] = True
    return CostVolume(scores, valid)


def aggregate_costs(cv: CostVolume, radius: int) -> CostVolume:
    """Box-filter each disparity slice, averaging only valid in-image entries."""
    if radius < 0:
        raise InvalidInputError("radius must be >= 0")
    if radius == 0:
        return CostVolume(cv.scores.copy(), cv.valid.copy())
    h, w, _ = cv.scores.shape
    r = radius
    vals = np.pad(np.where(cv.valid, cv.scores, 0.0), ((r, r), (r, r), (0, 0)))
    mask = np.pad(cv.valid, ((r, r), (r, r), (0, 0)))
    total = np.zeros(cv.scores.shape)
    count = np.zeros(cv.scores.shape)
    for dy in range(-r, r + 1):
        for dx in range(-r, r + 1):
            total += vals[r + dy: r + dy + h, r + dx: r + dx + w]
            count += mask[r + dy: r + dy + h, r + dx: r + dx + w]
    out = np.full(cv.scores.shape, -np.inf)
    np.divide(total, count, out=out, where=cv.valid)
    return CostVolume(out, cv.valid.copy())


def softargmax_regress(cv: CostVolume) -> tuple[DisparityMap, np.ndarray]:
    """Soft-argmax over valid hypotheses; returns the map and its variance."""
    scores, valid = cv.scores, cv.valid
    n_disp = scores.shape[2]
    any_valid = valid.any(axis=2)
    cmax = np.where(any_valid, np.max(np.where(valid, scores, -np.inf), axis=2), 0.0)

    expd = np.zeros(scores.shape)
    z = np.zeros(scores.shape[:2])
    for d in range(n_disp):
        e = np.exp(np.where(valid[:, :, d], scores[:, :, d] - cmax, -np.inf))
        expd[:, :, d] = e
        z += e
    z = np.where(any_valid, z, 1.0)
    disp = np.zeros(z.shape)
    prob = expd / z[:, :, None]
    for d in range(n_disp):
        disp += prob[:, :, d] * d
    var = np.zeros(z.shape)
    for d in range(n_disp):
        var += prob[:, :, d] * (disp - d) ** 2
    return DisparityMap(disp, any_valid), var


def dense_match(fl, fr, n_disp, radius=2, passes=2):
    """Cost volume, ``passes`` rounds of aggregation, regression.

    Returns ``(disparity, variance, score_evaluations)``.
    """
    cv = build_cost_volume(fl, fr, n_disp)
    count = cv.evaluations
    for _ in range(passes):
        cv = aggregate_costs(cv, radius)
    disp, var = softargmax_regress(cv)
    return disp, var, count


def exhaustive_match(fl, fr, n_disp):
    """Single-scale exhaustive soft-argmax that streams over disparities.

    Memory stays ``O(H*W)`` so the full-resolution baseline of the growth
    experiment fits in RAM. Returns ``(disparity, score_evaluations)``.
    """
    _, h, w = fl.shape
    if n_disp < 1 or n_disp > w:
        raise InvalidConfigError(f"disparity count {n_disp} must lie in [1, width={w}]")
    m = np.full((h, w), -np.inf)
    z = np.zeros((h, w))
    s1 = np.zeros((h, w))
    count = 0
    for d in range(n_disp):
        sc = np.full((h, w), -np.inf)
        sc[:, d:] = correlate(fl[:, :, d:], fr[:, :, : w - d])
        count += h * (w - d)
        m_new = np.maximum(m, sc)
        keep = np.isfinite(m_new)
        rescale = np.where(keep, np.exp(np.where(keep, m - m_new, 0.0)), 0.0)
        e = np.where(keep, np.exp(np.where(keep, sc - m_new, -np.inf)), 0.0)
        z = z * rescale + e
        s1 = s1 * rescale + e * d
        m = m_new
    return DisparityMap(s1 / z, np.isfinite(m)), count
