"""Detection of fine-grained areas: details lost by one downsampling step."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError
from .pyramid import upsample_features

# threshold = max(THRESH_MEDIAN * median(sqrt(e)), THRESH_FLOOR * sqrt(C))
THRESH_MEDIAN = 0.4
THRESH_FLOOR = 0.6
# box radius for pooling the energy before selection
DETECT_RADIUS = 1


@dataclass
class SparsityStats:
    r_spa: float
    r_dis: float
    row_fractions: np.ndarray
    count: int


def diff_energy(fine: np.ndarray, upsampled: np.ndarray) -> np.ndarray:
    """Squared feature difference summed over channels, per pixel."""
    if fine.shape != upsampled.shape:
        raise InvalidInputError(f"shape mismatch: {fine.shape} vs {upsampled.shape}")
    out = np.zeros(fine.shape[1:])
    for ch in range(fine.shape[0]):
        diff = fine[ch] - upsampled[ch]
        out += diff * diff
    return out


def detail_objective(sorted_norms: np.ndarray, alpha: float, form: str = "sum") -> np.ndarray:
    """Objective for every prefix size ``k = 0..n`` of descending norms.

    ``form="mean"`` is ``k - alpha * mean(top-k)``; ``form="sum"`` is
    ``k - alpha * sum(top-k)``. Both are 0 at ``k = 0``.
    """
    k = np.arange(sorted_norms.size + 1)
    total = np.concatenate(([0.0], np.cumsum(sorted_norms)))
    if form == "sum":
        return k - alpha * total
    if form == "mean":
        mean = np.divide(total, k, out=np.zeros_like(total), where=k > 0)
        return k - alpha * mean
    raise InvalidInputError(f"unknown objective form {form!r}")


def mask_objective(norms: np.ndarray, mask: np.ndarray, alpha: float, form: str = "sum") -> float:
    """The same objective evaluated on an arbitrary mask."""
    sel = np.asarray(norms, dtype=np.float64)[np.asarray(mask, dtype=bool)]
    k = sel.size
    if k == 0:
        return 0.0
    total = float(np.sum(sel))
    return k - alpha * (total if form == "sum" else total / k)


def select_fine_grained(energy: np.ndarray, alpha: float, form: str = "sum") -> tuple[np.ndarray, float]:
    """Exact minimiser of the sparsity/detail trade-off over all masks.

    Pixels are ranked by ``sqrt(e)`` (ties broken in row-major order). For a
    fixed mask size both objective forms are best served by the largest
    norms, so the global optimum is the best prefix of that ranking. Ties
    between prefix sizes go to the smaller one.

    The mean form never gains from a second pixel (each step adds 1 to the
    size term and cannot raise the mean), so it selects at most one pixel;
    the pipeline uses the sum form, which selects every pixel with
    ``sqrt(e) > 1 / alpha``.
    """
    if alpha <= 0:
        raise InvalidInputError("alpha must be > 0")
    norms = np.sqrt(np.maximum(energy, 0.0)).ravel()
    order = np.argsort(-norms, kind="stable")
    objective = detail_objective(norms[order], alpha, form)
    k = int(np.argmin(objective))
    mask = np.zeros(norms.size, dtype=bool)
    mask[order[:k]] = True
    return mask.reshape(energy.shape), float(objective[k])


def default_alpha(energy: np.ndarray, channels: int) -> float:
    """Scale-adaptive alpha: the inverse of a median-relative, floored threshold."""
    norms = np.sqrt(np.maximum(energy, 0.0))
    thresh = max(THRESH_MEDIAN * float(np.median(norms)), THRESH_FLOOR * np.sqrt(channels))
    return 1.0 / thresh


def level_energy(fine_feats: np.ndarray, coarse_feats: np.ndarray, s: int) -> np.ndarray:
    return diff_energy(fine_feats, upsample_features(coarse_feats, s))


def smooth_energy(energy: np.ndarray, radius: int) -> np.ndarray:
    """Box mean of the energy over a ``(2r+1)^2`` window, clipped at borders."""
    if radius <= 0:
        return energy
    h, w = energy.shape
    pad = np.pad(energy, radius)
    ones = np.pad(np.ones_like(energy), radius)
    acc = np.zeros_like(energy)
    cnt = np.zeros_like(energy)
    for dy in range(2 * radius + 1):
        for dx in range(2 * radius + 1):
            acc += pad[dy: dy + h, dx: dx + w]
            cnt += ones[dy: dy + h, dx: dx + w]
    return acc / cnt


def detect_details(fine_feats, coarse_feats, s, alpha=None, radius=DETECT_RADIUS):
    """Fine-grained mask of one view at one level; returns ``(mask, alpha)``.

    ``radius`` pools the energy spatially before selection, which makes the
    masks of the two views agree despite different downsampling phases.
    """
    e = smooth_energy(level_energy(fine_feats, coarse_feats, s), radius)
    if alpha is None:
        alpha = default_alpha(e, fine_feats.shape[0])
    mask, _ = select_fine_grained(e, alpha)
    return mask, alpha


def sparsity_stats(mask: np.ndarray) -> SparsityStats:
    mask = np.asarray(mask, dtype=bool)
    count = int(mask.sum())
    r = count / mask.size
    return SparsityStats(r_spa=r, r_dis=r, row_fractions=mask.mean(axis=1), count=count)
