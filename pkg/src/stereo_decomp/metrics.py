"""Disparity error metrics: EPE, bad-tau, D1, RMS and error quantiles."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .dense import DisparityMap
from .errors import InvalidInputError

DEFAULT_TAUS = (0.5, 1.0, 2.0, 3.0, 4.0)
DEFAULT_QUANTILES = (50, 90, 95, 99)


@dataclass
class EvalResult:
    epe: float
    bad: dict = field(default_factory=dict)
    d1: float = 0.0
    rms: float = 0.0
    quantiles: dict = field(default_factory=dict)
    count: int = 0
    region: str = "all"

    def as_dict(self) -> dict:
        out = {"region": self.region, "pixels": self.count, "epe": self.epe, "d1": self.d1, "rms": self.rms}
        for tau, v in self.bad.items():
            out[f"bad_{tau:.1f}"] = v
        for q, v in self.quantiles.items():
            out[f"A{q}"] = v
        return out


def nearest_rank(sorted_vals: np.ndarray, pct: float) -> float:
    n = sorted_vals.size
    k = max(1, math.ceil(pct / 100.0 * n))
    return float(sorted_vals[k - 1])


def evaluate(pred: DisparityMap, gt: DisparityMap, region=None, region_name="all",
             taus=DEFAULT_TAUS, quantiles=DEFAULT_QUANTILES) -> EvalResult:
    if pred.shape != gt.shape:
        raise InvalidInputError(f"prediction {pred.shape} and ground truth {gt.shape} differ in size")
    sel = pred.valid & gt.valid
    if region is not None:
        sel &= np.asarray(region, dtype=bool)
    if not sel.any():
        raise InvalidInputError("evaluation region is empty")
    err = np.abs(pred.values[sel] - gt.values[sel])
    truth = np.abs(gt.values[sel])
    n = err.size
    epe = math.fsum(err.tolist()) / n
    rms = math.sqrt(math.fsum((err * err).tolist()) / n)
    bad = {float(t): int(np.count_nonzero(err > t)) / n for t in taus}
    d1 = int(np.count_nonzero((err > 3.0) & (err > 0.05 * truth))) / n
    srt = np.sort(err)
    qs = {int(q): nearest_rank(srt, q) for q in quantiles}
    return EvalResult(epe=epe, bad=bad, d1=d1, rms=rms, quantiles=qs, count=n, region=region_name)


def _nearest_up(mask: np.ndarray, factor: int, shape) -> np.ndarray:
    up = np.repeat(np.repeat(mask, factor, axis=0), factor, axis=1)
    out = np.zeros(shape, dtype=bool)
    h, w = min(shape[0], up.shape[0]), min(shape[1], up.shape[1])
    out[:h, :w] = up[:h, :w]
    return out


def region_masks(gt_left, gt_right=None, fine_masks=None, scale=2) -> dict:
    """Evaluation regions at full resolution.

    ``noc`` drops pixels failing a left-right check (tolerance 1 px) on the
    ground truth. ``fine_masks`` maps level -> mask at that level, with the
    highest key taken as full resolution; each is expanded by nearest
    neighbour.
    """
    from .fusion import occlusion_from_lr

    gt_left = np.asarray(gt_left, dtype=np.float64)
    shape = gt_left.shape
    regions = {"all": np.ones(shape, dtype=bool)}
    if gt_right is not None:
        occ = occlusion_from_lr(DisparityMap.from_values(gt_left),
                                DisparityMap.from_values(gt_right), 1.0)
        regions["noc"] = ~occ
    if fine_masks:
        top = max(fine_masks)
        for lv, m in fine_masks.items():
            regions[f"fa_{lv}"] = _nearest_up(np.asarray(m, dtype=bool), scale ** (top - lv), shape)
    return regions
