"""Sparse matching over fine-grained areas and its analytic gradients.

Only left-mask pixels are matched, and only against right-mask pixels within
the disparity range, so no cost volume is ever materialised. Every
(entry, candidate) pair is one score evaluation.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError


@dataclass
class SparseField:
    shape: tuple[int, int]
    n_disp: int
    rows: np.ndarray
    cols: np.ndarray
    disparity: np.ndarray
    variance: np.ndarray
    candidate_count: np.ndarray
    # one item per (entry, candidate) pair, grouped by entry, candidates ascending
    pair_entry: np.ndarray
    pair_disp: np.ndarray
    pair_prob: np.ndarray

    def __len__(self):
        return int(self.rows.size)

    @property
    def evaluations(self) -> int:
        return int(self.pair_disp.size)

    def dense(self, fill=0.0) -> np.ndarray:
        out = np.full(self.shape, fill, dtype=np.float64)
        out[self.rows, self.cols] = self.disparity
        return out

    def dense_variance(self, fill=0.0) -> np.ndarray:
        out = np.full(self.shape, fill, dtype=np.float64)
        out[self.rows, self.cols] = self.variance
        return out

    def support(self) -> np.ndarray:
        out = np.zeros(self.shape, dtype=bool)
        out[self.rows, self.cols] = True
        return out


@dataclass
class GradientBundle:
    left: np.ndarray
    right: np.ndarray


def candidate_set(row, col, left_mask, right_mask, n_disp) -> list[int]:
    if not left_mask[row, col]:
        raise InvalidInputError(f"({row}, {col}) is not in the left mask")
    return [d for d in range(n_disp) if col - d >= 0 and right_mask[row, col - d]]


def candidate_volume(left_mask: np.ndarray, right_mask: np.ndarray, n_disp: int) -> np.ndarray:
    """Boolean ``(H, W, D)`` array: ``True`` where ``d`` is a candidate of ``(r, c)``."""
    h, w = left_mask.shape
    cand = np.zeros((h, w, n_disp), dtype=bool)
    for d in range(min(n_disp, w)):
        cand[:, d:, d] = left_mask[:, d:] & right_mask[:, : w - d]
    return cand


def _padded(values, entry, offset, n_entries, width):
    out = np.zeros((n_entries, width))
    out[entry, offset] = values
    return out


def sparse_forward(fl, fr, left_mask, right_mask, n_disp) -> SparseField:
    left_mask = np.asarray(left_mask, dtype=bool)
    right_mask = np.asarray(right_mask, dtype=bool)
    if fl.shape != fr.shape or fl.shape[1:] != left_mask.shape or left_mask.shape != right_mask.shape:
        raise InvalidInputError("feature and mask shapes must agree")
    h, w = left_mask.shape
    pr, pc, pd = np.nonzero(candidate_volume(left_mask, right_mask, n_disp))

    pix = pr * w + pc
    uniq, starts, counts = np.unique(pix, return_index=True, return_counts=True)
    n_entries = uniq.size
    entry = np.repeat(np.arange(n_entries), counts)
    offset = np.arange(pix.size) - starts[entry]
    width = int(counts.max()) if n_entries else 0

    scores = np.zeros(pix.size)
    for ch in range(fl.shape[0]):
        scores += fl[ch, pr, pc] * fr[ch, pr, pc - pd]

    if n_entries:
        cmax = np.maximum.reduceat(scores, starts)
    else:
        cmax = np.zeros(0)
    e = np.exp(scores - cmax[entry])
    e_pad = _padded(e, entry, offset, n_entries, width)
    z = np.zeros(n_entries)
    for k in range(width):
        z += e_pad[:, k]
    prob = e / z[entry]

    p_pad = _padded(prob, entry, offset, n_entries, width)
    d_pad = _padded(pd.astype(np.float64), entry, offset, n_entries, width)
    disp = np.zeros(n_entries)
    for k in range(width):
        disp += p_pad[:, k] * d_pad[:, k]
    var = np.zeros(n_entries)
    for k in range(width):
        var += p_pad[:, k] * (disp - d_pad[:, k]) ** 2

    return SparseField(shape=(h, w), n_disp=n_disp, rows=uniq // w, cols=uniq % w,
                       disparity=disp, variance=var, candidate_count=counts,
                       pair_entry=entry, pair_disp=pd, pair_prob=prob)


def sparse_backward(field: SparseField, upstream, fl, fr) -> GradientBundle:
    """Gradients of ``sum(upstream * D_hat)`` with respect to both feature maps.

    ``dD/ds_d = P(d) * (d - D)`` for the score of candidate ``d``, and each
    score is a dot product, so the left pixel receives the candidate's right
    feature and the right pixel receives the left feature, both weighted by
    that factor. Since the factors of one entry sum to zero, the left pixel's
    right features are taken relative to its first candidate; the value is
    unchanged but is exactly zero when all candidates look alike.
    Accumulation follows the pair order (row-major entries, ascending
    candidates) so the result does not depend on scheduling.
    """
    upstream = np.asarray(upstream, dtype=np.float64)
    if upstream.shape != (len(field),):
        raise InvalidInputError(f"upstream has shape {upstream.shape}, expected ({len(field)},)")
    entry = field.pair_entry
    r = field.rows[entry]
    c = field.cols[entry]
    d = field.pair_disp
    g = upstream[entry] * field.pair_prob * (d - field.disparity[entry])
    first = np.searchsorted(entry, np.arange(len(field)))
    d_ref = d[first][entry]

    d_left = np.zeros_like(fl, dtype=np.float64)
    d_right = np.zeros_like(fr, dtype=np.float64)
    for ch in range(fl.shape[0]):
        np.add.at(d_left[ch], (r, c), g * (fr[ch, r, c - d] - fr[ch, r, c - d_ref]))
        np.add.at(d_right[ch], (r, c - d), g * fl[ch, r, c])
    return GradientBundle(d_left, d_right)


@dataclass
class GradcheckReport:
    rel_error_left: float
    rel_error_right: float
    max_abs_outside: float
    n_checked: int

    @property
    def max_rel_error(self) -> float:
        return max(self.rel_error_left, self.rel_error_right)


def _rel_error(analytic, numeric):
    a = np.asarray(analytic)
    n = np.asarray(numeric)
    if a.size == 0:
        return 0.0
    scale = max(np.abs(a).max(), np.abs(n).max())
    if scale == 0.0:
        return 0.0
    return float(np.abs(a - n).max() / scale)


def _row_loss(fl, fr, lm, rm, n_disp, weights, row):
    # the loss is a sum over rows and each row is independent of the others
    f = sparse_forward(fl[:, row: row + 1], fr[:, row: row + 1], lm[row: row + 1], rm[row: row + 1], n_disp)
    return float(np.dot(weights[row, f.cols], f.disparity))


def gradcheck(seed=0, height=8, width=8, n_disp=4, channels=3, density=0.6,
              constant=False, step=1e-6, backward=sparse_backward) -> GradcheckReport:
    """Compare analytic gradients with central differences of ``sum(w * D_hat)``."""
    if height > 16 or width > 16 or n_disp > 8:
        raise InvalidInputError("gradcheck instances are limited to 16x16 and D <= 8")
    rng = np.random.default_rng(seed)
    if constant:
        fl = np.full((channels, height, width), 0.7)
        fr = np.full((channels, height, width), 0.7)
    else:
        fl = rng.normal(scale=0.8, size=(channels, height, width))
        fr = rng.normal(scale=0.8, size=(channels, height, width))
    lm = rng.random((height, width)) < density
    rm = rng.random((height, width)) < density
    weights = rng.normal(size=(height, width))

    field = sparse_forward(fl, fr, lm, rm, n_disp)
    grads = backward(field, weights[field.rows, field.cols], fl, fr)

    participates_left = np.zeros((height, width), dtype=bool)
    participates_left[field.rows, field.cols] = True
    participates_right = np.zeros((height, width), dtype=bool)
    pe = field.pair_entry
    participates_right[field.rows[pe], field.cols[pe] - field.pair_disp] = True

    results = {}
    outside = 0.0
    checked = 0
    for name, feats, part, grad in (("left", fl, participates_left, grads.left),
                                    ("right", fr, participates_right, grads.right)):
        num, ana = [], []
        for r, c in zip(*np.nonzero(part)):
            for ch in range(channels):
                orig = feats[ch, r, c]
                feats[ch, r, c] = orig + step
                up = _row_loss(fl, fr, lm, rm, n_disp, weights, r)
                feats[ch, r, c] = orig - step
                down = _row_loss(fl, fr, lm, rm, n_disp, weights, r)
                feats[ch, r, c] = orig
                num.append((up - down) / (2 * step))
                ana.append(grad[ch, r, c])
        checked += len(num)
        results[name] = _rel_error(ana, num)
        outside = max(outside, float(np.abs(grad[:, ~part]).max(initial=0.0)))
        # a few non-participating elements must be numerically inert as well
        idle = np.argwhere(~part)
        for r, c in idle[: 4]:
            orig = feats[0, r, c]
            base = _row_loss(fl, fr, lm, rm, n_disp, weights, r)
            feats[0, r, c] = orig + 1.0
            moved = _row_loss(fl, fr, lm, rm, n_disp, weights, r)
            feats[0, r, c] = orig
            outside = max(outside, abs(moved - base))
    return GradcheckReport(results["left"], results["right"], outside, checked)


def gradcheck_suite(n_instances=20, seed=0, backward=sparse_backward) -> list[GradcheckReport]:
    """Random instances up to 16x16 with at most 8 disparities."""
    rng = np.random.default_rng(seed)
    reports = []
    for i in range(n_instances):
        h, w = (int(x) for x in rng.integers(2, 17, size=2))
        d = int(rng.integers(1, 9))
        ch = int(rng.integers(1, 5))
        reports.append(gradcheck(seed=seed * 1000 + i, height=h, width=w, n_disp=d,
                                 channels=ch, backward=backward))
    return reports
