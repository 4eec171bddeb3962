"""Decomposed stereo matching: dense at level 0, sparse on lost details above.

Per level ``l = 1..L``: detect fine-grained areas in both images, match them
sparsely, upsample the previous disparity, fuse, refine. With
``bidirectional`` the right view is processed as a mirrored left view so
sparse results can be gated by a left-right consistency check.
"""
from __future__ import annotations

import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .complexity import ComplexityLedger, LevelAccount
from .dense import DisparityMap, dense_match
from .detail import DETECT_RADIUS, detect_details
from .errors import InvalidConfigError, InvalidInputError
from .fusion import (hard_fuse, occlusion_from_lr, refine, soft_fuse, soft_mask,
                     upsample_disparity)
from .metrics import evaluate
from .pyramid import PyramidConfig, fit_input, image_pyramid, level_features, matching_embedding
from .sparse import SparseField, sparse_forward

FUSION_MODES = ("soft", "hard", "none")


@dataclass(frozen=True)
class StageFlags:
    guidance: bool = True
    fusion: bool = True
    refine: bool = True


@dataclass(frozen=True)
class PipelineConfig:
    levels: int = 3
    scale: int = 2
    d_max: int = 64
    feature_channels: int = 11
    alpha: float | None = None
    detect_radius: int = DETECT_RADIUS
    match_gain: float | None = 200.0
    sigma_v: float = 1.0
    sigma_r: float = 1.0
    sigma_guide: float = 3.0
    tau_lrc: float = 1.0
    refine_radius: int = 2
    aggregation_radius: int = 2
    aggregation_passes: int = 2
    fusion: str = "soft"
    refine: bool = True
    guidance: bool = True
    bidirectional: bool = True
    # per-level overrides of (guidance, fusion, refine), indexed by level - 1
    stages: tuple | None = None

    def __post_init__(self):
        if self.levels < 0 or self.scale < 2:
            raise InvalidConfigError("need levels >= 0 and scale >= 2")
        if self.d_max < 1:
            raise InvalidConfigError("d_max must be >= 1")
        for name in ("sigma_v", "sigma_r", "sigma_guide", "tau_lrc"):
            if not getattr(self, name) > 0:
                raise InvalidConfigError(f"{name} must be > 0")
        if self.alpha is not None and not self.alpha > 0:
            raise InvalidConfigError("alpha must be > 0")
        if self.match_gain is not None and not self.match_gain > 0:
            raise InvalidConfigError("match_gain must be > 0 or None")
        if (self.refine_radius < 0 or self.aggregation_radius < 0 or self.aggregation_passes < 0
                or self.detect_radius < 0):
            raise InvalidConfigError("radii and pass counts must be >= 0")
        if self.fusion not in FUSION_MODES:
            raise InvalidConfigError(f"fusion must be one of {FUSION_MODES}")
        if not 3 <= self.feature_channels <= 11:
            raise InvalidConfigError("feature_channels must lie in [3, 11]")
        if self.stages is not None and len(self.stages) != self.levels:
            raise InvalidConfigError("stages needs one entry per sparse level")

    @property
    def reference_disparities(self) -> int:
        return math.ceil(self.d_max / self.scale ** self.levels)

    def pyramid(self) -> PyramidConfig:
        return PyramidConfig(levels=self.levels, scale=self.scale,
                             reference_disparities=self.reference_disparities,
                             feature_channels=self.feature_channels)

    def flags(self, level: int) -> StageFlags:
        if self.stages is not None:
            return self.stages[level - 1]
        return StageFlags(self.guidance, self.fusion != "none", self.refine)


@dataclass
class LevelResult:
    level: int
    upsampled: DisparityMap
    field: SparseField | None
    fused: DisparityMap
    output: DisparityMap
    mask_left: np.ndarray
    mask_right: np.ndarray
    soft_mask: np.ndarray | None = None
    occlusion: np.ndarray | None = None


@dataclass
class PipelineResult:
    disparity: DisparityMap
    dense: DisparityMap
    dense_variance: np.ndarray
    levels: list[LevelResult]
    ledger: ComplexityLedger
    right_disparity: DisparityMap | None = None
    original_shape: tuple = ()
    timings_ms: dict = field(default_factory=dict)


def worker_count() -> int:
    raw = os.environ.get("STEREO_DECOMP_THREADS", "0")
    try:
        n = int(raw)
    except ValueError:
        raise InvalidConfigError(f"STEREO_DECOMP_THREADS must be an integer, got {raw!r}")
    return n if n > 0 else (os.cpu_count() or 1)


@dataclass
class _View:
    feats_left: list
    feats_right: list
    masks_left: list
    masks_right: list
    guides: list = field(default_factory=list)
    current: DisparityMap | None = None
    levels: list = field(default_factory=list)
    counts: list = field(default_factory=list)


def _crop(d: DisparityMap, shape) -> DisparityMap:
    h, w = shape
    return DisparityMap(d.values[:h, :w].copy(), d.valid[:h, :w].copy())


def _flip(d: DisparityMap) -> DisparityMap:
    return DisparityMap(d.values[:, ::-1].copy(), d.valid[:, ::-1].copy())


def run(left, right, config: PipelineConfig = PipelineConfig()) -> PipelineResult:
    t_start = time.perf_counter()
    pcfg = config.pyramid()
    fl_img = fit_input(left, pcfg)
    fr_img = fit_input(right, pcfg)
    if fl_img.original_shape != fr_img.original_shape:
        raise InvalidInputError(f"image sizes differ: {fl_img.original_shape} vs {fr_img.original_shape}")
    h, w = fl_img.original_shape
    f = pcfg.factor
    if h < f or w < f:
        raise InvalidInputError(f"images must be at least {f} pixels in each dimension")
    if pcfg.reference_disparities * f > fl_img.data.shape[1]:
        raise InvalidConfigError(f"D0 * s^L = {pcfg.reference_disparities * f} exceeds image width")
    s = config.scale
    L = config.levels

    t0 = time.perf_counter()
    pyr_l = image_pyramid(fl_img.data, L, s)
    pyr_r = image_pyramid(fr_img.data, L, s)
    feats_l = [level_features(im, config.feature_channels) for im in pyr_l]
    feats_r = [level_features(im, config.feature_channels) for im in pyr_r]

    # detection runs per image; the mirrored view reuses flipped masks
    masks_l, masks_r = [None], [None]
    for lv in range(1, L + 1):
        alpha = config.alpha
        ml, _ = detect_details(feats_l[lv], feats_l[lv - 1], s, alpha, config.detect_radius)
        mr, _ = detect_details(feats_r[lv], feats_r[lv - 1], s, alpha, config.detect_radius)
        masks_l.append(ml)
        masks_r.append(mr)

    def embed(fs):
        return [matching_embedding(f, config.match_gain) for f in fs]

    views = [_View(embed(feats_l), embed(feats_r), masks_l, masks_r, guides=[f[0] for f in feats_l])]
    if config.bidirectional:
        mf = [level_features(im[:, ::-1], config.feature_channels) for im in pyr_r]
        mg = [level_features(im[:, ::-1], config.feature_channels) for im in pyr_l]
        views.append(_View(embed(mf), embed(mg),
                           [None] + [m[:, ::-1] for m in masks_r[1:]],
                           [None] + [m[:, ::-1] for m in masks_l[1:]], guides=[f[0] for f in mf]))
    timings = {"features": (time.perf_counter() - t0) * 1e3}

    ledger = ComplexityLedger(scale=s)
    n_workers = min(worker_count(), len(views))
    with ThreadPoolExecutor(max_workers=n_workers) as pool:
        t0 = time.perf_counter()
        d0 = pcfg.reference_disparities

        def dense(v):
            return dense_match(v.feats_left[0], v.feats_right[0], d0,
                               config.aggregation_radius, config.aggregation_passes)

        dense_out = list(pool.map(dense, views))
        for v, (disp, var, count) in zip(views, dense_out):
            v.current = disp
            v.counts.append(count)
        h0, w0 = feats_l[0].shape[1:]
        ledger.levels.append(LevelAccount(0, w0, h0, d0, 1.0, dense_out[0][2],
                                          dense_out[1][2] if len(views) > 1 else 0,
                                          (time.perf_counter() - t0) * 1e3))

        for lv in range(1, L + 1):
            t0 = time.perf_counter()
            flags = config.flags(lv)
            n_disp = pcfg.disparities(lv)

            def step(v):
                guide = v.guides[lv] if flags.guidance else None
                up = upsample_disparity(v.current, guide, s, config.sigma_guide)
                fld = None
                if flags.fusion:
                    fld = sparse_forward(v.feats_left[lv], v.feats_right[lv],
                                         v.masks_left[lv], v.masks_right[lv], n_disp)
                return up, fld

            stepped = list(pool.map(step, views))
            occl = [None] * len(views)
            if flags.fusion and config.fusion == "soft" and len(views) == 2:
                hard = [hard_fuse(up, fld) for up, fld in stepped]
                tau = config.tau_lrc / s ** (L - lv)
                occl[0] = occlusion_from_lr(hard[0], _flip(hard[1]), tau)
                occl[1] = occlusion_from_lr(hard[1], _flip(hard[0]), tau)

            def finish(i):
                v = views[i]
                up, fld = stepped[i]
                mask = None
                if fld is None:
                    fused = up
                elif config.fusion == "hard":
                    fused = hard_fuse(up, fld)
                else:
                    mask = soft_mask(fld, occl[i], config.sigma_v)
                    fused = soft_fuse(up, fld, mask)
                out = fused
                if flags.refine:
                    out = refine(fused, v.guides[lv], config.refine_radius, config.sigma_r)
                return LevelResult(lv, up, fld, fused, out, v.masks_left[lv], v.masks_right[lv],
                                   mask, occl[i])

            results = list(pool.map(finish, range(len(views))))
            for v, res in zip(views, results):
                v.current = res.output
                v.levels.append(res)
                v.counts.append(res.field.evaluations if res.field is not None else 0)
            hl, wl = feats_l[lv].shape[1:]
            r = float(masks_l[lv].mean())
            ledger.levels.append(LevelAccount(lv, wl, hl, n_disp, r, views[0].counts[-1],
                                              views[1].counts[-1] if len(views) > 1 else 0,
                                              (time.perf_counter() - t0) * 1e3))

    main = views[0]
    right_disp = _crop(_flip(views[1].current), (h, w)) if len(views) > 1 else None
    timings["total"] = (time.perf_counter() - t_start) * 1e3
    return PipelineResult(disparity=_crop(main.current, (h, w)), dense=dense_out[0][0],
                          dense_variance=dense_out[0][1], levels=main.levels, ledger=ledger,
                          right_disparity=right_disp, original_shape=(h, w), timings_ms=timings)


ABLATION_COLUMNS = ("guidance", "fusion", "refine")


def ablation_rows(levels: int) -> list[tuple]:
    """Cumulative toggles: all off, then each stage of each level switched on in turn."""
    rows = []
    on = [[False] * 3 for _ in range(levels)]
    rows.append(tuple(StageFlags(*f) for f in on))
    for lv in range(levels):
        for k in range(3):
            on[lv][k] = True
            rows.append(tuple(StageFlags(*f) for f in on))
    return rows


def ablate(scenes, config: PipelineConfig = PipelineConfig(), region="all"):
    """EPE per cumulative configuration over a list of scenes.

    ``scenes`` holds objects with ``left``, ``right``, ``gt_left`` and
    optionally ``occlusion``; ``region="noc"`` drops occluded pixels.
    Returns ``(rows, table)`` where each table entry is the list of EPEs.
    """
    if not scenes:
        raise InvalidInputError("ablation needs at least one scene")
    rows = ablation_rows(config.levels)
    table = []
    for stages in rows:
        cfg = replace(config, stages=stages)
        epes = []
        for sc in scenes:
            res = run(sc.left, sc.right, cfg)
            region_mask = None
            if region == "noc" and getattr(sc, "occlusion", None) is not None:
                region_mask = ~sc.occlusion
            gt = DisparityMap.from_values(sc.gt_left)
            epes.append(evaluate(res.disparity, gt, region_mask).epe)
        table.append(epes)
    return rows, table


def ablation_csv_rows(rows, table):
    out = []
    for stages, epes in zip(rows, table):
        flags = []
        for st in stages:
            flags += [int(st.guidance), int(st.fusion), int(st.refine)]
        out.append(flags + [f"{float(np.mean(epes)):.4f}"])
    return out


def ablation_header(levels: int) -> list[str]:
    cols = []
    for lv in range(1, levels + 1):
        cols += [f"{name}_l{lv}" for name in ABLATION_COLUMNS]
    return cols + ["epe"]
