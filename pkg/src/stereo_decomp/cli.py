"""Command-line entry point.

Exit codes: 0 success, 1 validation failure (bad arguments, configs or
inputs), 2 I/O or file-format error. Diagnostics go to stderr.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import sys
import time
from pathlib import Path

import numpy as np

from .complexity import growth_curves, growth_ratios, growth_rows, ledger_rows, write_csv
from .config import format_scene_spec, load_run_config, load_scene_spec
from .dense import DisparityMap
from .errors import FormatError, StereoError
from .io import read_disparity, read_image, read_pgm, write_disparity, write_pgm
from .metrics import evaluate, region_masks
from .pipeline import PipelineConfig, ablate, ablation_csv_rows, ablation_header, run
from .sparse import gradcheck_suite
from .synth import Scene, generate_scene

GRADCHECK_TOL = 1e-4


class UsageError(StereoError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _config(args) -> PipelineConfig:
    cfg = load_run_config(args.config) if getattr(args, "config", None) else PipelineConfig()
    if getattr(args, "d_max", None) is not None:
        cfg = dataclasses.replace(cfg, d_max=args.d_max)
    return cfg


def _write_field(path, field):
    vals = np.where(field.support(), field.dense(), np.inf)
    write_disparity(path, DisparityMap(vals, np.isfinite(vals)))


def _dump(outdir: Path, res):
    outdir.mkdir(parents=True, exist_ok=True)
    write_disparity(outdir / "level0_dense.pfm", res.dense)
    for lv in res.levels:
        write_disparity(outdir / f"level{lv.level}_upsampled.pfm", lv.upsampled)
        write_disparity(outdir / f"level{lv.level}_fused.pfm", lv.fused)
        write_disparity(outdir / f"level{lv.level}_output.pfm", lv.output)
        write_pgm(outdir / f"level{lv.level}_mask_left.pgm", lv.mask_left.astype(np.uint8) * 255)
        write_pgm(outdir / f"level{lv.level}_mask_right.pgm", lv.mask_right.astype(np.uint8) * 255)
        if lv.field is not None:
            _write_field(outdir / f"level{lv.level}_sparse.pfm", lv.field)
    with open(outdir / "ledger.csv", "w", encoding="utf-8", newline="") as fh:
        write_csv(ledger_rows(res.ledger, max(res.original_shape)), fh)


def cmd_match(args) -> int:
    cfg = _config(args)
    left, right = read_image(args.left), read_image(args.right)
    res = run(left, right, cfg)
    if args.out:
        write_disparity(args.out, res.disparity)
    if args.dump_intermediates:
        _dump(Path(args.dump_intermediates), res)
    led = res.ledger
    print(f"size: {res.original_shape[1]}x{res.original_shape[0]}")
    print(f"levels: {cfg.levels}")
    print(f"measured_scores: {led.measured_total}")
    print(f"exhaustive_scores: {led.exhaustive_total}")
    print(f"time_ms: {res.timings_ms['total']:.1f}")
    return 0


def cmd_eval(args) -> int:
    pred = read_disparity(args.pred)
    gt = read_disparity(args.gt)
    region = None
    if args.region == "noc":
        if not args.gt_right:
            raise UsageError("--region noc needs --gt-right")
        gt_right = read_disparity(args.gt_right)
        region = region_masks(gt.values, gt_right.values)["noc"]
    result = evaluate(pred, gt, region, args.region)
    for key, val in result.as_dict().items():
        print(f"{key}: {val:.3f}" if isinstance(val, float) else f"{key}: {val}")
    return 0


def write_scene(outdir: Path, scene: Scene):
    outdir.mkdir(parents=True, exist_ok=True)
    write_pgm(outdir / "left.pgm", np.round(scene.left).astype(np.uint8))
    write_pgm(outdir / "right.pgm", np.round(scene.right).astype(np.uint8))
    write_disparity(outdir / "gt_left.pfm", DisparityMap.from_values(scene.gt_left))
    write_disparity(outdir / "gt_right.pfm", DisparityMap.from_values(scene.gt_right))
    write_pgm(outdir / "occlusion.pgm", scene.occlusion.astype(np.uint8) * 255)
    if scene.spec is not None:
        (outdir / "scene.cfg").write_text(format_scene_spec(scene.spec), encoding="utf-8")


def read_scene(path: Path) -> Scene:
    left, right = read_image(path / "left.pgm"), read_image(path / "right.pgm")
    gt_left = read_disparity(path / "gt_left.pfm").values
    gt_right = read_disparity(path / "gt_right.pfm").values if (path / "gt_right.pfm").exists() else None
    occ = read_pgm(path / "occlusion.pgm") > 0 if (path / "occlusion.pgm").exists() else None
    return Scene(left, right, gt_left, gt_right, occ)


def scene_dirs(path: Path) -> list[Path]:
    if (path / "left.pgm").exists():
        return [path]
    dirs = sorted(p for p in path.iterdir() if (p / "left.pgm").exists()) if path.is_dir() else []
    if not dirs:
        raise FileNotFoundError(f"no scene (left.pgm) under {path}")
    return dirs


def cmd_synth(args) -> int:
    spec = load_scene_spec(args.scene_file)
    write_scene(Path(args.out), generate_scene(spec))
    print(f"wrote {args.out}")
    return 0


def _resample(img: np.ndarray, res: int) -> np.ndarray:
    from scipy.ndimage import zoom
    if img.shape == (res, res):
        return img
    return zoom(img, (res / img.shape[0], res / img.shape[1]), order=1)


def cmd_complexity(args) -> int:
    res_list = []
    for item in args.sweep:
        res_list += [int(x) for x in item.replace(",", " ").split()]
    if not res_list:
        raise UsageError("--sweep needs at least one resolution")
    images = None
    if args.scene:
        sc = read_scene(scene_dirs(Path(args.scene))[0])
        images = {r: (_resample(sc.left, r), _resample(sc.right, r)) for r in res_list}
    cfg = _config(args)
    points = growth_curves(res_list, reference=args.reference, d_ref=args.d_ref, base=res_list[0],
                           images=images, config=cfg)
    out = sys.stdout if not args.out else open(args.out, "w", encoding="utf-8", newline="")
    try:
        write_csv(growth_rows(points), out)
    finally:
        if args.out:
            out.close()
    full = [p.full_count for p in points]
    dec = [p.ledger.decomposed_total for p in points]
    print("exhaustive growth: " + " ".join(f"{g:.3f}" for g in growth_ratios(full)), file=sys.stderr)
    print("decomposed growth: " + " ".join(f"{g:.3f}" for g in growth_ratios(dec)), file=sys.stderr)
    return 0


def cmd_gradcheck(args) -> int:
    t0 = time.perf_counter()
    reports = gradcheck_suite(args.instances, seed=args.seed)
    worst = max(r.max_rel_error for r in reports)
    idle = max(r.max_abs_outside for r in reports)
    print(f"instances: {len(reports)}")
    print(f"max_rel_error: {worst:.3e}")
    print(f"max_abs_outside_support: {idle:.3e}")
    print(f"time_s: {time.perf_counter() - t0:.2f}")
    if worst > GRADCHECK_TOL:
        print(f"gradient check failed: {worst:.3e} > {GRADCHECK_TOL}", file=sys.stderr)
        return 1
    return 0


def cmd_ablate(args) -> int:
    cfg = _config(args)
    scenes = [read_scene(p) for p in scene_dirs(Path(args.scene))]
    region = "noc" if all(sc.occlusion is not None for sc in scenes) else "all"
    rows, table = ablate(scenes, cfg, region=region)
    writer = csv.writer(sys.stdout, lineterminator="\n")
    writer.writerow(ablation_header(cfg.levels))
    writer.writerows(ablation_csv_rows(rows, table))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="stereo-decomp", description="Decomposed stereo matching on greyscale pairs.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    m = sub.add_parser("match", help="estimate a disparity map")
    m.add_argument("left")
    m.add_argument("right")
    m.add_argument("--config")
    m.add_argument("--d-max", type=int)
    m.add_argument("--out")
    m.add_argument("--dump-intermediates", metavar="DIR")
    m.set_defaults(func=cmd_match)

    e = sub.add_parser("eval", help="score a disparity map against ground truth")
    e.add_argument("pred")
    e.add_argument("gt")
    e.add_argument("--region", choices=("all", "noc"), default="all")
    e.add_argument("--gt-right")
    e.set_defaults(func=cmd_eval)

    s = sub.add_parser("synth", help="render a random-dot scene from a scene file")
    s.add_argument("scene_file")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_synth)

    c = sub.add_parser("complexity", help="search-space growth curves as CSV")
    c.add_argument("--sweep", nargs="+", required=True, help="resolutions, e.g. 128,256,512")
    c.add_argument("--scene")
    c.add_argument("--config")
    c.add_argument("--reference", type=int, default=16)
    c.add_argument("--d-ref", type=int, default=16, help="disparity range at the first resolution")
    c.add_argument("--out")
    c.set_defaults(func=cmd_complexity, d_max=None)

    g = sub.add_parser("gradcheck", help="finite-difference check of sparse-matching gradients")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--instances", type=int, default=20)
    g.set_defaults(func=cmd_gradcheck)

    a = sub.add_parser("ablate", help="cumulative stage ablation over scene directories")
    a.add_argument("scene")
    a.add_argument("--config")
    a.add_argument("--d-max", type=int)
    a.set_defaults(func=cmd_ablate)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except (FormatError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except StereoError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
