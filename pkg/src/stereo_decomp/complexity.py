"""Search-space accounting for exhaustive and decomposed matching.

Complexity is the number of matching-score evaluations. For an exhaustive
multi-scale search the level-``l`` count is ``W_l * H_l * D_l`` with every
dimension growing by ``s`` per level; the decomposed model keeps level 0
dense and searches level ``l`` only over a fraction ``r_l`` of left pixels and
of the disparity range, which costs ``W_l * H_l * D_l * r_l**2``.
"""
from __future__ import annotations

import csv
import io
import math
import time
from dataclasses import dataclass, field, replace
from fractions import Fraction

from .errors import InvalidInputError

CSV_HEADER = ["resolution", "level", "O_exhaustive", "O_decomposed", "measured", "wallclock_ms"]


def geometric_constant(s: int) -> Fraction:
    return Fraction(s ** 3, s ** 3 - 1)


def exhaustive_total(w0, h0, d0, s, levels):
    """Per-level counts, their sum, and the closed-form upper bound.

    The bound is ``W0*H0*D0 * s**(3L) * s**3/(s**3 - 1)``, returned as an
    exact ``Fraction``. Python integers do not overflow, so counts are exact
    at any size.
    """
    if s < 2 or levels < 0:
        raise InvalidInputError("need s >= 2 and L >= 0")
    base = w0 * h0 * d0
    per_level = [base * s ** (3 * l) for l in range(levels + 1)]
    total = sum(per_level)
    bound = base * s ** (3 * levels) * geometric_constant(s)
    assert total <= bound
    return per_level, total, bound


def condition_threshold(s: int, level: int, c: float) -> float:
    return math.sqrt(c / s ** (3 * level))


def condition_ok(r: float, s: int, level: int, c: float) -> bool:
    return r <= condition_threshold(s, level, c)


@dataclass
class DecomposedReport:
    per_level: list[float]
    total: float
    conditions: list[bool]
    linear_bound: float

    @property
    def all_ok(self) -> bool:
        return all(self.conditions)


def decomposed_total(w0, h0, d0, s, levels, r, c=1.0) -> DecomposedReport:
    """Sparse complexity per level for fractions ``r`` (levels 1..L).

    ``r`` may also be given for levels 0..L, in which case ``r[0]`` is
    ignored: level 0 is always matched densely.
    """
    r = list(r)
    if len(r) == levels + 1:
        r = r[1:]
    if len(r) != levels:
        raise InvalidInputError(f"expected {levels} fractions, got {len(r)}")
    if any(not 0.0 <= x <= 1.0 for x in r):
        raise InvalidInputError("fractions must lie in [0, 1]")
    base = w0 * h0 * d0
    per_level = [float(base)] + [base * s ** (3 * l) * r[l - 1] ** 2 for l in range(1, levels + 1)]
    conditions = [condition_ok(r[l - 1], s, l, c) for l in range(1, levels + 1)]
    return DecomposedReport(per_level, math.fsum(per_level), conditions, base * (1 + levels * c))


@dataclass
class LevelAccount:
    level: int
    width: int
    height: int
    disparities: int
    r: float = 1.0
    measured: int = 0
    measured_right: int = 0
    wallclock_ms: float = 0.0

    @property
    def exhaustive(self) -> int:
        return self.width * self.height * self.disparities

    @property
    def decomposed(self) -> float:
        if self.level == 0:
            return float(self.exhaustive)
        return self.exhaustive * self.r ** 2


@dataclass
class ComplexityLedger:
    scale: int
    levels: list[LevelAccount] = field(default_factory=list)
    c: float = 1.0

    @property
    def exhaustive_total(self) -> int:
        return sum(a.exhaustive for a in self.levels)

    @property
    def decomposed_total(self) -> float:
        return math.fsum(a.decomposed for a in self.levels)

    @property
    def measured_total(self) -> int:
        """Score evaluations of the left view, the quantity the model counts."""
        return sum(a.measured for a in self.levels)

    @property
    def measured_both(self) -> int:
        return sum(a.measured + a.measured_right for a in self.levels)

    def conditions(self, c: float | None = None) -> list[bool]:
        c = self.c if c is None else c
        return [condition_ok(a.r, self.scale, a.level, c) for a in self.levels if a.level > 0]

    def condition_table(self, cs=range(1, 7)) -> dict:
        """Per-``C`` verdicts for each sparse level."""
        return {c: self.conditions(c) for c in cs}


@dataclass
class LevelReconciliation:
    level: int
    measured: int
    expected_max: float
    theoretical: float
    ok: bool

    @property
    def ratio(self) -> float:
        return self.measured / self.theoretical if self.theoretical else float("nan")


def dense_valid_entries(width: int, height: int, disparities: int) -> int:
    return height * sum(max(width - d, 0) for d in range(disparities))


def reconcile(ledger: ComplexityLedger) -> list[LevelReconciliation]:
    """Compare measured score counts with the theory, level by level.

    Level 0 must equal the number of in-frame cost-volume entries. At sparse
    levels every candidate lies in the right mask and within the disparity
    range, so the count cannot exceed ``|FA_l| * D_l = O_l * r_l``.
    """
    out = []
    for a in ledger.levels:
        if a.level == 0:
            expected = dense_valid_entries(a.width, a.height, a.disparities)
            ok = a.measured == expected
        else:
            expected = a.exhaustive * a.r
            ok = a.measured <= expected + 1e-9
        out.append(LevelReconciliation(a.level, a.measured, expected, a.decomposed, ok))
    return out


def ledger_rows(ledger: ComplexityLedger, resolution) -> list[list]:
    rows = []
    for a in ledger.levels:
        rows.append([resolution, a.level, a.exhaustive, f"{a.decomposed:.6g}",
                     a.measured, f"{a.wallclock_ms:.3f}"])
    return rows


def write_csv(rows, stream=None) -> str:
    buf = io.StringIO() if stream is None else stream
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    writer.writerows(rows)
    return buf.getvalue() if stream is None else ""


@dataclass
class GrowthPoint:
    resolution: int
    levels: int
    d_max: int
    ledger: ComplexityLedger
    full_count: int
    full_measured: int
    decomposed_ms: float
    exhaustive_ms: float

    @property
    def wallclock_ratio(self) -> float:
        return self.decomposed_ms / self.exhaustive_ms

    def rows(self) -> list[list]:
        rows = ledger_rows(self.ledger, self.resolution)
        rows.append([self.resolution, "total", self.ledger.exhaustive_total,
                     f"{self.ledger.decomposed_total:.6g}", self.ledger.measured_total,
                     f"{self.decomposed_ms:.3f}"])
        rows.append([self.resolution, "full", self.full_count, "", self.full_measured,
                     f"{self.exhaustive_ms:.3f}"])
        return rows


def growth_ratios(values) -> list[float]:
    return [b / a for a, b in zip(values, values[1:])]


def growth_curves(resolutions=(128, 256, 512, 1024), reference=16, d_ref=16, base=128,
                  images=None, config=None, seed=0) -> list[GrowthPoint]:
    """Search-space counts and timings for a sweep of square resolutions.

    The reference resolution stays fixed at ``reference`` so each doubling
    adds one pyramid level; ``d_max`` scales as ``d_ref * res / base``. Each
    point also times a single-scale exhaustive search at full resolution on
    the same features. ``images`` maps resolution to ``(left, right)``;
    without it a synthetic scene whose content scales with resolution is
    rendered.
    """
    from .dense import exhaustive_match
    from .pipeline import PipelineConfig, run
    from .pyramid import level_features, matching_embedding, to_luminance
    from .synth import generate_scene, growth_scene

    config = config or PipelineConfig()
    s = config.scale
    out = []
    for res in resolutions:
        levels = round(math.log(res / reference, s))
        if reference * s ** levels != res:
            raise InvalidInputError(f"resolution {res} is not reference * s**L")
        d_max = max(1, d_ref * res // base)
        if images is not None:
            left, right = images[res]
        else:
            sc = generate_scene(growth_scene(res, seed=seed))
            left, right = sc.left, sc.right
        cfg = replace(config, levels=levels, d_max=d_max, stages=None)
        result = run(left, right, cfg)
        dec_ms = result.timings_ms["total"]

        t0 = time.perf_counter()
        fl = matching_embedding(level_features(to_luminance(left), cfg.feature_channels), cfg.match_gain)
        fr = matching_embedding(level_features(to_luminance(right), cfg.feature_channels), cfg.match_gain)
        _, count = exhaustive_match(fl, fr, d_max)
        ex_ms = (time.perf_counter() - t0) * 1e3

        h, w = to_luminance(left).shape
        out.append(GrowthPoint(res, levels, d_max, result.ledger, w * h * d_max, count, dec_ms, ex_ms))
    return out


def growth_rows(points) -> list[list]:
    rows = []
    for p in points:
        rows += p.rows()
    return rows
