"""Search-space growth over a resolution sweep, as CSV plus growth ratios.

Usage: python3 scripts/growth_curves.py [--sweep 128 256 512 1024] [--out growth.csv]
"""
import argparse
import sys

from stereo_decomp.complexity import growth_curves, growth_ratios, growth_rows, write_csv


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sweep", type=int, nargs="+", default=[128, 256, 512, 1024])
    ap.add_argument("--reference", type=int, default=16)
    ap.add_argument("--d-ref", type=int, default=16)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out")
    args = ap.parse_args()

    points = growth_curves(args.sweep, reference=args.reference, d_ref=args.d_ref,
                           base=args.sweep[0], seed=args.seed)
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            write_csv(growth_rows(points), fh)
    else:
        write_csv(growth_rows(points), sys.stdout)

    def fmt(values):
        return " ".join(f"{v:.3f}" for v in values)

    print(f"single-scale exhaustive growth: {fmt(growth_ratios([p.full_count for p in points]))}", file=sys.stderr)
    print(f"decomposed model growth:        {fmt(growth_ratios([p.ledger.decomposed_total for p in points]))}",
          file=sys.stderr)
    print(f"decomposed measured growth:     {fmt(growth_ratios([p.ledger.measured_total for p in points]))}",
          file=sys.stderr)
    print(f"wall-clock ratio dec/exh:       {fmt([p.wallclock_ratio for p in points])}", file=sys.stderr)


if __name__ == "__main__":
    main()
