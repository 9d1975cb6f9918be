"""Full default sweep and a pooled direct-vs-layer comparison table.

    python3 scripts/reproduce_table.py --out-dir out/table --workers 1
"""

import argparse
from pathlib import Path

from execlayer.harness import LAG_ORDER, default_grid, run_sweep

ROWS = [
    ("invalid", "Invalid dispatches"),
    ("visible", "Visible divergence"),
    ("T_w", "Mean weighted tardiness"),
    ("throughput", "Throughput"),
    ("coverage", "Attribution coverage"),
]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out-dir", type=Path, default=Path("out/table"))
    ap.add_argument("--reps", type=int, default=50)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--workers", type=int, default=1)
    args = ap.parse_args()

    out = run_sweep(default_grid(args.reps, args.seed), args.out_dir, workers=args.workers,
                    emit_divergence_log=True)
    pooled = {(r["lag"], r["metric"]): r for r in out.summary if r["policy"] == "pooled"}
    for lag in LAG_ORDER:
        n = pooled[(lag, "invalid")]["direct_n"]
        print(f"\n{lag} lag (n = {n} per architecture)")
        print(f"  {'metric':<26}{'direct':>22}{'layer':>22}")
        for key, label in ROWS:
            row = pooled[(lag, key)]
            cells = [f"{row[f'{a}_mean']:.4f} ± {row[f'{a}_hw95']:.4f}" for a in ("direct", "layer")]
            print(f"  {label:<26}{cells[0]:>22}{cells[1]:>22}")
    print(f"\nper-run rows, summary and divergence logs in {args.out_dir}")


if __name__ == "__main__":
    main()
