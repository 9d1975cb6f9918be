"""Mean weighted tardiness of both architectures across a ladder of lag bounds.

Prints one CSV line per lag setting: low, high, direct T_w, layer T_w, ratio.
Uses fewer replications than the full sweep by default.
"""

import argparse
import statistics

from execlayer.harness import ScenarioSpec, iter_results
from execlayer.metrics import weighted_tardiness

LADDER = [(0.0, 0.0), (0.0, 0.3), (0.05, 0.8), (0.1, 1.5), (0.3, 2.2), (0.5, 3.0), (1.0, 4.0)]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--reps", type=int, default=20)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--policy", default="edd", choices=("edd", "spt"))
    ap.add_argument("--workers", type=int, default=1)
    args = ap.parse_args()

    print("lag_low,lag_high,direct_T_w,layer_T_w,ratio")
    for bounds in LADDER:
        grid = [ScenarioSpec.make(bounds, arch, args.policy, args.reps, args.seed) for arch in ("direct", "layer")]
        tw = {"direct": [], "layer": []}
        for result, _ in iter_results(grid, args.workers):
            tw[result.architecture.value].append(weighted_tardiness(result))
        d, l = statistics.fmean(tw["direct"]), statistics.fmean(tw["layer"])
        print(f"{bounds[0]},{bounds[1]},{d:.4f},{l:.4f},{l / d:.4f}")


if __name__ == "__main__":
    main()
