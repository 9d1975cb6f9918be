"""Outcome-type composition of disturbed dispatches under the layer, per lag preset."""

import argparse
from collections import Counter

from execlayer.domain import DISTURBED_OUTCOMES
from execlayer.harness import LAG_ORDER, ScenarioSpec, iter_results
from execlayer.metrics import composition_by_type


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--reps", type=int, default=50)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    print("lag," + ",".join(o.value for o in DISTURBED_OUTCOMES) + ",total")
    for lag in LAG_ORDER:
        grid = [ScenarioSpec.make(lag, "layer", p, args.reps, args.seed) for p in ("edd", "spt")]
        totals = Counter()
        for result, _ in iter_results(grid):
            totals.update(composition_by_type(result))
        counts = [totals[o] for o in DISTURBED_OUTCOMES]
        print(f"{lag}," + ",".join(map(str, counts)) + f",{sum(counts)}")


if __name__ == "__main__":
    main()
