"""Vaccine efficacy estimates across exposure rates.

The same population is trialled at several exposure probabilities; the
estimates should agree up to Monte Carlo error because exposure cancels
in the risk ratio.

    python scripts/exposure_invariance.py --exposures 0.01,0.05,0.2 --n 1000000
"""

import argparse
import itertools
import math
from pathlib import Path

from vaxmed import TrialDesignSpec, load_population, oracle_effects, simulate_trial

DATA = Path(__file__).resolve().parent.parent / "data"


def ve_with_se(counts):
    p1, p0 = counts.mean(arm=1), counts.mean(arm=0)
    theta = p1 / p0
    se_log = math.sqrt((1 - p1) / (counts.arm_size(1) * p1) + (1 - p0) / (counts.arm_size(0) * p0))
    return 1 - theta, theta * se_log


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--population", type=Path, default=DATA / "example_population.json")
    ap.add_argument("--exposures", default="0.01,0.05,0.2")
    ap.add_argument("--n", type=int, default=1_000_000, help="participants per arm")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    pop = load_population(args.population)
    print(f"population VE {oracle_effects(pop).ve:.4f}")
    results = {}
    for k, exposure in enumerate(float(e) for e in args.exposures.split(",")):
        counts = simulate_trial(pop, TrialDesignSpec({0: args.n, 1: args.n}, exposure=exposure, seed=args.seed + k))
        results[exposure] = ve_with_se(counts)
        ve, se = results[exposure]
        print(f"exposure {exposure:<6g} VE {ve:.4f}  SE {se:.4f}")
    for a, b in itertools.combinations(results, 2):
        z = abs(results[a][0] - results[b][0]) / math.hypot(results[a][1], results[b][1])
        print(f"{a:g} vs {b:g}: z = {z:.2f}")


if __name__ == "__main__":
    main()
