"""Coverage of bootstrap percentile intervals for lambda_s.

Draws repeated two-arm trials from a population file, forms a percentile
interval in each, and reports how often it contains the population value.

    python scripts/coverage_study.py --outer 200 --n 10000 --b 1000 --seed 0
"""

import argparse
import time
from pathlib import Path

from vaxmed import TrialDesignSpec, bootstrap_ci, load_population, oracle_effects, simulate_trial

DATA = Path(__file__).resolve().parent.parent / "data"


def coverage(pop, outer: int, n: int, b: int, seed: int, field: str = "lambda_s"):
    truth = getattr(oracle_effects(pop), field)
    covered = missing = 0
    widths = []
    for rep in range(outer):
        counts = simulate_trial(pop, TrialDesignSpec({0: n, 1: n}, seed=seed * 100_003 + rep))
        ci = bootstrap_ci(counts, "si2", b=b, seed=seed + rep).ci.get(field)
        if ci is None:
            missing += 1
            continue
        widths.append(ci[1] - ci[0])
        covered += ci[0] <= truth <= ci[1]
    return truth, covered, missing, widths


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--population", type=Path, default=DATA / "example_population.json")
    ap.add_argument("--outer", type=int, default=200)
    ap.add_argument("--n", type=int, default=10_000, help="participants per arm")
    ap.add_argument("--b", type=int, default=1000, help="bootstrap replicates")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    start = time.perf_counter()
    truth, covered, missing, widths = coverage(load_population(args.population), args.outer, args.n, args.b, args.seed)
    elapsed = time.perf_counter() - start
    print(f"population lambda_s   {truth:.4f}")
    print(f"coverage              {covered}/{args.outer} = {covered / args.outer:.3f}")
    print(f"no interval           {missing}")
    if widths:
        print(f"median width          {sorted(widths)[len(widths) // 2]:.4f}")
    print(f"elapsed               {elapsed:.1f}s")


if __name__ == "__main__":
    main()
