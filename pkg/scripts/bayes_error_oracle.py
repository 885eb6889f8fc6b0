"""Monte-Carlo Bayes error of the two-dimensional mixture problem.

Draws ``--n-per-class`` test points per class and reports the error of the
Bayes rule. The stored reference in ``ssa.classify`` was produced with the
defaults below.
"""

import argparse

import numpy as np

from ssa.classify import EXAMPLE41_BAYES_SEED, bayes_posterior, simulate_example41


def bayes_error(n_per_class: int, seed: int) -> float:
    sample = simulate_example41(n_per_class, seed)
    pred = (bayes_posterior(sample.X) >= 0.5).astype(int)
    return float(np.mean(pred != sample.y))


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--n-per-class", type=int, default=500_000)
    parser.add_argument("--seed", type=int, default=EXAMPLE41_BAYES_SEED)
    args = parser.parse_args()
    err = bayes_error(args.n_per_class, args.seed)
    print(f"bayes_error={err:.6f} n={2 * args.n_per_class} seed={args.seed}")


if __name__ == "__main__":
    main()
