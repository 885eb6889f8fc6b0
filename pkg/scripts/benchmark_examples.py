"""Repeated train/test study on the synthetic mixture examples.

Defaults follow the desk-scale settings: 100 training and 100 test points
per class, alpha = 0.5, a 30-level k-NN ladder (5 -> 300 for the planar
example, 5 -> 100 with eight nuisance coordinates). Prints the aggregated
rule, the best weak rules and the Bayes rule, then optionally writes the
full table as CSV.
"""

import argparse
from pathlib import Path

from ssa.classify import BenchmarkSettings, benchmark_example, row_of, weak_rows
from ssa.dataio import csv_text, write_text_atomic
from ssa.localize import LadderConfig

DEFAULT_NK = {"example41": 300, "example42": 100}


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--example", choices=sorted(DEFAULT_NK), default="example41")
    parser.add_argument("--runs", type=int, default=50)
    parser.add_argument("--n-per-class", type=int, default=100)
    parser.add_argument("--K", type=int, default=30)
    parser.add_argument("--NK", type=int)
    parser.add_argument("--alpha", type=float, default=0.5)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--csv", type=Path, help="write every row here")
    args = parser.parse_args()

    ladder = LadderConfig(K=args.K, N1=5, NK=args.NK or DEFAULT_NK[args.example])
    settings = BenchmarkSettings(ladder=ladder, alpha=args.alpha, seed=args.seed)
    rows, cv = benchmark_example(args.example, args.runs, args.n_per_class, args.n_per_class, settings)

    print(f"{args.example}: {args.runs} runs, z_k = {cv.base:.4g} + {cv.slope:.4g} (K - k)")
    ssa, bayes = row_of(rows, "ssa"), row_of(rows, "bayes")
    print(f"  ssa     {ssa.mean_error:.4f} +- {ssa.stderr:.4f}")
    for r in sorted(weak_rows(rows), key=lambda r: r.mean_error)[:5]:
        print(f"  {r.method:<7} {r.mean_error:.4f} +- {r.stderr:.4f}  ({r.param})")
    print(f"  bayes   {bayes.mean_error:.4f} +- {bayes.stderr:.4f}")
    if args.csv:
        text = csv_text(("method", "param", "mean_error", "stderr", "runs"),
                        ((r.method, r.param, r.mean_error, r.stderr, r.runs) for r in rows))
        write_text_atomic(args.csv, text)


if __name__ == "__main__":
    main()
