"""How the size of the critical values trades propagation against test error.

Calibrates critical values for the planar mixture example, then rescales
them by a grid of factors and reports, for each, the largest simulated
propagation risk under the homogeneous null and the mean test error of
the aggregated classifier. The printed values z_k = 0.0031 + 0.007 (K - k)
from the original study are evaluated the same way, both as given and
multiplied by N_k (in case they refer to divergences without the sample
size factor).
"""

import argparse

import numpy as np

from ssa.aggregate import AggKernel, CriticalValues
from ssa.calibrate import CalibrationConfig, propagation_risk
from ssa.classify import (BenchmarkSettings, benchmark_example, calibrate_for_design, representative_point,
                          row_of, simulate_example41, weak_rows)
from ssa.expfam import ExpFamModel
from ssa.localize import LadderConfig, build_ladder
from ssa.seeding import derive_seed


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--runs", type=int, default=50)
    parser.add_argument("--alpha", type=float, default=0.5)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--scales", type=float, nargs="+", default=[0.05, 0.1, 0.2, 0.5, 1.0, 2.0])
    args = parser.parse_args()

    ladder_config = LadderConfig(K=30, N1=5, NK=200)
    agg = AggKernel()
    design = simulate_example41(100, derive_seed(args.seed, "calibration-design")).X
    ladder = build_ladder(representative_point(design), design, ladder_config)
    cfg = CalibrationConfig(model=ExpFamModel.bernoulli(), ladder=ladder, alpha=args.alpha, replicates=5000,
                            seed=derive_seed(args.seed, "diagnostic"))
    cv = calibrate_for_design(design, ladder_config, agg, alpha=args.alpha, r=0.5, replicates=5000,
                              seed=derive_seed(args.seed, "calibration"))
    printed = CriticalValues.affine(0.0031, 0.007, 30)
    candidates = [(f"calibrated x {s:g}", CriticalValues(cv.z * s, cv.base * s, cv.slope * s)) for s in args.scales]
    candidates += [("printed", printed), ("printed x N_k", CriticalValues(printed.z * ladder.N, 0.0, 0.0))]

    settings = BenchmarkSettings(ladder=ladder_config, agg=agg, alpha=args.alpha, seed=args.seed)
    print(f"target alpha tau_r = {cfg.target:.4f}; calibrated z_k = {cv.base:.4g} + {cv.slope:.4g} (K - k)")
    print(f"{'critical values':<22} {'max risk':>9} {'ssa error':>10} {'best weak':>10}")
    for name, c in candidates:
        risk = float(np.max(propagation_risk(cfg, c)))
        rows, _ = benchmark_example("example41", args.runs, 100, 100, settings, c)
        best = min(r.mean_error for r in weak_rows(rows))
        print(f"{name:<22} {risk:>9.3f} {row_of(rows, 'ssa').mean_error:>10.4f} {best:>10.4f}")


if __name__ == "__main__":
    main()
