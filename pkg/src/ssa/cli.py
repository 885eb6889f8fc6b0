"""
Command-line entry point: ``ssa <command> --config run.json [--set block.key=value ...]``.

Commands
--------
calibrate  Monte-Carlo critical values, written as JSON.
estimate   Aggregated estimates at query points of a regression data set.
classify   Aggregated k-NN classification of a test set.
simulate   Draw a synthetic two-class sample (example41 or example42).
cv         Leave-one-out errors of k-NN, kernel and aggregated rules.
benchmark  Repeated train/test study on a synthetic example.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 calibration failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from numpy.typing import NDArray

from ssa.aggregate import CriticalValues, ssa_estimate
from ssa.calibrate import CalibrationConfig, CalibrationError, calibrate, cv_from_json, cv_to_json
from ssa.classify import (
    SIMULATORS,
    BenchmarkSettings,
    LabeledSample,
    ResultRow,
    benchmark_example,
    clamp_ladder,
    labels_from_theta,
    loo_cv_table,
    representative_point,
    ssa_predict,
)
from ssa.config import ConfigError, RunConfig, load_config, parse_override
from ssa.dataio import (
    DataError,
    coordinate_header,
    csv_text,
    read_labeled_csv,
    read_numeric_csv,
    write_text_atomic,
)
from ssa.expfam import DomainError, EmptySupportError, ExpFamModel, tau_r
from ssa.localize import LadderConfig, LadderError, bandwidth_ladder, build_ladder, knn_ladder, rescale_unit_cube
from ssa.seeding import derive_seed, substream
from ssa.svg import line_svg, scatter_svg

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_CALIBRATION = 0, 2, 3, 4
RESULT_HEADER = ("method", "param", "mean_error", "stderr", "runs")
CV_FILENAME = "critical_values.json"


# ---------------------------------------------------------------------------
# Shared helpers
# ---------------------------------------------------------------------------

def _out(cfg: RunConfig, name: str) -> Path:
    return Path(cfg.io.output_dir) / name


def _write(cfg: RunConfig, name: str, text: str) -> Path:
    path = write_text_atomic(_out(cfg, name), text)
    print(f"wrote {path}")
    return path


def _require_input(cfg: RunConfig) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    if cfg.io.input is None:
        raise ConfigError("io.input is required for this command")
    return read_labeled_csv(cfg.io.input)


def _rescaler(cfg: RunConfig, X: NDArray[np.float64]) -> Callable[[NDArray[np.float64]], NDArray[np.float64]]:
    if not cfg.io.rescale:
        return lambda A: np.asarray(A, dtype=float)
    _, shift, scale = rescale_unit_cube(X)
    return lambda A: (np.asarray(A, dtype=float) - shift) / scale


def _ladder(cfg: RunConfig, n: int) -> LadderConfig:
    return clamp_ladder(cfg.ladder_config(), n)


def _labeled(X: NDArray, y: NDArray, where: str) -> LabeledSample:
    if not np.all((y == 0) | (y == 1)):
        raise DataError(f"{where}: labels must be 0 or 1")
    return LabeledSample(X, y.astype(np.int64))


def _calibrate(cfg: RunConfig, X: NDArray[np.float64], model: ExpFamModel, ladder_config: LadderConfig) -> CriticalValues:
    cb = cfg.calibration
    ladder = build_ladder(representative_point(X), X, ladder_config)
    config = CalibrationConfig(model=model, ladder=ladder, theta_star=cb.theta_star, r=cb.r, alpha=cb.alpha,
                               replicates=cb.replicates, seed=derive_seed(cfg.seed, "calibration"),
                               kernel=cfg.agg_kernel(), z_max=cb.z_max, iota_max=cb.iota_max, rtol=cb.rtol)
    return calibrate(config)


def _load_cv(path: Path) -> CriticalValues:
    try:
        return cv_from_json(path.read_text())
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot load critical values from {path}: {exc}") from exc


def _critical_values(cfg: RunConfig, X: NDArray[np.float64], model: ExpFamModel,
                     ladder_config: LadderConfig) -> CriticalValues:
    """Critical values from io.calibration, the output directory, or a fresh calibration on X."""
    if cfg.io.calibration is not None:
        cv = _load_cv(Path(cfg.io.calibration))
    elif _out(cfg, CV_FILENAME).exists():
        cv = _load_cv(_out(cfg, CV_FILENAME))
    else:
        cv = _calibrate(cfg, X, model, ladder_config)
        _write(cfg, CV_FILENAME, cv_to_json(cv))
    if cv.K != ladder_config.K:
        raise ConfigError(f"critical values have K={cv.K} but the ladder has K={ladder_config.K}")
    family = cv.meta.get("family")
    if family is not None and family != model.family:
        raise ConfigError(f"critical values were calibrated for {family!r}, not {model.family!r}")
    counts = cv.meta.get("N_k")
    if ladder_config.mode == "knn" and ladder_config.kernel == "uniform" and counts is not None:
        expected = knn_ladder(ladder_config.N1, ladder_config.NK, ladder_config.K, ladder_config.NK)
        # ties at the radius can only add points, so calibrated counts never fall short
        if len(counts) != len(expected) or any(c < e for c, e in zip(counts, expected)) \
                or counts[-1] > 2 * expected[-1]:
            raise ConfigError(f"critical values were calibrated for neighbour counts {counts}, "
                              f"but the ladder uses {expected}")
    return cv


def _result_csv(rows: Sequence[ResultRow]) -> str:
    return csv_text(RESULT_HEADER, ((r.method, r.param, r.mean_error, r.stderr, r.runs) for r in rows))


def _weak_grids(cfg: RunConfig, ladder_config: LadderConfig, n: int, d: int) -> tuple[list[int], list[float]]:
    wb = cfg.weak
    if wb.knn is not None:
        ks = [k for k in wb.knn if k <= n]
    elif ladder_config.mode == "knn":
        ks = knn_ladder(ladder_config.N1, min(ladder_config.NK, n), ladder_config.K, n)
    else:
        ks = []
    a = wb.kernel_a if wb.kernel_a is not None else 1.25 ** (1.0 / d)
    hs = bandwidth_ladder(wb.kernel_h1, a, wb.kernel_K) if wb.kernel_K > 0 else []
    return ks, hs


def _error_plots(cfg: RunConfig, rows: Sequence[ResultRow], prefix: str, title: str) -> None:
    refs = {r.method: r.mean_error for r in rows if r.method in ("ssa", "bayes")}
    for method, xlabel in (("knn", "number of neighbours k"), ("kernel", "bandwidth h")):
        sel = [r for r in rows if r.method == method]
        if not sel:
            continue
        xs = [float(r.param) for r in sel]
        ys = [r.mean_error for r in sel]
        svg = line_svg({method: (xs, ys)}, title=title, xlabel=xlabel, ylabel="misclassification error",
                       hlines=refs)
        _write(cfg, f"{prefix}_{method}.svg", svg)


def _region_grid(predict: Callable[[NDArray], NDArray], X: NDArray, size: int = 40):
    lo, hi = X[:, :2].min(axis=0), X[:, :2].max(axis=0)
    gx, gy = np.linspace(lo[0], hi[0], size), np.linspace(lo[1], hi[1], size)
    mx, my = np.meshgrid(gx, gy)
    labels = predict(np.column_stack([mx.ravel(), my.ravel()])).reshape(size, size)
    return gx, gy, labels


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_calibrate(cfg: RunConfig) -> int:
    cb = cfg.calibration
    if cfg.io.input is not None:
        X, y = read_labeled_csv(cfg.io.input)
        model = cfg.build_model(y)
        X = _rescaler(cfg, X)(X)
    else:
        rng = substream(cfg.seed, "calibration-design")
        X = rng.uniform(-1.0, 1.0, size=(cb.design_n, cb.design_d))
        model = cfg.build_model()
    cv = _calibrate(cfg, X, model, _ladder(cfg, X.shape[0]))
    target = Path(cfg.io.calibration) if cfg.io.calibration else _out(cfg, CV_FILENAME)
    path = write_text_atomic(target, cv_to_json(cv))
    print(f"wrote {path}")
    print(f"z_K={cv.base:.6g} iota={cv.slope:.6g} max validation risk="
          f"{max(cv.meta['validation_risk']):.4f} target={cb.alpha * tau_r(cb.r):.4f}")
    return EXIT_OK


def cmd_estimate(cfg: RunConfig) -> int:
    X, y = _require_input(cfg)
    model = cfg.build_model(y)
    model.check_response(y)
    scale = _rescaler(cfg, X)
    Xs = scale(X)
    Xq = read_numeric_csv(cfg.estimate.query)[1][:, :X.shape[1]] if cfg.estimate.query else X
    if Xq.shape[1] != X.shape[1]:
        raise DataError("query points and data have different dimensions")
    ladder_config = _ladder(cfg, X.shape[0])
    cv = _critical_values(cfg, Xs, model, ladder_config)
    agg = cfg.agg_kernel()
    rows, traces = [], []
    for x, xs in zip(Xq, scale(Xq)):
        ladder = build_ladder(xs, Xs, ladder_config)
        theta, trace = ssa_estimate(model, ladder, y, agg, cv)
        digest = trace.gamma_profile_hash()
        rows.append([*map(float, x), theta, digest])
        if cfg.estimate.trace_dump:
            traces.append({"x": [float(v) for v in x], "N_k": trace.N.tolist(),
                           "theta_weak": trace.theta_weak.tolist(), "theta_agg": trace.theta_agg.tolist(),
                           "m": trace.m.tolist(), "gamma": trace.gamma.tolist(), "hash": digest})
    header = [*coordinate_header(X.shape[1]), "theta_hat", "selected_gamma_profile_hash"]
    _write(cfg, "estimates.csv", csv_text(header, rows))
    if cfg.estimate.trace_dump:
        _write(cfg, "traces.json", json.dumps(traces, indent=1) + "\n")
    return EXIT_OK


def cmd_classify(cfg: RunConfig) -> int:
    X, y = _require_input(cfg)
    train_raw = _labeled(X, y, cfg.io.input)
    if cfg.classify.test is None:
        raise ConfigError("classify.test is required")
    _, test = read_numeric_csv(cfg.classify.test)
    d = X.shape[1]
    if test.shape[1] not in (d, d + 1):
        raise DataError(f"{cfg.classify.test}: expected {d} or {d + 1} columns, found {test.shape[1]}")
    Xt, yt = test[:, :d], (test[:, d] if test.shape[1] == d + 1 else None)
    model = cfg.build_model(y)
    scale = _rescaler(cfg, X)
    train = LabeledSample(scale(X), train_raw.y)
    ladder_config = _ladder(cfg, train.n)
    cv = _critical_values(cfg, train.X, model, ladder_config)
    agg = cfg.agg_kernel()
    theta = ssa_predict(scale(Xt), train, ladder_config, agg, cv, model)
    labels = labels_from_theta(theta)
    header = [*coordinate_header(d), "theta_hat", "label"]
    _write(cfg, "predictions.csv", csv_text(header, ([*map(float, x), t, int(c)]
                                                      for x, t, c in zip(Xt, theta, labels))))
    if yt is not None:
        print(f"error_rate={np.mean(labels != yt):.6f} n_test={yt.size}")
    if cfg.io.svg and d == 2:
        def predict(P):
            return labels_from_theta(ssa_predict(scale(P), train, ladder_config, agg, cv, model))
        region = _region_grid(predict, X)
        _write(cfg, "classify.svg", scatter_svg(X, train.y, "aggregated classifier", region))
    return EXIT_OK


def cmd_simulate(cfg: RunConfig) -> int:
    sb = cfg.simulate
    sample = SIMULATORS[sb.example](sb.n_per_class, derive_seed(cfg.seed, "simulation"))
    header = [*coordinate_header(sample.d), "y"]
    _write(cfg, "sample.csv", csv_text(header, ([*map(float, x), int(c)] for x, c in zip(sample.X, sample.y))))
    if cfg.io.svg:
        _write(cfg, "sample.svg", scatter_svg(sample.X, sample.y, sb.example))
    return EXIT_OK


def cmd_cv(cfg: RunConfig) -> int:
    X, y = _require_input(cfg)
    model = cfg.build_model(y)
    sample = _labeled(_rescaler(cfg, X)(X), y, cfg.io.input)
    ladder_config = _ladder(cfg, sample.n - 1)
    ks, hs = _weak_grids(cfg, ladder_config, sample.n - 1, sample.d)
    cv = _critical_values(cfg, sample.X, model, ladder_config)
    rows = loo_cv_table(sample, ks, hs, ladder_config, cfg.agg_kernel(), cv, cfg.weak.kernel_shape)
    _write(cfg, "cv_results.csv", _result_csv(rows))
    if cfg.io.svg:
        _error_plots(cfg, rows, "cv", "leave-one-out error")
    return EXIT_OK


def cmd_benchmark(cfg: RunConfig) -> int:
    bb = cfg.benchmark
    n_train = 2 * bb.n_train_per_class
    ladder_config = _ladder(cfg, n_train)
    d = 2 if bb.example == "example41" else 10
    ks, hs = _weak_grids(cfg, ladder_config, n_train, d)
    cb = cfg.calibration
    settings = BenchmarkSettings(ladder=ladder_config, agg=cfg.agg_kernel(), knn_grid=ks, bandwidths=hs,
                                 loc_kernel=cfg.weak.kernel_shape, alpha=cb.alpha, r=cb.r,
                                 replicates=cb.replicates, seed=cfg.seed)
    cv = _load_cv(Path(cfg.io.calibration)) if cfg.io.calibration else None
    rows, cv = benchmark_example(bb.example, bb.runs, bb.n_train_per_class, bb.n_test_per_class, settings, cv)
    _write(cfg, "benchmark.csv", _result_csv(rows))
    if cfg.io.calibration is None:
        _write(cfg, "benchmark_critical_values.json", cv_to_json(cv))
    if cfg.io.svg:
        _error_plots(cfg, rows, "benchmark", f"{bb.example}: mean test error")
    return EXIT_OK


COMMANDS: dict[str, Callable[[RunConfig], int]] = {
    "calibrate": cmd_calibrate,
    "estimate": cmd_estimate,
    "classify": cmd_classify,
    "simulate": cmd_simulate,
    "cv": cmd_cv,
    "benchmark": cmd_benchmark,
}


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------

# convenience flags and the config field each one sets
_FLAG_FIELDS = {
    "seed": "seed",
    "input": "io.input",
    "output_dir": "io.output_dir",
    "calibration": "io.calibration",
    "example": None,  # sets simulate.example and benchmark.example
    "runs": "benchmark.runs",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ssa", description="Spatially stagewise aggregation of local likelihood estimates")
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", help="JSON run configuration")
    parser.add_argument("--set", dest="overrides", action="append", default=[], metavar="BLOCK.KEY=VALUE",
                        help="override a config field; the value is parsed as JSON when possible")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--input", help="data CSV with columns x1..xd,y")
    parser.add_argument("--output-dir")
    parser.add_argument("--calibration", help="critical-values JSON to read or write")
    parser.add_argument("--example", choices=sorted(SIMULATORS))
    parser.add_argument("--runs", type=int)
    parser.add_argument("--svg", action="store_true", help="also write SVG plots")
    parser.add_argument("--print-config", action="store_true", help="print the effective config and exit")
    return parser


def _overrides(args: argparse.Namespace) -> list:
    out = [parse_override(s) for s in args.overrides]
    for flag, dotted in _FLAG_FIELDS.items():
        value = getattr(args, flag)
        if value is None:
            continue
        if flag == "example":
            out += [(["simulate", "example"], value), (["benchmark", "example"], value)]
        else:
            out.append((dotted.split("."), value))
    if args.svg:
        out.append((["io", "svg"], True))
    return out


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, _overrides(args))
        if args.print_config:
            sys.stdout.write(cfg.to_json())
            return EXIT_OK
        write_text_atomic(_out(cfg, f"config.{args.command}.json"), cfg.to_json())
        return COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, DomainError, EmptySupportError, LadderError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except CalibrationError as exc:
        print(f"calibration failed: {exc}", file=sys.stderr)
        return EXIT_CALIBRATION


if __name__ == "__main__":
    sys.exit(main())
