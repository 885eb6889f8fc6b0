"""
Binary classification with aggregated k-NN estimates.

The class-1 probability f(x) is estimated by aggregating k-NN means over
a geometric ladder of neighbour counts; a point is assigned to class 1
when the estimate is at least 1/2. Plain k-NN and kernel classifiers, the
Bayes rule for known Gaussian mixtures, the two synthetic mixture
generators and the error / cross-validation harnesses live here too.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Literal, Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray

from ssa.aggregate import AggKernel, CriticalValues, SSATrace, aggregate_path, ssa_estimate
from ssa.calibrate import CalibrationConfig, calibrate
from ssa.expfam import ExpFamModel, weighted_mle
from ssa.localize import (LadderConfig, LadderError, LocKernel, as_design, build_ladder,
                          kernel_of_norm, knn_ladder, pairwise_distances,
                          weights_bandwidth)
from ssa.seeding import derive_seed

# Bayes error of the two-dimensional mixture problem with equal priors:
# 10^6 test points (500000 per class) from simulate_example41 with seed
# 20070101, see scripts/bayes_error_oracle.py.
EXAMPLE41_BAYES_ERROR = 0.248209
EXAMPLE41_BAYES_SEED = 20070101


@dataclass(frozen=True)
class LabeledSample:
    X: NDArray[np.float64]
    y: NDArray[np.int64]

    def __post_init__(self) -> None:
        X = as_design(self.X)
        y = np.asarray(self.y)
        if y.shape != (X.shape[0],):
            raise ValueError("labels and design differ in length")
        if not np.all((y == 0) | (y == 1)):
            raise ValueError("labels must be 0 or 1")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y.astype(np.int64))

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    def without(self, i: int) -> "LabeledSample":
        keep = np.arange(self.n) != i
        return LabeledSample(self.X[keep], self.y[keep])


# ---------------------------------------------------------------------------
# Gaussian mixtures
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MixtureComponent:
    weight: float
    mean: tuple[float, ...]
    var: float  # covariance is var * identity


@dataclass(frozen=True)
class MixtureSpec:
    class0: tuple[MixtureComponent, ...]
    class1: tuple[MixtureComponent, ...]
    priors: tuple[float, float] = (0.5, 0.5)

    def __post_init__(self) -> None:
        for comps in (self.class0, self.class1):
            if not math.isclose(sum(c.weight for c in comps), 1.0, abs_tol=1e-12):
                raise ValueError("component weights must sum to one per class")
            if any(c.var <= 0 for c in comps):
                raise ValueError("component variances must be positive")
        if not math.isclose(sum(self.priors), 1.0, abs_tol=1e-12) or min(self.priors) < 0:
            raise ValueError("priors must be a probability vector")

    @property
    def d(self) -> int:
        return len(self.class0[0].mean)

    def swapped(self) -> "MixtureSpec":
        return MixtureSpec(self.class1, self.class0, (self.priors[1], self.priors[0]))


EXAMPLE41 = MixtureSpec(
    class0=(MixtureComponent(0.2, (-1.0, 0.0), 0.5), MixtureComponent(0.8, (1.0, 0.0), 0.5)),
    class1=(MixtureComponent(0.5, (0.0, 1.0), 0.5), MixtureComponent(0.5, (0.0, -1.0), 0.5)),
)


def mixture_density(components: Sequence[MixtureComponent], X: ArrayLike) -> NDArray[np.float64]:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    out = np.zeros(X.shape[0])
    for c in components:
        mu = np.asarray(c.mean)
        d = mu.size
        sq = np.sum((X[:, :d] - mu) ** 2, axis=1)
        out += c.weight * np.exp(-sq / (2 * c.var)) / (2 * math.pi * c.var) ** (d / 2)
    return out


def bayes_posterior(X: ArrayLike, spec: MixtureSpec = EXAMPLE41) -> NDArray[np.float64]:
    """Class-1 posterior pi_1 p_1 / (pi_0 p_0 + pi_1 p_1); extra coordinates are ignored."""
    p0 = spec.priors[0] * mixture_density(spec.class0, X)
    p1 = spec.priors[1] * mixture_density(spec.class1, X)
    total = p0 + p1
    with np.errstate(invalid="ignore", divide="ignore"):
        post = np.where(total > 0, p1 / total, spec.priors[1])
    return post


def bayes_rule(x: ArrayLike, spec: MixtureSpec = EXAMPLE41) -> tuple[int, float]:
    post = float(bayes_posterior(np.atleast_2d(x), spec)[0])
    return int(post >= 0.5), post


def _draw_mixture(components: Sequence[MixtureComponent], n: int, rng: np.random.Generator) -> NDArray[np.float64]:
    w = np.array([c.weight for c in components])
    idx = rng.choice(len(components), size=n, p=w)
    means = np.array([c.mean for c in components])[idx]
    sd = np.sqrt(np.array([c.var for c in components]))[idx]
    return means + sd[:, None] * rng.standard_normal((n, means.shape[1]))


def _example_streams(seed: int) -> tuple[np.random.Generator, np.random.Generator]:
    main, nuisance = np.random.SeedSequence(int(seed)).spawn(2)
    return np.random.default_rng(main), np.random.default_rng(nuisance)


def simulate_mixture(spec: MixtureSpec, n_per_class: int, rng: np.random.Generator) -> LabeledSample:
    if n_per_class < 1:
        raise ValueError("n_per_class must be positive")
    X0 = _draw_mixture(spec.class0, n_per_class, rng)
    X1 = _draw_mixture(spec.class1, n_per_class, rng)
    y = np.repeat([0, 1], n_per_class)
    return LabeledSample(np.vstack([X0, X1]), y)


def simulate_example41(n_per_class: int, seed: int) -> LabeledSample:
    """Balanced sample from the two-dimensional normal-mixture problem."""
    main, _ = _example_streams(seed)
    return simulate_mixture(EXAMPLE41, n_per_class, main)


def simulate_example42(n_per_class: int, seed: int) -> LabeledSample:
    """The two-dimensional problem plus eight independent N(0, 1) nuisance coordinates.

    The informative coordinates come from the same stream as
    ``simulate_example41`` with the same seed.
    """
    main, nuisance = _example_streams(seed)
    base = simulate_mixture(EXAMPLE41, n_per_class, main)
    noise = nuisance.standard_normal((base.n, 8))
    return LabeledSample(np.hstack([base.X, noise]), base.y)


SIMULATORS: dict[str, Callable[[int, int], LabeledSample]] = {
    "example41": simulate_example41,
    "example42": simulate_example42,
}


# ---------------------------------------------------------------------------
# Weak estimates
# ---------------------------------------------------------------------------

def _sorted_neighbours(Xq: NDArray, sample: LabeledSample, exclude_self: bool = False):
    D = pairwise_distances(Xq, sample.X)
    if exclude_self:
        np.fill_diagonal(D, np.inf)
    order = np.argsort(D, axis=1, kind="stable")
    Ds = np.take_along_axis(D, order, axis=1)
    csum = np.cumsum(sample.y[order], axis=1)
    return Ds, csum


def knn_path(Xq: ArrayLike, sample: LabeledSample, ks: Sequence[int],
             exclude_self: bool = False) -> tuple[NDArray[np.float64], NDArray[np.int64]]:
    """Unclipped k-NN label means and neighbour counts for every query row and every k.

    Points tied with the k-th nearest distance are all included; the count
    reports how many were averaged. ``exclude_self`` drops query i from the
    neighbours of query i (leave-one-out on the training design).
    """
    Xq = as_design(Xq)
    n_avail = sample.n - 1 if exclude_self else sample.n
    ks = np.asarray(ks, dtype=int)
    if np.any(ks < 1) or np.any(ks > n_avail):
        raise ValueError(f"k must lie in [1, {n_avail}]")
    Ds, csum = _sorted_neighbours(Xq, sample, exclude_self)
    est = np.empty((Xq.shape[0], ks.size))
    counts = np.empty((Xq.shape[0], ks.size), dtype=np.int64)
    for j, k in enumerate(ks):
        radius = Ds[:, k - 1]
        cnt = np.sum(Ds <= radius[:, None], axis=1)
        counts[:, j] = cnt
        est[:, j] = csum[np.arange(Xq.shape[0]), cnt - 1] / cnt
    return est, counts


def knn_estimate(x: ArrayLike, sample: LabeledSample, k: int, model: ExpFamModel | None = None) -> float:
    model = model or ExpFamModel.bernoulli()
    est, _ = knn_path(np.atleast_2d(np.asarray(x, dtype=float)), sample, [k])
    return float(model.clip(est[0, 0]))


def kernel_path(Xq: ArrayLike, sample: LabeledSample, hs: Sequence[float], kernel: LocKernel = "epanechnikov",
                exclude_self: bool = False) -> NDArray[np.float64]:
    """Nadaraya-Watson label averages, NaN where a window holds no weight."""
    Xq = as_design(Xq)
    D = pairwise_distances(Xq, sample.X)
    if exclude_self:
        np.fill_diagonal(D, np.inf)
    y = sample.y.astype(float)
    out = np.empty((Xq.shape[0], len(hs)))
    for j, h in enumerate(hs):
        W = kernel_of_norm(kernel, D / h)
        tot = W.sum(axis=1)
        with np.errstate(invalid="ignore", divide="ignore"):
            out[:, j] = np.where(tot > 0, (W @ y) / tot, np.nan)
    return out


def kernel_estimate(x: ArrayLike, sample: LabeledSample, h: float, kernel: LocKernel = "epanechnikov",
                    model: ExpFamModel | None = None) -> float:
    """Kernel-weighted label mean; raises EmptySupportError when no point is in range."""
    model = model or ExpFamModel.bernoulli()
    w = weights_bandwidth(x, sample.X, h, kernel)
    theta, _ = weighted_mle(model, w, sample.y)
    return theta


# ---------------------------------------------------------------------------
# Aggregated classifier
# ---------------------------------------------------------------------------

def ssa_classifier(x: ArrayLike, sample: LabeledSample, ladder_config: LadderConfig, kernel: AggKernel,
                   cv: CriticalValues, model: ExpFamModel | None = None) -> tuple[int, float, SSATrace]:
    model = model or ExpFamModel.bernoulli()
    ladder = build_ladder(x, sample.X, ladder_config)
    theta_hat, trace = ssa_estimate(model, ladder, sample.y, kernel, cv)
    return int(theta_hat >= 0.5), theta_hat, trace


def ssa_predict(Xq: ArrayLike, sample: LabeledSample, ladder_config: LadderConfig, kernel: AggKernel,
                cv: CriticalValues, model: ExpFamModel | None = None, exclude_self: bool = False) -> NDArray[np.float64]:
    """Aggregated estimates at many query points.

    The uniform k-NN ladder is evaluated in one batch from sorted
    neighbour lists; any other ladder falls back to per-point construction.
    """
    model = model or ExpFamModel.bernoulli()
    Xq = as_design(Xq)
    if ladder_config.mode == "knn" and ladder_config.kernel == "uniform":
        n_avail = sample.n - 1 if exclude_self else sample.n
        counts_target = knn_ladder(ladder_config.N1, ladder_config.NK, ladder_config.K, n_avail)
        est, counts = knn_path(Xq, sample, counts_target, exclude_self)
        if np.any(np.diff(counts, axis=1) <= 0):
            raise LadderError("distance ties make N_k stall; the k-NN ladder is not strictly increasing")
        if cv.K != len(counts_target):
            raise ValueError("critical values do not match the ladder")
        agg, _, _ = aggregate_path(model, model.clip(est), counts.astype(float), cv.z, kernel)
        return agg[:, -1]
    out = np.empty(Xq.shape[0])
    for i, x in enumerate(Xq):
        train = sample.without(i) if exclude_self else sample
        out[i] = ssa_classifier(x, train, ladder_config, kernel, cv, model)[1]
    return out


def labels_from_theta(theta: ArrayLike) -> NDArray[np.int64]:
    return (np.asarray(theta) >= 0.5).astype(np.int64)


# ---------------------------------------------------------------------------
# Error harnesses
# ---------------------------------------------------------------------------

Predictor = Callable[[NDArray[np.float64]], NDArray[np.int64]]


@dataclass
class ErrorReport:
    error_rate: float
    n_test: int
    per_point_flags: NDArray[np.bool_] | None = None
    comparison: dict[str, float] = field(default_factory=dict)


def misclassification_error(predict: Predictor, test: LabeledSample) -> ErrorReport:
    pred = np.asarray(predict(test.X)).astype(np.int64)
    wrong = pred != test.y
    return ErrorReport(error_rate=float(wrong.mean()), n_test=test.n, per_point_flags=wrong)


def loo_cv(classifier_factory: Callable[[LabeledSample], Predictor], sample: LabeledSample) -> ErrorReport:
    """Leave-one-out error: train on all but point i, predict point i."""
    if sample.n < 2:
        raise ValueError("leave-one-out needs at least two points")
    wrong = np.zeros(sample.n, dtype=bool)
    for i in range(sample.n):
        predict = classifier_factory(sample.without(i))
        wrong[i] = int(np.asarray(predict(sample.X[i:i + 1]))[0]) != sample.y[i]
    return ErrorReport(error_rate=float(wrong.mean()), n_test=sample.n, per_point_flags=wrong)


def _nearest_label(Xq: NDArray, sample: LabeledSample, exclude_self: bool = False) -> NDArray[np.int64]:
    est, _ = knn_path(Xq, sample, [1], exclude_self)
    return labels_from_theta(est[:, 0])


def knn_classifier(k: int) -> Callable[[LabeledSample], Predictor]:
    def factory(train: LabeledSample) -> Predictor:
        return lambda X: labels_from_theta(knn_path(X, train, [k])[0][:, 0])
    return factory


def kernel_classifier(h: float, kernel: LocKernel = "epanechnikov") -> Callable[[LabeledSample], Predictor]:
    """Kernel rule; an empty window falls back to the nearest neighbour's label."""
    def factory(train: LabeledSample) -> Predictor:
        def predict(X):
            theta = kernel_path(X, train, [h], kernel)[:, 0]
            out = labels_from_theta(np.nan_to_num(theta))
            empty = np.isnan(theta)
            if np.any(empty):
                out[empty] = _nearest_label(np.asarray(X)[empty], train)
            return out
        return predict
    return factory


def ssa_classifier_factory(ladder_config: LadderConfig, kernel: AggKernel, cv: CriticalValues,
                           model: ExpFamModel | None = None) -> Callable[[LabeledSample], Predictor]:
    def factory(train: LabeledSample) -> Predictor:
        return lambda X: labels_from_theta(ssa_predict(X, train, ladder_config, kernel, cv, model))
    return factory


@dataclass(frozen=True)
class ResultRow:
    method: str
    param: str
    mean_error: float
    stderr: float
    runs: int


def _kernel_labels(theta: NDArray, nearest: NDArray) -> NDArray[np.int64]:
    out = labels_from_theta(np.nan_to_num(theta))
    empty = np.isnan(theta)
    out[empty] = np.broadcast_to(nearest[:, None], theta.shape)[empty]
    return out


def fmt_param(v: float) -> str:
    return f"{v:.6g}"


def loo_cv_table(sample: LabeledSample, knn_grid: Sequence[int], bandwidths: Sequence[float],
                 ladder_config: LadderConfig | None, kernel: AggKernel | None, cv: CriticalValues | None,
                 loc_kernel: LocKernel = "epanechnikov") -> list[ResultRow]:
    """Leave-one-out errors for every k, every bandwidth and (optionally) the aggregated rule.

    Equivalent to ``loo_cv`` with the matching factories but computed from
    one distance matrix with the diagonal masked.
    """
    n = sample.n
    rows = []

    def row(method: str, param: str, wrong: NDArray) -> ResultRow:
        p = float(wrong.mean())
        return ResultRow(method, param, p, math.sqrt(p * (1 - p) / n), n)

    if len(knn_grid):
        est, _ = knn_path(sample.X, sample, knn_grid, exclude_self=True)
        for j, k in enumerate(knn_grid):
            rows.append(row("knn", str(k), labels_from_theta(est[:, j]) != sample.y))
    if len(bandwidths):
        theta = kernel_path(sample.X, sample, bandwidths, loc_kernel, exclude_self=True)
        lab = _kernel_labels(theta, _nearest_label(sample.X, sample, exclude_self=True))
        for j, h in enumerate(bandwidths):
            rows.append(row("kernel", fmt_param(h), lab[:, j] != sample.y))
    if cv is not None and ladder_config is not None and kernel is not None:
        theta = ssa_predict(sample.X, sample, ladder_config, kernel, cv, exclude_self=True)
        rows.append(row("ssa", "", labels_from_theta(theta) != sample.y))
    return rows


# ---------------------------------------------------------------------------
# Simulation benchmark
# ---------------------------------------------------------------------------

@dataclass
class BenchmarkSettings:
    ladder: LadderConfig = field(default_factory=LadderConfig)
    agg: AggKernel = field(default_factory=AggKernel)
    knn_grid: list[int] | None = None  # None: the ladder's neighbour counts
    bandwidths: list[float] = field(default_factory=list)
    loc_kernel: LocKernel = "epanechnikov"
    alpha: float = 0.5
    r: float = 0.5
    replicates: int = 5000
    seed: int = 0


def clamp_ladder(config: LadderConfig, n: int) -> LadderConfig:
    """Cap the largest neighbour count at the sample size."""
    if config.mode == "knn" and config.NK > n:
        return replace(config, NK=n)
    return config


def representative_point(X: NDArray[np.float64]) -> NDArray[np.float64]:
    return np.median(X, axis=0)


def calibrate_for_design(X: NDArray[np.float64], ladder_config: LadderConfig, agg: AggKernel, *,
                         alpha: float, r: float, replicates: int, seed: int,
                         model: ExpFamModel | None = None) -> CriticalValues:
    """Universal critical values from one design at its coordinate-wise median."""
    model = model or ExpFamModel.bernoulli()
    ladder = build_ladder(representative_point(X), X, ladder_config)
    cfg = CalibrationConfig(model=model, ladder=ladder, r=r, alpha=alpha, replicates=replicates,
                            seed=seed, kernel=agg)
    return calibrate(cfg)


def benchmark_example(example: Literal["example41", "example42"], runs: int, n_train_per_class: int,
                      n_test_per_class: int, settings: BenchmarkSettings,
                      cv: CriticalValues | None = None) -> tuple[list[ResultRow], CriticalValues]:
    """Mean test errors over independent runs for the aggregated rule, every weak rule and Bayes."""
    simulate = SIMULATORS[example]
    seed = settings.seed
    ladder_config = clamp_ladder(settings.ladder, 2 * n_train_per_class)
    if cv is None:
        design = simulate(n_train_per_class, derive_seed(seed, "calibration-design")).X
        cv = calibrate_for_design(design, ladder_config, settings.agg, alpha=settings.alpha, r=settings.r,
                                  replicates=settings.replicates, seed=derive_seed(seed, "calibration"))
    ks = list(settings.knn_grid) if settings.knn_grid is not None else knn_ladder(
        ladder_config.N1, ladder_config.NK, ladder_config.K, 2 * n_train_per_class)
    hs = list(settings.bandwidths)
    errs: dict[tuple[str, str], list[float]] = {}

    def add(method: str, param: str, wrong: NDArray) -> None:
        errs.setdefault((method, param), []).append(float(wrong.mean()))

    for i in range(runs):
        train = simulate(n_train_per_class, derive_seed(seed, "benchmark-run", i, "train"))
        test = simulate(n_test_per_class, derive_seed(seed, "benchmark-run", i, "test"))
        theta = ssa_predict(test.X, train, ladder_config, settings.agg, cv)
        add("ssa", "", labels_from_theta(theta) != test.y)
        est, _ = knn_path(test.X, train, ks)
        for j, k in enumerate(ks):
            add("knn", str(k), labels_from_theta(est[:, j]) != test.y)
        if hs:
            lab = _kernel_labels(kernel_path(test.X, train, hs, settings.loc_kernel), _nearest_label(test.X, train))
            for j, h in enumerate(hs):
                add("kernel", fmt_param(h), lab[:, j] != test.y)
        add("bayes", "", labels_from_theta(bayes_posterior(test.X)) != test.y)

    rows = []
    for (method, param), e in errs.items():
        arr = np.asarray(e)
        se = float(arr.std(ddof=1) / math.sqrt(arr.size)) if arr.size > 1 else 0.0
        rows.append(ResultRow(method, param, float(arr.mean()), se, arr.size))
    return rows, cv


def weak_rows(rows: Sequence[ResultRow]) -> list[ResultRow]:
    return [r for r in rows if r.method in ("knn", "kernel")]


def row_of(rows: Sequence[ResultRow], method: str) -> ResultRow:
    return next(r for r in rows if r.method == method)
