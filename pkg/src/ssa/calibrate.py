"""
Monte-Carlo calibration of the critical values.

Critical values are chosen so that, when the data are homogeneous
(f = theta* everywhere), the aggregate stays close to the weak estimate
at every level:

    E |N_k K(weak_k, agg_k)|^r <= alpha tau_r,   k = 2..K.

The search has two stages. The last value z_K comes from a reduced
two-estimate procedure with target alpha tau_r / (K - 1); the remaining
values follow the affine form z_k = z_K + iota (K - k) with the smallest
feasible slope iota. Both stages bisect over one scalar while reusing the
same simulated data sets (common random numbers).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np
from numpy.typing import ArrayLike, NDArray

from ssa.aggregate import AggKernel, CriticalValues, aggregate_path, agg_kernel_eval
from ssa.expfam import ExpFamModel, _kl, sample, tau_r
from ssa.localize import SchemeLadder
from ssa.seeding import derive_seed

MIN_REPLICATES = 1000

# max entries of a simulated (replicates x support) block held at once
_CHUNK_CELLS = 2_000_000


class CalibrationError(RuntimeError):
    """No critical value below the search ceiling meets the target."""


def least_favorable_theta(model: ExpFamModel) -> float:
    """Default null parameter: 1/2 for Bernoulli, the top of the range for Poisson.

    Gaussian risks are shift invariant, so any interior point works; 0 is
    used when it lies in the parameter set.
    """
    if model.family == "bernoulli":
        return float(model.clip(0.5))
    if model.family == "poisson":
        return model.theta_max
    if model.theta_min <= 0.0 <= model.theta_max:
        return 0.0
    return 0.5 * (model.theta_min + model.theta_max)


@dataclass
class CalibrationConfig:
    model: ExpFamModel
    ladder: SchemeLadder
    theta_star: float | None = None
    r: float = 0.5
    alpha: float = 1.0
    replicates: int = 5000
    seed: int = 0
    kernel: AggKernel = field(default_factory=AggKernel)
    z_max: float = 50.0
    iota_max: float = 5.0
    rtol: float = 1e-3

    def __post_init__(self) -> None:
        if self.theta_star is None:
            self.theta_star = least_favorable_theta(self.model)
        self.model.check_theta(self.theta_star)
        if self.r <= 0:
            raise ValueError("r must be positive")
        if not 0 < self.alpha <= 1:
            raise ValueError("alpha must lie in (0, 1]")
        if self.replicates < MIN_REPLICATES:
            raise ValueError(f"need at least {MIN_REPLICATES} replicates")
        if self.ladder.K < 2:
            raise ValueError("calibration needs a ladder with K >= 2")
        if self.z_max <= 0 or self.iota_max < 0:
            raise ValueError("search ceilings must be positive")

    @property
    def K(self) -> int:
        return self.ladder.K

    @property
    def target(self) -> float:
        return self.alpha * tau_r(self.r)


def null_weak_estimates(config: CalibrationConfig, seed: int | None = None) -> NDArray[np.float64]:
    """Weak estimates on ``replicates`` simulated homogeneous data sets, shape (M, K).

    Only design points inside the support of the widest level are simulated.
    """
    seed = config.seed if seed is None else seed
    rng = np.random.default_rng(seed)
    W = config.ladder.weights
    support = W[-1] > 0
    Ws = W[:, support]
    n_s = Ws.shape[1]
    M = config.replicates
    out = np.empty((M, config.K))
    step = max(1, _CHUNK_CELLS // max(n_s, 1))
    for start in range(0, M, step):
        stop = min(M, start + step)
        Y = sample(config.model, config.theta_star, (stop - start, n_s), rng)
        out[start:stop] = Y @ Ws.T / config.ladder.N
    return config.model.clip(out)


def _losses(config: CalibrationConfig, z: NDArray[np.float64], weak: NDArray[np.float64]) -> NDArray[np.float64]:
    agg, _, _ = aggregate_path(config.model, weak, config.ladder.N, z, config.kernel)
    return np.abs(config.ladder.N * _kl(config.model, weak, agg)) ** config.r


def propagation_risk(config: CalibrationConfig, cv: CriticalValues,
                     weak: NDArray[np.float64] | None = None) -> NDArray[np.float64]:
    """Monte-Carlo means rho_k of |N_k K(weak_k, agg_k)|^r; rho_1 is 0."""
    if cv.K != config.K:
        raise ValueError("critical values do not match the ladder")
    weak = null_weak_estimates(config) if weak is None else weak
    return _losses(config, cv.z, weak).mean(axis=0)


def propagation_risk_stderr(config: CalibrationConfig, cv: CriticalValues,
                            weak: NDArray[np.float64]) -> NDArray[np.float64]:
    loss = _losses(config, cv.z, weak)
    return loss.std(axis=0, ddof=1) / math.sqrt(loss.shape[0])


def reduced_risk(config: CalibrationConfig, z: float, weak: NDArray[np.float64]) -> float:
    """Risk of the two-estimate procedure on the last two levels with critical value z."""
    last, before = weak[:, -1], weak[:, -2]
    NK = config.ladder.N[-1]
    m = NK * _kl(config.model, last, before)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(m > 0, m / z, 0.0)
    g = agg_kernel_eval(config.kernel, t)
    mixed = g * last + (1.0 - g) * before
    return float(np.mean(np.abs(NK * _kl(config.model, last, mixed)) ** config.r))


def _bisect_smallest(feasible: Callable[[float], bool], lo: float, hi: float, rtol: float) -> tuple[float, float]:
    """Shrink [lo, hi] with ``hi`` feasible and ``lo`` not, to relative width rtol."""
    while hi - lo > rtol * hi and hi - lo > 1e-12:
        mid = 0.5 * (lo + hi)
        if feasible(mid):
            hi = mid
        else:
            lo = mid
    return lo, hi


def calibrate_zK(config: CalibrationConfig, weak: NDArray[np.float64] | None = None) -> float:
    weak = null_weak_estimates(config) if weak is None else weak
    target = config.target / (config.K - 1)

    def ok(z: float) -> bool:
        return reduced_risk(config, z, weak) <= target

    if not ok(config.z_max):
        raise CalibrationError(f"z_K: risk at z_max={config.z_max} still exceeds {target:.4g}")
    _, hi = _bisect_smallest(ok, 0.0, config.z_max, config.rtol)
    return hi


def calibrate_iota(config: CalibrationConfig, z_K: float,
                   weak: NDArray[np.float64] | None = None) -> CriticalValues:
    weak = null_weak_estimates(config) if weak is None else weak
    K = config.K

    def risk_max(iota: float) -> float:
        cv = CriticalValues.affine(z_K, iota, K)
        return float(propagation_risk(config, cv, weak)[1:].max())

    def ok(iota: float) -> bool:
        return risk_max(iota) <= config.target

    if K == 2 or ok(0.0):
        iota = 0.0
    else:
        if not ok(config.iota_max):
            raise CalibrationError(f"iota: risk at iota_max={config.iota_max} still exceeds {config.target:.4g}")
        _, iota = _bisect_smallest(ok, 0.0, config.iota_max, config.rtol)
    return CriticalValues.affine(z_K, iota, K, _meta(config))


def _meta(config: CalibrationConfig) -> dict[str, Any]:
    meta: dict[str, Any] = {
        "family": config.model.family,
        "theta_star": float(config.theta_star),
        "r": float(config.r),
        "alpha": float(config.alpha),
        "N_k": [float(v) for v in config.ladder.N],
        "replicates": int(config.replicates),
        "seed": int(config.seed),
        "kernel": {"shape": config.kernel.shape, "b": float(config.kernel.b)},
    }
    if config.model.family == "gaussian":
        meta["sigma"] = float(config.model.sigma)
    return meta


def validation_seed(config: CalibrationConfig) -> int:
    return derive_seed(config.seed, "validation")


def calibrate(config: CalibrationConfig) -> CriticalValues:
    """Both calibration stages, followed by a fresh-seed check of the risks."""
    weak = null_weak_estimates(config)
    z_K = calibrate_zK(config, weak)
    cv = calibrate_iota(config, z_K, weak)
    fresh = null_weak_estimates(config, validation_seed(config))
    cv.meta["validation_risk"] = [float(v) for v in propagation_risk(config, cv, fresh)]
    return cv


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

_FIELD_ORDER = ("family", "sigma", "theta_star", "r", "alpha", "K", "N_k", "z_k", "base", "iota",
                "replicates", "seed", "validation_risk", "kernel")


def cv_to_dict(cv: CriticalValues) -> dict[str, Any]:
    doc = dict(cv.meta)
    doc["K"] = cv.K
    doc["z_k"] = [float(v) for v in cv.z]
    doc["base"] = float(cv.base)
    doc["iota"] = float(cv.slope)
    ordered = {k: doc[k] for k in _FIELD_ORDER if k in doc}
    ordered.update({k: v for k, v in doc.items() if k not in ordered})
    return ordered


def cv_to_json(cv: CriticalValues) -> str:
    return json.dumps(cv_to_dict(cv), indent=2) + "\n"


def cv_from_dict(doc: dict[str, Any]) -> CriticalValues:
    try:
        z = doc["z_k"]
        base = doc["base"]
        iota = doc["iota"]
    except KeyError as exc:
        raise ValueError(f"critical-values document lacks field {exc.args[0]!r}") from None
    if "K" in doc and int(doc["K"]) != len(z):
        raise ValueError("K does not match the number of critical values")
    meta = {k: v for k, v in doc.items() if k not in ("z_k", "base", "iota")}
    return CriticalValues(z=np.asarray(z, dtype=float), base=float(base), slope=float(iota), meta=meta)


def cv_from_json(text: str) -> CriticalValues:
    return cv_from_dict(json.loads(text))


# ---------------------------------------------------------------------------
# Diagnostics
# ---------------------------------------------------------------------------

def _linfit(x: NDArray, y: NDArray) -> dict[str, float]:
    A = np.column_stack([np.ones_like(x), x])
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - A @ coef
    return {"intercept": float(coef[0]), "slope": float(coef[1]), "max_abs_residual": float(np.max(np.abs(resid)))}


def theoretical_z_shape(cv: CriticalValues, ladder: SchemeLadder | ArrayLike, r: float | None = None) -> dict[str, Any]:
    """Least-squares fits of z_k against (K - k) and against r log N_k."""
    N = np.asarray(ladder.N if isinstance(ladder, SchemeLadder) else ladder, dtype=float)
    if N.size != cv.K:
        raise ValueError("ladder and critical values differ in length")
    r = float(cv.meta.get("r", 0.5)) if r is None else r
    k = np.arange(1, cv.K + 1)
    by_step = _linfit((cv.K - k).astype(float), cv.z)
    by_logN = _linfit(r * np.log(N), cv.z)
    return {"steps": by_step, "log_N": by_logN, "negative_slope": by_step["slope"] < 0}


@dataclass(frozen=True)
class TailRow:
    z: float
    frequency: float
    bound: float
    stderr: float

    @property
    def violated(self) -> bool:
        return self.frequency > self.bound + 3 * self.stderr


def tail_bound_report(model: ExpFamModel, theta_star: float, weights: ArrayLike, z_grid: ArrayLike,
                      M: int, seed: int) -> list[TailRow]:
    """Monte-Carlo frequency of {N K(theta_tilde, theta*) > z} next to the bound 2 e^{-z}."""
    w = np.asarray(weights, dtype=float)
    N = w.sum()
    if N <= 0:
        raise ValueError("weights have no support")
    support = w > 0
    rng = np.random.default_rng(seed)
    Y = sample(model, theta_star, (M, int(support.sum())), rng)
    est = model.clip(Y @ w[support] / N)
    stat = N * _kl(model, est, theta_star)
    rows = []
    for z in np.asarray(z_grid, dtype=float):
        hit = stat > z
        p = float(hit.mean())
        rows.append(TailRow(z=float(z), frequency=p, bound=2.0 * math.exp(-float(z)),
                            stderr=math.sqrt(max(p * (1 - p), 1.0 / M) / M)))
    return rows
