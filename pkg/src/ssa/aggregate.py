"""
Stagewise aggregation of a ladder of weak local estimates.

The loop starts from the most local estimate and, level by level, mixes
in the next weak estimate with weight gamma_k = K_ag(m_k / z_k), where
m_k = N_k K(weak_k, agg_{k-1}) measures how far the new estimate sits from
the current aggregate.

``aggregate_path`` is the batched workhorse; ``ssa_estimate`` wraps it for
a single query point and returns a full trace.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Any, Literal

import numpy as np
from numpy.typing import ArrayLike, NDArray

from ssa.expfam import ExpFamModel, _kl
from ssa.localize import SchemeLadder

AggShape = Literal["piecewise_linear", "uniform"]

# relative slack for the stability checks; covers floating rounding only
STABILITY_RTOL = 1e-9


class StabilityError(AssertionError):
    """The deterministic stability bound failed; this is always a bug."""


@dataclass(frozen=True)
class AggKernel:
    b: float = 1.0 / 6.0
    shape: AggShape = "piecewise_linear"

    def __post_init__(self) -> None:
        if self.shape not in ("piecewise_linear", "uniform"):
            raise ValueError(f"unknown aggregation kernel {self.shape!r}")
        if not 0 < self.b < 1:
            raise ValueError("b must lie in (0, 1)")

    @property
    def cutoff(self) -> float:
        return 1.0 + self.b if self.shape == "piecewise_linear" else 1.0


def agg_kernel_eval(kernel: AggKernel, t: ArrayLike):
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("aggregation kernel argument must be nonnegative")
    if kernel.shape == "piecewise_linear":
        out = np.clip(1.0 - np.maximum(t - kernel.b, 0.0), 0.0, 1.0)
    else:
        out = (t <= 1.0).astype(float)
    return float(out) if out.ndim == 0 else out


@dataclass
class CriticalValues:
    z: NDArray[np.float64]
    base: float
    slope: float
    meta: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.z = np.asarray(self.z, dtype=float)
        if self.z.ndim != 1 or self.z.size < 1:
            raise ValueError("critical values must be a nonempty vector")
        if np.any(~(self.z > 0)):
            raise ValueError("critical values must be positive")

    @classmethod
    def affine(cls, base: float, slope: float, K: int, meta: dict[str, Any] | None = None) -> "CriticalValues":
        """z_k = base + slope (K - k) for k = 1..K."""
        z = base + slope * (K - np.arange(1, K + 1))
        return cls(z=z, base=float(base), slope=float(slope), meta=dict(meta or {}))

    @classmethod
    def constant(cls, value: float, K: int) -> "CriticalValues":
        return cls.affine(value, 0.0, K)

    @property
    def K(self) -> int:
        return self.z.size


@dataclass(frozen=True)
class SSATrace:
    theta_weak: NDArray[np.float64]
    theta_agg: NDArray[np.float64]
    m: NDArray[np.float64]
    gamma: NDArray[np.float64]
    N: NDArray[np.float64]

    @property
    def K(self) -> int:
        return self.theta_weak.size

    @property
    def theta_hat(self) -> float:
        return float(self.theta_agg[-1])

    def gamma_profile_hash(self) -> str:
        """Short digest of the mixing weights, for comparing runs."""
        return hashlib.sha1(np.round(self.gamma, 12).tobytes()).hexdigest()[:12]


def weak_estimates(model: ExpFamModel, ladder: SchemeLadder, responses: ArrayLike) -> NDArray[np.float64]:
    """Clipped local constant estimates S_k / N_k for every level of the ladder."""
    y = np.asarray(responses, dtype=float)
    if y.shape != (ladder.weights.shape[1],):
        raise ValueError("responses do not match the ladder's design")
    return model.clip(ladder.weights @ y / ladder.N)


def aggregate_path(model: ExpFamModel, weak: ArrayLike, N: ArrayLike, z: ArrayLike,
                   kernel: AggKernel) -> tuple[NDArray, NDArray, NDArray]:
    """Run the aggregation loop along the last axis.

    ``weak`` and ``N`` have shape ``(..., K)`` (``N`` may also be a plain
    ``(K,)`` vector), ``z`` has shape ``(K,)``. Returns the aggregates,
    the test statistics m_k and the mixing weights gamma_k, all shaped like
    ``weak``; level one carries m = 0 and gamma = 1 by convention.
    """
    weak = np.asarray(weak, dtype=float)
    N = np.broadcast_to(np.asarray(N, dtype=float), weak.shape)
    z = np.asarray(z, dtype=float)
    K = weak.shape[-1]
    if z.shape != (K,):
        raise ValueError(f"expected {K} critical values, got {z.shape}")
    agg = np.empty_like(weak)
    m = np.zeros_like(weak)
    gamma = np.ones_like(weak)
    prev = weak[..., 0]
    agg[..., 0] = prev
    for k in range(1, K):
        mk = N[..., k] * _kl(model, weak[..., k], prev)
        gk = agg_kernel_eval(kernel, mk / z[k])
        prev = gk * weak[..., k] + (1.0 - gk) * prev
        m[..., k] = mk
        gamma[..., k] = gk
        agg[..., k] = prev
    return agg, m, gamma


def ssa_estimate(model: ExpFamModel, ladder: SchemeLadder, responses: ArrayLike,
                 kernel: AggKernel, cv: CriticalValues) -> tuple[float, SSATrace]:
    if cv.K != ladder.K:
        raise ValueError(f"ladder has {ladder.K} levels but {cv.K} critical values were given")
    weak = weak_estimates(model, ladder, responses)
    agg, m, gamma = aggregate_path(model, weak, ladder.N, cv.z, kernel)
    trace = SSATrace(theta_weak=weak, theta_agg=agg, m=m, gamma=gamma, N=np.asarray(ladder.N, dtype=float))
    _assert_step_stability(model, trace, cv)
    return trace.theta_hat, trace


def ssa_selected_index(trace: SSATrace, kernel: AggKernel) -> int | None:
    """Level (1-based) whose weak estimate the aggregate equals, for the uniform kernel.

    With gamma_k in {0, 1} the aggregate is the weak estimate of the last
    accepted level. Returns ``None`` for kernels that mix.
    """
    if kernel.shape != "uniform":
        return None
    accepted = np.flatnonzero(trace.gamma == 1.0)
    return int(accepted[-1]) + 1


@dataclass(frozen=True)
class StabilityReport:
    step_lhs: NDArray[np.float64]  # N_k K(agg_k, agg_{k-1}), k >= 2
    step_bound: NDArray[np.float64]
    pair_lhs: NDArray[np.float64]  # (K, K), entry [k, k'] for k < k'
    pair_bound: NDArray[np.float64]  # (K,) kappa^2 c_u^2 max_{l >= k} z_l
    c_u: float
    step_violations: int
    pair_violations: int

    @property
    def step_margin(self) -> float:
        return float(np.min(self.step_bound - self.step_lhs)) if self.step_lhs.size else float("inf")

    @property
    def pair_margin(self) -> float:
        K = self.pair_lhs.shape[0]
        iu = np.triu_indices(K, 1)
        if not iu[0].size:
            return float("inf")
        return float(np.min(self.pair_bound[iu[0]] - self.pair_lhs[iu]))


def _exceeds(lhs, bound):
    return lhs > bound * (1 + STABILITY_RTOL) + 1e-300


def _assert_step_stability(model: ExpFamModel, trace: SSATrace, cv: CriticalValues) -> None:
    if trace.K < 2:
        return
    lhs = trace.N[1:] * _kl(model, trace.theta_agg[1:], trace.theta_agg[:-1])
    bad = np.flatnonzero(_exceeds(lhs, cv.z[1:]))
    if bad.size:
        k = int(bad[0]) + 2
        raise StabilityError(f"step {k}: N_k K(agg_k, agg_k-1) = {lhs[bad[0]]!r} exceeds z_k = {cv.z[k - 1]!r}")


def check_stability(model: ExpFamModel, trace: SSATrace, cv: CriticalValues, kappa: float, u: float) -> StabilityReport:
    """Check the one-step bound (raises on failure) and report the pairwise bound.

    The pairwise bound is N_k K(agg_k', agg_k) <= kappa^2 c_u^2 max_{l>=k} z_l
    for all k < k', with c_u = 1 / (u^{-1/2} - 1) and u the largest ratio
    N_{k-1} / N_k of the ladder.
    """
    if cv.K != trace.K:
        raise ValueError("trace and critical values differ in length")
    _assert_step_stability(model, trace, cv)
    step_lhs = trace.N[1:] * _kl(model, trace.theta_agg[1:], trace.theta_agg[:-1])
    step_bound = cv.z[1:]
    c_u = 1.0 / (u ** -0.5 - 1.0) if trace.K > 1 else 0.0
    zbar = np.maximum.accumulate(cv.z[::-1])[::-1]
    pair_bound = kappa**2 * c_u**2 * zbar
    agg = trace.theta_agg
    pair_lhs = trace.N[:, None] * _kl(model, agg[None, :], agg[:, None])
    pair_lhs = np.triu(pair_lhs, 1)
    iu = np.triu_indices(trace.K, 1)
    pair_viol = int(np.sum(_exceeds(pair_lhs[iu], pair_bound[iu[0]])))
    return StabilityReport(
        step_lhs=step_lhs,
        step_bound=step_bound,
        pair_lhs=pair_lhs,
        pair_bound=pair_bound,
        c_u=c_u,
        step_violations=int(np.sum(_exceeds(step_lhs, step_bound))),
        pair_violations=pair_viol,
    )
