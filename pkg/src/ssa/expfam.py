"""
One-parameter exponential families in the mean ("natural") parametrization.

Three families are supported: Gaussian with known variance, Bernoulli and
Poisson. All numeric functions broadcast over numpy arrays so the
aggregation loop and the Monte-Carlo calibration can evaluate them on
whole batches of replicates at once.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.optimize import bisect

Family = Literal["gaussian", "bernoulli", "poisson"]
FAMILIES: tuple[str, ...] = ("gaussian", "bernoulli", "poisson")

DEFAULT_CLIP_EPS = 1e-6


class DomainError(ValueError):
    """A parameter or response lies outside the family's domain."""


class EmptySupportError(ValueError):
    """A localizing scheme assigns zero total weight."""


@dataclass(frozen=True)
class ExpFamModel:
    family: Family
    theta_min: float
    theta_max: float
    sigma: float = 1.0
    clip_eps: float = DEFAULT_CLIP_EPS

    def __post_init__(self) -> None:
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}")
        if not (math.isfinite(self.theta_min) and math.isfinite(self.theta_max)):
            raise ValueError("parameter bounds must be finite")
        if not self.theta_min < self.theta_max:
            raise ValueError(f"need theta_min < theta_max, got [{self.theta_min}, {self.theta_max}]")
        if self.clip_eps <= 0:
            raise ValueError("clip_eps must be positive")
        if self.family == "gaussian" and self.sigma <= 0:
            raise ValueError("sigma must be positive")
        if self.family == "bernoulli" and not (
            self.theta_min >= self.clip_eps and self.theta_max <= 1 - self.clip_eps
        ):
            raise ValueError("Bernoulli bounds must lie in [clip_eps, 1 - clip_eps]")
        if self.family == "poisson" and self.theta_min < self.clip_eps:
            raise ValueError("Poisson theta_min must be >= clip_eps")

    # -- constructors -------------------------------------------------

    @classmethod
    def bernoulli(cls, theta_min: float | None = None, theta_max: float | None = None,
                  clip_eps: float = DEFAULT_CLIP_EPS) -> "ExpFamModel":
        lo = clip_eps if theta_min is None else theta_min
        hi = 1 - clip_eps if theta_max is None else theta_max
        return cls("bernoulli", lo, hi, clip_eps=clip_eps)

    @classmethod
    def poisson(cls, theta_max: float, theta_min: float | None = None,
                clip_eps: float = DEFAULT_CLIP_EPS) -> "ExpFamModel":
        lo = clip_eps if theta_min is None else theta_min
        return cls("poisson", lo, theta_max, clip_eps=clip_eps)

    @classmethod
    def gaussian(cls, sigma: float = 1.0, theta_min: float = -1e3, theta_max: float = 1e3,
                 clip_eps: float = DEFAULT_CLIP_EPS) -> "ExpFamModel":
        return cls("gaussian", theta_min, theta_max, sigma=sigma, clip_eps=clip_eps)

    @classmethod
    def from_responses(cls, family: Family, responses: ArrayLike, sigma: float = 1.0,
                       clip_eps: float = DEFAULT_CLIP_EPS) -> "ExpFamModel":
        """Default parameter set for a data set.

        Bernoulli uses the whole clipped unit interval, Poisson ``[clip_eps,
        2 max(Y)]`` and Gaussian ``[min(Y) - 3 sigma, max(Y) + 3 sigma]``.
        """
        y = np.asarray(responses, dtype=float)
        if y.size == 0:
            raise ValueError("no responses")
        if family == "bernoulli":
            return cls.bernoulli(clip_eps=clip_eps)
        if family == "poisson":
            return cls.poisson(max(2.0 * float(y.max()), 2.0 * clip_eps), clip_eps=clip_eps)
        if family == "gaussian":
            return cls.gaussian(sigma, float(y.min()) - 3 * sigma, float(y.max()) + 3 * sigma,
                                clip_eps=clip_eps)
        raise ValueError(f"unknown family {family!r}")

    # -- helpers ------------------------------------------------------

    def clip(self, theta: ArrayLike) -> NDArray[np.float64]:
        return np.clip(np.asarray(theta, dtype=float), self.theta_min, self.theta_max)

    def check_theta(self, theta: ArrayLike) -> NDArray[np.float64]:
        t = np.asarray(theta, dtype=float)
        tol = 1e-12 * max(1.0, abs(self.theta_min), abs(self.theta_max))
        if not np.all(np.isfinite(t)) or np.any(t < self.theta_min - tol) or np.any(t > self.theta_max + tol):
            raise DomainError(f"parameter outside [{self.theta_min}, {self.theta_max}]")
        return t

    def check_response(self, y: ArrayLike) -> NDArray[np.float64]:
        v = np.asarray(y, dtype=float)
        if not np.all(np.isfinite(v)):
            raise DomainError("non-finite response")
        if self.family == "bernoulli" and not np.all((v == 0) | (v == 1)):
            raise DomainError("Bernoulli responses must be 0 or 1")
        if self.family == "poisson" and not np.all((v >= 0) & (v == np.floor(v))):
            raise DomainError("Poisson responses must be nonnegative integers")
        return v


# ---------------------------------------------------------------------------
# Divergences
# ---------------------------------------------------------------------------

def _kl(model: ExpFamModel, a, b):
    """Unchecked KL divergence; callers guarantee a, b inside the domain."""
    if model.family == "gaussian":
        return (a - b) ** 2 / (2 * model.sigma**2)
    if model.family == "bernoulli":
        out = a * np.log1p((a - b) / b) + (1 - a) * np.log1p((b - a) / (1 - b))
    else:
        out = a * np.log1p((a - b) / b) - (a - b)
    return np.maximum(out, 0.0)


def kl(model: ExpFamModel, a: ArrayLike, b: ArrayLike):
    """Kullback-Leibler divergence K(P_a, P_b) in closed form."""
    a = model.check_theta(a)
    b = model.check_theta(b)
    out = _kl(model, a, b)
    return float(out) if np.ndim(out) == 0 else out


def fitted_loglik(model: ExpFamModel, N: ArrayLike, theta_tilde: ArrayLike, theta: ArrayLike):
    """Fitted log-likelihood L(W, theta_tilde) - L(W, theta), which equals N K(theta_tilde, theta)."""
    N = np.asarray(N, dtype=float)
    if np.any(N < 0):
        raise ValueError("N must be nonnegative")
    out = N * kl(model, theta_tilde, theta)
    return float(out) if np.ndim(out) == 0 else out


def log_density(model: ExpFamModel, y: ArrayLike, theta: ArrayLike):
    y = model.check_response(y)
    t = np.asarray(theta, dtype=float)
    if model.family == "gaussian":
        s2 = model.sigma**2
        return -((y - t) ** 2) / (2 * s2) - 0.5 * math.log(2 * math.pi * s2)
    if model.family == "bernoulli":
        return y * np.log(t) + (1 - y) * np.log1p(-t)
    from scipy.special import gammaln
    return y * np.log(t) - t - gammaln(y + 1)


def loglik_ratio(model: ExpFamModel, y: ArrayLike, a: ArrayLike, b: ArrayLike):
    """log p(y, a) / p(y, b)."""
    y = model.check_response(y)
    a = model.check_theta(a)
    b = model.check_theta(b)
    if model.family == "gaussian":
        out = ((y - b) ** 2 - (y - a) ** 2) / (2 * model.sigma**2)
    elif model.family == "bernoulli":
        out = y * np.log(a / b) + (1 - y) * np.log((1 - a) / (1 - b))
    else:
        out = y * np.log(a / b) - (a - b)
    return float(out) if np.ndim(out) == 0 else out


def delta(model: ExpFamModel, theta: ArrayLike, theta_prime: ArrayLike):
    """log E_theta exp(-2 l(Y, theta, theta')), the per-point modeling-bias term."""
    t = model.check_theta(theta)
    tp = model.check_theta(theta_prime)
    if model.family == "gaussian":
        out = (t - tp) ** 2 / model.sigma**2
    elif model.family == "bernoulli":
        # log(tp^2/t + (1-tp)^2/(1-t)) == log1p((t-tp)^2 / (t(1-t)))
        out = np.log1p((t - tp) ** 2 / (t * (1 - t)))
    else:
        out = (tp - t) ** 2 / t
    return float(out) if np.ndim(out) == 0 else out


def modeling_bias(model: ExpFamModel, weights: ArrayLike, f_values: ArrayLike, theta: float) -> float:
    """Sum of delta(theta, f(X_i)) over points with strictly positive weight."""
    w = np.asarray(weights, dtype=float)
    f = np.asarray(f_values, dtype=float)
    if w.shape != f.shape:
        raise ValueError("weights and f_values must have the same length")
    active = w > 0
    if not np.any(active):
        return 0.0
    return float(np.sum(delta(model, theta, f[active])))


# ---------------------------------------------------------------------------
# Estimation
# ---------------------------------------------------------------------------

def weighted_mle(model: ExpFamModel, weights: ArrayLike, responses: ArrayLike) -> tuple[float, float]:
    """Local constant MLE S/N, clipped into the parameter set.

    Returns ``(theta_tilde, N)`` with ``N`` the total weight.
    """
    w = np.asarray(weights, dtype=float)
    y = np.asarray(responses, dtype=float)
    if w.shape != y.shape:
        raise ValueError("weights and responses must have the same length")
    if np.any(w < 0) or np.any(w > 1):
        raise ValueError("weights must lie in [0, 1]")
    N = float(w.sum())
    if N <= 0:
        raise EmptySupportError("all weights are zero")
    theta = float(np.dot(w, y)) / N
    return float(model.clip(theta)), N


def weighted_loglik(model: ExpFamModel, weights: ArrayLike, responses: ArrayLike, theta: ArrayLike):
    """L(W, theta) = sum_i w_i log p(Y_i, theta); vectorized over theta."""
    w = np.asarray(weights, dtype=float)
    lp = log_density(model, np.asarray(responses, dtype=float)[:, None], np.atleast_1d(theta)[None, :])
    out = w @ lp
    return float(out[0]) if np.ndim(theta) == 0 else out


# ---------------------------------------------------------------------------
# Risk constants and confidence sets
# ---------------------------------------------------------------------------

def tau_r(r: float) -> float:
    """Parametric risk constant 2 r Gamma(r)."""
    if r <= 0:
        raise ValueError("r must be positive")
    return 2.0 * r * math.gamma(r)


def fisher_information(model: ExpFamModel, theta: ArrayLike):
    t = np.asarray(theta, dtype=float)
    if model.family == "gaussian":
        return np.full_like(t, 1.0 / model.sigma**2)
    if model.family == "bernoulli":
        return 1.0 / (t * (1 - t))
    return 1.0 / t


def kappa(model: ExpFamModel) -> float:
    """sup over the parameter set of sqrt(I(a) / I(b))."""
    if model.family == "gaussian":
        return 1.0
    lo, hi = model.theta_min, model.theta_max
    if model.family == "bernoulli":
        # information is minimal at 1/2 and grows towards both ends
        i_min = 4.0 if lo <= 0.5 <= hi else float(fisher_information(model, min((lo, hi), key=lambda t: abs(t - 0.5))))
        i_max = float(max(fisher_information(model, lo), fisher_information(model, hi)))
    else:
        i_min, i_max = 1.0 / hi, 1.0 / lo
    return math.sqrt(i_max / i_min)


def confidence_set(model: ExpFamModel, theta_tilde: float, N: float, alpha: float) -> tuple[float, float]:
    """Interval {theta' : N K(theta_tilde, theta') <= log(2/alpha)} intersected with the parameter set."""
    if N <= 0:
        raise ValueError("N must be positive")
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    theta_tilde = float(model.check_theta(theta_tilde))
    z = math.log(2.0 / alpha)

    def excess(t: float) -> float:
        return N * float(_kl(model, theta_tilde, t)) - z

    ends = []
    for bound in (model.theta_min, model.theta_max):
        if excess(bound) <= 0 or bound == theta_tilde:
            ends.append(bound)
        else:
            ends.append(bisect(excess, theta_tilde, bound, xtol=1e-13, rtol=4 * np.finfo(float).eps))
    return ends[0], ends[1]


# ---------------------------------------------------------------------------
# Sampling
# ---------------------------------------------------------------------------

def sample(model: ExpFamModel, theta: ArrayLike, count: int | tuple[int, ...],
           rng: int | np.random.Generator | None = None) -> NDArray[np.float64]:
    """I.i.d. draws from P_theta; ``theta`` broadcasts against ``count``."""
    t = model.check_theta(theta)
    gen = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    if model.family == "gaussian":
        return gen.normal(t, model.sigma, size=count)
    if model.family == "bernoulli":
        return (gen.random(size=count) < t).astype(float)
    return gen.poisson(t, size=count).astype(float)
