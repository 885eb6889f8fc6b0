"""
Ordered ladders of localizing weight schemes at a query point.

A ladder is a sequence of weight vectors W^(1), ..., W^(K) over the design
whose weights never decrease from one level to the next. Two ways of
building one are supported: a geometric sequence of bandwidths, and a
geometric sequence of nearest-neighbour counts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal

import numpy as np
from numpy.typing import ArrayLike, NDArray

from ssa.expfam import EmptySupportError

LocKernel = Literal["epanechnikov", "uniform"]
LOC_KERNELS: tuple[str, ...] = ("epanechnikov", "uniform")


class LadderError(ValueError):
    """A ladder violates the ordering or growth requirements."""


def as_design(points: ArrayLike) -> NDArray[np.float64]:
    """Validate a design as an ``(n, d)`` float array."""
    X = np.asarray(points, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2 or X.shape[0] < 1 or X.shape[1] < 1:
        raise ValueError("design must be an (n, d) array with n, d >= 1")
    if not np.all(np.isfinite(X)):
        raise ValueError("design coordinates must be finite")
    return X


def pairwise_distances(Xq: ArrayLike, design: NDArray[np.float64]) -> NDArray[np.float64]:
    """Euclidean distances, shape (queries, design points)."""
    Xq = np.atleast_2d(np.asarray(Xq, dtype=float))
    if Xq.shape[1] != design.shape[1]:
        raise ValueError(f"query points have dimension {Xq.shape[1]}, design has {design.shape[1]}")
    return np.sqrt(np.sum((Xq[:, None, :] - design[None, :, :]) ** 2, axis=2))


def distances(x: ArrayLike, design: NDArray[np.float64]) -> NDArray[np.float64]:
    """Euclidean distances from x to every design point."""
    return pairwise_distances(np.asarray(x, dtype=float).reshape(1, -1), design)[0]


def kernel_of_norm(kernel: LocKernel, r):
    r = np.asarray(r, dtype=float)
    if kernel == "epanechnikov":
        return np.maximum(1.0 - r**2, 0.0)
    if kernel == "uniform":
        return (r <= 1.0).astype(float)
    raise ValueError(f"unknown location kernel {kernel!r}")


def loc_kernel_eval(kernel: LocKernel, u: ArrayLike) -> float:
    """Location kernel at the vector u (a scalar is treated as a 1-vector)."""
    return float(kernel_of_norm(kernel, np.linalg.norm(np.atleast_1d(np.asarray(u, dtype=float)))))


def bandwidth_ladder(h1: float, a: float, K: int) -> list[float]:
    """Geometric bandwidths h_k = h1 a^(k-1)."""
    if h1 <= 0:
        raise ValueError("h1 must be positive")
    if a <= 1:
        raise ValueError("growth factor a must exceed 1")
    if K < 1:
        raise ValueError("K must be at least 1")
    return [h1 * a**k for k in range(K)]


def knn_ladder(N1: int, NK: int, K: int, n: int) -> list[int]:
    """Integer neighbour counts growing geometrically from N1 to NK.

    Values are rounded half up; repeats are bumped up by one so the
    sequence is strictly increasing and ends exactly at ``NK``.
    """
    if K == 1:
        return [int(N1)]
    if not (1 <= N1 < NK <= n):
        raise LadderError(f"need 1 <= N1 < NK <= n, got N1={N1}, NK={NK}, n={n}")
    if K > NK - N1 + 1:
        raise LadderError(f"cannot fit {K} strictly increasing counts between {N1} and {NK}")
    a = (NK / N1) ** (1.0 / (K - 1))
    out = [int(N1)]
    for k in range(1, K):
        out.append(max(int(math.floor(N1 * a**k + 0.5)), out[-1] + 1))
    out[-1] = int(NK)
    # pull back any overshoot so the last step still lands on NK
    for k in range(K - 2, -1, -1):
        out[k] = min(out[k], out[k + 1] - 1)
    if out[0] != N1:
        raise LadderError("rounded ladder does not start at N1")
    return out


def weights_bandwidth(x: ArrayLike, design: ArrayLike, h: float, kernel: LocKernel = "epanechnikov") -> NDArray[np.float64]:
    if h <= 0:
        raise ValueError("bandwidth must be positive")
    X = as_design(design)
    return kernel_of_norm(kernel, distances(x, X) / h)


def knn_radius(dist: NDArray[np.float64], N_target: int, kernel: LocKernel = "uniform") -> float:
    """Radius of the smallest ball around x holding at least N_target points.

    For the Epanechnikov kernel the radius is pushed out to the next
    strictly larger distance, so every one of the N_target nearest points
    keeps a positive weight.
    """
    n = dist.shape[0]
    if not 1 <= N_target <= n:
        raise ValueError(f"N_target must lie in [1, {n}]")
    d = np.sort(dist)
    r = float(d[N_target - 1])
    if kernel == "uniform":
        return r
    farther = d[d > r]
    if farther.size:
        return float(farther[0])
    return 2.0 * r if r > 0 else 1.0


def weights_knn(x: ArrayLike, design: ArrayLike, N_target: int,
                kernel: LocKernel = "uniform") -> tuple[NDArray[np.float64], float]:
    """Weights of the k-NN scheme and the bandwidth h_k it induces."""
    X = as_design(design)
    dist = distances(x, X)
    h = knn_radius(dist, N_target, kernel)
    return _knn_weights(dist[None, :], np.array([h]), kernel)[0], h


def _knn_weights(dist: NDArray[np.float64], radii: NDArray[np.float64], kernel: LocKernel) -> NDArray[np.float64]:
    if kernel == "uniform":
        # direct comparison keeps ties at the radius exact
        return (dist <= radii[:, None]).astype(float)
    with np.errstate(divide="ignore", invalid="ignore"):
        scaled = np.where(radii[:, None] > 0, dist / radii[:, None], np.where(dist == 0, 0.0, np.inf))
    return kernel_of_norm(kernel, scaled)


@dataclass(frozen=True)
class LadderConfig:
    mode: Literal["bandwidth", "knn"] = "knn"
    kernel: LocKernel = "uniform"
    K: int = 30
    h1: float = 0.05
    a: float | None = None
    N1: int = 5
    NK: int = 300

    def growth(self, d: int) -> float:
        return (1.25) ** (1.0 / d) if self.a is None else self.a


@dataclass(frozen=True)
class SchemeLadder:
    weights: NDArray[np.float64]  # (K, n)
    N: NDArray[np.float64]  # (K,)
    radii: NDArray[np.float64]  # (K,) bandwidth h_k of each level
    mode: str
    kernel: str

    @property
    def K(self) -> int:
        return self.weights.shape[0]

    @property
    def ratios(self) -> NDArray[np.float64]:
        return self.N[:-1] / self.N[1:]

    @property
    def u0(self) -> float:
        return float(self.ratios.min()) if self.K > 1 else float("nan")

    @property
    def u(self) -> float:
        return float(self.ratios.max()) if self.K > 1 else float("nan")


def check_ladder(weights: NDArray[np.float64]) -> NDArray[np.float64]:
    """Verify nested ordering and strict growth; return the level totals N_k."""
    N = weights.sum(axis=1)
    if N[0] <= 0:
        raise EmptySupportError("first localizing scheme has no support; increase h1 or N1")
    if np.any(np.diff(weights, axis=0) < 0):
        raise LadderError("weights decrease between consecutive levels")
    if np.any(np.diff(N) <= 0):
        raise LadderError("total weight N_k does not strictly increase")
    return N


def build_ladder(x: ArrayLike, design: ArrayLike, config: LadderConfig) -> SchemeLadder:
    X = as_design(design)
    dist = distances(x, X)
    if config.mode == "bandwidth":
        radii = np.asarray(bandwidth_ladder(config.h1, config.growth(X.shape[1]), config.K))
        weights = kernel_of_norm(config.kernel, dist[None, :] / radii[:, None])
    elif config.mode == "knn":
        counts = knn_ladder(config.N1, config.NK, config.K, X.shape[0])
        radii = np.array([knn_radius(dist, c, config.kernel) for c in counts])
        weights = _knn_weights(np.broadcast_to(dist, (config.K, dist.size)), radii, config.kernel)
    else:
        raise ValueError(f"unknown ladder mode {config.mode!r}")
    try:
        N = check_ladder(weights)
    except LadderError as exc:
        if config.mode == "knn":
            raise LadderError(f"{exc}; tied distances merge k-NN levels, use a bandwidth ladder or "
                              "break ties in the design") from None
        raise
    return SchemeLadder(weights=weights, N=N, radii=radii, mode=config.mode, kernel=config.kernel)


def rescale_unit_cube(design: ArrayLike) -> tuple[NDArray[np.float64], NDArray[np.float64], NDArray[np.float64]]:
    """Affine map of each coordinate onto [-1, 1]; returns (scaled, shift, scale)."""
    X = as_design(design)
    lo, hi = X.min(axis=0), X.max(axis=0)
    scale = np.where(hi > lo, (hi - lo) / 2.0, 1.0)
    shift = (hi + lo) / 2.0
    return (X - shift) / scale, shift, scale
