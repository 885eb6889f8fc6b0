"""
JSON run configuration for the command-line tool.

A config file is a JSON object with one optional sub-object per block
plus a top-level ``seed``. Missing fields take their defaults; unknown
keys are an error. ``RunConfig.to_dict`` emits every field, so loading
and re-emitting a config is idempotent.
"""

from __future__ import annotations

import json
import math
import types
import typing
from dataclasses import asdict, dataclass, field, fields, is_dataclass, replace
from pathlib import Path
from typing import Any

from numpy.typing import ArrayLike

from ssa.aggregate import AggKernel
from ssa.calibrate import MIN_REPLICATES
from ssa.expfam import FAMILIES, ExpFamModel
from ssa.localize import LOC_KERNELS, LadderConfig


class ConfigError(ValueError):
    """Invalid or unreadable configuration."""


@dataclass
class ModelBlock:
    family: str = "bernoulli"
    sigma: float = 1.0
    theta_min: float | None = None  # None: a data-driven default
    theta_max: float | None = None
    clip_eps: float = 1e-6


@dataclass
class LadderBlock:
    mode: str = "knn"
    kernel: str = "uniform"
    K: int = 30
    h1: float = 0.05
    a: float | None = None  # None: 1.25 ** (1 / d)
    N1: int = 5
    NK: int = 300


@dataclass
class AggregationBlock:
    shape: str = "piecewise_linear"
    b: float = 1.0 / 6.0


@dataclass
class CalibrationBlock:
    r: float = 0.5
    alpha: float = 1.0
    theta_star: float | None = None  # None: least favorable value of the family
    replicates: int = 5000
    z_max: float = 50.0
    iota_max: float = 5.0
    rtol: float = 1e-3
    # design used when io.input is not given: uniform on [-1, 1]^d
    design_n: int = 400
    design_d: int = 2


@dataclass
class IOBlock:
    input: str | None = None
    output_dir: str = "out"
    calibration: str | None = None  # None: <output_dir>/critical_values.json
    rescale: bool = False
    svg: bool = False


@dataclass
class EstimateBlock:
    query: str | None = None  # None: estimate at the design points
    trace_dump: bool = False


@dataclass
class ClassifyBlock:
    test: str | None = None


@dataclass
class SimulateBlock:
    example: str = "example41"
    n_per_class: int = 100


@dataclass
class WeakBlock:
    knn: list[int] | None = None  # None: the ladder's neighbour counts
    kernel_h1: float = 0.1
    kernel_a: float | None = None  # None: 1.25 ** (1 / d)
    kernel_K: int = 30
    kernel_shape: str = "epanechnikov"


@dataclass
class BenchmarkBlock:
    example: str = "example41"
    runs: int = 50
    n_train_per_class: int = 100
    n_test_per_class: int = 100


@dataclass
class RunConfig:
    seed: int = 0
    model: ModelBlock = field(default_factory=ModelBlock)
    ladder: LadderBlock = field(default_factory=LadderBlock)
    aggregation: AggregationBlock = field(default_factory=AggregationBlock)
    calibration: CalibrationBlock = field(default_factory=CalibrationBlock)
    io: IOBlock = field(default_factory=IOBlock)
    estimate: EstimateBlock = field(default_factory=EstimateBlock)
    classify: ClassifyBlock = field(default_factory=ClassifyBlock)
    simulate: SimulateBlock = field(default_factory=SimulateBlock)
    weak: WeakBlock = field(default_factory=WeakBlock)
    benchmark: BenchmarkBlock = field(default_factory=BenchmarkBlock)

    def __post_init__(self) -> None:
        validate(self)

    @classmethod
    def from_dict(cls, doc: dict[str, Any]) -> "RunConfig":
        return _build(cls, doc, "")

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    # -- conversions to library objects --------------------------------

    def ladder_config(self) -> LadderConfig:
        lb = self.ladder
        return LadderConfig(mode=lb.mode, kernel=lb.kernel, K=lb.K, h1=lb.h1, a=lb.a, N1=lb.N1, NK=lb.NK)

    def agg_kernel(self) -> AggKernel:
        return AggKernel(b=self.aggregation.b, shape=self.aggregation.shape)

    def build_model(self, responses: ArrayLike | None = None) -> ExpFamModel:
        """The exponential family model, with unset bounds filled from the responses if given."""
        mb = self.model
        if responses is not None:
            base = ExpFamModel.from_responses(mb.family, responses, mb.sigma, mb.clip_eps)
        elif mb.family == "bernoulli":
            base = ExpFamModel.bernoulli(clip_eps=mb.clip_eps)
        elif mb.family == "gaussian":
            base = ExpFamModel.gaussian(mb.sigma, clip_eps=mb.clip_eps)
        else:
            if mb.theta_max is None:
                raise ConfigError("model.theta_max is required for a Poisson model without data")
            base = ExpFamModel.poisson(mb.theta_max, clip_eps=mb.clip_eps)
        lo = base.theta_min if mb.theta_min is None else mb.theta_min
        hi = base.theta_max if mb.theta_max is None else mb.theta_max
        try:
            return replace(base, theta_min=float(lo), theta_max=float(hi))
        except ValueError as exc:
            raise ConfigError(f"model: {exc}") from exc


# ---------------------------------------------------------------------------
# Loading
# ---------------------------------------------------------------------------

def _is_optional(tp: Any) -> bool:
    return isinstance(tp, types.UnionType) and type(None) in typing.get_args(tp)


def _coerce(value: Any, tp: Any, where: str) -> Any:
    if _is_optional(tp):
        if value is None:
            return None
        inner = [t for t in typing.get_args(tp) if t is not type(None)][0]
        return _coerce(value, inner, where)
    origin = typing.get_origin(tp)
    if origin is list:
        if not isinstance(value, list):
            raise ConfigError(f"{where}: expected a list, got {value!r}")
        (item,) = typing.get_args(tp)
        return [_coerce(v, item, f"{where}[{i}]") for i, v in enumerate(value)]
    if tp is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{where}: expected true/false, got {value!r}")
        return value
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, (int, float)) or float(value) != int(value):
            raise ConfigError(f"{where}: expected an integer, got {value!r}")
        return int(value)
    if tp is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
            raise ConfigError(f"{where}: expected a finite number, got {value!r}")
        return float(value)
    if tp is str:
        if not isinstance(value, str):
            raise ConfigError(f"{where}: expected a string, got {value!r}")
        return value
    if is_dataclass(tp):
        if not isinstance(value, dict):
            raise ConfigError(f"{where}: expected an object, got {value!r}")
        return _build(tp, value, where + ".")
    raise ConfigError(f"{where}: unsupported field type {tp!r}")


def _build(cls: type, doc: dict[str, Any], prefix: str):
    if not isinstance(doc, dict):
        raise ConfigError(f"{prefix or 'config'}: expected an object")
    hints = typing.get_type_hints(cls)
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(doc) - known)
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(prefix + k for k in unknown)}")
    kwargs = {k: _coerce(v, hints[k], f"{prefix}{k}") for k, v in doc.items()}
    return cls(**kwargs)


def _check(ok: bool, message: str) -> None:
    if not ok:
        raise ConfigError(message)


def validate(cfg: RunConfig) -> None:
    m, lb, ag, cb = cfg.model, cfg.ladder, cfg.aggregation, cfg.calibration
    _check(m.family in FAMILIES, f"model.family must be one of {FAMILIES}")
    _check(m.sigma > 0, "model.sigma must be positive")
    _check(m.clip_eps > 0, "model.clip_eps must be positive")
    _check(lb.mode in ("knn", "bandwidth"), "ladder.mode must be 'knn' or 'bandwidth'")
    _check(lb.kernel in LOC_KERNELS, f"ladder.kernel must be one of {LOC_KERNELS}")
    _check(lb.K >= 1, "ladder.K must be at least 1")
    _check(lb.h1 > 0, "ladder.h1 must be positive")
    _check(lb.a is None or lb.a > 1, "ladder.a must exceed 1")
    _check(lb.N1 >= 1, "ladder.N1 must be at least 1")
    _check(lb.K == 1 or lb.NK > lb.N1, "ladder.NK must exceed ladder.N1")
    try:
        AggKernel(b=ag.b, shape=ag.shape)  # type: ignore[arg-type]
    except ValueError as exc:
        raise ConfigError(f"aggregation: {exc}") from exc
    _check(cb.r > 0, "calibration.r must be positive")
    _check(0 < cb.alpha <= 1, "calibration.alpha must lie in (0, 1]")
    _check(cb.replicates >= MIN_REPLICATES, f"calibration.replicates must be at least {MIN_REPLICATES}")
    _check(cb.z_max > 0 and cb.iota_max > 0, "calibration.z_max and iota_max must be positive")
    _check(0 < cb.rtol < 1, "calibration.rtol must lie in (0, 1)")
    _check(cb.design_n >= 1 and cb.design_d >= 1, "calibration.design_n and design_d must be positive")
    _check(cfg.simulate.example in ("example41", "example42"), "simulate.example must be example41 or example42")
    _check(cfg.simulate.n_per_class >= 1, "simulate.n_per_class must be positive")
    wb = cfg.weak
    _check(wb.knn is None or all(k >= 1 for k in wb.knn), "weak.knn entries must be positive")
    _check(wb.kernel_h1 > 0 and wb.kernel_K >= 0, "weak.kernel_h1 must be positive, kernel_K nonnegative")
    _check(wb.kernel_a is None or wb.kernel_a > 1, "weak.kernel_a must exceed 1")
    _check(wb.kernel_shape in LOC_KERNELS, f"weak.kernel_shape must be one of {LOC_KERNELS}")
    bb = cfg.benchmark
    _check(bb.example in ("example41", "example42"), "benchmark.example must be example41 or example42")
    _check(bb.runs >= 1 and bb.n_train_per_class >= 1 and bb.n_test_per_class >= 1,
           "benchmark sizes must be positive")
    _check(0 <= cfg.seed < 2**64, "seed must be a 64-bit unsigned integer")


def parse_override(text: str) -> tuple[list[str], Any]:
    """Split ``block.key=value``; the value is read as JSON, else kept as a string."""
    if "=" not in text:
        raise ConfigError(f"override {text!r} is not of the form key=value")
    key, raw = text.split("=", 1)
    path = [p for p in key.strip().split(".") if p]
    if not path:
        raise ConfigError(f"override {text!r} has an empty key")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return path, value


def apply_overrides(doc: dict[str, Any], overrides: list[tuple[list[str], Any]]) -> dict[str, Any]:
    out = json.loads(json.dumps(doc))
    for path, value in overrides:
        node = out
        for part in path[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigError(f"override path {'.'.join(path)} crosses a non-object")
        node[path[-1]] = value
    return out


def load_config(path: str | Path | None, overrides: list[tuple[list[str], Any]] = ()) -> RunConfig:
    doc: dict[str, Any] = {}
    if path is not None:
        try:
            doc = json.loads(Path(path).read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    return RunConfig.from_dict(apply_overrides(doc, list(overrides)))
