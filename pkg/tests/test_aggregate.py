import numpy as np
import pytest
from hypothesis import given, strategies as st

from ssa.aggregate import (
    AggKernel,
    CriticalValues,
    SSATrace,
    aggregate_path,
    agg_kernel_eval,
    check_stability,
    ssa_estimate,
    ssa_selected_index,
    weak_estimates,
)
from ssa.expfam import ExpFamModel, kappa, kl
from ssa.localize import LadderConfig, build_ladder

from conftest import MODELS
from instances import random_instance

PL = AggKernel()
UNIFORM = AggKernel(shape="uniform")


# -- kernel -----------------------------------------------------------------

@pytest.mark.parametrize("t, expected", [(0.1, 1.0), (2 / 3, 0.5), (7 / 6, 0.0), (5.0, 0.0)])
def test_piecewise_linear_values(t, expected):
    assert agg_kernel_eval(PL, t) == pytest.approx(expected, abs=1e-15)


def test_uniform_kernel_values():
    assert agg_kernel_eval(UNIFORM, 1.0) == 1.0
    assert agg_kernel_eval(UNIFORM, 1.0 + 1e-12) == 0.0


@given(s=st.floats(0, 10), t=st.floats(0, 10), b=st.floats(0.01, 0.99))
def test_kernel_nonincreasing_in_unit_range(s, t, b):
    k = AggKernel(b=b)
    lo, hi = sorted((s, t))
    assert 0.0 <= agg_kernel_eval(k, hi) <= agg_kernel_eval(k, lo) <= 1.0


def test_kernel_rejects_negative_argument():
    with pytest.raises(ValueError):
        agg_kernel_eval(PL, -0.1)


# -- weak estimates ---------------------------------------------------------

def test_weak_estimates_match_neighbour_means(rng):
    X = rng.uniform(0, 1, (60, 1))
    y = rng.normal(size=60)
    model = ExpFamModel.gaussian()
    ladder = build_ladder([0.4], X, LadderConfig(K=5, N1=3, NK=40))
    order = np.argsort(np.abs(X[:, 0] - 0.4))
    expected = [y[order[:int(N)]].mean() for N in ladder.N]
    np.testing.assert_allclose(weak_estimates(model, ladder, y), expected, rtol=1e-12)


def test_constant_data_propagates():
    model = ExpFamModel.gaussian()
    X = np.linspace(0, 1, 50)[:, None] + 1e-3 * np.arange(50)[:, None] ** 0.5
    ladder = build_ladder([0.5], X, LadderConfig(K=6, N1=3, NK=45))
    # 2.0 keeps every weighted mean exact in binary floating point
    theta, trace = ssa_estimate(model, ladder, np.full(50, 2.0), PL, CriticalValues.constant(1.0, 6))
    assert theta == 2.0
    assert np.all(trace.m == 0) and np.all(trace.gamma == 1)


# -- the aggregation step ---------------------------------------------------

def test_two_step_hand_example():
    model = ExpFamModel.gaussian(sigma=1.0)
    agg, m, gamma = aggregate_path(model, [0.0, 0.5], [4.0, 10.0], [3.0, 3.0], PL)
    assert m[1] == pytest.approx(1.25)
    assert gamma[1] == pytest.approx(0.75)
    assert agg[1] == pytest.approx(0.375)


def test_full_rejection_keeps_previous():
    model = ExpFamModel.gaussian(sigma=1.0)
    agg, _, gamma = aggregate_path(model, [0.0, 3.0], [4.0, 10.0], [3.0, 3.0], PL)
    assert gamma[1] == 0.0 and agg[1] == 0.0


def test_ssa_estimate_checks_length(rng):
    ladder, y, cv = random_instance(MODELS["bernoulli"], rng)
    with pytest.raises(ValueError):
        ssa_estimate(MODELS["bernoulli"], ladder, y, PL, CriticalValues.constant(1.0, ladder.K + 1))


def test_trace_recursion_is_exact(model, rng):
    for _ in range(20):
        ladder, y, cv = random_instance(model, rng)
        _, tr = ssa_estimate(model, ladder, y, PL, cv)
        assert tr.theta_agg[0] == tr.theta_weak[0]
        rebuilt = tr.gamma[1:] * tr.theta_weak[1:] + (1 - tr.gamma[1:]) * tr.theta_agg[:-1]
        np.testing.assert_array_equal(tr.theta_agg[1:], rebuilt)


def test_aggregate_stays_in_weak_range(model, rng):
    for _ in range(50):
        ladder, y, cv = random_instance(model, rng)
        _, tr = ssa_estimate(model, ladder, y, PL, cv)
        for k in range(tr.K):
            lo, hi = tr.theta_weak[:k + 1].min(), tr.theta_weak[:k + 1].max()
            assert lo - 1e-12 <= tr.theta_agg[k] <= hi + 1e-12


def test_larger_critical_values_never_lower_gamma(model, rng):
    # pointwise along one aggregate history: the same m_k scored against larger z_k
    for _ in range(30):
        ladder, y, cv = random_instance(model, rng)
        weak = weak_estimates(model, ladder, y)
        _, m, gamma = aggregate_path(model, weak, ladder.N, cv.z, PL)
        bigger = cv.z * rng.uniform(1.0, 3.0, cv.K)
        assert np.all(agg_kernel_eval(PL, m / bigger) >= gamma)


def test_deterministic(rng):
    ladder, y, cv = random_instance(MODELS["poisson"], rng)
    a = ssa_estimate(MODELS["poisson"], ladder, y, PL, cv)[1]
    b = ssa_estimate(MODELS["poisson"], ladder, y, PL, cv)[1]
    assert a.gamma_profile_hash() == b.gamma_profile_hash()
    np.testing.assert_array_equal(a.theta_agg, b.theta_agg)


def test_batched_path_matches_single_runs(rng):
    model = MODELS["bernoulli"]
    weak = model.clip(rng.uniform(0, 1, (25, 8)))
    N = np.arange(1, 9) * 5.0
    z = np.linspace(3, 0.5, 8)
    agg, _, _ = aggregate_path(model, weak, N, z, PL)
    for i in range(25):
        np.testing.assert_array_equal(agg[i], aggregate_path(model, weak[i], N, z, PL)[0])


# -- model-selection mode ---------------------------------------------------

def test_uniform_kernel_returns_a_weak_estimate(model, rng):
    for _ in range(100):
        ladder, y, cv = random_instance(model, rng)
        theta, tr = ssa_estimate(model, ladder, y, UNIFORM, cv)
        k = ssa_selected_index(tr, UNIFORM)
        assert theta == tr.theta_weak[k - 1]


def test_selected_index_edge_cases():
    model = ExpFamModel.gaussian()
    agg, m, g = aggregate_path(model, [0.0, 0.0, 0.0], [1.0, 2.0, 3.0], [1.0, 1.0, 1.0], UNIFORM)
    tr = SSATrace(np.zeros(3), agg, m, g, np.array([1.0, 2.0, 3.0]))
    assert ssa_selected_index(tr, UNIFORM) == 3
    agg, m, g = aggregate_path(model, [0.0, 5.0, 5.0], [1.0, 2.0, 3.0], [1.0, 1.0, 1.0], UNIFORM)
    tr = SSATrace(np.array([0.0, 5.0, 5.0]), agg, m, g, np.array([1.0, 2.0, 3.0]))
    assert ssa_selected_index(tr, UNIFORM) == 1
    assert ssa_selected_index(tr, PL) is None


# -- stability --------------------------------------------------------------

def test_stability_bounds_hold(model, rng):
    for _ in range(200):
        ladder, y, cv = random_instance(model, rng)
        _, tr = ssa_estimate(model, ladder, y, PL, cv)
        rep = check_stability(model, tr, cv, kappa(model), ladder.u)
        assert rep.step_violations == 0
        assert rep.pair_violations == 0


def test_constant_data_stability_is_zero():
    model = ExpFamModel.gaussian()
    X = np.arange(30, dtype=float)[:, None] + np.linspace(0, 0.1, 30)[:, None]
    ladder = build_ladder([0.0], X, LadderConfig(K=4, N1=2, NK=20))
    cv = CriticalValues.constant(1.0, 4)
    _, tr = ssa_estimate(model, ladder, np.ones(30), PL, cv)
    rep = check_stability(model, tr, cv, 1.0, ladder.u)
    assert np.all(rep.step_lhs == 0) and np.all(rep.pair_lhs == 0)


def test_one_step_bound_from_definition(rng):
    # N_k K(agg_k, agg_{k-1}) recomputed with the public kl
    model = MODELS["bernoulli"]
    ladder, y, cv = random_instance(model, rng)
    _, tr = ssa_estimate(model, ladder, y, PL, cv)
    for k in range(1, tr.K):
        assert tr.N[k] * kl(model, tr.theta_agg[k], tr.theta_agg[k - 1]) <= cv.z[k] * (1 + 1e-9)


def test_critical_values_reject_nonpositive():
    with pytest.raises(ValueError):
        CriticalValues(np.array([1.0, 0.0]), 0.0, 1.0)


def test_affine_critical_values():
    cv = CriticalValues.affine(0.0031, 0.007, 30)
    assert cv.z[-1] == pytest.approx(0.0031)
    assert cv.z[0] == pytest.approx(0.0031 + 0.007 * 29)
