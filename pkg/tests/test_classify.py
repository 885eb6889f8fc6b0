import math

import numpy as np
import pytest

from ssa.aggregate import AggKernel, CriticalValues
from ssa.classify import (
    EXAMPLE41,
    EXAMPLE41_BAYES_ERROR,
    BenchmarkSettings,
    LabeledSample,
    MixtureComponent,
    MixtureSpec,
    bayes_posterior,
    bayes_rule,
    benchmark_example,
    kernel_classifier,
    kernel_estimate,
    knn_classifier,
    knn_estimate,
    labels_from_theta,
    loo_cv,
    loo_cv_table,
    mixture_density,
    misclassification_error,
    simulate_example41,
    simulate_example42,
    ssa_classifier,
    ssa_classifier_factory,
    ssa_predict,
    weak_rows,
)
from ssa.expfam import ExpFamModel, weighted_mle
from ssa.localize import LadderConfig, weights_bandwidth, weights_knn

BERN = ExpFamModel.bernoulli()
PL = AggKernel()


@pytest.fixture(scope="module")
def small41():
    return simulate_example41(40, seed=5)


# -- weak estimates ---------------------------------------------------------

def test_knn_estimate_clipped_example():
    s = LabeledSample(np.array([[0.0], [1.0], [2.0]]), np.array([1, 1, 0]))
    assert knn_estimate([0.4], s, 2) == 1 - 1e-6


def test_knn_estimate_trivial_cases(small41):
    assert knn_estimate([0.3, 0.1], small41, small41.n) == pytest.approx(small41.y.mean())
    j = 7
    assert knn_estimate(small41.X[j], small41, 1) == BERN.clip(small41.y[j])


def test_knn_estimate_matches_weights_composition(small41, rng):
    for _ in range(30):
        x = rng.normal(size=2)
        k = int(rng.integers(1, small41.n + 1))
        w, _ = weights_knn(x, small41.X, k, "uniform")
        assert knn_estimate(x, small41, k) == weighted_mle(BERN, w, small41.y)[0]


def test_kernel_estimate_matches_weights_composition(small41, rng):
    for _ in range(30):
        x = rng.normal(size=2)
        h = float(rng.uniform(0.5, 3.0))
        w = weights_bandwidth(x, small41.X, h, "epanechnikov")
        if w.sum() == 0:
            continue
        assert kernel_estimate(x, small41, h) == weighted_mle(BERN, w, small41.y)[0]


def test_kernel_estimate_trivial_cases(small41):
    assert kernel_estimate([0, 0], small41, 1e6, "uniform") == pytest.approx(small41.y.mean())
    s = LabeledSample(np.array([[0.0], [5.0]]), np.array([1, 0]))
    assert kernel_estimate([0.1], s, 1.0) == 1 - 1e-6


# -- Bayes rule and simulators ----------------------------------------------

def test_bayes_at_origin_is_a_tie():
    label, post = bayes_rule([0.0, 0.0])
    assert post == pytest.approx(0.5, abs=1e-15)
    assert label == 1
    # both class densities equal e^{-1}/pi there
    assert mixture_density(EXAMPLE41.class0, [[0, 0]])[0] == pytest.approx(math.exp(-1) / math.pi)


def test_bayes_far_right_is_class0():
    label, post = bayes_rule([5.0, 0.0])
    assert post < 0.5 and label == 0


def test_bayes_certain_prior():
    spec = MixtureSpec(EXAMPLE41.class0, EXAMPLE41.class1, (0.0, 1.0))
    assert np.all(bayes_posterior(np.random.default_rng(0).normal(size=(20, 2)), spec) == 1.0)


def test_bayes_swap_symmetry(rng):
    X = rng.normal(scale=2, size=(100, 2))
    np.testing.assert_allclose(bayes_posterior(X) + bayes_posterior(X, EXAMPLE41.swapped()), 1.0)


def test_mixture_spec_validation():
    with pytest.raises(ValueError):
        MixtureSpec((MixtureComponent(0.5, (0.0,), 1.0),), (MixtureComponent(1.0, (0.0,), 1.0),))
    with pytest.raises(ValueError):
        MixtureSpec((MixtureComponent(1.0, (0.0,), 0.0),), (MixtureComponent(1.0, (0.0,), 1.0),))


def test_simulator_shapes_and_determinism():
    s = simulate_example41(30, seed=1)
    assert s.X.shape == (60, 2) and s.y.sum() == 30
    np.testing.assert_array_equal(s.X, simulate_example41(30, seed=1).X)
    assert not np.array_equal(s.X, simulate_example41(30, seed=2).X)


def test_example41_class_means():
    n = 20000
    s = simulate_example41(n, seed=11)
    # class-0 mean (0.6, 0); per-coordinate variance 0.5 + mixture spread 0.64 on x1
    m0 = s.X[s.y == 0].mean(axis=0)
    m1 = s.X[s.y == 1].mean(axis=0)
    assert abs(m0[0] - 0.6) < 3 * math.sqrt(1.14 / n)
    assert abs(m0[1]) < 3 * math.sqrt(0.5 / n)
    assert abs(m1[0]) < 3 * math.sqrt(0.5 / n)
    assert abs(m1[1]) < 3 * math.sqrt(1.5 / n)


def test_example42_extends_example41():
    a = simulate_example41(50, seed=9)
    b = simulate_example42(50, seed=9)
    assert b.d == 10
    np.testing.assert_array_equal(b.X[:, :2], a.X)
    np.testing.assert_array_equal(b.y, a.y)
    big = simulate_example42(5000, seed=3)
    for c in (0, 1):
        assert np.all(np.abs(big.X[big.y == c, 2:].mean(axis=0)) < 4 / math.sqrt(5000))


def test_labeled_sample_rejects_bad_labels():
    with pytest.raises(ValueError):
        LabeledSample(np.zeros((2, 1)), np.array([0, 2]))


# -- error harnesses --------------------------------------------------------

def test_misclassification_trivial(small41):
    assert misclassification_error(lambda X: small41.y, small41).error_rate == 0.0
    assert misclassification_error(lambda X: np.ones(len(X), int), small41).error_rate == 0.5


def test_bayes_error_reproducible():
    # the stored constant is a 10^6-point estimate; fresh 10^5-point draws agree
    for seed in (1, 2):
        test = simulate_example41(50000, seed=seed)
        rep = misclassification_error(lambda X: labels_from_theta(bayes_posterior(X)), test)
        assert abs(rep.error_rate - EXAMPLE41_BAYES_ERROR) < 0.005


def test_loo_one_nn_on_duplicates():
    X = np.repeat(np.array([[0.0], [3.0], [7.0]]), 2, axis=0)
    s = LabeledSample(X, np.array([0, 0, 1, 1, 0, 0]))
    assert loo_cv(knn_classifier(1), s).error_rate == 0.0


def test_loo_k_n_minus_one_is_global_majority():
    rng = np.random.default_rng(4)
    s = LabeledSample(rng.normal(size=(21, 2)), np.array([1] * 11 + [0] * 10))
    # without a class-1 point the remaining 20 tie at 0.5 and vote 1; without a class-0 point 11/20 vote 1
    rep = loo_cv(knn_classifier(20), s)
    assert rep.error_rate == pytest.approx(10 / 21)


def test_loo_table_matches_explicit_loop(small41):
    cfg = LadderConfig(K=6, N1=3, NK=40)
    cv = CriticalValues.affine(0.8, 0.2, 6)
    rows = loo_cv_table(small41, [1, 5, 15], [0.4, 1.0], cfg, PL, cv)
    got = {(r.method, r.param): r.mean_error for r in rows}
    for k in (1, 5, 15):
        assert got[("knn", str(k))] == loo_cv(knn_classifier(k), small41).error_rate
    for h in (0.4, 1.0):
        assert got[("kernel", f"{h:.6g}")] == loo_cv(kernel_classifier(h), small41).error_rate
    assert got[("ssa", "")] == loo_cv(ssa_classifier_factory(cfg, PL, cv), small41).error_rate


# -- the aggregated classifier ----------------------------------------------

def test_all_ones_gives_label_one(rng):
    s = LabeledSample(rng.normal(size=(50, 2)), np.ones(50, int))
    label, theta, _ = ssa_classifier([3.0, -2.0], s, LadderConfig(K=5, N1=3, NK=40), PL,
                                     CriticalValues.affine(0.5, 0.1, 5))
    assert label == 1 and theta == 1 - 1e-6


def test_huge_critical_values_give_widest_knn(small41, rng):
    cfg = LadderConfig(K=6, N1=3, NK=50)
    cv = CriticalValues.constant(1e15, 6)
    for x in rng.normal(size=(20, 2)):
        _, theta, _ = ssa_classifier(x, small41, cfg, PL, cv)
        assert theta == knn_estimate(x, small41, 50)


def test_batched_prediction_matches_pointwise(small41, rng):
    cfg = LadderConfig(K=8, N1=3, NK=60)
    cv = CriticalValues.affine(0.4, 0.3, 8)
    Xq = rng.normal(size=(25, 2))
    batched = ssa_predict(Xq, small41, cfg, PL, cv)
    single = [ssa_classifier(x, small41, cfg, PL, cv)[1] for x in Xq]
    np.testing.assert_array_equal(batched, single)


def test_batched_loo_matches_pointwise(small41):
    cfg = LadderConfig(K=5, N1=3, NK=30)
    cv = CriticalValues.affine(0.4, 0.3, 5)
    batched = ssa_predict(small41.X, small41, cfg, PL, cv, exclude_self=True)[:10]
    single = [ssa_classifier(small41.X[i], small41.without(i), cfg, PL, cv)[1] for i in range(10)]
    np.testing.assert_array_equal(batched, single)


def test_class_swap_flips_estimate(small41, rng):
    cfg = LadderConfig(K=8, N1=3, NK=60)
    cv = CriticalValues.affine(0.4, 0.3, 8)
    flipped = LabeledSample(small41.X, 1 - small41.y)
    Xq = rng.normal(size=(30, 2))
    a = ssa_predict(Xq, small41, cfg, PL, cv)
    b = ssa_predict(Xq, flipped, cfg, PL, cv)
    np.testing.assert_allclose(a + b, 1.0, atol=1e-9)


def test_half_is_labelled_one():
    assert labels_from_theta([0.5, 0.4999999]).tolist() == [1, 0]


# -- benchmark --------------------------------------------------------------

def test_benchmark_is_reproducible_and_bayes_wins():
    settings = BenchmarkSettings(ladder=LadderConfig(K=6, N1=3, NK=60), bandwidths=[0.5, 1.0],
                                 replicates=1000, seed=2)
    cv = CriticalValues.affine(0.5, 0.2, 6)
    rows, _ = benchmark_example("example41", 4, 40, 200, settings, cv)
    again, _ = benchmark_example("example41", 4, 40, 200, settings, cv)
    assert rows == again
    bayes = next(r for r in rows if r.method == "bayes")
    for r in rows:
        assert bayes.mean_error <= r.mean_error + 2 * math.hypot(r.stderr, bayes.stderr)
    assert {r.method for r in weak_rows(rows)} == {"knn", "kernel"}
