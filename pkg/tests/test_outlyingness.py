import numpy as np
import pytest

from robust_reserving.errors import DataError
from robust_reserving.outlyingness import (
    adjusted_boxplot_fences,
    adjusted_boxplot_whiskers,
    ao_adjust,
    ao_cutoff_chi,
    ao_cutoff_traditional,
    ao_scores,
    build_ao_model,
    medcouple,
    sample_directions,
    univariate_ao,
)

from oracles import brute_medcouple


def test_medcouple_small_example():
    assert medcouple(np.array([1, 2, 3, 7, 20])) == pytest.approx(0.6, abs=1e-15)
    assert brute_medcouple([1, 2, 3, 7, 20]) == pytest.approx(0.6, abs=1e-15)


def test_symmetric_sample_has_zero_medcouple():
    assert medcouple(np.array([-3.0, -1.0, 0.0, 1.0, 3.0])) == 0.0
    assert medcouple(np.array([-2.0, -1.0, 1.0, 2.0])) == 0.0


@pytest.mark.parametrize("seed", range(60))
def test_medcouple_equals_pairwise_enumeration(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(3, 51))
    x = rng.lognormal(size=n) if seed % 3 else rng.integers(0, 6, size=n).astype(float)
    if x.min() == x.max():
        x[0] += 1
    assert medcouple(x) == brute_medcouple(x)


def test_medcouple_sign_equivariance(rng):
    for _ in range(20):
        x = rng.gamma(2.0, size=int(rng.integers(5, 40)))
        assert medcouple(-x) == pytest.approx(-medcouple(x), abs=1e-14)


def test_medcouple_rejects_degenerate():
    with pytest.raises(DataError):
        medcouple(np.ones(5))
    with pytest.raises(DataError):
        medcouple(np.array([1.0, 2.0]))


def test_symmetric_whiskers():
    x = np.array([-2.0, -1.0, 0.0, 1.0, 2.0])
    assert adjusted_boxplot_whiskers(x, "fence") == pytest.approx((-4.0, 4.0))
    assert adjusted_boxplot_whiskers(x, "data") == pytest.approx((-2.0, 2.0))


def test_zero_medcouple_gives_tukey_fences(rng):
    x = np.r_[-rng.gamma(2, size=20), rng.gamma(2, size=20)]
    x = np.r_[x, -x]
    q1, q3 = np.quantile(x, [0.25, 0.75])
    assert adjusted_boxplot_fences(x) == pytest.approx((q1 - 1.5 * (q3 - q1), q3 + 1.5 * (q3 - q1)))


def test_right_skew_stretches_upper_fence(rng):
    x = rng.lognormal(sigma=1.0, size=200)
    q1, q3 = np.quantile(x, [0.25, 0.75])
    lo, hi = adjusted_boxplot_fences(x)
    assert medcouple(x) > 0
    assert hi - q3 > 1.5 * (q3 - q1) and q1 - lo < 1.5 * (q3 - q1)


def test_univariate_ao_values():
    x = np.array([-2.0, -1.0, 0.0, 1.0, 2.0])
    assert univariate_ao(0.0, x, "fence") == 0.0
    assert univariate_ao(2.0, x, "fence") == pytest.approx(0.5)
    assert univariate_ao(4.0, x, "fence") == pytest.approx(1.0)
    assert univariate_ao(-4.0, x, "fence") == pytest.approx(1.0)


def test_univariate_ao_is_monotone(rng):
    x = rng.lognormal(size=50)
    med = np.median(x)
    w2 = adjusted_boxplot_whiskers(x, "fence")[1]
    grid = np.linspace(med, w2, 50)
    ao = univariate_ao(grid, x, "fence")
    assert np.all(np.diff(ao) > 0) and ao[0] == 0 and ao[-1] == pytest.approx(1.0)


def test_ao_scores_reproducible_and_nested(rng):
    x = rng.standard_t(4, size=(60, 2))
    a, b = ao_scores(x, m=200, seed=3), ao_scores(x, m=200, seed=3)
    np.testing.assert_array_equal(a.ao, b.ao)
    small = ao_scores(x, m=50, seed=3)
    np.testing.assert_array_equal(small.directions, a.directions[:50])
    assert np.all(a.ao >= small.ao)


def test_direction_sampling_validates():
    with pytest.raises(ValueError):
        sample_directions(np.zeros((5, 2)), 0, 0)
    with pytest.raises(DataError):
        sample_directions(np.zeros((2, 2)), 5, 0)


def test_ao_affine_flag_stability():
    stable = 0
    trials = 20
    for seed in range(trials):
        rng = np.random.default_rng(seed)
        x = rng.standard_t(3, size=(55, 2))
        x[:3] += 15
        A = rng.normal(size=(2, 2)) + 2 * np.eye(2)
        y = x @ A.T + rng.normal(size=2)
        f1 = ao_scores(x, seed=0).ao > ao_cutoff_traditional(ao_scores(x, seed=0))
        s2 = ao_scores(y, seed=0)
        stable += np.array_equal(f1, s2.ao > ao_cutoff_traditional(s2))
    assert stable >= 0.9 * trials


def test_point_at_ao_median_is_least_outlying(rng):
    x = rng.normal(size=(40, 2))
    s = ao_scores(x, seed=1)
    x2 = np.r_[x, x[s.median_index][None, :]]
    s2 = ao_scores(x2, seed=1)
    assert s2.ao[-1] <= s2.ao.min() + 1e-12


def test_cutoffs():
    scores = np.r_[np.linspace(1.0, 2.0, 30), 50.0]
    assert (scores > ao_cutoff_traditional(scores)).sum() == 1
    sym = np.array([1.0, 2.0, 3.0, 4.0, 5.0])
    q1, q3 = np.quantile(sym, [0.25, 0.75])
    assert ao_cutoff_traditional(sym) == pytest.approx(q3 + 1.5 * (q3 - q1))
    assert ao_cutoff_chi(np.ones(5), 2) == pytest.approx(3.0349, abs=1e-4)
    assert ao_cutoff_chi(2 * scores, 2) == pytest.approx(2 * ao_cutoff_chi(scores, 2))


def test_ao_adjust_to_loop():
    rng = np.random.default_rng(4)
    x = rng.normal(size=(50, 2))
    x[0] = [60.0, 45.0]
    s = ao_scores(x, seed=0)
    model = build_ao_model(x, s)
    assert model.flags[0]
    np.testing.assert_array_equal(ao_adjust(x, model, np.zeros(50, bool)), x)
    adj = ao_adjust(x, model, model.flags)
    a, b = adj - model.center, x - model.center
    assert np.max(np.abs(a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0])) < 1e-9 * np.abs(b).max() ** 2
    assert model.loop.contains(adj).all()
    # a flagged row that already sits on the loop stays put
    again = ao_adjust(adj, model, model.flags)
    np.testing.assert_allclose(again, adj, atol=1e-9)
    with pytest.raises(ValueError):
        ao_adjust(x, model, model.flags, target="fence")
