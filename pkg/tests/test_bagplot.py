import numpy as np
import pytest

from robust_reserving.bagplot import (
    adjust_bd_limited,
    adjust_bd_unbounded,
    adjust_to_polytope,
    bagdistance,
    bd_shrink_factor,
    bd_threshold,
    build_bagplot,
    chi_fence_factor,
    detect_bd,
    huber_bd_loss,
)
from robust_reserving.geometry import ray_clip, scale_polytope


def random_cloud(seed: int, n: int = 40, p: int = 2) -> np.ndarray:
    rng = np.random.default_rng(seed)
    x = rng.standard_t(3, size=(n, p))
    x[: max(1, n // 20)] *= 8
    return x


def test_default_fence_factor():
    assert chi_fence_factor(2) == pytest.approx(np.sqrt(9.21034), abs=1e-5)
    assert chi_fence_factor(2) == pytest.approx(3.0349, abs=1e-4)


def test_bd_cutoff_at_fence_factor_matches_fence_flags():
    mismatches = 0
    for seed in range(200):
        x = random_cloud(seed, n=30 if seed % 4 else 15, p=2 if seed % 5 else 3)
        model = build_bagplot(x)
        flags = detect_bd(bagdistance(x, model), model.fence_factor)
        mismatches += not np.array_equal(flags, model.flags)
    assert mismatches == 0


def test_bd_at_center_and_on_bag():
    x = random_cloud(1)
    model = build_bagplot(x)
    assert bagdistance(model.center[None, :], model).bd[0] == 0.0
    on_bag = model.bag.vertices
    np.testing.assert_allclose(bagdistance(on_bag, model).bd, 1.0, atol=1e-9)


def test_bd_is_rotation_and_scale_invariant():
    x = random_cloud(2)
    bd = bagdistance(x, build_bagplot(x)).bd
    a = 0.7
    R = 3.5 * np.array([[np.cos(a), -np.sin(a)], [np.sin(a), np.cos(a)]])
    y = x @ R.T + np.array([1.0, -2.0])
    np.testing.assert_allclose(bagdistance(y, build_bagplot(y)).bd, bd, rtol=1e-9)


def test_huge_cutoff_flags_nothing():
    x = random_cloud(3)
    assert not detect_bd(bagdistance(x, build_bagplot(x)), 1e12).any()


def test_fence_adjustment_lands_inside_fence():
    x = random_cloud(4)
    model = build_bagplot(x)
    assert model.flags.any()
    adj = adjust_to_polytope(x, model.fence, model.flags, model.center)
    assert np.all(bagdistance(adj, model).bd <= model.fence_factor + 1e-9)
    np.testing.assert_array_equal(adj[~model.flags], x[~model.flags])


def test_adjust_point_at_twice_fence():
    x = random_cloud(5)
    model = build_bagplot(x)
    edge = ray_clip(model.fence, model.center, model.center + np.array([1.0, 0.3]))
    far = model.center + 2 * (edge - model.center)
    adj = adjust_to_polytope(far[None, :], model.fence, np.array([True]), model.center)
    np.testing.assert_allclose(adj[0], edge, atol=1e-9)


def test_no_flags_leaves_panel_unchanged():
    x = random_cloud(6)
    model = build_bagplot(x)
    np.testing.assert_array_equal(adjust_to_polytope(x, model.fence, np.zeros(len(x), bool)), x)


def test_bd_adjustment_to_fence_equals_bagplot_fence():
    x = random_cloud(7)
    model = build_bagplot(x)
    scores = bagdistance(x, model)
    f = model.fence_factor
    bd_way = model.center + np.where(scores.bd > f, f / np.where(scores.bd > 0, scores.bd, 1), 1)[:, None] * (
        x - model.center
    )
    np.testing.assert_allclose(bd_way, adjust_to_polytope(x, model.fence, model.flags, model.center), atol=1e-9)


def test_theta_value():
    f = 3.0349
    assert bd_threshold(f) == pytest.approx((6.0698 + np.sqrt(13.1396) + 1) / 2, abs=1e-4)
    assert bd_threshold(f) == pytest.approx(5.347, abs=1e-3)
    t = bd_threshold(f)
    assert (f + np.sqrt(t)) / t == pytest.approx(1.0, abs=1e-12)


def test_shrink_factor_branches():
    f = 3.0349
    g = bd_shrink_factor(np.array([0.5, 4.0, 10.0]), f)
    assert g[0] == 1.0
    assert g[1] == pytest.approx(f / 4, abs=1e-12) and g[1] == pytest.approx(0.7587, abs=1e-4)
    assert g[2] == pytest.approx((f + np.sqrt(10)) / 10) and g[2] == pytest.approx(0.6197, abs=1e-4)
    assert 10 * g[2] > f


def test_shrink_factor_is_continuous_at_fence():
    f = chi_fence_factor(2)
    lo, hi = bd_shrink_factor(np.array([f - 1e-12, f + 1e-12]), f)
    assert abs(lo - hi) < 1e-9


def test_shrink_factor_is_continuous_at_theta():
    # f / theta on the left meets (f + sqrt(theta)) / theta = 1 on the right only if theta = f
    f = chi_fence_factor(2)
    t = bd_threshold(f)
    lo, hi = bd_shrink_factor(np.array([t - 1e-12, t + 1e-12]), f)
    assert abs(lo - hi) < 1e-9


def test_limited_shrinkage():
    f, u = chi_fence_factor(2), 15.0
    g = bd_shrink_factor(np.array([4.0, 10.0, 15.7549]), f, u)
    np.testing.assert_allclose(g[:2], bd_shrink_factor(np.array([4.0, 10.0]), f))
    assert 15.7549 * g[2] == pytest.approx(f)
    np.testing.assert_allclose(bd_shrink_factor(np.array([4.0, 50.0]), f, 1e9), bd_shrink_factor(np.array([4.0, 50.0]), f))
    with pytest.raises(ValueError):
        bd_shrink_factor(np.array([1.0]), f, u=f)


def test_bd_adjustments_preserve_rays():
    x = random_cloud(8)
    model = build_bagplot(x)
    scores = bagdistance(x, model)
    f = model.fence_factor
    for adj in (adjust_bd_unbounded(x, scores, f, model.center), adjust_bd_limited(x, scores, f, 15.0, model.center)):
        a, b = adj - model.center, x - model.center
        assert np.max(np.abs(a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0])) <= 1e-9 * max(1, np.abs(b).max() ** 2)


def test_all_inside_fence_is_unchanged():
    x = random_cloud(9)
    model = build_bagplot(x)
    inside = x[~model.flags]
    scores = bagdistance(inside, model)
    np.testing.assert_array_equal(adjust_bd_limited(inside, scores, model.fence_factor, 15.0, model.center), inside)


def test_huber_loss():
    c = 2.0
    assert huber_bd_loss(0.0, c) == 0.0
    assert huber_bd_loss(c, c) == pytest.approx(0.5 * c * c)
    assert huber_bd_loss(2 * c, c) == pytest.approx(1.5 * c * c)
    eps = 1e-7
    slope = (huber_bd_loss(c + eps, c) - huber_bd_loss(c - eps, c)) / (2 * eps)
    assert slope == pytest.approx(c, rel=1e-6)


def test_fence_is_dilated_bag():
    x = random_cloud(10)
    model = build_bagplot(x, fence_factor=3.0)
    np.testing.assert_allclose(model.fence.vertices, scale_polytope(model.bag, 3.0).vertices)
    assert model.loop.contains(x[~model.flags]).all()


def test_normal_cloud_flags_only_beyond_fence(rng):
    x = rng.normal(size=(55, 2))
    model = build_bagplot(x)
    bd = bagdistance(x, model).bd
    assert not model.flags[bd <= model.fence_factor].any()
    assert model.flags.sum() <= 3
