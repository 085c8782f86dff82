import numpy as np
import pytest

from robust_reserving.errors import DegenerateGeometryError
from robust_reserving.geometry import (
    chebyshev_center,
    convex_hull,
    halfspace_polytope,
    ray_clip,
    scale_polytope,
    solid_centroid,
)

SQUARE = np.array([[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]])


def test_triangle_hull_is_itself():
    pts = np.array([[0.0, 0.0], [2.0, 0.0], [0.5, 1.5]])
    poly = convex_hull(pts)
    assert {tuple(v) for v in poly.vertices} == {tuple(v) for v in pts}


def test_hull_contains_all_points(rng):
    for p in (2, 3):
        pts = rng.normal(size=(100, p))
        assert convex_hull(pts).contains(pts).all()


def test_collinear_hull_rejected():
    with pytest.raises(DegenerateGeometryError):
        convex_hull(np.c_[np.arange(5.0), 2 * np.arange(5.0)])


def test_scale_square():
    poly = convex_hull(SQUARE, center=np.zeros(2))
    assert scale_polytope(poly, 1.0).vertices == pytest.approx(poly.vertices)
    big = scale_polytope(poly, 3.0)
    assert np.abs(big.vertices).max() == pytest.approx(3.0)
    assert big.volume() == pytest.approx(36.0)
    back = scale_polytope(scale_polytope(poly, 0.5), 2.0)
    np.testing.assert_allclose(back.vertices, poly.vertices, atol=1e-12)
    np.testing.assert_allclose(back.equations, poly.equations, atol=1e-12)


def test_scale_rejects_non_positive():
    with pytest.raises(ValueError):
        scale_polytope(convex_hull(SQUARE), 0.0)


def test_ray_clip_square():
    poly = convex_hull(SQUARE, center=np.zeros(2))
    np.testing.assert_allclose(ray_clip(poly, np.zeros(2), np.array([5.0, 0.0])), [1.0, 0.0])
    with pytest.raises(ValueError):
        ray_clip(poly, np.zeros(2), np.zeros(2))


def test_ray_clip_matches_dense_sampling(rng):
    k = 9
    ang = 2 * np.pi * np.arange(k) / k
    poly = convex_hull(np.c_[np.cos(ang), np.sin(ang)], center=np.zeros(2))
    for _ in range(20):
        origin = rng.uniform(-0.3, 0.3, 2)
        through = rng.normal(size=2) * 3
        hit = ray_clip(poly, origin, through)
        t = np.linspace(0, 1, 200001)
        ray = origin + np.outer(t, through - origin)
        inside = poly.contains(ray, tol=0)
        last = ray[np.flatnonzero(inside)[-1]]
        assert np.linalg.norm(hit - last) < 1e-4
        # on the boundary and on the ray
        slack = poly.equations[:, :-1] @ hit + poly.equations[:, -1]
        assert abs(slack.max()) < 1e-9
        d1, d2 = hit - origin, through - origin
        assert abs(d1[0] * d2[1] - d1[1] * d2[0]) < 1e-9 * np.linalg.norm(d2) ** 2


def test_ray_clip_in_3d(rng):
    cube = np.array([[x, y, z] for x in (-1, 1) for y in (-1, 1) for z in (-1, 1)], dtype=float)
    poly = convex_hull(cube, center=np.zeros(3))
    np.testing.assert_allclose(ray_clip(poly, np.zeros(3), np.array([4.0, 2.0, 0.0])), [1.0, 0.5, 0.0])


def test_centroids():
    np.testing.assert_allclose(solid_centroid(SQUARE + 3), [3.0, 3.0], atol=1e-12)
    tetra = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]], dtype=float)
    np.testing.assert_allclose(solid_centroid(tetra), [0.25, 0.25, 0.25], atol=1e-12)
    np.testing.assert_allclose(solid_centroid(np.array([[0.0, 0.0], [2.0, 2.0]])), [1.0, 1.0])


def test_halfspace_polytope_square():
    a = np.array([[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]])
    poly = halfspace_polytope(a, np.ones(4))
    assert poly.volume() == pytest.approx(4.0)
    center, r = chebyshev_center(a, np.ones(4))
    np.testing.assert_allclose(center, 0, atol=1e-9)
    assert r == pytest.approx(1.0)


def test_halfspace_polytope_constraint_generation(rng):
    # many redundant tangent constraints of the unit disc trigger the active-set path
    ang = rng.uniform(0, 2 * np.pi, 3000)
    a = np.c_[np.cos(ang), np.sin(ang)]
    poly = halfspace_polytope(a, np.ones(len(a)))
    slack = poly.vertices @ a.T - 1
    assert slack.max() < 1e-9
    assert poly.volume() == pytest.approx(np.pi, rel=1e-3)


def test_empty_halfspace_intersection():
    a = np.array([[1.0, 0.0], [-1.0, 0.0]])
    assert chebyshev_center(np.r_[a, [[0.0, 1.0], [0.0, -1.0]]], np.array([-1.0, -1.0, 1.0, 1.0])) is None
    with pytest.raises(DegenerateGeometryError):
        halfspace_polytope(np.r_[a, [[0.0, 1.0], [0.0, -1.0]]], np.array([-1.0, -1.0, 1.0, 1.0]))
