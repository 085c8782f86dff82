"""Exact halfspace (Tukey) depth in two and three dimensions, depth regions and the bag.

Depth uses closed halfspaces: a sample point lying on the boundary hyperplane counts, and
sample points equal to the query point always count.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from .errors import DegenerateGeometryError
from .geometry import (
    Polytope,
    chebyshev_center,
    convex_hull,
    halfspace_polytope,
    ray_exit_parameter,
    solid_centroid,
)

_ANGLE_TOL = 1e-10
_TWO_PI = 2 * np.pi
_HALF_PI = np.pi / 2


def _open_arc_min(angles: np.ndarray) -> int:
    """Minimum over generic unit vectors u of #{k : u . d_k > 0}, d_k at the given angles."""
    m = len(angles)
    if m == 0:
        return 0
    a = np.sort(np.mod(angles, _TWO_PI))
    crit = np.sort(np.mod(np.r_[a + _HALF_PI, a - _HALF_PI], _TWO_PI))
    gaps = np.diff(np.r_[crit, crit[0] + _TWO_PI])
    keep = gaps > _ANGLE_TOL
    if not np.any(keep):
        return 0
    mids = crit[keep] + gaps[keep] / 2
    wrapped = np.r_[a - _TWO_PI, a, a + _TWO_PI]
    lo = np.searchsorted(wrapped, mids - _HALF_PI, side="right")
    hi = np.searchsorted(wrapped, mids + _HALF_PI, side="left")
    return int(np.min(hi - lo))


def _split_coincident(x: np.ndarray, cloud: np.ndarray) -> tuple[int, np.ndarray]:
    d = cloud - x
    scale = max(1.0, float(np.max(np.abs(cloud))), float(np.max(np.abs(x))))
    same = np.linalg.norm(d, axis=1) <= 1e-12 * scale
    return int(same.sum()), d[~same]


def _depth_vectors(d: np.ndarray) -> int:
    """Open-halfspace minimum for nonzero direction vectors d (rows), any dimension <= 3."""
    m, p = d.shape
    if m == 0:
        return 0
    if p == 1:
        return int(min(np.sum(d[:, 0] > 0), np.sum(d[:, 0] < 0)))
    _, sv, vt = np.linalg.svd(d, full_matrices=False)
    rank = int(np.sum(sv > 1e-10 * sv[0]))
    if rank < p:
        return _depth_vectors(d @ vt[:rank].T)
    if p == 2:
        return _open_arc_min(np.arctan2(d[:, 1], d[:, 0]))
    return _depth_vectors_3d(d)


def _plane_bases(unit: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    helper = np.eye(3)[np.argmin(np.abs(unit), axis=1)]
    a = np.cross(unit, helper)
    a /= np.linalg.norm(a, axis=1)[:, None]
    return a, np.cross(unit, a)


def _depth_vectors_3d(d: np.ndarray) -> int:
    # The minimum over open cells of the great-circle arrangement is attained next to a
    # vertex u0 = +-(d_i x d_j); walking each circle i in angle order visits all of them.
    # All circles are swept at once: row i of the angle table holds circle i, and a row
    # offset keeps the rows apart in one flat sorted array.
    m = len(d)
    unit = d / np.linalg.norm(d, axis=1)[:, None]
    a, b = _plane_bases(unit)
    ex, ey = a @ unit.T, b @ unit.T  # row i: coordinates of every d_j in circle i's plane
    on_axis = np.hypot(ex, ey) <= 1e-12
    axis_count = on_axis.sum(axis=1)
    ang = np.where(on_axis, np.inf, np.mod(np.arctan2(ey, ex), _TWO_PI))
    srt = np.sort(ang, axis=1)
    valid = np.isfinite(srt)
    # wrapped copies lie in [-2 pi, 4 pi); padding at 7 pi stays clear of every query
    offset = (8 * _TWO_PI * np.arange(m))[:, None]
    wrapped = np.concatenate([srt - _TWO_PI, srt, srt + _TWO_PI], axis=1)
    wrapped = np.where(np.isfinite(wrapped), wrapped, 3.5 * _TWO_PI)
    wrapped = np.sort(wrapped, axis=1) + offset
    flat = wrapped.ravel()
    crit = np.concatenate([srt + _HALF_PI, srt - _HALF_PI], axis=1)
    crit_ok = np.concatenate([valid, valid], axis=1)
    # sorted queries keep the binary searches cache friendly
    crit = np.sort(np.where(crit_ok, np.mod(np.where(crit_ok, crit, 0.0), _TWO_PI), 3.5 * _TWO_PI), axis=1)
    crit_ok = crit < 3 * _TWO_PI
    crit = crit + offset

    def count(v: np.ndarray, side: str) -> np.ndarray:
        return np.searchsorted(flat, v, side=side)

    lo_in = count(crit - _HALF_PI + _ANGLE_TOL, "left")
    hi_in = count(crit + _HALF_PI - _ANGLE_TOL, "right")
    strict = hi_in - lo_in
    on_edge = (
        lo_in
        - count(crit - _HALF_PI - _ANGLE_TOL, "left")
        + count(crit + _HALF_PI + _ANGLE_TOL, "right")
        - hi_in
    )
    boundary = on_edge + axis_count[:, None]
    simple = crit_ok & (boundary <= 2)
    best = int(strict[simple].min()) if np.any(simple) else m
    hard = np.argwhere(crit_ok & ~simple & (strict < best))
    for k in np.argsort(strict[hard[:, 0], hard[:, 1]], kind="stable"):
        i, c = hard[k]
        if strict[i, c] >= best:
            break
        phi = crit[i, c] - offset[i, 0]
        u0 = np.cos(phi) * a[i] + np.sin(phi) * b[i]
        dots = unit @ u0
        tied = np.abs(dots) <= 1e-9
        local = _depth_vectors(unit[tied] - np.outer(dots[tied], u0))
        best = min(best, int(np.sum(dots > 1e-9)) + local)
    return best


def halfspace_depth(x: np.ndarray, cloud: np.ndarray) -> int:
    """Exact closed-halfspace depth of ``x`` with respect to the rows of ``cloud`` (p = 2 or 3)."""
    cloud = np.atleast_2d(np.asarray(cloud, dtype=float))
    x = np.asarray(x, dtype=float)
    if cloud.shape[1] not in (2, 3) or x.shape != (cloud.shape[1],):
        raise ValueError("halfspace_depth supports dimension 2 or 3 only")
    if len(cloud) < 1:
        raise ValueError("empty sample")
    k0, d = _split_coincident(x, cloud)
    return k0 + _depth_vectors(d)


def depths(cloud: np.ndarray, points: np.ndarray | None = None) -> np.ndarray:
    """Depth of every row of ``points`` (default: the cloud itself)."""
    cloud = np.asarray(cloud, dtype=float)
    pts = cloud if points is None else np.atleast_2d(np.asarray(points, dtype=float))
    return np.array([halfspace_depth(x, cloud) for x in pts], dtype=int)


def _candidate_normals(cloud: np.ndarray) -> np.ndarray:
    """Unit normals of all lines (2D) or planes (3D) through p sample points, both signs."""
    n, p = cloud.shape
    if p == 2:
        i, j = np.triu_indices(n, 1)
        e = cloud[j] - cloud[i]
        normals = np.c_[-e[:, 1], e[:, 0]]
    else:
        idx = np.array(list(itertools.combinations(range(n), 3)))
        normals = np.cross(cloud[idx[:, 1]] - cloud[idx[:, 0]], cloud[idx[:, 2]] - cloud[idx[:, 0]])
    norms = np.linalg.norm(normals, axis=1)
    normals = normals[norms > 1e-12 * max(1.0, norms.max())] / norms[norms > 1e-12 * max(1.0, norms.max())][:, None]
    return np.r_[normals, -normals]


RegionMethod = Literal["contour", "hull"]


@dataclass(eq=False)
class DepthIndex:
    """Depths of the sample points plus lazily built depth regions and the Tukey median.

    ``method="contour"`` builds the exact regions D_k = {y : depth(y) >= k} as intersections
    of halfspaces bounded by sample-point lines/planes.  ``method="hull"`` approximates D_k
    by the convex hull of the sample points with depth >= k, which is much cheaper in 3D.
    """

    cloud: np.ndarray
    method: RegionMethod = "contour"
    depths: np.ndarray = field(default=None)
    _regions: dict = field(default_factory=dict, repr=False)
    _median: np.ndarray | None = field(default=None, repr=False)
    _proj: tuple | None = field(default=None, repr=False)

    def __post_init__(self) -> None:
        self.cloud = np.asarray(self.cloud, dtype=float)
        if self.cloud.ndim != 2 or self.cloud.shape[1] not in (2, 3):
            raise ValueError("depth regions are supported in dimension 2 or 3 only")
        if self.method not in ("contour", "hull"):
            raise ValueError(f"unknown region method {self.method!r}")
        if self.depths is None:
            self.depths = depths(self.cloud)

    @property
    def n(self) -> int:
        return len(self.cloud)

    @property
    def max_depth(self) -> int:
        return int(self.depths.max())

    def count(self, k: int) -> int:
        """Number of sample points in D_k."""
        return int(np.sum(self.depths >= k))

    def _projections(self) -> tuple[np.ndarray, np.ndarray]:
        if self._proj is None:
            normals = _candidate_normals(self.cloud)
            proj = np.sort(self.cloud @ normals.T, axis=0)[::-1]  # descending per direction
            self._proj = (normals, proj)
        return self._proj

    def _contour_constraints(self, k: int) -> tuple[np.ndarray, np.ndarray]:
        normals, proj = self._projections()
        q = proj[self.n - k]  # (n-k+1)-th largest projection
        return -normals, -q  # u . y >= q  <=>  -u . y <= -q

    def region(self, k: int) -> Polytope | None:
        """D_k as a full-dimensional polytope, or None if it is empty or degenerate."""
        if k not in self._regions:
            self._regions[k] = self._build_region(k)
        return self._regions[k]

    def _build_region(self, k: int) -> Polytope | None:
        if k < 1:
            raise ValueError("depth level must be >= 1")
        if self.method == "hull":
            pts = self.cloud[self.depths >= k]
            try:
                return convex_hull(pts)
            except DegenerateGeometryError:
                return None
        a, b = self._contour_constraints(k)
        try:
            return halfspace_polytope(a, b)
        except DegenerateGeometryError:
            return None

    def region_points(self, k: int) -> np.ndarray:
        """Vertices of D_k, or a representative point set when D_k is degenerate."""
        poly = self.region(k)
        if poly is not None:
            return poly.vertices
        if self.method == "hull":
            pts = self.cloud[self.depths >= k]
            if len(pts) == 0:
                raise DegenerateGeometryError(f"depth region {k} is empty")
            return np.unique(pts, axis=0)
        cheb = chebyshev_center(*self._contour_constraints(k))
        if cheb is None:
            raise DegenerateGeometryError(f"depth region {k} is empty")
        return cheb[0][None, :]

    def deepest_level(self) -> int:
        """Largest k with D_k non-empty (may exceed the largest sample depth)."""
        if self.method == "hull":
            return self.max_depth
        k = self.max_depth
        while k < self.n and chebyshev_center(*self._contour_constraints(k + 1)) is not None:
            k += 1
        return k

    @property
    def tukey_median(self) -> np.ndarray:
        if self._median is None:
            if self.method == "hull":
                self._median = solid_centroid(self.cloud[self.depths == self.max_depth])
            else:
                k = self.deepest_level()
                poly = self.region(k)
                self._median = poly.centroid() if poly is not None else self.region_points(k).mean(axis=0)
        return self._median


def tukey_median(cloud: np.ndarray, method: RegionMethod = "contour") -> np.ndarray:
    """Centroid of the deepest depth region."""
    cloud = np.asarray(cloud, dtype=float)
    if len(cloud) < cloud.shape[1] + 1:
        raise DegenerateGeometryError("too few points for a Tukey median")
    sv = np.linalg.svd(cloud - cloud.mean(axis=0), compute_uv=False)
    if sv[-1] <= 1e-12 * sv[0]:
        raise DegenerateGeometryError("sample is collinear or coplanar")
    return DepthIndex(cloud, method).tukey_median


def bag_level(index: DepthIndex, n: int | None = None) -> tuple[int, float]:
    """Depth level s with #D_s <= floor(n/2) < #D_{s-1} and the interpolation weight lambda."""
    n = index.n if n is None else n
    if len(np.unique(index.depths)) < 2:
        raise DegenerateGeometryError("all points share one depth; no bag can be interpolated")
    half = n // 2
    s = next(k for k in range(1, index.max_depth + 2) if index.count(k) <= half)
    if s == 1:
        raise DegenerateGeometryError("depth region 1 holds at most half of the sample")
    inner, outer = index.count(s), index.count(s - 1)
    return s, (n / 2 - inner) / (outer - inner)


def _exit_points(poly: Polytope | None, center: np.ndarray, targets: np.ndarray) -> np.ndarray:
    if poly is None:
        return np.repeat(center[None, :], len(targets), axis=0)
    out = []
    for v in targets:
        d = v - center
        out.append(center + ray_exit_parameter(poly, center, d) * d if np.any(d) else center)
    return np.array(out)


def compute_bag(
    index: DepthIndex,
    n: int | None = None,
    interpolation: Literal["radial", "minkowski"] = "radial",
) -> Polytope:
    """Interpolate between D_{s-1} and D_s to obtain the region holding about half the sample.

    ``radial`` moves every vertex of either region along its ray from the Tukey median to
    lambda * (outer crossing) + (1 - lambda) * (inner crossing); ``minkowski`` forms
    lambda * D_{s-1} + (1 - lambda) * D_s about the median (support-function interpolation).
    """
    s, lam = bag_level(index, n)
    t = index.tukey_median
    outer_poly, inner_poly = index.region(s - 1), index.region(s)
    if outer_poly is None:
        raise DegenerateGeometryError(f"depth region {s - 1} has no interior")
    outer = outer_poly.vertices
    inner = index.region_points(s)
    if interpolation == "minkowski":
        pts = (t + lam * (outer[:, None, :] - t) + (1 - lam) * (inner[None, :, :] - t)).reshape(-1, t.size)
    elif interpolation == "radial":
        if inner_poly is not None and not inner_poly.contains(t[None, :], tol=-1e-9)[0]:
            raise DegenerateGeometryError("Tukey median is not interior to the inner depth region")
        from_outer = lam * outer + (1 - lam) * _exit_points(inner_poly, t, outer)
        from_inner = lam * _exit_points(outer_poly, t, inner) + (1 - lam) * inner
        pts = np.r_[from_outer, from_inner]
    else:
        raise ValueError(f"unknown interpolation {interpolation!r}")
    return convex_hull(pts, center=t)
