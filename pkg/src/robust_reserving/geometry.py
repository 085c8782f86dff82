"""Convex polytopes in two and three dimensions: hulls, scaling, ray clipping, containment."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog
from scipy.spatial import ConvexHull, HalfspaceIntersection, QhullError

from .errors import DegenerateGeometryError

_EPS = 1e-9


@dataclass(frozen=True, eq=False)
class Polytope:
    """Convex polytope given by its vertices plus a reference center.

    ``equations`` rows are (normal, offset) with normal . y + offset <= 0 inside; normals
    have unit length.  In 2D the vertices are ordered counterclockwise; in 3D ``faces``
    holds the triangulated boundary as vertex-index triples.
    """

    vertices: np.ndarray
    center: np.ndarray
    equations: np.ndarray
    faces: np.ndarray

    @property
    def p(self) -> int:
        return self.vertices.shape[1]

    def contains(self, points: np.ndarray, tol: float = _EPS) -> np.ndarray:
        """Closed containment test with a scale-aware tolerance."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        slack = pts @ self.equations[:, :-1].T + self.equations[:, -1]
        return np.all(slack <= tol * self.scale, axis=1)

    @property
    def scale(self) -> float:
        return float(max(1.0, np.max(np.abs(self.vertices))))

    def volume(self) -> float:
        return float(ConvexHull(self.vertices).volume)

    def centroid(self) -> np.ndarray:
        return solid_centroid(self.vertices)

    def to_dict(self) -> dict:
        out = {
            "dimension": self.p,
            "center": self.center.tolist(),
            "vertices": self.vertices.tolist(),
        }
        if self.p == 3:
            out["faces"] = self.faces.tolist()
        return out


def _hull(points: np.ndarray) -> ConvexHull:
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] not in (2, 3):
        raise DegenerateGeometryError("polytopes are supported in 2 or 3 dimensions only")
    if len(pts) < pts.shape[1] + 1:
        raise DegenerateGeometryError(f"need at least {pts.shape[1] + 1} points for a hull")
    centred = pts - pts.mean(axis=0)
    sv = np.linalg.svd(centred, compute_uv=False)
    if sv[-1] <= 1e-12 * max(sv[0], 1e-300):
        raise DegenerateGeometryError("points are affinely dependent")
    try:
        return ConvexHull(pts)
    except QhullError as exc:
        raise DegenerateGeometryError(str(exc)) from exc


def solid_centroid(points: np.ndarray) -> np.ndarray:
    """Area (2D) or volume (3D) centroid of the hull of ``points``.

    Degenerate inputs (fewer points than needed, or lower-dimensional) fall back to the
    mean of the distinct points.
    """
    pts = np.unique(np.asarray(points, dtype=float), axis=0)
    try:
        hull = _hull(pts)
    except DegenerateGeometryError:
        return pts.mean(axis=0)
    if pts.shape[1] == 2:
        v = pts[hull.vertices]
        x, y = v[:, 0], v[:, 1]
        x1, y1 = np.roll(x, -1), np.roll(y, -1)
        cross = x * y1 - x1 * y
        area = cross.sum() / 2
        return np.array([((x + x1) * cross).sum(), ((y + y1) * cross).sum()]) / (6 * area)
    ref = pts[hull.vertices].mean(axis=0)
    vols, cents = [], []
    for simplex in hull.simplices:
        a, b, c = pts[simplex]
        vols.append(abs(np.dot(a - ref, np.cross(b - ref, c - ref))) / 6)
        cents.append((a + b + c + ref) / 4)
    vols = np.array(vols)
    return (vols[:, None] * np.array(cents)).sum(axis=0) / vols.sum()


def _polytope_from_hull(pts: np.ndarray, hull: ConvexHull, center: np.ndarray | None) -> Polytope:
    if pts.shape[1] == 2:
        vertices = pts[hull.vertices]  # qhull returns 2D vertices counterclockwise
        faces = np.zeros((0, 3), dtype=int)
    else:
        order = np.unique(hull.simplices)
        remap = {int(v): k for k, v in enumerate(order)}
        vertices = pts[order]
        faces = np.array([[remap[int(v)] for v in s] for s in hull.simplices], dtype=int)
    eq = np.unique(np.round(hull.equations, 12), axis=0)
    c = solid_centroid(vertices) if center is None else np.asarray(center, dtype=float)
    return Polytope(vertices, c, eq, faces)


def convex_hull(points: np.ndarray, center: np.ndarray | None = None) -> Polytope:
    """Hull of a point set; ``center`` defaults to the solid centroid."""
    pts = np.asarray(points, dtype=float)
    return _polytope_from_hull(pts, _hull(pts), center)


def with_center(poly: Polytope, center: np.ndarray) -> Polytope:
    return Polytope(poly.vertices, np.asarray(center, dtype=float), poly.equations, poly.faces)


def scale_polytope(poly: Polytope, factor: float) -> Polytope:
    """Dilate about the polytope's center: v -> center + factor * (v - center)."""
    if not factor > 0:
        raise ValueError("scale factor must be positive")
    c = poly.center
    eq = poly.equations.copy()
    # substituting y = c + (y' - c) / f into normal . y + b <= 0 and multiplying by f
    eq[:, -1] = factor * poly.equations[:, -1] - (1 - factor) * (poly.equations[:, :-1] @ c)
    return Polytope(c + factor * (poly.vertices - c), c.copy(), eq, poly.faces)


def ray_exit_parameter(poly: Polytope, origin: np.ndarray, direction: np.ndarray) -> float:
    """Parametric clipping: t* such that origin + t* direction is where the ray leaves ``poly``."""
    normals, offsets = poly.equations[:, :-1], poly.equations[:, -1]
    slack = -(normals @ origin + offsets)  # positive inside
    if np.any(slack <= _EPS * poly.scale):
        raise DegenerateGeometryError("ray origin is not strictly inside the polytope")
    denom = normals @ direction
    exiting = denom > 0
    if not np.any(exiting):
        raise DegenerateGeometryError("ray does not leave the polytope")
    return float(np.min(slack[exiting] / denom[exiting]))


def ray_clip(poly: Polytope, origin: np.ndarray, through: np.ndarray) -> np.ndarray:
    """Boundary point where the ray from ``origin`` towards ``through`` exits ``poly``."""
    origin = np.asarray(origin, dtype=float)
    direction = np.asarray(through, dtype=float) - origin
    if not np.any(direction):
        raise ValueError("ray direction is zero")
    return origin + ray_exit_parameter(poly, origin, direction) * direction


_ACTIVE_START = 512
_ACTIVE_BATCH = 256


def _box(p: int, normals: np.ndarray, bounds: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """A loose bounding box used to keep partial constraint sets bounded."""
    big = 1e6 * (np.max(np.abs(bounds)) / np.min(np.linalg.norm(normals, axis=1)) + 1.0)
    eye = np.eye(p)
    return np.r_[eye, -eye], np.full(2 * p, big)


def _solve_chebyshev(a: np.ndarray, b: np.ndarray):
    p = a.shape[1]
    cost = np.zeros(p + 1)
    cost[-1] = -1.0
    return linprog(
        cost,
        A_ub=np.c_[a, np.linalg.norm(a, axis=1)],
        b_ub=b,
        bounds=[(None, None)] * p + [(0, None)],
        method="highs",
    )


def _violated(bounds: np.ndarray, slack: np.ndarray, active: np.ndarray, batch: int | None) -> np.ndarray:
    tol = _EPS * max(1.0, float(np.max(np.abs(bounds))))
    bad = np.flatnonzero((slack > tol) & ~active)
    return bad if batch is None else bad[np.argsort(-slack[bad], kind="stable")[:batch]]


def _vertex_slack(verts: np.ndarray, normals: np.ndarray, bounds: np.ndarray, chunk: int = 8192) -> np.ndarray:
    """Per constraint, the largest violation over the vertices."""
    out = np.empty(len(normals))
    for s in range(0, len(normals), chunk):
        out[s : s + chunk] = (verts @ normals[s : s + chunk].T).max(axis=0) - bounds[s : s + chunk]
    return out


def chebyshev_center(normals: np.ndarray, bounds: np.ndarray) -> tuple[np.ndarray, float] | None:
    """Largest ball inside {y : normals y <= bounds}; None if the set is empty or unbounded.

    Large systems are solved by constraint generation: an evenly spaced subset plus a
    loose bounding box is solved first and the most violated constraints are added until
    the solution satisfies all of them.
    """
    normals = np.asarray(normals, dtype=float)
    bounds = np.asarray(bounds, dtype=float)
    m, p = normals.shape
    if m <= _ACTIVE_START:
        res = _solve_chebyshev(normals, bounds)
        return None if res.status != 0 else (res.x[:p], float(res.x[-1]))
    box_a, box_b = _box(p, normals, bounds)
    norms = np.linalg.norm(normals, axis=1)
    active = np.zeros(m, dtype=bool)
    active[np.unique(np.linspace(0, m - 1, _ACTIVE_START).astype(int))] = True
    while True:
        res = _solve_chebyshev(np.r_[normals[active], box_a], np.r_[bounds[active], box_b])
        if res.status != 0:
            return None
        y, r = res.x[:p], float(res.x[-1])
        add = _violated(bounds, normals @ y + norms * r - bounds, active, _ACTIVE_BATCH)
        if add.size == 0:
            break
        active[add] = True
    if np.any(np.abs(y) + r >= box_b[0] * (1 - 1e-9)):
        return None  # touches the artificial box: the true set is unbounded
    return y, r


def halfspace_polytope(normals: np.ndarray, bounds: np.ndarray, center: np.ndarray | None = None) -> Polytope:
    """Bounded intersection of the half-spaces normals . y <= bounds.

    Vertices are computed from a growing subset of the half-spaces; all constraints
    violated by some vertex are added until every vertex satisfies all of them.
    """
    normals = np.asarray(normals, dtype=float)
    bounds = np.asarray(bounds, dtype=float)
    cheb = chebyshev_center(normals, bounds)
    if cheb is None or cheb[1] <= 1e-9 * max(1.0, np.max(np.abs(bounds))):
        raise DegenerateGeometryError("half-space intersection is empty or has no interior")
    m, p = normals.shape
    box_a, box_b = _box(p, normals, bounds)
    if m <= _ACTIVE_START:
        active = np.ones(m, dtype=bool)
    else:
        norms = np.linalg.norm(normals, axis=1)
        # constraints touching the Chebyshev ball seed the active set
        active = normals @ cheb[0] + norms * cheb[1] - bounds > -1e-6 * max(1.0, np.max(np.abs(bounds)))
        active[np.unique(np.linspace(0, m - 1, _ACTIVE_START).astype(int))] = True
    while True:
        a, b = np.r_[normals[active], box_a], np.r_[bounds[active], box_b]
        try:
            verts = HalfspaceIntersection(np.c_[a, -b], cheb[0]).intersections
        except QhullError as exc:
            raise DegenerateGeometryError(str(exc)) from exc
        add = _violated(bounds, _vertex_slack(verts, normals, bounds), active, None)
        if add.size == 0:
            break
        active[add] = True
    if np.any(np.abs(verts) >= box_b[0] * (1 - 1e-9)):
        raise DegenerateGeometryError("half-space intersection is unbounded")
    return convex_hull(verts, center)
