"""Bagplot fence/loop detection, bagdistance, and the bagdistance-based adjustments."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np
from scipy.stats import chi2

from .depth import DepthIndex, RegionMethod, compute_bag
from .errors import DegenerateGeometryError
from .geometry import Polytope, convex_hull, ray_exit_parameter, scale_polytope
from .glm import ResidualPanel

PanelLike = ResidualPanel | np.ndarray

CONTOUR_MAX_N_3D = 80


def rows_of(panel: PanelLike) -> np.ndarray:
    return panel.rows if isinstance(panel, ResidualPanel) else np.asarray(panel, dtype=float)


def rewrap(panel: PanelLike, rows: np.ndarray) -> PanelLike:
    return panel.with_rows(rows) if isinstance(panel, ResidualPanel) else rows


def chi_fence_factor(p: int, quantile: float = 0.99) -> float:
    """sqrt of the chi-square quantile with p degrees of freedom."""
    return float(np.sqrt(chi2.ppf(quantile, p)))


def default_region_method(n: int, p: int) -> RegionMethod:
    return "contour" if p == 2 or n <= CONTOUR_MAX_N_3D else "hull"


@dataclass(frozen=True, eq=False)
class BagplotModel:
    bag: Polytope
    fence: Polytope
    loop: Polytope
    center: np.ndarray  # Tukey median
    fence_factor: float
    flags: np.ndarray  # rows strictly outside the fence
    index: DepthIndex

    def to_dict(self) -> dict:
        return {
            "center": self.center.tolist(),
            "fence_factor": self.fence_factor,
            "bag": self.bag.to_dict(),
            "fence": self.fence.to_dict(),
            "loop": self.loop.to_dict(),
            "outliers": np.flatnonzero(self.flags).tolist(),
        }


@dataclass(frozen=True, eq=False)
class BdScore:
    bd: np.ndarray
    boundary: np.ndarray  # c_x, the bag boundary point on the ray from T* through x


def build_bagplot(
    panel: PanelLike,
    fence_factor: float | None = None,
    quantile: float = 0.99,
    interpolation: Literal["radial", "minkowski"] = "minkowski",
    method: RegionMethod | None = None,
    index: DepthIndex | None = None,
) -> BagplotModel:
    """Bag, fence (bag dilated by ``fence_factor`` about T*) and loop of a residual cloud."""
    x = rows_of(panel)
    n, p = x.shape
    if p not in (2, 3):
        raise DegenerateGeometryError("bagplots are available for 2 or 3 dimensions")
    f = chi_fence_factor(p, quantile) if fence_factor is None else float(fence_factor)
    if f <= 0:
        raise ValueError("fence factor must be positive")
    if index is None:
        index = DepthIndex(x, method or default_region_method(n, p))
    bag = compute_bag(index, interpolation=interpolation)
    t = bag.center
    if not bag.contains(t[None, :], tol=-1e-9)[0]:
        raise DegenerateGeometryError("Tukey median lies on the bag boundary")
    fence = scale_polytope(bag, f)
    slack = x @ fence.equations[:, :-1].T + fence.equations[:, -1]
    flags = np.any(slack > 0, axis=1)
    loop = convex_hull(x[~flags], center=t)
    return BagplotModel(bag, fence, loop, t, f, flags, index)


def _clip_parameters(poly: Polytope, center: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Per row, t* with center + t* (x - center) on the boundary; inf for x == center."""
    out = np.full(len(x), np.inf)
    for k, row in enumerate(x):
        d = row - center
        if np.any(d):
            out[k] = ray_exit_parameter(poly, center, d)
    return out


def bagdistance(panel: PanelLike, model: BagplotModel | Polytope) -> BdScore:
    """bd(x) = ||x - T*|| / ||c_x - T*||, zero at T*."""
    bag = model.bag if isinstance(model, BagplotModel) else model
    x = rows_of(panel)
    t = bag.center
    tstar = _clip_parameters(bag, t, x)
    at_center = np.isinf(tstar)
    bd = np.where(at_center, 0.0, 1.0 / tstar)
    boundary = t + np.where(at_center, 0.0, tstar)[:, None] * (x - t)
    return BdScore(bd, boundary)


def detect_bd(scores: BdScore | np.ndarray, cutoff: float) -> np.ndarray:
    if cutoff <= 0:
        raise ValueError("cutoff must be positive")
    bd = scores.bd if isinstance(scores, BdScore) else np.asarray(scores)
    return bd > cutoff


def adjust_to_polytope(
    panel: PanelLike, target: Polytope, flags: np.ndarray, center: np.ndarray | None = None
) -> PanelLike:
    """Move each flagged row to where the ray from the center through it leaves ``target``."""
    x = rows_of(panel).copy()
    c = target.center if center is None else np.asarray(center, dtype=float)
    for k in np.flatnonzero(flags):
        d = x[k] - c
        if not np.any(d):
            raise DegenerateGeometryError("flagged row coincides with the adjustment center")
        x[k] = c + ray_exit_parameter(target, c, d) * d
    return rewrap(panel, x)


def bd_threshold(f: float) -> float:
    """The bd at which (f + sqrt(bd)) / bd equals 1, i.e. the positive root of t - sqrt(t) = f."""
    return (2 * f + np.sqrt(4 * f + 1) + 1) / 2


def bd_shrink_factor(bd: np.ndarray, f: float, u: float | None = None) -> np.ndarray:
    """Radial scaling applied to x - T*: 1 inside the fence, f/bd up to theta, (f + sqrt(bd))/bd beyond.

    With a limit ``u`` every row with bd > u is pulled back to the fence instead.
    """
    if f <= 0:
        raise ValueError("f must be positive")
    if u is not None and u <= f:
        raise ValueError("the limit u must exceed f")
    bd = np.asarray(bd, dtype=float)
    theta = bd_threshold(f)
    safe = np.where(bd > 0, bd, 1.0)
    g = np.ones_like(bd)
    mid = (bd > f) & (bd <= theta)
    far = bd > theta
    g[mid] = f / safe[mid]
    g[far] = (f + np.sqrt(safe[far])) / safe[far]
    if u is not None:
        g[bd > u] = f / safe[bd > u]
    return g


def _apply_factor(panel: PanelLike, center: np.ndarray, g: np.ndarray) -> PanelLike:
    x = rows_of(panel)
    moved = center + g[:, None] * (x - center)
    return rewrap(panel, np.where((g == 1.0)[:, None], x, moved))


def adjust_bd_unbounded(panel: PanelLike, scores: BdScore, f: float, center: np.ndarray) -> PanelLike:
    return _apply_factor(panel, np.asarray(center, dtype=float), bd_shrink_factor(scores.bd, f))


def adjust_bd_limited(panel: PanelLike, scores: BdScore, f: float, u: float, center: np.ndarray) -> PanelLike:
    return _apply_factor(panel, np.asarray(center, dtype=float), bd_shrink_factor(scores.bd, f, u))


def huber_bd_loss(bd: float | np.ndarray, c: float) -> float | np.ndarray:
    if c <= 0:
        raise ValueError("c must be positive")
    bd = np.asarray(bd, dtype=float)
    out = np.where(bd <= c, 0.5 * bd**2, c * (bd - 0.5 * c))
    return float(out) if out.ndim == 0 else out
