"""Skew-adjusted outlyingness (AO) with medcouple-corrected boxplot whiskers."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np
from scipy.stats import chi2

from .bagplot import PanelLike, rewrap, rows_of
from .errors import DataError, DegenerateGeometryError
from .geometry import Polytope, convex_hull, ray_exit_parameter, scale_polytope

WhiskerKind = Literal["data", "fence"]
AoVariant = Literal["traditional", "chi_median", "fence"]


def medcouple(x: np.ndarray) -> float:
    """Median of the kernel ((x_j - m) - (m - x_i)) / (x_j - x_i) over x_i <= m <= x_j.

    Pairs with x_i = x_j = m get -1, 0 or +1 depending on their position among the ties,
    which keeps the statistic antisymmetric under negation.  O(n^2) memory.
    """
    z = np.sort(np.asarray(x, dtype=float).ravel())
    if z.size < 3:
        raise DataError("medcouple needs at least 3 observations")
    if z[0] == z[-1]:
        raise DataError("medcouple is undefined for a constant sample")
    z = z - np.median(z)
    upper = z[z >= 0][:, None]  # ascending
    lower = z[z <= 0][None, :]  # ascending
    with np.errstate(divide="ignore", invalid="ignore"):
        h = (upper + lower) / (upper - lower)
    k = int(np.sum(z == 0))
    if k:
        a = np.arange(k)[:, None]
        b = np.arange(k)[None, :]
        h[:k, -k:] = np.sign(a + b - (k - 1))
    return float(np.median(h))


def quartiles(x: np.ndarray) -> tuple[float, float]:
    q1, q3 = np.quantile(np.asarray(x, dtype=float), [0.25, 0.75])
    return float(q1), float(q3)


def adjusted_boxplot_fences(x: np.ndarray) -> tuple[float, float]:
    """Skew-adjusted boxplot fences (Q1 - 1.5 e^{a MC} IQR, Q3 + 1.5 e^{b MC} IQR)."""
    x = np.asarray(x, dtype=float)
    if x.size < 4:
        raise DataError("adjusted boxplot needs at least 4 observations")
    q1, q3 = quartiles(x)
    iqr = q3 - q1
    mc = medcouple(x)
    if mc >= 0:
        return q1 - 1.5 * np.exp(-4 * mc) * iqr, q3 + 1.5 * np.exp(3 * mc) * iqr
    return q1 - 1.5 * np.exp(-3 * mc) * iqr, q3 + 1.5 * np.exp(4 * mc) * iqr


def adjusted_boxplot_whiskers(x: np.ndarray, kind: WhiskerKind = "data") -> tuple[float, float]:
    """Whisker ends of the skew-adjusted boxplot.

    ``kind="data"`` returns the most extreme observations inside the fences (the drawn
    whiskers); ``kind="fence"`` returns the fences themselves.
    """
    lo, hi = adjusted_boxplot_fences(x)
    if kind == "fence":
        return float(lo), float(hi)
    if kind != "data":
        raise ValueError(f"unknown whisker kind {kind!r}")
    x = np.asarray(x, dtype=float)
    return float(x[x >= lo].min()), float(x[x <= hi].max())


def _ao_from_whiskers(y: np.ndarray, med: float, w1: float, w2: float) -> np.ndarray:
    out = np.zeros_like(y, dtype=float)
    up, dn = y > med, y < med
    out[up] = (y[up] - med) / (w2 - med)
    out[dn] = (med - y[dn]) / (med - w1)
    return out


def univariate_ao(xi: float | np.ndarray, x: np.ndarray, whiskers: WhiskerKind = "data") -> float | np.ndarray:
    """Outlyingness of ``xi`` relative to the sample ``x``: distance to the median over the whisker span."""
    x = np.asarray(x, dtype=float)
    med = float(np.median(x))
    w1, w2 = adjusted_boxplot_whiskers(x, whiskers)
    if not w1 < med < w2:
        raise DegenerateGeometryError("whiskers coincide with the median")
    out = _ao_from_whiskers(np.atleast_1d(np.asarray(xi, dtype=float)), med, w1, w2)
    return float(out[0]) if np.ndim(xi) == 0 else out


def _projection_ao(y: np.ndarray, whiskers: WhiskerKind) -> np.ndarray | None:
    if y.max() == y.min():
        return None
    med = float(np.median(y))
    try:
        w1, w2 = adjusted_boxplot_whiskers(y, whiskers)
    except DataError:
        return None
    if not w1 < med < w2:
        return None
    return _ao_from_whiskers(y, med, w1, w2)


def _hyperplane_normal(points: np.ndarray) -> np.ndarray:
    p = points.shape[1]
    if p == 1:
        return np.ones(1)
    if p == 2:
        e = points[1] - points[0]
        return np.array([-e[1], e[0]])
    if p == 3:
        return np.cross(points[1] - points[0], points[2] - points[0])
    _, sv, vt = np.linalg.svd(points[1:] - points[0])
    return vt[-1] * (sv[-1] > 1e-12 * sv[0])


@dataclass(frozen=True, eq=False)
class AoScore:
    ao: np.ndarray
    m: int
    seed: int | None
    directions: np.ndarray
    whiskers: WhiskerKind = "data"

    @property
    def median_index(self) -> int:
        """Row with the smallest AO (first one on ties)."""
        return int(np.argmin(self.ao))


def sample_directions(x: np.ndarray, m: int, seed: int | None, whiskers: WhiskerKind = "data") -> np.ndarray:
    """m unit normals of hyperplanes through p distinct rows, drawn from one seeded stream.

    Directions along which the projected sample is constant or has degenerate whiskers
    are skipped; at most 100 m draws are attempted.  The stream is consumed sequentially,
    so the first k of m directions equal the directions obtained with m = k.
    """
    n, p = x.shape
    if m < 1:
        raise ValueError("m must be positive")
    if n < p + 1:
        raise DataError("too few rows to sample directions")
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(100 * m):
        if len(out) == m:
            break
        pick = rng.choice(n, size=p, replace=False)
        a = _hyperplane_normal(x[pick])
        norm = np.linalg.norm(a)
        if norm <= 1e-12 * max(1.0, float(np.max(np.abs(x[pick])))):
            continue
        a = a / norm
        if _projection_ao(x @ a, whiskers) is None:
            continue
        out.append(a)
    if len(out) < m:
        raise DegenerateGeometryError(f"only {len(out)} of {m} usable directions found")
    return np.array(out)


def ao_scores(
    panel: PanelLike,
    m: int | None = None,
    seed: int | None = 0,
    whiskers: WhiskerKind = "data",
) -> AoScore:
    """AO_i = max over sampled directions a of the univariate AO of a'x_i; m defaults to 250 p."""
    x = rows_of(panel)
    p = x.shape[1]
    m = 250 * p if m is None else int(m)
    dirs = sample_directions(x, m, seed, whiskers)
    best = np.zeros(len(x))
    for a in dirs:
        best = np.maximum(best, _projection_ao(x @ a, whiskers))
    return AoScore(best, m, seed, dirs, whiskers)


def _values(scores: AoScore | np.ndarray) -> np.ndarray:
    return scores.ao if isinstance(scores, AoScore) else np.asarray(scores, dtype=float)


def ao_cutoff_traditional(scores: AoScore | np.ndarray) -> float:
    """Upper skew-adjusted boxplot fence of the AO values."""
    return float(adjusted_boxplot_fences(_values(scores))[1])


def ao_cutoff_chi(scores: AoScore | np.ndarray, p: int, quantile: float = 0.99) -> float:
    """sqrt(chi2_{quantile, p}) times the median AO."""
    v = _values(scores)
    if v.size == 0:
        raise DataError("no scores")
    return float(np.sqrt(chi2.ppf(quantile, p)) * np.median(v))


@dataclass(frozen=True, eq=False)
class AoModel:
    bag: Polytope
    loop: Polytope
    fence: Polytope | None
    cutoff: float | None
    variant: AoVariant
    center: np.ndarray  # the row with the smallest AO
    flags: np.ndarray

    def to_dict(self) -> dict:
        return {
            "variant": self.variant,
            "cutoff": self.cutoff,
            "center": self.center.tolist(),
            "bag": self.bag.to_dict(),
            "loop": self.loop.to_dict(),
            "fence": None if self.fence is None else self.fence.to_dict(),
            "outliers": np.flatnonzero(self.flags).tolist(),
        }


def build_ao_model(
    panel: PanelLike,
    scores: AoScore,
    variant: AoVariant = "traditional",
    fence_factor: float = 3.0,
    chi_quantile: float = 0.99,
) -> AoModel:
    """AO bag (hull of the half of the rows with the smallest AO), loop and optional fence."""
    x = rows_of(panel)
    n, p = x.shape
    order = np.argsort(scores.ao, kind="stable")
    center = x[scores.median_index]
    bag = convex_hull(x[order[: n // 2]], center=center)
    fence = None
    cutoff = None
    if variant == "traditional":
        cutoff = ao_cutoff_traditional(scores)
        flags = scores.ao > cutoff
    elif variant == "chi_median":
        cutoff = ao_cutoff_chi(scores, p, chi_quantile)
        flags = scores.ao > cutoff
    elif variant == "fence":
        fence = scale_polytope(bag, fence_factor)
        slack = x @ fence.equations[:, :-1].T + fence.equations[:, -1]
        flags = np.any(slack > 0, axis=1)
    else:
        raise ValueError(f"unknown AO variant {variant!r}")
    loop = convex_hull(x[~flags], center=center)
    return AoModel(bag, loop, fence, cutoff, variant, center, flags)


def ao_adjust(
    panel: PanelLike,
    model: AoModel,
    flags: np.ndarray,
    target: Literal["loop", "fence"] = "loop",
) -> PanelLike:
    """Move flagged rows along the ray from the AO median to where it meets the target boundary."""
    poly = model.loop if target == "loop" else model.fence
    if poly is None:
        raise ValueError("this AO model has no fence")
    x = rows_of(panel).copy()
    c = model.center
    for k in np.flatnonzero(flags):
        d = x[k] - c
        if not np.any(d):
            raise DegenerateGeometryError("flagged row coincides with the AO median")
        x[k] = c + ray_exit_parameter(poly, c, d) * d
    return rewrap(panel, x)
