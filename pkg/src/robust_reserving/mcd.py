"""Minimum covariance determinant estimation, robust Mahalanobis distances and Winsorization."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import chi2

from .bagplot import PanelLike, rewrap, rows_of
from .errors import DataError, DegenerateGeometryError

# Small-sample correction constants (Pison, Van Aelst and Willems), as tabulated for
# alpha = 0.5 and 0.875: (log-scale intercept, exponent of n).
_SS_RAW = {
    1: ((0.262024211897096, 0.604756680630497), (-0.351584646688712, 1.01646567502486)),
    2: ((0.673292623522027, 0.691365864961895), (0.446537815635445, 1.06690782995919)),
}
_SS_REW = {
    1: ((1.11098143415027, 1.5182890270453), (-0.66046776772861, 0.88939595831888)),
    2: ((3.11101712909049, 1.91401056721863), (0.79473550581058, 1.10081930350091)),
}
# For p > 2: per alpha, two (a, b, c) triples fitted in p.
_SS_RAW_HIGH = {
    0.5: ((-1.42764571687802, 1.26263336932151, 2.0), (-1.06141115981725, 1.28907991440387, 3.0)),
    0.875: ((-0.455179464070565, 1.11192541278794, 2.0), (-0.294241208320834, 1.09649329149811, 3.0)),
}
_SS_REW_HIGH = {
    0.5: ((-1.02842572724793, 1.67659883081926, 2.0), (-0.26800273450853, 1.35968562893582, 3.0)),
    0.875: ((-0.544482443573914, 1.25994483222292, 2.0), (-0.343791072183285, 1.25159004257133, 3.0)),
}


def h_subset_size(n: int, p: int, alpha: float = 0.5) -> int:
    """Subset size for coverage alpha in [0.5, 1]; alpha = 0.5 gives floor((n + p + 1) / 2)."""
    if not 0.5 <= alpha <= 1:
        raise ValueError("alpha must lie in [0.5, 1]")
    n1 = (n + p + 1) // 2
    return int(np.floor(2 * n1 - n + 2 * alpha * (n - n1)))


def mcd_consistency(p: int, alpha: float) -> float:
    """Factor making the covariance of the alpha-fraction of a normal sample consistent."""
    if alpha >= 1:
        return 1.0
    return float(alpha / chi2.cdf(chi2.ppf(alpha, p), p + 2))


def _fp(p: int, n: int, table: dict, high: dict) -> tuple[float, float]:
    if p in table:
        (a5, b5), (a8, b8) = table[p]
        return 1 - np.exp(a5) / n**b5, 1 - np.exp(a8) / n**b8
    out = []
    for key in (0.5, 0.875):
        (a1, b1, c1), (a2, b2, c2) = high[key]
        y = np.log(1 - np.array([1 + a1 / p**b1, 1 + a2 / p**b2]))
        design = np.array([[1.0, -np.log(c1 * p**2)], [1.0, -np.log(c2 * p**2)]])
        coef = np.linalg.solve(design, y)
        out.append(1 - np.exp(coef[0]) / n ** coef[1])
    return out[0], out[1]


def small_sample_factor(p: int, n: int, alpha: float, reweighted: bool = False) -> float:
    """Multiplicative small-sample correction for the MCD scatter."""
    fp5, fp8 = _fp(p, n, _SS_REW if reweighted else _SS_RAW, _SS_REW_HIGH if reweighted else _SS_RAW_HIGH)
    if alpha <= 0.875:
        fp = fp5 + (fp8 - fp5) / 0.375 * (alpha - 0.5)
    elif alpha < 1:
        fp = fp8 + (1 - fp8) / 0.125 * (alpha - 0.875)
    else:
        return 1.0
    return float(1 / fp)


@dataclass(frozen=True, eq=False)
class McdFit:
    location: np.ndarray
    scatter: np.ndarray
    h: int
    best_subset: np.ndarray
    consistency_factor: float
    raw_location: np.ndarray
    raw_scatter: np.ndarray
    raw_determinant: float
    weights: np.ndarray | None
    seed: int | None

    def to_dict(self) -> dict:
        return {
            "location": self.location.tolist(),
            "scatter": self.scatter.tolist(),
            "h": self.h,
            "best_subset": self.best_subset.tolist(),
            "consistency_factor": self.consistency_factor,
            "raw_location": self.raw_location.tolist(),
            "raw_scatter": self.raw_scatter.tolist(),
            "raw_determinant": self.raw_determinant,
            "reweighted": self.weights is not None,
            "seed": self.seed,
        }


def _md2(x: np.ndarray, loc: np.ndarray, cov: np.ndarray) -> np.ndarray:
    d = x - loc
    return np.einsum("ij,ij->i", d @ np.linalg.inv(cov), d)


def _subset_det(x: np.ndarray, subset: np.ndarray) -> float:
    return float(np.linalg.det(np.cov(x[subset].T, ddof=1).reshape(x.shape[1], x.shape[1])))


def _c_steps(x: np.ndarray, subset: np.ndarray, h: int, steps: int | None) -> tuple[np.ndarray, float]:
    """Concentration steps; each one cannot increase the determinant, so stop when it stalls."""
    p = x.shape[1]
    det = _subset_det(x, subset)
    k = 0
    while det > 0 and (steps is None or k < steps):
        k += 1
        loc = x[subset].mean(axis=0)
        cov = np.cov(x[subset].T, ddof=1).reshape(p, p)
        new = np.sort(np.argsort(_md2(x, loc, cov), kind="stable")[:h])
        if np.array_equal(new, subset):
            break
        new_det = _subset_det(x, new)
        if new_det >= det:
            break
        subset, det = new, new_det
    return subset, det


def _initial_subset(x: np.ndarray, h: int, rng: np.random.Generator) -> np.ndarray | None:
    n, p = x.shape
    perm = rng.permutation(n)
    j = p + 1
    while j <= n:
        pick = perm[:j]
        cov = np.cov(x[pick].T, ddof=1).reshape(p, p)
        if np.linalg.matrix_rank(cov) == p:
            loc = x[pick].mean(axis=0)
            return np.sort(np.argsort(_md2(x, loc, cov), kind="stable")[:h])
        j += 1
    return None


def _better(det_a: float, sub_a: np.ndarray, det_b: float, sub_b: np.ndarray) -> bool:
    """Deterministic ordering: smaller determinant, then lexicographically smaller subset."""
    if not np.isclose(det_a, det_b, rtol=1e-12, atol=0.0):
        return det_a < det_b
    return tuple(sub_a) < tuple(sub_b)


def _finalize(x, best, det, h, alpha, reweight, small_sample, q_reweight, seed) -> McdFit:
    n, p = x.shape
    raw_loc = x[best].mean(axis=0)
    cons = mcd_consistency(p, h / n)
    raw_cov = np.cov(x[best].T, ddof=1).reshape(p, p) * cons
    if small_sample:
        raw_cov = raw_cov * small_sample_factor(p, n, alpha)
    loc, cov, weights = raw_loc, raw_cov, None
    if reweight:
        weights = (_md2(x, raw_loc, raw_cov) < chi2.ppf(q_reweight, p)).astype(float)
        sub = x[weights > 0]
        loc = sub.mean(axis=0)
        cov = np.cov(sub.T, ddof=1).reshape(p, p) * mcd_consistency(p, weights.sum() / n)
        if small_sample:
            cov = cov * small_sample_factor(p, n, alpha, reweighted=True)
    return McdFit(loc, cov, h, best, cons, raw_loc, raw_cov, det, weights, seed)


def fast_mcd(
    panel: PanelLike,
    h: int | None = None,
    alpha: float = 0.5,
    seed: int | None = 0,
    restarts: int = 500,
    reweight: bool = True,
    small_sample: bool = True,
    q_reweight: float = 0.975,
) -> McdFit:
    """FAST-MCD: random (p+1)-subsets, two C-steps each, the ten best iterated to convergence.

    ``h`` overrides the subset size implied by ``alpha``.  The raw scatter is multiplied by
    the chi-square consistency factor (and optionally the small-sample factor).  With
    ``reweight`` the final estimate is the classical one on rows whose raw MD^2 is below the
    ``q_reweight`` chi-square quantile, corrected the same way.
    """
    x = rows_of(panel)
    n, p = x.shape
    if n <= p + 1:
        raise DataError("MCD needs n > p + 1")
    if h is None:
        h = h_subset_size(n, p, alpha)
    else:
        lo = (n + p + 1) // 2
        if not lo <= h <= n:
            raise ValueError(f"h must lie in [{lo}, {n}]")
        alpha = h / n
    if h == n:
        best = np.arange(n)
        return _finalize(x, best, _subset_det(x, best), h, 1.0, reweight, False, q_reweight, seed)
    rng = np.random.default_rng(seed)
    candidates: dict[tuple, float] = {}
    for _ in range(restarts):
        start = _initial_subset(x, h, rng)
        if start is None:
            continue
        sub, det = _c_steps(x, start, h, steps=2)
        candidates.setdefault(tuple(sub), det)
    if not candidates:
        raise DegenerateGeometryError("every initial subset was singular")
    ranked = sorted(candidates.items(), key=lambda kv: (kv[1], kv[0]))[:10]
    best, best_det = None, np.inf
    for sub, _ in ranked:
        s, d = _c_steps(x, np.array(sub), h, steps=None)
        if best is None or _better(d, s, best_det, best):
            best, best_det = s, d
    if best_det <= 0:
        raise DegenerateGeometryError("the best h-subset has a singular covariance")
    return _finalize(x, best, best_det, h, alpha, reweight, small_sample, q_reweight, seed)


def robust_md2(panel: PanelLike, fit: McdFit) -> np.ndarray:
    """Squared robust Mahalanobis distances."""
    if np.linalg.matrix_rank(fit.scatter) < fit.scatter.shape[0]:
        raise DegenerateGeometryError("singular scatter matrix")
    return _md2(rows_of(panel), fit.location, fit.scatter)


def mcd_detect(md2: np.ndarray, p: int, q_detect: float = 0.975) -> np.ndarray:
    if not 0 < q_detect < 1:
        raise ValueError("q_detect must lie in (0, 1)")
    return np.asarray(md2) > chi2.ppf(q_detect, p)


def winsorize(panel: PanelLike, fit: McdFit, flags: np.ndarray, q_adjust: float = 0.95) -> PanelLike:
    """Pull flagged rows radially towards the MCD center onto the q_adjust tolerance ellipsoid."""
    if not 0 < q_adjust < 1:
        raise ValueError("q_adjust must lie in (0, 1)")
    x = rows_of(panel)
    c = chi2.ppf(q_adjust, x.shape[1])
    md2 = robust_md2(x, fit)
    factor = np.ones(len(x))
    sel = np.asarray(flags, dtype=bool) & (md2 > c)
    factor[sel] = np.sqrt(c / md2[sel])
    moved = fit.location + factor[:, None] * (x - fit.location)
    return rewrap(panel, np.where(sel[:, None], moved, x))


def tolerance_ellipsoid(fit: McdFit, quantile: float = 0.975, resolution: int = 64) -> dict:
    """Boundary mesh of {x : MD^2(x) <= chi2_q}: a closed polyline in 2D, vertices and faces in 3D."""
    p = fit.location.size
    r = np.sqrt(chi2.ppf(quantile, p))
    root = np.linalg.cholesky(fit.scatter)
    if p == 2:
        t = np.linspace(0, 2 * np.pi, resolution, endpoint=False)
        unit = np.c_[np.cos(t), np.sin(t)]
        return {"vertices": (fit.location + r * unit @ root.T).tolist()}
    if p != 3:
        raise DegenerateGeometryError("ellipsoid meshes are available for 2 or 3 dimensions")
    rings = resolution // 2
    theta = np.linspace(0, np.pi, rings + 1)[1:-1]
    phi = np.linspace(0, 2 * np.pi, resolution, endpoint=False)
    pts = [np.array([0.0, 0.0, 1.0])]
    for th in theta:
        pts.extend(np.c_[np.sin(th) * np.cos(phi), np.sin(th) * np.sin(phi), np.full(resolution, np.cos(th))])
    pts.append(np.array([0.0, 0.0, -1.0]))
    unit = np.array(pts)
    faces = []
    m = resolution
    for j in range(m):
        faces.append([0, 1 + j, 1 + (j + 1) % m])
    for ring in range(len(theta) - 1):
        a0, b0 = 1 + ring * m, 1 + (ring + 1) * m
        for j in range(m):
            j1 = (j + 1) % m
            faces.append([a0 + j, b0 + j, b0 + j1])
            faces.append([a0 + j, b0 + j1, a0 + j1])
    last = 1 + (len(theta) - 1) * m
    bottom = len(unit) - 1
    for j in range(m):
        faces.append([last + j, bottom, last + (j + 1) % m])
    return {"vertices": (fit.location + r * unit @ root.T).tolist(), "faces": faces}
