"""Synthetic ODP-style triangle panels with correlated, optionally skewed noise and planted outliers."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError
from .triangle import Triangle, TrianglePanel, staircase_mask


@dataclass(frozen=True)
class SyntheticSpec:
    n_triangles: int = 3
    size: int = 12  # accident and development periods
    correlation: float = 0.5  # common cross-line correlation of the noise
    skewness: float = 0.0  # log-normal shape of the noise; 0 gives Gaussian noise
    n_outliers: int = 0
    outlier_sigma: float = 10.0
    noise_cv: float = 0.05  # noise sd relative to the smallest cell mean
    seed: int = 0

    def validate(self) -> None:
        if self.n_triangles < 1:
            raise DataError("need at least one triangle")
        if self.size < 3:
            raise DataError("triangles need at least 3 periods")
        if not -1 / max(self.n_triangles - 1, 1) < self.correlation < 1:
            raise DataError("correlation matrix would not be positive definite")
        if self.skewness < 0:
            raise DataError("skewness must be non-negative")
        n_cells = self.size * (self.size + 1) // 2
        if not 0 <= self.n_outliers <= n_cells // 10:
            raise DataError(f"at most {n_cells // 10} planted outliers fit this shape")
        if self.outlier_sigma <= 0 or not 0 < self.noise_cv * self.outlier_sigma < 1:
            raise DataError("outlier_sigma * noise_cv must lie in (0, 1) to keep claims positive")


@dataclass(frozen=True, eq=False)
class SyntheticPanel:
    panel: TrianglePanel
    outliers: tuple[tuple[int, int], ...]  # 1-based (i, j) of the planted cells
    mean: np.ndarray  # N x I x J cell means
    spec: SyntheticSpec

    def truth(self) -> np.ndarray:
        """Boolean per panel row, True at the planted cells."""
        planted = set(self.outliers)
        return np.array([(c.i, c.j) in planted for c in self.panel.cells])


def _noise(rng: np.random.Generator, n: int, N: int, rho: float, skew: float) -> np.ndarray:
    """n x N standardized noise; Gaussian copula with a common correlation and log-normal margins."""
    corr = np.full((N, N), rho)
    np.fill_diagonal(corr, 1.0)
    z = rng.standard_normal((n, N)) @ np.linalg.cholesky(corr).T
    if skew == 0:
        return z
    mean = np.exp(skew**2 / 2)
    sd = np.sqrt((np.exp(skew**2) - 1) * np.exp(skew**2))
    return (np.exp(skew * z) - mean) / sd


def generate_synthetic_panel(spec: SyntheticSpec | None = None, **kwargs) -> SyntheticPanel:
    """Cross-classified log-linear means, ODP-scaled noise, outliers shifted by ``outlier_sigma`` sd.

    Each planted cell is displaced by ``outlier_sigma`` noise standard deviations in every
    triangle, with an independent random sign per triangle.
    """
    spec = spec or SyntheticSpec(**kwargs)
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    I = J = spec.size
    N = spec.n_triangles
    mask = staircase_mask(I, J)
    cells = np.argwhere(mask)
    n = len(cells)
    i_idx = np.arange(I)[:, None]
    j_idx = np.arange(J)[None, :]
    means = []
    for _ in range(N):
        level = rng.uniform(11.0, 13.0)
        trend = rng.uniform(0.0, 0.05)
        decay = rng.uniform(0.25, 0.45)
        peak = rng.uniform(0.5, 1.5)
        means.append(np.exp(level + trend * i_idx + peak * np.exp(-j_idx) - decay * j_idx))
    mean = np.array(means)
    # ODP variance phi * mu with phi chosen so the smallest cell has the requested CV
    phi = [spec.noise_cv**2 * m[mask].min() for m in mean]
    sd = np.array([np.sqrt(phi[k] * mean[k][mask]) for k in range(N)]).T
    values = np.array([m[mask] for m in mean]).T + sd * _noise(rng, n, N, spec.correlation, spec.skewness)
    planted = np.sort(rng.choice(n, size=spec.n_outliers, replace=False))
    signs = rng.choice([-1.0, 1.0], size=(spec.n_outliers, N))
    values[planted] += spec.outlier_sigma * signs * sd[planted]
    values = np.maximum(values, 0.0)
    tris = []
    for k in range(N):
        grid = np.full((I, J), np.nan)
        grid[mask] = values[:, k]
        tris.append(Triangle(grid, "incremental", f"line_{k + 1}"))
    outliers = tuple((int(cells[r][0]) + 1, int(cells[r][1]) + 1) for r in planted)
    return SyntheticPanel(TrianglePanel(tuple(tris)), outliers, mean, spec)
