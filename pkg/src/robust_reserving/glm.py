"""Over-dispersed Poisson chain-ladder GLM with a two-stage Huber refinement.

The cross-classified model is log(mu_ij) = c + alpha_i + beta_j with corner constraints
alpha_1 = beta_1 = 0 and variance function V(mu) = mu.  Residuals are unscaled Pearson
residuals (X - mu) / sqrt(mu), so that :func:`backtransform` is the exact inverse.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import ConvergenceError, DataError
from .triangle import CellIndex, Triangle, TrianglePanel, staircase_mask

HUBER_C0 = 1.345
ODP_MAXIT = 200
SQUAREM_BUDGET = 1000


@dataclass(frozen=True, eq=False)
class GlmFit:
    intercept: float
    row_effects: np.ndarray  # alpha_2..alpha_I
    col_effects: np.ndarray  # beta_2..beta_J
    fitted: np.ndarray  # I x J, NaN outside the observed staircase
    dispersion: float
    robust_weights: np.ndarray  # I x J, NaN outside the observed staircase
    threshold_used: float | None
    iterations: int
    label: str = ""

    @property
    def shape(self) -> tuple[int, int]:
        return self.fitted.shape

    def linear_predictor(self) -> np.ndarray:
        """log(mu) on the full I x J grid, including the unobserved cells."""
        alpha = np.r_[0.0, self.row_effects]
        beta = np.r_[0.0, self.col_effects]
        return self.intercept + alpha[:, None] + beta[None, :]

    def reserve(self) -> float:
        """Sum of the fitted means over the unobserved lower-right cells."""
        mu = np.exp(self.linear_predictor())
        return float(mu[~staircase_mask(*self.shape)].sum())

    def to_dict(self) -> dict:
        mask = staircase_mask(*self.shape)
        return {
            "label": self.label,
            "intercept": self.intercept,
            "row_effects": self.row_effects.tolist(),
            "col_effects": self.col_effects.tolist(),
            "dispersion": self.dispersion,
            "threshold_used": self.threshold_used,
            "iterations": self.iterations,
            "weights": [
                {"i": int(i) + 1, "j": int(j) + 1, "weight": float(self.robust_weights[i, j])}
                for i, j in np.argwhere(mask)
            ],
        }


def _design(n_acc: int, n_dev: int) -> tuple[np.ndarray, np.ndarray]:
    cells = np.argwhere(staircase_mask(n_acc, n_dev))
    X = np.zeros((len(cells), n_acc + n_dev - 1))
    X[:, 0] = 1.0
    for r, (i, j) in enumerate(cells):
        if i > 0:
            X[r, i] = 1.0
        if j > 0:
            X[r, n_acc - 1 + j] = 1.0
    return cells, X


def _check_design(t: Triangle) -> None:
    if t.kind != "incremental":
        raise DataError("the ODP GLM is fitted to incremental claims")
    mask = t.mask
    vals = np.where(mask, t.values, 0.0)
    if np.any(vals[mask] < 0):
        raise DataError(f"{t.label}: negative incremental claims; apply zero_negatives first")
    if np.any(vals.sum(axis=1) <= 0) or np.any(vals.sum(axis=0) <= 0):
        raise DataError(f"{t.label}: degenerate design, an accident or development period has no positive claim")


def _huber_weights(r: np.ndarray, c: float | None) -> np.ndarray:
    if c is None:
        return np.ones_like(r)
    a = np.abs(r)
    return np.where(a <= c, 1.0, c / np.where(a > 0, a, 1.0))


def _irls_step(y: np.ndarray, X: np.ndarray, beta: np.ndarray, c: float | None) -> np.ndarray:
    """One reweighted least-squares update of the (Huber-weighted) quasi-likelihood equations."""
    eta = X @ beta
    mu = np.exp(eta)
    w = _huber_weights((y - mu) / np.sqrt(mu), c)
    W = w * mu
    z = eta + (y - mu) / mu
    return np.linalg.solve(X.T @ (W[:, None] * X), X.T @ (W * z))


def _squarem(y, X, beta, c, tol, budget) -> tuple[np.ndarray, int]:
    """Squared extrapolation of the reweighting map; same fixed point, far fewer steps when
    plain reweighting crawls along a nearly flat direction.

    Returns the final iterate and the number of map evaluations, negated if the budget ran
    out or an iterate left the finite range.
    """
    used = 0
    with np.errstate(all="ignore"):
        while used < budget:
            try:
                b1 = _irls_step(y, X, beta, c)
                b2 = _irls_step(y, X, b1, c)
            except np.linalg.LinAlgError:
                return beta, -max(used, 1)
            used += 2
            if not (np.all(np.isfinite(b1)) and np.all(np.isfinite(b2))):
                return beta, -used
            r = b1 - beta
            if np.max(np.abs(r)) < tol * max(1.0, np.max(np.abs(b1))):
                return b1, used - 1
            v = b2 - 2 * b1 + beta
            nv = np.linalg.norm(v)
            if nv == 0:
                return b2, used
            alpha = min(-np.linalg.norm(r) / nv, -1.0)
            jump = beta - 2 * alpha * r + alpha**2 * v
            try:
                nxt = _irls_step(y, X, jump, c)
            except np.linalg.LinAlgError:
                nxt = b2
            used += 1
            usable = np.all(np.isfinite(nxt)) and np.max(np.abs(X @ nxt)) < 700  # exp stays finite
            beta = nxt if usable else b2
    return beta, -used


def _irls(
    y: np.ndarray,
    X: np.ndarray,
    c: float | None,
    beta0: np.ndarray | None,
    mu0: np.ndarray,
    tol: float,
    maxit: int,
) -> tuple[np.ndarray, int]:
    if beta0 is None:
        eta = np.log(mu0)
        mu = mu0
        w = _huber_weights((y - mu) / np.sqrt(mu), c)
        beta = np.linalg.solve(X.T @ ((w * mu)[:, None] * X), X.T @ (w * mu * (eta + (y - mu) / mu)))
    else:
        beta = beta0.copy()
    # plain reweighting first; Huber fits that crawl get squared extrapolation, and if
    # that does not settle either, plain reweighting resumes from where it stopped
    plain = maxit if c is None else min(maxit, 50)
    for it in range(1, plain + 1):
        new = _irls_step(y, X, beta, c)
        change = np.max(np.abs(new - beta))
        beta = new
        if change < tol * max(1.0, np.max(np.abs(beta))):
            return beta, it
    if c is None:
        raise ConvergenceError(f"IRLS did not converge in {maxit} iterations (last change {change:.3g})")
    start = beta
    beta, used = _squarem(y, X, beta, c, tol, min(SQUAREM_BUDGET, maxit - plain))
    if used > 0:
        return beta, plain + used
    beta = start
    for it in range(plain - used + 1, maxit + 1):
        new = _irls_step(y, X, beta, c)
        change = np.max(np.abs(new - beta))
        beta = new
        if change < tol * max(1.0, np.max(np.abs(beta))):
            return beta, it
    raise ConvergenceError(f"IRLS did not converge in {maxit} iterations (last change {change:.3g})")


def _make_fit(t: Triangle, cells, X, beta, c, iterations) -> GlmFit:
    n_acc, n_dev = t.shape
    y = t.values[cells[:, 0], cells[:, 1]]
    mu = np.exp(X @ beta)
    r = (y - mu) / np.sqrt(mu)
    w = _huber_weights(r, c)
    fitted = np.full(t.shape, np.nan)
    weights = np.full(t.shape, np.nan)
    fitted[cells[:, 0], cells[:, 1]] = mu
    weights[cells[:, 0], cells[:, 1]] = w
    dof = len(y) - X.shape[1]
    dispersion = float(np.sum(w * r**2) / dof) if dof > 0 else float("nan")
    return GlmFit(
        intercept=float(beta[0]),
        row_effects=beta[1:n_acc].copy(),
        col_effects=beta[n_acc:].copy(),
        fitted=fitted,
        dispersion=dispersion,
        robust_weights=weights,
        threshold_used=c,
        iterations=iterations,
        label=t.label,
    )


def _start(t: Triangle, cells: np.ndarray) -> np.ndarray:
    vals = np.where(t.mask, t.values, np.nan)
    row_mean = np.nanmean(vals, axis=1)
    y = t.values[cells[:, 0], cells[:, 1]]
    return np.maximum(y, 0.5 * row_mean[cells[:, 0]])


def fit_odp(t: Triangle, tol: float = 1e-10, maxit: int = ODP_MAXIT) -> GlmFit:
    """Maximum quasi-likelihood ODP fit by IRLS.

    Iteration stops when no coefficient moves by more than ``tol * max(1, max|coef|)``.
    """
    _check_design(t)
    cells, X = _design(*t.shape)
    y = t.values[cells[:, 0], cells[:, 1]]
    beta, it = _irls(y, X, None, None, _start(t, cells), tol, maxit)
    return _make_fit(t, cells, X, beta, None, it)


def fit_huber_odp(t: Triangle, c: float, tol: float = 1e-10, maxit: int = 20000) -> GlmFit:
    """Huber M-estimate with weights min(1, c/|r|) on the Pearson residuals, started at the ODP fit.

    Plain reweighting can crawl for thousands of steps when a short column has all its cells
    clipped, so the fit is accelerated and the default budget counts reweighting steps.
    """
    _check_design(t)
    if c <= 0:
        raise ValueError("Huber threshold must be positive")
    cells, X = _design(*t.shape)
    y = t.values[cells[:, 0], cells[:, 1]]
    beta0, _ = _irls(y, X, None, None, _start(t, cells), tol, ODP_MAXIT)
    beta, it = _irls(y, X, c, beta0, None, tol, maxit)
    return _make_fit(t, cells, X, beta, c, it)


def pearson_residuals(t: Triangle, fit: GlmFit) -> np.ndarray:
    """Residuals of the observed cells in row-major order."""
    mask = t.mask
    mu = fit.fitted[mask]
    if np.any(mu <= 0):
        raise DataError("non-positive fitted value")
    return (t.values[mask] - mu) / np.sqrt(mu)


def fit_robust_odp(
    t: Triangle,
    c0: float = HUBER_C0,
    quantile: float = 0.75,
    tol: float = 1e-10,
    maxit: int = 20000,
) -> GlmFit:
    """Two-stage robust fit.

    Stage 1 uses the Huber constant ``c0``; stage 2 refits once with the threshold set to
    the ``quantile`` (type 7) of the absolute stage-1 residuals.  That threshold is floored
    at round-off level so that an exactly fitting triangle is never downweighted.
    """
    stage1 = fit_huber_odp(t, c0, tol, maxit)
    c2 = float(np.quantile(np.abs(pearson_residuals(t, stage1)), quantile))
    c2 = max(c2, 1e-8 * float(np.sqrt(np.nanmax(stage1.fitted))))
    return fit_huber_odp(t, c2, tol, maxit)


@dataclass(frozen=True, eq=False)
class ResidualPanel:
    """n x p residual matrix with one row per observed cell and one column per triangle."""

    rows: np.ndarray
    index: tuple[CellIndex, ...]
    fits: tuple[GlmFit, ...]
    labels: tuple[str, ...] = field(default=())

    def __post_init__(self) -> None:
        rows = np.array(self.rows, dtype=float)
        if rows.ndim != 2 or rows.shape != (len(self.index), len(self.fits)):
            raise DataError(f"residual matrix shape {rows.shape} does not match index/fits")
        rows.setflags(write=False)
        object.__setattr__(self, "rows", rows)
        if not self.labels:
            object.__setattr__(self, "labels", tuple(f.label for f in self.fits))

    @property
    def n(self) -> int:
        return self.rows.shape[0]

    @property
    def p(self) -> int:
        return self.rows.shape[1]

    def with_rows(self, rows: np.ndarray) -> "ResidualPanel":
        return replace(self, rows=np.asarray(rows, dtype=float))

    def row_of(self, i: int, j: int) -> int:
        for c in self.index:
            if c.i == i and c.j == j:
                return c.row
        raise KeyError((i, j))

    def cell_labels(self, flags: np.ndarray | None = None) -> list[str]:
        sel = range(self.n) if flags is None else np.flatnonzero(flags)
        return [self.index[k].label for k in sel]

    def to_dict(self) -> dict:
        return {
            "labels": list(self.labels),
            "cells": [
                {"i": c.i, "j": c.j, "residuals": self.rows[c.row].tolist()} for c in self.index
            ],
            "fits": [f.to_dict() for f in self.fits],
        }

    def dump_json(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2), encoding="utf-8")


def residual_panel(panel: TrianglePanel, fits: list[GlmFit] | None = None, **fit_kwargs) -> ResidualPanel:
    """Fit the robust GLM to every triangle (unless ``fits`` is given) and stack the residuals."""
    if fits is None:
        fits = [fit_robust_odp(t, **fit_kwargs) for t in panel]
    if len(fits) != panel.p:
        raise DataError("one fit per triangle is required")
    cols = [pearson_residuals(t, f) for t, f in zip(panel, fits)]
    return ResidualPanel(np.column_stack(cols), panel.cells, tuple(fits), tuple(panel.labels))


def backtransform(adjusted: ResidualPanel) -> TrianglePanel:
    """Rebuild incremental claims X = mu + r * sqrt(mu) from (possibly adjusted) residuals."""
    tris = []
    for k, fit in enumerate(adjusted.fits):
        mask = staircase_mask(*fit.shape)
        mu = fit.fitted[mask]
        values = np.full(fit.shape, np.nan)
        values[mask] = mu + adjusted.rows[:, k] * np.sqrt(mu)
        tris.append(Triangle(values, "incremental", adjusted.labels[k]))
    return TrianglePanel(tuple(tris))
