"""Multivariate chain-ladder: seemingly-unrelated development factors and reserve MSEP.

For development period k the cumulative claims follow
C_{i,k+1} = diag(F_k) C_{i,k} + diag(sqrt(C_{i,k})) eps_{i,k},  Cov(eps_{i,k}) = Sigma_k,
across the N triangles of a panel.  F_k is estimated by iterated feasible GLS on the
rescaled regression y = C_{k+1} / sqrt(C_k) on x = sqrt(C_k).  The last ``fallback_tail``
periods are estimated triangle by triangle.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConvergenceError, DataError
from .triangle import Triangle, TrianglePanel

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class MclFit:
    dev_factors: np.ndarray  # (J-1) x N
    sigma: np.ndarray  # (J-1) x N x N
    factor_cov: np.ndarray  # (J-1) x N x N, estimation covariance of F_k
    fallback_start: int  # first 0-based period estimated univariately
    iterations: np.ndarray  # GLS iterations per period (0 for univariate periods)
    diagnostics: list = field(default_factory=list)

    @property
    def n_periods(self) -> int:
        return self.dev_factors.shape[0]

    def correlations(self) -> np.ndarray:
        out = np.empty_like(self.sigma)
        for k, s in enumerate(self.sigma):
            d = np.sqrt(np.clip(np.diag(s), 1e-300, None))
            out[k] = s / np.outer(d, d)
        return out


def _cumulative_array(panel: TrianglePanel) -> np.ndarray:
    """N x I x J cumulative claims; negative increments are summed as they are."""
    out = []
    for t in panel:
        if t.kind == "cumulative":
            out.append(np.array(t.values))
        else:
            mask = t.mask
            out.append(np.where(mask, np.cumsum(np.where(mask, t.values, 0.0), axis=1), np.nan))
    return np.array(out)


def _mack_extrapolate(previous: list[float]) -> float:
    if len(previous) >= 2:
        a, b = previous[-2], previous[-1]
        return min(b * b / a if a > 0 else b, a, b)
    if previous:
        return previous[-1]
    return 0.0


def fit_mcl(
    panel: TrianglePanel,
    fallback_tail: int = 3,
    tol: float = 1e-8,
    maxit: int = 100,
    max_correlation: float = 0.99,
    univariate_on_clamp: bool = False,
) -> MclFit:
    """Estimate development factors, covariance parameters and factor covariances.

    Cross-triangle correlations with magnitude above ``max_correlation`` are clamped and
    recorded in ``diagnostics``; with ``univariate_on_clamp`` the period is refitted
    univariately instead.
    """
    C = _cumulative_array(panel)
    N, I, J = C.shape
    if J < 2:
        raise DataError("need at least two development periods")
    if fallback_tail < 0:
        raise ValueError("fallback_tail must be non-negative")
    n_periods = J - 1
    fallback_start = max(0, n_periods - fallback_tail)
    F = np.zeros((n_periods, N))
    S = np.zeros((n_periods, N, N))
    V = np.zeros((n_periods, N, N))
    iters = np.zeros(n_periods, dtype=int)
    diagnostics: list = []
    for k in range(n_periods):
        nk = I - 1 - k
        if nk < 1:
            raise DataError(f"period {k + 1} has no observed development")
        ck, ck1 = C[:, :nk, k], C[:, :nk, k + 1]
        if np.any(ck <= 0):
            raise DataError(f"non-positive cumulative claims in development period {k + 1}")
        x = np.sqrt(ck)
        y = ck1 / x
        f_ols = ck1.sum(axis=1) / ck.sum(axis=1)

        def residual_cov(f: np.ndarray) -> np.ndarray:
            e = y - f[:, None] * x
            return e @ e.T / (nk - 1)

        joint = k < fallback_start and N > 1 and nk >= 2
        if joint:
            sig = residual_cov(f_ols)
            sig, clamped = _clamp_correlation(sig, max_correlation)
            if clamped:
                diagnostics.append({"period": k + 1, "issue": "correlation clamped"})
                if univariate_on_clamp:
                    joint = False
        if joint:
            f = f_ols.copy()
            for it in range(1, maxit + 1):
                try:
                    inv = np.linalg.inv(sig)
                except np.linalg.LinAlgError:
                    diagnostics.append({"period": k + 1, "issue": "singular sigma, diagonal used"})
                    inv = np.diag(1 / np.diag(sig))
                A = inv * (x @ x.T)
                rhs = (inv * (x @ y.T)).sum(axis=1)
                new = np.linalg.solve(A, rhs)
                change = np.max(np.abs(new - f) / np.abs(f))
                f = new
                sig, _ = _clamp_correlation(residual_cov(f), max_correlation)
                if change < tol:
                    break
            else:
                raise ConvergenceError(f"GLS for development period {k + 1} did not converge")
            inv = np.linalg.inv(sig)
            A = inv * (x @ x.T)
            F[k], S[k], V[k], iters[k] = f, sig, np.linalg.inv(A), it
        else:
            if nk >= 2:
                s2 = np.diag(residual_cov(f_ols))
            else:
                s2 = np.array([_mack_extrapolate([S[j, m, m] for j in range(k)]) for m in range(N)])
            F[k] = f_ols
            S[k] = np.diag(s2)
            V[k] = np.diag(s2 / ck.sum(axis=1))
    return MclFit(F, S, V, fallback_start, iters, diagnostics)


def _clamp_correlation(sig: np.ndarray, bound: float) -> tuple[np.ndarray, bool]:
    d = np.sqrt(np.diag(sig))
    if np.any(d <= 0):
        return sig, False
    rho = sig / np.outer(d, d)
    off = ~np.eye(len(d), dtype=bool)
    if not np.any(np.abs(rho[off]) > bound):
        return sig, False
    rho[off] = np.clip(rho[off], -bound, bound)
    return rho * np.outer(d, d), True


@dataclass(frozen=True)
class ReserveReport:
    labels: tuple[str, ...]
    reserves: tuple[float, ...]
    rmse: tuple[float, ...]
    total_reserve: float
    total_rmse: float
    reserve_diff_pct: float | None = None
    rmse_diff_pct: float | None = None
    name: str = ""
    negative_projections: int = 0

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "triangles": [
                {"label": l, "reserve": r, "rmse": m} for l, r, m in zip(self.labels, self.reserves, self.rmse)
            ],
            "total_reserve": self.total_reserve,
            "total_rmse": self.total_rmse,
            "reserve_diff_pct": self.reserve_diff_pct,
            "rmse_diff_pct": self.rmse_diff_pct,
            "negative_projections": self.negative_projections,
        }

    def dump_json(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2), encoding="utf-8")


def predict_reserves(fit: MclFit, panel: TrianglePanel, name: str = "") -> ReserveReport:
    """Complete the triangles and compute reserves with their conditional MSEP.

    The MSEP of the aggregated ultimate claims is propagated period by period:
    M_{k+1} = B_k M_k B_k + sum_i sqrt(C_ik C_ik') * Sigma_k + D_k Cov(F_k) D_k,
    with B_k = diag(F_k), D_k = diag of the summed projected claims and the sum over the
    accident periods that still need projecting.
    """
    C = _cumulative_array(panel)
    N, I, J = C.shape
    full = C.copy()
    latest = np.zeros((N, I))
    for i in range(I):
        last = min(I - 1 - i, J - 1)
        latest[:, i] = C[:, i, last]
        for k in range(last, J - 1):
            full[:, i, k + 1] = fit.dev_factors[k] * full[:, i, k]
    negatives = int(np.sum(full[~np.isnan(full)] < 0))
    if negatives:
        logger.warning("%d negative projected cumulative claims", negatives)
    reserves = full[:, :, J - 1].sum(axis=1) - latest.sum(axis=1)
    M = np.zeros((N, N))
    for k in range(J - 1):
        rows = [i for i in range(I) if I - 1 - i <= k]
        if not rows:
            continue
        proj = full[:, rows, k]
        B = np.diag(fit.dev_factors[k])
        process = sum(np.sqrt(np.abs(np.outer(c, c))) for c in proj.T) * fit.sigma[k]
        D = np.diag(proj.sum(axis=1))
        M = B @ M @ B + process + D @ fit.factor_cov[k] @ D
    return ReserveReport(
        labels=tuple(panel.labels),
        reserves=tuple(float(r) for r in reserves),
        rmse=tuple(float(v) for v in np.sqrt(np.diag(M))),
        total_reserve=float(reserves.sum()),
        total_rmse=float(np.sqrt(M.sum())),
        name=name,
        negative_projections=negatives,
    )


def compare_reports(robust: ReserveReport, original: ReserveReport) -> ReserveReport:
    """Attach percentage differences of the totals relative to ``original``."""
    if len(robust.reserves) != len(original.reserves):
        raise DataError("reports cover different panels")
    if original.total_reserve == 0 or original.total_rmse == 0:
        raise DataError("baseline totals must be non-zero")
    return ReserveReport(
        robust.labels,
        robust.reserves,
        robust.rmse,
        robust.total_reserve,
        robust.total_rmse,
        100 * (robust.total_reserve - original.total_reserve) / original.total_reserve,
        100 * (robust.total_rmse - original.total_rmse) / original.total_rmse,
        robust.name,
        robust.negative_projections,
    )


def format_reports(reports: list[ReserveReport], count: dict[str, int] | None = None) -> str:
    """Aligned text table: one row per report, reserve and RMSE per triangle and in total."""
    if not reports:
        return ""
    labels = reports[0].labels
    head = ["technique", "outliers"]
    for l in labels:
        head += [f"{l} reserve", f"{l} RMSE"]
    head += ["total reserve", "total RMSE", "reserve diff %", "RMSE diff %"]
    body = []
    for r in reports:
        row = [r.name or "-", str(count.get(r.name, "-")) if count else "-"]
        for res, m in zip(r.reserves, r.rmse):
            row += [f"{res:,.0f}", f"{m:,.0f}"]
        row += [f"{r.total_reserve:,.0f}", f"{r.total_rmse:,.0f}"]
        row += ["-" if r.reserve_diff_pct is None else f"{r.reserve_diff_pct:.2f}"]
        row += ["-" if r.rmse_diff_pct is None else f"{r.rmse_diff_pct:.2f}"]
        body.append(row)
    widths = [max(len(h), *(len(b[c]) for b in body)) for c, h in enumerate(head)]
    lines = ["  ".join(h.rjust(w) for h, w in zip(head, widths))]
    lines += ["  ".join(v.rjust(w) for v, w in zip(b, widths)) for b in body]
    return "\n".join(lines)


def single_triangle_panel(t: Triangle) -> TrianglePanel:
    return TrianglePanel((t,))
