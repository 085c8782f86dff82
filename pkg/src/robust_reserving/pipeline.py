"""End-to-end robust reserving: robust GLM residuals, detection, adjustment, chain-ladder."""

from __future__ import annotations

import csv
import dataclasses
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import bagplot as bp
from . import outlyingness as ao
from .chainladder import ReserveReport, compare_reports, fit_mcl, format_reports, predict_reserves
from .depth import DepthIndex
from .errors import DataError, ReservingError
from .glm import ResidualPanel, backtransform, residual_panel
from .mcd import fast_mcd, mcd_detect, robust_md2, winsorize
from .triangle import TrianglePanel, factor_shift, load_manifest, zero_negatives

logger = logging.getLogger(__name__)

TECHNIQUES = (
    "bagplot-fence",
    "bagplot-loop",
    "bd-unbounded",
    "bd-limited",
    "ao-traditional",
    "ao-chi",
    "ao-fence",
    "mcd",
)


class PipelineError(ReservingError):
    """A module error annotated with the pipeline step in which it occurred."""

    def __init__(self, step: str, cause: Exception):
        super().__init__(f"{step}: {cause}")
        self.step = step
        self.cause = cause


@dataclass
class PipelineConfig:
    manifest: str | None = None
    technique: str = "bagplot-fence"
    fence_factor: float | None = None  # None: sqrt(chi2_{fence_quantile, p})
    fence_quantile: float = 0.99
    u: float = 15.0
    m: int | None = None  # AO directions; None: 250 p
    seed: int = 0
    ao_fence_factor: float = 3.0
    mcd_alpha: float = 0.5
    mcd_restarts: int = 500
    mcd_reweight: bool = True
    mcd_small_sample: bool = True
    q_detect: float = 0.975
    q_adjust: float = 0.95
    fallback_tail: int = 3
    interpolation: str = "minkowski"
    region_method: str | None = None
    out: str | None = None

    def __post_init__(self) -> None:
        self.validate()

    def validate(self) -> None:
        if self.technique not in TECHNIQUES:
            raise ValueError(f"unknown technique {self.technique!r}; choose from {', '.join(TECHNIQUES)}")
        if self.fence_factor is not None and self.fence_factor <= 0:
            raise ValueError("fence_factor must be positive")
        # with the default chi-square factor p is unknown here; detect() repeats the check
        if self.technique == "bd-limited" and self.u <= (self.fence_factor or 0.0):
            raise ValueError("u must exceed the fence factor")
        if self.m is not None and self.m < 1:
            raise ValueError("m must be positive")
        if self.mcd_restarts < 1 or self.fallback_tail < 0:
            raise ValueError("mcd_restarts must be positive and fallback_tail non-negative")
        for name in ("fence_quantile", "q_detect", "q_adjust"):
            if not 0 < getattr(self, name) < 1:
                raise ValueError(f"{name} must lie in (0, 1)")
        if not 0.5 <= self.mcd_alpha <= 1:
            raise ValueError("mcd_alpha must lie in [0.5, 1]")
        if self.interpolation not in ("radial", "minkowski"):
            raise ValueError("interpolation must be 'radial' or 'minkowski'")
        if self.region_method not in (None, "contour", "hull"):
            raise ValueError("region_method must be 'contour' or 'hull'")

    @classmethod
    def from_dict(cls, data: dict, base_dir: Path | None = None) -> "PipelineConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown configuration keys: {sorted(unknown)}")
        cfg = cls(**data)
        if cfg.manifest and base_dir is not None and not Path(cfg.manifest).is_absolute():
            cfg.manifest = str(base_dir / cfg.manifest)
        return cfg

    @classmethod
    def from_json(cls, path: str | Path) -> "PipelineConfig":
        path = Path(path)
        return cls.from_dict(json.loads(path.read_text(encoding="utf-8")), path.parent)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclass(frozen=True, eq=False)
class OutlierReport:
    technique: str
    residuals: ResidualPanel
    adjusted: ResidualPanel
    flags: np.ndarray
    scores: dict  # name -> per-row array
    original_claims: TrianglePanel
    robust_claims: TrianglePanel
    extra: dict = field(default_factory=dict)

    @property
    def count(self) -> int:
        return int(self.flags.sum())

    @property
    def flagged_cells(self) -> list[tuple[int, int]]:
        return [(self.residuals.index[k].i, self.residuals.index[k].j) for k in np.flatnonzero(self.flags)]

    def rows(self) -> list[dict]:
        out = []
        for c in self.residuals.index:
            row = {"i": c.i, "j": c.j, "flag": bool(self.flags[c.row])}
            for name, values in self.scores.items():
                row[name] = _plain(values[c.row])
            for k, label in enumerate(self.residuals.labels):
                row[f"{label}_claim"] = float(self.original_claims[k].values[c.i - 1, c.j - 1])
                row[f"{label}_adjusted"] = float(self.robust_claims[k].values[c.i - 1, c.j - 1])
            out.append(row)
        return out

    def to_dict(self) -> dict:
        return {
            "technique": self.technique,
            "outlier_count": self.count,
            "outliers": [f"X[{i},{j}]" for i, j in self.flagged_cells],
            "extra": {k: _plain(v) for k, v in self.extra.items()},
            "cells": self.rows(),
        }

    def write_csv(self, path: str | Path) -> None:
        rows = self.rows()
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            writer = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
            writer.writeheader()
            writer.writerows(rows)


def _plain(v):
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.floating,)):
        return float(v)
    if isinstance(v, (np.bool_,)):
        return bool(v)
    if isinstance(v, dict):
        return {k: _plain(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_plain(x) for x in v]
    return v


@dataclass(frozen=True, eq=False)
class PipelineResult:
    config: PipelineConfig
    outliers: OutlierReport
    original: ReserveReport
    robust: ReserveReport
    model: object  # BagplotModel, AoModel or McdFit
    diagnostics: dict

    def to_dict(self) -> dict:
        return {
            "config": self.config.to_dict(),
            "outliers": self.outliers.to_dict(),
            "original": self.original.to_dict(),
            "robust": self.robust.to_dict(),
            "diagnostics": _plain(self.diagnostics),
        }

    def table(self) -> str:
        return format_reports([self.original, self.robust], {self.robust.name: self.outliers.count})


def _step(name: str):
    def wrap(fn):
        def inner(*args, **kwargs):
            try:
                return fn(*args, **kwargs)
            except PipelineError:
                raise
            except ReservingError as exc:
                raise PipelineError(name, exc) from exc
        return inner
    return wrap


@_step("prepare")
def prepare_panel(panel: TrianglePanel) -> tuple[TrianglePanel, dict]:
    if panel.kind != "incremental":
        raise DataError("the pipeline expects incremental triangles")
    tris, info = [], {}
    for t in panel:
        z, count = zero_negatives(t)
        tris.append(z)
        info[t.label] = {"negatives_zeroed": count, "max_factor_shift": factor_shift(t, z) if count else 0.0}
    return TrianglePanel(tuple(tris)), info


@_step("robust GLM")
def _residuals(panel: TrianglePanel) -> ResidualPanel:
    return residual_panel(panel)


@dataclass(frozen=True, eq=False)
class Detection:
    flags: np.ndarray  # rows flagged as outliers
    scores: dict  # name -> per-row array
    model: object  # BagplotModel, AoModel or McdFit
    extra: dict


@_step("detection")
def detect(res: ResidualPanel, cfg: PipelineConfig, index: DepthIndex | None = None) -> Detection:
    """Score the residual rows and flag outliers with the configured technique.

    A precomputed ``index`` of ``res.rows`` can be shared between depth-based techniques.
    """
    tech = cfg.technique
    p = res.p
    extra: dict = {}
    if tech.startswith("bagplot") or tech.startswith("bd"):
        method = cfg.region_method or bp.default_region_method(res.n, p)
        if index is None or index.method != method:
            index = DepthIndex(res.rows, method)
        f = bp.chi_fence_factor(p, cfg.fence_quantile) if cfg.fence_factor is None else cfg.fence_factor
        if tech == "bd-limited" and cfg.u <= f:
            raise ValueError("u must exceed the fence factor")
        model = bp.build_bagplot(res, f, interpolation=cfg.interpolation, index=index)
        scores = bp.bagdistance(res, model)
        extra["tukey_median"] = model.center
        extra["fence_factor"] = f
        extra["region_method"] = method
        flags = model.flags if tech.startswith("bagplot") else bp.detect_bd(scores, f)
        return Detection(flags, {"depth": index.depths, "bd": scores.bd}, model, extra)
    if tech.startswith("ao"):
        scores = ao.ao_scores(res, cfg.m, cfg.seed)
        variant = {"ao-traditional": "traditional", "ao-chi": "chi_median", "ao-fence": "fence"}[tech]
        model = ao.build_ao_model(res, scores, variant, fence_factor=cfg.ao_fence_factor)
        extra["cutoff_traditional"] = ao.ao_cutoff_traditional(scores)
        extra["cutoff_chi"] = ao.ao_cutoff_chi(scores, p)
        extra["directions"] = scores.m
        extra["seed"] = cfg.seed
        extra["ao_median"] = model.center
        flags = model.flags
        if tech == "ao-fence":
            # the traditional cutoff flags are moved onto the fence; rows outside it are reported
            extra["outside_fence"] = res.cell_labels(model.flags)
            flags = scores.ao > extra["cutoff_traditional"]
        return Detection(flags, {"ao": scores.ao}, model, extra)
    fit = fast_mcd(
        res,
        alpha=cfg.mcd_alpha,
        seed=cfg.seed,
        restarts=cfg.mcd_restarts,
        reweight=cfg.mcd_reweight,
        small_sample=cfg.mcd_small_sample,
    )
    md2 = robust_md2(res, fit)
    extra["location"] = fit.location
    extra["scatter"] = fit.scatter
    return Detection(mcd_detect(md2, p, cfg.q_detect), {"md2": md2}, fit, extra)


@_step("adjustment")
def adjust(res: ResidualPanel, det: Detection, cfg: PipelineConfig) -> ResidualPanel:
    """Move the flagged rows as the configured technique prescribes."""
    tech, model, flags = cfg.technique, det.model, det.flags
    if tech == "bagplot-fence":
        adjusted = bp.adjust_to_polytope(res, model.fence, flags, model.center)
        again = bp.build_bagplot(
            adjusted, model.fence_factor, interpolation=cfg.interpolation, method=det.extra["region_method"]
        )
        det.extra["redetected_after_adjustment"] = res.cell_labels(again.flags)
        return adjusted
    if tech == "bagplot-loop":
        return bp.adjust_to_polytope(res, model.loop, flags, model.center)
    if tech.startswith("bd"):
        scores = bp.BdScore(det.scores["bd"], np.zeros_like(res.rows))
        f = model.fence_factor
        if tech == "bd-unbounded":
            return bp.adjust_bd_unbounded(res, scores, f, model.center)
        return bp.adjust_bd_limited(res, scores, f, cfg.u, model.center)
    if tech.startswith("ao"):
        return ao.ao_adjust(res, model, flags, target="fence" if tech == "ao-fence" else "loop")
    return winsorize(res, model, flags, cfg.q_adjust)


@_step("chain ladder")
def _reserves(original: TrianglePanel, robust: TrianglePanel, cfg: PipelineConfig, name: str):
    base = predict_reserves(fit_mcl(original, cfg.fallback_tail), original, "original")
    fit = fit_mcl(robust, cfg.fallback_tail)
    rob = compare_reports(predict_reserves(fit, robust, name), base)
    return base, rob, fit.diagnostics


def run_pipeline(config: PipelineConfig, panel: TrianglePanel | None = None) -> PipelineResult:
    """Run every step for one technique; ``panel`` overrides the manifest in ``config``."""
    if panel is None:
        if not config.manifest:
            raise DataError("no panel manifest configured")
        try:
            panel = load_manifest(config.manifest)
        except ReservingError as exc:
            raise PipelineError("load", exc) from exc
    prepared, prep_info = prepare_panel(panel)
    res = _residuals(prepared)
    det = detect(res, config)
    adjusted = adjust(res, det, config)
    # an untouched panel skips the backtransform so the two reports agree exactly
    robust_panel = prepared if np.array_equal(adjusted.rows, res.rows) else backtransform(adjusted)
    base, rob, mcl_diag = _reserves(prepared, robust_panel, config, config.technique)
    report = OutlierReport(config.technique, res, adjusted, det.flags, det.scores, prepared, robust_panel, det.extra)
    diagnostics = {
        "preparation": prep_info,
        "glm_thresholds": [f.threshold_used for f in res.fits],
        "chain_ladder": mcl_diag,
    }
    return PipelineResult(config, report, base, rob, det.model, diagnostics)


def write_outputs(result: PipelineResult, out: str | Path) -> list[Path]:
    """Write the JSON report, the outlier CSV and the text table; return the paths."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    stem = result.config.technique
    paths = [out / f"{stem}_report.json", out / f"{stem}_outliers.csv", out / f"{stem}_reserves.txt"]
    paths[0].write_text(json.dumps(result.to_dict(), indent=2, sort_keys=True), encoding="utf-8")
    result.outliers.write_csv(paths[1])
    paths[2].write_text(result.table() + "\n", encoding="utf-8")
    return paths
