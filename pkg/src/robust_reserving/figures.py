"""Static figures: SVG bagplots for bivariate panels and JSON meshes for trivariate ones."""

from __future__ import annotations

import json
import logging
from pathlib import Path

import numpy as np

from .bagplot import BagplotModel
from .geometry import Polytope
from .mcd import McdFit, tolerance_ellipsoid
from .outlyingness import AoModel

logger = logging.getLogger(__name__)

SIZE = 560
MARGIN = 40
STYLE = {
    "fence": 'fill="none" stroke="#888888" stroke-dasharray="6 4"',
    "loop": 'fill="#dbe8f6" stroke="#6f9fd8"',
    "bag": 'fill="#8fb4e3" stroke="#2f5f9f"',
    "ellipse": 'fill="none" stroke="#2f8f4f" stroke-width="1.5"',
}


def _num(v: float) -> str:
    s = f"{v:.2f}"
    return "0.00" if s == "-0.00" else s


def figure_layers(model) -> tuple[dict[str, np.ndarray], np.ndarray]:
    """Named outlines (drawn back to front) and the center marker of a fitted model."""
    if isinstance(model, (BagplotModel, AoModel)):
        layers = {}
        if model.fence is not None:
            layers["fence"] = model.fence.vertices
        layers["loop"] = model.loop.vertices
        layers["bag"] = model.bag.vertices
        return layers, model.center
    if isinstance(model, McdFit):
        return {"ellipse": np.array(tolerance_ellipsoid(model)["vertices"])}, model.location
    raise TypeError(f"no figure layers for {type(model).__name__}")


def render_svg(
    points: np.ndarray,
    flags: np.ndarray,
    layers: dict[str, np.ndarray],
    center: np.ndarray,
    labels: tuple[str, str] = ("x", "y"),
    title: str = "",
) -> str:
    """SVG text of a 2D display; identical inputs give identical bytes."""
    points = np.asarray(points, dtype=float)
    flags = np.asarray(flags, dtype=bool)
    everything = np.vstack([points, center[None, :], *layers.values()])
    lo, hi = everything.min(axis=0), everything.max(axis=0)
    span = np.where(hi > lo, hi - lo, 1.0)
    inner = SIZE - 2 * MARGIN

    def xy(p: np.ndarray) -> tuple[str, str]:
        u = MARGIN + (p[0] - lo[0]) / span[0] * inner
        v = SIZE - MARGIN - (p[1] - lo[1]) / span[1] * inner
        return _num(u), _num(v)

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE}" viewBox="0 0 {SIZE} {SIZE}">',
        f'<rect width="{SIZE}" height="{SIZE}" fill="#ffffff"/>',
    ]
    if title:
        out.append(f'<text x="{SIZE // 2}" y="24" text-anchor="middle" font-size="14">{title}</text>')
    out.append(f'<text x="{SIZE // 2}" y="{SIZE - 8}" text-anchor="middle" font-size="12">{labels[0]}</text>')
    out.append(
        f'<text x="12" y="{SIZE // 2}" text-anchor="middle" font-size="12" '
        f'transform="rotate(-90 12 {SIZE // 2})">{labels[1]}</text>'
    )
    for name, verts in layers.items():
        pts = " ".join(",".join(xy(v)) for v in verts)
        out.append(f'<polygon id="{name}" points="{pts}" {STYLE[name]}/>')
    out.append('<g id="points" fill="#333333">')
    for p in points[~flags]:
        u, v = xy(p)
        out.append(f'<circle cx="{u}" cy="{v}" r="2.5"/>')
    out.append("</g>")
    if flags.any():
        out.append('<g id="outliers" fill="#d62728">')
        for p in points[flags]:
            u, v = xy(p)
            out.append(f'<circle cx="{u}" cy="{v}" r="4"/>')
        out.append("</g>")
    u, v = xy(center)
    out.append(
        f'<g id="center" stroke="#000000" stroke-width="2"><line x1="{_num(float(u) - 6)}" y1="{v}" '
        f'x2="{_num(float(u) + 6)}" y2="{v}"/><line x1="{u}" y1="{_num(float(v) - 6)}" '
        f'x2="{u}" y2="{_num(float(v) + 6)}"/></g>'
    )
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _mesh(poly: Polytope) -> dict:
    return {"vertices": np.round(poly.vertices, 10).tolist(), "faces": poly.faces.tolist()}


def mesh_layers(model) -> dict[str, dict]:
    """JSON-ready vertex/face meshes of a trivariate model."""
    if isinstance(model, (BagplotModel, AoModel)):
        out = {"bag": _mesh(model.bag), "loop": _mesh(model.loop)}
        if model.fence is not None:
            out["fence"] = _mesh(model.fence)
        return out
    if isinstance(model, McdFit):
        mesh = tolerance_ellipsoid(model)
        return {"ellipsoid": {"vertices": np.round(mesh["vertices"], 10).tolist(), "faces": mesh["faces"]}}
    raise TypeError(f"no meshes for {type(model).__name__}")


def emit_figures(
    points: np.ndarray,
    flags: np.ndarray,
    model,
    out_dir: str | Path,
    stem: str,
    labels: tuple[str, ...] = (),
) -> list[Path]:
    """Write an SVG (p = 2) or one mesh JSON per layer (p = 3); other dimensions are skipped."""
    points = np.asarray(points, dtype=float)
    p = points.shape[1]
    out_dir = Path(out_dir)
    if p not in (2, 3):
        logger.warning("figures are drawn for 2 or 3 triangles only; %d given, skipped", p)
        return []
    out_dir.mkdir(parents=True, exist_ok=True)
    if p == 2:
        layers, center = figure_layers(model)
        names = tuple(labels) if len(labels) == 2 else ("triangle 1", "triangle 2")
        path = out_dir / f"{stem}.svg"
        path.write_text(render_svg(points, flags, layers, center, names, stem), encoding="utf-8")
        return [path]
    paths = []
    for name, mesh in mesh_layers(model).items():
        path = out_dir / f"{stem}_{name}.json"
        path.write_text(json.dumps(mesh, sort_keys=True) + "\n", encoding="utf-8")
        paths.append(path)
    return paths
