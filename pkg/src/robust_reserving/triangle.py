"""Run-off triangles: loading, validation, cumulative/incremental conversion and panels."""

from __future__ import annotations

import csv
import json
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Literal, Sequence

import numpy as np

from .errors import DataError

logger = logging.getLogger(__name__)

Kind = Literal["incremental", "cumulative"]

_NUMBER = re.compile(r"^[+-]?(\d+(\.\d*)?|\.\d+)([eE][+-]?\d+)?$")


def staircase_mask(n_accident: int, n_development: int) -> np.ndarray:
    """Boolean mask of observed cells: (i, j) observed iff i + j <= I + 1 (1-based)."""
    i = np.arange(n_accident)[:, None]
    j = np.arange(n_development)[None, :]
    return i + j <= n_accident - 1


@dataclass(frozen=True)
class CellIndex:
    i: int  # accident period, 1-based
    j: int  # development period, 1-based
    row: int  # 0-based row in the residual panel

    @property
    def label(self) -> str:
        return f"X[{self.i},{self.j}]"


@dataclass(frozen=True, eq=False)
class Triangle:
    """One line of business. ``values`` is I x J with NaN in the unobserved lower right."""

    values: np.ndarray
    kind: Kind = "incremental"
    label: str = ""

    def __post_init__(self) -> None:
        values = np.array(self.values, dtype=float)
        if values.ndim != 2:
            raise DataError("triangle values must be a 2-d array")
        n_acc, n_dev = values.shape
        if n_acc < 1 or n_dev < 1 or n_dev > n_acc:
            raise DataError(f"unsupported triangle shape {values.shape}; need 1 <= J <= I")
        if self.kind not in ("incremental", "cumulative"):
            raise DataError(f"unknown triangle kind {self.kind!r}")
        mask = staircase_mask(n_acc, n_dev)
        observed = ~np.isnan(values)
        if np.any(observed & ~mask):
            i, j = np.argwhere(observed & ~mask)[0]
            raise DataError(f"{self.label or 'triangle'}: cell ({i + 1},{j + 1}) lies below the staircase")
        if np.any(~observed & mask):
            i, j = np.argwhere(~observed & mask)[0]
            raise DataError(f"{self.label or 'triangle'}: observed cell ({i + 1},{j + 1}) is missing")
        if not np.all(np.isfinite(values[mask])):
            raise DataError("observed cells must be finite")
        if self.kind == "cumulative":
            for row, m in zip(values, mask):
                obs = row[m]
                if np.any(np.diff(obs) < 0):
                    raise DataError("cumulative triangle must be non-decreasing along each row")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    @property
    def mask(self) -> np.ndarray:
        return staircase_mask(*self.shape)

    def observed(self) -> np.ndarray:
        """Observed entries in row-major cell order."""
        return self.values[self.mask]

    def latest_diagonal(self) -> np.ndarray:
        n_acc, n_dev = self.shape
        return np.array([self.values[i, min(n_acc - 1 - i, n_dev - 1)] for i in range(n_acc)])

    def with_values(self, values: np.ndarray, kind: Kind | None = None) -> "Triangle":
        return Triangle(values, kind or self.kind, self.label)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Triangle):
            return NotImplemented
        return (
            self.kind == other.kind
            and self.shape == other.shape
            and np.array_equal(self.values, other.values, equal_nan=True)
        )

    __hash__ = None  # type: ignore[assignment]


def _parse_cell(text: str, where: str) -> float:
    text = text.strip()
    if text == "":
        return np.nan
    if not _NUMBER.match(text):
        raise DataError(f"{where}: non-numeric cell {text!r}")
    return float(text)


def load_triangle_csv(path: str | Path, kind: Kind = "incremental", label: str | None = None) -> Triangle:
    """Read a triangle from CSV: one row per accident period, blank cells unobserved.

    Only plain dot-decimal numbers are accepted; thousands separators are rejected.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh) if any(c.strip() for c in r)]
    if not rows:
        raise DataError(f"{path}: empty file")
    width = len(rows[0])
    for k, r in enumerate(rows):
        if len(r) != width:
            raise DataError(f"{path}: ragged row {k + 1} ({len(r)} cells, expected {width})")
    values = np.array(
        [[_parse_cell(c, f"{path}:{k + 1}") for c in r] for k, r in enumerate(rows)], dtype=float
    )
    return Triangle(values, kind, label if label is not None else path.stem)


def write_triangle_csv(t: Triangle, path: str | Path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        for row in t.values:
            writer.writerow(["" if np.isnan(v) else repr(float(v)) for v in row])


def to_cumulative(t: Triangle) -> Triangle:
    if t.kind != "incremental":
        raise DataError("to_cumulative expects an incremental triangle")
    mask = t.mask
    out = np.where(mask, np.cumsum(np.where(mask, t.values, 0.0), axis=1), np.nan)
    return t.with_values(out, "cumulative")


def to_incremental(t: Triangle) -> Triangle:
    if t.kind != "cumulative":
        raise DataError("to_incremental expects a cumulative triangle")
    filled = np.where(t.mask, t.values, 0.0)
    out = np.diff(filled, axis=1, prepend=0.0)
    return t.with_values(np.where(t.mask, out, np.nan), "incremental")


def development_factors(t: Triangle) -> np.ndarray:
    """Classical volume-weighted chain-ladder factors of a triangle (either kind)."""
    if t.kind == "incremental":
        # summed directly: negative increments would fail cumulative validation
        c = np.cumsum(np.where(t.mask, t.values, 0.0), axis=1)
    else:
        c = t.values
    n_acc, n_dev = c.shape
    factors = np.empty(n_dev - 1)
    for j in range(n_dev - 1):
        rows = n_acc - 1 - j
        factors[j] = c[:rows, j + 1].sum() / c[:rows, j].sum()
    return factors


def zero_negatives(t: Triangle) -> tuple[Triangle, int]:
    """Clamp negative incremental claims to zero.

    The largest relative change in the classical development factors is logged at INFO
    level; use :func:`factor_shift` to obtain it programmatically.
    """
    if t.kind != "incremental":
        raise DataError("zero_negatives expects an incremental triangle")
    negative = t.mask & (np.nan_to_num(t.values) < 0)
    count = int(negative.sum())
    if count == 0:
        return t, 0
    out = t.with_values(np.where(negative, 0.0, t.values))
    logger.info(
        "%s: %d negative claims set to zero; max development factor change %.4f%%",
        t.label, count, 100 * factor_shift(t, out),
    )
    return out, count


def factor_shift(before: Triangle, after: Triangle) -> float:
    """Largest relative change between the development factors of two triangles."""
    if before.shape[1] < 2:
        return 0.0
    f0, f1 = development_factors(before), development_factors(after)
    return float(np.max(np.abs(f1 / f0 - 1.0)))


@dataclass(frozen=True)
class TrianglePanel:
    """N triangles sharing the same shape; the dimension of the residual space is N."""

    triangles: tuple[Triangle, ...]
    cells: tuple[CellIndex, ...] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        tris = tuple(self.triangles)
        if not tris:
            raise DataError("a panel needs at least one triangle")
        shape, kind = tris[0].shape, tris[0].kind
        for t in tris[1:]:
            if t.shape != shape:
                raise DataError(f"triangle {t.label!r} has shape {t.shape}, expected {shape}")
            if t.kind != kind:
                raise DataError("all triangles in a panel must have the same kind")
        object.__setattr__(self, "triangles", tris)
        idx = np.argwhere(staircase_mask(*shape))
        object.__setattr__(
            self, "cells", tuple(CellIndex(int(i) + 1, int(j) + 1, r) for r, (i, j) in enumerate(idx))
        )

    @property
    def p(self) -> int:
        return len(self.triangles)

    @property
    def n(self) -> int:
        return len(self.cells)

    @property
    def shape(self) -> tuple[int, int]:
        return self.triangles[0].shape

    @property
    def kind(self) -> Kind:
        return self.triangles[0].kind

    @property
    def labels(self) -> list[str]:
        return [t.label for t in self.triangles]

    def __iter__(self) -> Iterator[Triangle]:
        return iter(self.triangles)

    def __len__(self) -> int:
        return len(self.triangles)

    def __getitem__(self, k: int) -> Triangle:
        return self.triangles[k]

    def row_of(self, i: int, j: int) -> int:
        """Panel row of the 1-based cell (i, j)."""
        for c in self.cells:
            if c.i == i and c.j == j:
                return c.row
        raise KeyError((i, j))

    def map(self, fn) -> "TrianglePanel":
        return TrianglePanel(tuple(fn(t) for t in self.triangles))


def make_panel(triangles: Sequence[Triangle]) -> TrianglePanel:
    return TrianglePanel(tuple(triangles))


def load_manifest(path: str | Path) -> TrianglePanel:
    """Load a panel manifest: ``{"triangles": [{"path", "kind", "label"}, ...]}``.

    Relative triangle paths are resolved against the manifest's directory.
    """
    path = Path(path)
    try:
        spec = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid JSON ({exc})") from exc
    entries = spec.get("triangles") if isinstance(spec, dict) else None
    if not entries:
        raise DataError(f"{path}: manifest lists no triangles")
    tris = []
    for e in entries:
        csv_path = Path(e["path"])
        if not csv_path.is_absolute():
            csv_path = path.parent / csv_path
        tris.append(load_triangle_csv(csv_path, e.get("kind", "incremental"), e.get("label")))
    return make_panel(tris)


def bundled_manifest() -> Path:
    """Path of the bundled two-line auto insurance example panel."""
    return Path(__file__).with_name("data") / "auto_pair.json"


def load_example_panel() -> TrianglePanel:
    return load_manifest(bundled_manifest())
