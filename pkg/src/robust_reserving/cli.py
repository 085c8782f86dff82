"""Command line interface: run, detect, synth and figures."""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

from .errors import ConvergenceError, DataError
from .figures import emit_figures
from .glm import residual_panel
from .pipeline import TECHNIQUES, PipelineConfig, PipelineError, detect, prepare_panel, run_pipeline, write_outputs
from .synthetic import SyntheticSpec, generate_synthetic_panel
from .triangle import bundled_manifest, load_manifest, write_triangle_csv

EXIT_OK, EXIT_DATA, EXIT_CONVERGENCE = 0, 2, 3


def _config(args: argparse.Namespace) -> PipelineConfig:
    cfg = PipelineConfig.from_json(args.config) if args.config else PipelineConfig()
    overrides = {
        "manifest": args.manifest,
        "technique": args.technique,
        "seed": args.seed,
        "out": args.out,
    }
    cfg = dataclasses.replace(cfg, **{k: v for k, v in overrides.items() if v is not None})
    if not cfg.manifest:
        cfg = dataclasses.replace(cfg, manifest=str(bundled_manifest()))
    return cfg


def _detection(cfg: PipelineConfig):
    panel, _ = prepare_panel(load_manifest(cfg.manifest))
    res = residual_panel(panel)
    return res, detect(res, cfg)


def cmd_run(args: argparse.Namespace) -> int:
    cfg = _config(args)
    result = run_pipeline(cfg)
    print(result.table())
    flagged = ", ".join(c for c in (f"X[{i},{j}]" for i, j in result.outliers.flagged_cells)) or "none"
    print(f"\noutliers ({result.outliers.count}): {flagged}")
    if cfg.out:
        for path in write_outputs(result, cfg.out):
            print(f"wrote {path}")
    return EXIT_OK


def cmd_detect(args: argparse.Namespace) -> int:
    cfg = _config(args)
    res, det = _detection(cfg)
    cells = res.cell_labels(det.flags)
    print(f"{cfg.technique}: {len(cells)} outliers")
    for k in range(res.n):
        if det.flags[k]:
            scores = "  ".join(f"{name}={values[k]:.4f}" for name, values in det.scores.items())
            print(f"  {res.index[k].label}  {scores}")
    if cfg.out:
        out = Path(cfg.out)
        out.mkdir(parents=True, exist_ok=True)
        payload = {
            "technique": cfg.technique,
            "outliers": cells,
            "scores": {name: [float(v) for v in values] for name, values in det.scores.items()},
            "cells": res.cell_labels(),
        }
        path = out / f"{cfg.technique}_detect.json"
        path.write_text(json.dumps(payload, indent=2, sort_keys=True), encoding="utf-8")
        print(f"wrote {path}")
    return EXIT_OK


def cmd_synth(args: argparse.Namespace) -> int:
    spec = SyntheticSpec(
        n_triangles=args.triangles,
        size=args.size,
        correlation=args.correlation,
        skewness=args.skewness,
        n_outliers=args.outliers,
        seed=0 if args.seed is None else args.seed,
    )
    synth = generate_synthetic_panel(spec)
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    entries = []
    for t in synth.panel:
        name = f"{t.label}.csv"
        write_triangle_csv(t, out / name)
        entries.append({"path": name, "kind": "incremental", "label": t.label})
    (out / "manifest.json").write_text(json.dumps({"triangles": entries}, indent=2), encoding="utf-8")
    truth = {"spec": dataclasses.asdict(spec), "outliers": [f"X[{i},{j}]" for i, j in synth.outliers]}
    (out / "truth.json").write_text(json.dumps(truth, indent=2), encoding="utf-8")
    print(f"wrote {len(entries)} triangles, manifest.json and truth.json to {out}")
    return EXIT_OK


def cmd_figures(args: argparse.Namespace) -> int:
    cfg = _config(args)
    res, det = _detection(cfg)
    paths = emit_figures(res.rows, det.flags, det.model, cfg.out or ".", cfg.technique, res.labels)
    for path in paths:
        print(f"wrote {path}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="robust-reserving", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", help="JSON configuration file")
        p.add_argument("--manifest", help="panel manifest (default: bundled example)")
        p.add_argument("--technique", choices=TECHNIQUES)
        p.add_argument("--seed", type=int)
        p.add_argument("--out", help="output directory")

    for name, fn, text in (
        ("run", cmd_run, "full pipeline with reserve reports"),
        ("detect", cmd_detect, "stop after flagging outliers"),
        ("figures", cmd_figures, "write SVG (2 triangles) or mesh JSON (3 triangles)"),
    ):
        p = sub.add_parser(name, help=text)
        common(p)
        p.set_defaults(func=fn)

    p = sub.add_parser("synth", help="write a synthetic panel with planted outliers")
    p.add_argument("--triangles", type=int, default=3)
    p.add_argument("--size", type=int, default=20)
    p.add_argument("--correlation", type=float, default=0.5)
    p.add_argument("--skewness", type=float, default=0.0)
    p.add_argument("--outliers", type=int, default=3)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="output directory")
    p.set_defaults(func=cmd_synth)
    return parser


def _root_cause(exc: BaseException) -> BaseException:
    return exc.cause if isinstance(exc, PipelineError) else exc


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (PipelineError, DataError, ConvergenceError, ValueError, OSError) as exc:
        cause = _root_cause(exc)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONVERGENCE if isinstance(cause, ConvergenceError) else EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
