"""Command-line entry point: run, eval, verify, overfit, export-fixtures.

Exit status is 0 on success, 1 when a check fails and 2 for configuration errors.
"""

from __future__ import annotations

import argparse
import logging
import sys
import time
from pathlib import Path

import numpy as np
import yaml

from . import export, verify
from .config import MODES, PROFILES, RunConfig, config_to_dict, load_config
from .fusion import ConfigurationError
from .head import bev_iou_np, min_cost_assignment, parse_predictions
from .pipeline import overfit, run_pipeline
from .scene import generate_scene

EXIT_OK, EXIT_FAILED, EXIT_CONFIG = 0, 1, 2
OVERFIT_TARGET = 0.5


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="YAML scene configuration")
    common.add_argument("--seed", type=int, help="override the configured seed")
    common.add_argument("--mode", choices=MODES, help="sensor combination")
    common.add_argument("--out", type=Path, help="output directory")
    common.add_argument("--profile", choices=PROFILES, default="desk", help="dimension preset (default: desk)")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="sensorattn", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="verb", required=True)
    sub.add_parser("run", parents=[common], help="forward pass; write predictions, losses and attention dumps")
    sub.add_parser("eval", parents=[common], help="score <out>/predictions.txt against the configured scene")
    p = sub.add_parser("verify", parents=[common], help="loop oracles, gradient checks, conformance vectors")
    p.add_argument("--seeds", type=int, default=100, help="random instances per oracle suite")
    p.add_argument("--trials", type=int, default=20, help="random instances per gradient check")
    p.add_argument("--fixtures", type=Path, default=verify.FIXTURE_ROOT, help="fixture root holding v1/")
    p = sub.add_parser("overfit", parents=[common], help="gradient descent on one scene")
    p.add_argument("--steps", type=int, default=50)
    p.add_argument("--lr", type=float, default=1e-2)
    sub.add_parser("export-fixtures", parents=[common], help="write conformance vectors to <out>/v1")
    return parser


def resolve_config(args) -> RunConfig:
    overrides = {"seed": args.seed, "modality_mode": args.mode}
    if args.out is not None:
        overrides["out_dir"] = str(args.out)
    return load_config(args.config, args.profile, **overrides)


def cmd_run(args) -> int:
    cfg = resolve_config(args)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    start = time.perf_counter()
    scene = generate_scene(cfg)
    run = run_pipeline(cfg, scene)
    export.write_predictions(run.result.preds, out / "predictions.txt")
    export.write_dumps(run.result.dumps, out / "attention")
    (out / "losses.yaml").write_text(yaml.safe_dump(run.losses.values(), sort_keys=False))
    (out / "config.yaml").write_text(yaml.safe_dump(config_to_dict(cfg), sort_keys=False))
    losses = " ".join(f"{k}={v:.6f}" for k, v in run.losses.values().items())
    print(f"{len(run.result.preds)} boxes, {losses}, {time.perf_counter() - start:.1f}s -> {out}")
    return EXIT_OK


def evaluate_dump(text: str, gts) -> dict[str, float]:
    """Match dumped boxes to ground truth by center distance; report per-match errors."""
    rows = parse_predictions(text)
    if not rows or len(gts) == 0:
        return {"matched": 0.0, "center_error": 0.0, "bev_iou": 0.0, "label_accuracy": 0.0}
    boxes = np.array([r[2] for r in rows])
    labels = np.array([r[0] for r in rows])
    dist = np.linalg.norm(gts.boxes[:, None, 0:3] - boxes[None, :, 0:3], axis=-1)
    cols = min_cost_assignment(dist)
    rows_idx = np.arange(len(gts))
    return {
        "matched": float(len(cols)),
        "center_error": float(dist[rows_idx, cols].mean()),
        "bev_iou": float(bev_iou_np(gts.boxes, boxes)[rows_idx, cols].mean()),
        "label_accuracy": float((labels[cols] == gts.labels).mean()),
    }


def cmd_eval(args) -> int:
    cfg = resolve_config(args)
    path = Path(cfg.out_dir) / "predictions.txt"
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigurationError(f"out: no prediction dump at {path} ({exc.strerror})") from None
    metrics = evaluate_dump(text, generate_scene(cfg).gts)
    print(" ".join(f"{k}={v:.6f}" for k, v in metrics.items()))
    return EXIT_OK


def cmd_verify(args) -> int:
    report = verify.verify_all(args.seeds, args.trials, args.fixtures)
    for r in report.results:
        print(r.line())
    failed = sum(not r.passed for r in report.results)
    print(f"{len(report.results) - failed}/{len(report.results)} checks passed in {report.seconds:.1f}s")
    return EXIT_OK if report.passed else EXIT_FAILED


def cmd_overfit(args) -> int:
    base = resolve_config(args)
    modes = [args.mode] if args.mode else ["lidar_camera", "radar_camera"]
    out = Path(base.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ok = True
    for mode in modes:
        cfg = base.with_overrides(modality_mode=mode)
        start = time.perf_counter()
        rep = overfit(cfg, generate_scene(cfg), steps=args.steps, lr=args.lr)
        elapsed = time.perf_counter() - start
        passed = rep.passed(OVERFIT_TARGET)
        ok &= passed
        (out / f"overfit_{mode}.csv").write_text(
            "step,total\n" + "".join(f"{i},{v!r}\n" for i, v in enumerate(rep.losses))
        )
        print(
            f"{'PASS' if passed else 'FAIL'} overfit {mode}: {rep.losses[0]:.4f} -> {rep.losses[-1]:.4f} "
            f"({rep.reduction:.1%} reduction, {rep.steps} steps, lr {rep.lr:g}, {elapsed:.1f}s)"
        )
    return EXIT_OK if ok else EXIT_FAILED


def cmd_export_fixtures(args) -> int:
    target = verify.export_fixtures(args.out or Path("fixtures"))
    results = verify.run_conformance(target.parent)
    print(f"wrote {len(results)} conformance cases to {target}")
    return EXIT_OK if all(r.passed for r in results) else EXIT_FAILED


COMMANDS = {"run": cmd_run, "eval": cmd_eval, "verify": cmd_verify, "overfit": cmd_overfit, "export-fixtures": cmd_export_fixtures}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.verb](args)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
