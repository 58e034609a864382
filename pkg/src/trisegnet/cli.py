"""Command-line surface: dataset synthesis, training, standalone evaluation,
confusion overlay rendering, and pseudo-pool inspection.

Exit codes: 0 success, 1 runtime failure, 2 usage/config error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np
from PIL import Image

from .config import from_dict, load_config, to_dict
from .data import HARD, MaskGrid, generate_synthetic, write_dataset
from .labelproc import latest_snapshot_epoch, load_pool_snapshot
from .metrics import aggregate_rows, evaluate_pair, MetricReport, write_report_csv
from .trainer import TrainingDiverged, run_pipeline
from .views import ARCHITECTURES

OVERLAY_COLORS = {
    "tp": (255, 255, 0),
    "fn": (0, 255, 0),
    "fp": (255, 0, 0),
    "tn": (0, 0, 0),
}


def render_overlay(ms: MaskGrid, gt: MaskGrid) -> np.ndarray:
    """RGB confusion overlay: TP yellow, FN green, FP red, TN black."""
    m = ms.harden().pixels > 0.5
    g = gt.harden().pixels > 0.5
    out = np.zeros(m.shape + (3,), dtype=np.uint8)
    out[m & g] = OVERLAY_COLORS["tp"]
    out[~m & g] = OVERLAY_COLORS["fn"]
    out[m & ~g] = OVERLAY_COLORS["fp"]
    return out


def _positive_int(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {value}")
    return value


def _load_mask_png(path) -> MaskGrid:
    arr = np.asarray(Image.open(path).convert("F"), dtype=np.float64) / 255.0
    return MaskGrid((arr >= 0.5).astype(np.float64), HARD)


def _nonempty(directory: Path) -> bool:
    return directory.exists() and any(directory.iterdir())


def cmd_synth(args) -> int:
    out = Path(args.out)
    if _nonempty(out) and not args.force:
        print(f"error: {out} exists and is not empty (use --force)", file=sys.stderr)
        return 1
    samples = generate_synthetic(args.count, args.size, args.seed, noise_sigma=args.noise)
    write_dataset(out, samples)
    print(f"wrote {len(samples)} image/mask pairs to {out}")
    return 0


def cmd_train(args) -> int:
    try:
        cfg = load_config(args.config)
        overrides = {}
        if args.seed is not None:
            overrides["seed"] = args.seed
        if args.supervised_only:
            overrides["supervised_only"] = True
        if args.ablation is not None:
            overrides["architectures"] = (
                ARCHITECTURES if args.ablation == "ABC" else ("skip_connection",) * 3
            )
        if args.no_label_processing:
            overrides["label_processing"] = False
        if args.no_dual_loss:
            overrides["dual_loss"] = False
        if overrides:
            cfg = from_dict({**to_dict(cfg), **{k: list(v) if isinstance(v, tuple) else v for k, v in overrides.items()}})
    except (ValueError, FileNotFoundError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    root = Path(os.environ.get("TRISEG_RUN_DIR", cfg.output_dir))
    run_dir = Path(args.out) if args.out else root / f"{Path(args.config).stem}-seed{cfg.seed}"
    if _nonempty(run_dir) and not args.force:
        print(f"error: run directory {run_dir} exists and is not empty (use --force)", file=sys.stderr)
        return 1
    try:
        _, _, report = run_pipeline(cfg, run_dir)
    except TrainingDiverged as e:
        print(f"training aborted: {e}; last good checkpoint under {run_dir / 'checkpoints'}", file=sys.stderr)
        return 1
    _write_overlays(run_dir)
    mean = report.aggregate["mean"]
    print(f"run complete: {run_dir}")
    print(f"test dice={mean['dice']:.4f} iou={mean['iou']:.4f}")
    return 0


def cmd_eval(args) -> int:
    ms_dir, gt_dir = Path(args.ms_dir), Path(args.gt_dir)
    ms_names = {p.name for p in ms_dir.glob("*.png")}
    gt_names = {p.name for p in gt_dir.glob("*.png")}
    if ms_names != gt_names:
        for name in sorted(ms_names ^ gt_names):
            side = "gt" if name in ms_names else "ms"
            print(f"unmatched ({side} missing): {name}", file=sys.stderr)
        return 1
    if not ms_names:
        print("error: no .png masks found", file=sys.stderr)
        return 1
    names = sorted(ms_names)
    rows = []
    for name in names:
        ms = _load_mask_png(ms_dir / name)
        gt = _load_mask_png(gt_dir / name)
        rows.append(evaluate_pair(ms, gt))
    report = MetricReport(per_image=tuple(rows), aggregate=aggregate_rows(rows))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_report_csv(report, out / "report.csv", ids=names)
    payload = {
        "count": report.aggregate["count"],
        "aggregate": report.aggregate["mean"],
        "missing": report.aggregate["missing"],
        "per_image": [{"id": n, **r} for n, r in zip(names, rows)],
    }
    (out / "report.json").write_text(json.dumps(payload, indent=1, sort_keys=True))
    print(f"evaluated {len(names)} pairs; reports under {out}")
    return 0


def _write_overlays(run_dir: Path) -> int:
    pred_dir = run_dir / "predictions"
    gt_dir = run_dir / "test_masks"
    if not pred_dir.is_dir() or not any(pred_dir.glob("*.png")):
        raise FileNotFoundError(f"no predictions under {pred_dir}")
    overlay_dir = run_dir / "overlays"
    overlay_dir.mkdir(exist_ok=True)
    count = 0
    for pred_path in sorted(pred_dir.glob("*.png")):
        gt_path = gt_dir / pred_path.name
        if not gt_path.exists():
            raise FileNotFoundError(f"missing test mask {gt_path}")
        rgb = render_overlay(_load_mask_png(pred_path), _load_mask_png(gt_path))
        Image.fromarray(rgb, "RGB").save(overlay_dir / pred_path.name)
        count += 1
    return count


def cmd_report(args) -> int:
    run_dir = Path(args.run_dir)
    try:
        count = _write_overlays(run_dir)
    except FileNotFoundError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    print(f"wrote {count} overlays to {run_dir / 'overlays'}")
    return 0


def cmd_inspect_pool(args) -> int:
    pool_dir = Path(args.run_dir) / "pool"
    try:
        epoch = args.epoch if args.epoch is not None else latest_snapshot_epoch(pool_dir)
        manifest, _ = load_pool_snapshot(pool_dir, epoch)
    except FileNotFoundError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    entries = manifest["entries"]
    scores = [e["score"] for e in entries]
    active = sum(1 for e in entries if e["active"])
    print(f"pool snapshot {epoch}: {len(entries)} entries, {active} active, t={manifest['t']}/{manifest['x']}")
    edges = np.linspace(0.0, 1.0, 11)
    hist, _ = np.histogram(scores, bins=edges)
    peak = max(int(hist.max()), 1)
    for k in range(10):
        bar = "#" * round(40 * hist[k] / peak)
        print(f"  {edges[k]:.1f}-{edges[k + 1]:.1f} | {hist[k]:4d} {bar}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="triseg", description="triple-view semi-supervised segmentation")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write a synthetic image/mask dataset")
    p.add_argument("--count", type=_positive_int, default=200)
    p.add_argument("--size", type=_positive_int, default=64)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--noise", type=float, default=0.35)
    p.add_argument("--out", required=True)
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="run the training pipeline from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default=None, help="run directory (default: output root / config stem)")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--ablation", choices=("A3", "ABC"), default=None)
    p.add_argument("--supervised-only", action="store_true")
    p.add_argument("--no-label-processing", action="store_true")
    p.add_argument("--no-dual-loss", action="store_true")
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a directory of predicted masks against ground truth")
    p.add_argument("ms_dir")
    p.add_argument("gt_dir")
    p.add_argument("--out", default="eval_report")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("report", help="render confusion overlays for a finished run")
    p.add_argument("run_dir")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("inspect-pool", help="print a disagreement histogram from pool snapshots")
    p.add_argument("run_dir")
    p.add_argument("--epoch", type=int, default=None)
    p.set_defaults(func=cmd_inspect_pool)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except (RuntimeError, FileNotFoundError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
