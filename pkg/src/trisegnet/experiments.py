"""Desk-scale experiment harness: the low-label pipeline-vs-baseline
comparison and the ablation grid (duplicated views x label processing x dual
loss), plus the report-stripping helper used by determinism checks.
"""

from __future__ import annotations

from dataclasses import replace
from pathlib import Path

import numpy as np
import torch

from .config import RunConfig, build_dataset
from .data import split_dataset
from .metrics import evaluate_set
from .trainer import (
    StagePlan,
    TrainLog,
    predict_test,
    run_pipeline,
    total_gradient_steps,
    train_single_view,
)
from .util import int_seed_for
from .views import ARCHITECTURES, init_triple_model

# The low-label comparison: 500 images, 5% labelled, tiny models.  Noise is
# set high enough that a single width-8 view saturates below the ensemble of
# three distinct architectures; a long supervised stage plus a light
# co-training pass keeps the views diverse (heavy co-training drags every
# view toward the donor-pair average and erases the ensemble gain).
LOW_LABEL_CONFIG = RunConfig(
    synthetic_count=500,
    image_size=64,
    synthetic_noise=0.8,
    labelled_fraction=0.05,
    stem_width=8,
    view_width=8,
    plan=StagePlan(
        stage1_epochs=500,
        stage2_epochs=3,
        stage2_iterations=1,
        stage3_epochs_max=5,
        batch_size=16,
    ),
)

# The ablation grid runs on one fixed 100-image set (seeds vary training
# only).  Width 16 brings the three architectures to comparable individual
# quality so the comparison isolates view diversity rather than per-head
# capacity; a generous stage-3 cap lets the weakest distinct view catch up,
# which duplicated-view configs skip because their confidences already match.
ABLATION_CONFIG = replace(
    LOW_LABEL_CONFIG,
    synthetic_count=100,
    image_size=64,
    labelled_fraction=0.2,
    synthetic_noise=0.9,
    data_seed=0,
    stem_width=16,
    view_width=16,
    plan=StagePlan(
        stage1_epochs=400,
        stage2_epochs=3,
        stage2_iterations=1,
        stage3_epochs_max=60,
        batch_size=16,
    ),
)


def run_baseline(config: RunConfig, budget_steps=None):
    """Single-view supervised run on the same data/split/init as the
    pipeline; with budget_steps set it consumes exactly that many updates."""
    samples = build_dataset(config)
    split = split_dataset(samples, config.labelled_fraction, config.effective_data_seed)
    torch.manual_seed(int_seed_for(config.seed, "init"))
    model = init_triple_model(config.model_config(), config.seed)
    log = TrainLog()
    plan = replace(config.plan, seed=config.seed)
    train_single_view(
        model, split, plan,
        view_index=0,
        budget_steps=budget_steps,
        perturb_cfg=config.perturb,
        tversky=config.tversky,
        log=log,
        label_processing=config.label_processing,
    )
    preds = predict_test(model, split, single_view=0)
    report = evaluate_set(list(zip(preds, [gt for _, gt in split.test])))
    return model, log, report


def pipeline_vs_baseline(seed: int, base: RunConfig, work_dir) -> dict:
    """One paired comparison: full pipeline vs budget-matched baseline."""
    cfg = replace(base, seed=seed)
    run_dir = Path(work_dir) / f"pipeline_seed{seed}"
    _, log, report = run_pipeline(cfg, run_dir)
    steps = total_gradient_steps(log)
    _, _, base_report = run_baseline(cfg, budget_steps=steps)
    return {
        "seed": seed,
        "budget_steps": steps,
        "pipeline_iou": report.aggregate["mean"]["iou"],
        "baseline_iou": base_report.aggregate["mean"]["iou"],
        "pipeline_dice": report.aggregate["mean"]["dice"],
        "baseline_dice": base_report.aggregate["mean"]["dice"],
    }


def low_label_experiment(seeds=(0, 1, 2), base: RunConfig = None, work_dir="runs/low_label") -> dict:
    base = base or LOW_LABEL_CONFIG
    rows = [pipeline_vs_baseline(s, base, work_dir) for s in seeds]
    diffs = [r["pipeline_iou"] - r["baseline_iou"] for r in rows]
    return {"rows": rows, "iou_diffs": diffs, "median_iou_diff": float(np.median(diffs))}


def ablation_name(distinct_views: bool, label_processing: bool, dual_loss: bool) -> str:
    return "%s_%s_%s" % (
        "abc" if distinct_views else "a3",
        "lp" if label_processing else "nolp",
        "dl" if dual_loss else "nodl",
    )


def ablation_config(base: RunConfig, distinct_views: bool, label_processing: bool, dual_loss: bool) -> RunConfig:
    return replace(
        base,
        architectures=ARCHITECTURES if distinct_views else ("skip_connection",) * 3,
        label_processing=label_processing,
        dual_loss=dual_loss,
    )


def ablation_grid(seeds=(0, 1, 2), base: RunConfig = None, work_dir="runs/ablation") -> dict:
    """All 8 toggle combinations; per-config per-seed IOU plus medians."""
    base = base or ABLATION_CONFIG
    out = {}
    for distinct in (True, False):
        for lp in (True, False):
            for dl in (True, False):
                name = ablation_name(distinct, lp, dl)
                ious = []
                for seed in seeds:
                    cfg = replace(ablation_config(base, distinct, lp, dl), seed=seed)
                    run_dir = Path(work_dir) / f"{name}_seed{seed}"
                    _, _, report = run_pipeline(cfg, run_dir)
                    ious.append(report.aggregate["mean"]["iou"])
                out[name] = {"iou_per_seed": ious, "median_iou": float(np.median(ious))}
    full = out[ablation_name(True, True, True)]["median_iou"]
    duplicated = [v["median_iou"] for k, v in out.items() if k.startswith("a3_")]
    out["_summary"] = {
        "full_median_iou": full,
        "duplicated_medians": duplicated,
        "full_beats_duplicated": bool(all(full >= d for d in duplicated)),
    }
    return out


def stripped_report_bytes(path) -> bytes:
    """report.json bytes with the generation-timestamp line removed."""
    lines = Path(path).read_text().splitlines(keepends=True)
    return "".join(l for l in lines if '"generated_at"' not in l).encode()
