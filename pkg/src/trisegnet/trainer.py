"""Three-stage training loop plus joint inference.

Stage 1 trains all views supervised on perturbed labelled data. Stage 2
co-trains: per view pass, the other two views vote pseudo-labels on the
perturbed unlabelled pool, the removal schedule drops the highest-disagreement
entries for the pass, and the view trains on what survives. Stage 3 remedially
trains the least-confident view on labelled + pseudo batches, alternating 1:1,
early-stopped once its confidence catches up.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
import torch

from .data import SOFT, DatasetSplit, MaskGrid, split_dataset
from .labelproc import (
    PoolEntry,
    PseudoPool,
    disagreement_score,
    estimate_confidence,
    filter_low_confidence,
    normalize_alphas,
    pool_zeta,
    snapshot_pool,
)
from .losses import TverskyParams, focal_tversky_loss, stage23_loss
from .metrics import evaluate_set
from .perturb import PerturbConfig, perturb_batch, undo_geometric
from .util import int_seed_for, rng_for, round_half_up
from .views import VIEW_IDS, TripleModel, _to_soft_mask, init_triple_model


class TrainingDiverged(RuntimeError):
    pass


@dataclass(frozen=True)
class StagePlan:
    stage1_epochs: int = 150
    stage2_epochs: int = 100
    stage2_iterations: int = 5
    stage3_epochs_max: int = 150
    learning_rate: float = 2.0e-4
    batch_size: int = 16
    seed: int = 0

    def __post_init__(self):
        if self.stage1_epochs < 1:
            raise ValueError("stage1_epochs must be >= 1")
        if min(self.stage2_epochs, self.stage3_epochs_max) < 0:
            raise ValueError("stage epoch counts must be >= 0")
        if self.stage2_iterations < 1:
            raise ValueError("stage2_iterations must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")

    @property
    def stage2_epochs_per_pass(self) -> int:
        # stage2_epochs is the stage-wide total, spread over 3 views x iterations
        return max(1, round_half_up(self.stage2_epochs / (3 * self.stage2_iterations)))


class TrainLog:
    """Append-only training log; every record carries a monotone step index."""

    def __init__(self, path=None):
        self.path = Path(path) if path is not None else None
        self.records = []
        self._next = 0
        if self.path is not None:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            self.path.write_text("")

    def append(self, **record):
        record = {"step": self._next, **record}
        self._next += 1
        self.records.append(record)
        if self.path is not None:
            with open(self.path, "a") as fh:
                fh.write(json.dumps(record, sort_keys=True) + "\n")

    def select(self, **conditions):
        return [r for r in self.records if all(r.get(k) == v for k, v in conditions.items())]


def _stack_images(images) -> torch.Tensor:
    arr = np.stack([im.pixels for im in images]).astype(np.float32)
    return torch.from_numpy(arr).unsqueeze(1)


def _stack_masks(masks) -> torch.Tensor:
    arr = np.stack([m.pixels for m in masks]).astype(np.float32)
    return torch.from_numpy(arr)


def _batches(n, batch_size, rng):
    order = rng.permutation(n) if rng is not None else np.arange(n)
    for start in range(0, n, batch_size):
        yield order[start : start + batch_size]


def _clone_state(model):
    return {k: v.detach().clone() for k, v in model.state_dict().items()}


def save_checkpoint(model, run_dir, stage, epoch, config_hash=None, note=None):
    ckpt_dir = Path(run_dir) / "checkpoints"
    ckpt_dir.mkdir(parents=True, exist_ok=True)
    torch.save(
        {
            "model": model.state_dict(),
            "alpha_raw": [float(a) for a in model.alpha_raw],
            "torch_rng": torch.get_rng_state(),
        },
        ckpt_dir / f"stage{stage}.ckpt",
    )
    manifest = {
        "stage": stage,
        "epoch": epoch,
        "alphas_raw": [float(a) for a in model.alpha_raw],
        "architectures": list(model.architecture_tags),
        "config_hash": config_hash,
        "pseudo_target": "hard@0.5",
        "note": note,
    }
    (ckpt_dir / f"stage{stage}.manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True))


def load_checkpoint(model, run_dir, stage):
    payload = torch.load(Path(run_dir) / "checkpoints" / f"stage{stage}.ckpt", weights_only=True)
    model.load_state_dict(payload["model"])
    return model


def _require_stage(model, run_dir, stage):
    if run_dir is not None:
        manifest = Path(run_dir) / "checkpoints" / f"stage{stage}.manifest.json"
        if not manifest.exists():
            raise RuntimeError(f"stage {stage} checkpoint manifest missing under {run_dir}")
    elif getattr(model, "_stages_done", 0) < stage:
        raise RuntimeError(f"stage {stage} must complete before the next stage")


def _mark_stage(model, stage):
    model._stages_done = max(getattr(model, "_stages_done", 0), stage)


def _confidence_set(split: DatasetSplit, pool: PseudoPool = None):
    """Labelled pairs plus the validation slice of the pool, un-perturbed,
    with hardened pseudo targets."""
    pairs = list(split.labelled)
    if pool is not None:
        val_ids = set(split.validation_ids)
        n_lab = len(split.labelled)
        for e in sorted(pool.entries, key=lambda e: e.image_id):
            if e.image_id in val_ids:
                pairs.append((split.unlabelled[e.image_id - n_lab], e.pseudo.harden()))
    return pairs


def _update_alpha(model, view_index, estimate, log, stage):
    raw = [float(a) for a in model.alpha_raw]
    raw[view_index] = estimate.mean_dice
    model.set_alpha(raw)
    log.append(
        kind="confidence",
        stage=stage,
        view=VIEW_IDS[view_index],
        raw_alpha=estimate.mean_dice,
        alphas_raw=raw,
        alphas_normalized=list(normalize_alphas(raw)) if sum(raw) > 0 else None,
    )


def _supervised_epoch(model, view_index, opt, x, y, plan, rng, loss_fn):
    losses = []
    for batch in _batches(len(x), plan.batch_size, rng):
        idx = torch.from_numpy(np.ascontiguousarray(batch))
        opt.zero_grad()
        probs = model.view_probs(x[idx], view_index).squeeze(1)
        loss = loss_fn(probs, y[idx])
        if not torch.isfinite(loss):
            raise TrainingDiverged(f"non-finite loss on view {VIEW_IDS[view_index]}")
        loss.backward()
        opt.step()
        losses.append(loss.item())
    return float(np.mean(losses)), len(losses)


def _view_optimizer(model, view_index, plan):
    params = list(model.stem.parameters()) + list(model.views[view_index].parameters())
    return torch.optim.Adam(params, lr=plan.learning_rate)


def train_stage1(
    model: TripleModel,
    split: DatasetSplit,
    plan: StagePlan,
    *,
    perturb_cfg: PerturbConfig = None,
    tversky: TverskyParams = None,
    log: TrainLog = None,
    run_dir=None,
    config_hash=None,
    label_processing=True,
    view_indices=(0, 1, 2),
) -> TripleModel:
    """Supervised initialization of every view on perturbed labelled data."""
    if not split.labelled:
        raise ValueError("stage 1 requires labelled samples")
    perturb_cfg = perturb_cfg or PerturbConfig()
    tversky = tversky or TverskyParams()
    log = log if log is not None else TrainLog()
    loss_fn = lambda p, g: focal_tversky_loss(p, g, tversky)
    opts = {n: _view_optimizer(model, n, plan) for n in view_indices}
    last_good = _clone_state(model)
    try:
        for epoch in range(plan.stage1_epochs):
            if label_processing:
                batch, _ = perturb_batch(list(split.labelled), perturb_cfg, int_seed_for(plan.seed, "s1perturb", epoch))
            else:
                batch = list(split.labelled)
            x = _stack_images([b[0] for b in batch])
            y = _stack_masks([b[1] for b in batch])
            for n in view_indices:
                rng = rng_for(plan.seed, "s1order", epoch, n)
                mean_loss, steps = _supervised_epoch(model, n, opts[n], x, y, plan, rng, loss_fn)
                log.append(kind="epoch", stage=1, epoch=epoch, view=VIEW_IDS[n], loss=mean_loss, steps=steps)
            last_good = _clone_state(model)
    except TrainingDiverged:
        model.load_state_dict(last_good)
        if run_dir is not None:
            save_checkpoint(model, run_dir, 1, -1, config_hash, note="aborted: divergence")
        raise
    val = _confidence_set(split)
    for n in view_indices:
        _update_alpha(model, n, estimate_confidence(model, n, val), log, stage=1)
    if run_dir is not None:
        save_checkpoint(model, run_dir, 1, plan.stage1_epochs, config_hash)
    _mark_stage(model, 1)
    return model


def _vote_on_pool(model, target_index, x):
    """Donor probabilities and their renormalized-weight vote, batched."""
    d1, d2 = (target_index + 1) % 3, (target_index + 2) % 3
    a1, a2 = float(model.alpha_raw[d1]), float(model.alpha_raw[d2])
    w1, w2 = (0.5, 0.5) if a1 + a2 <= 0 else (a1 / (a1 + a2), a2 / (a1 + a2))
    with torch.no_grad():
        feats = model.stem(x)
        size = x.shape[-2:]
        p1 = torch.sigmoid(model.views[d1](feats, size))
        p2 = torch.sigmoid(model.views[d2](feats, size))
    return p1.squeeze(1), p2.squeeze(1), p1.squeeze(1) * w1 + p2.squeeze(1) * w2


def train_stage2(
    model: TripleModel,
    split: DatasetSplit,
    plan: StagePlan,
    *,
    perturb_cfg: PerturbConfig = None,
    tversky: TverskyParams = None,
    log: TrainLog = None,
    run_dir=None,
    config_hash=None,
    zeta_override=None,
    label_processing=True,
    dual_loss=True,
    pseudo_target_soft=False,
    literal_boundary=False,
    overlap_weight=1.0,
) -> TripleModel:
    """Iterative co-training on voted pseudo-labels with scheduled removal."""
    log = log if log is not None else TrainLog()
    if not split.unlabelled or plan.stage2_epochs == 0:
        log.append(kind="stage_skip", stage=2, reason="no unlabelled data" if not split.unlabelled else "zero epochs")
        _mark_stage(model, 2)
        return model
    _require_stage(model, run_dir, 1)
    perturb_cfg = perturb_cfg or PerturbConfig()
    tversky = tversky or TverskyParams()
    n_lab = len(split.labelled)
    pool_ids = list(range(n_lab, split.n_train))
    epochs_per_pass = plan.stage2_epochs_per_pass
    steps_per_epoch = math.ceil(len(pool_ids) / plan.batch_size)
    x_total = 3 * plan.stage2_iterations * epochs_per_pass * steps_per_epoch
    zero = MaskGrid(np.zeros(split.unlabelled[0].shape), SOFT)
    pool = PseudoPool(
        entries=[PoolEntry(image_id=pid, pseudo=zero) for pid in pool_ids],
        x=x_total,
        y=len(pool_ids),
    )
    if dual_loss:
        ps_loss = lambda p, g: stage23_loss(p, g, literal_boundary=literal_boundary, overlap_weight=overlap_weight)
    else:
        ps_loss = lambda p, g: focal_tversky_loss(p, g, tversky)
    opts = {n: _view_optimizer(model, n, plan) for n in range(3)}
    global_step = 0
    snapshot_idx = 0
    last_good = _clone_state(model)
    try:
        for it in range(plan.stage2_iterations):
            for n in range(3):
                if label_processing:
                    pert, records = perturb_batch(
                        [(img, None) for img in split.unlabelled], perturb_cfg,
                        int_seed_for(plan.seed, "s2perturb", it, n),
                    )
                else:
                    pert, records = [(img, None) for img in split.unlabelled], []
                rec_by_idx = {r.index: r for r in records}
                x = _stack_images([p[0] for p in pert])
                p1, p2, voted = _vote_on_pool(model, n, x)
                if not label_processing:
                    voted = (p1 + p2) / 2.0
                for k, entry in enumerate(pool.entries):
                    soft = _to_soft_mask(voted[k])
                    rec = rec_by_idx.get(k)
                    entry.pseudo = undo_geometric(soft, rec) if rec is not None else soft
                    entry.score = disagreement_score(_to_soft_mask(p1[k]), _to_soft_mask(p2[k]))
                pool.reactivate_all()
                removed = 0
                zeta = pool_zeta(pool, zeta_override)
                if label_processing:
                    t_cur = min(x_total, global_step + 1)
                    filter_low_confidence(pool, t_cur, zeta)
                    removed = pool.y - len(pool.active_entries())
                active = pool.active_entries()
                log.append(
                    kind="pool", stage=2, iteration=it, view=VIEW_IDS[n], zeta=zeta,
                    removed=removed, active=len(active), t=pool.t, x=pool.x,
                )
                if run_dir is not None:
                    snapshot_pool(pool, Path(run_dir) / "pool", snapshot_idx)
                snapshot_idx += 1
                if not active:
                    log.append(kind="stage_skip", stage=2, iteration=it, view=VIEW_IDS[n], reason="pool fully deactivated")
                    continue
                act_idx = torch.tensor([e.image_id - n_lab for e in active], dtype=torch.long)
                train_x = x[act_idx]
                targets = voted[act_idx]
                if not pseudo_target_soft:
                    targets = (targets >= 0.5).to(targets.dtype)
                for ep in range(epochs_per_pass):
                    rng = rng_for(plan.seed, "s2order", it, n, ep)
                    mean_loss, steps = _supervised_epoch(model, n, opts[n], train_x, targets, plan, rng, ps_loss)
                    global_step += steps
                    log.append(kind="epoch", stage=2, iteration=it, epoch=ep, view=VIEW_IDS[n], loss=mean_loss, steps=steps)
                _update_alpha(model, n, estimate_confidence(model, n, _confidence_set(split, pool)), log, stage=2)
                last_good = _clone_state(model)
    except TrainingDiverged:
        model.load_state_dict(last_good)
        if run_dir is not None:
            save_checkpoint(model, run_dir, 2, -1, config_hash, note="aborted: divergence")
        raise
    model._stage2_pool = pool
    if run_dir is not None:
        save_checkpoint(model, run_dir, 2, plan.stage2_iterations, config_hash)
    _mark_stage(model, 2)
    return model


def train_stage3(
    model: TripleModel,
    split: DatasetSplit,
    plan: StagePlan,
    *,
    tversky: TverskyParams = None,
    log: TrainLog = None,
    run_dir=None,
    config_hash=None,
    zeta_override=None,
    label_processing=True,
    dual_loss=True,
    pseudo_target_soft=False,
    literal_boundary=False,
    overlap_weight=1.0,
    alpha_tolerance=0.005,
) -> TripleModel:
    """Remedial training of the least-confident view until it catches up."""
    log = log if log is not None else TrainLog()
    if not split.unlabelled or plan.stage3_epochs_max == 0:
        log.append(kind="stage_skip", stage=3, reason="no unlabelled data" if not split.unlabelled else "zero epochs")
        _mark_stage(model, 3)
        return model
    _require_stage(model, run_dir, 2)
    tversky = tversky or TverskyParams()
    raw = [float(a) for a in model.alpha_raw]
    target = int(np.argmin(raw))
    others_min = min(raw[k] for k in range(3) if k != target)
    log.append(kind="stage3_start", stage=3, target=VIEW_IDS[target], alphas_raw=list(raw), threshold=others_min - alpha_tolerance)
    if raw[target] >= others_min - alpha_tolerance:
        log.append(kind="stage3_stop", stage=3, epoch=0, reason="alpha already within tolerance")
        if run_dir is not None:
            save_checkpoint(model, run_dir, 3, 0, config_hash)
        _mark_stage(model, 3)
        return model

    # static pseudo targets voted by the donors at stage-3 entry, filtered at
    # the schedule's plateau (t = x)
    n_lab = len(split.labelled)
    x_all = _stack_images(split.unlabelled)
    p1, p2, voted = _vote_on_pool(model, target, x_all)
    pool = PseudoPool(entries=[], x=max(1, plan.stage3_epochs_max), y=len(split.unlabelled))
    for k in range(len(split.unlabelled)):
        pool.entries.append(
            PoolEntry(
                image_id=n_lab + k,
                pseudo=_to_soft_mask(voted[k]),
                score=disagreement_score(_to_soft_mask(p1[k]), _to_soft_mask(p2[k])),
            )
        )
    if label_processing:
        filter_low_confidence(pool, pool.x, pool_zeta(pool, zeta_override))
    active = pool.active_entries()
    log.append(kind="pool", stage=3, zeta=pool_zeta(pool, zeta_override), removed=pool.y - len(active), active=len(active))
    if not active:
        log.append(kind="stage3_stop", stage=3, epoch=0, reason="pool fully deactivated")
        if run_dir is not None:
            save_checkpoint(model, run_dir, 3, 0, config_hash)
        _mark_stage(model, 3)
        return model
    act_idx = torch.tensor([e.image_id - n_lab for e in active], dtype=torch.long)
    ps_x = x_all[act_idx]
    ps_y = voted[act_idx]
    if not pseudo_target_soft:
        ps_y = (ps_y >= 0.5).to(ps_y.dtype)
    lab_x = _stack_images([p[0] for p in split.labelled])
    lab_y = _stack_masks([p[1] for p in split.labelled])
    sup_loss = lambda p, g: focal_tversky_loss(p, g, tversky)
    if dual_loss:
        ps_loss = lambda p, g: stage23_loss(p, g, literal_boundary=literal_boundary, overlap_weight=overlap_weight)
    else:
        ps_loss = sup_loss
    opt = _view_optimizer(model, target, plan)
    val = _confidence_set(split, pool)
    # the recorded donor alphas were estimated against a different pool
    # state; re-measure the donors on this validation set so "caught up"
    # compares like with like
    others_min = min(
        estimate_confidence(model, k, val).mean_dice for k in range(3) if k != target
    )
    log.append(kind="stage3_threshold", stage=3, threshold=others_min - alpha_tolerance)
    last_good = _clone_state(model)
    stop_reason = "epoch cap reached"
    stop_epoch = plan.stage3_epochs_max
    try:
        for epoch in range(plan.stage3_epochs_max):
            lab_batches = list(_batches(len(lab_x), plan.batch_size, rng_for(plan.seed, "s3lab", epoch)))
            ps_batches = list(_batches(len(ps_x), plan.batch_size, rng_for(plan.seed, "s3ps", epoch)))
            losses = []
            for k in range(max(len(lab_batches), len(ps_batches))):
                for x, y, fn, batch in (
                    (lab_x, lab_y, sup_loss, lab_batches[k % len(lab_batches)]),
                    (ps_x, ps_y, ps_loss, ps_batches[k % len(ps_batches)]),
                ):
                    idx = torch.from_numpy(np.ascontiguousarray(batch))
                    opt.zero_grad()
                    probs = model.view_probs(x[idx], target).squeeze(1)
                    loss = fn(probs, y[idx])
                    if not torch.isfinite(loss):
                        raise TrainingDiverged(f"non-finite loss on view {VIEW_IDS[target]}")
                    loss.backward()
                    opt.step()
                    losses.append(loss.item())
            est = estimate_confidence(model, target, val)
            _update_alpha(model, target, est, log, stage=3)
            log.append(kind="epoch", stage=3, epoch=epoch, view=VIEW_IDS[target], loss=float(np.mean(losses)), steps=len(losses))
            last_good = _clone_state(model)
            if est.mean_dice >= others_min - alpha_tolerance:
                stop_reason = "alpha caught up"
                stop_epoch = epoch + 1
                break
    except TrainingDiverged:
        model.load_state_dict(last_good)
        if run_dir is not None:
            save_checkpoint(model, run_dir, 3, -1, config_hash, note="aborted: divergence")
        raise
    log.append(kind="stage3_stop", stage=3, epoch=stop_epoch, reason=stop_reason)
    # the shared stem moved; refresh every view's confidence for inference
    for n in range(3):
        _update_alpha(model, n, estimate_confidence(model, n, val), log, stage=3)
    if run_dir is not None:
        save_checkpoint(model, run_dir, 3, stop_epoch, config_hash)
    _mark_stage(model, 3)
    return model


def train_single_view(
    model: TripleModel,
    split: DatasetSplit,
    plan: StagePlan,
    *,
    view_index=0,
    budget_steps=None,
    perturb_cfg: PerturbConfig = None,
    tversky: TverskyParams = None,
    log: TrainLog = None,
    label_processing=True,
) -> TripleModel:
    """Supervised single-view baseline. With budget_steps set, runs epochs
    until exactly that many gradient steps have been taken."""
    if not split.labelled:
        raise ValueError("baseline requires labelled samples")
    perturb_cfg = perturb_cfg or PerturbConfig()
    tversky = tversky or TverskyParams()
    log = log if log is not None else TrainLog()
    loss_fn = lambda p, g: focal_tversky_loss(p, g, tversky)
    opt = _view_optimizer(model, view_index, plan)
    steps_done = 0
    epoch = 0
    while True:
        if budget_steps is None and epoch >= plan.stage1_epochs:
            break
        if budget_steps is not None and steps_done >= budget_steps:
            break
        if label_processing:
            batch, _ = perturb_batch(list(split.labelled), perturb_cfg, int_seed_for(plan.seed, "s1perturb", epoch))
        else:
            batch = list(split.labelled)
        x = _stack_images([b[0] for b in batch])
        y = _stack_masks([b[1] for b in batch])
        rng = rng_for(plan.seed, "s1order", epoch, view_index)
        losses = []
        for b in _batches(len(x), plan.batch_size, rng):
            if budget_steps is not None and steps_done >= budget_steps:
                break
            idx = torch.from_numpy(np.ascontiguousarray(b))
            opt.zero_grad()
            probs = model.view_probs(x[idx], view_index).squeeze(1)
            loss = loss_fn(probs, y[idx])
            if not torch.isfinite(loss):
                raise TrainingDiverged("non-finite baseline loss")
            loss.backward()
            opt.step()
            steps_done += 1
            losses.append(loss.item())
        if losses:
            log.append(kind="epoch", stage=1, epoch=epoch, view=VIEW_IDS[view_index], loss=float(np.mean(losses)), steps=len(losses))
        epoch += 1
    val = _confidence_set(split)
    _update_alpha(model, view_index, estimate_confidence(model, view_index, val), log, stage=1)
    _mark_stage(model, 1)
    log.append(kind="baseline_end", steps=steps_done, epochs=epoch)
    return model


def total_gradient_steps(log: TrainLog) -> int:
    return sum(r.get("steps", 0) for r in log.records if r.get("kind") == "epoch")


def predict_test(model: TripleModel, split: DatasetSplit, *, single_view=None):
    """Hard ensemble predictions (or one view's) over the test set."""
    preds = []
    x = _stack_images([img for img, _ in split.test])
    with torch.no_grad():
        if single_view is None:
            probs = model.ensemble_probs(x)
        else:
            probs = model.view_probs(x, single_view)
    for k in range(len(split.test)):
        preds.append(_to_soft_mask(probs[k]).harden())
    return preds


def write_run_report(run_dir, report, model, config_hash_value, preds, split):
    """report.json + report.csv + prediction/test-mask PNGs under run_dir."""
    from datetime import datetime, timezone

    from .data import _write_png
    from .metrics import write_report_csv

    run_dir = Path(run_dir)
    ids = [f"test_{k:04d}" for k in range(len(split.test))]
    try:
        alphas_norm = list(model.normalized_alpha())
    except RuntimeError:
        alphas_norm = None
    payload = {
        "generated_at": datetime.now(timezone.utc).isoformat(),
        "config_hash": config_hash_value,
        "alphas_raw": [float(a) for a in model.alpha_raw],
        "alphas_normalized": alphas_norm,
        "hd_convention": "exact max, euclidean on pixel centers",
        "count": report.aggregate["count"],
        "aggregate": report.aggregate["mean"],
        "missing": report.aggregate["missing"],
        "per_image": [
            {"id": i, **row} for i, row in zip(ids, report.per_image)
        ],
    }
    (run_dir / "report.json").write_text(json.dumps(payload, indent=1, sort_keys=True))
    write_report_csv(report, run_dir / "report.csv", ids=ids)
    pred_dir = run_dir / "predictions"
    gt_dir = run_dir / "test_masks"
    pred_dir.mkdir(exist_ok=True)
    gt_dir.mkdir(exist_ok=True)
    for i, pred, (_, gt) in zip(ids, preds, split.test):
        _write_png(pred_dir / f"{i}.png", pred.pixels)
        _write_png(gt_dir / f"{i}.png", gt.pixels)


def run_pipeline(config, run_dir=None):
    """Stages 1-3, ensemble inference on the test split, metric evaluation,
    and artifact persistence. Returns (model, TrainLog, MetricReport)."""
    from .config import build_dataset, config_hash, save_config  # lazy: config.py imports StagePlan

    run_dir = Path(run_dir) if run_dir is not None else Path(config.output_dir) / "run"
    run_dir.mkdir(parents=True, exist_ok=True)
    save_config(config, run_dir / "config.snapshot")
    chash = config_hash(config)

    samples = build_dataset(config)
    split = split_dataset(samples, config.labelled_fraction, config.effective_data_seed)

    torch.manual_seed(int_seed_for(config.seed, "init"))
    model = init_triple_model(config.model_config(), config.seed)
    plan = replace(config.plan, seed=config.seed)
    log = TrainLog(run_dir / "log.jsonl")
    kwargs = dict(
        tversky=config.tversky, log=log, run_dir=run_dir, config_hash=chash,
        zeta_override=config.zeta_override, label_processing=config.label_processing,
        dual_loss=config.dual_loss, pseudo_target_soft=config.pseudo_target_soft,
        literal_boundary=config.literal_boundary, overlap_weight=config.overlap_weight,
    )
    if config.supervised_only:
        train_single_view(
            model, split, plan, perturb_cfg=config.perturb, tversky=config.tversky,
            log=log, label_processing=config.label_processing,
        )
        save_checkpoint(model, run_dir, 1, plan.stage1_epochs, chash, note="supervised-only")
        preds = predict_test(model, split, single_view=0)
    else:
        train_stage1(
            model, split, plan, perturb_cfg=config.perturb, tversky=config.tversky,
            log=log, run_dir=run_dir, config_hash=chash, label_processing=config.label_processing,
        )
        train_stage2(model, split, plan, perturb_cfg=config.perturb, **kwargs)
        train_stage3(model, split, plan, **kwargs)
        preds = predict_test(model, split)

    report = evaluate_set(list(zip(preds, [gt for _, gt in split.test])))
    write_run_report(run_dir, report, model, chash, preds, split)
    return model, log, report
