"""Pseudo-label machinery: the scheduled low-confidence removal curve,
pairwise disagreement scoring, per-view confidence estimation on a validation
set, and donor voting that builds each view's pseudo-label targets.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .data import HARD, MaskGrid
from .metrics import confusion_counts, overlap_metrics
from .util import round_half_up
from .views import VIEW_IDS, TripleModel, _to_input, _to_soft_mask, _view_index

EPS = 1.0e-6
ZETA_CLAMP = 0.95


def removal_schedule(t: int, x: int, y: int, zeta: float) -> float:
    """Un-rounded removal curve: a high plateau, a linear decay, a low floor.

    Continuous at both breakpoints 0.01(1-z)x and 0.05(1-z)x and
    non-increasing in t.
    """
    if zeta >= 1.0:
        raise ValueError(f"zeta={zeta} degenerates the schedule (must be < 1)")
    if not 0.0 <= zeta:
        raise ValueError(f"zeta must be non-negative, got {zeta}")
    if not 0 < t <= x:
        raise ValueError(f"need 0 < t <= x, got t={t}, x={x}")
    if y < 0:
        raise ValueError(f"y must be >= 0, got {y}")
    keep = 1.0 - zeta
    if t < 0.01 * keep * x:
        return 0.05 * keep * y
    if t > 0.05 * keep * x:
        return 0.01 * keep * y
    return (-y / x) * t + 0.06 * keep * y


def removal_count(t: int, x: int, y: int, zeta: float) -> int:
    return round_half_up(removal_schedule(t, x, y, zeta))


def disagreement_score(p1: MaskGrid, p2: MaskGrid) -> float:
    """1 - Dice between the hardened maps, smoothed so empty-empty scores 0."""
    a = p1.harden().pixels
    b = p2.harden().pixels
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    inter = float((a * b).sum())
    dice = (2.0 * inter + EPS) / (float(a.sum()) + float(b.sum()) + EPS)
    return 1.0 - dice


@dataclass
class PoolEntry:
    image_id: int
    pseudo: MaskGrid  # soft voted label in the un-perturbed frame
    score: float = 0.0
    active: bool = True


@dataclass
class PseudoPool:
    entries: list = field(default_factory=list)
    t: int = 0  # gradient-step counter the schedule was last applied at
    x: int = 1  # planned total iterations
    y: int = 0  # total prediction count (pool size)

    def active_entries(self) -> list:
        return [e for e in self.entries if e.active]

    def reactivate_all(self):
        for e in self.entries:
            e.active = True

    def mean_disagreement(self) -> float:
        active = self.active_entries()
        if not active:
            return 0.0
        return float(np.mean([e.score for e in active]))


def pool_zeta(pool: PseudoPool, override=None) -> float:
    """Disagreement level for the schedule: mean active score, clamped."""
    if override is not None:
        return float(override)
    return min(max(pool.mean_disagreement(), 0.0), ZETA_CLAMP)


def filter_low_confidence(pool: PseudoPool, t: int, zeta: float) -> PseudoPool:
    """Deactivate the N(t) highest-disagreement active entries.

    Per-epoch semantics: callers reactivate_all() before rescoring, so
    removal never compounds. Ties broken toward smaller image_id.
    """
    active = pool.active_entries()
    n = removal_count(t, pool.x, pool.y, zeta)
    if n > len(active):
        warnings.warn(f"removal count {n} exceeds active pool {len(active)}; clamping", stacklevel=2)
        n = len(active)
    ranked = sorted(active, key=lambda e: (-e.score, e.image_id))
    for e in ranked[:n]:
        e.active = False
    pool.t = t
    return pool


@dataclass(frozen=True)
class ConfidenceEstimate:
    view_id: str
    mean_dice: float  # the raw (unnormalized) confidence

    def __post_init__(self):
        if not 0.0 <= self.mean_dice <= 1.0:
            raise ValueError(f"mean dice out of range: {self.mean_dice}")


def normalize_alphas(values) -> tuple:
    vals = [float(v) for v in values]
    if any(v < 0 for v in vals):
        raise ValueError(f"negative confidence: {vals}")
    total = sum(vals)
    if total <= 0:
        raise ValueError("cannot normalize all-zero confidences")
    return tuple(v / total for v in vals)


def estimate_confidence(model: TripleModel, view_id, validation_set) -> ConfidenceEstimate:
    """Raw alpha for one view: mean Dice of its hard predictions over the
    validation pairs (image, hard-or-hardenable target)."""
    if not validation_set:
        raise ValueError("validation set is empty")
    idx = _view_index(view_id)
    x = torch.cat([_to_input(model, img) for img, _ in validation_set])
    with torch.no_grad():
        probs = model.view_probs(x, idx)
    dices = []
    for k, (_, target) in enumerate(validation_set):
        pred = _to_soft_mask(probs[k]).harden()
        gt = target if target.kind == HARD else target.harden()
        dices.append(overlap_metrics(confusion_counts(pred, gt))[0])
    return ConfidenceEstimate(view_id=VIEW_IDS[idx], mean_dice=float(np.mean(dices)))


def vote_probs(model: TripleModel, target_view, x: torch.Tensor) -> torch.Tensor:
    """Donor vote for the target view, batched: the other two views' raw
    alphas are renormalized to sum to 1, then outputs combined pixelwise."""
    n = _view_index(target_view)
    d1, d2 = (n + 1) % 3, (n + 2) % 3
    a1, a2 = float(model.alpha_raw[d1]), float(model.alpha_raw[d2])
    if a1 + a2 <= 0:
        warnings.warn("both donor confidences are zero; using the unweighted mean", stacklevel=2)
        w1 = w2 = 0.5
    else:
        w1, w2 = a1 / (a1 + a2), a2 / (a1 + a2)
    feats = model.stem(x)
    size = x.shape[-2:]
    p1 = torch.sigmoid(model.views[d1](feats, size))
    p2 = torch.sigmoid(model.views[d2](feats, size))
    return p1 * w1 + p2 * w2


def vote_pseudo_label(model: TripleModel, target_view, image) -> MaskGrid:
    with torch.no_grad():
        probs = vote_probs(model, target_view, _to_input(model, image))
    return _to_soft_mask(probs)


def snapshot_pool(pool: PseudoPool, directory, epoch: int):
    """Audit dump: JSON manifest plus a uint8-quantized mask archive."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    manifest = {
        "epoch": epoch,
        "t": pool.t,
        "x": pool.x,
        "y": pool.y,
        "entries": [
            {"image_id": e.image_id, "score": e.score, "active": e.active}
            for e in pool.entries
        ],
    }
    (directory / f"epoch_{epoch:04d}.json").write_text(json.dumps(manifest, indent=1))
    ids = np.array([e.image_id for e in pool.entries], dtype=np.int64)
    masks = np.stack([np.rint(e.pseudo.pixels * 255).astype(np.uint8) for e in pool.entries]) \
        if pool.entries else np.zeros((0, 0, 0), dtype=np.uint8)
    np.savez_compressed(directory / f"epoch_{epoch:04d}.npz", ids=ids, masks=masks)


def load_pool_snapshot(directory, epoch: int):
    directory = Path(directory)
    manifest = json.loads((directory / f"epoch_{epoch:04d}.json").read_text())
    with np.load(directory / f"epoch_{epoch:04d}.npz") as z:
        masks = {int(i): z["masks"][k].astype(np.float64) / 255.0 for k, i in enumerate(z["ids"])}
    return manifest, masks


def latest_snapshot_epoch(directory):
    paths = sorted(Path(directory).glob("epoch_*.json"))
    if not paths:
        raise FileNotFoundError(f"no pool snapshots under {directory}")
    return int(paths[-1].stem.split("_")[1])
