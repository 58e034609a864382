"""Evaluation suite: confusion-count overlap measures, relative volume
difference, boundary surface distances, and von-Neumann-neighborhood boundary
Dice. Undefined cases (empty mask / empty boundary) come back as None and are
skipped during aggregation with a missing-count note, never as sentinel
numbers.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .data import HARD, MaskGrid

METRIC_NAMES = (
    "dice", "iou", "accuracy", "precision", "sensitivity", "specificity",
    "rvd", "hd", "assd", "dbd_g", "dbd_m", "sbd",
)

# report.csv column order; iou is reported in the JSON only
TABLE_COLUMNS = (
    "dice", "accuracy", "precision", "sensitivity", "specificity",
    "rvd", "hd", "assd", "dbd_g", "dbd_m", "sbd",
)


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    fn: int
    tn: int

    def __post_init__(self):
        if min(self.tp, self.fp, self.fn, self.tn) < 0:
            raise ValueError("confusion counts must be non-negative")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


def _hard_bool(mask: MaskGrid, name: str) -> np.ndarray:
    if mask.kind != HARD:
        raise ValueError(f"{name} must be a hard mask, got kind={mask.kind!r}")
    return mask.pixels > 0.5


def confusion_counts(ms: MaskGrid, gt: MaskGrid) -> ConfusionCounts:
    m, g = _hard_bool(ms, "ms"), _hard_bool(gt, "gt")
    if m.shape != g.shape:
        raise ValueError(f"shape mismatch: {m.shape} vs {g.shape}")
    return ConfusionCounts(
        tp=int(np.count_nonzero(m & g)),
        fp=int(np.count_nonzero(m & ~g)),
        fn=int(np.count_nonzero(~m & g)),
        tn=int(np.count_nonzero(~m & ~g)),
    )


def _ratio(num: float, den: float) -> float:
    # 0/0 arises only when the relevant region is empty in both masks; score 1
    return 1.0 if den == 0 else num / den


def overlap_metrics(c: ConfusionCounts) -> tuple[float, float, float, float, float, float]:
    dice = _ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn)
    iou = _ratio(c.tp, c.tp + c.fp + c.fn)
    accuracy = (c.tp + c.tn) / c.total
    precision = _ratio(c.tp, c.tp + c.fp)
    sensitivity = _ratio(c.tp, c.tp + c.fn)
    specificity = _ratio(c.tn, c.tn + c.fp)
    return dice, iou, accuracy, precision, sensitivity, specificity


def rvd(ms: MaskGrid, gt: MaskGrid):
    """| |ms| - |gt| | / |gt|; None when gt is empty."""
    nm = int(np.count_nonzero(_hard_bool(ms, "ms")))
    ng = int(np.count_nonzero(_hard_bool(gt, "gt")))
    if ng == 0:
        return None
    return abs(nm - ng) / ng


def extract_boundary(mask: MaskGrid) -> np.ndarray:
    """Boolean map of foreground pixels with a 4-neighbor outside the
    foreground; the image border counts as outside."""
    fg = _hard_bool(mask, "mask")
    p = np.pad(fg, 1, constant_values=False)
    interior = fg & p[:-2, 1:-1] & p[2:, 1:-1] & p[1:-1, :-2] & p[1:-1, 2:]
    return fg & ~interior


def surface_distances(ms: MaskGrid, gt: MaskGrid):
    """(hd, assd) between boundary pixel sets, Euclidean on pixel centers.

    HD is the exact max over both directed max-min distances (not a
    percentile). Returns (None, None) with a warning if either mask is empty.
    """
    bm, bg = extract_boundary(ms), extract_boundary(gt)
    if not bm.any() or not bg.any():
        warnings.warn("surface distances undefined for an empty mask", stacklevel=2)
        return None, None
    pm = np.argwhere(bm).astype(np.float64)
    pg = np.argwhere(bg).astype(np.float64)
    d_m = cKDTree(pg).query(pm)[0]  # machine boundary -> nearest gt boundary
    d_g = cKDTree(pm).query(pg)[0]
    hd = max(float(d_m.max()), float(d_g.max()))
    assd = (math.fsum(d_m.tolist()) + math.fsum(d_g.tolist())) / (len(d_m) + len(d_g))
    return hd, assd


def _neighborhood_sums(values: np.ndarray) -> np.ndarray:
    """Sum over the 5-pixel von Neumann neighborhood, clipped at borders."""
    p = np.pad(values, 1)
    return values + p[:-2, 1:-1] + p[2:, 1:-1] + p[1:-1, :-2] + p[1:-1, 2:]


def boundary_dice(ms: MaskGrid, gt: MaskGrid):
    """(dbd_g, dbd_m, sbd): neighborhood Dice averaged over each boundary.

    Per boundary pixel, Dice = 2|G∩M| / (|G| + |M|) restricted to the von
    Neumann neighborhood; empty-empty neighborhoods score 0. sbd pools both
    boundaries' sums. Returns (None, None, None) if either boundary is empty.
    """
    m, g = _hard_bool(ms, "ms"), _hard_bool(gt, "gt")
    if m.shape != g.shape:
        raise ValueError(f"shape mismatch: {m.shape} vs {g.shape}")
    bm, bg = extract_boundary(ms), extract_boundary(gt)
    if not bm.any() or not bg.any():
        return None, None, None
    inter = _neighborhood_sums((m & g).astype(np.int64))
    denom = _neighborhood_sums(g.astype(np.int64)) + _neighborhood_sums(m.astype(np.int64))
    dice = np.where(denom > 0, 2.0 * inter / np.maximum(denom, 1), 0.0)
    sum_g, n_g = float(dice[bg].sum()), int(np.count_nonzero(bg))
    sum_m, n_m = float(dice[bm].sum()), int(np.count_nonzero(bm))
    return sum_g / n_g, sum_m / n_m, (sum_g + sum_m) / (n_g + n_m)


def evaluate_pair(ms: MaskGrid, gt: MaskGrid) -> dict:
    """All twelve per-image metrics as a name -> value-or-None dict."""
    c = confusion_counts(ms, gt)
    dice, iou, accuracy, precision, sensitivity, specificity = overlap_metrics(c)
    hd, assd = surface_distances(ms, gt)
    dbd_g, dbd_m, sbd = boundary_dice(ms, gt)
    return {
        "dice": dice, "iou": iou, "accuracy": accuracy, "precision": precision,
        "sensitivity": sensitivity, "specificity": specificity,
        "rvd": rvd(ms, gt), "hd": hd, "assd": assd,
        "dbd_g": dbd_g, "dbd_m": dbd_m, "sbd": sbd,
    }


@dataclass(frozen=True)
class MetricReport:
    per_image: tuple
    aggregate: dict


def aggregate_rows(rows: list[dict]) -> dict:
    """Mean per metric over defined values; undefined ones counted, not faked."""
    mean, missing = {}, {}
    for name in METRIC_NAMES:
        vals = [r[name] for r in rows if r.get(name) is not None]
        mean[name] = float(np.mean(vals)) if vals else None
        if len(vals) < len(rows):
            missing[name] = len(rows) - len(vals)
    return {"count": len(rows), "mean": mean, "missing": missing}


def evaluate_set(pairs: list[tuple[MaskGrid, MaskGrid]]) -> MetricReport:
    rows = tuple(evaluate_pair(ms, gt) for ms, gt in pairs)
    return MetricReport(per_image=rows, aggregate=aggregate_rows(list(rows)))


def write_report_csv(report: MetricReport, path, ids=None):
    """Per-image rows plus a final mean row, blank cells for missing values."""
    import csv

    if ids is None:
        ids = [f"{k:04d}" for k in range(len(report.per_image))]

    def fmt(v):
        return "" if v is None else f"{v:.6f}"

    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("image",) + TABLE_COLUMNS)
        for i, row in zip(ids, report.per_image):
            w.writerow([i] + [fmt(row[c]) for c in TABLE_COLUMNS])
        w.writerow(["mean"] + [fmt(report.aggregate["mean"][c]) for c in TABLE_COLUMNS])
