"""Data perturbation: a 70% selection gate, then per-sample flip / rotation /
brightness / contrast stages firing independently. Geometric transforms apply
jointly to image and mask; photometric ones touch the image only.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .data import ImageGrid, MaskGrid
from .util import rng_for, round_half_up

# Descriptors are tuples: ("flip_lr",), ("rot90",), ("brightness", delta), ...
Transform = tuple

GEOMETRIC = ("flip_lr", "flip_ud", "rot90", "rot180", "rot270")
PHOTOMETRIC = ("brightness", "contrast")

_GEOM_OPS = {
    "flip_lr": lambda a: a[:, ::-1],
    "flip_ud": lambda a: a[::-1, :],
    "rot90": lambda a: np.rot90(a, 1),
    "rot180": lambda a: np.rot90(a, 2),
    "rot270": lambda a: np.rot90(a, 3),
}

_GEOM_INVERSE = {
    "flip_lr": ("flip_lr",),
    "flip_ud": ("flip_ud",),
    "rot90": ("rot270",),
    "rot180": ("rot180",),
    "rot270": ("rot90",),
}


@dataclass(frozen=True)
class PerturbConfig:
    select_p: float = 0.70
    flip_p: float = 0.80
    rotate_p: float = 0.25
    brightness_p: float = 0.20
    contrast_p: float = 0.30
    brightness_delta_max: float = 0.2
    contrast_range: tuple[float, float] = (0.8, 1.25)

    def __post_init__(self):
        for name in ("select_p", "flip_p", "rotate_p", "brightness_p", "contrast_p"):
            p = getattr(self, name)
            if not (0.0 <= p <= 1.0):
                raise ValueError(f"{name} must lie in [0, 1], got {p}")
        if self.brightness_delta_max < 0:
            raise ValueError(f"brightness_delta_max must be >= 0, got {self.brightness_delta_max}")
        lo, hi = self.contrast_range
        if not (0.0 < lo <= hi):
            raise ValueError(f"contrast_range must be positive with lo <= hi, got {self.contrast_range}")


@dataclass(frozen=True)
class TransformRecord:
    """The transforms applied to one sample, replayable in order."""

    index: int
    transforms: tuple[Transform, ...]


def apply_transform(
    image: ImageGrid, mask: Optional[MaskGrid], transform: Transform
) -> tuple[ImageGrid, Optional[MaskGrid]]:
    """Apply one transform descriptor; outputs stay in [0, 1], hard masks stay hard."""
    name = transform[0]
    if name in _GEOM_OPS:
        op = _GEOM_OPS[name]
        out_img = ImageGrid(op(image.pixels))
        out_mask = MaskGrid(op(mask.pixels), mask.kind) if mask is not None else None
        return out_img, out_mask
    if name == "brightness":
        delta = transform[1]
        return ImageGrid(np.clip(image.pixels + delta, 0.0, 1.0)), mask
    if name == "contrast":
        factor = transform[1]
        mean = image.pixels.mean()
        return ImageGrid(np.clip((image.pixels - mean) * factor + mean, 0.0, 1.0)), mask
    raise ValueError(f"unknown transform {name!r}")


def invert_geometric(transform: Transform) -> Transform:
    name = transform[0]
    if name not in _GEOM_INVERSE:
        raise ValueError(f"transform {name!r} is not an invertible geometric transform")
    return _GEOM_INVERSE[name]


def replay(image: ImageGrid, mask: Optional[MaskGrid], record: TransformRecord):
    """Re-apply a record to the original sample; reproduces the perturbed output."""
    for t in record.transforms:
        image, mask = apply_transform(image, mask, t)
    return image, mask


def undo_geometric(mask: MaskGrid, record: TransformRecord) -> MaskGrid:
    """Map a mask from the perturbed frame back to the original frame."""
    for t in reversed(record.transforms):
        if t[0] in _GEOM_OPS:
            _, mask = apply_transform(ImageGrid(np.zeros(mask.shape)), mask, invert_geometric(t))
    return mask


def _draw_transforms(rng: np.random.Generator, config: PerturbConfig) -> tuple[Transform, ...]:
    ts: list[Transform] = []
    if rng.random() < config.flip_p:
        ts.append(("flip_lr",) if rng.random() < 0.5 else ("flip_ud",))
    if rng.random() < config.rotate_p:
        ts.append((("rot90", "rot180", "rot270")[rng.integers(3)],))
    if rng.random() < config.brightness_p:
        d = config.brightness_delta_max
        ts.append(("brightness", float(rng.uniform(-d, d))))
    if rng.random() < config.contrast_p:
        lo, hi = config.contrast_range
        ts.append(("contrast", float(rng.uniform(lo, hi))))
    return tuple(ts)


def perturb_batch(
    batch: list[tuple[ImageGrid, Optional[MaskGrid]]],
    config: PerturbConfig,
    rng_seed: int,
) -> tuple[list[tuple[ImageGrid, Optional[MaskGrid]]], list[TransformRecord]]:
    """Perturb exactly round(select_p · n) samples of the batch.

    Per-sample draws derive from (rng_seed, sample index) only, so serial and
    parallel execution agree. Returns the batch (same order) plus one record
    per selected sample.
    """
    n = len(batch)
    if n == 0:
        raise ValueError("perturb_batch requires a non-empty batch")
    k = round_half_up(config.select_p * n)
    selected = sorted(rng_for(rng_seed, "select").permutation(n)[:k])

    out = list(batch)
    records = []
    for i in selected:
        ts = _draw_transforms(rng_for(rng_seed, "sample", i), config)
        image, mask = batch[i]
        for t in ts:
            image, mask = apply_transform(image, mask, t)
        out[i] = (image, mask)
        records.append(TransformRecord(index=int(i), transforms=ts))
    return out, records
