"""Dataset grids, PNG directory ingestion, deterministic splitting and a
synthetic shape generator used by the desk-scale experiments.

Directory layout: ``<root>/images/*.png`` with optional ``<root>/masks/*.png``
sharing basenames. Images and masks are 8-bit grayscale PNG; RGB inputs are
collapsed by channel average.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
from PIL import Image

from .util import rng_for, round_half_up

HARD = "hard"
SOFT = "soft"


@dataclass(frozen=True)
class ImageGrid:
    """An H×W grid of intensities in [0, 1]."""

    pixels: np.ndarray

    def __post_init__(self):
        arr = np.array(self.pixels, dtype=np.float64)
        if arr.ndim != 2 or arr.size == 0:
            raise ValueError(f"ImageGrid expects a non-empty 2-D array, got shape {arr.shape}")
        if not np.isfinite(arr).all():
            raise ValueError("ImageGrid contains non-finite values")
        if arr.min() < 0.0 or arr.max() > 1.0:
            raise ValueError(f"ImageGrid values must lie in [0, 1], got [{arr.min()}, {arr.max()}]")
        arr.setflags(write=False)
        object.__setattr__(self, "pixels", arr)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.pixels.shape


@dataclass(frozen=True)
class MaskGrid:
    """An H×W mask; ``hard`` masks hold only {0, 1}, ``soft`` masks hold [0, 1]."""

    pixels: np.ndarray
    kind: str = HARD

    def __post_init__(self):
        if self.kind not in (HARD, SOFT):
            raise ValueError(f"mask kind must be '{HARD}' or '{SOFT}', got {self.kind!r}")
        arr = np.array(self.pixels, dtype=np.float64)
        if arr.ndim != 2 or arr.size == 0:
            raise ValueError(f"MaskGrid expects a non-empty 2-D array, got shape {arr.shape}")
        if not np.isfinite(arr).all():
            raise ValueError("MaskGrid contains non-finite values")
        if self.kind == HARD:
            if not np.isin(arr, (0.0, 1.0)).all():
                raise ValueError("hard MaskGrid may only contain {0, 1}")
        elif arr.min() < 0.0 or arr.max() > 1.0:
            raise ValueError(f"soft MaskGrid values must lie in [0, 1], got [{arr.min()}, {arr.max()}]")
        arr.setflags(write=False)
        object.__setattr__(self, "pixels", arr)

    @property
    def shape(self) -> tuple[int, int]:
        return self.pixels.shape

    def harden(self, threshold: float = 0.5) -> "MaskGrid":
        if self.kind == HARD:
            return self
        return MaskGrid((self.pixels >= threshold).astype(np.float64), HARD)

    def as_bool(self) -> np.ndarray:
        if self.kind != HARD:
            raise ValueError("as_bool requires a hard mask")
        return self.pixels.astype(bool)

    @property
    def foreground_fraction(self) -> float:
        return float(self.pixels.mean())


Sample = tuple[ImageGrid, Optional[MaskGrid]]


@dataclass(frozen=True)
class DatasetSplit:
    """Labelled / unlabelled / test partition with provenance seed.

    Training-order ids run 0..n_train-1 with labelled samples first, then
    unlabelled; ``validation_ids`` index into that order.
    """

    labelled: list[tuple[ImageGrid, MaskGrid]]
    unlabelled: list[ImageGrid]
    test: list[tuple[ImageGrid, MaskGrid]]
    validation_ids: list[int]
    seed: int

    @property
    def n_train(self) -> int:
        return len(self.labelled) + len(self.unlabelled)


def _as_size(size) -> tuple[int, int]:
    """Accept a bare side length or an (h, w) pair."""
    if isinstance(size, (int, np.integer)):
        return int(size), int(size)
    h, w = size
    return int(h), int(w)


def _to_gray_array(img: Image.Image) -> np.ndarray:
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim == 3:  # RGB(A): channel average, alpha dropped
        arr = arr[..., :3].mean(axis=2)
    return arr


def _load_png(path: Path, image_size: tuple[int, int] | None) -> np.ndarray:
    with Image.open(path) as img:
        arr = _to_gray_array(img)
    if image_size is not None and arr.shape != tuple(image_size):
        h, w = image_size
        resized = Image.fromarray(arr.astype(np.float32), mode="F").resize((w, h), Image.BILINEAR)
        arr = np.asarray(resized, dtype=np.float64)
    return np.clip(arr / 255.0, 0.0, 1.0)


def load_dataset(root_path, image_size: tuple[int, int]) -> list[Sample]:
    """Load ``<root>/images/*.png`` (+ optional masks), resized to image_size.

    Intensities are scaled to [0, 1]; masks are binarized at 0.5 after resize.
    Output order is stable (filename sort).
    """
    image_size = _as_size(image_size) if image_size is not None else None
    root = Path(root_path)
    images_dir = root / "images"
    if not images_dir.is_dir():
        raise FileNotFoundError(f"missing images directory: {images_dir}")
    masks_dir = root / "masks"
    have_masks = masks_dir.is_dir()

    files = sorted(images_dir.glob("*.png"))
    if not files:
        raise ValueError(f"no PNG images found under {images_dir}")

    samples: list[Sample] = []
    for f in files:
        mask_path = masks_dir / f.name if have_masks else None
        if mask_path is not None and mask_path.is_file():
            with Image.open(f) as im, Image.open(mask_path) as mm:
                if im.size != mm.size:
                    raise ValueError(
                        f"image/mask size mismatch for {f.name}: image {im.size}, mask {mm.size}"
                    )
            mask_arr = _load_png(mask_path, image_size)
            mask = MaskGrid((mask_arr >= 0.5).astype(np.float64), HARD)
        else:
            mask = None
        samples.append((ImageGrid(_load_png(f, image_size)), mask))
    return samples


def write_dataset(root_path, samples: list[Sample]) -> None:
    """Write samples in the ``images/`` + ``masks/`` PNG layout (8-bit grayscale)."""
    root = Path(root_path)
    (root / "images").mkdir(parents=True, exist_ok=True)
    if any(m is not None for _, m in samples):
        (root / "masks").mkdir(parents=True, exist_ok=True)
    for i, (image, mask) in enumerate(samples):
        name = f"sample_{i:05d}.png"
        _write_png(root / "images" / name, image.pixels)
        if mask is not None:
            _write_png(root / "masks" / name, mask.pixels)


def _write_png(path: Path, pixels: np.ndarray) -> None:
    data = np.rint(pixels * 255.0).astype(np.uint8)
    Image.fromarray(data, mode="L").save(path)


def split_dataset(samples: list[Sample], labelled_fraction: float, seed: int) -> DatasetSplit:
    """Partition samples into test (10%), labelled and unlabelled (masks dropped).

    Sizes follow round-half-up arithmetic: |test| = round(0.10 N),
    |labelled| = round(fraction · (N − |test|)). validation_ids are a separate
    random 20% sample of the training order. Deterministic given seed.
    """
    n = len(samples)
    if n < 10:
        raise ValueError(f"need at least 10 samples to split, got {n}")
    if not (0.0 < labelled_fraction <= 1.0):
        raise ValueError(f"labelled_fraction must lie in (0, 1], got {labelled_fraction}")

    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    n_test = round_half_up(0.10 * n)
    n_train = n - n_test
    n_lab = round_half_up(labelled_fraction * n_train)
    if n_lab < 1:
        raise ValueError(
            f"labelled_fraction {labelled_fraction} leaves no labelled samples (N={n})"
        )

    test_idx = perm[:n_test]
    train_idx = perm[n_test:]
    lab_idx = train_idx[:n_lab]
    unlab_idx = train_idx[n_lab:]

    def _pair(i: int) -> tuple[ImageGrid, MaskGrid]:
        image, mask = samples[i]
        if mask is None:
            raise ValueError(f"sample {i} landed in a labelled/test partition but has no mask")
        return (image, mask)

    n_val = round_half_up(0.20 * n_train)
    validation_ids = sorted(int(v) for v in rng.choice(n_train, size=n_val, replace=False))

    return DatasetSplit(
        labelled=[_pair(i) for i in lab_idx],
        unlabelled=[samples[i][0] for i in unlab_idx],
        test=[_pair(i) for i in test_idx],
        validation_ids=validation_ids,
        seed=seed,
    )


def generate_synthetic(
    count: int,
    size: tuple[int, int],
    seed: int,
    noise_sigma: float = 0.1,
    fg_bounds: tuple[float, float] = (0.05, 0.6),
    structure_fraction: float = 0.75,
) -> list[tuple[ImageGrid, MaskGrid]]:
    """Random ellipse/rectangle foregrounds with additive Gaussian noise.

    Image = shape indicator + noise, clipped to [0, 1]; the mask is the exact
    indicator. The zero-mean Gaussian noise mixes a white component with a
    low-frequency random field (structure_fraction of the variance), so a
    plain per-pixel threshold is not enough to recover the mask: smooth
    blobs of noise mimic foreground and must be rejected by shape.
    Foreground fraction is kept inside fg_bounds by resampling. Per-sample
    RNG derives from (seed, index), so output is order-independent.
    """
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    h, w = _as_size(size)
    if h < 16 or w < 16:
        raise ValueError(f"size must be at least 16x16, got {size}")
    if noise_sigma < 0:
        raise ValueError(f"noise_sigma must be >= 0, got {noise_sigma}")
    if not (0.0 <= structure_fraction <= 1.0):
        raise ValueError(f"structure_fraction must lie in [0, 1], got {structure_fraction}")

    samples = []
    for i in range(count):
        rng = rng_for(seed, "synthetic", i)
        mask = _random_shape(rng, h, w, fg_bounds)
        if noise_sigma > 0:
            white = rng.normal(0.0, 1.0, size=(h, w))
            field = _smooth_field(rng, h, w)
            noise = (1.0 - structure_fraction) ** 0.5 * white + structure_fraction**0.5 * field
            image = np.clip(mask + noise_sigma * noise, 0.0, 1.0)
        else:
            image = mask
        samples.append((ImageGrid(image), MaskGrid(mask, HARD)))
    return samples


def _smooth_field(rng: np.random.Generator, h: int, w: int) -> np.ndarray:
    """Unit-variance low-frequency Gaussian field (bilinear-upsampled knots)."""
    kh, kw = max(3, h // 8), max(3, w // 8)
    knots = rng.normal(0.0, 1.0, size=(kh, kw)).astype(np.float32)
    field = np.asarray(
        Image.fromarray(knots, mode="F").resize((w, h), Image.BILINEAR), dtype=np.float64
    )
    sd = field.std()
    return field / sd if sd > 0 else field


def _random_shape(rng: np.random.Generator, h: int, w: int, fg_bounds: tuple[float, float]) -> np.ndarray:
    lo, hi = fg_bounds
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    for _ in range(200):
        cy = rng.uniform(0.25, 0.75) * h
        cx = rng.uniform(0.25, 0.75) * w
        ry = rng.uniform(0.10, 0.42) * h
        rx = rng.uniform(0.10, 0.42) * w
        if rng.integers(2) == 0:
            inside = ((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2 <= 1.0
        else:
            inside = (np.abs(yy - cy) <= ry) & (np.abs(xx - cx) <= rx)
        frac = inside.mean()
        if lo < frac < hi:
            return inside.astype(np.float64)
    raise RuntimeError("could not draw a shape inside the foreground-fraction bounds")
