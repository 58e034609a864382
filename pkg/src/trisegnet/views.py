"""Triple-view model: one shared low-level stem feeding three
architecturally distinct encoder-decoder pixel classifiers.

View A decodes with concatenated skip connections, view B bypasses spatial
detail by adding encoder features into the decoder, view C predicts from a
three-level pyramid and merges per-level logits by upsampling + averaging.
Every view ends in a per-pixel logistic, so outputs live in [0,1].
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .data import SOFT, ImageGrid, MaskGrid

VIEW_IDS = ("A", "B", "C")
ARCHITECTURES = ("skip_connection", "spatial_bypass", "multi_scale_pyramid")


@dataclass(frozen=True)
class ModelConfig:
    image_size: int = 64
    stem_width: int = 8
    view_width: int = 8
    architectures: tuple = ARCHITECTURES

    def __post_init__(self):
        if self.image_size % 16 != 0:
            raise ValueError(f"image_size must be divisible by 16, got {self.image_size}")
        if len(self.architectures) != 3:
            raise ValueError("exactly three view architectures required")
        for tag in self.architectures:
            if tag not in ARCHITECTURES:
                raise ValueError(f"unknown architecture tag {tag!r}")


def _block(cin, cout, stride=1):
    groups = 4 if cout % 4 == 0 else 1
    return nn.Sequential(
        nn.Conv2d(cin, cout, 3, stride=stride, padding=1),
        nn.GroupNorm(groups, cout),
        nn.ReLU(inplace=True),
    )


class SharedStem(nn.Module):
    """Two stride-2 conv blocks; output is (width, H/4, W/4)."""

    def __init__(self, width):
        super().__init__()
        self.body = nn.Sequential(_block(1, width, stride=2), _block(width, width, stride=2))

    def forward(self, x):
        return self.body(x)

    def load_pretrained(self, state_dict):
        """Optional init hook. A 3-channel first conv is averaged down to the
        single input channel before loading."""
        sd = dict(state_dict)
        key = "body.0.0.weight"
        if key in sd and sd[key].shape[1] == 3:
            sd[key] = sd[key].mean(dim=1, keepdim=True)
        self.load_state_dict(sd)


class SkipConnectionView(nn.Module):
    """U-style decoder: encoder features concatenated into the decoder."""

    tag = "skip_connection"

    def __init__(self, cin, width):
        super().__init__()
        self.enc1 = _block(cin, width)
        self.down = _block(width, 2 * width, stride=2)
        self.mid = _block(2 * width, 2 * width)
        self.fuse = _block(3 * width, width)  # cat(upsampled mid, enc1)
        self.full = _block(width, width)
        self.head = nn.Conv2d(width, 1, 1)

    def forward(self, feats, out_size):
        e1 = self.enc1(feats)
        m = self.mid(self.down(e1))
        up = F.interpolate(m, size=e1.shape[-2:], mode="bilinear", align_corners=False)
        d = self.fuse(torch.cat([up, e1], dim=1))
        d = F.interpolate(d, size=out_size, mode="bilinear", align_corners=False)
        return self.head(self.full(d))


class SpatialBypassView(nn.Module):
    """LinkNet-style decoder: encoder features added, not concatenated."""

    tag = "spatial_bypass"

    def __init__(self, cin, width):
        super().__init__()
        self.enc1 = _block(cin, width)
        self.down = _block(width, width, stride=2)
        self.mid = _block(width, width)
        self.dec = _block(width, width)
        self.post = _block(width, width)
        self.head = nn.Conv2d(width, 1, 1)

    def forward(self, feats, out_size):
        e1 = self.enc1(feats)
        m = self.mid(self.down(e1))
        up = F.interpolate(m, size=e1.shape[-2:], mode="bilinear", align_corners=False)
        d = self.dec(up) + e1
        d = F.interpolate(d, size=out_size, mode="bilinear", align_corners=False)
        return self.head(self.post(d))


class MultiScalePyramidView(nn.Module):
    """FPN-style: per-level 1-channel heads, merged by upsample + average."""

    tag = "multi_scale_pyramid"

    def __init__(self, cin, width):
        super().__init__()
        self.l1 = _block(cin, width)
        self.l2 = _block(width, 2 * width, stride=2)
        self.l3 = _block(2 * width, 2 * width, stride=2)
        self.h1 = nn.Conv2d(width, 1, 1)
        self.h2 = nn.Conv2d(2 * width, 1, 1)
        self.h3 = nn.Conv2d(2 * width, 1, 1)

    def forward(self, feats, out_size):
        f1 = self.l1(feats)
        f2 = self.l2(f1)
        f3 = self.l3(f2)
        logits = [
            F.interpolate(h(f), size=out_size, mode="bilinear", align_corners=False)
            for h, f in ((self.h1, f1), (self.h2, f2), (self.h3, f3))
        ]
        return sum(logits) / 3.0


_VIEW_CLASSES = {
    "skip_connection": SkipConnectionView,
    "spatial_bypass": SpatialBypassView,
    "multi_scale_pyramid": MultiScalePyramidView,
}


class TripleModel(nn.Module):
    """Shared stem + three views + per-view raw confidence weights."""

    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        self.stem = SharedStem(config.stem_width)
        self.views = nn.ModuleList(
            _VIEW_CLASSES[tag](config.stem_width, config.view_width) for tag in config.architectures
        )
        # raw (unnormalized) confidence per view, in [0,1]; starts uniform
        self.register_buffer("alpha_raw", torch.full((3,), 1.0 / 3.0, dtype=torch.float64))

    @property
    def architecture_tags(self):
        return tuple(v.tag for v in self.views)

    def set_alpha(self, values):
        vals = [float(v) for v in values]
        if len(vals) != 3 or any(v < 0 for v in vals):
            raise ValueError(f"alpha must be three non-negative reals, got {values}")
        self.alpha_raw.copy_(torch.tensor(vals, dtype=torch.float64))

    def normalized_alpha(self):
        total = float(self.alpha_raw.sum())
        if total <= 0:
            raise RuntimeError("all confidence weights are zero; estimate confidence first")
        return tuple(float(a) / total for a in self.alpha_raw)

    def view_logits(self, x: torch.Tensor, view_index: int) -> torch.Tensor:
        out_size = x.shape[-2:]
        return self.views[view_index](self.stem(x), out_size)

    def view_probs(self, x: torch.Tensor, view_index: int) -> torch.Tensor:
        return torch.sigmoid(self.view_logits(x, view_index))

    def ensemble_probs(self, x: torch.Tensor) -> torch.Tensor:
        alpha = self.normalized_alpha()
        feats = self.stem(x)
        out_size = x.shape[-2:]
        out = None
        for a, view in zip(alpha, self.views):
            p = torch.sigmoid(view(feats, out_size)) * a
            out = p if out is None else out + p
        return out


def init_triple_model(config: ModelConfig, seed: int) -> TripleModel:
    """Build stem + views with distinct per-view init seeds (seed + index)."""
    tags = tuple(config.architectures)
    if len(set(tags)) < 3:
        warnings.warn(f"duplicate view architectures requested: {tags}", stacklevel=2)
    torch.manual_seed(seed)
    model = TripleModel(config)
    for i, view in enumerate(model.views):
        torch.manual_seed(seed + 1 + i)
        for m in view.modules():
            if isinstance(m, nn.Conv2d):
                nn.init.kaiming_uniform_(m.weight, a=5 ** 0.5)
                if m.bias is not None:
                    nn.init.uniform_(m.bias, -0.1, 0.1)
    model.eval()
    return model


def _view_index(view_id) -> int:
    if view_id in (0, 1, 2):
        return view_id
    if view_id in VIEW_IDS:
        return VIEW_IDS.index(view_id)
    raise ValueError(f"unknown view id {view_id!r}")


def _to_input(model: TripleModel, image: ImageGrid) -> torch.Tensor:
    size = model.config.image_size
    if image.shape != (size, size):
        raise ValueError(f"image shape {image.shape} does not match configured size {size}")
    arr = np.ascontiguousarray(image.pixels, dtype=np.float32)
    return torch.from_numpy(arr).reshape(1, 1, size, size)


def _to_soft_mask(probs: torch.Tensor) -> MaskGrid:
    arr = probs.detach().cpu().numpy().astype(np.float64).reshape(probs.shape[-2:])
    return MaskGrid(np.clip(arr, 0.0, 1.0), SOFT)


def forward_view(model: TripleModel, view_id, image: ImageGrid) -> MaskGrid:
    with torch.no_grad():
        probs = model.view_probs(_to_input(model, image), _view_index(view_id))
    return _to_soft_mask(probs)


def ensemble_predict(model: TripleModel, image: ImageGrid) -> MaskGrid:
    with torch.no_grad():
        probs = model.ensemble_probs(_to_input(model, image))
    return _to_soft_mask(probs)
