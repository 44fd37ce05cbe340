"""Fields, feature pyramids and resampling primitives.

A *field* is a float64 array of shape ``(H, W, C)``; a *flow* is ``(H, W, 2)``
holding ``(u, v)`` = (horizontal, vertical) displacement in pixels at that
array's resolution. Pyramid level 1 is the finest and is stored at index 0.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError

LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114])

FEATURE_KINDS = ("luma_grad", "luma_grad_census")

# neighbour offsets (dy, dx) for the soft census descriptor, row-major
_CENSUS_OFFSETS = ((-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1))


def as_field(a) -> np.ndarray:
    """Coerce to a contiguous float64 ``(H, W, C)`` array."""
    a = np.asarray(a, dtype=np.float64)
    if a.ndim == 2:
        a = a[:, :, None]
    if a.ndim != 3:
        raise DimensionError(f"expected (H, W) or (H, W, C) array, got shape {a.shape}")
    return np.ascontiguousarray(a)


def as_flow(a) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 3 or a.shape[2] != 2:
        raise DimensionError(f"expected (H, W, 2) flow, got shape {a.shape}")
    return np.ascontiguousarray(a)


def check_finite(a: np.ndarray, what: str = "array") -> np.ndarray:
    if not np.all(np.isfinite(a)):
        from .errors import NumericError

        raise NumericError(f"{what} contains non-finite values")
    return a


def cap_flow(flow: np.ndarray, cap: float | None = None) -> np.ndarray:
    """Scale down vectors whose magnitude exceeds ``cap`` (default max(H, W))."""
    flow = as_flow(flow)
    if cap is None:
        cap = float(max(flow.shape[:2]))
    mag = np.hypot(flow[..., 0], flow[..., 1])
    scale = np.where(mag > cap, cap / np.maximum(mag, 1e-300), 1.0)
    return flow * scale[..., None]


def to_luma(image) -> np.ndarray:
    """Luma plane ``(H, W)`` of a 1- or 3-channel field."""
    image = as_field(image)
    c = image.shape[2]
    if c == 1:
        return image[:, :, 0].copy()
    if c == 3:
        return image @ LUMA_WEIGHTS
    raise DimensionError(f"image must have 1 or 3 channels, got {c}")


def central_gradients(plane: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Central differences with replicated borders; returns (d/dx, d/dy)."""
    p = np.pad(plane, 1, mode="edge")
    gx = 0.5 * (p[1:-1, 2:] - p[1:-1, :-2])
    gy = 0.5 * (p[2:, 1:-1] - p[:-2, 1:-1])
    return gx, gy


def soft_census(plane: np.ndarray, slope: float) -> np.ndarray:
    """8-channel descriptor ``tanh(slope * (I(n) - I(x)))`` over the 8-neighbourhood."""
    h, w = plane.shape
    p = np.pad(plane, 1, mode="edge")
    out = np.empty((h, w, 8))
    for k, (dy, dx) in enumerate(_CENSUS_OFFSETS):
        out[:, :, k] = np.tanh(slope * (p[1 + dy:1 + dy + h, 1 + dx:1 + dx + w] - plane))
    return out


def downsample_image_x2(image) -> np.ndarray:
    """2x2 average pooling. Odd trailing rows/columns are dropped."""
    image = as_field(image)
    h, w = image.shape[:2]
    if h < 2 or w < 2:
        raise DimensionError(f"cannot halve a {h}x{w} field")
    h2, w2 = h // 2, w // 2
    a = image[: 2 * h2, : 2 * w2]
    return 0.25 * (a[0::2, 0::2] + a[1::2, 0::2] + a[0::2, 1::2] + a[1::2, 1::2])


@dataclass(frozen=True)
class FeaturePyramid:
    levels: tuple  # of (H, W, C) arrays, finest first

    @property
    def level_count(self) -> int:
        return len(self.levels)

    @property
    def channels(self) -> int:
        return self.levels[0].shape[2]

    def shape_chain(self) -> list[tuple[int, int]]:
        return [lv.shape[:2] for lv in self.levels]

    def __getitem__(self, i):
        return self.levels[i]

    def __len__(self):
        return len(self.levels)


def pyramid_shapes(h: int, w: int, levels: int) -> list[tuple[int, int]]:
    shapes = [(h, w)]
    for _ in range(levels - 1):
        h, w = h // 2, w // 2
        shapes.append((h, w))
    return shapes


def build_feature_pyramid(image, levels: int = 4, feature_kind: str = "luma_grad_census",
                          census_slope: float = 25.0) -> FeaturePyramid:
    """Handcrafted feature pyramid.

    Level 1 holds ``(luma, d/dx luma, d/dy luma)`` computed at full resolution,
    optionally followed by the 8 soft-census channels. Coarser levels are 2x2
    average pools of the level above, so channel means are preserved.
    """
    if levels < 2:
        raise DimensionError("a pyramid needs at least 2 levels")
    if feature_kind not in FEATURE_KINDS:
        raise ValueError(f"unknown feature kind {feature_kind!r}")
    image = as_field(image)
    h, w = image.shape[:2]
    need = 2 ** (levels - 1)
    if h < need or w < need:
        raise DimensionError(f"{h}x{w} image too small for {levels} pyramid levels (need {need})")
    y = to_luma(image)
    gx, gy = central_gradients(y)
    chans = [y[:, :, None], gx[:, :, None], gy[:, :, None]]
    if feature_kind == "luma_grad_census":
        chans.append(soft_census(y, census_slope))
    feats = [np.ascontiguousarray(np.concatenate(chans, axis=2))]
    for _ in range(levels - 1):
        feats.append(downsample_image_x2(feats[-1]))
    return FeaturePyramid(tuple(feats))


def upsample_flow_x2(flow, target_h: int, target_w: int) -> np.ndarray:
    """Bilinear 2x upsampling of a flow field; vectors are doubled.

    ``target_h``/``target_w`` must be within one pixel of twice the source size,
    which covers both even and odd fine-level dimensions.
    """
    flow = as_flow(flow)
    h, w = flow.shape[:2]
    if abs(target_h - 2 * h) > 1 or abs(target_w - 2 * w) > 1:
        raise DimensionError(f"cannot upsample {h}x{w} to {target_h}x{target_w}")
    # sample positions use the exact 2x scale so pooled and upsampled grids align
    ys = np.clip((np.arange(target_h) + 0.5) / 2.0 - 0.5, 0.0, h - 1)
    xs = np.clip((np.arange(target_w) + 0.5) / 2.0 - 0.5, 0.0, w - 1)
    y0 = np.floor(ys).astype(np.intp)
    x0 = np.floor(xs).astype(np.intp)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    fy = (ys - y0)[:, None, None]
    fx = (xs - x0)[None, :, None]
    top = flow[y0][:, x0] * (1 - fx) + flow[y0][:, x1] * fx
    bot = flow[y1][:, x0] * (1 - fx) + flow[y1][:, x1] * fx
    return 2.0 * (top * (1 - fy) + bot * fy)
