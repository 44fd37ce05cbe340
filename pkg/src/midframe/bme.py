"""Coarse-to-fine bilateral motion estimation.

Flows are anchored at the (missing) intermediate frame. At every level the
bilateral cost volume is evaluated around the upsampled estimate, box
aggregated, decoded by winner-take-all with an optional parabolic subpixel
step, and the decoded displacement ``d`` moves the two fields in opposite
directions::

    v_t0 <- v_t0 - 2t d
    v_t1 <- v_t1 + 2(1-t) d

which keeps ``(1-t) v_t0 + t v_t1 = 0`` exactly. A variational step can then
polish the finest level by descending the Charbonnier photometric term plus L1
flow smoothness.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable

import numpy as np
from scipy.ndimage import gaussian_filter, median_filter, uniform_filter

from .bcv import SearchWindow, compute_bcv
from .errors import ConfigError, DimensionError, DomainError
from .grid import FeaturePyramid, as_field, upsample_flow_x2
from .losses import rho, rho_grad, tv_l1_subgradient, _tv_l1
from .warp import backward_warp, backward_warp_grad


@dataclass(frozen=True)
class EstimatorConfig:
    levels: int = 4
    radius: int = 2
    aggregation: int = 3
    aggregation_growth: int = 1
    subpixel: bool = True
    median: int = 2
    feature_blur: float = 1.0
    refine_iters: int = 20
    refine_step: float = 0.25
    smoothness: float = 0.1
    feature_kind: str = "luma_grad_census"
    census_slope: float = 25.0
    bidirectional_levels: int | None = None  # None: one level fewer than ``levels``

    def __post_init__(self):
        if self.levels < 2:
            raise ConfigError("levels must be >= 2")
        if self.bidirectional_levels is not None and not 2 <= self.bidirectional_levels <= self.levels:
            raise ConfigError("bidirectional_levels must lie in [2, levels]")
        for name in ("radius", "aggregation", "aggregation_growth", "median", "refine_iters"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")
        if self.feature_blur < 0:
            raise ConfigError("feature_blur must be >= 0")
        if self.refine_step <= 0:
            raise ConfigError("refine_step must be positive")

    def with_(self, **kw) -> "EstimatorConfig":
        return replace(self, **kw)

    @property
    def endpoint_levels(self) -> int:
        """Pyramid depth for the t = 0 and t = 1 runs.

        At the endpoints one frame stays fixed and every search step moves the
        other by two pixels, which is too coarse to lock on at the smallest level.
        """
        if self.bidirectional_levels is not None:
            return self.bidirectional_levels
        return max(2, self.levels - 1)

    def aggregation_at(self, level: int) -> int:
        """Box-aggregation radius at ``level`` (1 = finest); coarse levels pool wider."""
        return self.aggregation + self.aggregation_growth * max(0, level - 2)


@dataclass(frozen=True)
class BilateralMotion:
    t: float
    v_t0: np.ndarray
    v_t1: np.ndarray

    def constraint_residual(self) -> float:
        """max |(1-t) v_t0 + t v_t1| over pixels and components."""
        r = (1.0 - self.t) * self.v_t0 + self.t * self.v_t1
        return float(np.max(np.abs(r))) if r.size else 0.0


def matching_features(feat: np.ndarray, blur: float = 1.0) -> np.ndarray:
    """Per-level preprocessing before correlation.

    An optional Gaussian blur widens the basin of the correlation peak. Channels
    are then centred and scaled to unit variance over the level, and each
    pixel's feature vector is L2-normalised, so the correlation of a vector
    with itself is the largest attainable score.
    """
    feat = as_field(feat)
    if blur > 0:
        feat = gaussian_filter(feat, sigma=(blur, blur, 0), mode="nearest")
    f = feat - feat.mean(axis=(0, 1))
    sd = f.std(axis=(0, 1))
    f = f / np.where(sd > 1e-12, sd, 1.0)
    norm = np.sqrt(np.sum(f * f, axis=2, keepdims=True))
    return f / np.maximum(norm, 1e-8)


def _parabolic(s_m, s_c, s_p):
    denom = s_m - 2.0 * s_c + s_p
    with np.errstate(divide="ignore", invalid="ignore"):
        off = np.where(denom < 0, 0.5 * (s_m - s_p) / denom, 0.0)
    return np.clip(off, -0.5, 0.5)


def decode_volume(scores: np.ndarray, window: SearchWindow, subpixel: bool = True,
                  ceiling: float | None = None) -> np.ndarray:
    """Winner-take-all plus optional per-axis parabolic offsets; returns ``(H, W, 2)``.

    Ties with the zero displacement keep the zero displacement. When
    ``ceiling`` is given (the largest score the features can attain), a winner
    within 1e-9 of it is an exact match and gets no subpixel offset.
    """
    n, h, w = scores.shape
    size, r = window.size, window.radius
    idx = np.argmax(scores, axis=0)
    centre = window.center_index
    best = np.take_along_axis(scores, idx[None], axis=0)[0]
    idx = np.where(scores[centre] >= best, centre, idx)
    d = window.displacements[idx].copy()
    if not subpixel or r == 0:
        return d
    grid = scores.reshape(size, size, h, w)
    iy, ix = np.divmod(idx, size)
    yy, xx = np.mgrid[0:h, 0:w]
    s_c = grid[iy, ix, yy, xx]
    # neighbours along x (dx) and y (dy); edges of the window get no offset
    has_x = (ix > 0) & (ix < size - 1)
    has_y = (iy > 0) & (iy < size - 1)
    if ceiling is not None:
        exact = s_c >= ceiling * (1.0 - 1e-9)
        has_x &= ~exact
        has_y &= ~exact
    ixm, ixp = np.clip(ix - 1, 0, size - 1), np.clip(ix + 1, 0, size - 1)
    iym, iyp = np.clip(iy - 1, 0, size - 1), np.clip(iy + 1, 0, size - 1)
    off_x = _parabolic(grid[iy, ixm, yy, xx], s_c, grid[iy, ixp, yy, xx])
    off_y = _parabolic(grid[iym, ix, yy, xx], s_c, grid[iyp, ix, yy, xx])
    d[..., 0] += np.where(has_x, off_x, 0.0)
    d[..., 1] += np.where(has_y, off_y, 0.0)
    return d


def _check_pyramids(pyr0: FeaturePyramid, pyr1: FeaturePyramid, t: float):
    if pyr0.shape_chain() != pyr1.shape_chain() or pyr0.channels != pyr1.channels:
        raise DimensionError("pyramids differ in shape")
    if not 0.0 <= t <= 1.0:
        raise DomainError(f"t must lie in [0, 1], got {t}")


def estimate_bilateral_motion(pyr0: FeaturePyramid, pyr1: FeaturePyramid, t: float,
                              cfg: EstimatorConfig = EstimatorConfig(),
                              on_level: Callable | None = None) -> BilateralMotion:
    """Bilateral flows ``(v_t0, v_t1)`` at the finest pyramid level.

    ``on_level(level, v_t0, v_t1)`` is called after each level update, with
    ``level`` counted from 1 (finest).
    """
    _check_pyramids(pyr0, pyr1, t)
    window = SearchWindow(cfg.radius)
    n_levels = len(pyr0)
    h, w = pyr0[n_levels - 1].shape[:2]
    v0 = np.zeros((h, w, 2))
    v1 = np.zeros((h, w, 2))
    for lv in range(n_levels - 1, -1, -1):
        c0 = matching_features(pyr0[lv], cfg.feature_blur)
        c1 = matching_features(pyr1[lv], cfg.feature_blur)
        h, w = c0.shape[:2]
        if v0.shape[:2] != (h, w):
            v0 = upsample_flow_x2(v0, h, w)
            v1 = upsample_flow_x2(v1, h, w)
        scores = compute_bcv(c0, c1, v0, v1, t, window).scores
        agg = cfg.aggregation_at(lv + 1)
        if agg > 0:
            k = 2 * agg + 1
            scores = uniform_filter(scores, size=(1, k, k), mode="nearest")
        # unit feature vectors cap the channel-averaged score at 1 / C
        d = decode_volume(scores, window, cfg.subpixel, ceiling=1.0 / c0.shape[2])
        if cfg.median > 0:
            k = 2 * cfg.median + 1
            d = np.stack([median_filter(d[..., i], size=k, mode="nearest") for i in (0, 1)], axis=2)
        v0 = v0 - (2.0 * t) * d
        v1 = v1 + (2.0 * (1.0 - t)) * d
        if on_level is not None:
            on_level(lv + 1, v0, v1)
    return BilateralMotion(float(t), v0, v1)


def estimate_bidirectional(pyr0: FeaturePyramid, pyr1: FeaturePyramid,
                           cfg: EstimatorConfig = EstimatorConfig()) -> tuple[np.ndarray, np.ndarray]:
    """``(v_01, v_10)`` from the two degenerate bilateral runs at t = 0 and t = 1.

    Both runs use the finest ``cfg.endpoint_levels`` levels of the pyramids.
    """
    n = min(cfg.endpoint_levels, len(pyr0))
    pyr0, pyr1 = FeaturePyramid(pyr0.levels[:n]), FeaturePyramid(pyr1.levels[:n])
    v01 = estimate_bilateral_motion(pyr0, pyr1, 0.0, cfg).v_t1
    v10 = estimate_bilateral_motion(pyr0, pyr1, 1.0, cfg).v_t0
    return v01, v10


# --------------------------------------------------------------------------
# variational refinement


def refinement_objective(v_t1, frame0, frame1, t: float, smoothness: float):
    """Objective and gradient w.r.t. ``v_t1`` (``v_t0`` follows the linear constraint).

    Photometric target is the mean of the two warped frames, so the data term is
    ``sum rho(W0 - m) + rho(W1 - m)`` with ``m = (W0 + W1) / 2``.
    """
    c = -t / (1.0 - t)
    v_t0 = c * v_t1
    w0 = backward_warp(frame0, v_t0).warped
    w1 = backward_warp(frame1, v_t1).warped
    r = 0.5 * (w0 - w1)
    data = 2.0 * float(np.sum(rho(r)))
    smooth = smoothness * (abs(c) + 1.0) * _tv_l1(v_t1)
    g = rho_grad(r)  # d data / d w0 = g, d data / d w1 = -g
    _, gf0 = backward_warp_grad(frame0, v_t0, g)
    _, gf1 = backward_warp_grad(frame1, v_t1, -g)
    grad = c * gf0 + gf1 + smoothness * (abs(c) + 1.0) * tv_l1_subgradient(v_t1)
    return data + smooth, grad


def refine_variational(motion: BilateralMotion, frame0, frame1,
                       cfg: EstimatorConfig = EstimatorConfig(),
                       on_step: Callable | None = None) -> BilateralMotion:
    """Gradient descent on the bilateral photometric + smoothness objective.

    Runs exactly ``cfg.refine_iters`` iterations. Each takes the step
    ``refine_step`` along the negative gradient, halving it (at most 10 times)
    until the objective does not increase; if no trial step helps, the
    iteration leaves the flow unchanged. ``on_step(i, objective, motion)`` sees
    every iterate, ``i = 0`` being the input.
    """
    t = motion.t
    if cfg.refine_iters == 0:
        return motion
    if t >= 1.0:
        # mirror image of t = 0: v_t1 is pinned at zero and v_t0 is free
        mirrored = None if on_step is None else (
            lambda i, f, m: on_step(i, f, BilateralMotion(t, m.v_t1, m.v_t0)))
        m = refine_variational(BilateralMotion(0.0, motion.v_t1, motion.v_t0), frame1, frame0, cfg, mirrored)
        return BilateralMotion(t, m.v_t1, m.v_t0)
    frame0, frame1 = as_field(frame0), as_field(frame1)
    if frame0.shape != frame1.shape or frame0.shape[:2] != motion.v_t1.shape[:2]:
        raise DimensionError("frames and flows must share spatial dimensions")
    c = -t / (1.0 - t)
    v1 = motion.v_t1.copy()
    f, g = refinement_objective(v1, frame0, frame1, t, cfg.smoothness)
    if on_step is not None:
        on_step(0, f, motion)
    for it in range(1, cfg.refine_iters + 1):
        step = cfg.refine_step
        for _ in range(11):
            trial = v1 - step * g
            f_trial, g_trial = refinement_objective(trial, frame0, frame1, t, cfg.smoothness)
            if f_trial <= f:
                v1, f, g = trial, f_trial, g_trial
                break
            step *= 0.5
        if on_step is not None:
            on_step(it, f, BilateralMotion(t, c * v1, v1.copy()))
    return BilateralMotion(t, c * v1, v1)
