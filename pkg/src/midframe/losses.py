"""Training losses and evaluation metrics.

Losses run on the [0, 1] intensity scale; PSNR, SSIM and IE run on 0..255.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import uniform_filter

from .errors import DimensionError
from .grid import as_field, as_flow, to_luma

EPSILON = 1e-6
PSNR_INF = math.inf


def alpha(level: int) -> float:
    """Photometric weight of pyramid level ``level`` (1 = finest): 0.01 * 2**level."""
    if level < 1:
        raise ValueError("levels are numbered from 1")
    return 0.01 * 2.0 ** level


@dataclass(frozen=True)
class LossWeights:
    epsilon: float = EPSILON
    smoothness: float = 1.0

    def alpha(self, level: int) -> float:
        return alpha(level)

    def alphas(self, levels: int) -> list[float]:
        return [alpha(l) for l in range(1, levels + 1)]


def rho(x, eps: float = EPSILON):
    """Elementwise Charbonnier penalty sqrt(x^2 + eps^2)."""
    x = np.asarray(x, dtype=np.float64)
    return np.sqrt(x * x + eps * eps)


def rho_grad(x, eps: float = EPSILON):
    x = np.asarray(x, dtype=np.float64)
    return x / np.sqrt(x * x + eps * eps)


def charbonnier(x, eps: float = EPSILON) -> float:
    return float(np.sum(rho(x, eps)))


def _same(a, b):
    a, b = as_field(a), as_field(b)
    if a.shape != b.shape:
        raise DimensionError(f"shape mismatch: {a.shape} vs {b.shape}")
    return a, b


def photometric_loss(warped0, warped1, gt, eps: float = EPSILON) -> float:
    """Multi-level photometric term. Each argument is a finest-first list of fields."""
    if not (len(warped0) == len(warped1) == len(gt)):
        raise DimensionError("level counts differ")
    total = 0.0
    for l, (w0, w1, g) in enumerate(zip(warped0, warped1, gt), start=1):
        w0, g = _same(w0, g)
        w1, _ = _same(w1, g)
        total += alpha(l) * (charbonnier(w0 - g, eps) + charbonnier(w1 - g, eps))
    return total


def _tv_l1(v: np.ndarray) -> float:
    return float(np.abs(np.diff(v, axis=1)).sum() + np.abs(np.diff(v, axis=0)).sum())


def smoothness_loss(v_t0, v_t1) -> float:
    """L1 norm of forward-difference gradients of both flows (both components)."""
    v_t0, v_t1 = as_flow(v_t0), as_flow(v_t1)
    if v_t0.shape != v_t1.shape:
        raise DimensionError("flow shapes differ")
    return _tv_l1(v_t0) + _tv_l1(v_t1)


def tv_l1_subgradient(v: np.ndarray) -> np.ndarray:
    g = np.zeros_like(v)
    sx = np.sign(np.diff(v, axis=1))
    sy = np.sign(np.diff(v, axis=0))
    g[:, 1:] += sx
    g[:, :-1] -= sx
    g[1:, :] += sy
    g[:-1, :] -= sy
    return g


def bilateral_loss(warped0, warped1, gt, v_t0, v_t1, weights: LossWeights = LossWeights()) -> float:
    return (photometric_loss(warped0, warped1, gt, weights.epsilon)
            + weights.smoothness * smoothness_loss(v_t0, v_t1))


def dynamic_loss(synth, gt, eps: float = EPSILON) -> float:
    synth, gt = _same(synth, gt)
    return charbonnier(synth - gt, eps)


# --------------------------------------------------------------------------
# metrics (0..255 scale)


def mse255(a, b) -> float:
    a, b = _same(a, b)
    d = (a - b) * 255.0
    return float(np.mean(d * d))


def psnr(a, b) -> float:
    """PSNR in dB for [0, 1] images, peak 255. Identical inputs give ``inf``."""
    m = mse255(a, b)
    if m == 0.0:
        return PSNR_INF
    return 10.0 * math.log10(255.0 ** 2 / m)


def interp_error(a, b) -> float:
    """Root-mean-square difference on the 0..255 scale."""
    return math.sqrt(mse255(a, b))


def ssim(a, b, window: int = 8) -> float:
    """Mean SSIM of the luma planes, 8x8 uniform windows, 0..255 scale."""
    a, b = _same(a, b)
    x = to_luma(a) * 255.0
    y = to_luma(b) * 255.0
    c1 = (0.01 * 255.0) ** 2
    c2 = (0.03 * 255.0) ** 2
    win = min(window, x.shape[0], x.shape[1])
    # valid windows only
    def local_mean(z):
        m = uniform_filter(z, size=win, mode="reflect")
        lo = win // 2
        hi_y = x.shape[0] - (win - 1 - lo)
        hi_x = x.shape[1] - (win - 1 - lo)
        return m[lo:hi_y, lo:hi_x]
    mx, my = local_mean(x), local_mean(y)
    sxx = local_mean(x * x) - mx * mx
    syy = local_mean(y * y) - my * my
    sxy = local_mean(x * y) - mx * my
    n = win * win
    cov = n / (n - 1) if n > 1 else 1.0
    sxx, syy, sxy = sxx * cov, syy * cov, sxy * cov
    s = ((2 * mx * my + c1) * (2 * sxy + c2)) / ((mx * mx + my * my + c1) * (sxx + syy + c2))
    return float(np.mean(s))
