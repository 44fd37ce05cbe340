"""Backward warping with bilinear sampling, and its vector-Jacobian product.

``warped(x) = target(x + flow(x))``. Two border rules:

* ``clamp``: the sampling coordinate is clamped into the image (edge replicate);
  the flow gradient is zero wherever the clamp is active.
* ``zero``: taps falling outside the image read as zero.

``validity`` is 1 where the sample point lies inside ``[0, W-1] x [0, H-1]``,
i.e. every bilinear tap with nonzero weight is a real pixel.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._backend import njit, numba_enabled, prange
from .errors import DimensionError
from .grid import as_field, as_flow

BORDERS = ("clamp", "zero")


@dataclass(frozen=True)
class WarpResult:
    warped: np.ndarray
    validity: np.ndarray


def _check(target, flow):
    target = as_field(target)
    flow = as_flow(flow)
    if target.shape[:2] != flow.shape[:2]:
        raise DimensionError(f"target {target.shape[:2]} and flow {flow.shape[:2]} differ")
    return target, flow


def _border_flag(border: str) -> bool:
    if border not in BORDERS:
        raise ValueError(f"border must be one of {BORDERS}, got {border!r}")
    return border == "zero"


# --------------------------------------------------------------------------
# numba kernels


@njit(parallel=True)
def _warp_nb(target, flow, zero):
    h, w, c = target.shape
    out = np.zeros((h, w, c))
    valid = np.zeros((h, w))
    for y in prange(h):
        for x in range(w):
            px = x + flow[y, x, 0]
            py = y + flow[y, x, 1]
            if 0.0 <= px <= w - 1 and 0.0 <= py <= h - 1:
                valid[y, x] = 1.0
            if not zero:
                px = min(max(px, 0.0), w - 1.0)
                py = min(max(py, 0.0), h - 1.0)
            x0f = np.floor(px)
            y0f = np.floor(py)
            fx = px - x0f
            fy = py - y0f
            x0 = int(x0f)
            y0 = int(y0f)
            x1 = x0 + 1
            y1 = y0 + 1
            w00 = (1.0 - fx) * (1.0 - fy)
            w01 = fx * (1.0 - fy)
            w10 = (1.0 - fx) * fy
            w11 = fx * fy
            if not zero:
                x1 = min(x1, w - 1)
                y1 = min(y1, h - 1)
                for k in range(c):
                    out[y, x, k] = (w00 * target[y0, x0, k] + w01 * target[y0, x1, k]
                                    + w10 * target[y1, x0, k] + w11 * target[y1, x1, k])
            else:
                in_x0 = 0 <= x0 < w
                in_x1 = 0 <= x1 < w
                in_y0 = 0 <= y0 < h
                in_y1 = 0 <= y1 < h
                for k in range(c):
                    acc = 0.0
                    if in_y0 and in_x0:
                        acc += w00 * target[y0, x0, k]
                    if in_y0 and in_x1:
                        acc += w01 * target[y0, x1, k]
                    if in_y1 and in_x0:
                        acc += w10 * target[y1, x0, k]
                    if in_y1 and in_x1:
                        acc += w11 * target[y1, x1, k]
                    out[y, x, k] = acc
    return out, valid


@njit
def _warp_grad_nb(target, flow, upstream, zero):
    # serial: grad_target is a scatter-add and must be deterministic
    h, w, c = target.shape
    g_t = np.zeros((h, w, c))
    g_f = np.zeros((h, w, 2))
    for y in range(h):
        for x in range(w):
            px = x + flow[y, x, 0]
            py = y + flow[y, x, 1]
            dpx = 1.0
            dpy = 1.0
            if not zero:
                if px < 0.0 or px > w - 1.0:
                    dpx = 0.0
                if py < 0.0 or py > h - 1.0:
                    dpy = 0.0
                px = min(max(px, 0.0), w - 1.0)
                py = min(max(py, 0.0), h - 1.0)
            x0f = np.floor(px)
            y0f = np.floor(py)
            fx = px - x0f
            fy = py - y0f
            x0 = int(x0f)
            y0 = int(y0f)
            x1 = x0 + 1
            y1 = y0 + 1
            m00 = 1.0
            m01 = 1.0
            m10 = 1.0
            m11 = 1.0
            if not zero:
                x1 = min(x1, w - 1)
                y1 = min(y1, h - 1)
            else:
                in_x0 = 0 <= x0 < w
                in_x1 = 0 <= x1 < w
                in_y0 = 0 <= y0 < h
                in_y1 = 0 <= y1 < h
                m00 = 1.0 if (in_y0 and in_x0) else 0.0
                m01 = 1.0 if (in_y0 and in_x1) else 0.0
                m10 = 1.0 if (in_y1 and in_x0) else 0.0
                m11 = 1.0 if (in_y1 and in_x1) else 0.0
                x0 = min(max(x0, 0), w - 1)
                x1 = min(max(x1, 0), w - 1)
                y0 = min(max(y0, 0), h - 1)
                y1 = min(max(y1, 0), h - 1)
            w00 = (1.0 - fx) * (1.0 - fy) * m00
            w01 = fx * (1.0 - fy) * m01
            w10 = (1.0 - fx) * fy * m10
            w11 = fx * fy * m11
            gu = 0.0
            gv = 0.0
            for k in range(c):
                g = upstream[y, x, k]
                g_t[y0, x0, k] += w00 * g
                g_t[y0, x1, k] += w01 * g
                g_t[y1, x0, k] += w10 * g
                g_t[y1, x1, k] += w11 * g
                v00 = target[y0, x0, k] * m00
                v01 = target[y0, x1, k] * m01
                v10 = target[y1, x0, k] * m10
                v11 = target[y1, x1, k] * m11
                gu += g * ((1.0 - fy) * (v01 - v00) + fy * (v11 - v10))
                gv += g * ((1.0 - fx) * (v10 - v00) + fx * (v11 - v01))
            g_f[y, x, 0] = gu * dpx
            g_f[y, x, 1] = gv * dpy
    return g_t, g_f


# --------------------------------------------------------------------------
# numpy fallback


def _taps(flow, h, w, zero):
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    px = xs + flow[:, :, 0]
    py = ys + flow[:, :, 1]
    valid = ((px >= 0) & (px <= w - 1) & (py >= 0) & (py <= h - 1)).astype(np.float64)
    if zero:
        dpx = dpy = np.ones((h, w))
    else:
        dpx = ((px >= 0) & (px <= w - 1)).astype(np.float64)
        dpy = ((py >= 0) & (py <= h - 1)).astype(np.float64)
        px = np.clip(px, 0.0, w - 1.0)
        py = np.clip(py, 0.0, h - 1.0)
    x0 = np.floor(px)
    y0 = np.floor(py)
    fx = px - x0
    fy = py - y0
    x0 = x0.astype(np.intp)
    y0 = y0.astype(np.intp)
    x1 = x0 + 1
    y1 = y0 + 1
    if zero:
        mx0 = (x0 >= 0) & (x0 < w)
        mx1 = (x1 >= 0) & (x1 < w)
        my0 = (y0 >= 0) & (y0 < h)
        my1 = (y1 >= 0) & (y1 < h)
        masks = [(my0 & mx0), (my0 & mx1), (my1 & mx0), (my1 & mx1)]
        masks = [m.astype(np.float64) for m in masks]
        x0, x1 = np.clip(x0, 0, w - 1), np.clip(x1, 0, w - 1)
        y0, y1 = np.clip(y0, 0, h - 1), np.clip(y1, 0, h - 1)
    else:
        x1 = np.minimum(x1, w - 1)
        y1 = np.minimum(y1, h - 1)
        one = np.ones((h, w))
        masks = [one, one, one, one]
    return dict(x0=x0, x1=x1, y0=y0, y1=y1, fx=fx, fy=fy, masks=masks,
                valid=valid, dpx=dpx, dpy=dpy)


def _warp_np(target, flow, zero):
    h, w = flow.shape[:2]
    t = _taps(flow, h, w, zero)
    fx, fy = t["fx"][..., None], t["fy"][..., None]
    m00, m01, m10, m11 = (m[..., None] for m in t["masks"])
    v00 = target[t["y0"], t["x0"]] * m00
    v01 = target[t["y0"], t["x1"]] * m01
    v10 = target[t["y1"], t["x0"]] * m10
    v11 = target[t["y1"], t["x1"]] * m11
    out = ((1 - fx) * (1 - fy) * v00 + fx * (1 - fy) * v01
           + (1 - fx) * fy * v10 + fx * fy * v11)
    return out, t["valid"]


def _warp_grad_np(target, flow, upstream, zero):
    h, w, c = target.shape
    t = _taps(flow, h, w, zero)
    fx, fy = t["fx"][..., None], t["fy"][..., None]
    m00, m01, m10, m11 = (m[..., None] for m in t["masks"])
    y0, y1, x0, x1 = t["y0"], t["y1"], t["x0"], t["x1"]
    v00 = target[y0, x0] * m00
    v01 = target[y0, x1] * m01
    v10 = target[y1, x0] * m10
    v11 = target[y1, x1] * m11
    gu = np.sum(upstream * ((1 - fy) * (v01 - v00) + fy * (v11 - v10)), axis=2)
    gv = np.sum(upstream * ((1 - fx) * (v10 - v00) + fx * (v11 - v01)), axis=2)
    g_f = np.stack([gu * t["dpx"], gv * t["dpy"]], axis=2)
    g_t = np.zeros((h * w, c))
    for yy, xx, wt in ((y0, x0, (1 - fx) * (1 - fy) * m00), (y0, x1, fx * (1 - fy) * m01),
                       (y1, x0, (1 - fx) * fy * m10), (y1, x1, fx * fy * m11)):
        np.add.at(g_t, (yy * w + xx).ravel(), (wt * upstream).reshape(-1, c))
    return g_t.reshape(h, w, c), g_f


# --------------------------------------------------------------------------
# public API


def backward_warp(target, flow, border: str = "clamp") -> WarpResult:
    """Sample ``target`` at ``x + flow(x)`` for every pixel ``x``."""
    target, flow = _check(target, flow)
    zero = _border_flag(border)
    if numba_enabled():
        out, valid = _warp_nb(target, flow, zero)
    else:
        out, valid = _warp_np(target, flow, zero)
    return WarpResult(out, valid)


def backward_warp_grad(target, flow, upstream, border: str = "clamp"):
    """Vector-Jacobian product of :func:`backward_warp`.

    Returns ``(grad_target, grad_flow)`` for the scalar ``sum(upstream * warped)``.
    The flow gradient is exact away from the integer lattice, where bilinear
    sampling has a kink.
    """
    target, flow = _check(target, flow)
    upstream = as_field(upstream)
    if upstream.shape != target.shape:
        raise DimensionError(f"upstream {upstream.shape} does not match warped output {target.shape}")
    zero = _border_flag(border)
    if numba_enabled():
        return _warp_grad_nb(target, flow, upstream, zero)
    return _warp_grad_np(target, flow, upstream, zero)
