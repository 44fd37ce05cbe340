"""Bilateral cost volume.

For an intermediate-frame pixel ``x`` and an integer displacement ``d`` from
the search window, the score is the channel-averaged inner product

    < c0(x + v_t0(x) - 2t d),  c1(x + v_t1(x) + 2(1-t) d) >

so every hypothesis moves the two sampling points in opposite directions along
one linear trajectory through ``x``. Sampling is bilinear with clamped borders.
Only the ``D*D`` window is ever stored (``D = 2r + 1``).
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ._backend import njit, numba_enabled, prange
from .errors import DimensionError, DomainError, FormatError
from .grid import as_field, as_flow
from .warp import _warp_np, backward_warp

BCV_MAGIC = b"BCV1"


@dataclass(frozen=True)
class SearchWindow:
    radius: int

    def __post_init__(self):
        if int(self.radius) != self.radius or self.radius < 0:
            raise ValueError(f"search radius must be a non-negative integer, got {self.radius}")

    @property
    def size(self) -> int:
        return 2 * self.radius + 1

    @property
    def count(self) -> int:
        return self.size ** 2

    @property
    def displacements(self) -> np.ndarray:
        """``(D*D, 2)`` array of ``(dx, dy)``, row-major with dy outer."""
        r = self.radius
        dy, dx = np.mgrid[-r:r + 1, -r:r + 1]
        return np.stack([dx.ravel(), dy.ravel()], axis=1).astype(np.float64)

    @property
    def center_index(self) -> int:
        return (self.count - 1) // 2

    def index_of(self, dx: int, dy: int) -> int:
        r = self.radius
        return (dy + r) * self.size + (dx + r)


@dataclass(frozen=True)
class CostVolume:
    window: SearchWindow
    t: float
    scores: np.ndarray = field(repr=False)  # (D*D, H, W)

    @property
    def shape(self):
        return self.scores.shape


def _check_inputs(c0, c1, v_t0, v_t1, t):
    c0, c1 = as_field(c0), as_field(c1)
    v_t0, v_t1 = as_flow(v_t0), as_flow(v_t1)
    if c0.shape != c1.shape:
        raise DimensionError(f"feature shapes differ: {c0.shape} vs {c1.shape}")
    if v_t0.shape != v_t1.shape or v_t0.shape[:2] != c0.shape[:2]:
        raise DimensionError(f"flow shapes {v_t0.shape}, {v_t1.shape} do not match features {c0.shape[:2]}")
    if not 0.0 <= t <= 1.0:
        raise DomainError(f"t must lie in [0, 1], got {t}")
    return c0, c1, v_t0, v_t1


@njit
def _sample_clamp(f, px, py, k):
    h, w = f.shape[0], f.shape[1]
    px = min(max(px, 0.0), w - 1.0)
    py = min(max(py, 0.0), h - 1.0)
    x0f = np.floor(px)
    y0f = np.floor(py)
    fx = px - x0f
    fy = py - y0f
    x0 = int(x0f)
    y0 = int(y0f)
    x1 = min(x0 + 1, w - 1)
    y1 = min(y0 + 1, h - 1)
    return ((1.0 - fx) * (1.0 - fy) * f[y0, x0, k] + fx * (1.0 - fy) * f[y0, x1, k]
            + (1.0 - fx) * fy * f[y1, x0, k] + fx * fy * f[y1, x1, k])


@njit(parallel=True)
def _bcv_nb(c0, c1, v_t0, v_t1, s0, s1, disp):
    h, w, c = c0.shape
    n = disp.shape[0]
    out = np.empty((n, h, w))
    for row in prange(n * h):
        k = row // h
        y = row % h
        dx = disp[k, 0]
        dy = disp[k, 1]
        s0x = s0 * dx
        s0y = s0 * dy
        s1x = s1 * dx
        s1y = s1 * dy
        for x in range(w):
            px0 = x + (v_t0[y, x, 0] - s0x)
            py0 = y + (v_t0[y, x, 1] - s0y)
            px1 = x + (v_t1[y, x, 0] + s1x)
            py1 = y + (v_t1[y, x, 1] + s1y)
            acc = 0.0
            for ch in range(c):
                acc += _sample_clamp(c0, px0, py0, ch) * _sample_clamp(c1, px1, py1, ch)
            out[k, y, x] = acc / c
    return out


def _bcv_np(c0, c1, v_t0, v_t1, s0, s1, disp):
    h, w, c = c0.shape
    out = np.empty((disp.shape[0], h, w))
    for k, (dx, dy) in enumerate(disp):
        off0 = np.stack([v_t0[..., 0] - s0 * dx, v_t0[..., 1] - s0 * dy], axis=2)
        off1 = np.stack([v_t1[..., 0] + s1 * dx, v_t1[..., 1] + s1 * dy], axis=2)
        a, _ = _warp_np(c0, off0, False)
        b, _ = _warp_np(c1, off1, False)
        acc = np.zeros((h, w))
        for ch in range(c):
            acc += a[..., ch] * b[..., ch]
        out[k] = acc / c
    return out


def compute_bcv(c0, c1, v_t0, v_t1, t: float, window: SearchWindow) -> CostVolume:
    """Bilateral cost volume of shape ``(D*D, H, W)`` for one level and one ``t``."""
    c0, c1, v_t0, v_t1 = _check_inputs(c0, c1, v_t0, v_t1, t)
    s0 = 2.0 * t
    s1 = 2.0 * (1.0 - t)
    disp = window.displacements
    kernel = _bcv_nb if numba_enabled() else _bcv_np
    return CostVolume(window, float(t), kernel(c0, c1, v_t0, v_t1, s0, s1, disp))


def conventional_cost_volume(c_ref, c_tgt, flow, window: SearchWindow, step: float = 1.0) -> np.ndarray:
    """Classic one-sided correlation volume: ``<c_ref(x), c_tgt(x + flow(x) + step*d)>`` / C.

    Built from the warping layer rather than the bilateral kernel; the bilateral
    volume at ``t = 0`` (or ``t = 1`` with the frames swapped) reduces to this
    with ``step = 2``.
    """
    c_ref, c_tgt, flow = as_field(c_ref), as_field(c_tgt), as_flow(flow)
    h, w, c = c_ref.shape
    out = np.empty((window.count, h, w))
    for k, (dx, dy) in enumerate(window.displacements):
        shifted = np.stack([flow[..., 0] + step * dx, flow[..., 1] + step * dy], axis=2)
        s = backward_warp(c_tgt, shifted, "clamp").warped
        acc = np.zeros((h, w))
        for ch in range(c):
            acc += c_ref[..., ch] * s[..., ch]
        out[k] = acc / c
    return out


def bcv_argmax(volume: CostVolume) -> tuple[np.ndarray, np.ndarray]:
    """Winner-take-all decoding. Ties go to the lowest row-major displacement index.

    Returns ``(best_disp (H, W, 2), best_score (H, W))``.
    """
    scores = volume.scores
    idx = np.argmax(scores, axis=0)  # first occurrence on ties
    best = np.take_along_axis(scores, idx[None], axis=0)[0]
    return volume.window.displacements[idx], best


# --------------------------------------------------------------------------
# debug dump


def write_cost_volume(volume: CostVolume, path) -> None:
    n, h, w = volume.scores.shape
    header = BCV_MAGIC + struct.pack("<iiif", volume.window.size, h, w, volume.t)
    with open(path, "wb") as f:
        f.write(header)
        f.write(np.ascontiguousarray(volume.scores, dtype="<f4").tobytes())


def read_cost_volume(path) -> CostVolume:
    data = Path(path).read_bytes()
    if len(data) < 20 or data[:4] != BCV_MAGIC:
        raise FormatError(f"{path}: not a BCV1 cost volume dump")
    size, h, w, t = struct.unpack("<iiif", data[4:20])
    if size < 1 or size % 2 == 0 or h < 0 or w < 0:
        raise FormatError(f"{path}: bad header")
    n = size * size * h * w
    if len(data) != 20 + 4 * n:
        raise FormatError(f"{path}: expected {n} scores, file is truncated or padded")
    scores = np.frombuffer(data, dtype="<f4", offset=20).astype(np.float64).reshape(size * size, h, w)
    return CostVolume(SearchWindow((size - 1) // 2), float(t), scores)
