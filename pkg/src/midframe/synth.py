"""Intermediate candidates and per-pixel dynamic blending.

Six candidates are warped toward time t, in a fixed order::

    0 bm_t0   frame0 warped by v_t0      (bilateral estimate)
    1 bm_t1   frame1 warped by v_t1
    2 fw_t0   frame0 warped by fw_t0     (approximated from v01)
    3 fw_t1   frame1 warped by fw_t1
    4 bw_t0   frame0 warped by bw_t0     (approximated from v10)
    5 bw_t1   frame1 warped by bw_t1

A selector keeps a subset of them. The output pixel is a normalised weighted
sum over a k x k neighbourhood of every kept candidate::

    out(y, x) = sum_c sum_dy sum_dx F[y, x, c, dy + r, dx + r] * cand_c(y + dy, x + dx)

with the neighbourhood clamped at the image border.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._backend import njit, numba_enabled, prange
from .approx import ApproxMotions
from .errors import ConfigError, DimensionError
from .grid import as_field, central_gradients, to_luma
from .warp import backward_warp

CANDIDATE_NAMES = ("bm_t0", "bm_t1", "fw_t0", "fw_t1", "bw_t0", "bw_t1")
SELECTORS = {
    "BM": (0, 1),
    "Appx4": (2, 3, 4, 5),
    "BM+Appx2": (0, 1, 2, 5),
    "BM+Appx4": (0, 1, 2, 3, 4, 5),
}
CONTEXT_CHANNELS = 8


def selector_indices(selector: str) -> tuple[int, ...]:
    try:
        return SELECTORS[selector]
    except KeyError:
        raise ConfigError(f"unknown candidate selector {selector!r}; choose from {tuple(SELECTORS)}") from None


# --------------------------------------------------------------------------
# context maps


def extract_context(image) -> np.ndarray:
    """Eight-channel structural descriptor with every channel in [0, 1].

    Channels: luma, |gx|, |gy|, gradient magnitude, and the half-rectified
    gradients max(gx, 0), max(-gx, 0), max(gy, 0), max(-gy, 0). Gradients are
    central differences, so on a [0, 1] image each lies in [-0.5, 0.5]; the
    fixed scale factors map their ranges onto [0, 1].
    """
    luma = to_luma(image)
    gx, gy = central_gradients(luma)
    ctx = np.stack([
        luma,
        2.0 * np.abs(gx),
        2.0 * np.abs(gy),
        np.sqrt(2.0) * np.hypot(gx, gy),
        2.0 * np.maximum(gx, 0.0),
        2.0 * np.maximum(-gx, 0.0),
        2.0 * np.maximum(gy, 0.0),
        2.0 * np.maximum(-gy, 0.0),
    ], axis=2)
    return np.clip(ctx, 0.0, 1.0)


# --------------------------------------------------------------------------
# candidates


@dataclass(frozen=True)
class CandidateSet:
    frames: np.ndarray      # (n, H, W, C), values in [0, 1]
    contexts: np.ndarray    # (n, H, W, K)
    names: tuple

    def __len__(self) -> int:
        return self.frames.shape[0]

    @property
    def shape(self):
        return self.frames.shape[1:3]

    def subset(self, indices) -> "CandidateSet":
        idx = list(indices)
        return CandidateSet(self.frames[idx], self.contexts[idx], tuple(self.names[i] for i in idx))


def candidate_motions(bm, ap: ApproxMotions) -> list:
    """The six ``(source, flow)`` pairs in canonical order; source 0 or 1."""
    return [(0, bm.v_t0), (1, bm.v_t1), (0, ap.fw_t0), (1, ap.fw_t1), (0, ap.bw_t0), (1, ap.bw_t1)]


def build_candidates(frame0, frame1, ctx0, ctx1, bm, ap: ApproxMotions,
                     selector: str = "BM+Appx4") -> CandidateSet:
    """Warp each (frame, context) pair by its motion field; frames are clamped to [0, 1]."""
    frame0, frame1 = as_field(frame0), as_field(frame1)
    ctx0, ctx1 = as_field(ctx0), as_field(ctx1)
    if frame0.shape != frame1.shape:
        raise DimensionError(f"frame shapes differ: {frame0.shape} vs {frame1.shape}")
    if ctx0.shape != ctx1.shape or ctx0.shape[:2] != frame0.shape[:2]:
        raise DimensionError("context maps must match the frames spatially and each other")
    indices = selector_indices(selector)
    pairs = candidate_motions(bm, ap)
    sources = [np.concatenate([frame0, ctx0], axis=2), np.concatenate([frame1, ctx1], axis=2)]
    nc = frame0.shape[2]
    frames, contexts = [], []
    for i in indices:
        src, flow = pairs[i]
        if flow.shape[:2] != frame0.shape[:2]:
            raise DimensionError(f"motion {CANDIDATE_NAMES[i]} has shape {flow.shape[:2]}, frames {frame0.shape[:2]}")
        warped = backward_warp(sources[src], flow, "clamp").warped
        frames.append(np.clip(warped[..., :nc], 0.0, 1.0))
        contexts.append(warped[..., nc:])
    return CandidateSet(np.stack(frames), np.stack(contexts), tuple(CANDIDATE_NAMES[i] for i in indices))


# --------------------------------------------------------------------------
# filter stacks


@dataclass(frozen=True)
class FilterStack:
    coeffs: np.ndarray   # (H, W, n, k, k) indexed [y, x, c, dy + r, dx + r]

    def __post_init__(self):
        c = self.coeffs
        if c.ndim != 5 or c.shape[3] != c.shape[4] or c.shape[3] % 2 == 0:
            raise DimensionError(f"filter coefficients must be (H, W, n, k, k) with odd k, got {c.shape}")

    @property
    def kernel_size(self) -> int:
        return self.coeffs.shape[3]

    @property
    def n_candidates(self) -> int:
        return self.coeffs.shape[2]

    def sums(self) -> np.ndarray:
        return self.coeffs.sum(axis=(2, 3, 4))

    @classmethod
    def one_hot(cls, h: int, w: int, n: int, k: int, candidate: int) -> "FilterStack":
        c = np.zeros((h, w, n, k, k))
        c[:, :, candidate, k // 2, k // 2] = 1.0
        return cls(c)

    @classmethod
    def uniform(cls, h: int, w: int, n: int, k: int) -> "FilterStack":
        return cls(np.full((h, w, n, k, k), 1.0 / (n * k * k)))


def _check_filters(frames, coeffs):
    n, h, w = frames.shape[:3]
    if coeffs.shape[:3] != (h, w, n):
        raise DimensionError(f"filters {coeffs.shape[:3]} do not match candidates (H, W, n) = {(h, w, n)}")


@njit(parallel=True)
def _filter_nb(frames, coeffs):
    n, h, w, ch = frames.shape
    k = coeffs.shape[3]
    r = k // 2
    out = np.zeros((h, w, ch))
    for y in prange(h):
        for x in range(w):
            for c in range(n):
                for j in range(k):
                    yy = min(max(y + j - r, 0), h - 1)
                    for i in range(k):
                        xx = min(max(x + i - r, 0), w - 1)
                        f = coeffs[y, x, c, j, i]
                        for q in range(ch):
                            out[y, x, q] += f * frames[c, yy, xx, q]
    return out


@njit
def _filter_grad_nb(frames, coeffs, upstream):
    # serial: the candidate gradient is a scatter-add
    n, h, w, ch = frames.shape
    k = coeffs.shape[3]
    r = k // 2
    g_f = np.zeros(coeffs.shape)
    g_c = np.zeros(frames.shape)
    for y in range(h):
        for x in range(w):
            for c in range(n):
                for j in range(k):
                    yy = min(max(y + j - r, 0), h - 1)
                    for i in range(k):
                        xx = min(max(x + i - r, 0), w - 1)
                        f = coeffs[y, x, c, j, i]
                        acc = 0.0
                        for q in range(ch):
                            u = upstream[y, x, q]
                            acc += u * frames[c, yy, xx, q]
                            g_c[c, yy, xx, q] += f * u
                        g_f[y, x, c, j, i] = acc
    return g_f, g_c


def _padded(frames, r):
    return np.pad(frames, ((0, 0), (r, r), (r, r), (0, 0)), mode="edge")


def _filter_np(frames, coeffs):
    n, h, w, ch = frames.shape
    k = coeffs.shape[3]
    r = k // 2
    pad = _padded(frames, r)
    out = np.zeros((h, w, ch))
    for c in range(n):
        for j in range(k):
            for i in range(k):
                out += coeffs[:, :, c, j, i, None] * pad[c, j:j + h, i:i + w]
    return out


def _fold_edges(padded, r):
    """Adjoint of edge padding: pad regions are summed back onto the border."""
    if r == 0:
        return padded
    p = padded.copy()
    # rows
    p[:, r] += p[:, :r].sum(axis=1)
    p[:, -r - 1] += p[:, -r:].sum(axis=1)
    p = p[:, r:-r]
    p[:, :, r] += p[:, :, :r].sum(axis=2)
    p[:, :, -r - 1] += p[:, :, -r:].sum(axis=2)
    return p[:, :, r:-r]


def _filter_grad_np(frames, coeffs, upstream):
    n, h, w, ch = frames.shape
    k = coeffs.shape[3]
    r = k // 2
    pad = _padded(frames, r)
    g_f = np.empty(coeffs.shape)
    g_pad = np.zeros_like(pad)
    for c in range(n):
        for j in range(k):
            for i in range(k):
                g_f[:, :, c, j, i] = np.sum(pad[c, j:j + h, i:i + w] * upstream, axis=2)
                g_pad[c, j:j + h, i:i + w] += coeffs[:, :, c, j, i, None] * upstream
    return g_f, _fold_edges(g_pad, r)


def _frames_of(cands):
    frames = cands.frames if isinstance(cands, CandidateSet) else np.asarray(cands, dtype=np.float64)
    if frames.ndim != 4:
        raise DimensionError(f"candidate frames must be (n, H, W, C), got {frames.shape}")
    return np.ascontiguousarray(frames, dtype=np.float64)


def _coeffs_of(filters):
    coeffs = filters.coeffs if isinstance(filters, FilterStack) else FilterStack(np.asarray(filters)).coeffs
    return np.ascontiguousarray(coeffs, dtype=np.float64)


def blend_raw(cands, filters) -> np.ndarray:
    """Weighted neighbourhood sum before the final clamp to [0, 1]."""
    frames, coeffs = _frames_of(cands), _coeffs_of(filters)
    _check_filters(frames, coeffs)
    if numba_enabled():
        return _filter_nb(frames, coeffs)
    return _filter_np(frames, coeffs)


def apply_dynamic_filters(cands, filters) -> np.ndarray:
    """Blend the candidates with per-pixel filters; the result is clamped to [0, 1]."""
    return np.clip(blend_raw(cands, filters), 0.0, 1.0)


def apply_dynamic_filters_grad(cands, filters, upstream):
    """Vector-Jacobian product of :func:`apply_dynamic_filters`.

    Returns ``(grad_filters (H, W, n, k, k), grad_frames (n, H, W, C))``. The
    output clamp passes gradient only where the raw blend lies in [0, 1], which
    is everywhere for nonnegative normalised filters over [0, 1] candidates.
    """
    frames, coeffs = _frames_of(cands), _coeffs_of(filters)
    _check_filters(frames, coeffs)
    upstream = as_field(upstream)
    if upstream.shape != (frames.shape[1], frames.shape[2], frames.shape[3]):
        raise DimensionError(f"upstream {upstream.shape} does not match output {frames.shape[1:]}")
    raw = blend_raw(frames, coeffs)
    upstream = np.where((raw >= 0.0) & (raw <= 1.0), upstream, 0.0)
    if numba_enabled():
        return _filter_grad_nb(frames, coeffs, upstream)
    return _filter_grad_np(frames, coeffs, upstream)
