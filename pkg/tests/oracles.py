"""Brute-force reference implementations, written as explicit scalar loops.

They share no code with the package so that agreement is evidence rather than
tautology.
"""
import math

import numpy as np


def sample(img, px, py, border="clamp"):
    """Bilinear sample of an (H, W, C) array at one real position."""
    h, w, c = img.shape
    if border == "clamp":
        px = min(max(px, 0.0), w - 1.0)
        py = min(max(py, 0.0), h - 1.0)
    x0, y0 = math.floor(px), math.floor(py)
    fx, fy = px - x0, py - y0
    out = np.zeros(c)
    for yy, wy in ((y0, 1.0 - fy), (y0 + 1, fy)):
        for xx, wx in ((x0, 1.0 - fx), (x0 + 1, fx)):
            if wx * wy == 0.0:
                continue
            if border == "clamp":
                yy_, xx_ = min(yy, h - 1), min(xx, w - 1)
            elif 0 <= yy < h and 0 <= xx < w:
                yy_, xx_ = yy, xx
            else:
                continue
            out += wx * wy * img[yy_, xx_]
    return out


def warp_loop(target, flow, border="clamp"):
    h, w, c = target.shape
    out = np.zeros((h, w, c))
    for y in range(h):
        for x in range(w):
            out[y, x] = sample(target, x + flow[y, x, 0], y + flow[y, x, 1], border)
    return out


def bcv_loop(c0, c1, v0, v1, t, r):
    h, w, c = c0.shape
    size = 2 * r + 1
    out = np.zeros((size * size, h, w))
    for dy in range(-r, r + 1):
        for dx in range(-r, r + 1):
            k = (dy + r) * size + (dx + r)
            for y in range(h):
                for x in range(w):
                    a = sample(c0, x + v0[y, x, 0] - 2 * t * dx, y + v0[y, x, 1] - 2 * t * dy)
                    b = sample(c1, x + v1[y, x, 0] + 2 * (1 - t) * dx, y + v1[y, x, 1] + 2 * (1 - t) * dy)
                    out[k, y, x] = float(np.dot(a, b)) / c
    return out


def blend_loop(frames, coeffs):
    n, h, w, ch = frames.shape
    k = coeffs.shape[3]
    r = k // 2
    out = np.zeros((h, w, ch))
    for y in range(h):
        for x in range(w):
            for c in range(n):
                for j in range(-r, r + 1):
                    for i in range(-r, r + 1):
                        yy = min(max(y + j, 0), h - 1)
                        xx = min(max(x + i, 0), w - 1)
                        out[y, x] += coeffs[y, x, c, j + r, i + r] * frames[c, yy, xx]
    return out


def conv_loop(x, weight, bias):
    """Zero-padded 3x3 'same' cross-correlation of one (H, W, Cin) image."""
    h, w, cin = x.shape
    cout = weight.shape[3]
    out = np.zeros((h, w, cout))
    for y in range(h):
        for xx in range(w):
            for o in range(cout):
                acc = float(bias[o])
                for j in range(3):
                    for i in range(3):
                        sy, sx = y + j - 1, xx + i - 1
                        if 0 <= sy < h and 0 <= sx < w:
                            for q in range(cin):
                                acc += float(weight[j, i, q, o]) * float(x[sy, sx, q])
                out[y, xx, o] = acc
    return out


def tv_loop(v):
    h, w, c = v.shape
    total = 0.0
    for y in range(h):
        for x in range(w):
            for k in range(c):
                if x + 1 < w:
                    total += abs(v[y, x + 1, k] - v[y, x, k])
                if y + 1 < h:
                    total += abs(v[y + 1, x, k] - v[y, x, k])
    return total


def central_difference(f, arr, index, step=1e-6):
    """d f / d arr[index] by a symmetric difference; ``arr`` is restored."""
    old = arr[index]
    arr[index] = old + step
    fp = f()
    arr[index] = old - step
    fm = f()
    arr[index] = old
    return (fp - fm) / (2 * step)


def rel_err(a, b, floor=1e-8):
    return abs(a - b) / max(abs(a), abs(b), floor)
