"""Deterministic synthetic sequences with analytic ground-truth flow.

Textures are band-limited random fields (a sum of randomly oriented cosines
with log-uniform frequencies up to ``1 / corr_length`` cycles per pixel,
squashed into [0, 1]), so they can be sampled exactly at any transformed coordinate.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError, DomainError

SCENE_KINDS = ("global_shift", "two_layer_occlusion", "rotation", "brightness_ramp")


class Texture:
    """Continuous RGB texture ``T(x, y)`` with values in (0.1, 0.9)."""

    def __init__(self, seed: int, corr_length: float = 8.0, n_components: int = 48):
        if corr_length <= 0:
            raise ConfigError("corr_length must be positive")
        rng = np.random.default_rng(seed)
        f_hi = 1.0 / corr_length
        # four fields: a shared luma-like base plus one per colour channel
        self.freq = []
        self.phase = []
        for _ in range(4):
            # log-uniform over ~3.5 octaves so every pyramid level sees structure
            mag = f_hi * np.exp(rng.uniform(np.log(1.0 / 12.0), 0.0, n_components))
            ang = rng.uniform(0.0, 2 * np.pi, n_components)
            self.freq.append(np.stack([mag * np.cos(ang), mag * np.sin(ang)], axis=1))
            self.phase.append(rng.uniform(0.0, 2 * np.pi, n_components))
        self.norm = np.sqrt(2.0 / n_components)

    def _field(self, i, xs, ys):
        fr, ph = self.freq[i], self.phase[i]
        arg = 2 * np.pi * (xs[..., None] * fr[:, 0] + ys[..., None] * fr[:, 1]) + ph
        return self.norm * np.cos(arg).sum(axis=-1)

    def sample(self, xs, ys) -> np.ndarray:
        xs = np.asarray(xs, dtype=np.float64)
        ys = np.asarray(ys, dtype=np.float64)
        base = self._field(0, xs, ys)
        chans = [0.5 + 0.4 * np.tanh(0.6 * (0.8 * base + 0.6 * self._field(k, xs, ys)))
                 for k in (1, 2, 3)]
        return np.stack(chans, axis=-1)


@dataclass(frozen=True)
class SyntheticScene:
    kind: str
    height: int = 64
    width: int = 64
    seed: int = 0
    shift: tuple = (8.0, 0.0)         # px per frame (global_shift, brightness_ramp)
    angle: float = 4.0                # deg per frame (rotation)
    v_bg: tuple = (1.0, 0.0)          # px per frame (two_layer_occlusion)
    v_fg: tuple = (6.0, 2.0)
    fg_radius: float = 12.0
    fg_center: tuple | None = None    # (x, y) at t = 0; default image centre
    gain: float = 0.03                # brightness change per frame (brightness_ramp)
    corr_length: float = 8.0

    def __post_init__(self):
        if self.kind not in SCENE_KINDS:
            raise ConfigError(f"unknown scene kind {self.kind!r}; choose from {SCENE_KINDS}")
        if self.height < 8 or self.width < 8:
            raise ConfigError("scenes must be at least 8x8")
        if self.corr_length <= 0:
            raise ConfigError("corr_length must be positive")
        if self.kind == "two_layer_occlusion" and self.fg_radius <= 0:
            raise ConfigError("fg_radius must be positive")
        if abs(self.angle) > 45:
            raise ConfigError("rotation angle limited to 45 degrees per frame")
        if abs(self.gain) > 0.5:
            raise ConfigError("brightness gain limited to 0.5")

    def with_(self, **kw) -> "SyntheticScene":
        return replace(self, **kw)


@dataclass(frozen=True)
class Triplet:
    frame0: np.ndarray
    frame_t: np.ndarray
    frame1: np.ndarray
    v01: np.ndarray
    v10: np.ndarray
    t: float
    scene: SyntheticScene | None = field(default=None, repr=False)


def _grid(h, w):
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    return xs, ys


def _rotate(xs, ys, cx, cy, deg):
    a = np.deg2rad(deg)
    ca, sa = np.cos(a), np.sin(a)
    dx, dy = xs - cx, ys - cy
    return cx + ca * dx - sa * dy, cy + sa * dx + ca * dy


def rotation_flow(h: int, w: int, deg: float) -> np.ndarray:
    """Flow of a rigid rotation by ``deg`` about the image centre."""
    xs, ys = _grid(h, w)
    cx, cy = (w - 1) / 2.0, (h - 1) / 2.0
    rx, ry = _rotate(xs, ys, cx, cy, deg)
    return np.stack([rx - xs, ry - ys], axis=2)


def _fg_alpha(scene: SyntheticScene, xs, ys, tau):
    cx, cy = scene.fg_center if scene.fg_center is not None else (
        (scene.width - 1) / 2.0, (scene.height - 1) / 2.0)
    cx += tau * scene.v_fg[0]
    cy += tau * scene.v_fg[1]
    dist = np.hypot(xs - cx, ys - cy)
    return np.clip(scene.fg_radius - dist + 0.5, 0.0, 1.0)


def render(scene: SyntheticScene, tau: float) -> np.ndarray:
    """The scene at time ``tau`` (0 = first frame, 1 = second)."""
    h, w = scene.height, scene.width
    xs, ys = _grid(h, w)
    tex = Texture(scene.seed, scene.corr_length)
    if scene.kind == "global_shift":
        return tex.sample(xs - tau * scene.shift[0], ys - tau * scene.shift[1])
    if scene.kind == "brightness_ramp":
        img = tex.sample(xs - tau * scene.shift[0], ys - tau * scene.shift[1])
        gain = 1.0 + scene.gain * tau * (xs / max(w - 1, 1))
        return np.clip(img * gain[..., None], 0.0, 1.0)
    if scene.kind == "rotation":
        cx, cy = (w - 1) / 2.0, (h - 1) / 2.0
        sx, sy = _rotate(xs, ys, cx, cy, -tau * scene.angle)
        return tex.sample(sx, sy)
    # two_layer_occlusion
    bg = tex.sample(xs - tau * scene.v_bg[0], ys - tau * scene.v_bg[1])
    fg_tex = Texture(scene.seed + 7919, scene.corr_length * 0.75)
    fg = fg_tex.sample(xs - tau * scene.v_fg[0], ys - tau * scene.v_fg[1])
    # darken the foreground so the layers are distinguishable
    fg = 0.15 + 0.7 * fg[..., ::-1]
    a = _fg_alpha(scene, xs, ys, tau)[..., None]
    return a * fg + (1 - a) * bg


def ground_truth_flows(scene: SyntheticScene) -> tuple[np.ndarray, np.ndarray]:
    """``(v01, v10)``: flow from frame 0 to frame 1 anchored on frame 0, and back."""
    h, w = scene.height, scene.width
    if scene.kind in ("global_shift", "brightness_ramp"):
        v = np.broadcast_to(np.asarray(scene.shift, dtype=np.float64), (h, w, 2)).copy()
        return v, -v
    if scene.kind == "rotation":
        return rotation_flow(h, w, scene.angle), rotation_flow(h, w, -scene.angle)
    xs, ys = _grid(h, w)
    fg0 = _fg_alpha(scene, xs, ys, 0.0) >= 0.5
    fg1 = _fg_alpha(scene, xs, ys, 1.0) >= 0.5
    vb = np.asarray(scene.v_bg, dtype=np.float64)
    vf = np.asarray(scene.v_fg, dtype=np.float64)
    v01 = np.where(fg0[..., None], vf, vb)
    v10 = np.where(fg1[..., None], -vf, -vb)
    return v01, v10


def generate_triplet(scene: SyntheticScene, t: float = 0.5) -> Triplet:
    if not 0.0 <= t <= 1.0:
        raise DomainError(f"t must lie in [0, 1], got {t}")
    v01, v10 = ground_truth_flows(scene)
    return Triplet(render(scene, 0.0), render(scene, t), render(scene, 1.0), v01, v10, float(t), scene)


def occlusion_suite(count: int, size: int = 48, seed: int = 0) -> list[SyntheticScene]:
    """Randomised two-layer scenes: a textured disc sliding over a slowly moving background."""
    rng = np.random.default_rng(seed)
    scenes = []
    for i in range(count):
        ang = rng.uniform(0, 2 * np.pi)
        speed = rng.uniform(4.0, 8.0)
        bg_ang = rng.uniform(0, 2 * np.pi)
        bg_speed = rng.uniform(0.0, 2.0)
        radius = rng.uniform(0.18, 0.28) * size
        c = (size - 1) / 2.0
        center = (c + rng.uniform(-0.1, 0.1) * size - 0.5 * speed * np.cos(ang),
                  c + rng.uniform(-0.1, 0.1) * size - 0.5 * speed * np.sin(ang))
        scenes.append(SyntheticScene(
            "two_layer_occlusion", size, size, seed=int(rng.integers(0, 2 ** 31)),
            v_bg=(bg_speed * np.cos(bg_ang), bg_speed * np.sin(bg_ang)),
            v_fg=(speed * np.cos(ang), speed * np.sin(ang)),
            fg_radius=float(radius), fg_center=center))
    return scenes


def scene_suite(kind: str, count: int, size: int = 64, seed: int = 0) -> list[SyntheticScene]:
    if kind == "two_layer_occlusion":
        return occlusion_suite(count, size, seed)
    rng = np.random.default_rng(seed)
    scenes = []
    for _ in range(count):
        s = int(rng.integers(0, 2 ** 31))
        if kind == "global_shift":
            scenes.append(SyntheticScene(kind, size, size, seed=s,
                                         shift=tuple(rng.uniform(-8.0, 8.0, 2))))
        elif kind == "rotation":
            scenes.append(SyntheticScene(kind, size, size, seed=s, angle=float(rng.uniform(-5, 5))))
        elif kind == "brightness_ramp":
            scenes.append(SyntheticScene(kind, size, size, seed=s,
                                         shift=tuple(rng.uniform(-6.0, 6.0, 2)),
                                         gain=float(rng.uniform(-0.03, 0.03))))
        else:
            raise ConfigError(f"unknown scene kind {kind!r}")
    return scenes
