"""Trainable filter generator: a small 3x3 convolution stack with a per-pixel softmax.

The input is the channel concatenation of (optionally) the two input frames,
the candidate frames and (optionally) their context maps, shifted by -0.5. Hidden
layers use a leaky rectifier with slope 0.1; the last layer is linear with
``n * k * k`` outputs, and a softmax over those logits gives the blending
filters, so every pixel's coefficients are positive and sum to one. Logit
``c * k * k + (dy + r) * k + (dx + r)`` becomes ``F[y, x, c, dy + r, dx + r]``.

Convolutions are 'same' size with zero padding, evaluated as an im2col matrix
product. Parameters are float32 and the arithmetic follows their dtype, so a
float64 copy of a stack gives an exact reference for gradient checks.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigError, DimensionError, FormatError
from .losses import EPSILON, rho, rho_grad
from .synth import CONTEXT_CHANNELS, CandidateSet, FilterStack, apply_dynamic_filters, apply_dynamic_filters_grad

LEAK = 0.1
CHECKPOINT_MAGIC = b"BMF1"
FLAG_FRAMES = 1
FLAG_CONTEXTS = 2
DEFAULT_WIDTHS = (32, 32, 32)
PRIOR_CENTER_LOGIT = 20.0


def input_channels(n_candidates: int, use_frames: bool = True, use_contexts: bool = True,
                   image_channels: int = 3, context_channels: int = CONTEXT_CHANNELS) -> int:
    width = n_candidates * image_channels
    if use_frames:
        width += 2 * image_channels
    if use_contexts:
        width += n_candidates * context_channels
    return width


@dataclass
class ConvLayer:
    weight: np.ndarray   # (3, 3, cin, cout)
    bias: np.ndarray     # (cout,)

    @property
    def cin(self) -> int:
        return self.weight.shape[2]

    @property
    def cout(self) -> int:
        return self.weight.shape[3]


@dataclass
class ConvStack:
    layers: list
    kernel_size: int = 5
    n_candidates: int = 6
    use_frames: bool = True
    use_contexts: bool = True

    def __post_init__(self):
        if not self.layers:
            raise ConfigError("a stack needs at least one layer")
        if self.kernel_size < 1 or self.kernel_size % 2 == 0:
            raise ConfigError(f"kernel size must be odd and positive, got {self.kernel_size}")
        for a, b in zip(self.layers, self.layers[1:]):
            if a.cout != b.cin:
                raise DimensionError(f"layer widths do not chain: {a.cout} -> {b.cin}")
        for layer in self.layers:
            if layer.weight.shape[:2] != (3, 3) or layer.bias.shape != (layer.cout,):
                raise DimensionError("layers must hold 3x3 kernels and one bias per output channel")
        if self.layers[-1].cout != self.n_outputs:
            raise DimensionError(f"last layer has {self.layers[-1].cout} outputs, "
                                 f"k*k*n = {self.n_outputs} required")

    @property
    def n_outputs(self) -> int:
        return self.kernel_size ** 2 * self.n_candidates

    @property
    def in_channels(self) -> int:
        return self.layers[0].cin

    @property
    def dtype(self):
        return self.layers[0].weight.dtype

    def params(self) -> list[np.ndarray]:
        """Flat list ``[w0, b0, w1, b1, ...]`` (views, not copies)."""
        out = []
        for layer in self.layers:
            out += [layer.weight, layer.bias]
        return out

    def n_params(self) -> int:
        return sum(p.size for p in self.params())

    def copy(self, dtype=None) -> "ConvStack":
        dt = dtype or self.dtype
        layers = [ConvLayer(l.weight.astype(dt, copy=True), l.bias.astype(dt, copy=True)) for l in self.layers]
        return ConvStack(layers, self.kernel_size, self.n_candidates, self.use_frames, self.use_contexts)

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(p)) for p in self.params())

    # constructors ---------------------------------------------------------

    @classmethod
    def random(cls, n_candidates: int = 6, kernel_size: int = 5, widths: Sequence[int] = DEFAULT_WIDTHS,
               seed: int = 0, use_frames: bool = True, use_contexts: bool = True,
               image_channels: int = 3, dtype=np.float32) -> "ConvStack":
        """He-initialised hidden layers; the output layer starts 10x smaller so filters begin near uniform."""
        rng = np.random.default_rng(seed)
        cin = input_channels(n_candidates, use_frames, use_contexts, image_channels)
        dims = [cin, *widths, kernel_size ** 2 * n_candidates]
        layers = []
        for i, (a, b) in enumerate(zip(dims, dims[1:])):
            std = np.sqrt(2.0 / ((1.0 + LEAK ** 2) * 9 * a))
            if i == len(dims) - 2:
                std *= 0.1
            layers.append(ConvLayer(rng.normal(0.0, std, (3, 3, a, b)).astype(dtype), np.zeros(b, dtype=dtype)))
        return cls(layers, kernel_size, n_candidates, use_frames, use_contexts)

    @classmethod
    def zeros(cls, n_candidates: int = 6, kernel_size: int = 5, widths: Sequence[int] = DEFAULT_WIDTHS,
              use_frames: bool = True, use_contexts: bool = True, image_channels: int = 3,
              dtype=np.float32) -> "ConvStack":
        cin = input_channels(n_candidates, use_frames, use_contexts, image_channels)
        dims = [cin, *widths, kernel_size ** 2 * n_candidates]
        layers = [ConvLayer(np.zeros((3, 3, a, b), dtype=dtype), np.zeros(b, dtype=dtype))
                  for a, b in zip(dims, dims[1:])]
        return cls(layers, kernel_size, n_candidates, use_frames, use_contexts)

    @classmethod
    def averaging_prior(cls, n_candidates: int = 6, kernel_size: int = 5, **kw) -> "ConvStack":
        """Untrained default: input-independent filters that average the candidates' centre taps.

        The off-centre taps keep a relative weight of ``exp(-20)``.
        """
        stack = cls.zeros(n_candidates, kernel_size, **kw)
        k, r = kernel_size, kernel_size // 2
        centre = [c * k * k + r * k + r for c in range(n_candidates)]
        stack.layers[-1].bias[centre] = PRIOR_CENTER_LOGIT
        return stack


# --------------------------------------------------------------------------
# input assembly


def assemble_input(frame0, frame1, cands: CandidateSet, use_frames: bool = True,
                   use_contexts: bool = True) -> np.ndarray:
    """``(H, W, C_in)`` network input, centred by subtracting 0.5."""
    parts = []
    if use_frames:
        parts += [np.asarray(frame0, dtype=np.float64), np.asarray(frame1, dtype=np.float64)]
    parts += list(cands.frames)
    if use_contexts:
        parts += list(cands.contexts)
    shapes = {p.shape[:2] for p in parts}
    if len(shapes) != 1:
        raise DimensionError(f"inputs disagree spatially: {sorted(shapes)}")
    return np.concatenate(parts, axis=2) - 0.5


# --------------------------------------------------------------------------
# forward / backward


def _im2col(x):
    """(B, H, W, C) -> (B, H, W, 9 C), zero padding, taps ordered (dy, dx, c)."""
    b, h, w, c = x.shape
    p = np.zeros((b, h + 2, w + 2, c), dtype=x.dtype)
    p[:, 1:-1, 1:-1] = x
    cols = np.empty((b, h, w, 9, c), dtype=x.dtype)
    for j in range(3):
        for i in range(3):
            cols[:, :, :, 3 * j + i] = p[:, j:j + h, i:i + w]
    return cols.reshape(b, h, w, 9 * c)


def _col2im(cols, c):
    b, h, w, _ = cols.shape
    cols = cols.reshape(b, h, w, 9, c)
    p = np.zeros((b, h + 2, w + 2, c), dtype=cols.dtype)
    for j in range(3):
        for i in range(3):
            p[:, j:j + h, i:i + w] += cols[:, :, :, 3 * j + i]
    return p[:, 1:-1, 1:-1]


def conv3x3(x, weight, bias):
    """Zero-padded 'same' 3x3 convolution (cross-correlation) of a ``(B, H, W, C)`` batch."""
    cols = _im2col(x)
    return cols @ weight.reshape(-1, weight.shape[3]) + bias


def _leaky(z):
    return np.where(z > 0, z, LEAK * z)


def softmax(logits, axis=-1):
    z = logits - logits.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def forward(stack: ConvStack, x: np.ndarray, keep: bool = False):
    """Logits ``(B, H, W, n k k)``; with ``keep`` also the per-layer caches for :func:`backward`."""
    x = np.asarray(x)
    if x.ndim == 3:
        x = x[None]
    if x.shape[-1] != stack.in_channels:
        raise ConfigError(f"input has {x.shape[-1]} channels, stack expects {stack.in_channels}")
    h = x.astype(stack.dtype, copy=False)
    caches = []
    last = len(stack.layers) - 1
    for i, layer in enumerate(stack.layers):
        cols = _im2col(h)
        z = cols @ layer.weight.reshape(-1, layer.cout) + layer.bias
        if keep:
            caches.append((cols, z))
        h = z if i == last else _leaky(z)
    return (h, caches) if keep else h


def backward(stack: ConvStack, caches, g_logits) -> list[np.ndarray]:
    """Parameter gradients ``[dw0, db0, ...]`` given d loss / d logits."""
    grads = [None] * (2 * len(stack.layers))
    g = g_logits.astype(stack.dtype, copy=False)
    for i in range(len(stack.layers) - 1, -1, -1):
        layer = stack.layers[i]
        cols, z = caches[i]
        if i != len(stack.layers) - 1:
            g = g * np.where(z > 0, 1.0, LEAK).astype(g.dtype)
        g2 = g.reshape(-1, layer.cout)
        grads[2 * i] = (cols.reshape(-1, cols.shape[-1]).T @ g2).reshape(layer.weight.shape)
        grads[2 * i + 1] = g2.sum(axis=0)
        if i > 0:
            g = _col2im(g @ layer.weight.reshape(-1, layer.cout).T, layer.cin)
    return grads


def logits_to_filters(logits: np.ndarray, n: int, k: int) -> np.ndarray:
    """Per-pixel softmax of ``(..., n k k)`` logits, reshaped to ``(..., n, k, k)``."""
    p = softmax(logits.astype(np.float64), axis=-1)
    return p.reshape(*p.shape[:-1], n, k, k)


def generate_filters(stack: ConvStack, frame0, frame1, cands: CandidateSet) -> FilterStack:
    if len(cands) != stack.n_candidates:
        raise ConfigError(f"stack was built for {stack.n_candidates} candidates, got {len(cands)}")
    x = assemble_input(frame0, frame1, cands, stack.use_frames, stack.use_contexts)
    logits = forward(stack, x)[0]
    return FilterStack(logits_to_filters(logits, stack.n_candidates, stack.kernel_size))


def synthesize(stack: ConvStack, frame0, frame1, cands: CandidateSet) -> np.ndarray:
    return apply_dynamic_filters(cands, generate_filters(stack, frame0, frame1, cands))


# --------------------------------------------------------------------------
# training


@dataclass(frozen=True)
class TrainingItem:
    """One precomputed example: network input, candidate frames and the true midframe."""
    inputs: np.ndarray   # (H, W, C_in)
    frames: np.ndarray   # (n, H, W, C)
    target: np.ndarray   # (H, W, C)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-4
    decay: tuple = ((1000, 0.5), (1500, 0.5))
    batch_size: int = 4
    iterations: int = 2000
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    epsilon: float = EPSILON

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ConfigError("learning rate must be positive")
        if self.iterations < 0:
            raise ConfigError("iterations must be >= 0")
        if self.batch_size < 1:
            raise ConfigError("batch size must be >= 1")
        for it, factor in self.decay:
            if it < 0 or not factor > 0:
                raise ConfigError(f"bad decay step ({it}, {factor})")

    def rate_at(self, iteration: int) -> float:
        """Learning rate for 0-based ``iteration``; each decay step applies from its iteration on."""
        lr = self.learning_rate
        for it, factor in self.decay:
            if iteration >= it:
                lr *= factor
        return lr


def item_loss(stack: ConvStack, item: TrainingItem, eps: float = EPSILON) -> float:
    logits = forward(stack, item.inputs)[0]
    coeffs = logits_to_filters(logits, stack.n_candidates, stack.kernel_size)
    out = apply_dynamic_filters(item.frames, coeffs)
    return float(np.sum(rho(out - item.target, eps)))


def batch_loss_and_grad(stack: ConvStack, items: Sequence[TrainingItem], eps: float = EPSILON):
    """Mean over items of ``sum_x rho(synth - target)`` and its parameter gradients."""
    x = np.stack([it.inputs for it in items])
    logits, caches = forward(stack, x, keep=True)
    n, k = stack.n_candidates, stack.kernel_size
    g_logits = np.empty(logits.shape, dtype=np.float64)
    total = 0.0
    scale = 1.0 / len(items)
    for b, item in enumerate(items):
        p = softmax(logits[b].astype(np.float64), axis=-1)
        coeffs = p.reshape(*p.shape[:-1], n, k, k)
        out = apply_dynamic_filters(item.frames, coeffs)
        r = out - item.target
        total += float(np.sum(rho(r, eps)))
        g_coeffs, _ = apply_dynamic_filters_grad(item.frames, coeffs, scale * rho_grad(r, eps))
        g = g_coeffs.reshape(p.shape)
        g_logits[b] = p * (g - np.sum(p * g, axis=-1, keepdims=True))
    return total * scale, backward(stack, caches, g_logits)


class Adam:
    def __init__(self, params: list[np.ndarray], beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = params
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.steps = 0

    def step(self, grads: list[np.ndarray], lr: float) -> None:
        self.steps += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1 ** self.steps
        c2 = 1.0 - b2 ** self.steps
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            g = g.astype(p.dtype, copy=False)
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            p -= (lr / c1) * m / (np.sqrt(v / c2) + self.eps)


def train_filtergen(stack: ConvStack, dataset: Sequence[TrainingItem], cfg: TrainConfig = TrainConfig(),
                    on_iter: Callable | None = None) -> tuple[ConvStack, np.ndarray]:
    """Adam on the synthesis loss; returns a trained copy and the per-iteration batch losses.

    Batches are drawn without replacement from a seeded permutation that is
    redrawn each epoch. ``on_iter(i, loss)`` is called after every update.
    """
    if not dataset:
        raise ConfigError("training needs at least one example")
    widths = {it.inputs.shape[-1] for it in dataset}
    if widths != {stack.in_channels}:
        raise ConfigError(f"examples have {sorted(widths)} input channels, stack expects {stack.in_channels}")
    trained = stack.copy()
    if cfg.iterations == 0:
        return trained, np.zeros(0)
    rng = np.random.default_rng(cfg.seed)
    opt = Adam(trained.params(), cfg.beta1, cfg.beta2, cfg.adam_eps)
    losses = np.empty(cfg.iterations)
    order, pos = rng.permutation(len(dataset)), 0
    bs = min(cfg.batch_size, len(dataset))
    for i in range(cfg.iterations):
        if pos + bs > len(order):
            order, pos = rng.permutation(len(dataset)), 0
        batch = [dataset[j] for j in order[pos:pos + bs]]
        pos += bs
        loss, grads = batch_loss_and_grad(trained, batch, cfg.epsilon)
        opt.step(grads, cfg.rate_at(i))
        losses[i] = loss
        if on_iter is not None:
            on_iter(i, loss)
    return trained, losses


# --------------------------------------------------------------------------
# checkpoints
#
# layout (little-endian): b"BMF1", u32 layer count, u32 kernel size,
# u32 candidate count, u32 input flags, then (u32 cin, u32 cout) per layer,
# then per layer the float32 weights in (3, 3, cin, cout) order and the
# float32 biases.


def save_checkpoint(stack: ConvStack, path) -> None:
    flags = (FLAG_FRAMES if stack.use_frames else 0) | (FLAG_CONTEXTS if stack.use_contexts else 0)
    parts = [CHECKPOINT_MAGIC, struct.pack("<IIII", len(stack.layers), stack.kernel_size,
                                           stack.n_candidates, flags)]
    parts += [struct.pack("<II", l.cin, l.cout) for l in stack.layers]
    for l in stack.layers:
        parts.append(np.ascontiguousarray(l.weight, dtype="<f4").tobytes())
        parts.append(np.ascontiguousarray(l.bias, dtype="<f4").tobytes())
    Path(path).write_bytes(b"".join(parts))


def load_checkpoint(path) -> ConvStack:
    data = Path(path).read_bytes()
    if len(data) < 20 or data[:4] != CHECKPOINT_MAGIC:
        raise FormatError(f"{path}: not a BMF1 checkpoint")
    n_layers, k, n, flags = struct.unpack_from("<IIII", data, 4)
    off = 20
    if n_layers == 0 or len(data) < off + 8 * n_layers:
        raise FormatError(f"{path}: truncated layer table")
    dims = [struct.unpack_from("<II", data, off + 8 * i) for i in range(n_layers)]
    off += 8 * n_layers
    expected = off + 4 * sum(9 * a * b + b for a, b in dims)
    if len(data) != expected:
        raise FormatError(f"{path}: expected {expected} bytes, found {len(data)}")
    layers = []
    for a, b in dims:
        w = np.frombuffer(data, dtype="<f4", count=9 * a * b, offset=off).astype(np.float32).reshape(3, 3, a, b)
        off += 4 * 9 * a * b
        bias = np.frombuffer(data, dtype="<f4", count=b, offset=off).astype(np.float32)
        off += 4 * b
        layers.append(ConvLayer(w, bias))
    try:
        return ConvStack(layers, int(k), int(n), bool(flags & FLAG_FRAMES), bool(flags & FLAG_CONTEXTS))
    except (ConfigError, DimensionError) as exc:
        raise FormatError(f"{path}: inconsistent checkpoint: {exc}") from None
