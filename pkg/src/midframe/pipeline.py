"""End-to-end interpolation: motion, candidates, filters, output frame."""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .approx import ApproxMotions, approximate
from .bme import BilateralMotion, EstimatorConfig, estimate_bidirectional, estimate_bilateral_motion, refine_variational
from .errors import ConfigError, DimensionError, DomainError, NumericError
from .filtergen import ConvStack, TrainingItem, assemble_input, generate_filters, load_checkpoint
from .grid import FeaturePyramid, as_field, build_feature_pyramid
from .synth import CANDIDATE_NAMES, SELECTORS, CandidateSet, FilterStack, apply_dynamic_filters, build_candidates, extract_context, selector_indices


@dataclass(frozen=True)
class PipelineConfig:
    estimator: EstimatorConfig = field(default_factory=EstimatorConfig)
    kernel_size: int = 5
    candidates: str = "BM+Appx4"
    checkpoint: str | None = None
    t_list: tuple = (0.5,)
    threads: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.candidates not in SELECTORS:
            raise ConfigError(f"unknown candidate selector {self.candidates!r}; choose from {tuple(SELECTORS)}")
        if self.kernel_size < 1 or self.kernel_size % 2 == 0:
            raise ConfigError(f"kernel size must be odd and positive, got {self.kernel_size}")
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")
        for t in self.t_list:
            if not 0.0 <= t <= 1.0:
                raise ConfigError(f"t values must lie in [0, 1], got {t}")

    @property
    def n_candidates(self) -> int:
        return len(selector_indices(self.candidates))

    def with_(self, **kw) -> "PipelineConfig":
        return replace(self, **kw)


def plan(cfg: PipelineConfig) -> dict:
    """What an interpolation run would do, without touching any pixels."""
    idx = selector_indices(cfg.candidates)
    return {
        "candidates": [CANDIDATE_NAMES[i] for i in idx],
        "n_candidates": len(idx),
        "kernel_size": cfg.kernel_size,
        "levels": cfg.estimator.levels,
        "search_radius": cfg.estimator.radius,
        "t": list(cfg.t_list),
        "generator": cfg.checkpoint or "averaging prior",
    }


def load_generator(cfg: PipelineConfig) -> ConvStack:
    """Stack from ``cfg.checkpoint``, or the averaging prior when none is given."""
    if cfg.checkpoint is None:
        return ConvStack.averaging_prior(cfg.n_candidates, cfg.kernel_size)
    stack = load_checkpoint(cfg.checkpoint)
    if stack.n_candidates != cfg.n_candidates or stack.kernel_size != cfg.kernel_size:
        raise ConfigError(f"checkpoint expects {stack.n_candidates} candidates with k={stack.kernel_size}, "
                          f"configuration has {cfg.n_candidates} with k={cfg.kernel_size}")
    return stack


@dataclass(frozen=True)
class PairAnalysis:
    """Everything about a frame pair that does not depend on t."""
    frame0: np.ndarray
    frame1: np.ndarray
    pyr0: FeaturePyramid
    pyr1: FeaturePyramid
    ctx0: np.ndarray
    ctx1: np.ndarray
    v01: np.ndarray
    v10: np.ndarray


@dataclass(frozen=True)
class Interpolation:
    t: float
    frame: np.ndarray
    motion: BilateralMotion
    approx: ApproxMotions
    candidates: CandidateSet
    filters: FilterStack


def analyse_pair(frame0, frame1, est: EstimatorConfig = EstimatorConfig()) -> PairAnalysis:
    frame0, frame1 = as_field(frame0), as_field(frame1)
    if frame0.shape != frame1.shape:
        raise DimensionError(f"frame shapes differ: {frame0.shape} vs {frame1.shape}")
    pyr0 = build_feature_pyramid(frame0, est.levels, est.feature_kind, est.census_slope)
    pyr1 = build_feature_pyramid(frame1, est.levels, est.feature_kind, est.census_slope)
    v01, v10 = estimate_bidirectional(pyr0, pyr1, est)
    zero = np.zeros_like(v01)
    v01 = refine_variational(BilateralMotion(0.0, zero, v01), frame0, frame1, est).v_t1
    v10 = refine_variational(BilateralMotion(1.0, v10, zero), frame0, frame1, est).v_t0
    return PairAnalysis(frame0, frame1, pyr0, pyr1, extract_context(frame0), extract_context(frame1), v01, v10)


def candidates_at(pair: PairAnalysis, t: float, est: EstimatorConfig, selector: str):
    if not 0.0 <= t <= 1.0:
        raise DomainError(f"t must lie in [0, 1], got {t}")
    bm = estimate_bilateral_motion(pair.pyr0, pair.pyr1, t, est)
    bm = refine_variational(bm, pair.frame0, pair.frame1, est)
    ap = approximate(pair.v01, pair.v10, t)
    cands = build_candidates(pair.frame0, pair.frame1, pair.ctx0, pair.ctx1, bm, ap, selector)
    return bm, ap, cands


def interpolate_pair(pair: PairAnalysis, t: float, cfg: PipelineConfig, stack: ConvStack) -> Interpolation:
    bm, ap, cands = candidates_at(pair, t, cfg.estimator, cfg.candidates)
    filters = generate_filters(stack, pair.frame0, pair.frame1, cands)
    frame = apply_dynamic_filters(cands, filters)
    if not np.all(np.isfinite(frame)):
        raise NumericError("interpolated frame contains non-finite values")
    return Interpolation(float(t), frame, bm, ap, cands, filters)


def interpolate(frame0, frame1, t_list=(0.5,), cfg: PipelineConfig = PipelineConfig(),
                stack: ConvStack | None = None) -> list[Interpolation]:
    """Synthesize the frame at every ``t`` in ``t_list``."""
    if stack is None:
        stack = load_generator(cfg)
    if stack.n_candidates != cfg.n_candidates:
        raise ConfigError(f"generator expects {stack.n_candidates} candidates, selector {cfg.candidates!r} "
                          f"gives {cfg.n_candidates}")
    pair = analyse_pair(frame0, frame1, cfg.estimator)
    return [interpolate_pair(pair, t, cfg, stack) for t in t_list]


def training_example(triplet, est: EstimatorConfig = EstimatorConfig(), selector: str = "BM+Appx4",
                     use_frames: bool = True, use_contexts: bool = True) -> TrainingItem:
    """Frozen-motion training example for the filter generator."""
    pair = analyse_pair(triplet.frame0, triplet.frame1, est)
    _, _, cands = candidates_at(pair, triplet.t, est, selector)
    x = assemble_input(pair.frame0, pair.frame1, cands, use_frames, use_contexts)
    return TrainingItem(x, cands.frames, as_field(triplet.frame_t))
