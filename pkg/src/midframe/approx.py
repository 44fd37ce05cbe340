"""Bilateral motions approximated from bidirectional inter-frame flows.

Assuming the flow field is locally smooth, the flow at the intermediate pixel
``x`` is taken to be the inter-frame flow at the same coordinate and scaled
linearly in ``t``::

    fw_t1 = (1 - t) v01      fw_t0 = -t v01
    bw_t0 = t v10            bw_t1 = -(1 - t) v10

The four fields are kept apart; each becomes its own warping candidate.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, DomainError
from .grid import as_flow


@dataclass(frozen=True)
class ApproxMotions:
    t: float
    fw_t1: np.ndarray
    fw_t0: np.ndarray
    bw_t0: np.ndarray
    bw_t1: np.ndarray


def _check_t(t: float) -> float:
    if not 0.0 <= t <= 1.0:
        raise DomainError(f"t must lie in [0, 1], got {t}")
    return float(t)


def approximate_forward(v01, t: float) -> tuple[np.ndarray, np.ndarray]:
    """``(fw_t1, fw_t0)`` from the forward flow ``v01``."""
    t = _check_t(t)
    v01 = as_flow(v01)
    return (1.0 - t) * v01, (-t) * v01


def approximate_backward(v10, t: float) -> tuple[np.ndarray, np.ndarray]:
    """``(bw_t0, bw_t1)`` from the backward flow ``v10``."""
    t = _check_t(t)
    v10 = as_flow(v10)
    return t * v10, (-(1.0 - t)) * v10


def approximate(v01, v10, t: float) -> ApproxMotions:
    v01, v10 = as_flow(v01), as_flow(v10)
    if v01.shape != v10.shape:
        raise DimensionError(f"flow shapes differ: {v01.shape} vs {v10.shape}")
    fw_t1, fw_t0 = approximate_forward(v01, t)
    bw_t0, bw_t1 = approximate_backward(v10, t)
    return ApproxMotions(float(t), fw_t1, fw_t0, bw_t0, bw_t1)
