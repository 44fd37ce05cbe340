"""Wall-clock comparison of the numba and numpy kernels."""
from __future__ import annotations

import time
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from ._backend import available_backends, set_threads, use_backend
from .bcv import SearchWindow, compute_bcv
from .synth import apply_dynamic_filters
from .warp import backward_warp

BENCH_COLUMNS = ("kernel", "backend", "size", "d", "threads", "median_s")


@dataclass(frozen=True)
class BenchRow:
    kernel: str
    backend: str
    size: int
    d: int          # search radius for compute_bcv, filter radius otherwise
    threads: int
    median_s: float


def median_time(fn, repeats: int = 5) -> float:
    """Median wall time of ``repeats`` calls after one untimed warm-up (which also JIT-compiles)."""
    fn()
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return float(np.median(times))


def _cases(size: int, radius: int, rng):
    c0 = rng.random((size, size, 6))
    c1 = rng.random((size, size, 6))
    v0 = rng.normal(0.0, 2.0, (size, size, 2))
    v1 = -v0
    img = rng.random((size, size, 3))
    k = 2 * radius + 1
    frames = rng.random((6, size, size, 3))
    coeffs = rng.random((size, size, 6, k, k))
    coeffs /= coeffs.sum(axis=(2, 3, 4), keepdims=True)
    window = SearchWindow(radius)
    return {
        "compute_bcv": lambda: compute_bcv(c0, c1, v0, v1, 0.5, window),
        "backward_warp": lambda: backward_warp(img, v1),
        "apply_dynamic_filters": lambda: apply_dynamic_filters(frames, coeffs),
    }


def run_bench(sizes: Sequence[int] = (32, 64, 128), radii: Sequence[int] = (1, 2, 3),
              threads: Sequence[int] = (1,), backends: Sequence[str] | None = None,
              repeats: int = 5, seed: int = 0) -> list[BenchRow]:
    backends = list(backends or available_backends())
    rows = []
    for backend in backends:
        with use_backend(backend):
            for n_threads in threads:
                set_threads(n_threads)
                for size in sizes:
                    for radius in radii:
                        cases = _cases(size, radius, np.random.default_rng(seed))
                        for kernel, fn in cases.items():
                            # the warp does not depend on the radius; time it once per size
                            if kernel == "backward_warp" and radius != radii[0]:
                                continue
                            d = 0 if kernel == "backward_warp" else radius
                            rows.append(BenchRow(kernel, backend, size, d, n_threads, median_time(fn, repeats)))
    return rows


def format_table(rows: Sequence[BenchRow]) -> str:
    lines = ["\t".join(BENCH_COLUMNS)]
    for r in rows:
        d = asdict(r)
        d["median_s"] = f"{r.median_s:.6f}"
        lines.append("\t".join(str(d[c]) for c in BENCH_COLUMNS))
    return "\n".join(lines)


def parse_table(text: str) -> list[BenchRow]:
    lines = [l for l in text.strip().splitlines() if l.strip()]
    if not lines or tuple(lines[0].split("\t")) != BENCH_COLUMNS:
        raise ValueError("not a benchmark table")
    rows = []
    for line in lines[1:]:
        k, b, s, d, th, m = line.split("\t")
        rows.append(BenchRow(k, b, int(s), int(d), int(th), float(m)))
    return rows
