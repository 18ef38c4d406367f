"""Shared numerical plumbing: quadrature nodes, RNG streams, thread pool."""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from functools import lru_cache

import numpy as np
from scipy.stats import qmc


@lru_cache(maxsize=64)
def gauss_legendre_01(npts: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes and weights on the unit interval."""
    x, w = np.polynomial.legendre.leggauss(npts)
    return 0.5 * (x + 1.0), 0.5 * w


def segment_nodes(a: np.ndarray, b: np.ndarray, npts: int):
    """Quadrature nodes along straight segments a->b.

    a, b have shape (..., n).  Returns points of shape (..., npts, n),
    weights (..., npts) in length units, and segment lengths (...,).
    """
    t, w = gauss_legendre_01(npts)
    diff = b - a
    length = np.linalg.norm(diff, axis=-1)
    pts = a[..., None, :] + t[:, None] * diff[..., None, :]
    return pts, w * length[..., None], length


def philox_stream(*key: int) -> np.random.Generator:
    """Counter-based generator keyed by a tuple of integers.

    Streams keyed by distinct tuples are independent, and the draw
    sequence does not depend on thread scheduling.
    """
    packed = np.zeros(2, dtype=np.uint64)
    h = np.uint64(0x9E3779B97F4A7C15)
    acc = np.uint64(0)
    for k in key:
        acc = (acc ^ np.uint64(int(k) & 0xFFFFFFFFFFFFFFFF)) * h
    packed[0] = acc
    packed[1] = np.uint64(len(key)) * h ^ acc >> np.uint64(7)
    return np.random.Generator(np.random.Philox(key=packed))


def halton_sample(dim: int, count: int) -> np.ndarray:
    """Deterministic low-discrepancy points in the unit cube, shape (count, dim)."""
    sampler = qmc.Halton(d=dim, scramble=False)
    sampler.fast_forward(1)  # drop the all-zeros point
    return sampler.random(count)


def thread_count() -> int:
    raw = os.environ.get("ITRANS_THREADS", "")
    try:
        cap = int(raw)
    except ValueError:
        cap = 0
    if cap <= 0:
        cap = min(os.cpu_count() or 1, 8)
    return cap


def parallel_map(fn, items):
    """Order-preserving map over items using up to ITRANS_THREADS workers.

    Results are gathered by index, so the output (and anything reduced
    from it in order) is independent of the worker count.
    """
    items = list(items)
    workers = thread_count()
    if workers <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))
