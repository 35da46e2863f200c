"""Monte Carlo summaries and the deterministic chunked reduction."""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

DEFAULT_CHUNK = 2048


@dataclass(frozen=True)
class Estimate:
    mean: float
    stderr: float
    n: int

    def __post_init__(self):
        if self.n <= 0:
            raise ValueError("an estimate needs at least one sample")

    def within(self, target: float, k: float = 3.0) -> bool:
        return abs(self.mean - target) <= k * self.stderr

    def as_dict(self) -> dict:
        return {"mean": self.mean, "stderr": self.stderr, "n": self.n}


def estimates_from_sums(s1, s2, n: int) -> list[Estimate]:
    """Turn per-column sums of x and x**2 into estimates (stderr uses ddof=1)."""
    s1 = np.atleast_1d(np.asarray(s1, dtype=float))
    s2 = np.atleast_1d(np.asarray(s2, dtype=float))
    out = []
    for a, b in zip(s1, s2):
        mean = a / n
        var = max(b / n - mean * mean, 0.0) * n / (n - 1) if n > 1 else 0.0
        out.append(Estimate(float(mean), math.sqrt(var / n), int(n)))
    return out


def chunk_ranges(n: int, chunk: int = DEFAULT_CHUNK) -> list[tuple[int, int]]:
    return [(i, min(chunk, n - i)) for i in range(0, n, chunk)]


def map_chunks(func, n: int, args: tuple = (), workers: int = 1, chunk: int = DEFAULT_CHUNK):
    """Evaluate ``func(i0, count, *args)`` over fixed sample-index chunks.

    The partition depends only on ``n`` and ``chunk``; results come back in
    chunk order, so any reduction over them is independent of ``workers``.
    """
    ranges = chunk_ranges(n, chunk)
    if workers <= 1 or len(ranges) == 1:
        return [func(i0, cnt, *args) for i0, cnt in ranges]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        futs = [ex.submit(func, i0, cnt, *args) for i0, cnt in ranges]
        return [f.result() for f in futs]


def reduce_sums(parts) -> np.ndarray:
    """Sum a list of equally shaped arrays in list order, pairwise."""
    arr = np.stack([np.asarray(p, dtype=float) for p in parts])
    while arr.shape[0] > 1:
        if arr.shape[0] % 2:
            arr = np.concatenate([arr, np.zeros_like(arr[:1])])
        arr = arr[0::2] + arr[1::2]
    return arr[0]
