"""Brownian driving functions xi_t with E[xi_t xi_s] = kappa min(t, s)."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba as nb
import numpy as np

from .cft_params import DomainError
from .rng import check_seed, driving_normal
from .stats import Estimate, estimates_from_sums, map_chunks, reduce_sums


@dataclass(frozen=True, eq=False)
class DrivingPath:
    """One sampled driver on a time grid; ``xi[0] = 0`` and ``U = exp(i xi)``."""

    kappa: float
    t_grid: np.ndarray
    xi: np.ndarray
    seed: int = 0
    sample_index: int = 0
    kind: str = field(default="brownian")

    def __post_init__(self):
        t = np.asarray(self.t_grid, dtype=float)
        x = np.asarray(self.xi, dtype=float)
        if t.ndim != 1 or t.shape != x.shape:
            raise ValueError("t_grid and xi must be 1-d arrays of equal length")
        if t[0] != 0.0 or np.any(np.diff(t) <= 0):
            raise ValueError("t_grid must start at 0 and increase strictly")
        t.setflags(write=False)
        x.setflags(write=False)
        object.__setattr__(self, "t_grid", t)
        object.__setattr__(self, "xi", x)

    @property
    def t_max(self) -> float:
        return float(self.t_grid[-1])

    @property
    def n_steps(self) -> int:
        return self.t_grid.size - 1

    @property
    def U(self) -> np.ndarray:
        return np.exp(1j * self.xi)

    def increments(self) -> np.ndarray:
        return np.diff(self.xi)

    def index_at(self, t: float) -> int:
        """Index of the last grid time not exceeding ``t``."""
        return int(np.searchsorted(self.t_grid, t + 1e-12 * max(1.0, t), side="right") - 1)

    def xi_at(self, t: float) -> float:
        """Driver value at ``t`` under the left-held convention."""
        return float(self.xi[self.index_at(t)])


def make_grid(t_max: float, dt: float) -> np.ndarray:
    """Uniform grid from 0 with step dt; the last step may be shorter."""
    if not (math.isfinite(t_max) and math.isfinite(dt)) or t_max <= 0 or dt <= 0 or dt > t_max:
        raise DomainError(f"need 0 < dt <= t_max, got dt={dt}, t_max={t_max}")
    n = int(math.floor(t_max / dt + 1e-9))
    t = dt * np.arange(n + 1)
    if t_max - t[-1] > 1e-12 * t_max:
        t = np.append(t, t_max)
    else:
        t[-1] = t_max
    return t


@nb.njit(cache=True)
def _brownian_xi(kappa, t, seed, idx):
    xi = np.zeros(t.size)
    sk = math.sqrt(kappa)
    for k in range(t.size - 1):
        xi[k + 1] = xi[k] + sk * math.sqrt(t[k + 1] - t[k]) * driving_normal(seed, idx, k)
    return xi


def sample_path(kappa: float, t_max: float, dt: float, seed: int, sample_index: int) -> DrivingPath:
    """Driver whose k-th increment is sqrt(kappa dt_k) times stream normal k.

    ``kappa = 0`` is accepted and gives the zero driver.  Halving ``dt``
    gives a different (equally distributed) path, not a refinement.
    """
    if not math.isfinite(kappa) or kappa < 0:
        raise DomainError(f"kappa must be finite and >= 0, got {kappa}")
    seed = check_seed(seed)
    t = make_grid(t_max, dt)
    xi = _brownian_xi(float(kappa), t, np.uint64(seed), np.uint64(sample_index))
    return DrivingPath(float(kappa), t, xi, seed, int(sample_index))


def deterministic_path(kind: str, t_max: float, dt: float, rate: float = 0.0) -> DrivingPath:
    """``kind="zero"`` or ``kind="linear"`` (xi = rate * t); kappa is recorded as 0."""
    t = make_grid(t_max, dt)
    if kind == "zero":
        xi = np.zeros_like(t)
    elif kind == "linear":
        xi = rate * t
    else:
        raise ValueError(f"unknown deterministic driver {kind!r}")
    return DrivingPath(0.0, t, xi, 0, 0, kind=kind)


@nb.njit(cache=True)
def _spin_chunk(i0, count, kappa, s, times, seed):
    nt = times.size
    sums = np.zeros((4, nt))
    sk = math.sqrt(kappa)
    for p in range(count):
        idx = i0 + p
        xi = 0.0
        prev = 0.0
        for j in range(nt):
            xi += sk * math.sqrt(times[j] - prev) * driving_normal(seed, idx, j)
            prev = times[j]
            amp = math.exp(0.5 * kappa * s * s * times[j])
            re = amp * math.cos(s * xi)
            im = amp * math.sin(s * xi)
            sums[0, j] += re
            sums[1, j] += re * re
            sums[2, j] += im
            sums[3, j] += im * im
    return sums


def _spin_worker(i0, count, kappa, s, times, seed):
    return _spin_chunk(np.uint64(i0), count, kappa, s, times, np.uint64(seed))


def spin_martingale_check(kappa, s, t_list, N, seed, workers=1):
    """Monte Carlo mean of exp(i s xi_t + kappa s^2 t / 2) at each t.

    The driver is sampled exactly on the sorted ``t_list``.  Returns one
    ``(real, imag)`` pair of estimates per time; both should match (1, 0).
    """
    if N < 100:
        raise ValueError("spin martingale check needs N >= 100")
    times = np.asarray(sorted(float(t) for t in t_list))
    if times.size == 0 or times[0] <= 0:
        raise DomainError("times must be positive")
    parts = map_chunks(_spin_worker, N, (float(kappa), float(s), times, check_seed(seed)), workers)
    sums = reduce_sums(parts)
    re = estimates_from_sums(sums[0], sums[1], N)
    im = estimates_from_sums(sums[2], sums[3], N)
    return list(zip(re, im))
