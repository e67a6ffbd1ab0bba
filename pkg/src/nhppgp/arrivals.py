"""Poisson arrival machinery for defect initiation."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .model import ArrivalRealization, IntensityFunction, RngStream
from .special import gamma_cdf, gamma_sf, log_gamma

__all__ = [
    "PoissonCountDistribution",
    "cumulative_intensity",
    "sample_arrivals",
    "sample_arrival_matrix",
    "count_pmf",
    "joint_arrival_density",
]


def cumulative_intensity(intensity: IntensityFunction, t):
    if np.any(np.asarray(t) < 0):
        raise ValueError("t must be >= 0")
    return intensity.cumulative(t)


@dataclass(frozen=True)
class PoissonCountDistribution:
    """Law of N(t): Poisson with mean Lambda(t)."""

    t: float
    mean: float

    @classmethod
    def at(cls, intensity: IntensityFunction, t: float) -> "PoissonCountDistribution":
        return cls(t, cumulative_intensity(intensity, t))

    def pmf(self, n):
        return _poisson_pmf(self.mean, n)

    def sf(self, n):
        """P(N > n)."""
        n = np.asarray(n)
        if self.mean == 0:
            return np.where(n >= 0, 0.0, 1.0) if n.ndim else float(n < 0)
        return gamma_cdf(n + 1.0, 1.0, self.mean)

    def cdf(self, n):
        """P(N <= n)."""
        n = np.asarray(n)
        if self.mean == 0:
            return np.where(n >= 0, 1.0, 0.0) if n.ndim else float(n >= 0)
        return gamma_sf(n + 1.0, 1.0, self.mean)

    def quantile_above(self, eps: float) -> int:
        """Smallest n with P(N > n) < eps."""
        n = int(self.mean)
        while self.sf(n) >= eps:
            n += 1
        while n > 0 and self.sf(n - 1) < eps:
            n -= 1
        return n


def _poisson_pmf(mean: float, n):
    nv = np.asarray(n, dtype=float)
    if mean == 0:
        out = np.where(nv == 0, 1.0, 0.0)
    else:
        out = np.exp(-mean + nv * np.log(mean) - log_gamma(nv + 1.0))
    return float(out) if nv.ndim == 0 else out


def count_pmf(intensity: IntensityFunction, t: float, n: int) -> float:
    """P(N(t) = n), evaluated in log space."""
    if t < 0 or n < 0:
        raise ValueError("t and n must be nonnegative")
    return _poisson_pmf(cumulative_intensity(intensity, t), n)


def joint_arrival_density(times: Sequence[float], intensity: IntensityFunction, t: float) -> float:
    """Density of ``S_1 = s_1, ..., S_n = s_n, N(t) = n``: exp(-Lambda(t)) prod lambda(s_i)."""
    s = np.asarray(times, dtype=float)
    if s.size and (s[0] <= 0 or s[-1] >= t or np.any(np.diff(s) <= 0)):
        raise ValueError("need 0 < s_1 < ... < s_n < t")
    return float(np.exp(-intensity.cumulative(t)) * np.prod(intensity.rate(s)))


def sample_arrivals(
    intensity: IntensityFunction,
    horizon: float,
    n_cap: Optional[int],
    rng: RngStream,
) -> ArrivalRealization:
    """Exact NHPP epochs on (0, horizon] by inverting Lambda at unit-rate
    exponential partial sums; at most ``n_cap`` of them are kept."""
    if horizon <= 0:
        raise ValueError("horizon must be positive")
    s, count = sample_arrival_matrix(
        intensity, np.zeros(1), np.array([float(horizon)]),
        None if n_cap is None else np.array([n_cap]), rng.generator,
    )
    return ArrivalRealization(tuple(s[0, : count[0]]), horizon)


def sample_arrival_matrix(intensity, start, duration, cap, gen, chunk: Optional[int] = None):
    """Batched arrivals on ``(start_b, start_b + duration_b]`` for each row b.

    Returns times relative to ``start_b`` as a ``(B, K)`` array padded with
    ``inf`` and the per-row counts. ``cap`` (per row, or None) bounds the
    count; arrivals beyond it are suppressed.
    """
    start = np.asarray(start, dtype=float)
    duration = np.asarray(duration, dtype=float)
    B = start.size
    lam0 = intensity.cumulative(start)
    lam_end = intensity.cumulative(start + duration)
    mass = lam_end - lam0
    if chunk is None:
        m = float(mass.max(initial=0.0))
        chunk = max(4, int(m + 6.0 * np.sqrt(m) + 4))
    if cap is not None:
        cap = np.asarray(cap, dtype=int)
        chunk = min(chunk, max(int(cap.max(initial=0)), 0))
    cols = []
    total = np.zeros(B)
    alive = np.ones(B, dtype=bool)
    ncols = 0
    while alive.any() and (cap is None or ncols < cap.max(initial=0)):
        e = gen.standard_exponential((B, chunk))
        cum = total[:, None] + np.cumsum(e, axis=1)
        total = cum[:, -1]
        ok = cum <= mass[:, None]
        if cap is not None:
            ok &= (ncols + np.arange(chunk))[None, :] < cap[:, None]
        ok &= alive[:, None]
        cols.append(np.where(ok, cum, np.inf))
        ncols += chunk
        alive &= ok[:, -1]
    if not cols:
        return np.full((B, 0), np.inf), np.zeros(B, dtype=int)
    cum = np.concatenate(cols, axis=1)
    counts = np.isfinite(cum).sum(axis=1)
    K = int(counts.max(initial=0))
    cum = cum[:, :K]
    fin = np.isfinite(cum)
    times = np.full(cum.shape, np.inf)
    if fin.any():
        absolute = intensity.inverse_cumulative(np.where(fin, cum + lam0[:, None], 0.0))
        times = np.where(fin, absolute - start[:, None], np.inf)
        # guard rounding at the right edge
        times = np.where(fin, np.minimum(times, duration[:, None]), np.inf)
    return times, counts
