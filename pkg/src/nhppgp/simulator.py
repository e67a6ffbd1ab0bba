"""Monte Carlo engine for the dependent NHPP-GP model.

Simulation is event driven: between two arrival epochs the number of defects
is fixed, so each defect's increment over the whole stretch is one exact gamma
draw. Given the arrival epochs the defects grow independently, which lets the
batched engine draw one gamma variate per defect per call.

Replications are organised in fixed-size blocks; block ``b`` draws from
``rng.substream(b)``, so estimates depend on ``(seed, reps)`` only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .arrivals import sample_arrival_matrix, sample_arrivals
from .model import ModelParams, RngStream, SystemState
from .special import sample_beta, sample_gamma

__all__ = [
    "BLOCK_SIZE",
    "McEstimate",
    "Trajectory",
    "Segments",
    "AdvanceResult",
    "evolve",
    "simulate_trajectory",
    "advance_batch",
    "states_to_batch",
    "mc_expected_level",
    "mc_survival",
]

BLOCK_SIZE = 8192


@dataclass(frozen=True)
class McEstimate:
    mean: float
    std_error: float
    reps: int

    @classmethod
    def from_samples(cls, values) -> "McEstimate":
        v = np.asarray(values, dtype=float).ravel()
        n = v.size
        if n < 2:
            raise ValueError("need at least two replications")
        mean = math.fsum(v) / n
        var = math.fsum((v - mean) ** 2) / (n - 1)
        return cls(mean, math.sqrt(var / n), n)

    def within(self, value: float, k: float = 3.0) -> bool:
        return abs(self.mean - value) <= k * self.std_error


@dataclass
class Trajectory:
    """Time-ordered ``(time, state)`` snapshots at arrivals and observation times."""

    events: List[Tuple[float, SystemState]]

    def at(self, t: float) -> SystemState:
        for time, state in self.events:
            if time == t:
                return state
        raise KeyError(t)


def evolve(state: SystemState, dt: float, rng: RngStream, params: ModelParams) -> SystemState:
    """Grow every present defect over ``dt`` assuming no arrival inside the step."""
    assert dt > 0, "dt must be positive"
    if state.n == 0:
        return SystemState((), state.t + dt, state.arrival_times)
    shape = params.growth_shape_rate(state.n) * dt
    inc = sample_gamma(np.full(state.n, shape), params.beta, rng)
    levels = tuple(np.asarray(state.levels) + inc)
    return SystemState(levels, state.t + dt, state.arrival_times)


def simulate_trajectory(
    params: ModelParams,
    horizon: float,
    obs_times: Sequence[float],
    rng: RngStream,
) -> Trajectory:
    obs = sorted(set(float(t) for t in obs_times))
    if obs and (obs[0] < 0 or obs[-1] > horizon):
        raise ValueError("observation times must lie in [0, horizon]")
    arrivals = sample_arrivals(params.intensity, horizon, params.n_cap, rng)
    epochs = sorted([(s, "arrival") for s in arrivals.times] + [(t, "obs") for t in obs])
    state = SystemState.new()
    events: List[Tuple[float, SystemState]] = []
    for time, kind in epochs:
        if time > state.t:
            state = evolve(state, time - state.t, rng, params)
        if kind == "arrival":
            state = SystemState(state.levels + (0.0,), time, state.arrival_times + (time,))
        events.append((time, state))
    return Trajectory(events)


class Segments:
    """Piecewise-linear cumulative growth shape of one batch step.

    Row b covers ``[0, d_b]`` split at its new arrival epochs; on segment k
    the count is ``n_b + k`` and every present defect gains shape at rate
    ``alpha * c**(n_b + k - 1)``.
    """

    def __init__(self, arrivals: np.ndarray, duration: np.ndarray, counts: np.ndarray, params: ModelParams):
        B, P = arrivals.shape
        d = duration[:, None]
        inner = np.minimum(arrivals, d)
        self.knots = np.concatenate((np.zeros((B, 1)), inner, d), axis=1)
        n_seg = counts[:, None] + np.arange(P + 1)[None, :]
        with np.errstate(divide="ignore"):
            rates = params.alpha * np.power(params.c, n_seg - 1.0)
        self.rates = np.where(n_seg > 0, rates, 0.0)
        self.cum = np.concatenate(
            (np.zeros((B, 1)), np.cumsum(self.rates * np.diff(self.knots, axis=1), axis=1)), axis=1
        )

    def G(self, u: np.ndarray) -> np.ndarray:
        """Cumulative shape at times ``u`` of shape ``(B,)`` or ``(B, m)``."""
        u = np.asarray(u, dtype=float)
        squeeze = u.ndim == 1
        if squeeze:
            u = u[:, None]
        inner = self.knots[:, 1:-1]
        k = (inner[:, None, :] <= u[..., None]).sum(axis=-1)
        base = np.take_along_axis(self.knots, k, axis=1)
        out = np.take_along_axis(self.cum, k, axis=1) + np.take_along_axis(self.rates, k, axis=1) * (u - base)
        return out[:, 0] if squeeze else out


@dataclass
class AdvanceResult:
    levels: np.ndarray  # (B, K) NaN where no defect
    counts: np.ndarray
    starts: np.ndarray  # (B, K) start epoch relative to the step (0 if pre-existing)
    start_shape: np.ndarray  # (B, K) cumulative shape at each defect's start epoch
    segments: Segments

    def shape_between(self, u1: np.ndarray, u2: np.ndarray) -> np.ndarray:
        """Gamma shape gained by each defect column on ``[u1_b, u2_b]``."""
        return self.shape_from(u1, u2, self.segments.G(u1), self.segments.G(u2))

    def shape_from(self, u1, u2, g1, g2) -> np.ndarray:
        """As :meth:`shape_between` with the cumulative shapes ``G(u1)``, ``G(u2)`` supplied."""
        lo = np.where(self.starts > u1[:, None], self.start_shape, g1[:, None])
        hi = np.where(self.starts > u2[:, None], self.start_shape, g2[:, None])
        return np.where(np.isfinite(self.levels), np.maximum(hi - lo, 0.0), 0.0)

    def columns(self, cols: np.ndarray, valid: np.ndarray) -> "AdvanceResult":
        """Per-row column gather; entries with ``valid`` False become absent."""
        take = lambda a: np.take_along_axis(a, cols, axis=1)
        levels = np.where(valid, take(self.levels), np.nan)
        return AdvanceResult(levels, self.counts, take(self.starts), take(self.start_shape), self.segments)

    def rows(self, idx) -> "AdvanceResult":
        seg = Segments.__new__(Segments)
        s = self.segments
        seg.knots, seg.rates, seg.cum = s.knots[idx], s.rates[idx], s.cum[idx]
        return AdvanceResult(self.levels[idx], self.counts[idx], self.starts[idx], self.start_shape[idx], seg)


def states_to_batch(states: Sequence[SystemState]):
    """Pack states into ``(levels, counts, ages)`` arrays."""
    counts = np.array([s.n for s in states], dtype=int)
    K = int(counts.max(initial=0))
    levels = np.full((len(states), K), np.nan)
    for i, s in enumerate(states):
        levels[i, : s.n] = s.levels
    ages = np.array([s.t for s in states], dtype=float)
    return levels, counts, ages


def advance_batch(levels, counts, ages, duration, params: ModelParams, gen) -> AdvanceResult:
    """Advance a batch of systems by ``duration`` (scalar or per row)."""
    gen = getattr(gen, "generator", gen)
    counts = np.asarray(counts, dtype=int)
    B = counts.size
    levels = np.asarray(levels, dtype=float).reshape(B, -1)
    duration = np.broadcast_to(np.asarray(duration, dtype=float), (B,)).copy()
    ages = np.broadcast_to(np.asarray(ages, dtype=float), (B,))
    cap = None if params.n_cap is None else np.maximum(params.n_cap - counts, 0)
    s, p = sample_arrival_matrix(params.intensity, ages, duration, cap, gen)
    P = s.shape[1]
    seg = Segments(s, duration, counts, params)
    total = seg.cum[:, -1]
    K = int((counts + p).max(initial=0))
    out = np.full((B, K), np.nan)
    starts = np.full((B, K), np.inf)
    K0 = levels.shape[1]
    cols = np.arange(K)[None, :]
    existing = cols < counts[:, None]
    if K0:
        out[:, : min(K0, K)] = levels[:, : min(K0, K)]
    starts[existing] = 0.0
    start_shape = np.zeros((B, K))
    if P:
        rows, j = np.nonzero(np.isfinite(s))
        dest = counts[rows] + j
        out[rows, dest] = 0.0
        starts[rows, dest] = s[rows, j]
        start_shape[rows, dest] = seg.cum[rows, j + 1]
    present = np.isfinite(out)
    shape = np.where(present, np.maximum(total[:, None] - start_shape, 0.0), 0.0)
    inc = sample_gamma(shape, params.beta, gen)
    out = np.where(present, out + inc, np.nan)
    return AdvanceResult(out, counts + p, starts, start_shape, seg)


def bridge_levels(res: AdvanceResult, lo_levels, hi_levels, u_lo, u_mid, u_hi, gen):
    """Sample levels at ``u_mid`` given those at ``u_lo`` and ``u_hi`` (gamma bridge)."""
    a1 = res.shape_between(u_lo, u_mid)
    a2 = res.shape_between(u_mid, u_hi)
    frac = sample_beta(a1, a2, gen)
    return lo_levels + (hi_levels - lo_levels) * frac


def _blocks(reps: int):
    start = 0
    b = 0
    while start < reps:
        size = min(BLOCK_SIZE, reps - start)
        yield b, size
        start += size
        b += 1


def mc_expected_level(params: ModelParams, j: int, t: float, reps: int, rng: RngStream) -> McEstimate:
    """Monte Carlo mean of ``W_j(t)``; zero in replications with fewer than j defects."""
    if j < 1 or t <= 0:
        raise ValueError("need j >= 1 and t > 0")
    values = []
    for b, size in _blocks(reps):
        res = advance_batch(np.zeros((size, 0)), np.zeros(size, dtype=int), 0.0, t, params, rng.substream(b))
        w = np.zeros(size)
        if res.levels.shape[1] >= j:
            col = res.levels[:, j - 1]
            w = np.where(np.isfinite(col), col, 0.0)
        values.append(w)
    return McEstimate.from_samples(np.concatenate(values))


def mc_survival(
    params: ModelParams,
    z: float,
    t: float,
    x0: Optional[SystemState],
    reps: int,
    rng: RngStream,
) -> McEstimate:
    """Estimate P(max_j W_j(t) < z) from ``x0`` (a new system by default).

    Paths are nondecreasing, so this indicator is exactly ``{sigma_z > t}``.
    """
    if z <= 0:
        raise ValueError("z must be positive")
    x0 = x0 or SystemState.new()
    if x0.max_level >= z and x0.n:
        raise ValueError("initial levels must lie below z")
    values = []
    for b, size in _blocks(reps):
        if t == 0:
            values.append(np.ones(size))
            continue
        lv = np.tile(np.asarray(x0.levels, dtype=float), (size, 1))
        res = advance_batch(lv, np.full(size, x0.n), x0.t, t, params, rng.substream(b))
        mx = np.max(np.where(np.isfinite(res.levels), res.levels, -np.inf), axis=1, initial=-np.inf)
        values.append((mx < z).astype(float))
    return McEstimate.from_samples(np.concatenate(values))
