"""Domain types of the dependent NHPP-GP model and its shape-parameter algebra.

Defects start at the epochs of a Poisson process with intensity ``lambda(t)``.
While ``N`` defects are present each of them grows with independent gamma
increments of shape ``alpha * c**(N-1) * dt`` and rate ``beta``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

__all__ = [
    "IntensityFunction",
    "ModelParams",
    "ArrivalRealization",
    "SystemState",
    "RngStream",
    "shape_param",
    "shape_param_star",
    "segment_shapes",
]


@dataclass(frozen=True)
class IntensityFunction:
    """Constant or piecewise-constant arrival intensity.

    ``rates[i]`` applies on ``[breakpoints[i-1], breakpoints[i])`` with the
    first segment starting at 0 and the last one extending to infinity.
    """

    rates: tuple
    breakpoints: tuple = ()

    def __post_init__(self):
        rates = tuple(float(r) for r in self.rates)
        bps = tuple(float(b) for b in self.breakpoints)
        object.__setattr__(self, "rates", rates)
        object.__setattr__(self, "breakpoints", bps)
        if len(rates) != len(bps) + 1:
            raise ValueError("piecewise intensity needs len(rates) == len(breakpoints) + 1")
        if any(not (r >= 0) or math.isinf(r) for r in rates):
            raise ValueError("intensity rates must be finite and >= 0")
        if any(b <= 0 for b in bps) or any(b2 <= b1 for b1, b2 in zip(bps, bps[1:])):
            raise ValueError("breakpoints must be positive and strictly increasing")

    @classmethod
    def constant(cls, rate: float) -> "IntensityFunction":
        return cls((rate,))

    @classmethod
    def piecewise(cls, rates: Sequence[float], breakpoints: Sequence[float]) -> "IntensityFunction":
        return cls(tuple(rates), tuple(breakpoints))

    @property
    def kind(self) -> str:
        return "constant" if not self.breakpoints else "piecewise-constant"

    @property
    def is_constant(self) -> bool:
        return not self.breakpoints

    @property
    def sup_rate(self) -> float:
        return max(self.rates)

    def _knots(self):
        b = np.array((0.0,) + self.breakpoints)
        r = np.array(self.rates)
        cum = np.concatenate(([0.0], np.cumsum(np.diff(b) * r[:-1])))
        return b, r, cum

    def rate(self, t):
        """lambda(t), vectorised."""
        tv = np.asarray(t, dtype=float)
        idx = np.searchsorted(np.array(self.breakpoints), tv, side="right")
        out = np.array(self.rates)[idx]
        return float(out) if tv.ndim == 0 else out

    def cumulative(self, t):
        """Lambda(t) = integral of lambda over [0, t], vectorised; t must be >= 0."""
        tv = np.asarray(t, dtype=float)
        if np.any(tv < 0):
            raise ValueError("cumulative intensity needs t >= 0")
        if not self.breakpoints:
            out = self.rates[0] * tv
            return float(out) if tv.ndim == 0 else out
        b, r, cum = self._knots()
        idx = np.searchsorted(b, tv, side="right") - 1
        out = cum[idx] + r[idx] * (tv - b[idx])
        return float(out) if tv.ndim == 0 else out

    def inverse_cumulative(self, y):
        """Smallest t with Lambda(t) >= y; ``inf`` when Lambda never reaches y."""
        yv = np.asarray(y, dtype=float)
        if not self.breakpoints and self.rates[0] > 0:
            out = np.maximum(yv, 0.0) / self.rates[0]
            return float(out) if yv.ndim == 0 else out
        b, r, cum = self._knots()
        # segment i holds Lambda values in [cum[i], cum[i+1]]
        idx = np.searchsorted(cum, yv, side="left") - 1
        idx = np.clip(idx, 0, len(b) - 1)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.where(r[idx] > 0, b[idx] + (yv - cum[idx]) / r[idx], np.inf)
        out = np.where(yv <= 0, 0.0, out)
        return float(out) if yv.ndim == 0 else out


@dataclass(frozen=True)
class ModelParams:
    """Parameters ``(lambda(t), alpha, beta, c)`` plus an optional cap on the
    number of simultaneously present defects."""

    intensity: IntensityFunction
    alpha: float
    beta: float
    c: float
    n_cap: Optional[int] = None

    def __post_init__(self):
        if not (self.alpha > 0 and self.beta > 0 and self.c > 0):
            raise ValueError("alpha, beta and c must be positive")
        if self.n_cap is not None and (int(self.n_cap) != self.n_cap or self.n_cap < 1):
            raise ValueError("n_cap must be a positive integer or None")
        if self.c < 1:
            warnings.warn("c < 1: arrivals decelerate the existing defects", stacklevel=3)

    @classmethod
    def hpp(cls, rate: float, alpha: float, beta: float, c: float, n_cap: Optional[int] = None) -> "ModelParams":
        return cls(IntensityFunction.constant(rate), alpha, beta, c, n_cap)

    def growth_shape_rate(self, n: int) -> float:
        """Shape accumulated per time unit by each defect while ``n`` are present."""
        return self.alpha * self.c ** (n - 1) if n > 0 else 0.0


@dataclass(frozen=True)
class ArrivalRealization:
    times: tuple
    horizon: float

    def __post_init__(self):
        times = tuple(float(s) for s in self.times)
        object.__setattr__(self, "times", times)
        if self.horizon <= 0:
            raise ValueError("horizon must be positive")
        if any(s <= 0 for s in times[:1]) or any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("arrival times must be strictly increasing and positive")
        if times and times[-1] > self.horizon:
            raise ValueError("arrival after the horizon")

    def __len__(self) -> int:
        return len(self.times)


@dataclass(frozen=True)
class SystemState:
    """Degradation levels at system age ``t``; one level per arrival, in order.

    ``arrival_times`` may be left empty for a state whose history is not
    tracked (e.g. an initial condition for the degraded-system survival).
    """

    levels: tuple = ()
    t: float = 0.0
    arrival_times: tuple = field(default=())

    def __post_init__(self):
        levels = tuple(float(v) for v in self.levels)
        object.__setattr__(self, "levels", levels)
        object.__setattr__(self, "arrival_times", tuple(float(s) for s in self.arrival_times))
        if any(not (v >= 0) for v in levels):
            raise ValueError("degradation levels must be >= 0")
        if self.arrival_times and len(self.arrival_times) != len(levels):
            raise ValueError("one arrival time per level")

    @classmethod
    def new(cls) -> "SystemState":
        return cls()

    @property
    def n(self) -> int:
        return len(self.levels)

    @property
    def max_level(self) -> float:
        return max(self.levels) if self.levels else 0.0


class RngStream:
    """Independent random stream identified by ``(master_seed, stream_index)``.

    Backed by PCG64 seeded through ``SeedSequence`` with the index in the
    spawn key, so distinct pairs give statistically independent streams and
    draws are a pure function of the pair and the number of draws made.
    """

    def __init__(self, master_seed: int, stream_index: int = 0, _path: tuple = ()):
        if master_seed < 0 or stream_index < 0:
            raise ValueError("seed and stream index must be nonnegative")
        self.master_seed = int(master_seed)
        self.stream_index = int(stream_index)
        self._path = tuple(_path)
        ss = np.random.SeedSequence(self.master_seed, spawn_key=(self.stream_index,) + self._path)
        self.generator = np.random.Generator(np.random.PCG64(ss))

    def substream(self, i: int) -> "RngStream":
        """Child stream; independent of the parent and of other children."""
        return RngStream(self.master_seed, self.stream_index, self._path + (int(i),))

    def __repr__(self) -> str:
        return f"RngStream({self.master_seed}, {self.stream_index}, path={self._path})"


def _as_times(arrivals) -> tuple:
    return tuple(getattr(arrivals, "times", arrivals))


def shape_param(j: int, n: int, t: float, arrivals, params: ModelParams) -> float:
    """Shape of the gamma law of ``W_j(t)`` given ``N(t) = n`` and the arrivals.

    ``sum_{z=j}^{n-1} alpha c^(z-1) (s_{z+1} - s_z) + alpha c^(n-1) (t - s_n)``.
    """
    s = _as_times(arrivals)
    if not (1 <= j <= n) or len(s) < n:
        raise IndexError(f"need 1 <= j <= n <= len(arrivals); got j={j}, n={n}")
    if t < s[n - 1]:
        raise ValueError("t precedes the n-th arrival")
    a, c = params.alpha, params.c
    total = a * c ** (n - 1) * (t - s[n - 1])
    for z in range(j, n):
        total += a * c ** (z - 1) * (s[z] - s[z - 1])
    return total


def shape_param_star(slot: int, n: int, p: int, t: float, new_arrivals, params: ModelParams) -> float:
    """Shapes for a system holding ``n`` defects at time 0 that receives ``p`` more.

    Slot 0 is any pre-existing defect; slot ``j`` in ``1..p`` is the j-th
    newcomer. ``new_arrivals`` lists ``s_{n+1} < ... < s_{n+p} <= t``.
    """
    s = _as_times(new_arrivals)
    if len(s) != p or not (0 <= slot <= p):
        raise IndexError("slot must lie in 0..p and len(new_arrivals) == p")
    if any(b <= a for a, b in zip(s, s[1:])) or (s and (s[0] <= 0 or s[-1] > t)):
        raise ValueError("new arrivals must satisfy 0 < s_{n+1} < ... < s_{n+p} <= t")
    return float(segment_shapes(np.array(s, dtype=float), t, params.alpha, params.c, n)[slot])


def segment_shapes(s: np.ndarray, t, alpha: float, c: float, n0: int) -> np.ndarray:
    """Vectorised shape algebra over arrays of ordered arrival times.

    ``s`` has shape ``(..., p)`` with new arrivals in (0, t]. Returns shape
    ``(..., p + 1)``: entry 0 is the shape gained on ``[0, t]`` by a defect
    present from time 0 (``n0`` defects initially), entry ``j`` the shape of
    the j-th newcomer. With ``n0 == 0`` entry ``j`` equals ``alpha_{j,p,t}``.
    """
    s = np.asarray(s, dtype=float)
    t = np.asarray(t, dtype=float)
    p = s.shape[-1]
    tt = np.broadcast_to(t[..., None], s.shape[:-1] + (1,)) if t.ndim else np.full(s.shape[:-1] + (1,), float(t))
    left = np.concatenate((np.zeros(s.shape[:-1] + (1,)), s), axis=-1)
    right = np.concatenate((s, tt), axis=-1)
    expo = np.arange(p + 1) + (n0 - 1)
    contrib = alpha * np.power(c, expo) * (right - left)
    return np.flip(np.cumsum(np.flip(contrib, -1), -1), -1)
