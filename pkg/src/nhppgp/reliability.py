"""Analytic reliability layer: expected defect levels, survival of the hitting
time of a level, and the survival bounds for accelerating dependence.

Series over the number of arrivals are truncated by the Poisson tail: every
term of the survival series is bounded by the probability of its arrival
count, because each gamma CDF factor is at most one.

Ordered arrival integrals are taken in cumulative-intensity coordinates
``y = Lambda(s)``, where the arrival density is flat. Terms of dimension at
most three use nested Gauss-Legendre rules on the simplex; higher terms use
scrambled Sobol points mapped onto the simplex through normalised
exponential spacings (randomised quasi-Monte Carlo).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, Optional, Sequence, Tuple

import numpy as np
from scipy import integrate
from scipy.stats import qmc

from .arrivals import PoissonCountDistribution
from .model import ModelParams, SystemState, segment_shapes
from .special import gamma_cdf, gamma_sf, log_gamma

__all__ = [
    "TruncationConfig",
    "SurvivalResult",
    "TruncationError",
    "int_sn_exp",
    "expected_level_hpp",
    "expected_level_general",
    "survival_new",
    "survival_degraded",
    "survival_bounds",
    "GammaCdfTable",
]

GL_MAX_DIM = 3
PRODUCT_FLOOR = 1e-300


class TruncationError(ArithmeticError):
    """A series could not be truncated within the configured ceiling."""


@dataclass(frozen=True)
class TruncationConfig:
    n_max: int = 200
    eps_tail: float = 1e-8
    quad_nodes: int = 32
    simplex_mc_samples: int = 100_000
    seed: int = 0

    def __post_init__(self):
        if self.n_max < 1:
            raise ValueError("n_max must be >= 1")
        if not 0 < self.eps_tail < 1:
            raise ValueError("eps_tail must lie in (0, 1)")
        if self.quad_nodes < 4:
            raise ValueError("quad_nodes must be >= 4")
        if self.simplex_mc_samples < 2:
            raise ValueError("simplex_mc_samples must be >= 2")


@dataclass(frozen=True)
class SurvivalResult:
    value: float
    truncation_error_bound: float
    terms_used: int


# expectations


def int_sn_exp(n: int, lam: float, t: float) -> float:
    """``int_0^t s^n exp(-lam s) ds = n!/lam^(n+1) P(Poisson(lam t) > n)``."""
    if n < 1 or not lam > 0 or not t > 0:
        raise ValueError("need n >= 1, lam > 0, t > 0")
    log_scale = float(log_gamma(n + 1.0)) - (n + 1) * math.log(lam)
    return math.exp(log_scale) * gamma_cdf(n + 1.0, 1.0, lam * t)


def _require_hpp(params: ModelParams) -> float:
    if not params.intensity.is_constant:
        raise ValueError("closed form needs a constant intensity")
    return float(params.intensity.rates[0])


def _level_terms(params: ModelParams, j: int, t: float, cfg: TruncationConfig, term) -> float:
    """Sum ``term(n)`` for n >= j until the geometric tail bound drops below eps_tail.

    For ``n + 1 >= Lambda(t)`` the count probability is increasing in time,
    so the n-th term is at most ``(alpha c^(n-1)/beta) t P(N(t)=n)`` and
    successive bounds shrink by ``c Lambda / (n + 1)``.
    """
    lam_t = float(params.intensity.cumulative(t))
    law = PoissonCountDistribution(t, lam_t)
    c = params.c
    total = []
    n = j
    while True:
        total.append(term(n))
        ratio = c * lam_t / (n + 2)
        if n + 1 >= lam_t and ratio < 1:
            first = params.alpha * c ** n / params.beta * t * law.pmf(n + 1)
            if first / (1 - ratio) < cfg.eps_tail:
                return math.fsum(total)
        n += 1
        if n > cfg.n_max:
            raise TruncationError(
                f"level series not truncated by n_max={cfg.n_max} (c*Lambda(t)={c * lam_t:.4g})")


def expected_level_hpp(params: ModelParams, j: int, t: float, cfg: Optional[TruncationConfig] = None) -> float:
    """``E[W_j(t)] = sum_{n>=j} alpha c^(n-1) / (lam beta) P(N(t) > n)`` for a constant rate."""
    cfg = cfg or TruncationConfig()
    lam = _require_hpp(params)
    if j < 1:
        raise ValueError("j must be >= 1")
    if t <= 0 or lam == 0:
        return 0.0
    law = PoissonCountDistribution(t, lam * t)
    coef = params.alpha / (lam * params.beta)

    def term(n):
        return coef * params.c ** (n - 1) * law.sf(n)

    return _level_terms(params, j, t, cfg, term)


def expected_level_general(params: ModelParams, j: int, t: float, cfg: Optional[TruncationConfig] = None) -> float:
    """``E[W_j(t)] = sum_{n>=j} (alpha c^(n-1)/beta) int_0^t P(N(s)=n) ds``.

    Each time integral is adaptive quadrature, split at the intensity breakpoints.
    """
    cfg = cfg or TruncationConfig()
    if j < 1:
        raise ValueError("j must be >= 1")
    if t <= 0:
        return 0.0
    inten = params.intensity
    cuts = [0.0] + [b for b in inten.breakpoints if 0 < b < t] + [t]

    def pmf_at(s, n):
        lam_s = float(inten.cumulative(s))
        if lam_s == 0:
            return 0.0
        return math.exp(-lam_s + n * math.log(lam_s) - float(log_gamma(n + 1.0)))

    def term(n):
        parts = []
        for a, b in zip(cuts[:-1], cuts[1:]):
            val, err = integrate.quad(pmf_at, a, b, args=(n,), epsabs=1e-14, epsrel=1e-12, limit=200)
            parts.append(val)
        return params.alpha * params.c ** (n - 1) / params.beta * math.fsum(parts)

    return _level_terms(params, j, t, cfg, term)


# gamma CDF in the shape argument


class GammaCdfTable:
    """``a -> P(a, rate * x)`` at fixed ``rate * x``, piecewise Chebyshev in ``a``.

    The regularised incomplete gamma function is entire in its shape, so
    degree-``deg`` pieces of width ``width`` reproduce the direct evaluation
    to rounding. Beyond ``a_cut`` the value is below 1e-300 and returned as 0.
    """

    def __init__(self, rate: float, x: float, width: float = 0.5, deg: int = 12):
        if not x > 0:
            raise ValueError("level must be positive")
        self.rate, self.x = rate, x
        y = rate * x
        a_cut = 1.0
        while gamma_cdf(a_cut, 1.0, y) > 1e-300:
            a_cut *= 2.0
        self.a_cut = a_cut
        self.width = width
        n_pieces = int(math.ceil(a_cut / width))
        k = np.arange(deg + 1)
        u = np.cos(np.pi * (k + 0.5) / (deg + 1))  # Chebyshev nodes on [-1, 1]
        left = np.arange(n_pieces) * width
        nodes = left[:, None] + 0.5 * width * (u[None, :] + 1.0)
        vals = gamma_cdf(nodes, 1.0, y)
        # discrete Chebyshev transform per piece
        T = np.cos(np.outer(k, np.arccos(u)))
        coef = (2.0 / (deg + 1)) * vals @ T.T
        coef[:, 0] *= 0.5
        self.coef = np.ascontiguousarray(coef.T)  # (deg + 1, pieces)
        self.deg = deg

    def __call__(self, a) -> np.ndarray:
        a = np.asarray(a, dtype=float)
        flat = a.ravel()
        out = np.zeros(flat.shape)
        inside = flat < self.a_cut
        av = flat[inside]
        idx = np.minimum((av / self.width).astype(int), self.coef.shape[1] - 1)
        u2 = 2.0 * (2.0 * (av - idx * self.width) / self.width - 1.0)
        # Clenshaw recurrence
        b1 = np.zeros(av.shape)
        b2 = np.zeros(av.shape)
        for m in range(self.deg, 0, -1):
            b1, b2 = self.coef[m][idx] + u2 * b1 - b2, b1
        out[inside] = self.coef[0][idx] + 0.5 * u2 * b1 - b2
        np.clip(out, 0.0, 1.0, out=out)
        return out.reshape(a.shape)


# ordered-simplex integration in Lambda coordinates


def _simplex_gl(p: int, Y: float, nodes: int) -> Tuple[np.ndarray, np.ndarray]:
    """Points ``0 < y_1 < ... < y_p < Y`` and weights of a collapsed tensor GL rule."""
    x, w = np.polynomial.legendre.leggauss(nodes)
    v = 0.5 * (x + 1.0)
    wv = 0.5 * w
    grids = np.meshgrid(*([v] * p), indexing="ij")
    wgrids = np.meshgrid(*([wv] * p), indexing="ij")
    V = np.stack([g.ravel() for g in grids], axis=1)
    W = np.prod(np.stack([g.ravel() for g in wgrids], axis=1), axis=1)
    y = np.empty_like(V)
    y[:, p - 1] = Y * V[:, p - 1]
    jac = np.full(V.shape[0], Y)
    for k in range(p - 2, -1, -1):
        jac = jac * y[:, k + 1]
        y[:, k] = y[:, k + 1] * V[:, k]
    return y, W * jac


def _simplex_rqmc(p: int, Y: float, samples: int, seed: int) -> Tuple[np.ndarray, np.ndarray]:
    """Scrambled Sobol points mapped to the ordered simplex; equal weights summing to ``Y^p/p!``."""
    m = int(math.ceil(math.log2(samples)))
    u = qmc.Sobol(d=p + 1, scramble=True, seed=seed).random_base2(m)
    e = -np.log1p(-u)  # unit exponentials
    cum = np.cumsum(e, axis=1)
    y = Y * cum[:, :p] / cum[:, p:]
    vol = math.exp(p * math.log(Y) - math.lgamma(p + 1.0)) if Y > 0 else 0.0
    return y, np.full(u.shape[0], vol / u.shape[0])


class _SurvivalTerms:
    """Series terms for survival from a state with existing levels ``x``."""

    def __init__(self, params: ModelParams, x: SystemState, z: float, t: float, cfg: TruncationConfig):
        self.params, self.z, self.t, self.cfg = params, z, t, cfg
        self.n = x.n
        self.t0 = x.t
        inten = params.intensity
        self.lam0 = float(inten.cumulative(x.t))
        self.Y = float(inten.cumulative(x.t + t)) - self.lam0
        self._tables: Dict[float, GammaCdfTable] = {}
        self.new_table = self._table(z)
        self.old_tables = [self._table(z - w) for w in x.levels]

    def _table(self, level: float) -> GammaCdfTable:
        if level not in self._tables:
            self._tables[level] = GammaCdfTable(self.params.beta, level)
        return self._tables[level]

    def _times(self, y: np.ndarray) -> np.ndarray:
        s = self.params.intensity.inverse_cumulative(self.lam0 + y) - self.t0
        return np.clip(s, 0.0, self.t)

    def integrand(self, y: np.ndarray, capped: bool) -> np.ndarray:
        p = y.shape[1]
        s = self._times(y)
        shapes = segment_shapes(s, self.t, self.params.alpha, self.params.c, self.n)
        val = np.ones(y.shape[0])
        for tab in self.old_tables:
            val *= tab(shapes[:, 0])
        # largest shapes first; rows whose product is already negligible are skipped
        live = np.arange(y.shape[0])
        for j in range(1, p + 1):
            live = live[val[live] > PRODUCT_FLOOR]
            if not live.size:
                break
            val[live] *= self.new_table(shapes[live, j])
        if capped and p:
            # arrivals after the last admitted one are suppressed
            val *= np.exp(self.Y - y[:, -1])
        return val

    def term(self, p: int, capped: bool) -> float:
        """Integral of the p-arrival term without the ``exp(-Y)`` prefactor."""
        if p == 0:
            base = float(self.integrand(np.zeros((1, 0)), False)[0])
            return base * math.exp(self.Y) if capped else base
        if self.Y == 0:
            return 0.0
        if p <= GL_MAX_DIM:
            y, w = _simplex_gl(p, self.Y, self.cfg.quad_nodes)
        else:
            y, w = _simplex_rqmc(p, self.Y, self.cfg.simplex_mc_samples, self.cfg.seed + p)
        return float(w @ self.integrand(y, capped))


def _check_levels(x: SystemState, z: float):
    if not z > 0:
        raise ValueError("z must be positive")
    if x.n and not x.max_level < z:
        raise ValueError("initial levels must lie below z")


def survival_degraded(params: ModelParams, x: SystemState, z: float, t: float,
                      cfg: Optional[TruncationConfig] = None) -> SurvivalResult:
    """``P(max_j W_j(t) < z | W(0) = x)`` with ``x.t`` as the current epoch.

    The prefactor is ``exp(-(Lambda(x.t + t) - Lambda(x.t)))``, the probability
    of no further arrival. With ``n_cap`` set, arrivals stop once the count
    reaches the cap, and the last term weights by the time of the last
    admitted arrival instead.
    """
    cfg = cfg or TruncationConfig()
    _check_levels(x, z)
    if t < 0:
        raise ValueError("t must be >= 0")
    if t == 0:
        return SurvivalResult(1.0, 0.0, 0)
    terms = _SurvivalTerms(params, x, z, t, cfg)
    room = None if params.n_cap is None else max(params.n_cap - x.n, 0)
    law = PoissonCountDistribution(t, terms.Y)
    p_need = law.quantile_above(cfg.eps_tail) if terms.Y > 0 else 0
    if room is not None and room <= p_need:
        p_max, bound = room, 0.0
    else:
        p_max = min(p_need, cfg.n_max)
        bound = float(law.sf(p_max)) if terms.Y > 0 else 0.0
    parts = [terms.term(p, room is not None and p == room) for p in range(p_max + 1)]
    value = math.exp(-terms.Y) * math.fsum(parts)
    return SurvivalResult(min(max(value, 0.0), 1.0), bound, p_max + 1)


def survival_new(params: ModelParams, z: float, t: float, cfg: Optional[TruncationConfig] = None) -> SurvivalResult:
    """``P(sigma_z > t)`` for a new system: ``exp(-Lambda(t)) (1 + sum_n H_n)``."""
    return survival_degraded(params, SystemState.new(), z, t, cfg)


def survival_bounds(params: ModelParams, z: float, t: float,
                    cfg: Optional[TruncationConfig] = None) -> Tuple[float, float]:
    """Lower and upper bounds on ``survival_new`` for ``c >= 1``.

    Upper: ``exp(-int_0^t lam(u) Fbar_{alpha (t-u)}(z) du)``, the survival
    without acceleration. Lower: every i-th defect grows with the largest
    shape ``c^(i-1) alpha (t - s)``.
    """
    cfg = cfg or TruncationConfig()
    if params.c < 1:
        raise ValueError("survival bounds need c >= 1")
    if params.n_cap is not None:
        raise ValueError("survival bounds assume unbounded arrivals")
    if not z > 0:
        raise ValueError("z must be positive")
    if t < 0:
        raise ValueError("t must be >= 0")
    if t == 0:
        return 1.0, 1.0
    inten = params.intensity
    cuts = [0.0] + [b for b in inten.breakpoints if 0 < b < t] + [t]
    y = params.beta * z

    def piecewise(f):
        return math.fsum(
            integrate.quad(f, a, b, epsabs=1e-13, epsrel=1e-12, limit=200)[0]
            for a, b in zip(cuts[:-1], cuts[1:])
        )

    def rate(s):
        return float(inten.rate(s))

    def shape(s, scale):
        return max(scale * params.alpha * (t - s), 0.0)

    upper_exp = piecewise(lambda u: rate(u) * gamma_sf(max(shape(u, 1.0), 1e-300), 1.0, y))
    upper = math.exp(-upper_exp)
    lam_t = float(inten.cumulative(t))
    law = PoissonCountDistribution(t, lam_t)
    i_max = min(law.quantile_above(cfg.eps_tail), cfg.n_max)
    terms = [1.0]
    for i in range(1, i_max + 1):
        a_i = piecewise(lambda s: rate(s) * gamma_cdf(max(shape(s, params.c ** (i - 1)), 1e-300), 1.0, y))
        if a_i <= 0:
            break
        terms.append(math.exp(i * math.log(a_i) - math.lgamma(i + 1.0)))
    lower = math.exp(-lam_t) * math.fsum(terms)
    return min(lower, 1.0), min(upper, 1.0)
