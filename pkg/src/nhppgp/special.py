"""Gamma-family special functions and gamma variate generation.

Everything here is vectorised over numpy arrays and accepts scalars. The
functions are implemented locally (no scipy at runtime) so that results are
reproducible across platforms at the documented tolerances:

* ``log_gamma``: relative error below 1e-13 on [1e-6, 1e6].
* ``gamma_cdf``: absolute error below 1e-12 (series for ``rate*x < shape+1``,
  Lentz continued fraction otherwise).
"""

from __future__ import annotations

import math

import numpy as np

__all__ = [
    "SHAPE_FLOOR",
    "clamp_counter",
    "log_gamma",
    "gamma_cdf",
    "gamma_sf",
    "gamma_pdf",
    "sample_gamma",
    "sample_beta",
]

#: Shapes below this value are clamped before evaluation.
SHAPE_FLOOR = 1e-12

_EULER = 0.5772156649015329
# zeta(2), ..., zeta(30)
_ZETA = np.array([
    1.6449340668482264, 1.2020569031595942, 1.0823232337111381, 1.03692775514337,
    1.0173430619844492, 1.008349277381923, 1.0040773561979444, 1.0020083928260821,
    1.000994575127818, 1.0004941886041194, 1.000246086553308, 1.0001227133475785,
    1.0000612481350588, 1.000030588236307, 1.0000152822594086, 1.0000076371976379,
    1.000003817293265, 1.0000019082127165, 1.0000009539620338, 1.0000004769329869,
    1.0000002384505027, 1.000000119219926, 1.000000059608189, 1.0000000298035034,
    1.0000000149015549, 1.0000000074507118, 1.000000003725334, 1.0000000018626598,
    1.0000000009313275,
])
_LNG1P_COEF = np.concatenate(([0.0, -_EULER], ((-1.0) ** np.arange(2, 31)) * _ZETA / np.arange(2, 31)))

_LANCZOS_G = 7.0
_LANCZOS = (
    0.99999999999980993,
    676.5203681218851,
    -1259.1392167224028,
    771.32342877765313,
    -176.61502916214059,
    12.507343278686905,
    -0.13857109526572012,
    9.9843695780195716e-6,
    1.5056327351493116e-7,
)
_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)
_TINY = 1e-300
_EPS = 1e-16


class _ClampCounter:
    """Counts how many shape values were raised to ``SHAPE_FLOOR``."""

    def __init__(self) -> None:
        self.count = 0

    def reset(self) -> None:
        self.count = 0


clamp_counter = _ClampCounter()


def _clamp_shape(a: np.ndarray) -> np.ndarray:
    low = (a > 0) & (a < SHAPE_FLOOR)
    n = int(np.count_nonzero(low))
    if n:
        clamp_counter.count += n
        a = np.where(low, SHAPE_FLOOR, a)
    return a


def _lngamma_1p_series(eps: np.ndarray) -> np.ndarray:
    # ln Gamma(1 + eps) for |eps| <= 0.2, Horner on the zeta series
    out = np.zeros_like(eps)
    for c in _LNG1P_COEF[:0:-1]:
        out = (out + c) * eps
    return out


def _lngamma_lanczos(z: np.ndarray) -> np.ndarray:
    # ln Gamma(z) for z >= 0.5
    zm = z - 1.0
    acc = np.full_like(z, _LANCZOS[0])
    for i, c in enumerate(_LANCZOS[1:], start=1):
        acc += c / (zm + i)
    t = zm + _LANCZOS_G + 0.5
    return _HALF_LOG_2PI + (zm + 0.5) * np.log(t) - t + np.log(acc)


def log_gamma(a):
    """Natural log of the gamma function for ``a > 0``."""
    arr = np.asarray(a, dtype=float)
    if np.any(~(arr > 0)):
        raise ValueError("log_gamma is defined for a > 0 only")
    x = np.atleast_1d(arr).astype(float)
    out = np.empty_like(x)

    small = x < 0.5
    shifted = np.where(small, x + 1.0, x)  # lnG(x) = lnG(x+1) - ln x
    near1 = np.abs(shifted - 1.0) <= 0.2
    near2 = np.abs(shifted - 2.0) <= 0.2
    other = ~(near1 | near2)
    if near1.any():
        out[near1] = _lngamma_1p_series(shifted[near1] - 1.0)
    if near2.any():
        e = shifted[near2] - 2.0
        out[near2] = np.log1p(e) + _lngamma_1p_series(e)
    if other.any():
        out[other] = _lngamma_lanczos(shifted[other])
    if small.any():
        out[small] -= np.log(x[small])
    return out[0] if arr.ndim == 0 else out.reshape(arr.shape)


def _max_iter(a: np.ndarray) -> int:
    return int(200 + 20 * math.sqrt(float(np.max(a, initial=1.0))))


_STIRLING = (1 / 12, -1 / 360, 1 / 1260, -1 / 1680, 1 / 1188, -691 / 360360)
_LARGE_SHAPE = 10.0


def _log1pmx_neg(t: np.ndarray) -> np.ndarray:
    """``t - log1p(t)`` without cancellation for small ``|t|``."""
    with np.errstate(divide="ignore"):  # t = -1 (x = 0) gives +inf, the right limit
        out = t - np.log1p(t)
    small = np.abs(t) < 0.5
    if small.any():
        ts = t[small]
        acc = np.zeros_like(ts)
        power = ts * ts
        for k in range(2, 60):
            acc += (power / k) if k % 2 == 0 else -(power / k)
            power = power * ts
        out[small] = acc
    return out


def _log_prefactor(a: np.ndarray, x: np.ndarray) -> np.ndarray:
    """``a ln x - x - ln Gamma(a)``; for large shapes the Stirling form avoids
    cancelling terms of size ``a ln a``."""
    out = np.empty_like(a)
    big = a >= _LARGE_SHAPE
    lo = ~big
    if lo.any():
        out[lo] = a[lo] * np.log(x[lo]) - x[lo] - log_gamma(a[lo])
    if big.any():
        ab, xb = a[big], x[big]
        inv = 1.0 / ab
        inv2 = inv * inv
        delta = np.zeros_like(ab)
        for coef in reversed(_STIRLING):
            delta = delta * inv2 + coef
        delta *= inv
        t = (xb - ab) / ab
        out[big] = -ab * _log1pmx_neg(t) + 0.5 * np.log(ab) - _HALF_LOG_2PI - delta
    return out


def _series_p(a: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Lower regularized gamma by the power series, x < a + 1."""
    term = 1.0 / a
    total = term.copy()
    ap = a.copy()
    active = np.ones(a.shape, dtype=bool)
    idx = np.arange(a.size)
    for _ in range(_max_iter(a)):
        ap[idx] += 1.0
        term[idx] *= x[idx] / ap[idx]
        total[idx] += term[idx]
        done = np.abs(term[idx]) < np.abs(total[idx]) * _EPS
        if done.all():
            break
        idx = idx[~done]
    return total * np.exp(_log_prefactor(a, x))


def _cf_q(a: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Upper regularized gamma by modified Lentz continued fraction, x >= a + 1."""
    b = x + 1.0 - a
    c = np.full_like(a, 1.0 / _TINY)
    d = 1.0 / b
    h = d.copy()
    idx = np.arange(a.size)
    for i in range(1, _max_iter(a) + 1):
        an = -i * (i - a[idx])
        b[idx] += 2.0
        dd = an * d[idx] + b[idx]
        dd = np.where(np.abs(dd) < _TINY, _TINY, dd)
        cc = b[idx] + an / c[idx]
        cc = np.where(np.abs(cc) < _TINY, _TINY, cc)
        dd = 1.0 / dd
        delta = dd * cc
        d[idx] = dd
        c[idx] = cc
        h[idx] *= delta
        done = np.abs(delta - 1.0) < _EPS
        if done.all():
            break
        idx = idx[~done]
    return np.exp(_log_prefactor(a, x)) * h


def _check_params(shape, rate):
    a = np.asarray(shape, dtype=float)
    b = np.asarray(rate, dtype=float)
    if np.any(~(a > 0)) or np.any(~(b > 0)):
        raise ValueError("gamma shape and rate must be positive")
    return a, b


def _regularized(shape, rate, x, upper: bool):
    a, b = _check_params(shape, rate)
    xv = np.asarray(x, dtype=float)
    a_b, b_b, x_b = np.broadcast_arrays(a, b, xv)
    scalar = a_b.ndim == 0
    a_f = _clamp_shape(np.atleast_1d(a_b).astype(float).ravel())
    y = (np.atleast_1d(b_b) * np.atleast_1d(x_b)).astype(float).ravel()
    out = np.full(a_f.shape, 1.0 if upper else 0.0)
    pos = y > 0
    inf = np.isinf(y)
    out[inf] = 0.0 if upper else 1.0
    pos &= ~inf
    ser = pos & (y < a_f + 1.0)
    cf = pos & ~ser
    if ser.any():
        p = _series_p(a_f[ser], y[ser])
        out[ser] = 1.0 - p if upper else p
    if cf.any():
        q = _cf_q(a_f[cf], y[cf])
        out[cf] = q if upper else 1.0 - q
    np.clip(out, 0.0, 1.0, out=out)
    return float(out[0]) if scalar else out.reshape(a_b.shape)


def gamma_cdf(shape, rate, x):
    """P(X <= x) for X ~ Gamma(shape, rate); zero for ``x <= 0``."""
    return _regularized(shape, rate, x, upper=False)


def gamma_sf(shape, rate, x):
    """P(X > x); computed directly in the upper tail for accuracy."""
    return _regularized(shape, rate, x, upper=True)


def gamma_pdf(shape, rate, x):
    """Gamma density with mean ``shape / rate``; zero for ``x < 0``."""
    a, b = _check_params(shape, rate)
    xv = np.asarray(x, dtype=float)
    a_b, b_b, x_b = np.broadcast_arrays(a, b, xv)
    scalar = a_b.ndim == 0
    a_f = _clamp_shape(np.atleast_1d(a_b).astype(float).ravel())
    b_f = np.atleast_1d(b_b).astype(float).ravel()
    x_f = np.atleast_1d(x_b).astype(float).ravel()
    out = np.zeros(a_f.shape)
    pos = x_f > 0
    if pos.any():
        ap, bp, xp = a_f[pos], b_f[pos], x_f[pos]
        out[pos] = np.exp(ap * np.log(bp) + (ap - 1.0) * np.log(xp) - bp * xp - log_gamma(ap))
    at0 = x_f == 0
    if at0.any():
        a0 = a_f[at0]
        out[at0] = np.where(a0 < 1, np.inf, np.where(a0 == 1, b_f[at0], 0.0))
    return float(out[0]) if scalar else out.reshape(a_b.shape)


def _standard_gamma_mt(a: np.ndarray, gen: np.random.Generator) -> np.ndarray:
    """Marsaglia-Tsang squeeze/reject sampler for shape >= 1."""
    d = a - 1.0 / 3.0
    c = 1.0 / np.sqrt(9.0 * d)
    out = np.empty_like(a)
    pending = np.arange(a.size)
    while pending.size:
        dp, cp = d[pending], c[pending]
        z = gen.standard_normal(pending.size)
        v = 1.0 + cp * z
        ok = v > 0
        v = np.where(ok, v, 1.0) ** 3
        u = gen.random(pending.size)
        z2 = z * z
        accept = ok & (
            (u < 1.0 - 0.0331 * z2 * z2)
            | (np.log(u) < 0.5 * z2 + dp * (1.0 - v + np.log(v)))
        )
        out[pending[accept]] = dp[accept] * v[accept]
        pending = pending[~accept]
    return out


def sample_gamma(shape, rate, rng, size=None):
    """Exact gamma variates with mean ``shape / rate``.

    ``rng`` is an :class:`~nhppgp.model.RngStream` or a numpy Generator.
    Shapes below one use the boost ``G(a+1) * U**(1/a)``, done in log space.
    A shape of exactly zero yields zero (empty increment).
    """
    gen = getattr(rng, "generator", rng)
    a = np.asarray(shape, dtype=float)
    b = np.asarray(rate, dtype=float)
    if np.any(a < 0) or np.any(~(b > 0)):
        raise ValueError("gamma shape must be >= 0 and rate > 0")
    if size is not None:
        a = np.broadcast_to(a, size)
        b = np.broadcast_to(b, size)
    a_b, b_b = np.broadcast_arrays(a, b)
    scalar = a_b.ndim == 0
    af = np.atleast_1d(a_b).astype(float).ravel()
    bf = np.atleast_1d(b_b).astype(float).ravel()
    out = np.zeros(af.shape)
    pos = af > 0
    if pos.any():
        ap = af[pos]
        small = ap < 1.0
        boosted = np.where(small, ap + 1.0, ap)
        g = _standard_gamma_mt(boosted, gen)
        if small.any():
            u = gen.random(int(small.sum()))
            logx = np.log(g[small]) + np.log(u) / ap[small]
            g[small] = np.exp(logx)
        out[pos] = g / bf[pos]
    return float(out[0]) if scalar else out.reshape(a_b.shape)


def sample_beta(a, b, rng):
    """Beta(a, b) variates from two gamma draws; a or b equal to zero is allowed.

    With ``a == 0`` the result is 0, with ``b == 0`` it is 1 (degenerate
    splits of a gamma bridge where one side carries no shape).
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    ga = sample_gamma(a, 1.0, rng)
    gb = sample_gamma(b, 1.0, rng)
    tot = ga + gb
    with np.errstate(invalid="ignore", divide="ignore"):
        frac = np.where(tot > 0, ga / np.where(tot > 0, tot, 1.0), np.where(b == 0, 1.0, 0.0))
    return frac
