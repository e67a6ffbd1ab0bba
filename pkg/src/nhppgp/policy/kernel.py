"""Analytic one-step transition probabilities of the post-inspection chain.

Only small cases are covered (existing plus new defects at most two, constant
rate); the routine exists to cross-check the simulated chain. Integrals run
over arrival times with adaptive quadrature, independently of the survival
series in :mod:`nhppgp.reliability`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Tuple

from scipy import integrate

from ..model import ModelParams, SystemState
from ..special import gamma_cdf
from .types import PolicyParams, next_gap

__all__ = ["Region", "kernel_oracle", "MAX_KERNEL_DEFECTS"]

MAX_KERNEL_DEFECTS = 2


@dataclass(frozen=True)
class Region:
    """Set of next post-inspection outcomes.

    ``kind`` is ``"empty"`` (inspection finds no defect), ``"replacement"``
    (preventive or corrective, state reset to new), ``"atom"`` (either of
    those, i.e. the chain's zero state) or ``"box"``: the system continues
    with exactly ``len(lower)`` defects whose levels, in arrival order, lie
    in ``[lower_i, upper_i)``.
    """

    kind: str
    lower: Tuple[float, ...] = ()
    upper: Tuple[float, ...] = ()

    def __post_init__(self):
        if self.kind not in ("empty", "replacement", "atom", "box"):
            raise ValueError(f"unknown region kind {self.kind!r}")
        if len(self.lower) != len(self.upper):
            raise ValueError("box bounds must have equal length")
        if self.kind == "box" and (not self.lower or any(a > b for a, b in zip(self.lower, self.upper))):
            raise ValueError("box needs lower <= upper in every coordinate")

    @classmethod
    def box(cls, lower, upper) -> "Region":
        return cls("box", tuple(float(v) for v in lower), tuple(float(v) for v in upper))

    def contains(self, levels) -> bool:
        """Membership of a continue-state with the given levels."""
        if self.kind != "box":
            return False
        return len(levels) == len(self.lower) and all(a <= w < b for w, a, b in zip(levels, self.lower, self.upper))


def _interval_prob(shape: float, beta: float, lo: float, hi: float) -> float:
    """P(lo <= G < hi) for G ~ Gamma(shape, beta); shape 0 puts all mass at 0."""
    if shape <= 0:
        return 1.0 if lo <= 0 < hi else 0.0
    return gamma_cdf(shape, beta, hi) - gamma_cdf(shape, beta, lo)


def _quad(f, a, b) -> float:
    return integrate.quad(f, a, b, epsabs=1e-13, epsrel=1e-11, limit=200)[0]


def kernel_oracle(x: SystemState, region: Region, params: ModelParams, policy: PolicyParams, cfg=None) -> float:
    """Probability that the next post-inspection state from ``x`` falls in ``region``.

    Replacement mass comes from the survival of level ``M`` over the gap;
    box masses integrate the gamma increments over the arrival epochs.
    ``cfg`` is passed to the survival evaluation.
    """
    if not params.intensity.is_constant:
        raise NotImplementedError("kernel oracle needs a constant intensity")
    m = next_gap(x, policy)
    lam = float(params.intensity.rates[0])
    if region.kind in ("replacement", "atom"):
        from ..reliability import survival_degraded

        if policy.M > 0:
            keep = survival_degraded(params, x, policy.M, m, cfg).value
        else:
            keep = math.exp(-lam * m) if x.n == 0 else 0.0
        repl = 1.0 - keep
        if region.kind == "replacement":
            return repl
        return repl + kernel_oracle(x, Region("empty"), params, policy, cfg)
    if region.kind == "empty":
        # a pre-existing defect never disappears without replacement
        return 0.0 if x.n else math.exp(-lam * m)
    n_new = len(region.lower) - x.n
    if n_new < 0:
        return 0.0
    if x.n + n_new > MAX_KERNEL_DEFECTS:
        raise NotImplementedError("kernel oracle covers at most two defects in total")
    if params.n_cap is not None and x.n + n_new > params.n_cap:
        return 0.0
    lo = [max(a, 0.0) for a in region.lower]
    hi = [min(b, policy.M) for b in region.upper]
    if any(a >= b for a, b in zip(lo, hi)):
        return 0.0
    capped = params.n_cap is not None and x.n + n_new == params.n_cap
    return _box(x, n_new, lo, hi, m, lam, capped, params)


def _box(x, p, lo, hi, m, lam, capped, params) -> float:
    a, b, c = params.alpha, params.beta, params.c
    n = x.n
    xs = list(x.levels)

    def old_factor(shape):
        return math.prod(_interval_prob(shape, b, lo[i] - xs[i], hi[i] - xs[i]) for i in range(n))

    def survive(last):
        # density of no further (admitted) arrival after the last one
        return math.exp(-lam * last) if capped else math.exp(-lam * m)

    if p == 0:
        weight = 1.0 if capped else math.exp(-lam * m)
        return weight * old_factor(a * c ** (n - 1) * m)
    if p == 1:
        def f(s):
            # on [0, s] n defects grow at a c^(n-1); on [s, m] at a c^n
            old = a * c ** (n - 1) * s + a * c ** n * (m - s)
            new = a * c ** n * (m - s)
            return lam * survive(s) * old_factor(old) * _interval_prob(new, b, lo[n], hi[n])

        return _quad(f, 0.0, m)
    if p == 2:  # only from the new state
        def inner(s1):
            def g(s2):
                w1 = a * (s2 - s1) + a * c * (m - s2)
                w2 = a * c * (m - s2)
                return lam ** 2 * survive(s2) * _interval_prob(w1, b, lo[0], hi[0]) * _interval_prob(w2, b, lo[1], hi[1])

            return _quad(g, s1, m)

        return _quad(inner, 0.0, m)
    raise NotImplementedError("unsupported number of new defects")
