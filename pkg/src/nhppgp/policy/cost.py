"""Semi-regenerative cost evaluation.

Over one Markov renewal cycle (two successive inspections) started from the
stationary post-inspection law, the long-run cost rate is the expected cycle
cost divided by the expected cycle length.
"""

from __future__ import annotations

import math
from typing import Optional

import numpy as np

from ..model import ModelParams, RngStream, SystemState
from ..simulator import states_to_batch
from .cycle import CORRECTIVE, DEFAULT_SUBSTEPS, PREVENTIVE, simulate_cycles
from .types import CostBreakdown, CostParams, PolicyParams, StationarySample, next_gap

__all__ = ["cycle_expectations", "cost_rate", "evaluate_policy", "GATHER_ROWS", "DEFAULT_CHAINS"]

GATHER_ROWS = 65536
DEFAULT_CHAINS = 16


def cost_rate(breakdown: CostBreakdown, costs: CostParams) -> float:
    """``(C_i + C_p e_p + C_c e_c + C_d e_d) / e_len``."""
    if not breakdown.e_cycle_length > 0:
        raise ValueError("expected cycle length must be positive")
    num = (costs.C_i * breakdown.e_inspections + costs.C_p * breakdown.e_preventive
           + costs.C_c * breakdown.e_corrective + costs.C_d * breakdown.e_downtime)
    return num / breakdown.e_cycle_length


def cycle_expectations(pi: StationarySample, params: ModelParams, policy: PolicyParams,
                       reps_per_state: int, rng: RngStream, mode: str = "mc",
                       costs: Optional[CostParams] = None, atom_reps: Optional[int] = None,
                       cfg=None,
                       downtime_substeps: int = DEFAULT_SUBSTEPS) -> CostBreakdown:
    """Per-cycle expectations under the empirical stationary law ``pi``.

    ``mode="mc"`` runs ``reps_per_state`` fresh cycles from every cloud state
    and ``atom_reps`` from the new state. The default treats every atom visit
    as a sampled state, ``reps_per_state * n_atom``, which is close to the
    variance-optimal split when atom and cloud cycles have similar spread.
    ``mode="analytic-small"`` evaluates the hitting-time laws of each
    distinct state with the analytic survival functions instead; it is meant
    for small clouds.

    When ``costs`` is given the result carries the cost rate and, in MC
    mode, a delta-method standard error that treats the cloud as fixed.
    """
    if pi.n_kept <= 0:
        raise ValueError("empty stationary sample")
    if mode == "mc":
        out = _mc_expectations(pi, params, policy, reps_per_state, rng, costs, atom_reps, downtime_substeps)
    elif mode == "analytic-small":
        out = _analytic_expectations(pi, params, policy, cfg)
        if costs is not None:
            out = out.with_cost_rate(cost_rate(out, costs))
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return out


def _mc_expectations(pi, params, policy, reps, rng, costs, atom_reps, substeps):
    atom_reps = atom_reps or reps * pi.n_atom
    gen = rng.generator
    # per-row values: preventive, corrective, downtime, length
    if pi.n_atom:
        atom_vals = []
        for start in range(0, atom_reps, GATHER_ROWS):
            size = min(GATHER_ROWS, atom_reps - start)
            out = simulate_cycles(np.zeros((size, 0)), np.zeros(size, int), np.zeros(size), params, policy,
                                  gen, substeps)
            atom_vals.append(_row_values(out))
        atom_vals = np.concatenate(atom_vals, axis=1)
        atom_mean = atom_vals.mean(axis=1)
    else:
        atom_vals, atom_mean = None, np.zeros(4)

    n_states = len(pi.states)
    state_mean = np.zeros((4, n_states))
    if n_states:
        levels, counts, ages = states_to_batch(pi.states)
        idx = np.repeat(np.arange(n_states), reps)
        for start in range(0, idx.size, GATHER_ROWS):
            sel = idx[start:start + GATHER_ROWS]
            out = simulate_cycles(levels[sel], counts[sel], ages[sel], params, policy, gen, substeps)
            vals = _row_values(out)
            for r in range(4):
                state_mean[r] += np.bincount(sel, weights=vals[r], minlength=n_states)
        state_mean /= reps

    totals = pi.n_atom * atom_mean + state_mean.sum(axis=1)
    e_p, e_c, e_d, e_len = totals / pi.n_kept
    bd = CostBreakdown(1.0, e_p, e_c, e_d, e_len)
    if costs is None:
        return bd
    rate = cost_rate(bd, costs)
    return bd.with_cost_rate(rate, _ratio_se(pi, costs, rate, atom_vals, atom_mean, state_mean))


def _row_values(out) -> np.ndarray:
    ev = out.event
    return np.stack([ev == PREVENTIVE, ev == CORRECTIVE, out.downtime, out.gap]).astype(float)


def _residual(vals: np.ndarray, costs: CostParams, rate: float) -> np.ndarray:
    """Per-cycle cost minus ``rate`` times length; its mean is zero at the true rate."""
    return costs.C_i + costs.C_p * vals[0] + costs.C_c * vals[1] + costs.C_d * vals[2] - rate * vals[3]


def _ratio_se(pi, costs, rate, atom_vals, atom_mean, state_mean) -> float:
    """Cluster standard error of the ratio over the sample's groups.

    Group totals carry the noise of the cloud and of the per-state replications;
    the noise of the shared atom mean is added separately.
    """
    e_len = (pi.n_atom * atom_mean[3] + state_mean[3].sum()) / pi.n_kept
    var = 0.0
    if pi.state_group is not None and pi.atom_per_group is not None and pi.atom_per_group.size > 1:
        G = pi.atom_per_group.size
        res_state = _residual(state_mean, costs, rate)
        tot = np.bincount(pi.state_group, weights=res_state, minlength=G)
        tot = tot + pi.atom_per_group * float(_residual(atom_mean[:, None], costs, rate)[0])
        # groups of equal expected size: variance of the mean of G group totals
        var += G / (G - 1) * float(np.sum((tot - tot.mean()) ** 2)) / pi.n_kept ** 2
    else:
        res_state = _residual(state_mean, costs, rate)
        n = pi.n_kept
        var += float(np.sum(res_state ** 2)) / n ** 2
    if atom_vals is not None:
        r = _residual(atom_vals, costs, rate)
        w = pi.n_atom / pi.n_kept
        var += w ** 2 * float(np.var(r, ddof=1)) / r.size
    return math.sqrt(var) / e_len


def _analytic_expectations(pi, params, policy, cfg, n_time_nodes: int = 16):
    """Hitting-time route over the distinct states of the cloud.

    From a state x with gap m: e_c = P(sigma_L <= m), e_p = P(sigma_M <= m) -
    e_c, and the downtime is the integral of P(sigma_L <= u) over [0, m].
    """
    from ..reliability import TruncationConfig, survival_degraded

    cfg = cfg or TruncationConfig()
    groups = {}
    if pi.n_atom:
        groups[((), 0.0)] = pi.n_atom
    for s in pi.states:
        key = (s.levels, s.t)
        groups[key] = groups.get(key, 0) + 1
    u, w = np.polynomial.legendre.leggauss(n_time_nodes)
    e_p = e_c = e_d = e_len = 0.0
    for (lv, age), cnt in groups.items():
        x = SystemState(lv, age)
        weight = cnt / pi.n_kept
        m = next_gap(x, policy)
        surv_L = survival_degraded(params, x, policy.L, m, cfg).value
        if policy.M > 0:
            surv_M = survival_degraded(params, x, policy.M, m, cfg).value
        elif lv:
            surv_M = 0.0
        else:
            # M = 0: only a system that is still empty continues
            surv_M = float(np.exp(-(params.intensity.cumulative(age + m) - params.intensity.cumulative(age))))
        nodes = 0.5 * m * (u + 1.0)
        F_L = np.array([1.0 - survival_degraded(params, x, policy.L, float(t), cfg).value for t in nodes])
        e_c += weight * (1.0 - surv_L)
        e_p += weight * (surv_L - surv_M)
        e_d += weight * 0.5 * m * float(w @ F_L)
        e_len += weight * m
    return CostBreakdown(1.0, e_p, e_c, e_d, e_len)


def evaluate_policy(params: ModelParams, policy: PolicyParams, costs: CostParams, rng: RngStream,
                    chain_steps: int = 2000, burn_in: int = 100, reps_per_state: int = 200,
                    n_chains: int = DEFAULT_CHAINS, downtime_substeps: int = DEFAULT_SUBSTEPS):
    """Stationary sample then nested MC; returns ``(pi, breakdown)`` with the cost rate.

    ``chain_steps`` kept visits are split over ``n_chains`` lockstep chains,
    each with its own ``burn_in``. Substream 0 drives the chains and
    substream 1 the cycles, so two policies evaluated with the same ``rng``
    share random numbers.
    """
    from .cycle import estimate_stationary

    per_chain = -(-chain_steps // n_chains)
    pi = estimate_stationary(params, policy, per_chain + burn_in, burn_in, rng.substream(0),
                             n_chains=n_chains, downtime_substeps=downtime_substeps)
    bd = cycle_expectations(pi, params, policy, reps_per_state, rng.substream(1), "mc", costs,
                            downtime_substeps=downtime_substeps)
    return pi, bd
