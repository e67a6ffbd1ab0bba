"""Maintained-system simulation: one inspection cycle, the post-inspection
Markov chain, and the direct renewal-reward cost estimate."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..model import ModelParams, RngStream, SystemState
from ..simulator import McEstimate, advance_batch, states_to_batch
from ..special import sample_beta
from .types import CostParams, CycleRecord, PolicyParams, StationarySample, next_gap, next_gap_batch

__all__ = [
    "CONTINUE",
    "PREVENTIVE",
    "CORRECTIVE",
    "DEFAULT_SUBSTEPS",
    "CycleBatch",
    "simulate_cycles",
    "simulate_cycle",
    "estimate_stationary",
    "direct_long_run_cost",
]

CONTINUE, PREVENTIVE, CORRECTIVE = 0, 1, 2
EVENT_NAMES = ("continue", "preventive", "corrective")
DEFAULT_SUBSTEPS = 64
STATIONARY_BATCHES = 20  # batch-means groups for a single chain


@dataclass
class CycleBatch:
    event: np.ndarray
    downtime: np.ndarray
    gap: np.ndarray
    levels: np.ndarray  # levels at the inspection, before any replacement
    counts: np.ndarray

    def post_levels(self):
        """Post-inspection ``(levels, counts)``; replaced systems are new."""
        keep = self.event == CONTINUE
        counts = np.where(keep, self.counts, 0)
        levels = np.where(keep[:, None], self.levels, np.nan)
        return levels, counts


def _row_max(levels: np.ndarray) -> np.ndarray:
    if levels.shape[1] == 0:
        return np.zeros(levels.shape[0])
    return np.max(np.where(np.isfinite(levels), levels, 0.0), axis=1)


def simulate_cycles(levels, counts, ages, params: ModelParams, policy: PolicyParams, gen,
                    substeps: int = DEFAULT_SUBSTEPS, gaps=None) -> CycleBatch:
    """Run one inspection interval for every row of a batch of post-inspection states.

    The gap of each row follows the scheduling function unless ``gaps`` is
    given. Failure time is located on the grid ``gap * i / substeps``: the
    path is sampled at dyadic grid points through gamma bridges, and since
    paths are nondecreasing a bisection finds the first grid endpoint whose
    maximum reaches ``L``, exactly as forward sub-stepping would. Degradation
    after that point only matters for downtime, which ends at the inspection.
    """
    gen = getattr(gen, "generator", gen)
    counts = np.asarray(counts, dtype=int)
    levels = np.asarray(levels, dtype=float).reshape(counts.size, -1)
    if gaps is None:
        gaps = next_gap_batch(counts, _row_max(levels), policy)
    gaps = np.asarray(gaps, dtype=float)
    res = advance_batch(levels, counts, ages, gaps, params, gen)
    mx = _row_max(res.levels)
    event = np.where(mx >= policy.L, CORRECTIVE,
                     np.where((res.counts > 0) & (mx >= policy.M), PREVENTIVE, CONTINUE))
    downtime = np.zeros(counts.size)
    failed = np.nonzero(event == CORRECTIVE)[0]
    if failed.size:
        downtime[failed] = _locate_failure(res, levels, failed, gaps, policy.L, substeps, gen)
    return CycleBatch(event, downtime, gaps, res.levels, res.counts)


def _locate_failure(res, start_levels, rows, gaps, L, substeps, gen):
    sub = res.rows(rows)
    K = res.levels.shape[1]
    w_lo = np.zeros((rows.size, K))
    k0 = min(start_levels.shape[1], K)
    w_lo[:, :k0] = np.nan_to_num(start_levels[rows, :k0], nan=0.0)
    w_hi = np.nan_to_num(sub.levels, nan=0.0)
    # only defects at or above L at the inspection can cross inside the gap
    cand = w_hi >= L
    width = int(cand.sum(axis=1).max(initial=1))
    cols = np.argsort(~cand, axis=1, kind="stable")[:, :width]
    valid = np.take_along_axis(cand, cols, axis=1)
    sub = sub.columns(cols, valid)
    w_lo = np.take_along_axis(w_lo, cols, axis=1)
    w_hi = np.take_along_axis(w_hi, cols, axis=1)
    lo = np.zeros(rows.size, dtype=int)
    hi = np.full(rows.size, substeps, dtype=int)
    g = gaps[rows]
    # cumulative shape at the bracket ends, so each step needs one G evaluation
    G_lo = np.zeros(rows.size)
    G_hi = sub.segments.G(g)
    active = np.nonzero(hi - lo > 1)[0]
    while active.size:
        part = sub if active.size == rows.size else sub.rows(active)
        mid = (lo[active] + hi[active]) // 2
        u_lo = lo[active] / substeps * g[active]
        u_mid = mid / substeps * g[active]
        u_hi = hi[active] / substeps * g[active]
        G_mid = part.segments.G(u_mid)
        a1 = part.shape_from(u_lo, u_mid, G_lo[active], G_mid)
        a2 = part.shape_from(u_mid, u_hi, G_mid, G_hi[active])
        frac = sample_beta(a1, a2, gen)
        w_mid = w_lo[active] + (w_hi[active] - w_lo[active]) * frac
        crossed = np.where(valid[active], w_mid, -np.inf).max(axis=1) >= L
        a_c, a_n = active[crossed], active[~crossed]
        hi[a_c] = mid[crossed]
        w_hi[a_c] = w_mid[crossed]
        G_hi[a_c] = G_mid[crossed]
        lo[a_n] = mid[~crossed]
        w_lo[a_n] = w_mid[~crossed]
        G_lo[a_n] = G_mid[~crossed]
        active = active[hi[active] - lo[active] > 1]
    return g - hi / substeps * g


def simulate_cycle(start: SystemState, params: ModelParams, policy: PolicyParams, rng: RngStream,
                   downtime_substeps: int = DEFAULT_SUBSTEPS) -> CycleRecord:
    """One inspection cycle from a post-inspection state."""
    gap = next_gap(start, policy)
    levels, counts, ages = states_to_batch([start])
    out = simulate_cycles(levels, counts, ages, params, policy, rng, downtime_substeps)
    ev = int(out.event[0])
    if ev == CONTINUE:
        n = int(out.counts[0])
        end = SystemState(tuple(out.levels[0, :n]), start.t + gap)
    else:
        end = SystemState.new()
    return CycleRecord(start, gap, EVENT_NAMES[ev], float(out.downtime[0]), end)


def estimate_stationary(params: ModelParams, policy: PolicyParams, chain_length: int, burn_in: int,
                        rng: RngStream, y0: Optional[SystemState] = None,
                        downtime_substeps: int = DEFAULT_SUBSTEPS, n_chains: int = 1) -> StationarySample:
    """Run the post-inspection chain ``Y_n`` from ``y0`` (new system by default).

    Records ``Y_1, ..., Y_chain_length`` and drops the first ``burn_in``.
    Replacement states, and inspections that find no defect, are recorded as
    the atom. With ``n_chains > 1`` independent chains run in lockstep and
    their kept states are pooled, so the sample holds
    ``n_chains * (chain_length - burn_in)`` visits. A degraded state keeps
    the time since its last renewal in ``SystemState.t``.
    """
    if not chain_length > burn_in >= 0:
        raise ValueError("need chain_length > burn_in >= 0")
    if n_chains < 1:
        raise ValueError("n_chains must be >= 1")
    gen = rng.generator
    y = y0 or SystemState.new()
    levels, counts, ages = states_to_batch([y] * n_chains)
    states = []
    groups = []
    n_keep = chain_length - burn_in
    n_groups = n_chains if n_chains > 1 else min(STATIONARY_BATCHES, n_keep)
    atom_per_group = np.zeros(n_groups, dtype=int)
    n_atom = 0
    for i in range(chain_length):
        out = simulate_cycles(levels, counts, ages, params, policy, gen, downtime_substeps)
        renew = out.event != CONTINUE
        levels, counts = out.post_levels()
        ages = np.where(renew, 0.0, ages + out.gap)
        levels = levels[:, : int(counts.max(initial=0))]
        if i >= burn_in:
            for b in range(n_chains):
                g = b if n_chains > 1 else (i - burn_in) * n_groups // n_keep
                n = int(counts[b])
                if n:
                    states.append(SystemState(tuple(levels[b, :n]), float(ages[b])))
                    groups.append(g)
                else:
                    n_atom += 1
                    atom_per_group[g] += 1
    kept = n_chains * n_keep
    return StationarySample(n_atom / kept, states, n_chains * chain_length, n_chains * burn_in,
                            np.array(groups, dtype=int), atom_per_group)


def direct_long_run_cost(params: ModelParams, policy: PolicyParams, costs: CostParams, n_cycles: int,
                         rng: RngStream, n_chains: int = 256,
                         downtime_substeps: int = DEFAULT_SUBSTEPS) -> McEstimate:
    """Renewal-reward estimate of the long-run cost rate.

    ``n_chains`` independent maintained systems run in lockstep from new until
    at least ``n_cycles`` replacement cycles have completed; incomplete final
    cycles are discarded. The standard error is that of the ratio estimator
    over regeneration cycles.
    """
    if n_cycles < 100:
        raise ValueError("n_cycles must be >= 100")
    gen = rng.generator
    levels = np.zeros((n_chains, 0))
    counts = np.zeros(n_chains, dtype=int)
    ages = np.zeros(n_chains)
    run_cost = np.zeros(n_chains)
    cyc_cost, cyc_len = [], []
    done = 0
    while done < n_cycles:
        out = simulate_cycles(levels, counts, ages, params, policy, gen, downtime_substeps)
        run_cost += costs.C_i + costs.C_d * out.downtime
        run_cost += np.where(out.event == PREVENTIVE, costs.C_p, 0.0)
        run_cost += np.where(out.event == CORRECTIVE, costs.C_c, 0.0)
        ages = ages + out.gap
        renew = out.event != CONTINUE
        if renew.any():
            cyc_cost.append(run_cost[renew].copy())
            cyc_len.append(ages[renew].copy())
            done += int(renew.sum())
        levels, counts = out.post_levels()
        width = int(counts.max(initial=0))
        levels = levels[:, :width]
        run_cost = np.where(renew, 0.0, run_cost)
        ages = np.where(renew, 0.0, ages)
    c = np.concatenate(cyc_cost)
    ln = np.concatenate(cyc_len)
    n = c.size
    ratio = math.fsum(c) / math.fsum(ln)
    resid = c - ratio * ln
    se = math.sqrt(math.fsum(resid ** 2) / (n - 1) / n) / (math.fsum(ln) / n)
    return McEstimate(ratio, se, n)
