from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np

from ..model import SystemState

__all__ = ["PolicyParams", "CostParams", "CycleRecord", "StationarySample", "CostBreakdown", "next_gap"]


@dataclass(frozen=True)
class PolicyParams:
    """Inspection/replacement policy.

    ``T`` is the first (and maximum) inspection gap, ``T_r`` the minimum gap,
    ``M`` the preventive threshold, ``L`` the failure threshold and ``k`` the
    per-defect shrink factor of the scheduling function. ``M == L`` is
    accepted and disables preventive replacement.
    """

    T: float
    T_r: float
    M: float
    L: float
    k: float

    def __post_init__(self):
        if not (0 < self.T_r <= self.T):
            raise ValueError("need 0 < T_r <= T")
        if not (0 <= self.M <= self.L):
            raise ValueError("need 0 <= M <= L")
        if not (0 < self.k < 1):
            raise ValueError("need 0 < k < 1")

    def replace(self, **kw) -> "PolicyParams":
        d = dict(T=self.T, T_r=self.T_r, M=self.M, L=self.L, k=self.k)
        d.update(kw)
        return PolicyParams(**d)


@dataclass(frozen=True)
class CostParams:
    C_i: float
    C_p: float
    C_c: float
    C_d: float

    def __post_init__(self):
        if min(self.C_i, self.C_p, self.C_c, self.C_d) < 0:
            raise ValueError("costs must be nonnegative")


@dataclass(frozen=True)
class CycleRecord:
    start_state: SystemState
    gap: float
    end_event: str  # "continue" | "preventive" | "corrective"
    downtime: float
    end_state: SystemState


@dataclass
class StationarySample:
    """Empirical post-inspection stationary law: atom at the new state plus a
    cloud of degraded states (one entry per visit)."""

    atom_zero: float
    states: list
    chain_length: int
    burn_in: int
    # optional grouping used for standard errors: a group id per state and
    # the atom count of each group (chains, or contiguous batches of one chain)
    state_group: Optional[np.ndarray] = None
    atom_per_group: Optional[np.ndarray] = None

    @property
    def n_kept(self) -> int:
        return self.chain_length - self.burn_in

    @property
    def n_atom(self) -> int:
        return self.n_kept - len(self.states)

    def count_histogram(self) -> dict:
        """Visits per number of defects (0 is the atom)."""
        hist = {0: self.n_atom}
        for s in self.states:
            hist[s.n] = hist.get(s.n, 0) + 1
        return dict(sorted(hist.items()))


@dataclass
class CostBreakdown:
    e_inspections: float
    e_preventive: float
    e_corrective: float
    e_downtime: float
    e_cycle_length: float
    cost_rate: Optional[float] = None
    std_error: Optional[float] = None

    def with_cost_rate(self, value: float, std_error: Optional[float] = None) -> "CostBreakdown":
        return CostBreakdown(self.e_inspections, self.e_preventive, self.e_corrective,
                             self.e_downtime, self.e_cycle_length, value, std_error)

    def as_dict(self) -> dict:
        return {
            "e_inspections": self.e_inspections,
            "e_preventive": self.e_preventive,
            "e_corrective": self.e_corrective,
            "e_downtime": self.e_downtime,
            "e_cycle_length": self.e_cycle_length,
            "cost_rate": self.cost_rate,
            "cost_rate_std_error": self.std_error,
        }


def next_gap(state: SystemState, policy: PolicyParams) -> float:
    """Time to the next inspection: ``max(T_r, T k^N (1 - max W / M))``."""
    if state.n == 0:
        return policy.T
    mx = state.max_level
    if not mx < policy.M:
        raise ValueError("post-inspection state must have max level below M")
    return max(policy.T_r, policy.T * policy.k ** state.n * (1.0 - mx / policy.M))


def next_gap_batch(counts: np.ndarray, max_levels: np.ndarray, policy: PolicyParams) -> np.ndarray:
    counts = np.asarray(counts)
    with np.errstate(divide="ignore", invalid="ignore"):
        g = policy.T * np.power(policy.k, counts) * (1.0 - np.asarray(max_levels) / policy.M)
    return np.where(counts == 0, policy.T, np.maximum(policy.T_r, g))
