"""Grid search of the long-run cost rate over (T, M) and optionally k.

Every grid point is evaluated with the same master seed and stream layout,
so neighbouring points share random numbers and their differences are far
less noisy than the points themselves. Refinement rounds put a 3 x 3 grid
with halved steps around the incumbent and double the simulation budget.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from .model import ModelParams, RngStream
from .policy.cost import DEFAULT_CHAINS, evaluate_policy
from .policy.cycle import DEFAULT_SUBSTEPS
from .policy.types import CostParams, PolicyParams

__all__ = [
    "Budget",
    "SearchSpec",
    "SurfaceEntry",
    "CostSurface",
    "grid_search",
    "k_profile",
    "evaluate_point",
    "default_grids",
]


@dataclass(frozen=True)
class Budget:
    chain_steps: int = 2000
    burn_in: int = 100
    reps_per_state: int = 200
    n_chains: int = DEFAULT_CHAINS
    downtime_substeps: int = DEFAULT_SUBSTEPS

    def scaled(self, factor: float) -> "Budget":
        return replace(self, chain_steps=int(round(self.chain_steps * factor)),
                       reps_per_state=int(round(self.reps_per_state * factor)))


def default_grids(T_r: float, L: float, n: int = 12, T_max: float = 15.0):
    """Uniform default grids: T on [T_r, T_max], M on [0.5, L], k from 0.5 to 0.95."""
    T_grid = tuple(float(v) for v in np.linspace(T_r, T_max, n))
    M_grid = tuple(float(v) for v in np.linspace(0.5, L, n))
    k_grid = tuple(round(0.5 + 0.05 * i, 2) for i in range(10))
    return T_grid, M_grid, k_grid


@dataclass(frozen=True)
class SearchSpec:
    T_grid: Tuple[float, ...]
    M_grid: Tuple[float, ...]
    k_grid: Optional[Tuple[float, ...]] = None
    refinement_rounds: int = 2
    common_seed: int = 0
    budget: Budget = field(default_factory=Budget)

    def __post_init__(self):
        for name in ("T_grid", "M_grid"):
            g = tuple(float(v) for v in getattr(self, name))
            object.__setattr__(self, name, g)
            if not g:
                raise ValueError(f"{name} is empty")
            if any(b <= a for a, b in zip(g, g[1:])):
                raise ValueError(f"{name} must be strictly increasing")
        if self.k_grid is not None:
            k = tuple(float(v) for v in self.k_grid)
            object.__setattr__(self, "k_grid", k)
            if not k or any(not 0 < v < 1 for v in k):
                raise ValueError("k_grid values must lie in (0, 1)")
        if self.refinement_rounds < 0:
            raise ValueError("refinement_rounds must be >= 0")

    def validate(self, template: PolicyParams):
        if self.T_grid[0] < template.T_r:
            raise ValueError("T_grid values must be >= T_r")
        if not (self.M_grid[0] > 0 and self.M_grid[-1] <= template.L):
            raise ValueError("M_grid values must lie in (0, L]")


@dataclass(frozen=True)
class SurfaceEntry:
    T: float
    M: float
    k: float
    cost_rate: float
    std_error: float
    flag: str = "ok"  # "ok", "refined" or "error: <message>"

    @property
    def ok(self) -> bool:
        return not self.flag.startswith("error")

    def sort_key(self):
        # lowest cost; ties toward smaller T, then smaller M, then larger k
        return (self.cost_rate, self.T, self.M, -self.k)


@dataclass
class CostSurface:
    entries: List[SurfaceEntry]
    refinements: List[SurfaceEntry] = field(default_factory=list)

    @property
    def all_entries(self) -> List[SurfaceEntry]:
        return self.entries + self.refinements

    @property
    def argmin(self) -> SurfaceEntry:
        good = [e for e in self.all_entries if e.ok]
        if not good:
            raise ArithmeticError("no grid point could be evaluated")
        return min(good, key=SurfaceEntry.sort_key)


def evaluate_point(params: ModelParams, policy: PolicyParams, costs: CostParams, seed: int,
                   budget: Budget, flag: str = "ok") -> SurfaceEntry:
    """Semi-regenerative cost rate at one policy; failures are recorded, not raised."""
    try:
        _, bd = evaluate_policy(params, policy, costs, RngStream(seed), budget.chain_steps, budget.burn_in,
                                budget.reps_per_state, budget.n_chains, budget.downtime_substeps)
        se = bd.std_error if bd.std_error and bd.std_error > 0 else float("nan")
        return SurfaceEntry(policy.T, policy.M, policy.k, float(bd.cost_rate), float(se), flag)
    except (ValueError, ArithmeticError) as exc:
        return SurfaceEntry(policy.T, policy.M, policy.k, float("nan"), float("nan"), f"error: {exc}")


def _run(tasks, threads: int) -> List[SurfaceEntry]:
    if threads <= 1 or len(tasks) <= 1:
        return [evaluate_point(*t) for t in tasks]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(_star, tasks))


def _star(task):
    return evaluate_point(*task)


def _step(grid: Sequence[float], value: float) -> float:
    if len(grid) < 2:
        return 0.0
    g = np.asarray(grid)
    i = int(np.argmin(np.abs(g - value)))
    i = min(max(i, 1), len(g) - 1)
    return float(g[i] - g[i - 1])


def _search_2d(spec: SearchSpec, params, template: PolicyParams, costs, k: float, threads: int,
               progress: Optional[Callable[[SurfaceEntry], None]]) -> CostSurface:
    tasks = [(params, template.replace(T=T, M=M, k=k), costs, spec.common_seed, spec.budget)
             for T in spec.T_grid for M in spec.M_grid]
    entries = _run(tasks, threads)
    if progress:
        for e in entries:
            progress(e)
    surface = CostSurface(entries)
    dT, dM = _step(spec.T_grid, surface.argmin.T), _step(spec.M_grid, surface.argmin.M)
    seen = {(e.T, e.M) for e in entries}
    for r in range(1, spec.refinement_rounds + 1):
        dT, dM = dT / 2, dM / 2
        best = surface.argmin
        budget = spec.budget.scaled(2 ** r)
        new = []
        for i in (-1, 0, 1):
            for j in (-1, 0, 1):
                T = round(best.T + i * dT, 10)
                M = round(best.M + j * dM, 10)
                if T < template.T_r or not 0 < M <= template.L or (T, M) in seen or (i == 0 and j == 0):
                    continue
                seen.add((T, M))
                new.append((params, template.replace(T=T, M=M, k=k), costs, spec.common_seed, budget, "refined"))
        found = _run(new, threads)
        if progress:
            for e in found:
                progress(e)
        surface.refinements.extend(found)
    return surface


def grid_search(spec: SearchSpec, params: ModelParams, template: PolicyParams, costs: CostParams,
                threads: int = 1, progress: Optional[Callable[[SurfaceEntry], None]] = None) -> CostSurface:
    """Evaluate the cost rate over the grid, then refine around the incumbent.

    With a ``k_grid`` every k gets its own (T, M) search and the surfaces are
    concatenated; otherwise ``template.k`` is used.
    """
    spec.validate(template)
    ks = spec.k_grid or (template.k,)
    out = CostSurface([])
    for k in ks:
        s = _search_2d(spec, params, template, costs, k, threads, progress)
        out.entries.extend(s.entries)
        out.refinements.extend(s.refinements)
    return out


def k_profile(spec: SearchSpec, params: ModelParams, template: PolicyParams, costs: CostParams,
              threads: int = 1, progress=None) -> List[Tuple[float, SurfaceEntry]]:
    """Minimum cost over (T, M) for each k of the grid."""
    if not spec.k_grid:
        raise ValueError("k_profile needs a non-empty k_grid")
    spec.validate(template)
    profile = []
    for k in spec.k_grid:
        s = _search_2d(spec, params, template, costs, k, threads, progress)
        profile.append((k, s.argmin))
    return profile
