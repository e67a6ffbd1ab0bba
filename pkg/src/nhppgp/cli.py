"""Command-line front end.

    nhppgp <command> [--config FILE] [--<key> VALUE ...] [command options]

Every config key is also a flag (``--alpha 0.5``, ``--T 6.6``); flags win
over the file, and the ``SEED`` environment variable is the fallback seed.
Exit codes: 0 success, 2 configuration error, 3 numerical failure, 4 I/O error.
"""

from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

from .config import SCHEMA, ConfigError, RunConfig, load_config
from .io import write_csv, write_json, write_stationary_states
from .model import RngStream
from .reliability import TruncationError, expected_level_general, expected_level_hpp, survival_bounds, survival_new

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4


class NumericalFailure(ArithmeticError):
    pass


def parse_grid(text: str) -> List[float]:
    """``"a,b,c"`` or ``"start:stop:num"`` (inclusive linspace)."""
    text = text.strip()
    try:
        if ":" in text:
            a, b, n = text.split(":")
            n = int(n)
            if n < 1:
                raise ValueError
            return [float(v) for v in np.linspace(float(a), float(b), n)]
        vals = [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise ConfigError(f"bad grid specification {text!r}") from exc
    if not vals:
        raise ConfigError("empty grid")
    return vals


def _int_list(text: str) -> List[int]:
    try:
        vals = [int(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise ConfigError(f"bad integer list {text!r}") from exc
    if not vals:
        raise ConfigError("empty list")
    return vals


# commands


def cmd_reliability(cfg: RunConfig, args) -> Path:
    params = cfg.model()
    trunc = cfg.truncation()
    z = args.z
    if not z > 0:
        raise ConfigError("--z must be positive")
    ts = parse_grid(args.t_grid)
    if any(t < 0 for t in ts):
        raise ConfigError("t grid values must be >= 0")
    reps = cfg.mc("reps")
    root = RngStream(cfg.seed())
    from .simulator import mc_survival

    with_bounds = params.c >= 1 and params.n_cap is None
    rows = []
    for i, t in enumerate(ts):
        surv = survival_new(params, z, t, trunc).value
        lo, up = survival_bounds(params, z, t, trunc) if with_bounds else (None, None)
        if t == 0 or reps < 2:
            mc_mean, mc_se = (1.0, 0.0) if t == 0 else (None, None)
        else:
            est = mc_survival(params, z, t, None, reps, root.substream(i))
            mc_mean, mc_se = est.mean, est.std_error
        rows.append((t, surv, lo, up, mc_mean, mc_se))
    return write_csv(cfg.output() / "reliability.csv",
                     ["t", "survival", "lower_bound", "upper_bound", "mc_estimate", "mc_se"], rows)


def cmd_expectation(cfg: RunConfig, args) -> Path:
    params = cfg.model()
    trunc = cfg.truncation()
    js = _int_list(args.j_list)
    if min(js) < 1:
        raise ConfigError("j values must be >= 1")
    ts = parse_grid(args.t_grid)
    if any(t < 0 for t in ts):
        raise ConfigError("t grid values must be >= 0")
    reps = cfg.mc("reps")
    root = RngStream(cfg.seed())
    from .simulator import mc_expected_level

    analytic = expected_level_hpp if params.intensity.is_constant else expected_level_general
    rows = []
    for i, t in enumerate(ts):
        for j in sorted(js):
            a = analytic(params, j, t, trunc) if t > 0 else 0.0
            if t == 0:
                m, se = 0.0, 0.0
            elif reps >= 2:
                est = mc_expected_level(params, j, t, reps, root.substream(i))
                m, se = est.mean, est.std_error
            else:
                m, se = None, None
            rows.append((t, j, a, m, se))
    return write_csv(cfg.output() / "expectation.csv", ["t", "j", "analytic", "mc", "mc_se"], rows)


def cmd_simulate(cfg: RunConfig, args) -> Path:
    from .simulator import simulate_trajectory

    params = cfg.model()
    if not args.horizon > 0:
        raise ConfigError("--horizon must be positive")
    obs = parse_grid(args.obs_times) if args.obs_times else []
    try:
        traj = simulate_trajectory(params, args.horizon, obs, RngStream(cfg.seed()))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    K = max((s.n for _, s in traj.events), default=0)
    header = ["time", "n_processes"] + [f"w_{i + 1}" for i in range(K)]
    rows = [[t, s.n] + list(s.levels) + [None] * (K - s.n) for t, s in traj.events]
    return write_csv(cfg.output() / "trajectory.csv", header, rows)


def cmd_stationary(cfg: RunConfig, args) -> Path:
    from .policy import estimate_stationary

    params, policy = cfg.model(), cfg.policy()
    length, burn = cfg.mc("chain_length"), cfg.mc("burn_in")
    if not length > burn:
        raise ConfigError("[mc] chain_length must exceed burn_in")
    n_chains = args.chains or 1
    pi = estimate_stationary(params, policy, length, burn, RngStream(cfg.seed()), None,
                             cfg.mc("downtime_substeps"), n_chains=n_chains)
    out = cfg.output()
    write_stationary_states(out / "stationary_states.csv", pi)
    hist = pi.count_histogram()
    write_csv(out / "stationary_histogram.csv", ["n_processes", "count"], sorted(hist.items()))
    summary = {"atom_zero": pi.atom_zero, "kept": pi.n_kept, "chain_length": pi.chain_length,
               "burn_in": pi.burn_in, "n_chains": n_chains, "histogram": hist}
    return write_json(out / "stationary_summary.json", summary)


def _policy_eval(cfg: RunConfig):
    from .policy import direct_long_run_cost, evaluate_policy

    params, policy, costs = cfg.model(), cfg.policy(), cfg.costs()
    seed = cfg.seed()
    # same stream as an optimize grid point, so a one-cell search echoes this
    pi, bd = evaluate_policy(params, policy, costs, RngStream(seed), cfg.mc("chain_length"), cfg.mc("burn_in"),
                             cfg.mc("reps_per_state"), max(cfg.mc("n_chains"), 1), cfg.mc("downtime_substeps"))
    direct = direct_long_run_cost(params, policy, costs, max(cfg.mc("n_cycles"), 100), RngStream(seed, 1),
                                  downtime_substeps=cfg.mc("downtime_substeps"))
    if not all(math.isfinite(v) for v in (bd.cost_rate, direct.mean)):
        raise NumericalFailure("non-finite cost estimate")
    gap = 0.0 if bd.cost_rate == direct.mean else abs(bd.cost_rate - direct.mean) / max(abs(direct.mean), 1e-300)
    return pi, bd, direct, gap


def cmd_policy_eval(cfg: RunConfig, args) -> Path:
    pi, bd, direct, gap = _policy_eval(cfg)
    payload = {
        "policy": vars(cfg.policy()),
        "atom_zero": pi.atom_zero,
        "semi_regenerative": bd.as_dict(),
        "renewal_reward": {"cost_rate": direct.mean, "std_error": direct.std_error, "cycles": direct.reps},
        "relative_gap": gap,
    }
    return write_json(cfg.output() / "policy_eval.json", payload)


def cmd_optimize(cfg: RunConfig, args) -> Path:
    from .optimizer import Budget, SearchSpec, default_grids, grid_search

    params, template, costs = cfg.model(), cfg.policy(), cfg.costs()
    T_def, M_def, k_def = default_grids(template.T_r, template.L)
    T_grid = parse_grid(args.T_grid) if args.T_grid else T_def
    M_grid = parse_grid(args.M_grid) if args.M_grid else M_def
    k_grid = None
    if args.k_sweep:
        k_grid = parse_grid(args.k_grid) if args.k_grid else k_def
    if args.chain_steps < 1:
        raise ConfigError("--chain-steps must be positive")
    budget = Budget(args.chain_steps, cfg.mc("burn_in"), cfg.mc("reps_per_state"), max(cfg.mc("n_chains"), 1),
                    cfg.mc("downtime_substeps"))
    try:
        spec = SearchSpec(tuple(T_grid), tuple(M_grid), None if k_grid is None else tuple(k_grid),
                          args.refine, cfg.seed(), budget)
        spec.validate(template)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    surface = grid_search(spec, params, template, costs, threads=args.threads)
    out = cfg.output()
    cols = ["T", "M", "k", "cost_rate", "std_error", "flag"]
    row = lambda e: (e.T, e.M, e.k, e.cost_rate, e.std_error, e.flag)
    write_csv(out / "surface.csv", cols, (row(e) for e in surface.entries))
    write_csv(out / "refinement.csv", cols, (row(e) for e in surface.refinements))
    best = surface.argmin
    payload = {"incumbent": {"T": best.T, "M": best.M, "k": best.k, "cost_rate": best.cost_rate,
                             "std_error": best.std_error, "flag": best.flag},
               "grid_points": len(surface.entries), "refinement_points": len(surface.refinements)}
    if k_grid is not None:
        prof = {}
        for e in surface.all_entries:
            if e.ok and (e.k not in prof or e.sort_key() < prof[e.k].sort_key()):
                prof[e.k] = e
        write_csv(out / "k_profile.csv", ["k", "cost_rate", "std_error", "T", "M"],
                  ((k, e.cost_rate, e.std_error, e.T, e.M) for k, e in sorted(prof.items())))
    return write_json(out / "incumbent.json", payload)


COMMANDS = {
    "reliability": cmd_reliability,
    "expectation": cmd_expectation,
    "simulate": cmd_simulate,
    "stationary": cmd_stationary,
    "policy-eval": cmd_policy_eval,
    "optimize": cmd_optimize,
}


def _add_config_flags(p: argparse.ArgumentParser):
    p.add_argument("--config", help="INI config file")
    g = p.add_argument_group("config overrides")
    for section, keys in SCHEMA.items():
        for key in keys:
            g.add_argument(f"--{key}", dest=f"cfg__{section}__{key}", metavar="VALUE",
                           help=f"[{section}] {key}")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="nhppgp", description="Dependent NHPP-GP degradation toolkit", allow_abbrev=False)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("reliability", allow_abbrev=False, help="survival curve, bounds and MC check")
    p.add_argument("--z", type=float, required=True, help="level to reach")
    p.add_argument("--t-grid", required=True, help="'a,b,c' or 'start:stop:num'")

    p2 = sub.add_parser("expectation", allow_abbrev=False, help="expected defect levels")
    p2.add_argument("--j-list", required=True, help="comma separated defect indices")
    p2.add_argument("--t-grid", required=True)

    p3 = sub.add_parser("simulate", allow_abbrev=False, help="dump one trajectory")
    p3.add_argument("--horizon", type=float, required=True)
    p3.add_argument("--obs-times", help="observation times grid")

    p4 = sub.add_parser("stationary", allow_abbrev=False, help="post-inspection chain sample")
    p4.add_argument("--chains", type=int, default=1, help="independent chains run in lockstep")

    p5 = sub.add_parser("policy-eval", allow_abbrev=False, help="cost rate by both estimators")

    p6 = sub.add_parser("optimize", allow_abbrev=False, help="grid search of the cost rate")
    p6.add_argument("--T-grid", dest="T_grid")
    p6.add_argument("--M-grid", dest="M_grid")
    p6.add_argument("--k-sweep", action="store_true", help="also search over k")
    p6.add_argument("--k-grid", dest="k_grid")
    p6.add_argument("--refine", type=int, default=2, help="refinement rounds")
    p6.add_argument("--chain-steps", type=int, default=2000, help="chain steps per grid point (pooled over chains)")
    p6.add_argument("--threads", type=int, default=1, help="worker processes; results do not depend on it")
    for sp in (p, p2, p3, p4, p5, p6):
        _add_config_flags(sp)
    return ap


def _config_from_args(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    for name, raw in vars(args).items():
        if name.startswith("cfg__") and raw is not None:
            _, section, key = name.split("__")
            cfg.override(section, key, raw)
    return cfg


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _config_from_args(args)
        path = COMMANDS[args.command](cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ArithmeticError, TruncationError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(path)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
