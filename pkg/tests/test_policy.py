import math

import numpy as np
import pytest
from scipy import stats

from nhppgp.model import IntensityFunction, ModelParams, RngStream, SystemState
from nhppgp.policy import (
    CostBreakdown,
    CostParams,
    PolicyParams,
    Region,
    StationarySample,
    cost_rate,
    cycle_expectations,
    direct_long_run_cost,
    estimate_stationary,
    evaluate_policy,
    kernel_oracle,
    next_gap,
    simulate_cycle,
    simulate_cycles,
)
from nhppgp.simulator import states_to_batch
from nhppgp.special import gamma_cdf

CAP3 = ModelParams.hpp(1.0, 1.0, 1.0, 1.01, n_cap=3)


def test_policy_validation():
    with pytest.raises(ValueError):
        PolicyParams(1.0, 2.0, 1.0, 2.0, 0.5)
    with pytest.raises(ValueError):
        PolicyParams(3.0, 1.0, 3.0, 2.0, 0.5)
    with pytest.raises(ValueError):
        PolicyParams(3.0, 1.0, 1.0, 2.0, 1.0)
    with pytest.raises(ValueError):
        CostParams(1.0, -1.0, 0.0, 0.0)
    assert PolicyParams(3.0, 1.0, 2.0, 2.0, 0.5).M == 2.0


def test_next_gap_examples(small_policy):
    assert next_gap(SystemState.new(), small_policy) == 3.0
    assert next_gap(SystemState((1.0, 0.2)), small_policy) == pytest.approx(3 * 0.9025 * 0.5)
    assert next_gap(SystemState((1.999999,)), small_policy) == 1.0
    with pytest.raises(ValueError):
        next_gap(SystemState((2.0,)), small_policy)


def test_simulate_cycle_no_failure_threshold():
    pol = PolicyParams(3.0, 1.0, 1e8, 1e9, 0.9)
    p = ModelParams.hpp(2.0, 1.0, 1.0, 1.2)
    rng = RngStream(1)
    for _ in range(50):
        rec = simulate_cycle(SystemState.new(), p, pol, rng)
        assert rec.end_event == "continue" and rec.downtime == 0.0


def test_simulate_cycle_without_arrivals(small_policy):
    p = ModelParams.hpp(0.0, 1.0, 1.0, 1.0)
    rec = simulate_cycle(SystemState.new(), p, small_policy, RngStream(0))
    assert rec.end_event == "continue" and rec.end_state.n == 0 and rec.gap == 3.0


def test_cycle_record_invariants(small_policy):
    p = ModelParams.hpp(1.0, 1.5, 1.0, 1.2)
    pol = small_policy.replace(L=3.0)
    states = [SystemState.new(), SystemState((1.5,)), SystemState((0.3, 1.2), 2.0)]
    levels, counts, ages = states_to_batch(states * 3000)
    out = simulate_cycles(levels, counts, ages, p, pol, RngStream(3))
    assert np.all((out.gap >= pol.T_r) & (out.gap <= pol.T))
    assert np.all(out.downtime <= out.gap)
    assert np.all(out.downtime[out.event != 2] == 0)
    assert np.any(out.downtime > 0)
    mx = np.nanmax(np.where(np.isfinite(out.levels), out.levels, 0.0), axis=1) if out.levels.size else 0
    assert np.all((out.event == 2) == (mx >= pol.L))


def test_downtime_locates_first_crossing():
    # single defect, no arrivals: failure time has a gamma-law crossing, so the
    # quantized downtime distribution is exact
    p = ModelParams.hpp(0.0, 1.0, 1.0, 1.0)
    pol = PolicyParams(4.0, 1.0, 3.5, 3.5, 0.5)
    reps, sub = 200_000, 8
    levels, counts, ages = states_to_batch([SystemState((1.0,))] * reps)
    out = simulate_cycles(levels, counts, ages, p, pol, RngStream(4), substeps=sub, gaps=np.full(reps, 4.0))
    # detected at grid point i/sub*4 iff W(i h) >= 2.5 first at i
    h = 4.0 / sub
    cdf = [gamma_cdf(i * h, 1.0, 2.5) if i else 1.0 for i in range(sub + 1)]
    fail = [1.0 - c for c in cdf]  # P(W(ih) >= 2.5)
    for i in range(1, sub + 1):
        expected = fail[i] - fail[i - 1]
        frac = np.mean(np.isclose(out.downtime, 4.0 - i * h) & (out.event == 2))
        assert abs(frac - expected) < 4 * math.sqrt(expected * (1 - expected) / reps) + 1e-9


def test_stationary_sample_bookkeeping(small_policy):
    pi = estimate_stationary(CAP3, small_policy, 500, 50, RngStream(5))
    assert pi.n_kept == 450
    assert pi.atom_zero + len(pi.states) / pi.n_kept == pytest.approx(1.0)
    assert sum(pi.count_histogram().values()) == 450
    assert all(s.max_level < small_policy.M for s in pi.states)
    assert all(s.n <= 3 for s in pi.states)
    with pytest.raises(ValueError):
        estimate_stationary(CAP3, small_policy, 10, 10, RngStream(0))


def test_stationary_tiny_M(small_policy):
    pi = estimate_stationary(CAP3, small_policy.replace(M=1e-9), 300, 0, RngStream(6))
    assert pi.atom_zero == 1.0 and pi.states == []


def test_stationary_multi_chain_deterministic(small_policy):
    a = estimate_stationary(CAP3, small_policy, 100, 10, RngStream(7), n_chains=4)
    b = estimate_stationary(CAP3, small_policy, 100, 10, RngStream(7), n_chains=4)
    assert a.atom_zero == b.atom_zero and a.states == b.states
    assert a.n_kept == 360 and a.atom_per_group.sum() == a.n_atom


def test_stationarity_independent_of_start(small_policy):
    y0 = SystemState((1.9, 1.9, 1.9))
    a = estimate_stationary(CAP3, small_policy, 4100, 100, RngStream(8), n_chains=4)
    b = estimate_stationary(CAP3, small_policy, 4100, 100, RngStream(9), y0=y0, n_chains=4)

    def se(pi):
        per = pi.atom_per_group / (pi.n_kept / pi.atom_per_group.size)
        return per.std(ddof=1) / math.sqrt(per.size) if per.size > 1 else 0.0

    # batch-free binomial SE inflated for autocorrelation, floor on the group SE
    sa = max(se(a), math.sqrt(a.atom_zero * (1 - a.atom_zero) / a.n_kept))
    sb = max(se(b), math.sqrt(b.atom_zero * (1 - b.atom_zero) / b.n_kept))
    assert abs(a.atom_zero - b.atom_zero) < 3 * math.hypot(sa, sb)


def test_markov_property(small_policy):
    # transitions out of the atom do not depend on what preceded the atom
    pi_rng = RngStream(10)
    n_chains, length = 64, 400
    levels, counts, ages = states_to_batch([SystemState.new()] * n_chains)
    prev_atom = None
    after = {True: [], False: []}
    for _ in range(length):
        out = simulate_cycles(levels, counts, ages, CAP3, small_policy, pi_rng)
        renew = out.event != 0
        lv, cnt = out.post_levels()
        ages = np.where(renew, 0.0, ages + out.gap)
        now_atom = cnt == 0
        if prev_atom is not None:
            # previous step was at the atom; split by whether it came from a replacement
            for b in np.nonzero(prev_atom)[0]:
                after[bool(prev_renew[b])].append(int(cnt[b]))
        prev_atom, prev_renew = now_atom, renew
        levels, counts = lv[:, : int(cnt.max(initial=0))], cnt
    table = np.array([[np.sum(np.array(after[k]) == n) for n in range(4)] for k in (True, False)])
    table = table[:, table.sum(axis=0) > 0]
    _, p, _, _ = stats.chi2_contingency(table)
    assert p > 0.01


def test_kernel_case_1a_atom():
    p = ModelParams.hpp(1.0, 1.0, 1.0, 1.01)
    pol = PolicyParams(3.0, 1.0, 2.0, 8.0, 0.95)
    assert kernel_oracle(SystemState.new(), Region("empty"), p, pol) == pytest.approx(math.exp(-3.0))
    assert kernel_oracle(SystemState((0.5,)), Region("empty"), p, pol) == 0.0


def test_kernel_case_2a_rectangle():
    p = ModelParams.hpp(1.0, 1.0, 1.0, 1.01)
    pol = PolicyParams(3.0, 1.0, 2.0, 8.0, 0.95)
    x = SystemState((0.5,))
    m0 = next_gap(x, pol)
    val = kernel_oracle(x, Region.box((0.5,), (1.5,)), p, pol)
    shape = p.alpha * m0
    closed = (gamma_cdf(shape, 1.0, 1.0)) * math.exp(-m0)
    assert val == pytest.approx(closed, rel=1e-9)


def test_kernel_row_normalisation():
    p = ModelParams.hpp(1.0, 1.0, 1.0, 1.01, n_cap=2)
    pol = PolicyParams(3.0, 1.0, 2.0, 8.0, 0.95)
    for x in (SystemState.new(), SystemState((0.5,)), SystemState((0.2, 0.9))):
        total = kernel_oracle(x, Region("atom"), p, pol)
        for k in range(x.n if x.n else 1, 3):
            if k >= x.n:
                total += kernel_oracle(x, Region.box((0.0,) * k, (2.0,) * k), p, pol)
        assert total == pytest.approx(1.0, abs=1e-4)


def test_kernel_unsupported():
    p = ModelParams.hpp(1.0, 1.0, 1.0, 1.01)
    pol = PolicyParams(3.0, 1.0, 2.0, 8.0, 0.95)
    with pytest.raises(NotImplementedError):
        kernel_oracle(SystemState((0.1, 0.2)), Region.box((0, 0, 0), (1, 1, 1)), p, pol)
    piece = ModelParams(IntensityFunction.piecewise([1.0, 2.0], [1.0]), 1.0, 1.0, 1.0)
    with pytest.raises(NotImplementedError):
        kernel_oracle(SystemState.new(), Region("empty"), piece, pol)
    with pytest.raises(ValueError):
        Region("bogus")


def test_cost_rate_arithmetic():
    bd = CostBreakdown(1.0, 0.1, 0.05, 0.2, 2.5)
    assert cost_rate(bd, CostParams(0, 0, 0, 0)) == 0.0
    assert cost_rate(bd, CostParams(50, 0, 0, 0)) == pytest.approx(20.0)
    assert cost_rate(bd, CostParams(50, 300, 400, 100)) == pytest.approx((50 + 30 + 20 + 20) / 2.5)
    with pytest.raises(ValueError):
        cost_rate(CostBreakdown(1.0, 0, 0, 0, 0.0), CostParams(1, 1, 1, 1))


def test_cycle_expectations_invariants(small_policy, costs_a):
    pi, bd = evaluate_policy(CAP3, small_policy, costs_a, RngStream(11), chain_steps=400, reps_per_state=50)
    assert bd.e_inspections == 1.0
    assert 0 <= bd.e_preventive + bd.e_corrective <= 1
    assert small_policy.T_r <= bd.e_cycle_length <= small_policy.T
    assert bd.std_error > 0
    with pytest.raises(ValueError):
        cycle_expectations(pi, CAP3, small_policy, 10, RngStream(0), mode="bogus")
    empty = StationarySample(1.0, [], 0, 0)
    with pytest.raises(ValueError):
        cycle_expectations(empty, CAP3, small_policy, 10, RngStream(0))


def test_zero_costs(small_policy):
    z = CostParams(0, 0, 0, 0)
    _, bd = evaluate_policy(CAP3, small_policy, z, RngStream(12), chain_steps=200, reps_per_state=20)
    assert bd.cost_rate == 0.0
    assert direct_long_run_cost(CAP3, small_policy, z, 200, RngStream(12)).mean == 0.0
    with pytest.raises(ValueError):
        direct_long_run_cost(CAP3, small_policy, z, 50, RngStream(0))


def test_reduced_model_inspection_only():
    # L and M out of reach: only inspections cost, the chain never renews
    p = ModelParams.hpp(0.5, 0.2, 1.0, 1.1)
    pol = PolicyParams(4.0, 1.0, 1e6, 1e7, 0.8)
    rng = RngStream(13)
    pi, bd = evaluate_policy(p, pol, CostParams(50, 0, 0, 0), rng, chain_steps=800, reps_per_state=60)
    gaps = [next_gap(s, pol) for s in pi.states] + [pol.T] * pi.n_atom
    assert bd.e_preventive == 0 and bd.e_corrective == 0 and bd.e_downtime == 0
    assert bd.cost_rate == pytest.approx(50 / np.mean(gaps), rel=1e-12)


def test_analytic_mode_matches_mc():
    p = ModelParams.hpp(1.0, 1.0, 1.0, 1.01, n_cap=3)
    pol = PolicyParams(3.0, 1.0, 2.0, 3.0, 0.95)
    pi = estimate_stationary(p, pol, 60, 0, RngStream(14))
    a = cycle_expectations(pi, p, pol, 0, RngStream(0), mode="analytic-small")
    m = cycle_expectations(pi, p, pol, 4000, RngStream(15), downtime_substeps=256)
    n = pi.n_kept * 4000
    for name in ("e_preventive", "e_corrective"):
        va, vm = getattr(a, name), getattr(m, name)
        assert abs(va - vm) < 3 * math.sqrt(max(va * (1 - va), 1e-6) / n)
    assert m.e_cycle_length == pytest.approx(a.e_cycle_length, rel=1e-12)
    assert m.e_downtime == pytest.approx(a.e_downtime, abs=0.01 + 0.1 * a.e_downtime)


@pytest.fixture(scope="module")
def substep_pairs():
    p = ModelParams.hpp(1.0, 1.0, 1.0, 1.01, n_cap=3)
    pol = PolicyParams(6.6, 1.0, 6.125, 8.0, 0.95)
    costs = CostParams(50, 300, 400, 100)
    fine, coarse = [], []
    for r in range(8):
        fine.append(evaluate_policy(p, pol, costs, RngStream(100 + r), downtime_substeps=64)[1])
        coarse.append(evaluate_policy(p, pol, costs, RngStream(100 + r), downtime_substeps=32)[1])
    return fine, coarse, costs


@pytest.mark.xfail(reason="endpoint quantization underestimates downtime by about gap/(2 * substeps) per "
                          "failure; at 64 vs 32 substeps this is ~0.009 in e_d, above the ~0.004 spread "
                          "of a default-budget estimate", strict=False)
def test_downtime_substeps_bias_below_noise(substep_pairs):
    # halving the substeps moves e_d by less than its Monte Carlo standard error
    fine, coarse, _ = substep_pairs
    ed_fine = [b.e_downtime for b in fine]
    se = np.std(ed_fine, ddof=1)  # spread of one default-budget estimate
    assert abs(np.mean(ed_fine) - np.mean([b.e_downtime for b in coarse])) < se


def test_downtime_substeps_cost_shift_below_noise(substep_pairs):
    # the same e_d shift, carried into the cost rate, stays under the cost SE
    fine, coarse, costs = substep_pairs
    shift = costs.C_d * abs(np.mean([b.e_downtime for b in fine]) - np.mean([b.e_downtime for b in coarse]))
    shift /= np.mean([b.e_cycle_length for b in fine])
    assert shift < np.mean([b.std_error for b in fine])
