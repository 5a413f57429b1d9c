import numpy as np
import pytest

import ssdp
from ssdp.model import ModelError
from ssdp.policy import SsPolicy
from ssdp.simulate import (
    OrderUpTo,
    SimConfig,
    compare_policies,
    simulate_average,
    simulate_discounted,
)


def test_zero_stub_costs_nothing(zero_stub):
    cfg = SimConfig(x0=0.0, horizon=1500, n_paths=16, seed=1, policy="never_order")
    rep = simulate_average(zero_stub, cfg)
    assert rep.mean == 0.0 and rep.std_error == 0.0
    cfg2 = SimConfig(x0=0.0, horizon=50, n_paths=16, seed=1, alpha=0.5, policy="never_order")
    assert simulate_discounted(zero_stub, cfg2).mean == 0.0


def test_single_step_cost_is_deterministic(instance_a):
    # alpha = 0, one step: expected-cost formulation makes the draw irrelevant
    cfg = SimConfig(x0=0.0, horizon=1, n_paths=8, seed=2, alpha=0.0, policy="never_order")
    rep = simulate_discounted(instance_a, cfg)
    assert rep.mean == pytest.approx(3.0, abs=1e-12)
    assert rep.std_error == 0.0


def test_degenerate_average_closed_form(degenerate_model):
    pol = SsPolicy(s=0.0, S=0.0)
    for x0, expect in ((3.0, float(degenerate_model.h(3.0))), (-4.0, 0.0), (0.0, 0.0)):
        cfg = SimConfig(x0=x0, horizon=2000, n_paths=4, seed=5, policy=pol)
        rep = simulate_average(degenerate_model, cfg)
        assert rep.mean == pytest.approx(expect, abs=1e-12)
        assert rep.burn_in_used == 200


def test_order_up_to_zero_long_run_average(instance_a):
    cfg = SimConfig(x0=0.0, horizon=4000, n_paths=200, seed=17, policy=OrderUpTo(0.0))
    rep = simulate_average(instance_a, cfg)
    assert abs(rep.mean - 5.5) <= 3 * rep.std_error


def test_average_requires_long_horizon(instance_a):
    with pytest.raises(ModelError):
        simulate_average(
            instance_a, SimConfig(x0=0.0, horizon=500, n_paths=4, seed=1, policy="never_order")
        )


def test_ss_step_invariants_tracked(instance_a):
    pol = SsPolicy(s=1.0, S=2.0)
    cfg = SimConfig(x0=-6.0, horizon=1200, n_paths=32, seed=23, policy=pol)
    rep = simulate_average(instance_a, cfg)
    assert rep.ss_invariant_ok is True
    assert rep.policy_id == "sS(s=1.0,S=2.0)"


def test_discounted_matches_policy_evaluation(instance_a, discounted_a_09):
    pol = discounted_a_09.policy
    pe = ssdp.policy_evaluation(instance_a, pol, 0.9, tol=1e-8)
    cfg = SimConfig(x0=0.0, horizon=250, n_paths=4000, seed=29, alpha=0.9, policy=pol)
    rep = simulate_discounted(instance_a, cfg)
    i0 = instance_a.grid.index_of(0.0)
    assert abs(rep.mean - pe.values[i0]) <= 3 * rep.std_error + rep.bias_bound


def test_crn_determinism(instance_a):
    cfg = SimConfig(x0=0.0, horizon=1000, n_paths=64, seed=31, policy=OrderUpTo(0.0))
    a = simulate_average(instance_a, cfg)
    b = simulate_average(instance_a, cfg)
    assert a.mean == b.mean and a.std_error == b.std_error
    assert np.array_equal(a.path_stats, b.path_stats)


def test_policy_table_policies_simulate(instance_a, solve_a_09):
    cfg = SimConfig(x0=0.0, horizon=1000, n_paths=16, seed=37, policy=solve_a_09.policy)
    rep = simulate_average(instance_a, cfg)
    assert rep.policy_id == "policy_table"
    assert rep.mean > 0


def test_compare_identical_policies_zero_diff(instance_a):
    pol = OrderUpTo(0.0)
    cfg = SimConfig(x0=0.0, horizon=1500, n_paths=32, seed=41)
    cmp = compare_policies(instance_a, [pol, OrderUpTo(0.0)], cfg)
    assert cmp.rows[1].diff_mean == 0.0
    assert cmp.rows[1].diff_std_error == 0.0


def test_compare_dp_beats_heuristic(instance_a, average_a):
    cfg = SimConfig(x0=0.0, horizon=3000, n_paths=128, seed=43)
    cmp = compare_policies(instance_a, [average_a.policy, OrderUpTo(0.0)], cfg)
    row = cmp.rows[1]
    assert row.diff_mean >= -3 * max(row.diff_std_error, 1e-12)


def test_compare_never_order_diverges_from_backlog(instance_a, average_a):
    cfg = SimConfig(x0=-5.0, horizon=2000, n_paths=64, seed=47)
    cmp = compare_policies(instance_a, [average_a.policy, "never_order"], cfg)
    row = cmp.rows[1]
    assert row.diff_mean > 100 * row.diff_std_error  # decisive domination


def test_needs_two_policies(instance_a):
    with pytest.raises(ModelError):
        compare_policies(
            instance_a, ["never_order"], SimConfig(x0=0, horizon=1000, n_paths=4, seed=1)
        )


def test_unknown_policy_rejected(instance_a):
    with pytest.raises(ModelError):
        simulate_average(
            instance_a, SimConfig(x0=0, horizon=1000, n_paths=2, seed=1, policy="mystery")
        )
