import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import ssdp
from ssdp.model import DemandDistribution, Grid, ModelError
from ssdp.policy import (
    CertificationError,
    GFunction,
    SsPolicy,
    build_G,
    discounted_sS,
    extract_sS,
    finite_horizon_sS,
    is_K_convex,
    slope_condition,
    solve_zero_setup,
)
from ssdp.dp import solve_finite, solve_infinite



def g_from(grid, values, **kw):
    return GFunction(grid=grid, values=np.asarray(values, dtype=float), kind=kw.pop("kind", "infinite"), **kw)


# ---------------------------------------------------------------- build_G


def test_build_g_zero_stub(zero_stub):
    g = build_G(zero_stub, np.zeros(zero_stub.grid.n), 0.9, kind="infinite")
    assert np.all(g.values == 0.0)


def test_build_g_alpha_zero_formula(instance_a):
    g = build_G(instance_a, np.zeros(instance_a.grid.n), 0.0, kind="finite_t", t=0)
    assert g.values[instance_a.grid.index_of(0.0)] == pytest.approx(3.0, abs=1e-12)
    assert g.values[instance_a.grid.index_of(2.0)] == pytest.approx(3.0, abs=1e-12)


def test_build_g_degenerate_closed_form(degenerate_model):
    m = degenerate_model
    alpha = 0.9
    rep = solve_infinite(m, alpha, tol=1e-9)
    g = build_G(m, rep.value, alpha, kind="infinite")
    pos = m.grid.points >= 0
    expect = m.c_bar * m.grid.points[pos] + m.h(m.grid.points[pos]) / (1 - alpha)
    assert np.max(np.abs(g.values[pos] - expect)) <= 1e-7


def test_build_g_consistency_check_catches_tampering(instance_a, solve_a_09):
    tampered = solve_a_09.value.values.copy()
    tampered[instance_a.grid.index_of(5.0)] += 1.0
    with pytest.raises(CertificationError):
        build_G(instance_a, tampered, 0.9, kind="infinite")


def test_build_g_counts_extrapolations(instance_a, solve_a_09):
    g = build_G(instance_a, solve_a_09.value, 0.9, kind="infinite")
    assert g.extrapolation_count == 3  # same pairs the kernel clamps


# --------------------------------------------------------------- extract_sS


def test_extract_quadratic_analytic():
    grid = Grid(x_lo=-5, x_hi=15, step=1.0)
    g = g_from(grid, (grid.points - 5.0) ** 2)
    pol = extract_sS(g, K=4.0)
    assert (pol.s, pol.S) == (3.0, 5.0)


def test_extract_absolute_value_analytic():
    grid = Grid(x_lo=-6, x_hi=6, step=1.0)
    g = g_from(grid, np.abs(grid.points))
    pol = extract_sS(g, K=2.0)
    assert (pol.s, pol.S) == (-2.0, 0.0)


def test_extract_zero_K_gives_base_stock():
    grid = Grid(x_lo=-6, x_hi=6, step=1.0)
    g = g_from(grid, (grid.points - 1.0) ** 2)
    pol = extract_sS(g, K=0.0)
    assert pol.s == pol.S == 1.0


def test_extract_boundary_argmin_errors():
    grid = Grid(x_lo=0, x_hi=5, step=1.0)
    g = g_from(grid, grid.points.copy())
    with pytest.raises(ModelError, match="grid too narrow"):
        extract_sS(g, K=1.0)


def test_extract_level_set_guarantees(discounted_a_09):
    g = discounted_a_09.g
    pol = discounted_a_09.policy
    K = 2.0
    s_idx = g.grid.index_of(pol.s)
    S_idx = g.grid.index_of(pol.S)
    level = K + g.values[S_idx]
    assert g.values[s_idx] <= level + 1e-9
    assert np.all(g.values[:s_idx] > level)


def test_instance_a_g_threshold_structure(discounted_a_09):
    # decreasing left tail up to s, and no-order region to the right of s
    vals = discounted_a_09.g.values
    s_idx = discounted_a_09.g.grid.index_of(discounted_a_09.policy.s)
    assert np.all(np.diff(vals[: s_idx + 1]) <= 1e-9)
    for i in range(s_idx, vals.size):
        assert np.all(vals[i] <= vals[i:] + 2.0 + 1e-9)


# --------------------------------------------------------------- K-convexity


def test_convex_implies_k_convex():
    grid = Grid(x_lo=-8, x_hi=8, step=1.0)
    g = g_from(grid, grid.points**2)
    for K in (0.0, 1.0, 10.0):
        assert is_K_convex(g, K).verdict


def test_step_down_of_height_K_passes():
    grid = Grid(x_lo=-8, x_hi=8, step=1.0)
    K = 3.0
    vals = np.where(grid.points < 0, K, 0.0)
    assert is_K_convex(g_from(grid, vals), K).verdict


def test_step_down_of_height_K_plus_one_fails():
    grid = Grid(x_lo=-8, x_hi=8, step=1.0)
    K = 3.0
    vals = np.where(grid.points < 0, K + 1.0, 0.0)
    rep = is_K_convex(g_from(grid, vals), K)
    assert not rep.verdict
    x, m, y = rep.worst_triple
    assert x < m < 0 <= y  # violating triple straddles the jump
    lam = (m - x) / (y - x)
    assert rep.worst_violation == pytest.approx(lam, abs=1e-12)


def test_k_convex_short_grids_trivial():
    grid = Grid(x_lo=0, x_hi=1, step=1.0)
    assert is_K_convex(g_from(grid, [1.0, 0.0]), 0.0).verdict


convex_vals = st.lists(st.floats(0.0, 5.0), min_size=12, max_size=12).map(
    lambda d2: np.concatenate(([0.0], np.cumsum(np.cumsum(sorted(d2))))),
)


@given(d2=st.lists(st.floats(0.0, 4.0), min_size=10, max_size=10), K=st.floats(0.0, 5.0))
@settings(max_examples=40, deadline=None)
def test_k_convexity_of_random_convex_functions(d2, K):
    # convex grid values from nonnegative second differences
    n = len(d2) + 2
    slopes = np.cumsum([-sum(d2) / 2.0] + d2)
    vals = np.concatenate(([0.0], np.cumsum(slopes)))
    grid = Grid(x_lo=0, x_hi=n - 1, step=1.0)
    assert is_K_convex(g_from(grid, vals), K).verdict


@given(
    d2=st.lists(st.floats(0.0, 3.0), min_size=8, max_size=8),
    K=st.floats(0.5, 4.0),
    frac=st.floats(0.0, 1.0),
    theta=st.integers(-3, 3),
)
@settings(max_examples=40, deadline=None)
def test_k_convexity_closure_under_demand_expectation(d2, K, frac, theta):
    # g = convex + (step down of height <= K at theta) stays K-convex,
    # and so does its expectation under a demand shift
    def g_fn(x):
        x = np.asarray(x, dtype=float)
        conv = 0.05 * x**2
        for j, c in enumerate(d2):
            conv = conv + c * np.maximum(x - (j - 4), 0.0)
        return conv + frac * K * (x < theta)

    grid = Grid(x_lo=-8, x_hi=8, step=1.0, integer_mode=True)
    demand = DemandDistribution.from_atoms([(0, 0.3), (1, 0.4), (3, 0.3)])
    direct = g_fn(grid.points)
    shifted = sum(p * g_fn(grid.points - d) for d, p in zip(demand.values, demand.probs))
    assert is_K_convex(g_from(grid, direct), K, tol=1e-9).verdict
    assert is_K_convex(g_from(grid, shifted), K, tol=1e-9).verdict


@given(
    d2=st.lists(st.floats(0.1, 3.0), min_size=9, max_size=9),
    K=st.floats(0.5, 4.0),
    frac=st.floats(0.0, 1.0),
    theta=st.integers(-4, 4),
)
@settings(max_examples=40, deadline=None)
def test_extract_threshold_structure_on_k_convex_inputs(d2, K, frac, theta):
    xs = np.arange(-10.0, 11.0)
    conv = 0.5 * np.abs(xs) + sum(
        c * np.maximum(xs - (j - 4), 0.0) for j, c in enumerate(d2)
    )
    vals = conv + frac * K * (xs < theta)
    grid = Grid(x_lo=-10, x_hi=10, step=1.0, integer_mode=True)
    g = g_from(grid, vals)
    assert is_K_convex(g, K).verdict
    try:
        pol = extract_sS(g, K)
    except ModelError:
        return  # boundary argmin; nothing to assert
    s_idx, S_idx = grid.index_of(pol.s), grid.index_of(pol.S)
    level = K + vals[S_idx]
    # decreasing left tail up to s, and no-order region property
    left = vals[: s_idx + 1]
    assert np.all(np.diff(left) <= 1e-9)
    for i in range(s_idx, grid.n):
        assert np.all(vals[i] <= vals[i:] + K + 1e-9)


# ------------------------------------------------------------ zero setup


def test_zero_setup_stub(zero_stub):
    zs = solve_zero_setup(zero_stub, 0.9, tol=1e-10)
    assert np.all(zs.v0.values == 0.0)
    assert zs.convexity.verdict


def test_zero_setup_base_stock(instance_a, zero_setup_a_09):
    pol = extract_sS(zero_setup_a_09.g0, K=0.0)
    assert pol.s == pol.S


def test_zero_setup_below_full_value(instance_a, solve_a_09, zero_setup_a_09):
    assert np.all(zero_setup_a_09.v0.values <= solve_a_09.value.values + 1e-8)


# ------------------------------------------------------- finite-horizon sS


def test_finite_horizon_agreement(instance_a, zero_setup_a_09):
    res = finite_horizon_sS(instance_a, 0.9, 3, tol=1e-8, zero_setup=zero_setup_a_09)
    assert res.agreement_ok, res.mismatches
    assert all(p is not None for p in res.policies)
    assert not res.warnings


def test_finite_horizon_base_stock_when_K_zero(instance_a):
    from dataclasses import replace

    m0 = replace(instance_a, K=0.0)
    res = finite_horizon_sS(m0, 0.9, 6, tol=1e-8)
    assert all(p.s == p.S for p in res.policies)


def test_finite_horizon_single_step_construction(instance_a, zero_setup_a_09):
    # the t=0 stage function is c_bar x + E h(x-D) + alpha E v0(x-D)
    res = finite_horizon_sS(instance_a, 0.9, 1, tol=1e-8, zero_setup=zero_setup_a_09)
    g0 = build_G(instance_a, zero_setup_a_09.v0, 0.9, kind="finite_t", t=0, terminal_id="v0_alpha")
    direct = extract_sS(g0, instance_a.K)
    assert res.policies[0].pair() == direct.pair()


# -------------------------------------------------------------- discounted


def test_discounted_policy_matches_value(discounted_a_09):
    assert discounted_a_09.eval_gap <= 1e-6
    assert discounted_a_09.k_convexity.verdict
    assert discounted_a_09.policy.pair() == (1.0, 2.0)


def test_discounted_trace_settles(instance_a, solve_a_09, zero_setup_a_09):
    res = discounted_sS(
        instance_a, 0.9, tol=1e-8, solve=solve_a_09, zero_setup=zero_setup_a_09,
        horizon_trace=True, trace_t_max=60,
    )
    assert res.trace_settle_t is not None
    assert res.trace[-1] == res.policy.pair()


def test_discounted_degenerate_thresholds_nonpositive(degenerate_model):
    for alpha in (0.5, 0.9, 0.99):
        res = discounted_sS(degenerate_model, alpha, tol=1e-8, horizon_trace=False)
        assert res.policy.s <= res.policy.S <= 0.0


# ----------------------------------------------------------------- average


def test_average_degenerate_short_circuit(degenerate_model):
    res = ssdp.average_sS(degenerate_model)
    assert res.degenerate and res.policy.pair() == (0.0, 0.0)
    assert "zero demand" in res.note


def test_average_instance_a(average_a):
    assert not average_a.degenerate
    assert average_a.settled and average_a.bounded_ok
    assert average_a.optimality.passes
    assert average_a.policy.context == "average"


# ------------------------------------------------------------------- slope


def test_slope_condition_holds_instance_a(instance_a):
    rep = slope_condition(instance_a)
    assert rep.holds and rep.quotient == pytest.approx(-3.0)
    z, y = rep.witness
    assert (instance_a.h(y) - instance_a.h(z)) / (y - z) < -instance_a.c_bar


def test_slope_condition_fails_with_expensive_units(instance_a):
    from dataclasses import replace

    m = replace(instance_a, c_bar=4.0)
    assert not slope_condition(m).holds


def test_slope_condition_fails_flat_h(zero_stub):
    assert not slope_condition(zero_stub).holds


# ------------------------------------------------------------------ chains


def test_g_chain_ordering(instance_a, solve_a_09, zero_setup_a_09):
    alpha = 0.9
    fin = solve_finite(instance_a, 30, zero_setup_a_09.terminal(), alpha)
    g_alpha = build_G(instance_a, solve_a_09.value, alpha, kind="infinite")
    prev = zero_setup_a_09.g0.values
    for t in range(30):
        g_t = build_G(instance_a, fin.values[t], alpha, kind="finite_t", t=t).values
        assert np.all(prev <= g_t + 1e-12)
        prev = g_t
    assert np.all(prev <= g_alpha.values + 1e-8)


def test_ss_policy_validation():
    with pytest.raises(ModelError):
        SsPolicy(s=3.0, S=1.0)
    pol = SsPolicy(s=-2.0, S=1.0)
    assert pol.order_quantity(-4.0) == 5.0
    assert pol.order_quantity(-2.0) == 0.0
    assert np.array_equal(pol.order_quantity(np.array([-3.0, 0.0])), np.array([4.0, 0.0]))
