import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ssdp.model import DemandDistribution, ModelError
from ssdp.renewal import overshoot_bound_check, sample_renewal, wald_check

from conftest import make_instance_a


def d_point(v=1.0):
    return DemandDistribution.from_atoms([(v, 1.0)])


def test_deterministic_renewal_exact():
    s = sample_renewal(d_point(1.0), y=5.0, n_paths=200, seed=3)
    assert np.all(s.counts == 5)
    assert np.all(s.first_passage == 6.0)
    assert np.all(s.overshoot == 1.0)


def test_negative_y_empty_interval():
    s = sample_renewal(d_point(2.0), y=-1.0, n_paths=50, seed=3)
    assert np.all(s.counts == 0)
    assert np.all(s.first_passage == 2.0)


def test_degenerate_demand_rejected():
    with pytest.raises(ModelError, match="degenerate"):
        sample_renewal(d_point(0.0), y=1.0, n_paths=10, seed=0)


def test_geometric_count_at_zero(instance_a):
    # N(0) counts leading zero demands: mean p0/(1-p0) = 1/3
    s = sample_renewal(instance_a.demand, y=0.0, n_paths=50_000, seed=11)
    se = s.counts.std(ddof=1) / np.sqrt(s.n_paths)
    assert abs(s.mean_count - 1.0 / 3.0) <= 3 * se


def test_reproducible_bit_for_bit(instance_a):
    a = sample_renewal(instance_a.demand, y=7.0, n_paths=2000, seed=42)
    b = sample_renewal(instance_a.demand, y=7.0, n_paths=2000, seed=42)
    assert np.array_equal(a.counts, b.counts)
    assert np.array_equal(a.first_passage, b.first_passage)
    c = sample_renewal(instance_a.demand, y=7.0, n_paths=2000, seed=43)
    assert not np.array_equal(a.first_passage, c.first_passage)


@given(y=st.floats(-1.0, 12.0), seed=st.integers(0, 2**32 - 1))
@settings(max_examples=25, deadline=None)
def test_path_invariants(y, seed):
    m = make_instance_a()
    s = sample_renewal(m.demand, y=y, n_paths=64, seed=seed)
    assert np.all(s.first_passage > y)
    assert np.all(s.overshoot > 0)
    if y >= 0:
        # partial sum before the passage never exceeded y
        assert np.all(s.first_passage - s.overshoot <= y + 1e-12)


# ----------------------------------------------------------------- wald


def test_wald_exact_deterministic():
    s = sample_renewal(d_point(1.0), y=5.0, n_paths=100, seed=1)
    rep = wald_check(s, d_point(1.0))
    assert rep.lhs == 6.0 and rep.rhs == 6.0
    assert rep.z == 0.0 and rep.passes


def test_wald_monte_carlo(instance_a):
    s = sample_renewal(instance_a.demand, y=10.0, n_paths=100_000, seed=7)
    rep = wald_check(s, instance_a.demand)
    assert rep.z is not None and abs(rep.z) <= 4.0


def test_wald_single_path_inconclusive(instance_a):
    s = sample_renewal(instance_a.demand, y=3.0, n_paths=1, seed=5)
    rep = wald_check(s, instance_a.demand)
    assert rep.z is None and not rep.passes


# -------------------------------------------------------------- overshoot


def test_overshoot_deterministic_case(instance_a):
    m = instance_a
    d1 = d_point(1.0)
    from dataclasses import replace

    m1 = replace(m, demand=d1)
    rep = overshoot_bound_check(m1, x=0.0, y=2.0, n_paths=500, seed=9)
    # every path: N(2) = 2, S_3 = 3, so lhs = h(-3) exactly and rhs = 3 h(-3)
    assert rep.lhs == pytest.approx(float(m.h(-3.0)), abs=1e-12)
    assert rep.rhs == pytest.approx(3.0 * float(m.h(-3.0)), abs=1e-12)
    assert rep.passes


def test_overshoot_monte_carlo_at_origin(instance_a):
    rep = overshoot_bound_check(instance_a, x=0.0, y=0.0, n_paths=100_000, seed=13)
    assert rep.passes
    assert rep.lhs > 0.0  # overshoot costs something


def test_overshoot_vanishes_for_large_x(instance_a):
    rep = overshoot_bound_check(instance_a, x=1e6, y=2.0, n_paths=200, seed=3)
    assert rep.lhs == 0.0
    assert rep.passes


def test_overshoot_requires_nonnegative_y(instance_a):
    with pytest.raises(ModelError):
        overshoot_bound_check(instance_a, x=0.0, y=-1.0, n_paths=10, seed=0)
