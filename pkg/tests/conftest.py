"""Shared fixtures and independent oracles.

The oracles here re-derive everything from scratch (pure-Python enumeration,
hand-rolled kernel rows, direct linear solves) so the tests never trust the
solver's own code paths for expected values.
"""

import numpy as np
import pytest

import ssdp
from ssdp import average


def make_instance_a():
    """Integer benchmark: grid [-20,20], K=2, c_bar=1, h=max(x,-3x), D in {0,1,2}."""
    grid = ssdp.Grid(x_lo=-20, x_hi=20, step=1.0, integer_mode=True)
    h = ssdp.PiecewiseLinear.from_breakpoints([[-1, 3], [0, 0], [1, 1]])
    demand = ssdp.DemandDistribution.from_atoms([(0, 0.25), (1, 0.5), (2, 0.25)])
    return ssdp.InventoryModel(K=2.0, c_bar=1.0, h=h, demand=demand, grid=grid)


def make_zero_stub():
    """Degenerate test double: zero costs everywhere."""
    grid = ssdp.Grid(x_lo=-10, x_hi=10, step=1.0, integer_mode=True)
    h = ssdp.PiecewiseLinear.from_breakpoints([[0, 0], [1, 0]])
    demand = ssdp.DemandDistribution.from_atoms([(0, 0.5), (1, 0.5)])
    return ssdp.InventoryModel(K=0.0, c_bar=0.0, h=h, demand=demand, grid=grid)


def make_degenerate():
    """Zero demand almost surely on a grid with negative states."""
    grid = ssdp.Grid(x_lo=-10, x_hi=20, step=1.0, integer_mode=True)
    h = ssdp.PiecewiseLinear.from_breakpoints([[-1, 3], [0, 0], [1, 1]])
    demand = ssdp.DemandDistribution.from_atoms([(0.0, 1.0)])
    return ssdp.InventoryModel(K=2.0, c_bar=1.0, h=h, demand=demand, grid=grid)


@pytest.fixture(scope="session")
def instance_a():
    return make_instance_a()


@pytest.fixture(scope="session")
def zero_stub():
    return make_zero_stub()


@pytest.fixture(scope="session")
def degenerate_model():
    return make_degenerate()


@pytest.fixture(scope="session")
def solve_a_09(instance_a):
    return ssdp.solve_infinite(instance_a, 0.9, tol=1e-8)


@pytest.fixture(scope="session")
def zero_setup_a_09(instance_a):
    return ssdp.solve_zero_setup(instance_a, 0.9, tol=1e-8)


@pytest.fixture(scope="session")
def discounted_a_09(instance_a, solve_a_09, zero_setup_a_09):
    return ssdp.discounted_sS(
        instance_a, 0.9, tol=1e-8, solve=solve_a_09, zero_setup=zero_setup_a_09
    )


@pytest.fixture(scope="session")
def sweep_a(instance_a):
    return average.sweep(instance_a, average.geometric_schedule(12), tol=1e-7)


@pytest.fixture(scope="session")
def average_a(instance_a, sweep_a):
    return ssdp.average_sS(instance_a, sweep_result=sweep_a)


@pytest.fixture(scope="session")
def sweep_degenerate(degenerate_model):
    return average.sweep(degenerate_model, average.geometric_schedule(12), tol=1e-7)


# ---------------------------------------------------------------- oracles


def oracle_interp(grid, values, y):
    """Clamped linear interpolation of grid values, written from scratch."""
    y = min(max(y, grid.x_lo), grid.x_hi)
    pos = (y - grid.x_lo) / grid.step
    i0 = int(np.floor(pos))
    if i0 >= grid.n - 1:
        return float(values[grid.n - 1])
    w = pos - i0
    return float((1.0 - w) * values[i0] + w * values[i0 + 1])


def oracle_cost(model, x, a):
    """c(x, a) by direct summation over atoms in fixed order."""
    c = (model.K if a > 0 else 0.0) + model.c_bar * a
    for d, p in zip(model.demand.values, model.demand.probs):
        c += p * float(model.h(x + a - d))
    return c


def oracle_bellman(model, values, alpha):
    """Exhaustive enumeration of the Bellman update; returns (v', argmin actions)."""
    g = model.grid
    out_v = np.empty(g.n)
    out_a = np.empty(g.n)
    for i in range(g.n):
        x = float(g.points[i])
        best, best_a = None, None
        for k in range(g.n - i):
            a = k * g.step
            q = oracle_cost(model, x, a)
            if alpha > 0:
                cont = 0.0
                for d, p in zip(model.demand.values, model.demand.probs):
                    cont += p * oracle_interp(g, values, x + a - d)
                q += alpha * cont
            if best is None or q < best - 1e-15:
                best, best_a = q, a
        out_v[i] = best
        out_a[i] = best_a
    return out_v, out_a


def oracle_pair_value(model, s_idx, S_idx, alpha):
    """Value of the (s,S)-pair policy via a direct linear solve.

    Transition rows are rebuilt from scratch with clamp-and-interpolate
    semantics, independent of the package kernel.
    """
    g = model.grid
    n = g.n
    P = np.zeros((n, n))
    c = np.empty(n)
    for i in range(n):
        k = S_idx - i if i < s_idx else 0
        a = k * g.step
        c[i] = oracle_cost(model, float(g.points[i]), a)
        post = g.points[i] + a
        for d, p in zip(model.demand.values, model.demand.probs):
            y = min(max(post - d, g.x_lo), g.x_hi)
            pos = (y - g.x_lo) / g.step
            i0 = min(int(np.floor(pos)), n - 2)
            w = pos - i0
            P[i, i0] += p * (1.0 - w)
            P[i, i0 + 1] += p * w
    return np.linalg.solve(np.eye(n) - alpha * P, c)
