"""Model primitives: state grid, demand atoms, cost structure, transition kernel.

The state space is a uniform lattice of inventory levels.  Actions are
order-up-to moves on the same lattice, so ordering ``a`` from state ``x``
lands at the grid point ``x + a``.  Demand atoms may sit off-lattice; the
kernel then splits transition mass between the two neighbouring grid points
with linear weights, and clamps anything that would fall below the bottom
of the grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

__all__ = [
    "ModelError",
    "Grid",
    "PiecewiseLinear",
    "DemandDistribution",
    "ContinuousDemand",
    "discretize_demand",
    "InventoryModel",
    "Kernel",
    "build_kernel",
    "post_expectation_matrix",
    "CostTable",
    "build_cost",
    "ValueTable",
    "PolicyTable",
]

CONVEXITY_SLACK = 1e-12
TRUNCATION_FLOOR = 1.0 - 1e-8


class ModelError(ValueError):
    """Raised when a grid, demand, cost, or model specification is invalid."""


@dataclass(frozen=True)
class Grid:
    """Uniform lattice of inventory levels spanning [x_lo, x_hi]."""

    x_lo: float
    x_hi: float
    step: float = 1.0
    integer_mode: bool = False

    def __post_init__(self) -> None:
        if not self.step > 0:
            raise ModelError(f"grid step must be positive, got {self.step}")
        if not self.x_lo < self.x_hi:
            raise ModelError(f"grid needs x_lo < x_hi, got [{self.x_lo}, {self.x_hi}]")
        n_real = (self.x_hi - self.x_lo) / self.step + 1.0
        n = int(round(n_real))
        if n < 2 or abs(n_real - n) > 1e-9:
            raise ModelError(
                f"grid span ({self.x_lo}, {self.x_hi}) is not a whole number of steps {self.step}"
            )
        if self.integer_mode:
            if self.step != 1.0:
                raise ModelError("integer_mode requires step = 1")
            if self.x_lo != int(self.x_lo) or self.x_hi != int(self.x_hi):
                raise ModelError("integer_mode requires integer endpoints")
        points = self.x_lo + self.step * np.arange(n, dtype=float)
        points.flags.writeable = False
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "points", points)

    n: int = field(init=False, default=0)
    # points: np.ndarray, filled in __post_init__

    def position(self, x: float) -> float:
        """Fractional grid coordinate of ``x`` (0 at x_lo, n-1 at x_hi)."""
        return (x - self.x_lo) / self.step

    def index_of(self, x: float, tol: float = 1e-9) -> int:
        pos = self.position(x)
        idx = int(round(pos))
        if idx < 0 or idx >= self.n or abs(pos - idx) > tol:
            raise ModelError(f"{x} is not a grid point of [{self.x_lo}, {self.x_hi}] step {self.step}")
        return idx

    def nearest_index(self, x) -> np.ndarray:
        pos = np.clip(np.round(self.position(np.asarray(x, dtype=float))), 0, self.n - 1)
        return pos.astype(int)


class PiecewiseLinear:
    """Piecewise-linear function given by breakpoints, extended linearly.

    Beyond the first/last breakpoint the end segments continue with their
    slopes, so the function is defined (and exact) on all of R.  This is the
    canonical representation for holding/backorder cost curves: expectations
    over demand atoms and convexity checks are then exact sums.
    """

    def __init__(self, xs: Sequence[float], ys: Sequence[float]):
        xs_arr = np.asarray(xs, dtype=float)
        ys_arr = np.asarray(ys, dtype=float)
        if xs_arr.ndim != 1 or xs_arr.shape != ys_arr.shape or xs_arr.size < 2:
            raise ModelError("need at least two (x, y) breakpoints")
        order = np.argsort(xs_arr)
        xs_arr, ys_arr = xs_arr[order], ys_arr[order]
        if np.any(np.diff(xs_arr) <= 0):
            raise ModelError("breakpoint x values must be distinct")
        self.xs = xs_arr
        self.ys = ys_arr
        self.slopes = np.diff(ys_arr) / np.diff(xs_arr)

    @classmethod
    def from_breakpoints(cls, pairs: Iterable[Sequence[float]]) -> "PiecewiseLinear":
        pts = list(pairs)
        return cls([p[0] for p in pts], [p[1] for p in pts])

    @classmethod
    def from_samples(cls, fn: Callable[[float], float], xs: Sequence[float]) -> "PiecewiseLinear":
        """Sample a callable (e.g. a polynomial) onto explicit breakpoints."""
        return cls(list(xs), [float(fn(x)) for x in xs])

    def __call__(self, x):
        arr = np.asarray(x, dtype=float)
        out = np.interp(arr, self.xs, self.ys)
        below = arr < self.xs[0]
        above = arr > self.xs[-1]
        if np.any(below):
            out = np.where(below, self.ys[0] + (arr - self.xs[0]) * self.slopes[0], out)
        if np.any(above):
            out = np.where(above, self.ys[-1] + (arr - self.xs[-1]) * self.slopes[-1], out)
        return float(out) if np.isscalar(x) or arr.ndim == 0 else out

    def is_convex(self, tol: float = CONVEXITY_SLACK) -> bool:
        return bool(np.all(np.diff(self.slopes) >= -tol))

    def min_point(self) -> tuple[float, float]:
        """Smallest location of the global minimum and the minimum value.

        Requires the function to be bounded below, i.e. a non-positive slope
        on the left end and a non-negative slope on the right end.
        """
        if self.slopes[0] > 0 or self.slopes[-1] < 0:
            raise ModelError("function is unbounded below; no finite minimizer")
        k = int(np.argmin(self.ys))
        return float(self.xs[k]), float(self.ys[k])

    def shifted_to_origin(self) -> tuple["PiecewiseLinear", float, float]:
        """Recentre so the minimum sits at 0 with value 0; returns (h, x*, offset)."""
        x_star, y_min = self.min_point()
        if x_star == 0.0 and y_min == 0.0:
            return self, 0.0, 0.0
        return PiecewiseLinear(self.xs - x_star, self.ys - y_min), x_star, y_min


@dataclass(frozen=True, eq=False)
class DemandDistribution:
    """Finite probability mass table for the per-period demand.

    ``truncation_mass`` records how much probability the atoms covered
    before renormalization (1.0 for native discrete tables, 1 - 1e-8 for
    quantile-discretized continuous demand).
    """

    values: np.ndarray
    probs: np.ndarray
    source: str = "native-discrete"
    truncation_mass: float = 1.0

    def __post_init__(self) -> None:
        v = np.asarray(self.values, dtype=float)
        p = np.asarray(self.probs, dtype=float)
        if v.size == 0:
            raise ModelError("demand needs at least one atom")
        if v.shape != p.shape or v.ndim != 1:
            raise ModelError("demand values/probs must be matching 1-d arrays")
        if np.any(v < 0):
            raise ModelError("demand atoms must be nonnegative")
        if np.any(p <= 0):
            raise ModelError("demand atom probabilities must be positive")
        if np.any(np.diff(v) <= 0):
            raise ModelError("demand atoms must be sorted and distinct")
        if abs(p.sum() - 1.0) > 1e-12:
            raise ModelError("demand probabilities must sum to 1 (renormalize first)")
        if self.truncation_mass < TRUNCATION_FLOOR - 1e-12:
            raise ModelError(
                f"atoms cover mass {self.truncation_mass}, below the {TRUNCATION_FLOOR} floor"
            )
        v.flags.writeable = False
        p.flags.writeable = False
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "probs", p)

    @classmethod
    def from_atoms(
        cls, atoms: Iterable[Sequence[float]], source: str = "native-discrete"
    ) -> "DemandDistribution":
        """Build from (value, prob) pairs: merge duplicates, drop zero mass, renormalize."""
        pts = [(float(v), float(p)) for v, p in atoms]
        if any(p < 0 for _, p in pts):
            raise ModelError("demand atom probabilities must be nonnegative")
        raw_mass = sum(p for _, p in pts)
        merged: dict[float, float] = {}
        for v, p in pts:
            if p > 0.0:
                merged[v] = merged.get(v, 0.0) + p
        if not merged:
            raise ModelError("demand needs at least one atom with positive probability")
        vals = np.array(sorted(merged), dtype=float)
        probs = np.array([merged[v] for v in vals], dtype=float)
        probs = probs / probs.sum()
        return cls(values=vals, probs=probs, source=source, truncation_mass=raw_mass)

    @property
    def n_atoms(self) -> int:
        return int(self.values.size)

    @property
    def mean(self) -> float:
        return float(np.dot(self.values, self.probs))

    @property
    def max_value(self) -> float:
        return float(self.values[-1])

    @property
    def p_positive(self) -> float:
        return float(self.probs[self.values > 0].sum())

    def cdf_grid(self) -> np.ndarray:
        return np.cumsum(self.probs)

    def sample(self, rng: np.random.Generator, size) -> np.ndarray:
        """Inverse-CDF draws over the atom table."""
        u = rng.random(size)
        return self.values[np.searchsorted(self.cdf_grid(), u, side="left")]


@dataclass(frozen=True)
class ContinuousDemand:
    """Parametric continuous demand to be quantile-discretized.

    Families and parameter names: ``uniform`` {low, high}, ``exponential``
    {mean}, ``gamma`` {shape, scale}, ``normal`` {mean, std} (always rejected:
    it puts mass on negative demand), ``point`` {value}.
    """

    family: str
    params: dict

    def frozen(self):
        from scipy import stats

        fam, p = self.family, self.params
        if fam == "uniform":
            return stats.uniform(loc=p["low"], scale=p["high"] - p["low"])
        if fam == "exponential":
            return stats.expon(scale=p["mean"])
        if fam == "gamma":
            return stats.gamma(p["shape"], scale=p["scale"])
        if fam == "normal":
            return stats.norm(loc=p["mean"], scale=p["std"])
        raise ModelError(f"unknown demand family {fam!r}")


def discretize_demand(spec: ContinuousDemand, n_atoms: int) -> DemandDistribution:
    """Quantile-discretize a continuous demand into equal-probability atoms.

    The distribution is truncated at its 1 - 1e-8 quantile, split into
    ``n_atoms`` equal-probability bins, and each bin is replaced by an atom
    at its conditional mean.  By the tower property the atom mean equals the
    truncated mean exactly, so means of closed-form families are preserved
    to quadrature precision.
    """
    if spec.family == "point":
        value = float(spec.params["value"])
        if value < 0:
            raise ModelError("demand must be nonnegative: P(D < 0) > 0")
        return DemandDistribution.from_atoms([(value, 1.0)], source="discretized-continuous")
    if n_atoms < 2:
        raise ModelError("n_atoms must be at least 2")
    dist = spec.frozen()
    if dist.cdf(0.0) > 1e-15 or dist.ppf(0.0) < -1e-12:
        raise ModelError(f"demand family {spec.family!r} has P(D < 0) > 0")
    p_hi = TRUNCATION_FLOOR
    edges = dist.ppf(np.linspace(0.0, p_hi, n_atoms + 1))
    edges[0] = max(edges[0], 0.0)
    atoms = []
    for lo, hi in zip(edges[:-1], edges[1:]):
        if hi <= lo:
            mean = lo
        else:
            mean = dist.expect(lambda t: t, lb=lo, ub=hi, conditional=True)
        atoms.append((float(mean), 1.0 / n_atoms * p_hi))
    out = DemandDistribution.from_atoms(atoms, source="discretized-continuous")
    if not math.isfinite(out.mean):
        raise ModelError("discretized demand has non-finite mean")
    return out


@dataclass(frozen=True, eq=False)
class InventoryModel:
    """Inventory control instance: fixed cost K, unit cost c_bar, holding curve h,
    demand atoms, and the state grid.

    On construction, ``h`` is recentred so its minimum sits at 0 with value 0
    (the ``h_shift`` attribute records the applied shift).  Hard validation
    covers convexity and nonnegativity of ``h`` on the region where costs are
    evaluated; coercivity-style conditions are recorded as soft flags in
    ``h_flags`` so degenerate test stubs (e.g. h = 0) remain constructible.
    """

    K: float
    c_bar: float
    h: PiecewiseLinear
    demand: DemandDistribution
    grid: Grid

    def __post_init__(self) -> None:
        if self.K < 0:
            raise ModelError("fixed ordering cost K must be nonnegative")
        if self.c_bar < 0:
            raise ModelError("unit ordering cost c_bar must be nonnegative")
        if not self.h.is_convex():
            raise ModelError("holding/backorder cost h must be convex")
        try:
            h_norm, x_star, offset = self.h.shifted_to_origin()
        except ModelError:
            # One-sided curves (no global minimizer) are usable when the grid
            # never probes the unbounded direction; they must come anchored.
            if abs(self.h(0.0)) > 1e-12:
                raise ModelError(
                    "h has no finite minimizer to recentre on and h(0) != 0"
                ) from None
            h_norm, x_star, offset = self.h, 0.0, 0.0
        object.__setattr__(self, "h", h_norm)
        object.__setattr__(self, "h_shift", (x_star, offset))

        # h is evaluated (exactly, never clamped) on [x_lo - d_max, x_hi].
        lo = self.grid.x_lo - self.demand.max_value
        hi = self.grid.x_hi
        probes = np.concatenate(
            ([lo, hi], h_norm.xs[(h_norm.xs > lo) & (h_norm.xs < hi)], self.grid.points)
        )
        vals = h_norm(probes)
        if np.any(vals < -1e-12):
            raise ModelError("h must be nonnegative on the cost evaluation region")
        # Convexity on grid triples (redundant with slope convexity, kept as a
        # direct certificate of the discretized curve).
        gv = h_norm(self.grid.points)
        if self.grid.n >= 3:
            mid_excess = gv[1:-1] - 0.5 * (gv[:-2] + gv[2:])
            if np.any(mid_excess > CONVEXITY_SLACK):
                raise ModelError("h fails the convexity check on grid triples")

        neg = self.grid.points < 0
        flags = {
            "positive_on_negatives": bool(np.all(gv[neg] > 0)) if np.any(neg) else True,
            "coercive_left": bool(h_norm.slopes[0] < 0),
            "coercive_right": bool(h_norm.slopes[-1] > 0),
        }
        object.__setattr__(self, "h_flags", flags)

    h_shift: tuple = field(init=False, default=(0.0, 0.0))
    # h_flags: dict, filled in __post_init__

    def expected_h(self, x_post) -> np.ndarray:
        """E h(x_post - D), exact over atoms, unclamped."""
        arr = np.asarray(x_post, dtype=float)
        out = np.zeros_like(arr)
        for d, p in zip(self.demand.values, self.demand.probs):
            out = out + p * self.h(arr - d)
        return float(out) if arr.ndim == 0 else out

    def order_cost(self, a) -> np.ndarray:
        arr = np.asarray(a, dtype=float)
        out = self.K * (arr > 0) + self.c_bar * arr
        return float(out) if arr.ndim == 0 else out


def post_expectation_matrix(
    model: InventoryModel, extrapolate: bool = False
) -> tuple[np.ndarray, int]:
    """Matrix W with (W @ v)[j] = E v(x_j - D) under grid evaluation of v.

    Off-lattice points are linearly interpolated.  Points below x_lo are
    clamped to x_lo when ``extrapolate`` is false (transition-kernel
    semantics) and linearly extrapolated from the two lowest grid points
    when true (G-function semantics).  The returned count is the number of
    (post-state, atom) pairs that fell below the grid.
    """
    g = model.grid
    n = g.n
    rows = np.arange(n)
    W = np.zeros((n, n))
    flagged = 0
    for d, p in zip(model.demand.values, model.demand.probs):
        pos = (g.points - d - g.x_lo) / g.step
        flagged += int(np.count_nonzero(pos < 0))
        if not extrapolate:
            pos = np.maximum(pos, 0.0)
        pos = np.minimum(pos, n - 1.0)
        i0 = np.clip(np.floor(pos).astype(int), 0, n - 2)
        w = pos - i0
        np.add.at(W, (rows, i0), p * (1.0 - w))
        np.add.at(W, (rows, i0 + 1), p * w)
    return W, flagged


@dataclass(eq=False)
class Kernel:
    """Demand-driven transition kernel q(. | x, a) on the grid.

    Next state is x + a - D clamped to the grid; mass off the lattice is
    split between neighbouring grid points.  ``clamp_events`` counts
    (post-state, atom) pairs that hit the lower boundary.
    """

    model: InventoryModel
    matrix: np.ndarray
    clamp_events: int
    boundary_policy: str = "clamp"

    def expect(self, v: np.ndarray) -> np.ndarray:
        """E v(next) indexed by post-order position j (state + order)."""
        return self.matrix @ v

    def row(self, x_index: int, order_steps: int) -> np.ndarray:
        j = x_index + order_steps
        if order_steps < 0 or j >= self.model.grid.n:
            raise ModelError("infeasible action: order must keep x + a within the grid")
        return self.matrix[j]


def build_kernel(model: InventoryModel) -> Kernel:
    W, clamped = post_expectation_matrix(model, extrapolate=False)
    return Kernel(model=model, matrix=W, clamp_events=clamped)


@dataclass(eq=False)
class CostTable:
    """One-step costs c(x, a) = K 1{a>0} + c_bar a + E h(x + a - D).

    ``matrix[i, k]`` is the cost of ordering k grid steps from state i
    (+inf where x + a would leave the grid).  ``eh[j]`` is the exact
    expected holding cost at post-order position j.
    """

    model: InventoryModel
    eh: np.ndarray
    matrix: np.ndarray

    def value(self, x_index: int, order_steps: int) -> float:
        c = self.matrix[x_index, order_steps]
        if not np.isfinite(c):
            raise ModelError("infeasible action: order must keep x + a within the grid")
        return float(c)

    def feasible_row(self, x_index: int) -> np.ndarray:
        return self.matrix[x_index, : self.model.grid.n - x_index]


def build_cost(model: InventoryModel) -> CostTable:
    """Tabulate c(x, a) over the grid and all feasible order-up-to actions."""
    if model.demand.n_atoms == 0:
        raise ModelError("demand atom list is empty")
    if not model.h.is_convex():
        raise ModelError("holding/backorder cost h must be convex")
    g = model.grid
    n = g.n
    eh = model.expected_h(g.points)
    matrix = np.full((n, n), np.inf)
    for k in range(n):
        a = k * g.step
        matrix[: n - k, k] = model.order_cost(a) + eh[k:]
    if np.any(matrix[np.isfinite(matrix)] < -1e-12):
        raise ModelError("cost table has negative entries")
    return CostTable(model=model, eh=eh, matrix=matrix)


@dataclass(eq=False)
class ValueTable:
    """Per-state nonnegative costs with a provenance tag."""

    grid: Grid
    values: np.ndarray
    tag: str = ""

    def __post_init__(self) -> None:
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.grid.n,):
            raise ModelError("value table shape does not match the grid")
        if not np.all(np.isfinite(v)):
            raise ModelError("value table must be finite on the grid")
        if np.any(v < -1e-12):
            raise ModelError("value table must be nonnegative")
        object.__setattr__(self, "values", v)


@dataclass(eq=False)
class PolicyTable:
    """Chosen order quantity per state plus the eps-optimal action set."""

    grid: Grid
    chosen: np.ndarray
    action_sets: list

    def __post_init__(self) -> None:
        if self.chosen.shape != (self.grid.n,):
            raise ModelError("policy table shape does not match the grid")
        for i, (a, acts) in enumerate(zip(self.chosen, self.action_sets)):
            if self.grid.points[i] + a > self.grid.x_hi + 1e-9:
                raise ModelError("policy action leaves the grid")
            if acts.size == 0 or not np.any(np.abs(acts - a) < 1e-12):
                raise ModelError(f"chosen action at state index {i} not in its action set")

    def order_steps(self) -> np.ndarray:
        return np.round(self.chosen / self.grid.step).astype(int)
