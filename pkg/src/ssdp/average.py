"""Vanishing-discount average-cost analysis.

Runs discounted solves along a schedule of factors increasing to 1, tracks
m_alpha = min_x v_alpha(x) and the relative values u_alpha = v_alpha -
m_alpha, estimates the optimal average cost as the limit of
(1 - alpha) m_alpha, and verifies the average-cost optimality inequality
for candidate stationary policies.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .model import InventoryModel, ModelError, ValueTable
from .dp import (
    ConvergenceError,
    Workspace,
    policy_order_steps,
    solve_infinite,
)

__all__ = [
    "geometric_schedule",
    "AlphaRecord",
    "VanishingDiscountSweep",
    "RelativeValue",
    "sweep",
    "assumption_B_diagnostic",
    "BDiagnostic",
    "minimizer_set_diagnostic",
    "MinimizerHull",
    "check_optimality_inequality",
    "OptimalityInequalityReport",
    "track_discount_actions",
    "DiscountActionReport",
]

CAUCHY_REL = 0.01
GROWTH_REL = 0.01


def geometric_schedule(n: int) -> list[float]:
    """alpha_k = 1 - 2^-k for k = 1..n."""
    if n < 1:
        raise ModelError("schedule length must be at least 1")
    return [1.0 - 2.0 ** (-k) for k in range(1, n + 1)]


@dataclass(eq=False)
class AlphaRecord:
    alpha: float
    m_alpha: float
    u: np.ndarray
    minimizer_states: np.ndarray
    s: Optional[float]
    S: Optional[float]
    iterations: int
    residual: float
    chosen: np.ndarray
    threshold_warning: Optional[str]

    @property
    def w_point(self) -> float:
        return (1.0 - self.alpha) * self.m_alpha


@dataclass(eq=False)
class RelativeValue:
    """Relative value u at the largest schedule factor plus the w estimate."""

    u: ValueTable
    w: float
    alpha: float
    default_slack: float

    def __post_init__(self) -> None:
        if np.any(self.u.values < -1e-9):
            raise ModelError("relative value must be nonnegative")
        if float(self.u.values.min()) > 1e-9:
            raise ModelError("relative value must vanish at some grid state")


@dataclass(eq=False)
class VanishingDiscountSweep:
    model: InventoryModel
    records: list
    w_estimate: float
    diffs: np.ndarray
    cauchy: bool
    partial: bool
    warnings: list
    tol: float

    @property
    def alphas(self) -> list[float]:
        return [r.alpha for r in self.records]

    def relative_value(self) -> RelativeValue:
        # Default slack for inequality checks: the Cauchy gap of (1-alpha) m_alpha
        # plus the irreducible finite-alpha term.  An alpha-optimal policy has
        # residual (1-alpha) E u(x') exactly, so the u term must appear or wide
        # grids (large u far from the minimizer) fail spuriously.
        last = self.records[-1]
        slack = (1.0 - last.alpha) * float(last.u.max())
        slack += 10.0 * abs(self.diffs[-1]) if self.diffs.size else 1e-6
        return RelativeValue(
            u=ValueTable(grid=self.model.grid, values=last.u, tag=f"u[a={last.alpha}]"),
            w=self.w_estimate,
            alpha=last.alpha,
            default_slack=float(slack),
        )


def _minimizers(v: np.ndarray, xs: np.ndarray) -> tuple[float, np.ndarray]:
    m = float(v.min())
    eps = max(1e-9, 1e-12 * abs(m))
    return m, xs[v <= m + eps]


def _solve_one(model: InventoryModel, alpha: float, tol: float, thresholds: bool) -> AlphaRecord:
    from . import policy as pol

    report = solve_infinite(model, alpha, tol=tol)
    v = report.value.values
    m, mins = _minimizers(v, model.grid.points)
    s = S = None
    warn = None
    if thresholds:
        try:
            g = pol.build_G(model, report.value, alpha, kind="infinite")
            cert = pol.is_K_convex(g, model.K)
            if cert.verdict:
                ss = pol.extract_sS(g, model.K)
                s, S = ss.s, ss.S
            else:
                warn = f"alpha={alpha}: G not K-convex, thresholds withheld"
        except (ModelError, pol.CertificationError) as exc:
            warn = f"alpha={alpha}: {exc}"
    return AlphaRecord(
        alpha=alpha,
        m_alpha=m,
        u=v - m,
        minimizer_states=mins,
        s=s,
        S=S,
        iterations=report.iterations,
        residual=report.residual,
        chosen=report.policy.chosen,
        threshold_warning=warn,
    )


def sweep(
    model: InventoryModel,
    schedule=None,
    tol: float = 1e-7,
    workers: int = 1,
    thresholds: bool = True,
) -> VanishingDiscountSweep:
    """Discounted solves along an increasing schedule of factors.

    Per-alpha solves are independent; with ``workers > 1`` they run on a
    thread pool and are joined back in schedule order, so the sweep record
    is identical at any worker count.  An iteration-cap failure at a high
    factor truncates the schedule and returns a partial sweep with a warning.
    """
    sched = list(schedule) if schedule is not None else geometric_schedule(12)
    if not sched:
        raise ModelError("schedule must be nonempty")
    arr = np.asarray(sched, dtype=float)
    if np.any(arr < 0) or np.any(arr >= 1) or np.any(np.diff(arr) <= 0):
        raise ModelError("schedule must be strictly increasing inside [0,1)")
    warnings: list[str] = []
    records: list[AlphaRecord] = []
    partial = False

    def run(alpha: float):
        try:
            return _solve_one(model, alpha, tol, thresholds)
        except ConvergenceError as exc:
            return exc

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, sched))
    else:
        results = [run(a) for a in sched]
    for alpha, res in zip(sched, results):
        if isinstance(res, ConvergenceError):
            partial = True
            warnings.append(f"alpha={alpha}: solver iteration cap hit; sweep truncated ({res})")
            break
        records.append(res)
        if res.threshold_warning:
            warnings.append(res.threshold_warning)
    if not records:
        raise ConvergenceError("no schedule point converged: " + "; ".join(warnings))
    if len(records) < 3:
        warnings.append("insufficient for limit analysis: need at least 3 schedule points")
    w_points = np.array([r.w_point for r in records])
    diffs = np.diff(w_points)
    cauchy = False
    if diffs.size >= 2:
        scale = max(abs(w_points[-1]), 1e-12)
        cauchy = bool(np.all(np.abs(diffs[-2:]) / scale < CAUCHY_REL))
    if not cauchy:
        warnings.append("(1-alpha) m_alpha is not Cauchy at the end of the schedule")
    return VanishingDiscountSweep(
        model=model,
        records=records,
        w_estimate=float(w_points[-1]),
        diffs=diffs,
        cauchy=cauchy,
        partial=partial,
        warnings=warnings,
        tol=tol,
    )


@dataclass(eq=False)
class BDiagnostic:
    per_state_sup: np.ndarray
    verdict: str  # "bounded" | "suspected unbounded"
    offending_states: np.ndarray

    @property
    def bounded(self) -> bool:
        return self.verdict == "bounded"


def assumption_B_diagnostic(sweep_result: VanishingDiscountSweep) -> BDiagnostic:
    """Boundedness screen for sup over the schedule of u_alpha(x).

    A state is flagged when its per-state maximum is still attained at the
    last factor and grew by 1% or more over the final step.
    """
    records = sweep_result.records
    if len(records) < 3:
        raise ModelError("assumption-B diagnostic needs a sweep over at least 3 factors")
    U = np.stack([r.u for r in records])
    sup = U.max(axis=0)
    attained_before_last = U.argmax(axis=0) < len(records) - 1
    growth = U[-1] - U[-2]
    small_growth = growth < GROWTH_REL * (np.abs(U[-2]) + 1e-6)
    ok = attained_before_last | small_growth
    offending = sweep_result.model.grid.points[~ok]
    verdict = "bounded" if bool(np.all(ok)) else "suspected unbounded"
    return BDiagnostic(per_state_sup=sup, verdict=verdict, offending_states=offending)


@dataclass(frozen=True)
class MinimizerHull:
    lo: float
    hi: float
    interior_ok: bool


def minimizer_set_diagnostic(sweep_result: VanishingDiscountSweep) -> MinimizerHull:
    """Hull of the per-alpha minimizer sets; failing means the grid is too tight."""
    los = [float(r.minimizer_states.min()) for r in sweep_result.records]
    his = [float(r.minimizer_states.max()) for r in sweep_result.records]
    g = sweep_result.model.grid
    lo, hi = min(los), max(his)
    return MinimizerHull(lo=lo, hi=hi, interior_ok=bool(g.x_lo < lo and hi < g.x_hi))


@dataclass(eq=False)
class OptimalityInequalityReport:
    residuals: np.ndarray
    interior_mask: np.ndarray
    max_interior: float
    max_boundary: float
    slack: float
    passes: bool


def check_optimality_inequality(
    model: InventoryModel,
    policy,
    rel: RelativeValue,
    slack: Optional[float] = None,
    workspace: Optional[Workspace] = None,
) -> OptimalityInequalityReport:
    """Residuals r(x) = c(x, phi(x)) + E u(x') - w - u(x) of the optimality inequality.

    States within one maximum demand of either grid edge are excluded from
    the verdict (clamped transitions distort u there) and reported
    separately.  Default slack: ten times the last sweep step of
    (1 - alpha) m_alpha.
    """
    ws = workspace or Workspace(model)
    s = rel.default_slack if slack is None else slack
    steps = policy_order_steps(model, policy)
    idx = np.arange(ws.n)
    j = idx + steps
    u = rel.u.values
    c_vec = model.order_cost(steps * ws.grid.step) + ws.cost.eh[j]
    r = c_vec + ws.kernel.expect(u)[j] - rel.w - u
    d_max = model.demand.max_value
    xs = ws.xs
    interior = (xs >= ws.grid.x_lo + d_max) & (xs <= ws.grid.x_hi - d_max)
    max_int = float(r[interior].max()) if interior.any() else -np.inf
    max_bnd = float(r[~interior].max()) if (~interior).any() else -np.inf
    return OptimalityInequalityReport(
        residuals=r,
        interior_mask=interior,
        max_interior=max_int,
        max_boundary=max_bnd,
        slack=float(s),
        passes=bool(max_int <= s),
    )


@dataclass(eq=False)
class DiscountActionReport:
    x: float
    actions: np.ndarray
    action_range: float
    settled: bool
    settled_action: Optional[float]
    eq_membership_ok: Optional[bool]
    eq_residual: Optional[float]


def track_discount_actions(
    sweep_result: VanishingDiscountSweep,
    x: float,
    slack: Optional[float] = None,
) -> DiscountActionReport:
    """Chosen actions at state x across the schedule, with limit-point checks.

    The sequence must stay bounded; it is "settled" when the last three
    factors agree.  A settled action is additionally tested for membership
    in the average-cost optimal set: w + u(x) >= c(x, a*) + E u(x') within
    slack.
    """
    model = sweep_result.model
    i = model.grid.index_of(x)
    actions = np.array([r.chosen[i] for r in sweep_result.records])
    rng = float(actions.max() - actions.min())
    tail = actions[-3:]
    settled = tail.size == 3 and bool(np.all(tail == tail[-1]))
    member_ok = None
    resid = None
    a_star = None
    if settled:
        a_star = float(tail[-1])
        rel = sweep_result.relative_value()
        ws = Workspace(model)
        s = rel.default_slack if slack is None else slack
        k = model.grid.index_of(x + a_star) - i
        j = i + k
        u = rel.u.values
        lhs = model.order_cost(a_star) + ws.cost.eh[j] + float(ws.kernel.expect(u)[j])
        resid = float(lhs - rel.w - u[i])
        member_ok = bool(resid <= s)
    return DiscountActionReport(
        x=float(x),
        actions=actions,
        action_range=rng,
        settled=settled,
        settled_action=a_star,
        eq_membership_ok=member_ok,
        eq_residual=resid,
    )
