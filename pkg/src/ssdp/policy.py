"""G-functions, K-convexity certification, and (s,S) threshold extraction.

The reorder point s and order-up-to level S come from

    S = smallest grid argmin of g,
    s = smallest grid x <= S with g(x) <= K + g(S),

applied to the appropriate g: the finite-horizon stage functions, the
infinite-horizon discounted one, or the average-cost H built from the
relative value function.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .model import (
    Grid,
    InventoryModel,
    ModelError,
    ValueTable,
    post_expectation_matrix,
)
from .dp import (
    FiniteHorizonResult,
    SolveReport,
    TerminalValue,
    Workspace,
    _strict_suffix_min,
    policy_evaluation,
    solve_finite,
    solve_infinite,
)

__all__ = [
    "CertificationError",
    "GFunction",
    "SsPolicy",
    "build_G",
    "extract_sS",
    "is_K_convex",
    "KConvexityReport",
    "solve_zero_setup",
    "ZeroSetupResult",
    "alpha_usable",
    "UsableAlphaReport",
    "finite_horizon_sS",
    "FiniteSsResult",
    "discounted_sS",
    "DiscountedSsResult",
    "average_sS",
    "AverageSsResult",
    "slope_condition",
    "SlopeConditionReport",
]

TIE_EPS = 1e-9
G_CONSISTENCY_TOL = 1e-7
KCONVEX_TOL = 1e-9


class CertificationError(RuntimeError):
    """A structural property that the theory guarantees failed numerically."""


@dataclass(eq=False)
class GFunction:
    """Order-up-to target cost g over the grid.

    kind is one of ``finite_t`` (stage function, with ``t`` and the terminal
    id), ``infinite``, or ``H_average``.  ``extrapolation_count`` is the
    number of (state, atom) pairs whose value lookup fell below the grid and
    was linearly extrapolated.
    """

    grid: Grid
    values: np.ndarray
    kind: str
    alpha: Optional[float] = None
    t: Optional[int] = None
    terminal_id: Optional[str] = None
    extrapolation_count: int = 0

    def __post_init__(self) -> None:
        if not np.all(np.isfinite(self.values)):
            raise ModelError("G-function must be finite on the grid")


@dataclass(frozen=True)
class SsPolicy:
    """Order up to S whenever x < s, otherwise do not order."""

    s: float
    S: float
    alpha: Optional[float] = None
    context: str = "infinite"  # infinite | t=<k> | average
    terminal_id: Optional[str] = None

    def __post_init__(self) -> None:
        if self.s > self.S:
            raise ModelError(f"(s,S) needs s <= S, got ({self.s}, {self.S})")

    def order_quantity(self, x) -> np.ndarray:
        arr = np.asarray(x, dtype=float)
        out = np.where(arr < self.s, self.S - arr, 0.0)
        return float(out) if arr.ndim == 0 else out

    def pair(self) -> tuple[float, float]:
        return (self.s, self.S)


def build_G(
    model: InventoryModel,
    values,
    alpha: float,
    kind: str = "infinite",
    t: Optional[int] = None,
    terminal_id: Optional[str] = None,
    check: bool = True,
    check_tol: float = G_CONSISTENCY_TOL,
) -> GFunction:
    """g(x) = c_bar x + E h(x-D) + alpha E v(x-D) on the grid.

    Value lookups below x_lo are linearly extrapolated from the two lowest
    grid points (the value function is asymptotically linear there), and the
    count of such lookups is recorded.  For ``kind="H_average"`` the third
    term uses the relative value u with coefficient 1 instead of alpha.

    For ``kind="infinite"`` a consistency check confirms that
    min(min_a [K + g(x+a)], g(x)) - c_bar x reproduces v(x) on the
    extrapolation-free interior; failure signals a grid/tolerance
    misconfiguration and raises CertificationError.
    """
    vals = values.values if isinstance(values, ValueTable) else np.asarray(values, dtype=float)
    if vals.shape != (model.grid.n,):
        raise ModelError("value table shape does not match the grid")
    if kind not in ("finite_t", "infinite", "H_average"):
        raise ModelError(f"unknown G kind {kind!r}")
    W_ext, flagged = post_expectation_matrix(model, extrapolate=True)
    weight = 1.0 if kind == "H_average" else alpha
    eh = model.expected_h(model.grid.points)
    g_vals = model.c_bar * model.grid.points + eh + weight * (W_ext @ vals)
    g = GFunction(
        grid=model.grid,
        values=g_vals,
        kind=kind,
        alpha=alpha,
        t=t,
        terminal_id=terminal_id,
        extrapolation_count=flagged,
    )
    if kind == "infinite" and check:
        interior = model.grid.points >= model.grid.x_lo + model.demand.max_value
        vhat = (
            np.minimum(g_vals, model.K + _strict_suffix_min(g_vals))
            - model.c_bar * model.grid.points
        )
        gap = float(np.max(np.abs(vhat[interior] - vals[interior]))) if interior.any() else 0.0
        if gap > check_tol:
            raise CertificationError(
                f"G-function consistency: reformulated optimality equation misses v "
                f"by {gap:.3e} (> {check_tol:.1e}); grid or tolerance misconfigured"
            )
    return g


def extract_sS(g: GFunction, K: float, tie_eps: float = TIE_EPS) -> SsPolicy:
    """Thresholds from a (K-convex) g: S at the argmin, s at the K + g(S) level set."""
    vals = g.values
    if not np.all(np.isfinite(vals)):
        raise ModelError("cannot extract thresholds from a non-finite g")
    n = vals.size
    S_idx = int(np.argmin(vals))
    if S_idx == 0 or S_idx == n - 1:
        raise ModelError(
            f"grid too narrow: argmin of g sits on the boundary (index {S_idx})"
        )
    level = K + vals[S_idx]
    below = np.nonzero(vals[: S_idx + 1] <= level + tie_eps)[0]
    s_idx = int(below[0])
    xs = g.grid.points
    context = {"finite_t": f"t={g.t}", "infinite": "infinite", "H_average": "average"}.get(
        g.kind, g.kind
    )
    return SsPolicy(
        s=float(xs[s_idx]),
        S=float(xs[S_idx]),
        alpha=g.alpha,
        context=context,
        terminal_id=g.terminal_id,
    )


@dataclass(frozen=True)
class KConvexityReport:
    verdict: bool
    worst_violation: float
    worst_triple: Optional[tuple[float, float, float]]
    tol: float
    K: float


def is_K_convex(g: GFunction, K: float, tol: float = KCONVEX_TOL) -> KConvexityReport:
    """Definitional K-convexity check over all grid triples x < m < y.

    With lam = (m-x)/(y-x) the violation at a triple is
    g(m) - (1-lam) g(x) - lam g(y) - lam K; the verdict is true when the
    maximum violation stays within ``tol``.  A consecutive-triple fast scan
    runs first; the full O(n^3) scan (vectorized per middle index) supplies
    the worst triple for the report.
    """
    if K < 0:
        raise ModelError("K must be nonnegative")
    vals = g.values
    xs = g.grid.points
    n = vals.size
    if n < 3:
        return KConvexityReport(True, 0.0, None, tol, K)
    worst = -np.inf
    worst_triple = None
    # Fast path: adjacent triples (catches plain convexity breaks cheaply).
    lam_adj = 0.5
    adj = vals[1:-1] - (1 - lam_adj) * vals[:-2] - lam_adj * vals[2:] - lam_adj * K
    k = int(np.argmax(adj))
    if adj[k] > worst:
        worst = float(adj[k])
        worst_triple = (float(xs[k]), float(xs[k + 1]), float(xs[k + 2]))
    # Full scan, vectorized over (x, y) for each middle point m.
    for mid in range(1, n - 1):
        left = xs[:mid]
        right = xs[mid + 1 :]
        lam = (xs[mid] - left[:, None]) / (right[None, :] - left[:, None])
        rhs = (1.0 - lam) * vals[:mid, None] + lam * vals[None, mid + 1 :] + lam * K
        viol = vals[mid] - rhs
        j = int(np.argmax(viol))
        vmax = float(viol.flat[j])
        if vmax > worst:
            worst = vmax
            xi, yi = divmod(j, right.size)
            worst_triple = (float(left[xi]), float(xs[mid]), float(right[yi]))
    return KConvexityReport(
        verdict=worst <= tol, worst_violation=worst, worst_triple=worst_triple, tol=tol, K=K
    )


@dataclass(eq=False)
class ZeroSetupResult:
    """K = 0 companion solve: terminal value v0 and its (certified convex) G."""

    v0: ValueTable
    g0: GFunction
    convexity: KConvexityReport
    solve: SolveReport

    def terminal(self) -> TerminalValue:
        return TerminalValue(values=self.v0.values, id="v0_alpha")


def solve_zero_setup(model: InventoryModel, alpha: float, tol: float = 1e-8) -> ZeroSetupResult:
    """Solve the K = 0 variant and certify that its G-function is convex.

    Convexity of the zero-setup G is guaranteed, so a failed certificate
    signals numerical misconfiguration and raises CertificationError.
    """
    model0 = replace(model, K=0.0)
    report = solve_infinite(model0, alpha, tol=tol)
    v0 = ValueTable(grid=model.grid, values=report.value.values, tag=f"v0_alpha[a={alpha}]")
    g0 = build_G(model0, v0, alpha, kind="infinite", terminal_id="zero")
    conv = is_K_convex(g0, K=0.0)
    if not conv.verdict:
        raise CertificationError(
            f"zero-setup G must be convex; worst violation {conv.worst_violation:.3e} "
            f"at {conv.worst_triple}"
        )
    return ZeroSetupResult(v0=v0, g0=g0, convexity=conv, solve=report)


@dataclass(frozen=True)
class UsableAlphaReport:
    """Detected proxy for the discount-factor threshold above which (s,S) extraction is safe."""

    alpha: float
    interior_argmin: bool
    increasing_at_x_lo: bool
    g_alpha_k_convex: bool

    @property
    def usable(self) -> bool:
        return self.interior_argmin and self.increasing_at_x_lo and self.g_alpha_k_convex


def alpha_usable(
    model: InventoryModel,
    alpha: float,
    tol: float = 1e-8,
    zero_setup: Optional[ZeroSetupResult] = None,
    g_alpha: Optional[GFunction] = None,
) -> UsableAlphaReport:
    """Check the two properties the threshold theory consumes at this alpha."""
    zs = zero_setup or solve_zero_setup(model, alpha, tol)
    g0 = zs.g0.values
    argmin = int(np.argmin(g0))
    interior = 0 < argmin < g0.size - 1
    increasing_left = g0[0] > g0[1] - 1e-12
    if g_alpha is None:
        g_alpha = build_G(model, solve_infinite(model, alpha, tol=tol).value, alpha, "infinite")
    kc = is_K_convex(g_alpha, model.K)
    return UsableAlphaReport(
        alpha=alpha,
        interior_argmin=interior,
        increasing_at_x_lo=bool(increasing_left),
        g_alpha_k_convex=kc.verdict,
    )


@dataclass(eq=False)
class FiniteSsResult:
    """Per-stage thresholds (s_t, S_t) from G_{t, v0_alpha, alpha}, t = 0..N-1.

    The induced policy for the N-horizon problem uses the pair with index
    N - epoch - 1 at decision epoch ``epoch``.  ``agreement_ok`` confirms the
    threshold actions land inside the DP's eps-optimal action sets at every
    state and stage.
    """

    policies: list
    certifications: list
    agreement_ok: bool
    mismatches: list
    finite: FiniteHorizonResult
    zero_setup: ZeroSetupResult
    warnings: list

    def stage_pairs(self) -> list:
        return [None if p is None else p.pair() for p in self.policies]


def _threshold_agreement(
    model: InventoryModel, policy: SsPolicy, table
) -> list[tuple[int, float]]:
    """States where the threshold action misses the eps-optimal set."""
    g = model.grid
    steps_target = np.asarray(
        [g.index_of(policy.S) - i if g.points[i] < policy.s else 0 for i in range(g.n)]
    )
    bad = []
    for i in range(g.n):
        set_steps = np.round(table.action_sets[i] / g.step).astype(int)
        if steps_target[i] not in set_steps:
            bad.append((i, float(g.points[i])))
    return bad


def finite_horizon_sS(
    model: InventoryModel,
    alpha: float,
    n_periods: int,
    tol: float = 1e-8,
    zero_setup: Optional[ZeroSetupResult] = None,
    certify: bool = True,
) -> FiniteSsResult:
    """Stagewise (s_t, S_t) extraction with the zero-setup terminal value.

    Each stage function is K-convexity certified; a failed certificate (the
    discount factor sits below the usable threshold) downgrades to a warning
    and the thresholds are still reported alongside the worst triple.
    """
    zs = zero_setup or solve_zero_setup(model, alpha, tol)
    warnings: list[str] = []
    g0v = zs.g0.values
    argmin0 = int(np.argmin(g0v))
    if not (0 < argmin0 < g0v.size - 1) or not g0v[0] > g0v[1] - 1e-12:
        warnings.append(
            "zero-setup G lacks an interior argmin rising toward x_lo; "
            "alpha may be below the usable threshold"
        )
    ws = Workspace(model)
    fin = solve_finite(model, n_periods, zs.terminal(), alpha, workspace=ws)
    policies: list[Optional[SsPolicy]] = []
    certs: list[Optional[KConvexityReport]] = []
    mismatches: list = []
    agreement = True
    for t in range(n_periods):
        g_t = build_G(model, fin.values[t], alpha, kind="finite_t", t=t, terminal_id="v0_alpha")
        cert = is_K_convex(g_t, model.K) if certify else None
        certs.append(cert)
        if cert is not None and not cert.verdict:
            warnings.append(
                f"stage t={t}: K-convexity certification failed, worst triple "
                f"{cert.worst_triple} violation {cert.worst_violation:.3e}"
            )
        try:
            pol = extract_sS(g_t, model.K)
        except ModelError as exc:
            warnings.append(f"stage t={t}: {exc}")
            policies.append(None)
            continue
        policies.append(pol)
        bad = _threshold_agreement(model, pol, fin.policies[t])
        if bad:
            agreement = False
            mismatches.append((t, bad))
    return FiniteSsResult(
        policies=policies,
        certifications=certs,
        agreement_ok=agreement,
        mismatches=mismatches,
        finite=fin,
        zero_setup=zs,
        warnings=warnings,
    )


@dataclass(eq=False)
class DiscountedSsResult:
    """Infinite-horizon thresholds plus the finite-stage threshold trace."""

    policy: Optional[SsPolicy]
    solve: SolveReport
    g: GFunction
    k_convexity: KConvexityReport
    eval_gap: Optional[float]
    fallback_policy: Optional[object]
    trace: list
    trace_settle_t: Optional[int]
    explanation: Optional[str]


def discounted_sS(
    model: InventoryModel,
    alpha: float,
    tol: float = 1e-8,
    horizon_trace: bool = True,
    trace_t_max: int = 200,
    solve: Optional[SolveReport] = None,
    zero_setup: Optional[ZeroSetupResult] = None,
) -> DiscountedSsResult:
    """Extract (s_alpha, S_alpha) from the converged G and cross-validate it.

    The extracted policy's evaluated value must match v_alpha within
    10 * tol gridwise.  If K-convexity certification fails (alpha too small)
    the thresholds are withheld and the raw argmin policy is returned
    instead, with an explanation.
    """
    report = solve or solve_infinite(model, alpha, tol=tol)
    # the consistency gap is bounded by the certified solve error, so the
    # check tolerance must not undercut a coarse tol
    g = build_G(model, report.value, alpha, kind="infinite", check_tol=max(G_CONSISTENCY_TOL, tol))
    cert = is_K_convex(g, model.K)
    if not cert.verdict:
        return DiscountedSsResult(
            policy=None,
            solve=report,
            g=g,
            k_convexity=cert,
            eval_gap=None,
            fallback_policy=report.policy,
            trace=[],
            trace_settle_t=None,
            explanation=(
                "G is not K-convex at this discount factor (worst triple "
                f"{cert.worst_triple}, violation {cert.worst_violation:.3e}); "
                "thresholds withheld, raw argmin policy returned"
            ),
        )
    pol = extract_sS(g, model.K)
    pe = policy_evaluation(model, pol, alpha, tol=tol)
    gap = float(np.max(np.abs(pe.values - report.value.values)))
    if gap > 10 * tol:
        raise CertificationError(
            f"(s,S) policy evaluation misses v_alpha by {gap:.3e} (> 10*tol)"
        )
    trace: list = []
    settle: Optional[int] = None
    if horizon_trace:
        zs = zero_setup or solve_zero_setup(model, alpha, tol)
        fin = solve_finite(model, trace_t_max, zs.terminal(), alpha)
        for t in range(trace_t_max):
            g_t = build_G(
                model, fin.values[t], alpha, kind="finite_t", t=t, terminal_id="v0_alpha"
            )
            try:
                trace.append(extract_sS(g_t, model.K).pair())
            except ModelError:
                trace.append(None)
        if trace:
            last = trace[-1]
            settle = None
            for t in range(trace_t_max - 1, -1, -1):
                if trace[t] != last:
                    break
                settle = t
    return DiscountedSsResult(
        policy=pol,
        solve=report,
        g=g,
        k_convexity=cert,
        eval_gap=gap,
        fallback_policy=None,
        trace=trace,
        trace_settle_t=settle,
        explanation=None,
    )


@dataclass(eq=False)
class AverageSsResult:
    """Limiting thresholds across the vanishing-discount schedule."""

    policy: SsPolicy
    degenerate: bool
    settled: bool
    bounded_ok: bool
    sweep: Optional[object]
    optimality: Optional[object]
    note: Optional[str]


def average_sS(
    model: InventoryModel,
    schedule=None,
    tol: float = 1e-7,
    sweep_result=None,
    workers: int = 1,
) -> AverageSsResult:
    """Limit thresholds over a discount schedule increasing to 1.

    With P(D > 0) = 0 the problem degenerates and the (0, 0) policy is
    returned immediately.  Otherwise the per-alpha thresholds come from the
    vanishing-discount sweep; the last pair is the limit estimate, flagged
    as unsettled if the pairs still drift over the final three factors.  The
    induced policy is checked against the average-cost optimality inequality.
    """
    from . import average as avg

    if model.demand.p_positive == 0.0:
        return AverageSsResult(
            policy=SsPolicy(s=0.0, S=0.0, alpha=None, context="average"),
            degenerate=True,
            settled=True,
            bounded_ok=True,
            sweep=None,
            optimality=None,
            note=(
                "zero demand almost surely: returned the (0,0) policy; the "
                "long-run average cost is state-dependent (0 for x <= 0, h(x) "
                "for x > 0) so no constant optimal average cost exists"
            ),
        )
    sw = sweep_result or avg.sweep(model, schedule, tol=tol, workers=workers)
    seq = [(r.alpha, (r.s, r.S)) for r in sw.records if r.s is not None]
    if not seq:
        raise CertificationError("no alpha in the schedule produced thresholds")
    pairs = [p for _, p in seq]
    tail = pairs[-3:]
    settled = len(tail) == 3 and all(p == tail[-1] for p in tail)
    margin = model.grid.step
    bounded_ok = all(
        model.grid.x_lo + margin <= p[0] and p[1] <= model.grid.x_hi - margin for p in tail
    )
    pol = SsPolicy(s=pairs[-1][0], S=pairs[-1][1], alpha=seq[-1][0], context="average")
    rel = sw.relative_value()
    oi = avg.check_optimality_inequality(model, pol, rel)
    return AverageSsResult(
        policy=pol,
        degenerate=False,
        settled=settled,
        bounded_ok=bounded_ok,
        sweep=sw,
        optimality=oi,
        note=None if settled else "thresholds still drifting at the end of the schedule",
    )


@dataclass(frozen=True)
class BruteForceReport:
    worst_gap: float
    best_pair: tuple
    extracted_pair: tuple
    margin: float

    @property
    def passes(self) -> bool:
        return self.worst_gap <= self.margin


def brute_force_sS_check(
    model: InventoryModel,
    alpha: float,
    tol: float = 1e-8,
    margin: float = 1e-6,
    solve: Optional[SolveReport] = None,
    grid_cap: int = 201,
) -> BruteForceReport:
    """Exhaustive (s,S)-pair search against the extracted thresholds.

    Every grid pair s <= S is evaluated by solving the induced policy's
    linear fixed point directly; the check passes when no pair beats the
    extracted policy by more than ``margin`` at any state.  Restricted to
    small grids (the enumeration is quadratic in grid size).
    """
    n = model.grid.n
    if n > grid_cap:
        raise ModelError(f"grid too large for exhaustive oracle: {n} points (cap {grid_cap})")
    res = discounted_sS(model, alpha, tol=tol, horizon_trace=False, solve=solve)
    if res.policy is None:
        raise CertificationError("cannot brute-force check: thresholds were withheld")
    ws = Workspace(model)
    xs = model.grid.points
    eye = np.eye(n)
    idx = np.arange(n)

    def pair_value(s_idx: int, S_idx: int) -> np.ndarray:
        steps = np.where(idx < s_idx, S_idx - idx, 0)
        j = idx + steps
        c = model.order_cost(steps * model.grid.step) + ws.cost.eh[j]
        return np.linalg.solve(eye - alpha * ws.kernel.matrix[j], c)

    ex_pair = (model.grid.index_of(res.policy.s), model.grid.index_of(res.policy.S))
    ex_value = pair_value(*ex_pair)
    worst = -np.inf
    best = res.policy.pair()
    for S_idx in range(n):
        for s_idx in range(S_idx + 1):
            gap = float(np.max(ex_value - pair_value(s_idx, S_idx)))
            if gap > worst:
                worst = gap
                best = (float(xs[s_idx]), float(xs[S_idx]))
    return BruteForceReport(
        worst_gap=worst, best_pair=best, extracted_pair=res.policy.pair(), margin=margin
    )


@dataclass(frozen=True)
class SlopeConditionReport:
    holds: bool
    witness: Optional[tuple[float, float]]
    quotient: Optional[float]


def slope_condition(model: InventoryModel) -> SlopeConditionReport:
    """Scan for a backorder slope steeper than -c_bar.

    When it holds, stagewise thresholds with zero terminal value are valid
    at every discount factor; reported informationally otherwise.
    """
    xs = model.grid.points
    hv = model.h(xs)
    quot = np.diff(hv) / model.grid.step
    hits = np.nonzero(quot < -model.c_bar - 1e-12)[0]
    if hits.size == 0:
        return SlopeConditionReport(holds=False, witness=None, quotient=None)
    i = int(hits[0])
    return SlopeConditionReport(
        holds=True, witness=(float(xs[i]), float(xs[i + 1])), quotient=float(quot[i])
    )
