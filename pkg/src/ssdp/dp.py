"""Finite- and infinite-horizon discounted dynamic programming on the grid.

The Bellman update is computed through the order-up-to decomposition

    v'(x_i) = min( g(x_i), K + min_{j > i} g(x_j) ) - c_bar * x_i,
    g(x_j)  = c_bar * x_j + E h(x_j - D) + alpha * E v(x_j - D),

which is algebraically identical to minimizing c(x, a) + alpha E v(x')
over feasible orders but costs O(n * atoms) per sweep instead of O(n^2).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .model import (
    InventoryModel,
    Kernel,
    ModelError,
    PolicyTable,
    ValueTable,
    build_cost,
    build_kernel,
)

__all__ = [
    "ConvergenceError",
    "TerminalValue",
    "SolveReport",
    "FiniteHorizonResult",
    "bellman_update",
    "solve_finite",
    "solve_infinite",
    "policy_evaluation",
    "policy_order_steps",
    "check_terminal_admissible",
    "AdmissibilityReport",
    "action_bound_set",
    "track_action_convergence",
    "ActionConvergenceReport",
    "EPS_ACT",
]

EPS_ACT = 1e-9  # absolute tolerance for eps-optimal action sets
BOUND_SET_EPS = 1e-9


class ConvergenceError(RuntimeError):
    """Value iteration hit its iteration cap before the stopping rule fired."""


@dataclass(frozen=True)
class TerminalValue:
    """Nonnegative terminal cost F(x) charged on the final state."""

    values: np.ndarray
    id: str = "user"  # one of: zero, v0_alpha, user

    def __post_init__(self) -> None:
        v = np.asarray(self.values, dtype=float)
        if np.any(v < -1e-12) or not np.all(np.isfinite(v)):
            raise ModelError("terminal value must be finite and nonnegative")
        v = v.copy()
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    @classmethod
    def zero(cls, grid) -> "TerminalValue":
        return cls(values=np.zeros(grid.n), id="zero")


class Workspace:
    """Precomputed arrays shared by every Bellman application for one model."""

    def __init__(self, model: InventoryModel):
        self.model = model
        self.grid = model.grid
        self.n = model.grid.n
        self.xs = model.grid.points
        self.kernel: Kernel = build_kernel(model)
        self.cost = build_cost(model)
        self.cbar_x = model.c_bar * self.xs
        self.gx = self.cbar_x + self.cost.eh  # g with zero continuation

    def g_of(self, v: np.ndarray, alpha: float) -> np.ndarray:
        if alpha == 0.0:
            return self.gx
        return self.gx + alpha * self.kernel.expect(v)

    def value_update(self, v: np.ndarray, alpha: float) -> np.ndarray:
        g = self.g_of(v, alpha)
        return np.minimum(g, self.model.K + _strict_suffix_min(g)) - self.cbar_x

    def policy_update(self, v: np.ndarray, alpha: float, eps_act: float = EPS_ACT):
        """One Bellman sweep returning (values, chosen, action sets)."""
        g = self.g_of(v, alpha)
        K = self.model.K
        m = np.minimum(g, K + _strict_suffix_min(g))
        values = m - self.cbar_x
        step = self.grid.step
        chosen = np.empty(self.n)
        sets: list[np.ndarray] = []
        for i in range(self.n):
            acts = []
            if g[i] <= m[i] + eps_act:
                acts.append(0.0)
            if i < self.n - 1:
                js = np.nonzero(K + g[i + 1 :] <= m[i] + eps_act)[0] + i + 1
                acts.extend(((js - i) * step).tolist())
            arr = np.array(acts)
            sets.append(arr)
            chosen[i] = arr[0]
        return values, chosen, sets


def _strict_suffix_min(g: np.ndarray) -> np.ndarray:
    """out[i] = min over j > i of g[j] (+inf at the top state)."""
    out = np.empty_like(g)
    out[-1] = np.inf
    if g.size > 1:
        out[:-1] = np.minimum.accumulate(g[::-1])[::-1][1:]
    return out


def _as_values(v) -> np.ndarray:
    if isinstance(v, ValueTable):
        return v.values
    if isinstance(v, TerminalValue):
        return v.values
    return np.asarray(v, dtype=float)


def _check_alpha(alpha: float) -> None:
    if not (0.0 <= alpha < 1.0):
        raise ModelError("alpha must lie in [0,1)")


def bellman_update(
    model: InventoryModel,
    v,
    alpha: float,
    eps_act: float = EPS_ACT,
    workspace: Optional[Workspace] = None,
) -> tuple[ValueTable, PolicyTable]:
    """One optimality-equation sweep from the value table ``v``.

    Ties inside the eps-optimal set are broken toward the smallest order,
    so "do not order" wins whenever it is within ``eps_act`` of the minimum.
    """
    _check_alpha(alpha)
    vals = _as_values(v)
    if np.any(vals < -1e-12) or not np.all(np.isfinite(vals)):
        raise ModelError("bellman_update needs a finite nonnegative value table")
    ws = workspace or Workspace(model)
    new_vals, chosen, sets = ws.policy_update(vals, alpha, eps_act)
    vt = ValueTable(grid=model.grid, values=new_vals, tag="bellman_update")
    pt = PolicyTable(grid=model.grid, chosen=chosen, action_sets=sets)
    return vt, pt


@dataclass(eq=False)
class FiniteHorizonResult:
    """Backward-induction iterates v_0..v_N with the policy of each update.

    ``policies[t]`` is extracted from the update taking v_t to v_{t+1}.  For
    an N-horizon problem the Markov-optimal decision at epoch ``e`` is
    ``policies[N - e - 1]`` (the standard index reversal).
    """

    alpha: float
    terminal_id: str
    values: list
    policies: list

    @property
    def horizon(self) -> int:
        return len(self.policies)

    def stage_policy(self, epoch: int) -> PolicyTable:
        return self.policies[self.horizon - epoch - 1]

    def stages(self) -> list:
        out = [(self.values[0], None)]
        out.extend((self.values[t + 1], self.policies[t]) for t in range(self.horizon))
        return out


def solve_finite(
    model: InventoryModel,
    n_periods: int,
    terminal: TerminalValue,
    alpha: float,
    eps_act: float = EPS_ACT,
    workspace: Optional[Workspace] = None,
) -> FiniteHorizonResult:
    """Backward induction for the ``n_periods``-horizon problem with terminal F."""
    _check_alpha(alpha)
    if n_periods < 0:
        raise ModelError("horizon must be nonnegative")
    ws = workspace or Workspace(model)
    values = [ValueTable(grid=model.grid, values=terminal.values.copy(), tag=f"v0[{terminal.id}]")]
    policies: list[PolicyTable] = []
    for t in range(n_periods):
        new_vals, chosen, sets = ws.policy_update(values[-1].values, alpha, eps_act)
        values.append(
            ValueTable(grid=model.grid, values=new_vals, tag=f"v{t + 1}[{terminal.id},a={alpha}]")
        )
        policies.append(PolicyTable(grid=model.grid, chosen=chosen, action_sets=sets))
    return FiniteHorizonResult(
        alpha=alpha, terminal_id=terminal.id, values=values, policies=policies
    )


@dataclass(eq=False)
class SolveReport:
    """Converged infinite-horizon solve: value, policy, and diagnostics."""

    value: ValueTable
    policy: PolicyTable
    iterations: int
    residual: float
    bound_set_sizes: np.ndarray
    alpha: float
    tol: float
    clamp_events: int


def _iteration_cap(alpha: float, tol: float) -> int:
    if alpha == 0.0:
        return 100
    target = tol * (1.0 - alpha)
    if target >= 1.0:
        return 100
    return 10 * math.ceil(math.log(target) / math.log(alpha)) + 100


def _stop_threshold(alpha: float, tol: float) -> float:
    # Contraction bound: residual r guarantees sup-error <= alpha r / (1 - alpha),
    # so stopping at tol (1 - alpha) / (2 alpha) certifies error <= tol / 2.
    if alpha == 0.0:
        return tol
    return tol * (1.0 - alpha) / (2.0 * alpha)


def solve_infinite(
    model: InventoryModel,
    alpha: float,
    tol: float = 1e-8,
    eps_act: float = EPS_ACT,
    max_iterations: Optional[int] = None,
    workspace: Optional[Workspace] = None,
) -> SolveReport:
    """Value iteration from v = 0 with a certified stopping rule.

    Iterates until the sup-norm residual falls below tol (1-alpha)/(2 alpha)
    (plain tol at alpha = 0), which bounds the distance to the fixed point
    by tol via the contraction estimate.  Raises ConvergenceError past the
    iteration cap.
    """
    _check_alpha(alpha)
    if not tol > 0:
        raise ModelError("tol must be positive")
    ws = workspace or Workspace(model)
    cap = max_iterations if max_iterations is not None else _iteration_cap(alpha, tol)
    threshold = _stop_threshold(alpha, tol)
    v = np.zeros(ws.n)
    residual = math.inf
    iterations = 0
    while iterations < cap:
        nv = ws.value_update(v, alpha)
        iterations += 1
        residual = float(np.max(np.abs(nv - v)))
        v = nv
        if residual <= threshold:
            break
    else:
        raise ConvergenceError(
            f"value iteration: residual {residual:.3e} after {iterations} sweeps "
            f"(threshold {threshold:.3e}, alpha={alpha})"
        )
    _, chosen, sets = ws.policy_update(v, alpha, eps_act)
    value = ValueTable(grid=model.grid, values=v, tag=f"v_alpha[a={alpha},tol={tol}]")
    policy = PolicyTable(grid=model.grid, chosen=chosen, action_sets=sets)
    sizes = np.array(
        [
            int(np.count_nonzero(ws.cost.feasible_row(i) <= v[i] + BOUND_SET_EPS))
            for i in range(ws.n)
        ]
    )
    return SolveReport(
        value=value,
        policy=policy,
        iterations=iterations,
        residual=residual,
        bound_set_sizes=sizes,
        alpha=alpha,
        tol=tol,
        clamp_events=ws.kernel.clamp_events,
    )


def policy_order_steps(model: InventoryModel, policy) -> np.ndarray:
    """Normalize a policy (PolicyTable, SsPolicy, or array of orders) to grid steps."""
    g = model.grid
    if isinstance(policy, PolicyTable):
        return policy.order_steps()
    if hasattr(policy, "s") and hasattr(policy, "S"):
        s_idx = g.index_of(policy.s)
        S_idx = g.index_of(policy.S)
        idx = np.arange(g.n)
        return np.where(idx < s_idx, S_idx - idx, 0)
    arr = np.asarray(policy, dtype=float)
    steps = np.round(arr / g.step).astype(int)
    if np.any(np.abs(steps * g.step - arr) > 1e-9):
        raise ModelError("policy actions must be multiples of the grid step")
    if np.any(steps < 0) or np.any(steps + np.arange(g.n) > g.n - 1):
        raise ModelError("policy actions must be feasible order-up-to moves")
    return steps


def policy_evaluation(
    model: InventoryModel,
    policy,
    alpha: float,
    tol: float = 1e-8,
    max_iterations: Optional[int] = None,
    workspace: Optional[Workspace] = None,
) -> ValueTable:
    """Fixed point of the stationary policy's affine operator (same stopping rule)."""
    _check_alpha(alpha)
    ws = workspace or Workspace(model)
    steps = policy_order_steps(model, policy)
    idx = np.arange(ws.n)
    j = idx + steps
    c_vec = model.order_cost(steps * ws.grid.step) + ws.cost.eh[j]
    cap = max_iterations if max_iterations is not None else _iteration_cap(alpha, tol)
    threshold = _stop_threshold(alpha, tol)
    v = np.zeros(ws.n)
    iterations = 0
    while iterations < cap:
        nv = c_vec + alpha * ws.kernel.expect(v)[j] if alpha else c_vec
        iterations += 1
        residual = float(np.max(np.abs(nv - v)))
        v = nv
        if residual <= threshold:
            break
    else:
        raise ConvergenceError(
            f"policy evaluation: iteration cap {cap} reached (alpha={alpha}, tol={tol})"
        )
    return ValueTable(grid=model.grid, values=v, tag=f"policy_value[a={alpha}]")


@dataclass(frozen=True)
class AdmissibilityReport:
    """Gridwise check of F <= v_alpha and v_{1,F} >= F (within slack)."""

    f_le_v_alpha: bool
    one_step_ge_f: bool
    max_excess_over_v: float
    max_one_step_drop: float

    @property
    def admissible(self) -> bool:
        return self.f_le_v_alpha and self.one_step_ge_f


def check_terminal_admissible(
    terminal: TerminalValue,
    model: InventoryModel,
    alpha: float,
    v_alpha: ValueTable,
    slack: float = 1e-9,
    workspace: Optional[Workspace] = None,
) -> AdmissibilityReport:
    """Verify the two terminal-value inequalities that make action tracking meaningful."""
    ws = workspace or Workspace(model)
    f = terminal.values
    excess = float(np.max(f - v_alpha.values))
    v1 = ws.value_update(f, alpha)
    drop = float(np.max(f - v1))
    return AdmissibilityReport(
        f_le_v_alpha=excess <= slack,
        one_step_ge_f=drop <= slack,
        max_excess_over_v=excess,
        max_one_step_drop=drop,
    )


def action_bound_set(
    x: float,
    model: InventoryModel,
    v_alpha: ValueTable,
    eps: float = BOUND_SET_EPS,
    workspace: Optional[Workspace] = None,
) -> np.ndarray:
    """Actions whose one-step cost alone does not exceed v_alpha(x).

    Every finite-horizon optimal action set (t >= 1, admissible terminal)
    is contained in this set, which is what makes it a bound set.
    """
    ws = workspace or Workspace(model)
    i = model.grid.index_of(x)
    row = ws.cost.feasible_row(i)
    ks = np.nonzero(row <= v_alpha.values[i] + eps)[0]
    return ks * model.grid.step


@dataclass(eq=False)
class ActionConvergenceReport:
    """Distances from finite-horizon chosen actions to the infinite-horizon set.

    ``distances[t-1, i]`` is dist(chosen_t(x_i), A_alpha(x_i)) for t = 1..t_max.
    ``settle_t[i]`` is the first t after which the distance stays within one
    grid step (-1 if it never settles); ``exact_settle_t`` uses distance 0.
    """

    distances: np.ndarray
    settle_t: np.ndarray
    exact_settle_t: np.ndarray
    reference: SolveReport
    unsettled: np.ndarray

    @property
    def all_settled(self) -> bool:
        return bool(np.all(self.settle_t >= 0))


def _suffix_settle(cond: np.ndarray) -> np.ndarray:
    """Per column: first t (1-based) from which ``cond`` holds to the end, else -1."""
    t_max, n = cond.shape
    out = np.full(n, -1, dtype=int)
    ok = np.ones(n, dtype=bool)
    for t in range(t_max - 1, -1, -1):
        ok &= cond[t]
        out[ok] = t + 1
    return out


def track_action_convergence(
    model: InventoryModel,
    alpha: float,
    terminal: TerminalValue,
    t_max: int,
    tol: float = 1e-10,
    eps_act: float = EPS_ACT,
    reference: Optional[SolveReport] = None,
    workspace: Optional[Workspace] = None,
) -> ActionConvergenceReport:
    """Track finite-horizon chosen actions against the infinite-horizon sets.

    Requires an admissible terminal value.  The reference solve runs at a
    tight tolerance so that eps-optimal membership is not blurred by the
    value-iteration error.
    """
    ws = workspace or Workspace(model)
    ref = reference or solve_infinite(model, alpha, tol=tol, eps_act=eps_act, workspace=ws)
    adm = check_terminal_admissible(terminal, model, alpha, ref.value, workspace=ws)
    if not adm.admissible:
        raise ModelError(
            "terminal value fails the admissibility inequalities; "
            "action-convergence tracking is not meaningful"
        )
    n = ws.n
    dist = np.empty((t_max, n))
    v = terminal.values.copy()
    v = ws.value_update(v, alpha)  # chosen_t uses the update applied to v_t, t >= 1
    for t in range(1, t_max + 1):
        nv, chosen, _ = ws.policy_update(v, alpha, eps_act)
        for i in range(n):
            dist[t - 1, i] = float(np.min(np.abs(ref.policy.action_sets[i] - chosen[i])))
        v = nv
    settle = _suffix_settle(dist <= model.grid.step + 1e-12)
    exact = _suffix_settle(dist <= 1e-12)
    return ActionConvergenceReport(
        distances=dist,
        settle_t=settle,
        exact_settle_t=exact,
        reference=ref,
        unsettled=np.nonzero(settle < 0)[0],
    )
