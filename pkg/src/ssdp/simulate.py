"""Monte-Carlo policy evaluation: the independent check on the DP output.

Simulation runs on unclamped real-valued states even when the policy came
from a grid, so a disagreement with the DP beyond the confidence interval
points at grid truncation.  Per-step costs use the exact model cost
c(x, a) = K 1{a>0} + c_bar a + E h(x + a - D) (atom-exact expectation), so
the one-step cost is deterministic given (x, a).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .model import InventoryModel, ModelError, PolicyTable

__all__ = [
    "SimConfig",
    "OrderUpTo",
    "SimResult",
    "simulate_discounted",
    "simulate_average",
    "compare_policies",
    "ComparisonRow",
    "ComparisonResult",
    "policy_fn",
]


@dataclass(frozen=True)
class OrderUpTo:
    """Base-stock rule: order up to ``level`` whenever x < level."""

    level: float


@dataclass
class SimConfig:
    x0: float
    horizon: int
    n_paths: int
    seed: int
    alpha: Optional[float] = None
    policy: object = "never_order"

    def __post_init__(self) -> None:
        if self.horizon < 1:
            raise ModelError("horizon must be at least 1")
        if self.n_paths < 1:
            raise ModelError("n_paths must be at least 1")


def policy_fn(policy, model: InventoryModel) -> tuple[Callable[[np.ndarray], np.ndarray], str]:
    """Vectorized state -> order map plus a stable policy id string."""
    if policy == "never_order":
        return (lambda x: np.zeros_like(x)), "never_order"
    if isinstance(policy, OrderUpTo):
        lvl = float(policy.level)
        return (lambda x: np.maximum(lvl - x, 0.0)), f"order_up_to({lvl})"
    if isinstance(policy, tuple) and len(policy) == 2 and policy[0] == "order_up_to":
        return policy_fn(OrderUpTo(policy[1]), model)
    if hasattr(policy, "s") and hasattr(policy, "S"):
        s, S = float(policy.s), float(policy.S)
        return (lambda x: np.where(x < s, S - x, 0.0)), f"sS(s={s},S={S})"
    if isinstance(policy, PolicyTable):
        chosen = policy.chosen

        def fn(x: np.ndarray) -> np.ndarray:
            return chosen[model.grid.nearest_index(x)]

        return fn, "policy_table"
    raise ModelError(f"unknown policy spec {policy!r}")


@dataclass(eq=False)
class SimResult:
    policy_id: str
    criterion: str
    mean: float
    std_error: float
    n_paths: int
    horizon: int
    seed: int
    burn_in_used: int = 0
    bias_bound: float = 0.0
    ss_invariant_ok: Optional[bool] = None
    path_stats: Optional[np.ndarray] = field(default=None, repr=False)


def _demand_matrix(model: InventoryModel, cfg: SimConfig) -> np.ndarray:
    rng = np.random.default_rng(cfg.seed)
    u = rng.random((cfg.n_paths, cfg.horizon))
    return model.demand.values[np.searchsorted(model.demand.cdf_grid(), u, side="left")]


def _run_paths(
    model: InventoryModel,
    cfg: SimConfig,
    demands: np.ndarray,
    policy,
) -> tuple[np.ndarray, np.ndarray, Optional[bool]]:
    """Step the fleet of paths; returns (per-step costs, max step cost, sS check)."""
    fn, _ = policy_fn(policy, model)
    is_ss = hasattr(policy, "s") and hasattr(policy, "S") and not isinstance(policy, PolicyTable)
    n, horizon = demands.shape
    x = np.full(n, float(cfg.x0))
    costs = np.empty((n, horizon))
    ss_ok = True if is_ss else None
    for t in range(horizon):
        a = fn(x)
        post = x + a
        costs[:, t] = model.order_cost(a) + model.expected_h(post)
        if is_ss:
            ordered = a > 0
            should = x < policy.s
            if not np.array_equal(ordered, should) or np.any(post > policy.S + 1e-9):
                ss_ok = False
        x = post - demands[:, t]
    return costs, float(costs.max()) if costs.size else 0.0, ss_ok


def simulate_discounted(
    model: InventoryModel, cfg: SimConfig, demands: Optional[np.ndarray] = None
) -> SimResult:
    """Sample mean and standard error of the horizon-truncated discounted cost.

    The reported ``bias_bound`` is alpha^horizon / (1 - alpha) times the
    largest one-step cost seen, a ceiling on the truncated tail.
    """
    if cfg.alpha is None or not (0.0 <= cfg.alpha < 1.0):
        raise ModelError("simulate_discounted needs alpha in [0,1)")
    d = demands if demands is not None else _demand_matrix(model, cfg)
    costs, c_max, ss_ok = _run_paths(model, cfg, d, cfg.policy)
    disc = cfg.alpha ** np.arange(cfg.horizon)
    totals = costs @ disc
    mean = float(totals.mean())
    se = float(totals.std(ddof=1) / math.sqrt(cfg.n_paths)) if cfg.n_paths > 1 else 0.0
    tail = (cfg.alpha**cfg.horizon) * c_max / (1.0 - cfg.alpha) if cfg.alpha > 0 else 0.0
    _, pid = policy_fn(cfg.policy, model)
    return SimResult(
        policy_id=pid,
        criterion="discounted",
        mean=mean,
        std_error=se,
        n_paths=cfg.n_paths,
        horizon=cfg.horizon,
        seed=cfg.seed,
        bias_bound=float(tail),
        ss_invariant_ok=ss_ok,
        path_stats=totals,
    )


def simulate_average(
    model: InventoryModel, cfg: SimConfig, demands: Optional[np.ndarray] = None
) -> SimResult:
    """Long-run average cost per period, discarding a 10% burn-in."""
    if cfg.horizon < 1000:
        raise ModelError("average-cost simulation needs horizon >= 1000")
    d = demands if demands is not None else _demand_matrix(model, cfg)
    costs, _, ss_ok = _run_paths(model, cfg, d, cfg.policy)
    burn = cfg.horizon // 10
    path_means = costs[:, burn:].mean(axis=1)
    mean = float(path_means.mean())
    se = float(path_means.std(ddof=1) / math.sqrt(cfg.n_paths)) if cfg.n_paths > 1 else 0.0
    _, pid = policy_fn(cfg.policy, model)
    return SimResult(
        policy_id=pid,
        criterion="average",
        mean=mean,
        std_error=se,
        n_paths=cfg.n_paths,
        horizon=cfg.horizon,
        seed=cfg.seed,
        burn_in_used=burn,
        ss_invariant_ok=ss_ok,
        path_stats=path_means,
    )


@dataclass(frozen=True)
class ComparisonRow:
    policy_id: str
    mean: float
    std_error: float
    diff_mean: float  # this policy minus the first one, paired per path
    diff_std_error: float


@dataclass(eq=False)
class ComparisonResult:
    criterion: str
    rows: list
    n_paths: int
    horizon: int
    seed: int


def compare_policies(
    model: InventoryModel, policies: list, cfg: SimConfig
) -> ComparisonResult:
    """Evaluate several policies on common random numbers.

    Every policy sees the same demand streams, so the paired per-path
    differences against the first policy have far less variance than the
    raw means.  The criterion is discounted when cfg.alpha is set,
    long-run average otherwise.
    """
    if len(policies) < 2:
        raise ModelError("compare_policies needs at least two policies")
    demands = _demand_matrix(model, cfg)
    runs = []
    for p in policies:
        one = SimConfig(
            x0=cfg.x0,
            horizon=cfg.horizon,
            n_paths=cfg.n_paths,
            seed=cfg.seed,
            alpha=cfg.alpha,
            policy=p,
        )
        if cfg.alpha is not None:
            runs.append(simulate_discounted(model, one, demands=demands))
        else:
            runs.append(simulate_average(model, one, demands=demands))
    base = runs[0].path_stats
    rows = []
    for r in runs:
        diff = r.path_stats - base
        dmean = float(diff.mean())
        dse = float(diff.std(ddof=1) / math.sqrt(cfg.n_paths)) if cfg.n_paths > 1 else 0.0
        rows.append(
            ComparisonRow(
                policy_id=r.policy_id,
                mean=r.mean,
                std_error=r.std_error,
                diff_mean=dmean,
                diff_std_error=dse,
            )
        )
    return ComparisonResult(
        criterion=runs[0].criterion,
        rows=rows,
        n_paths=cfg.n_paths,
        horizon=cfg.horizon,
        seed=cfg.seed,
    )
