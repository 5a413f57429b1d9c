"""CSV and JSON artifact writers plus the run manifest.

CSV files use the csv module's default dialect (RFC-4180 quoting, CRLF),
and floats are rendered with repr (shortest round-trip form), so reruns
with identical inputs are byte-identical.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "RunManifest",
    "write_manifest",
    "write_table_csv",
    "write_solve_csv",
    "write_solve_sidecar",
    "write_threshold_csv",
    "write_sweep_csv",
    "write_results_csv",
    "write_renewal_json",
]


def _cell(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def write_table_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([_cell(c) for c in row])


_write_rows = write_table_csv


def write_solve_csv(path, report) -> None:
    """Columns: x, v, chosen_action, n_eps_optimal."""
    xs = report.value.grid.points
    rows = (
        (xs[i], report.value.values[i], report.policy.chosen[i], len(report.policy.action_sets[i]))
        for i in range(xs.size)
    )
    write_table_csv(path, ["x", "v", "chosen_action", "n_eps_optimal"], rows)


def write_solve_sidecar(path, report, **extra) -> None:
    payload = {
        "alpha": report.alpha,
        "tol": report.tol,
        "iterations": report.iterations,
        "residual": report.residual,
        "clamp_events": report.clamp_events,
    }
    payload.update(extra)
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def write_threshold_csv(path, rows) -> None:
    """Rows: (context, s, S, g_min, K_convex_ok, extrapolation_count)."""
    _write_rows(path, ["context", "s", "S", "g_min", "K_convex_ok", "extrapolation_count"], rows)


def write_sweep_csv(path, sweep) -> None:
    header = [
        "alpha",
        "m_alpha",
        "one_minus_alpha_times_m",
        "s",
        "S",
        "minimizer_lo",
        "minimizer_hi",
        "solver_iters",
    ]
    rows = (
        (
            r.alpha,
            r.m_alpha,
            r.w_point,
            r.s,
            r.S,
            float(r.minimizer_states.min()),
            float(r.minimizer_states.max()),
            r.iterations,
        )
        for r in sweep.records
    )
    _write_rows(path, header, rows)


def write_results_csv(path, rows) -> None:
    """Rows: (policy_id, criterion, mean, std_error, n_paths, horizon, seed)."""
    _write_rows(
        path, ["policy_id", "criterion", "mean", "std_error", "n_paths", "horizon", "seed"], rows
    )


def write_renewal_json(path, payload: dict) -> None:
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


@dataclass
class RunManifest:
    """Reproducibility record written next to every command's outputs."""

    command: str
    config: str
    seed: int
    version: str
    started_at: str
    finished_at: str = ""
    outputs: list = field(default_factory=list)
    checks: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)
    extra: dict = field(default_factory=dict)

    def add_output(self, path) -> None:
        self.outputs.append(str(path))

    def add_check(self, name: str, passed: bool, **detail) -> None:
        self.checks[name] = {"passed": bool(passed), **detail}

    @property
    def all_passed(self) -> bool:
        return all(c["passed"] for c in self.checks.values())


def write_manifest(path, manifest: RunManifest) -> None:
    payload = {
        "command": manifest.command,
        "config": manifest.config,
        "seed": manifest.seed,
        "version": manifest.version,
        "started_at": manifest.started_at,
        "finished_at": manifest.finished_at,
        "outputs": manifest.outputs,
        "checks": manifest.checks,
        "notes": manifest.notes,
    }
    payload.update(manifest.extra)
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
