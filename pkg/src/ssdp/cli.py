"""Command-line front end.

Subcommands::

    ssdp solve  CONFIG --alpha A [--horizon N] [--terminal zero|v0alpha] --out DIR
    ssdp sweep  CONFIG [--schedule geometric:12] --out DIR
    ssdp verify CONFIG --suite renewal|sandwich|action-convergence|brute-force-sS|all --out DIR

Exit codes: 0 success, 2 usage/config error, 3 solver non-convergence,
4 verification failure.  Every run writes a JSON manifest recording the
seed, outputs, and per-check pass/fail; CSV outputs are byte-reproducible
for a fixed config and seed at any worker count.
"""

from __future__ import annotations

import argparse
import json
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__, average, policy
from .config import load_model
from .dp import (
    ConvergenceError,
    TerminalValue,
    solve_finite,
    solve_infinite,
    track_action_convergence,
)
from .io import (
    RunManifest,
    write_manifest,
    write_renewal_json,
    write_results_csv,
    write_solve_csv,
    write_solve_sidecar,
    write_sweep_csv,
    write_table_csv,
    write_threshold_csv,
)
from .model import ModelError
from .renewal import overshoot_bound_check, sample_renewal, wald_check
from .simulate import SimConfig, simulate_average

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NONCONVERGENCE = 3
EXIT_VERIFICATION = 4

BRUTE_FORCE_GRID_CAP = 201


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


def _check_alpha_arg(alpha: float) -> None:
    if not (0.0 <= alpha < 1.0):
        raise ModelError("alpha must lie in [0,1)")


def _parse_schedule(text: str) -> list[float]:
    if text.startswith("geometric:"):
        try:
            n = int(text.split(":", 1)[1])
        except ValueError:
            raise ModelError(f"bad schedule spec {text!r}") from None
        return average.geometric_schedule(n)
    try:
        values = [float(tok) for tok in text.split(",")]
    except ValueError:
        raise ModelError(f"bad schedule spec {text!r}") from None
    return values


def _manifest(args, command: str) -> RunManifest:
    return RunManifest(
        command=command,
        config=str(args.config),
        seed=args.seed,
        version=__version__,
        started_at=_now(),
    )


def _finish(out_dir: Path, manifest: RunManifest) -> None:
    manifest.finished_at = _now()
    path = out_dir / "manifest.json"
    write_manifest(path, manifest)
    print(f"manifest: {path}")


def cmd_solve(args) -> int:
    _check_alpha_arg(args.alpha)
    if args.horizon is not None and args.horizon < 1:
        raise ModelError("horizon must be at least 1")
    model = load_model(args.config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    manifest = _manifest(args, "solve")
    try:
        if args.horizon is None:
            result = policy.discounted_sS(model, args.alpha, tol=args.tol, horizon_trace=False)
            value_csv = out / "value.csv"
            write_solve_csv(value_csv, result.solve)
            manifest.add_output(value_csv)
            sidecar = out / "value_meta.json"
            write_solve_sidecar(sidecar, result.solve)
            manifest.add_output(sidecar)
            cert = result.k_convexity
            manifest.add_check(
                "k_convex",
                cert.verdict,
                worst_violation=cert.worst_violation,
                worst_triple=cert.worst_triple,
            )
            kconv_path = out / "k_convexity.json"
            kconv_path.write_text(
                json.dumps(
                    {
                        "verdict": cert.verdict,
                        "K": cert.K,
                        "tol": cert.tol,
                        "worst_violation": cert.worst_violation,
                        "worst_triple": cert.worst_triple,
                    },
                    indent=2,
                    sort_keys=True,
                )
                + "\n"
            )
            manifest.add_output(kconv_path)
            thr_csv = out / "thresholds.csv"
            if result.policy is not None:
                write_threshold_csv(
                    thr_csv,
                    [
                        (
                            f"alpha={args.alpha}",
                            result.policy.s,
                            result.policy.S,
                            float(result.g.values.min()),
                            cert.verdict,
                            result.g.extrapolation_count,
                        )
                    ],
                )
                manifest.add_output(thr_csv)
                manifest.add_check(
                    "policy_evaluation_gap",
                    result.eval_gap <= 10 * args.tol,
                    gap=result.eval_gap,
                )
                manifest.extra["s"] = result.policy.s
                manifest.extra["S"] = result.policy.S
            else:
                write_threshold_csv(
                    thr_csv,
                    [
                        (
                            f"alpha={args.alpha}",
                            None,
                            None,
                            float(result.g.values.min()),
                            cert.verdict,
                            result.g.extrapolation_count,
                        )
                    ],
                )
                manifest.add_output(thr_csv)
                manifest.notes.append(result.explanation)
        else:
            if args.terminal == "v0alpha":
                fs = policy.finite_horizon_sS(model, args.alpha, args.horizon, tol=args.tol)
                fin, stage_pols, certs = fs.finite, fs.policies, fs.certifications
                manifest.add_check("threshold_dp_agreement", fs.agreement_ok)
                for w in fs.warnings:
                    manifest.notes.append(w)
            else:
                fin = solve_finite(
                    model, args.horizon, TerminalValue.zero(model.grid), args.alpha
                )
                stage_pols, certs = [], []
                for t in range(args.horizon):
                    g_t = policy.build_G(
                        model, fin.values[t], args.alpha, kind="finite_t", t=t, terminal_id="zero"
                    )
                    certs.append(policy.is_K_convex(g_t, model.K))
                    try:
                        stage_pols.append(policy.extract_sS(g_t, model.K))
                    except ModelError as exc:
                        stage_pols.append(None)
                        manifest.notes.append(f"stage t={t}: {exc}")
                slope = policy.slope_condition(model)
                manifest.extra["slope_condition"] = {
                    "holds": slope.holds,
                    "witness": slope.witness,
                    "quotient": slope.quotient,
                }
            rows = []
            for t, (sp, cert) in enumerate(zip(stage_pols, certs)):
                rows.append(
                    (
                        f"t={t}",
                        None if sp is None else sp.s,
                        None if sp is None else sp.S,
                        None,
                        None if cert is None else cert.verdict,
                        None,
                    )
                )
            thr_csv = out / "thresholds.csv"
            write_threshold_csv(thr_csv, rows)
            manifest.add_output(thr_csv)
            all_ok = all(c.verdict for c in certs if c is not None)
            worst = max(
                (c for c in certs if c is not None),
                key=lambda c: c.worst_violation,
                default=None,
            )
            manifest.add_check(
                "k_convex",
                all_ok,
                worst_violation=None if worst is None else worst.worst_violation,
                worst_triple=None if worst is None else worst.worst_triple,
            )
            value_csv = out / "value.csv"
            last_v, last_p = fin.values[-1], fin.policies[-1]
            rows = (
                (
                    model.grid.points[i],
                    last_v.values[i],
                    last_p.chosen[i],
                    len(last_p.action_sets[i]),
                )
                for i in range(model.grid.n)
            )
            write_table_csv(value_csv, ["x", "v", "chosen_action", "n_eps_optimal"], rows)
            manifest.add_output(value_csv)
    except policy.CertificationError as exc:
        manifest.add_check("certification", False, error=str(exc))
        _finish(out, manifest)
        print(f"verification failure: {exc}", file=sys.stderr)
        return EXIT_VERIFICATION
    _finish(out, manifest)
    if not manifest.all_passed:
        failed = [k for k, v in manifest.checks.items() if not v["passed"]]
        print(f"verification failure: {', '.join(failed)}", file=sys.stderr)
        return EXIT_VERIFICATION
    return EXIT_OK


def cmd_sweep(args) -> int:
    model = load_model(args.config)
    schedule = _parse_schedule(args.schedule)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    manifest = _manifest(args, "sweep")
    if model.demand.p_positive == 0.0:
        result = policy.average_sS(model)
        manifest.notes.append(result.note)
        thr_csv = out / "thresholds.csv"
        write_threshold_csv(
            thr_csv, [("average", result.policy.s, result.policy.S, None, None, None)]
        )
        manifest.add_output(thr_csv)
        manifest.extra["degenerate_zero_demand"] = True
        _finish(out, manifest)
        return EXIT_OK
    try:
        sw = average.sweep(model, schedule, tol=args.tol, workers=args.workers)
    except ConvergenceError as exc:
        manifest.notes.append(str(exc))
        _finish(out, manifest)
        print(f"solver non-convergence: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGENCE
    sweep_csv = out / "sweep.csv"
    write_sweep_csv(sweep_csv, sw)
    manifest.add_output(sweep_csv)
    for w in sw.warnings:
        manifest.notes.append(w)
    limit_ok = len(sw.records) >= 3
    summary = {
        "w_estimate": sw.w_estimate,
        "alphas": sw.alphas,
        "cauchy": sw.cauchy,
        "partial": sw.partial,
    }
    if limit_ok:
        manifest.add_check("cauchy", sw.cauchy, last_diffs=list(map(float, sw.diffs[-2:])))
        bdiag = average.assumption_B_diagnostic(sw)
        manifest.add_check(
            "assumption_B_bounded",
            bdiag.bounded,
            offending_states=bdiag.offending_states.tolist(),
        )
        summary["assumption_B"] = bdiag.verdict
        hull = average.minimizer_set_diagnostic(sw)
        manifest.add_check("minimizer_hull_interior", hull.interior_ok, lo=hull.lo, hi=hull.hi)
        try:
            avg_result = policy.average_sS(model, sweep_result=sw, tol=args.tol)
        except policy.CertificationError as exc:
            manifest.add_check("limit_thresholds", False, error=str(exc))
            _finish(out, manifest)
            print(f"verification failure: {exc}", file=sys.stderr)
            return EXIT_VERIFICATION
        manifest.add_check("thresholds_settled", avg_result.settled)
        manifest.add_check("thresholds_interior", avg_result.bounded_ok)
        oi = avg_result.optimality
        manifest.add_check(
            "optimality_inequality",
            oi.passes,
            max_interior_residual=oi.max_interior,
            slack=oi.slack,
        )
        summary["s"] = avg_result.policy.s
        summary["S"] = avg_result.policy.S
        summary["optimality_residuals"] = {
            "per_state": oi.residuals.tolist(),
            "max_interior": oi.max_interior,
            "max_boundary": oi.max_boundary,
            "slack": oi.slack,
        }
        sim = simulate_average(
            model,
            SimConfig(
                x0=avg_result.policy.S,
                horizon=4000,
                n_paths=256,
                seed=args.seed,
                policy=avg_result.policy,
            ),
        )
        results_csv = out / "results.csv"
        write_results_csv(
            results_csv,
            [(sim.policy_id, sim.criterion, sim.mean, sim.std_error, sim.n_paths,
              sim.horizon, sim.seed)],
        )
        manifest.add_output(results_csv)
        gap = abs(sim.mean - sw.w_estimate)
        manifest.add_check(
            "simulated_average_matches_w",
            gap <= 3.0 * sim.std_error,
            gap=gap,
            three_se=3.0 * sim.std_error,
        )
        summary["simulated_average"] = sim.mean
    summary_path = out / "sweep_summary.json"
    summary_path.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    manifest.add_output(summary_path)
    _finish(out, manifest)
    if not manifest.all_passed:
        failed = [k for k, v in manifest.checks.items() if not v["passed"]]
        print(f"verification failure: {', '.join(failed)}", file=sys.stderr)
        return EXIT_VERIFICATION
    return EXIT_OK


def _suite_renewal(model, args, manifest, out):
    sample = sample_renewal(model.demand, y=10.0, n_paths=args.paths, seed=args.seed)
    wald = wald_check(sample, model.demand)
    over = overshoot_bound_check(model, x=0.0, y=10.0, n_paths=args.paths, seed=args.seed, sample=sample)
    payload = {
        "y": 10.0,
        "n_paths": args.paths,
        "seed": args.seed,
        "mean_N": sample.mean_count,
        "wald": {"lhs": wald.lhs, "rhs": wald.rhs, "z": wald.z},
        "overshoot": {"lhs": over.lhs, "rhs": over.rhs, "margin": over.margin},
    }
    path = out / "renewal.json"
    write_renewal_json(path, payload)
    manifest.add_output(path)
    return [
        ("renewal.wald_z_within_4", wald.passes, f"z={wald.z}"),
        ("renewal.overshoot_bound", over.passes, f"margin={over.margin}"),
    ]


def _suite_sandwich(model, args, manifest, out):
    alpha, tol, horizon = args.alpha, args.tol, 40
    report = solve_infinite(model, alpha, tol=tol)
    zs = policy.solve_zero_setup(model, alpha, tol=tol)
    fin0 = solve_finite(model, horizon, TerminalValue.zero(model.grid), alpha)
    v0_stack = np.stack([vt.values for vt in fin0.values])
    monotone = bool(np.all(np.diff(v0_stack, axis=0) >= -1e-12))
    finF = solve_finite(model, horizon, zs.terminal(), alpha)
    vF_stack = np.stack([vt.values for vt in finF.values])
    sandwich = bool(
        np.all(v0_stack <= vF_stack + 1e-12)
        and np.all(vF_stack <= report.value.values[None, :] + tol)
    )
    g_alpha = policy.build_G(model, report.value, alpha, kind="infinite")
    g_prev = zs.g0.values
    chain = True
    for t in range(horizon):
        g_t = policy.build_G(
            model, finF.values[t], alpha, kind="finite_t", t=t, terminal_id="v0_alpha"
        ).values
        chain &= bool(np.all(g_prev <= g_t + 1e-12))
        g_prev = g_t
    chain &= bool(np.all(g_prev <= g_alpha.values + tol))
    return [
        ("sandwich.value_monotone_in_t", monotone, f"horizon={horizon}"),
        ("sandwich.terminal_between_0_and_v", sandwich, f"alpha={alpha}"),
        ("sandwich.g_chain_ordered", chain, f"alpha={alpha}"),
    ]


def _suite_action_convergence(model, args, manifest, out):
    alpha = args.alpha
    checks = []
    zs = policy.solve_zero_setup(model, alpha, tol=args.tol)
    for terminal in (TerminalValue.zero(model.grid), zs.terminal()):
        rep = track_action_convergence(model, alpha, terminal, t_max=args.t_max)
        ok = rep.all_settled
        worst = int(rep.settle_t.max()) if ok else -1
        checks.append(
            (
                f"action_convergence.terminal_{terminal.id}",
                ok,
                f"max_t_star={worst}" if ok else f"unsettled_states={rep.unsettled.tolist()}",
            )
        )
    return checks


def _suite_brute_force(model, args, manifest, out):
    if model.grid.n > BRUTE_FORCE_GRID_CAP:
        raise ModelError(
            f"grid too large for exhaustive oracle: {model.grid.n} points "
            f"(cap {BRUTE_FORCE_GRID_CAP})"
        )
    report = policy.brute_force_sS_check(model, args.alpha, tol=args.tol)
    return [
        (
            "brute_force_sS.no_better_pair",
            report.passes,
            f"worst_gap={report.worst_gap} pair={report.best_pair}",
        )
    ]


def cmd_verify(args) -> int:
    _check_alpha_arg(args.alpha)
    model = load_model(args.config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    manifest = _manifest(args, "verify")
    suites = {
        "renewal": _suite_renewal,
        "sandwich": _suite_sandwich,
        "action-convergence": _suite_action_convergence,
        "brute-force-sS": _suite_brute_force,
    }
    selected = list(suites) if args.suite == "all" else [args.suite]
    failures = 0
    try:
        for name in selected:
            for check, passed, detail in suites[name](model, args, manifest, out):
                manifest.add_check(check, passed, detail=detail)
                print(f"{'PASS' if passed else 'FAIL'} {check}: {detail}")
                failures += 0 if passed else 1
    except policy.CertificationError as exc:
        manifest.add_check("certification", False, error=str(exc))
        _finish(out, manifest)
        print(f"verification failure: {exc}", file=sys.stderr)
        return EXIT_VERIFICATION
    _finish(out, manifest)
    return EXIT_VERIFICATION if failures else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ssdp", description=__doc__)
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("config", help="model config JSON")
    common.add_argument("--out", required=True, help="output directory")
    common.add_argument("--seed", type=int, default=0, help="run seed recorded in the manifest")
    common.add_argument("--workers", type=int, default=1, help="parallel workers (results identical)")

    ps = sub.add_parser("solve", parents=[common], help="discounted solve and (s,S) extraction")
    ps.add_argument("--alpha", type=float, required=True)
    ps.add_argument("--horizon", type=int, default=None)
    ps.add_argument("--terminal", choices=["zero", "v0alpha"], default="v0alpha")
    ps.add_argument("--tol", type=float, default=1e-8, help="solver tolerance")
    ps.set_defaults(fn=cmd_solve)

    pw = sub.add_parser("sweep", parents=[common], help="vanishing-discount average-cost sweep")
    pw.add_argument("--schedule", default="geometric:12")
    # sweeps need a tolerance compatible with the G consistency check at small alpha
    pw.add_argument("--tol", type=float, default=1e-7, help="solver tolerance")
    pw.set_defaults(fn=cmd_sweep)

    pv = sub.add_parser("verify", parents=[common], help="invariant verification suites")
    pv.add_argument(
        "--suite",
        choices=["renewal", "sandwich", "action-convergence", "brute-force-sS", "all"],
        required=True,
    )
    pv.add_argument("--alpha", type=float, default=0.9)
    pv.add_argument("--tol", type=float, default=1e-8, help="solver tolerance")
    pv.add_argument("--paths", type=int, default=100_000)
    pv.add_argument("--t-max", type=int, dest="t_max", default=200)
    pv.set_defaults(fn=cmd_verify)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ModelError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ConvergenceError as exc:
        print(f"solver non-convergence: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGENCE


if __name__ == "__main__":
    sys.exit(main())
