"""
Command-line entry point: ``run``, ``sweep``, ``verify`` and ``spectral``.

Exit codes are 0 (converged or all checks passed), 2 (iteration budget
exhausted), 3 (diverged) and 4 (configuration or usage error).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

import numpy as np

from .chebyshev import make_cheb_operator, verify_eigengap_bound
from .engine import ParameterError
from .experiment import (AXES, EXIT_CONFIG, ConfigError, build_graph, load_config,
                         run_experiment, sweep)
from .verification import SUITES, verify


def _csv_list(text: str) -> list[str]:
    return [v.strip() for v in text.split(",") if v.strip()]


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="rpp", description="Perturbed primal-dual distributed optimization")
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run one experiment")
    p.add_argument("--config", required=True)
    p.add_argument("--trace", help="override run.trace_path")

    p = sub.add_parser("sweep", help="cross-product runs over one axis and several seeds")
    p.add_argument("--config", required=True)
    p.add_argument("--axis", required=True, choices=sorted(AXES))
    p.add_argument("--values", required=True, type=_csv_list)
    p.add_argument("--seeds", required=True, type=_csv_list)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", default=None, help="directory for per-cell traces and sweep.csv")

    p = sub.add_parser("verify", help="run the built-in property suites")
    p.add_argument("--suite", default="all", choices=("all",) + SUITES)
    p.add_argument("--json", action="store_true", help="print a JSON report")

    p = sub.add_parser("spectral", help="spectral data of the configured graph")
    p.add_argument("--config", required=True)
    return ap


def _cmd_run(args) -> int:
    cfg = load_config(args.config)
    if args.trace:
        cfg = cfg.with_value("run.trace_path", args.trace)
    res = run_experiment(cfg)
    s = res.summary
    print(f"status = {res.status}")
    print(f"iterations = {s['iterations']}")
    print(f"comm_rounds = {s['comm_rounds']}")
    print(f"final_stationarity_gap = {s['final_stationarity_gap']}")
    print(f"final_optimality_gap = {s['final_optimality_gap']}")
    print(f"diff_bound_violation_rate = {s['perturbation_bounds']['iteration_diff_violation_rate']}")
    if s.get("certificate"):
        print(f"certificate_passed = {s['certificate']['passed']}")
    return res.exit_code


def _cmd_sweep(args) -> int:
    cfg = load_config(args.config)
    seeds = [int(s) for s in args.seeds]
    rows = sweep(cfg, args.axis, args.values, seeds, out_dir=args.out, workers=args.workers)
    print("axis_value,n,converged,iters_min,iters_median,iters_max,comm_min,comm_median,comm_max")
    for v in args.values:
        cell = [r for r in rows if str(r["axis_value"]) == str(v)]
        its = [r["iters_to_tol"] for r in cell if r["iters_to_tol"] is not None]
        com = [r["comm_to_tol"] for r in cell if r["comm_to_tol"] is not None]
        stats = [_stats(its), _stats(com)]
        print(",".join([str(v), str(len(cell)), str(len(its))] + [x for s in stats for x in s]))
    return 0


def _stats(vals):
    if not vals:
        return ["", "", ""]
    return [str(min(vals)), f"{float(np.median(vals)):g}", str(max(vals))]


def _cmd_verify(args) -> int:
    report = verify(args.suite)
    if args.json:
        print(report.to_json())
    else:
        for line in report.lines():
            print(line)
        print(f"overall = {'PASS' if report.passed else 'FAIL'}")
    return 0 if report.passed else 1


def _cmd_spectral(args) -> int:
    cfg = load_config(args.config)
    _, P = build_graph(cfg)
    lam_max, lam_min, kappa = P.spectral
    # the bound applies to the automatic degree
    op = make_cheb_operator(P)
    kappa_l, bound, ok = verify_eigengap_bound(op)
    print(f"lambda_max = {lam_max!r}")
    print(f"lambda_min_nonzero = {lam_min!r}")
    print(f"kappa_P = {kappa!r}")
    print(f"kappa_L = {kappa_l!r}")
    print(f"tau = {op.tau}")
    print(f"eigengap_bound = {bound!r}")
    print(f"eigengap_bound_holds = {ok}")
    tau_cfg = cfg.algorithm["tau"]
    if tau_cfg is not None and tau_cfg != op.tau:
        print(f"tau_configured = {tau_cfg}")
        print(f"kappa_L_configured = {verify_eigengap_bound(make_cheb_operator(P, tau_cfg))[0]!r}")
    return 0


_COMMANDS = {"run": _cmd_run, "sweep": _cmd_sweep, "verify": _cmd_verify, "spectral": _cmd_spectral}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else 0
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return _COMMANDS[args.command](args)
    except (ConfigError, ParameterError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
