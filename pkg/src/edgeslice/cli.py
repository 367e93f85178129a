"""Command-line entry point.

Exit codes: 0 success, 1 usage or input error, 2 infeasible solution or
failed validation.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

from .dcesp import AdmmConfig, solve_dcesp
from .exact import build_esp, solve_exact
from .experiment import Solver, baseline_coupling_blind, load_config, rows_to_csv, run_experiment
from .model import EdgeSliceError, UnknownIdError, ValueMode, validate_solution
from .scenario import (
    ScenarioParams,
    generate,
    load_scenario,
    load_solution,
    save_scenario,
    scenario_to_dict,
    solution_to_dict,
)
from .vesp import solve_vesp

EXIT_OK, EXIT_USAGE, EXIT_INVALID = 0, 1, 2

log = logging.getLogger("edgeslice")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _emit(text: str, out: str | None) -> None:
    if out:
        with open(out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _cmd_generate(args) -> int:
    params = ScenarioParams(
        K=args.K, nodes_per_cluster=args.nodes_per_cluster, request_count=args.requests,
        perturbation=args.perturbation, demand_intensity=args.demand_intensity,
        request_types=tuple(args.types.split(",")), seed=args.seed)
    infra, requests = generate(params)
    if args.out:
        save_scenario(args.out, infra, requests, params)
    else:
        _emit(json.dumps(scenario_to_dict(infra, requests, params), indent=1) + "\n", None)
    return EXIT_OK


def _cmd_solve(args) -> int:
    infra, requests = load_scenario(args.scenario)
    mode = ValueMode(args.value_mode)
    solver = Solver.parse(args.solver)
    trace = None
    if solver is Solver.OESP:
        sol = solve_exact(build_esp(infra, requests, mode))
    elif solver is Solver.VESP:
        sol = solve_vesp(infra, requests, args.epsilon, mode)
    elif solver is Solver.DCESP:
        sol, trace = solve_dcesp(infra, requests, mode, AdmmConfig(max_iterations=args.max_iterations))
    else:
        sol, _ = baseline_coupling_blind(infra, requests, mode)
    _emit(json.dumps(solution_to_dict(sol, solver.value), indent=1) + "\n", args.out)
    if trace is not None and args.trace:
        with open(args.trace, "w") as fh:
            fh.write(trace.to_csv())
    report = validate_solution(infra, requests, sol)
    if not report.feasible and solver is not Solver.BASELINE:
        for d, z, v in report.violating():
            print(f"capacity exceeded: node {d} type {z.name} by {v:.6g}", file=sys.stderr)
        return EXIT_INVALID
    return EXIT_OK


def _cmd_experiment(args) -> int:
    spec = load_config(args.config)
    if args.workers is not None:
        spec.workers = args.workers
    rows = run_experiment(spec)
    _emit(rows_to_csv(rows), args.out or spec.output)
    failed = [r for r in rows if r["status"] != "ok"]
    for r in failed:
        print(f"run failed: solver {r['solver']} R={r['R']} D_c={r['D_c']} "
              f"replication {r['replication']}: {r['status']}", file=sys.stderr)
    return EXIT_OK


def _cmd_validate(args) -> int:
    infra, requests = load_scenario(args.scenario)
    sol = load_solution(args.solution)
    try:
        report = validate_solution(infra, requests, sol, args.tol)
    except UnknownIdError as exc:
        print(f"invalid solution: {exc.args[0]}", file=sys.stderr)
        return EXIT_INVALID
    summary = {
        "feasible": report.feasible,
        "max_violation": report.max_violation,
        "max_residual": report.max_residual,
        "violations": [{"node": d, "type": z.name, "excess": v} for d, z, v in report.violating(args.tol)],
        "residuals": [{"request": r, "cluster": k, "residual": v}
                      for (r, k), v in sorted(report.demand_residuals.items()) if v > args.tol],
    }
    sys.stdout.write(json.dumps(summary, indent=1) + "\n")
    if report.feasible:
        return EXIT_OK
    for d, z, v in report.violating(args.tol):
        print(f"capacity exceeded: node {d} type {z.name} by {v:.6g}", file=sys.stderr)
    for item in summary["residuals"]:
        print(f"demand mismatch: request {item['request']} cluster {item['cluster']} "
              f"off by {item['residual']:.6g}", file=sys.stderr)
    if any(a < -args.tol for a in sol.allocation.values()):
        print("negative allocation amounts present", file=sys.stderr)
    return EXIT_INVALID


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="edgeslice", description="Edge slicing solvers and experiments.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("generate", help="write a random scenario")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--K", type=int, default=5, help="number of clusters")
    g.add_argument("--nodes-per-cluster", type=int, default=5)
    g.add_argument("--requests", type=int, default=10)
    g.add_argument("--perturbation", type=float, default=0.1)
    g.add_argument("--demand-intensity", type=float, default=0.5)
    g.add_argument("--types", default="N,S,C", help="comma-separated request types")
    g.add_argument("--out", help="output file (default: stdout)")
    g.set_defaults(func=_cmd_generate)

    s = sub.add_parser("solve", help="solve one scenario and print the solution JSON")
    s.add_argument("--scenario", required=True)
    s.add_argument("--solver", default="oesp", choices=["oesp", "vesp", "dcesp", "baseline"],
                   type=str.lower)
    s.add_argument("--seed", type=int, default=0,
                   help="accepted for uniformity; every solver is deterministic")
    s.add_argument("--epsilon", type=float, default=0.1, help="similarity threshold for vesp")
    s.add_argument("--value-mode", default="profit", choices=["profit", "count"])
    s.add_argument("--max-iterations", type=int, default=500, help="iteration cap for dcesp")
    s.add_argument("--trace", help="write the dcesp convergence trace CSV here")
    s.add_argument("--out", help="output file (default: stdout)")
    s.set_defaults(func=_cmd_solve)

    e = sub.add_parser("experiment", help="run a study from a TOML config and write CSV")
    e.add_argument("--config", required=True)
    e.add_argument("--workers", type=int, help="override the config's worker count")
    e.add_argument("--out", help="output CSV (default: config 'output' or stdout)")
    e.set_defaults(func=_cmd_experiment)

    v = sub.add_parser("validate", help="check a solution file against a scenario")
    v.add_argument("--scenario", required=True)
    v.add_argument("--solution", required=True)
    v.add_argument("--tol", type=float, default=1e-6)
    v.set_defaults(func=_cmd_validate)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except (EdgeSliceError, ValueError, OSError) as exc:
        print(f"edgeslice {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
