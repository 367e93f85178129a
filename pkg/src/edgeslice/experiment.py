"""Experiment harness: coupling-blind baseline, study grids and CSV output."""

from __future__ import annotations

import csv
import enum
import io
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import tomli

from .dcesp import AdmmConfig, solve_dcesp
from .exact import BnbConfig, build_esp, solve_exact
from .model import (
    CollateralMatrix,
    EdgeNode,
    EdgeSliceError,
    Infrastructure,
    ResourceType,
    SliceRequest,
    SlicingSolution,
    ValueMode,
    node_consumption,
    validate_solution,
)
from .scenario import ScenarioParams, generate
from .vesp import prepare, solve_vesp

log = logging.getLogger(__name__)

CSV_COLUMNS = [
    "study", "D_c", "K", "R", "epsilon", "replication", "seed", "solver", "status",
    "objective", "admitted", "admitted_pct", "func_evals", "bnb_nodes", "lp_pivots",
    "admm_iters", "converged", "repairs", "max_violation", "opt_ratio", "max_load", "wall_time",
]
TIMING_COLUMNS = ("wall_time",)


class ConfigError(EdgeSliceError, ValueError):
    pass


class Study(enum.Enum):
    OVER_PROVISIONING = "OverProvisioning"
    ADMITTED_COUNT = "AdmittedCount"
    PROFIT = "Profit"
    EPSILON_SWEEP = "EpsilonSweep"


class Solver(enum.Enum):
    OESP = "OESP"
    VESP = "VESP"
    DCESP = "DCESP"
    BASELINE = "Baseline"

    @classmethod
    def parse(cls, text: str) -> "Solver":
        for s in cls:
            if s.value.lower() == text.strip().lower():
                return s
        raise ConfigError(f"unknown solver {text!r}; choose from {[s.value for s in cls]}")


# --- baseline ----------------------------------------------------------------

@dataclass
class OverProvisionReport:
    ratios: dict[tuple[int, ResourceType], float]

    @property
    def max_ratio(self) -> float:
        return max(self.ratios.values(), default=0.0)


def load_ratios(infra: Infrastructure, requests: list[SliceRequest],
                sol: SlicingSolution) -> OverProvisionReport:
    """True consumption divided by capacity for every (node, type)."""
    used = node_consumption(infra, requests, sol)
    ratios = {}
    for d, vec in used.items():
        cap = infra.nodes[d].capacity
        for z in ResourceType:
            if cap[z] > 0:
                ratios[(d, z)] = vec[z] / cap[z]
            else:
                ratios[(d, z)] = float("inf") if vec[z] > 0 else 0.0
    return OverProvisionReport(ratios)


def baseline_coupling_blind(infra: Infrastructure, requests: list[SliceRequest],
                            value_mode: ValueMode = ValueMode.PROFIT, cfg: BnbConfig | None = None
                            ) -> tuple[SlicingSolution, OverProvisionReport]:
    """Solve as if no resource coupling existed, then measure the real load."""
    blind = Infrastructure(infra.clusters, [
        EdgeNode(n.id, n.cluster_id, n.capacity, CollateralMatrix.identity()) for n in infra.nodes.values()])
    sol = solve_exact(build_esp(blind, requests, value_mode), cfg)
    return sol, load_ratios(infra, requests, sol)


# --- experiment specification -------------------------------------------------

def _default_solvers():
    return [Solver.OESP, Solver.VESP, Solver.DCESP]


@dataclass
class ExperimentSpec:
    study: Study
    solvers: list[Solver] = field(default_factory=_default_solvers)
    K: int = 5
    R_values: list[int] = field(default_factory=lambda: [10])
    D_c_values: list[int] = field(default_factory=lambda: [25])
    epsilons: list[float] = field(default_factory=lambda: [0.1])
    replications: int = 1
    seed: int = 0
    output: str | None = None
    workers: int = 1
    scenario: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.solvers:
            raise ConfigError("solvers must not be empty")
        if not (self.R_values and self.D_c_values and self.epsilons):
            raise ConfigError("sweep axes R, D_c and epsilon must not be empty")
        if self.replications < 1:
            raise ConfigError("replications must be >= 1")
        if any(dc < self.K for dc in self.D_c_values):
            raise ConfigError("every D_c must be at least K (one node per cluster)")
        if any(e < 0 for e in self.epsilons):
            raise ConfigError("epsilon values must be >= 0")
        clash = {"K", "nodes_per_cluster", "request_count", "seed"} & set(self.scenario)
        if clash:
            raise ConfigError(f"scenario table must not set {sorted(clash)}; use the sweep keys instead")
        try:
            self.scenario_params(self.D_c_values[0], self.R_values[0], 0)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid scenario table: {exc}") from exc

    @property
    def value_mode(self) -> ValueMode:
        return ValueMode.COUNT if self.study is Study.ADMITTED_COUNT else ValueMode.PROFIT

    def scenario_params(self, D_c: int, R: int, seed: int) -> ScenarioParams:
        base = {}
        if self.study is Study.OVER_PROVISIONING:
            # no storage slices, every cluster requested
            base.update(request_types=("N", "C"), demand_intensity=1.0)
        base.update(self.scenario)
        return ScenarioParams(K=self.K, nodes_per_cluster=D_c // self.K, request_count=R, seed=seed, **base)


def load_config(path) -> ExperimentSpec:
    """Read an experiment config written in TOML."""
    try:
        with open(path, "rb") as fh:
            data = tomli.load(fh)
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror or exc}") from exc
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return spec_from_dict(data)


def _as_list(v):
    return list(v) if isinstance(v, (list, tuple)) else [v]


def spec_from_dict(data: dict) -> ExperimentSpec:
    data = dict(data)
    if "study" not in data:
        raise ConfigError("config is missing 'study'")
    try:
        study = Study(data.pop("study"))
    except ValueError:
        raise ConfigError(f"unknown study; choose from {[s.value for s in Study]}") from None
    kwargs = {"study": study}
    renames = {"R": "R_values", "D_c": "D_c_values", "epsilon": "epsilons"}
    for key, value in data.items():
        if key == "solvers":
            kwargs["solvers"] = [Solver.parse(s) for s in _as_list(value)]
        elif key in renames:
            kwargs[renames[key]] = _as_list(value)
        elif key in ("K", "replications", "seed", "workers"):
            kwargs[key] = int(value)
        elif key == "output":
            kwargs["output"] = str(value)
        elif key == "scenario":
            kwargs["scenario"] = dict(value)
        else:
            raise ConfigError(f"unknown config key {key!r}")
    return ExperimentSpec(**kwargs)


# --- running -------------------------------------------------------------------

def run_seed(base_seed: int, replication: int) -> int:
    """Scenario seed for one replication.

    The same seed is used at every grid point (common random numbers): a
    larger R extends the same request list and a larger D_c adds nodes to
    the same clusters, so sweep comparisons are paired.
    """
    ss = np.random.SeedSequence([base_seed, replication])
    return int(ss.generate_state(1, np.uint64)[0])


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return str(v).lower()
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _solver_row(solver: Solver, infra, requests, spec: ExperimentSpec, eps: float, vinfra):
    mode = spec.value_mode
    t0 = time.perf_counter()
    converged = None
    load = None
    if solver is Solver.OESP:
        sol = solve_exact(build_esp(infra, requests, mode))
    elif solver is Solver.VESP:
        sol = solve_vesp(infra, requests, vinfra, mode)
    elif solver is Solver.DCESP:
        sol, trace = solve_dcesp(infra, requests, mode, AdmmConfig())
        converged = trace.converged
    else:
        sol, report = baseline_coupling_blind(infra, requests, mode)
        load = report.max_ratio
    wall = time.perf_counter() - t0
    report = validate_solution(infra, requests, sol)
    if load is None:
        load = load_ratios(infra, requests, sol).max_ratio
    admitted = len(sol.admitted())
    return {
        "status": "ok",
        "objective": sol.objective,
        "admitted": admitted,
        "admitted_pct": 100.0 * admitted / len(requests) if requests else 0.0,
        "func_evals": sol.stats.function_evaluations,
        "bnb_nodes": sol.stats.bnb_nodes,
        "lp_pivots": sol.stats.lp_pivots,
        "admm_iters": sol.stats.admm_iterations,
        "converged": converged,
        "repairs": sol.stats.repairs,
        "max_violation": report.max_violation,
        "max_load": load,
        "wall_time": wall,
    }


def run_point(spec: ExperimentSpec, D_c: int, R: int, replication: int) -> list[dict]:
    """All rows (every epsilon and solver) for one generated scenario."""
    seed = run_seed(spec.seed, replication)
    params = spec.scenario_params(D_c, R, seed)
    infra, requests = generate(params)
    rows = []
    oesp_obj = None
    oesp_row = None
    for eps in spec.epsilons:
        vinfra = prepare(infra, eps) if Solver.VESP in spec.solvers else None
        for solver in spec.solvers:
            base = {"study": spec.study.value, "D_c": params.K * params.nodes_per_cluster, "K": params.K,
                    "R": R, "epsilon": float(eps), "replication": replication, "seed": seed,
                    "solver": solver.value}
            if solver is Solver.OESP and oesp_row is not None:
                # epsilon does not affect the exact solver; reuse the first solve
                rows.append({**base, **oesp_row})
                continue
            try:
                result = _solver_row(solver, infra, requests, spec, eps, vinfra)
            except Exception as exc:  # recorded, not raised: one bad run must not abort the grid
                log.exception("solver %s failed at D_c=%s R=%s rep=%s", solver.value, D_c, R, replication)
                result = {"status": f"error: {type(exc).__name__}: {exc}"}
            if solver is Solver.OESP:
                oesp_row = result
                if result["status"] == "ok":
                    oesp_obj = result["objective"]
            rows.append({**base, **result})
    for row in rows:
        if oesp_obj is None or row.get("status") != "ok":
            row["opt_ratio"] = None
        elif oesp_obj > 0:
            row["opt_ratio"] = row["objective"] / oesp_obj
        else:
            row["opt_ratio"] = 1.0
    return rows


def _grid(spec: ExperimentSpec):
    return [(D_c, R, rep) for D_c in spec.D_c_values for R in spec.R_values for rep in range(spec.replications)]


def _run_point_args(args):
    return run_point(*args)


def run_experiment(spec: ExperimentSpec) -> list[dict]:
    """Rows in (grid point, replication, epsilon, solver) order."""
    grid = _grid(spec)
    if spec.workers > 1:
        with ProcessPoolExecutor(spec.workers) as pool:
            chunks = list(pool.map(_run_point_args, [(spec, *g) for g in grid]))
    else:
        chunks = [run_point(spec, *g) for g in grid]
    return [row for chunk in chunks for row in chunk]


def rows_to_csv(rows: list[dict], columns: list[str] = CSV_COLUMNS) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_fmt(row.get(c)) for c in columns])
    return buf.getvalue()


def write_csv(rows: list[dict], path) -> None:
    Path(path).write_text(rows_to_csv(rows))


def without_timing(spec_csv: str) -> str:
    """Drop wall-time columns so reruns can be compared byte for byte."""
    lines = list(csv.reader(io.StringIO(spec_csv)))
    keep = [i for i, name in enumerate(lines[0]) if name not in TIMING_COLUMNS]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    for line in lines:
        w.writerow([line[i] for i in keep])
    return buf.getvalue()


__all__ = [
    "CSV_COLUMNS", "ConfigError", "ExperimentSpec", "OverProvisionReport", "Solver", "Study",
    "baseline_coupling_blind", "load_config", "load_ratios", "rows_to_csv", "run_experiment",
    "run_point", "spec_from_dict", "without_timing", "write_csv",
]
