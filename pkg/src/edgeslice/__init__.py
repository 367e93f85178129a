"""Slicing of coupled networking, storage and compute resources at the network edge."""

from .dcesp import AdmmConfig, ConvergenceTrace, solve_dcesp
from .exact import BnbConfig, brute_force, build_esp, check_admission, solve_exact
from .experiment import ExperimentSpec, baseline_coupling_blind, load_config, run_experiment
from .linprog import LpProblem, LpResult, LpStatus, find_feasible, solve_lp
from .model import (
    CollateralMatrix,
    EdgeNode,
    EdgeSliceError,
    Infrastructure,
    ResourceType,
    ResourceVector,
    SliceRequest,
    SlicingSolution,
    SolverStats,
    ValidationReport,
    ValueMode,
    collateral_consumption,
    validate_solution,
)
from .scenario import ScenarioParams, generate, load_scenario, load_solution, save_scenario, save_solution
from .vesp import partition, prepare, similarity, solve_vesp, virtualize

__version__ = "0.1.0"

__all__ = [
    "AdmmConfig", "BnbConfig", "CollateralMatrix", "ConvergenceTrace", "EdgeNode", "EdgeSliceError",
    "ExperimentSpec", "Infrastructure", "LpProblem", "LpResult", "LpStatus", "ResourceType",
    "ResourceVector", "ScenarioParams", "SliceRequest", "SlicingSolution", "SolverStats",
    "ValidationReport", "ValueMode", "baseline_coupling_blind", "brute_force", "build_esp",
    "check_admission", "collateral_consumption", "find_feasible", "generate", "load_config",
    "load_scenario", "load_solution", "partition", "prepare", "run_experiment", "save_scenario",
    "save_solution", "similarity", "solve_dcesp", "solve_exact", "solve_lp", "solve_vesp",
    "validate_solution", "virtualize",
]
