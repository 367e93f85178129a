"""Distributed slicing by consensus ADMM over per-cluster admission copies.

Each cluster keeps its own admission vector and solves a local problem that
only sees its own nodes, the dual variables and, per request, how many other
clusters currently admit it. Clusters update in ascending order
(Gauss-Seidel), then the duals, then the penalty. A request is finally
admitted only if every cluster admits it.
"""

from __future__ import annotations

import csv
import io
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .exact import BnbConfig, build_esp, solve_exact
from .model import (
    EdgeNode,
    Infrastructure,
    SliceRequest,
    SlicingSolution,
    SolverStats,
    ValueMode,
    value_of,
)


@dataclass
class AdmmConfig:
    # None: scale to the request values (penalty_fraction * mean value)
    initial_penalty: float | None = None
    penalty_fraction: float = 0.1
    max_iterations: int = 500
    consensus_tol: float = 1e-6
    mu: float = 10.0  # residual ratio that triggers a penalty change
    tau: float = 2.0  # penalty change factor
    # iterations without a new best primal residual before the penalty is forced up
    stall_window: int | None = 10
    bnb: BnbConfig | None = None


@dataclass
class AdmmState:
    """Cluster copies ``y[k, r]``, allocations and duals ``lam[r, k, m]``."""
    y: np.ndarray
    lam: np.ndarray
    penalty: float
    allocations: list[dict[tuple[int, int], float]]
    iteration: int = 0
    primal_residual: float = math.inf
    dual_residual: float = 0.0
    dual_history: list[float] = field(default_factory=list)

    @classmethod
    def initial(cls, K: int, R: int, penalty: float) -> "AdmmState":
        return cls(np.zeros((K, R), dtype=int), np.zeros((R, K, K)), penalty, [{} for _ in range(K)])


@dataclass
class TraceRow:
    iteration: int
    objective: float
    primal_residual: float
    dual_residual: float
    penalty: float


@dataclass
class ConvergenceTrace:
    rows: list[TraceRow] = field(default_factory=list)
    converged: bool = False

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["iteration", "objective", "r_p", "r_d", "penalty"])
        for row in self.rows:
            w.writerow([row.iteration, repr(row.objective), repr(row.primal_residual),
                        repr(row.dual_residual), repr(row.penalty)])
        return buf.getvalue()


def adjusted_value(value: float, r: int, k: int, y: np.ndarray, lam: np.ndarray, penalty: float) -> float:
    """Value of request position ``r`` as seen by cluster ``k``.

    ``value - sum_m (lam[r,k,m] - lam[r,m,k]) + penalty * phi`` where ``phi``
    counts the other clusters that currently admit the request.
    """
    K = y.shape[0]
    others = [m for m in range(K) if m != k]
    dual = sum(lam[r, k, m] - lam[r, m, k] for m in others)
    phi = sum(int(y[m, r]) for m in others)
    return value - dual + penalty * phi


def solve_cluster_subproblem(nodes: list[EdgeNode], local_demand: list[tuple[SliceRequest, float]],
                             adjusted: np.ndarray, quad_coeff: float, cfg: BnbConfig | None = None
                             ) -> tuple[np.ndarray, dict[tuple[int, int], float], SolverStats]:
    """Local admission maximizing ``sum (adjusted - quad_coeff) * y`` on one cluster.

    ``local_demand`` pairs every request with its demand in this cluster; the
    function never sees other clusters. Requests with no local demand are
    admitted whenever their effective value is positive.
    """
    eff = np.asarray(adjusted, dtype=float) - quad_coeff
    R = len(local_demand)
    y = np.zeros(R, dtype=int)
    stats = SolverStats()
    candidates = []
    for i, (req, tau) in enumerate(local_demand):
        if eff[i] <= 0:
            continue
        if tau <= 0:
            y[i] = 1
        else:
            candidates.append(SliceRequest(i, req.rtype, float(eff[i]), (tau,)))
    if not candidates:
        return y, {}, stats
    local = Infrastructure([[n.id for n in nodes]],
                           [EdgeNode(n.id, 0, n.capacity, n.collateral) for n in nodes])
    sol = solve_exact(build_esp(local, candidates, ValueMode.PROFIT), cfg)
    stats.absorb(sol.stats)
    for i in sol.admitted():
        y[i] = 1
    alloc = {(local_demand[i][0].id, d): a for (i, d), a in sol.allocation.items()}
    return y, alloc, stats


def update_duals(state: AdmmState) -> np.ndarray:
    """``lam[r,k,m] += penalty * (y[k,r] - y[m,r])`` for every ordered pair."""
    y = state.y.astype(float)
    diff = y.T[:, :, None] - y.T[:, None, :]  # [r, k, m] = y[k,r] - y[m,r]
    return state.lam + state.penalty * diff


def primal_residual(y: np.ndarray) -> float:
    yf = y.astype(float)
    diff = yf[:, None, :] - yf[None, :, :]
    return float(math.sqrt(np.triu(np.square(diff).sum(axis=2), 1).sum()))


def update_penalty(penalty: float, r_p: float, r_d: float, mu: float = 10.0, tau: float = 2.0) -> float:
    """Residual balancing: grow when the primal residual dominates, shrink in the opposite case."""
    if r_p > mu * r_d:
        return penalty * tau
    if r_d > mu * r_p:
        return penalty / tau
    return penalty


def _unanimous(requests, state: AdmmState, value_mode):
    admitted = state.y.all(axis=0)
    admission = {r.id: int(admitted[i]) for i, r in enumerate(requests)}
    allocation = {}
    for alloc in state.allocations:
        for (rid, d), a in alloc.items():
            if admission[rid]:
                allocation[(rid, d)] = a
    return admission, allocation, value_of(requests, admission, value_mode)


def solve_dcesp(infra: Infrastructure, requests: list[SliceRequest],
                value_mode: ValueMode = ValueMode.PROFIT, cfg: AdmmConfig | None = None
                ) -> tuple[SlicingSolution, ConvergenceTrace]:
    cfg = cfg or AdmmConfig()
    t0 = time.perf_counter()
    K, R = infra.K, len(requests)
    values = np.array([r.effective_value(value_mode) for r in requests], dtype=float)
    penalty = cfg.initial_penalty
    if penalty is None:
        penalty = cfg.penalty_fraction * float(values.mean()) if R else 1.0
    state = AdmmState.initial(K, R, penalty)
    stats = SolverStats()
    trace = ConvergenceTrace()
    best = (-1.0, None, None)
    local = [[(req, req.demand[k]) for req in requests] for k in range(K)]
    cluster_nodes = [infra.cluster_nodes(k) for k in range(K)]

    best_rp, since_best = math.inf, 0
    while state.iteration < cfg.max_iterations:
        previous = state.y.copy()
        # a single cluster has no consensus terms in its augmented Lagrangian
        quad = 2.0 * state.penalty if K > 1 else 0.0
        for k in range(K):
            adj = np.array([adjusted_value(values[i], i, k, state.y, state.lam, state.penalty)
                            for i in range(R)])
            y_k, alloc, sub_stats = solve_cluster_subproblem(cluster_nodes[k], local[k], adj, quad, cfg.bnb)
            stats.absorb(sub_stats)
            state.y[k] = y_k
            state.allocations[k] = alloc
        state.iteration += 1
        state.lam = update_duals(state)
        r_p = primal_residual(state.y)
        r_d = state.penalty * float(np.linalg.norm((state.y - previous).astype(float)))
        state.primal_residual, state.dual_residual = r_p, r_d
        state.dual_history.append(r_d)

        admission, allocation, objective = _unanimous(requests, state, value_mode)
        trace.rows.append(TraceRow(state.iteration, objective, r_p, r_d, state.penalty))
        if objective > best[0]:
            best = (objective, admission, allocation)
        if r_p <= cfg.consensus_tol:
            trace.converged = True
            break
        state.penalty = update_penalty(state.penalty, r_p, r_d, cfg.mu, cfg.tau)
        if r_p < best_rp - cfg.consensus_tol:
            best_rp, since_best = r_p, 0
        else:
            since_best += 1
        if cfg.stall_window is not None and since_best >= cfg.stall_window:
            # binary copies can cycle inside the balancing band; escalate to break it
            state.penalty *= cfg.tau
            since_best = 0

    if trace.converged:
        admission, allocation, objective = _unanimous(requests, state, value_mode)
    else:
        objective, admission, allocation = best
    stats.admm_iterations = state.iteration
    stats.converged = trace.converged
    stats.wall_time = time.perf_counter() - t0
    if admission is None:
        admission, allocation = {r.id: 0 for r in requests}, {}
    return SlicingSolution(admission, allocation, objective, stats), trace
