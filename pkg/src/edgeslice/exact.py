"""Exact edge slicing: MILP assembly, branch-and-bound, brute-force oracle.

LP columns are ``y_r`` (admission, relaxed to [0, 1]) followed by one
column per (request, node) pair where the node's cluster has positive
demand for that request. Allocation columns are scaled so that the variable
is the *fraction* of ``tau_{r,k}`` placed on node ``d``; each demand row then
reads ``sum_d x_{r,d} - y_r = 0`` and each capacity row is divided by the
node capacity. Both keep the tableau well conditioned when MB and RB
magnitudes are mixed.
"""

from __future__ import annotations

import heapq
import itertools
import time
from dataclasses import dataclass, field

import numpy as np

from .linprog import LpProblem, LpResult, LpStatus, find_feasible, solve_lp
from .model import (
    EdgeSliceError,
    Infrastructure,
    ModelError,
    ResourceType,
    SliceRequest,
    SlicingSolution,
    SolverStats,
    ValueMode,
)

INT_TOL = 1e-6
BRUTE_FORCE_MAX = 15


class SizeError(EdgeSliceError, ValueError):
    pass


@dataclass
class BnbConfig:
    int_tol: float = INT_TOL
    max_nodes: int | None = None


@dataclass
class EspInstance:
    infra: Infrastructure
    requests: list[SliceRequest]
    value_mode: ValueMode
    values: np.ndarray
    y_cols: dict[int, int]
    sigma_cols: dict[tuple[int, int], int]
    col_demand: np.ndarray  # tau_{r,k} for allocation columns, 1 for y columns
    col_request: np.ndarray  # request position for every column
    problem: LpProblem
    eq_rows: list[tuple[int, int]] = field(default_factory=list)
    ub_rows: list[tuple[int, ResourceType]] = field(default_factory=list)

    @property
    def R(self) -> int:
        return len(self.requests)

    @property
    def n_cols(self) -> int:
        return self.problem.n


def build_esp(infra: Infrastructure, requests: list[SliceRequest],
              value_mode: ValueMode = ValueMode.PROFIT) -> EspInstance:
    """Assemble the LP relaxation of the edge slicing MILP."""
    requests = list(requests)
    for req in requests:
        if len(req.demand) != infra.K:
            raise ModelError(
                f"request {req.id}: demand has {len(req.demand)} entries, infrastructure has {infra.K} clusters")
    if len({r.id for r in requests}) != len(requests):
        raise ModelError("duplicate request ids")
    R = len(requests)
    y_cols = {req.id: i for i, req in enumerate(requests)}
    sigma_cols: dict[tuple[int, int], int] = {}
    col_demand = [1.0] * R
    col_request = list(range(R))
    eq_rows = []
    for i, req in enumerate(requests):
        for k, tau in enumerate(req.demand):
            if tau > 0:
                eq_rows.append((req.id, k))
                for d in infra.clusters[k]:
                    sigma_cols[(req.id, d)] = R + len(sigma_cols)
                    col_demand.append(tau)
                    col_request.append(i)
    n = R + len(sigma_cols)
    col_demand = np.array(col_demand)
    col_request = np.array(col_request, dtype=int)

    A_eq = np.zeros((len(eq_rows), n))
    for row, (rid, k) in enumerate(eq_rows):
        A_eq[row, y_cols[rid]] = -1.0
        for d in infra.clusters[k]:
            A_eq[row, sigma_cols[(rid, d)]] = 1.0

    by_node: dict[int, list[tuple[int, SliceRequest]]] = {d: [] for d in infra.nodes}
    for (rid, d), col in sigma_cols.items():
        by_node[d].append((col, requests[y_cols[rid]]))
    ub_rows = []
    A_ub = np.zeros((3 * len(infra.nodes), n))
    b_ub = np.ones(3 * len(infra.nodes))
    row = 0
    for d in infra.node_ids():
        node = infra.nodes[d]
        for z in ResourceType:
            cap = node.capacity[z]
            scale = cap if cap > 0 else 1.0
            b_ub[row] = 1.0 if cap > 0 else 0.0
            for col, req in by_node[d]:
                A_ub[row, col] = node.collateral.coeff(req.rtype, z) * col_demand[col] / scale
            ub_rows.append((d, z))
            row += 1

    values = np.array([r.effective_value(value_mode) for r in requests], dtype=float)
    c = np.zeros(n)
    c[:R] = values
    upper = np.full(n, np.inf)
    upper[:R] = 1.0
    problem = LpProblem(c, A_eq, np.zeros(len(eq_rows)), A_ub, b_ub, upper)
    return EspInstance(infra, requests, value_mode, values, y_cols, sigma_cols,
                       col_demand, col_request, problem, eq_rows, ub_rows)


def _restricted(inst: EspInstance, fixed: dict[int, int]):
    """LP over the columns left free once the ``y`` positions in ``fixed`` are set.

    Returns ``(problem, free_columns)`` or ``None`` if the fixing is trivially
    infeasible. Allocation columns of requests fixed to 0 are dropped, and
    rows left without coefficients are removed.
    """
    p = inst.problem
    R = inst.R
    zero = np.array([fixed.get(i) == 0 for i in range(R)], dtype=bool)
    one_idx = [i for i, v in fixed.items() if v == 1]
    free = np.ones(p.n, dtype=bool)
    free[list(fixed)] = False
    free[R:] = ~zero[inst.col_request[R:]]
    cols = np.flatnonzero(free)

    b_eq = p.b_eq.copy()
    b_ub = p.b_ub.copy()
    if one_idx:
        b_eq -= p.A_eq[:, one_idx].sum(axis=1)
        b_ub -= p.A_ub[:, one_idx].sum(axis=1)
    A_eq = p.A_eq[:, cols]
    A_ub = p.A_ub[:, cols]
    eq_keep = np.any(A_eq != 0, axis=1)
    ub_keep = np.any(A_ub != 0, axis=1)
    if np.any(np.abs(b_eq[~eq_keep]) > 0) or np.any(b_ub[~ub_keep] < 0):
        return None
    sub = LpProblem(p.objective[cols], A_eq[eq_keep], b_eq[eq_keep],
                    A_ub[ub_keep], b_ub[ub_keep], p.upper[cols])
    return sub, cols


def _lift(inst: EspInstance, fixed: dict[int, int], cols: np.ndarray, x_sub: np.ndarray) -> np.ndarray:
    x = np.zeros(inst.n_cols)
    for i, v in fixed.items():
        x[i] = v
    x[cols] = x_sub
    return x


def _to_solution(inst: EspInstance, x: np.ndarray, stats: SolverStats) -> SlicingSolution:
    R = inst.R
    admission = {req.id: int(round(x[i])) for i, req in enumerate(inst.requests)}
    allocation = {}
    for (rid, d), col in inst.sigma_cols.items():
        if admission[rid]:
            allocation[(rid, d)] = float(x[col] * inst.col_demand[col])
    objective = float(sum(inst.values[i] for i in range(R) if admission[inst.requests[i].id]))
    return SlicingSolution(admission, allocation, objective, stats)


def check_admission(inst: EspInstance, admitted: set[int], stats: SolverStats | None = None
                    ) -> np.ndarray | None:
    """Full column vector for a fixed admission set, or None if it does not fit."""
    fixed = {i: int(req.id in admitted) for i, req in enumerate(inst.requests)}
    restricted = _restricted(inst, fixed)
    if restricted is None:
        return None
    sub, cols = restricted
    res = find_feasible(sub)
    if stats is not None:
        stats.lp_pivots += res.pivots
    if not res.ok:
        return None
    return _lift(inst, fixed, cols, res.x)


def _greedy(inst: EspInstance, stats: SolverStats) -> tuple[float, np.ndarray]:
    """Admit requests by decreasing value density while they still fit."""
    order = sorted(range(inst.R),
                   key=lambda i: (-inst.values[i] / sum(inst.requests[i].demand), inst.requests[i].id))
    admitted: set[int] = set()
    best_x = check_admission(inst, admitted, stats)
    for i in order:
        trial = admitted | {inst.requests[i].id}
        x = check_admission(inst, trial, stats)
        if x is not None:
            admitted, best_x = trial, x
    return float(best_x[:inst.R] @ inst.values), best_x


def _solve_node(inst: EspInstance, fixed: dict[int, int], stats: SolverStats):
    restricted = _restricted(inst, fixed)
    if restricted is None:
        return None
    sub, cols = restricted
    res: LpResult = solve_lp(sub)
    stats.lp_pivots += res.pivots
    stats.bnb_nodes += 1
    if res.status is not LpStatus.OPTIMAL:
        return None
    x = _lift(inst, fixed, cols, res.x)
    return float(inst.values @ x[:inst.R]), x


def solve_exact(inst: EspInstance, cfg: BnbConfig | None = None) -> SlicingSolution:
    """Optimal admission and allocation by best-bound branch-and-bound.

    Branches on the most fractional admission variable (ties: larger value,
    then smaller request id). The incumbent is seeded greedily.
    """
    cfg = cfg or BnbConfig()
    t0 = time.perf_counter()
    stats = SolverStats()
    R = inst.R
    if R == 0:
        stats.wall_time = time.perf_counter() - t0
        return SlicingSolution({}, {}, 0.0, stats)

    best_obj, best_x = _greedy(inst, stats)
    prune_tol = 1e-9 * max(1.0, float(inst.values.sum()))

    def fractional(x):
        frac = [(abs(x[i] - 0.5), -inst.values[i], inst.requests[i].id, i)
                for i in range(R) if min(x[i], 1 - x[i]) > cfg.int_tol]
        return min(frac)[3] if frac else None

    root = _solve_node(inst, {}, stats)
    heap = []
    counter = itertools.count()
    if root is not None and root[0] > best_obj + prune_tol:
        j = fractional(root[1])
        if j is None:
            best_obj, best_x = root
        else:
            heapq.heappush(heap, (-root[0], next(counter), {}, root[1], j))

    while heap:
        if cfg.max_nodes is not None and stats.bnb_nodes >= cfg.max_nodes:
            break
        neg_bound, _, fixed, _, j = heapq.heappop(heap)
        if -neg_bound <= best_obj + prune_tol:
            break
        for v in (1, 0):
            child = dict(fixed)
            child[j] = v
            out = _solve_node(inst, child, stats)
            if out is None:
                continue
            bound, x = out
            if bound <= best_obj + prune_tol:
                continue
            jj = fractional(x)
            if jj is None:
                best_obj, best_x = bound, x
            else:
                heapq.heappush(heap, (-bound, next(counter), child, x, jj))

    admitted = {inst.requests[i].id for i in range(R) if best_x[i] > 0.5}
    # re-solve with y fixed exactly so demand rows hold without rounding slack
    x = check_admission(inst, admitted, stats)
    if x is None:  # pragma: no cover - the incumbent is feasible by construction
        raise EdgeSliceError("incumbent admission failed to re-verify")
    stats.wall_time = time.perf_counter() - t0
    return _to_solution(inst, x, stats)


def brute_force(inst: EspInstance) -> SlicingSolution:
    """Exhaustive search over all admission vectors (test oracle).

    Subsets are visited in order of decreasing value; the first one that
    passes an LP feasibility check is optimal.
    """
    R = inst.R
    if R > BRUTE_FORCE_MAX:
        raise SizeError(f"brute force supports at most {BRUTE_FORCE_MAX} requests, got {R}")
    t0 = time.perf_counter()
    stats = SolverStats()
    subsets = []
    for mask in range(1 << R):
        members = [i for i in range(R) if mask >> i & 1]
        subsets.append((-float(sum(inst.values[i] for i in members)), mask, members))
    subsets.sort(key=lambda s: (s[0], s[1]))
    infeasible: list[int] = []
    for _, mask, members in subsets:
        if any(bad & mask == bad for bad in infeasible):
            continue
        x = check_admission(inst, {inst.requests[i].id for i in members}, stats)
        if x is not None:
            stats.wall_time = time.perf_counter() - t0
            return _to_solution(inst, x, stats)
        infeasible.append(mask)
    raise EdgeSliceError("empty admission reported infeasible")  # pragma: no cover
