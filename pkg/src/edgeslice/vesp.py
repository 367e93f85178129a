"""Approximate slicing through virtual edge nodes.

Similar nodes inside a cluster are pooled into one virtual node (summed
capacity, element-wise maximum collateral), the slicing MILP is solved on the
smaller virtual infrastructure, and each virtual allocation is split back
over its member nodes with one feasibility LP per partition.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .exact import BnbConfig, build_esp, check_admission, solve_exact
from .linprog import LpProblem, find_feasible
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
    ValueMode,
    value_of,
)

_OFF_DIAGONAL = ~np.eye(3, dtype=bool)


class DegenerateFeatureError(EdgeSliceError, ValueError):
    pass


def _features(nodes: list[EdgeNode]) -> dict[int, np.ndarray]:
    """Capacity and off-diagonal collateral entries, centred on the cluster mean.

    Each component is divided by its cluster-wide maximum so MB and GIPS
    magnitudes do not dominate.
    """
    raw = np.array([np.concatenate([n.capacity.as_array(), n.collateral.matrix[_OFF_DIAGONAL]])
                    for n in nodes])
    scale = raw.max(axis=0)
    scale[scale == 0] = 1.0
    centred = (raw - raw.mean(axis=0)) / scale
    centred[np.abs(centred) < 1e-12] = 0.0
    return {n.id: row for n, row in zip(nodes, centred)}


def cosine_dissimilarity(a: np.ndarray, b: np.ndarray) -> float:
    """``1 - cos(a, b)``; two all-zero vectors count as identical."""
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 and nb == 0:
        return 0.0
    if na == 0 or nb == 0:
        raise DegenerateFeatureError("cannot compare an all-zero feature vector with a non-zero one")
    return float(min(2.0, max(0.0, 1.0 - a @ b / (na * nb))))


def _dissimilar(a: np.ndarray, b: np.ndarray) -> float:
    try:
        return cosine_dissimilarity(a, b)
    except DegenerateFeatureError:
        # a node sitting exactly on the cluster mean has no direction
        return 1.0


def similarity(a: EdgeNode, b: EdgeNode, cluster: list[EdgeNode] | None = None) -> float:
    """Dissimilarity score in [0, 2]; 0 means identical features.

    Features are centred and scaled over ``cluster`` (defaults to the pair
    itself, in which case any two distinct nodes point in opposite directions).
    """
    feats = _features(cluster if cluster is not None else [a, b])
    return cosine_dissimilarity(feats[a.id], feats[b.id])


@dataclass(frozen=True)
class Partitioning:
    groups: tuple[tuple[tuple[int, ...], ...], ...]  # per cluster, per partition: node ids

    def G(self, k: int) -> int:
        return len(self.groups[k])

    def total(self) -> int:
        return sum(len(g) for g in self.groups)


def partition_cluster(nodes: list[EdgeNode], eps: float) -> list[tuple[int, ...]]:
    """Leader clustering: each node joins the first partition whose leader is eps-similar."""
    if eps < 0:
        raise ValueError("eps must be >= 0")
    nodes = sorted(nodes, key=lambda n: n.id)
    feats = _features(nodes)
    groups: list[list[int]] = []
    for node in nodes:
        for g in groups:
            if _dissimilar(feats[g[0]], feats[node.id]) <= eps:
                g.append(node.id)
                break
        else:
            groups.append([node.id])
    return [tuple(g) for g in groups]


def partition(infra: Infrastructure, eps: float) -> Partitioning:
    return Partitioning(tuple(tuple(partition_cluster(infra.cluster_nodes(k), eps))
                              for k in range(infra.K)))


def virtualize(members: tuple[int, ...], nodes: dict[int, EdgeNode]) -> EdgeNode:
    """Virtual node for a partition; it takes the id of its lowest-id member."""
    if not members:
        raise EdgeSliceError("cannot virtualize an empty partition")
    group = [nodes[d] for d in sorted(members)]
    if len(group) == 1:
        return group[0]
    capacity = ResourceVector.from_array(sum(n.capacity.as_array() for n in group))
    collateral = CollateralMatrix(np.max([n.collateral.matrix for n in group], axis=0))
    return EdgeNode(group[0].id, group[0].cluster_id, capacity, collateral)


@dataclass
class VirtualInfrastructure:
    """Partitioning and virtual nodes for one physical infrastructure and eps.

    Build once per infrastructure and reuse across request batches.
    """
    physical: Infrastructure
    eps: float
    partitioning: Partitioning
    virtual: Infrastructure
    members: dict[int, tuple[int, ...]]  # virtual node id -> physical ids


def prepare(infra: Infrastructure, eps: float) -> VirtualInfrastructure:
    parts = partition(infra, eps)
    vnodes = []
    members = {}
    for groups in parts.groups:
        for g in groups:
            v = virtualize(g, infra.nodes)
            vnodes.append(v)
            members[v.id] = tuple(sorted(g))
    clusters = [[min(g) for g in groups] for groups in parts.groups]
    return VirtualInfrastructure(infra, eps, parts, Infrastructure(clusters, vnodes), members)


def split_virtual_allocation(nodes: list[EdgeNode], amounts: dict[int, tuple[ResourceType, float]],
                             stats: SolverStats) -> dict[tuple[int, int], float] | None:
    """Spread each request's virtual amount over the member nodes.

    Variables are fractions of each request's amount; capacity rows are
    divided by the node capacity. Returns None when no split fits.
    """
    rids = [r for r, (_, a) in sorted(amounts.items()) if a > 0]
    if not rids:
        return {}
    if len(nodes) == 1:
        return {(r, nodes[0].id): amounts[r][1] for r in rids}
    nr, nd = len(rids), len(nodes)
    n = nr * nd

    def col(i, j):
        return i * nd + j

    A_eq = np.zeros((nr, n))
    for i in range(nr):
        A_eq[i, i * nd:(i + 1) * nd] = 1.0
    A_ub = np.zeros((3 * nd, n))
    b_ub = np.zeros(3 * nd)
    for j, node in enumerate(nodes):
        for z in ResourceType:
            row = 3 * j + int(z)
            cap = node.capacity[z]
            scale = cap if cap > 0 else 1.0
            b_ub[row] = 1.0 if cap > 0 else 0.0
            for i, r in enumerate(rids):
                rtype, amount = amounts[r]
                A_ub[row, col(i, j)] = node.collateral.coeff(rtype, z) * amount / scale
    res = find_feasible(LpProblem(np.zeros(n), A_eq, np.ones(nr), A_ub, b_ub))
    stats.lp_pivots += res.pivots
    if not res.ok:
        return None
    return {(r, node.id): float(res.x[col(i, j)] * amounts[r][1])
            for i, r in enumerate(rids) for j, node in enumerate(nodes)}


def solve_vesp(infra: Infrastructure, requests: list[SliceRequest], eps: float | VirtualInfrastructure,
               value_mode: ValueMode = ValueMode.PROFIT, cfg: BnbConfig | None = None) -> SlicingSolution:
    """Solve on virtual nodes, then disaggregate per partition.

    When a partition's split is infeasible, the lowest-value request on that
    virtual node is dropped and the virtual allocation of the remaining
    requests is recomputed; each such event increments ``stats.repairs``.
    """
    t0 = time.perf_counter()
    vinfra = eps if isinstance(eps, VirtualInfrastructure) else prepare(infra, eps)
    if vinfra.physical is not infra and vinfra.physical != infra:
        raise EdgeSliceError("prepared virtualization belongs to a different infrastructure")
    by_id = {r.id: r for r in requests}
    stats = SolverStats()
    vinst = build_esp(vinfra.virtual, requests, value_mode)
    vsol = solve_exact(vinst, cfg)
    stats.absorb(vsol.stats)
    admitted = set(vsol.admitted())
    virtual_alloc = vsol.allocation

    while True:
        allocation: dict[tuple[int, int], float] = {}
        failed = None
        for v in vinfra.virtual.node_ids():
            amounts = {r: (by_id[r].rtype, a) for (r, d), a in virtual_alloc.items() if d == v and a > 0}
            split = split_virtual_allocation([infra.nodes[d] for d in vinfra.members[v]], amounts, stats)
            if split is None:
                failed = amounts
                break
            allocation.update(split)
        if failed is None:
            break
        victim = min(failed, key=lambda r: (by_id[r].effective_value(value_mode), -r))
        admitted.discard(victim)
        stats.repairs += 1
        # fewer admitted requests on the same virtual nodes always fit
        x = check_admission(vinst, admitted, stats)
        virtual_alloc = {(r, d): float(x[col] * vinst.col_demand[col])
                         for (r, d), col in vinst.sigma_cols.items() if r in admitted}

    admission = {r.id: int(r.id in admitted) for r in requests}
    stats.wall_time = time.perf_counter() - t0
    return SlicingSolution(admission, allocation, value_of(requests, admission, value_mode), stats)
