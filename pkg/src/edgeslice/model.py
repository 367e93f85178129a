"""Domain types for edge infrastructures, slice requests and slicing solutions.

All types are immutable after construction. Resource vectors and collateral
matrices always use the canonical type ordering (N, S, C).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np

TOL_FEAS = 1e-6


class EdgeSliceError(Exception):
    """Base class for errors raised by this package."""


class ModelError(EdgeSliceError, ValueError):
    """A domain object violates its invariants."""


class UnknownIdError(EdgeSliceError, KeyError):
    """A solution references a request or node that does not exist."""


class ResourceType(enum.IntEnum):
    N = 0  # networking, resource blocks
    S = 1  # storage, megabytes
    C = 2  # compute, GIPS

    @classmethod
    def parse(cls, text: str) -> "ResourceType":
        try:
            return cls[text.strip().upper()]
        except KeyError:
            raise ModelError(f"unknown resource type {text!r}") from None


class ValueMode(enum.Enum):
    PROFIT = "profit"
    COUNT = "count"


@dataclass(frozen=True)
class ResourceVector:
    n: float = 0.0
    s: float = 0.0
    c: float = 0.0

    def __post_init__(self):
        for name in ("n", "s", "c"):
            v = getattr(self, name)
            if not math.isfinite(v) or v < 0:
                raise ModelError(f"resource component {name}={v!r} must be finite and >= 0")

    @classmethod
    def from_array(cls, a) -> "ResourceVector":
        return cls(float(a[0]), float(a[1]), float(a[2]))

    def as_array(self) -> np.ndarray:
        return np.array([self.n, self.s, self.c], dtype=float)

    def __getitem__(self, z: ResourceType) -> float:
        return (self.n, self.s, self.c)[int(z)]

    def __add__(self, other: "ResourceVector") -> "ResourceVector":
        return ResourceVector.from_array(self.as_array() + other.as_array())


class CollateralMatrix:
    """Linear coupling coefficients between resource types at one node.

    Stored in the layout ``matrix[z, t]`` = units of type ``z`` consumed per
    unit of type ``t`` allocated, so that ``matrix @ x`` maps a per-type
    allocation vector to the per-type consumption. Use :meth:`coeff` rather
    than raw indices.
    """

    __slots__ = ("_m",)

    def __init__(self, matrix):
        m = np.array(matrix, dtype=float)
        if m.shape != (3, 3):
            raise ModelError(f"collateral matrix must be 3x3, got shape {m.shape}")
        if not np.all(np.isfinite(m)):
            raise ModelError("collateral matrix entries must be finite")
        if np.any(m < 0):
            raise ModelError("collateral matrix entries must be >= 0")
        if not np.all(np.diag(m) == 1.0):
            raise ModelError("collateral matrix diagonal must be exactly 1")
        m.setflags(write=False)
        self._m = m

    @classmethod
    def identity(cls) -> "CollateralMatrix":
        return cls(np.eye(3))

    @classmethod
    def from_coefficients(cls, coeffs: Mapping[tuple[ResourceType, ResourceType], float]):
        """Build from ``{(src, dst): A^{src->dst}}``; missing entries are 0."""
        m = np.eye(3)
        for (src, dst), v in coeffs.items():
            if src != dst:
                m[int(dst), int(src)] = v
        return cls(m)

    @property
    def matrix(self) -> np.ndarray:
        return self._m

    def coeff(self, src: ResourceType, dst: ResourceType) -> float:
        """Units of ``dst`` consumed per unit of ``src`` allocated."""
        return float(self._m[int(dst), int(src)])

    def off_diagonal(self) -> np.ndarray:
        return self._m[~np.eye(3, dtype=bool)]

    def without_coupling(self) -> "CollateralMatrix":
        return CollateralMatrix.identity()

    def __eq__(self, other):
        return isinstance(other, CollateralMatrix) and np.array_equal(self._m, other._m)

    def __hash__(self):
        return hash(self._m.tobytes())

    def __repr__(self):
        return f"CollateralMatrix({self._m.tolist()!r})"


@dataclass(frozen=True)
class EdgeNode:
    id: int
    cluster_id: int
    capacity: ResourceVector
    collateral: CollateralMatrix = field(default_factory=CollateralMatrix.identity)


class Infrastructure:
    """Edge nodes grouped into an ordered list of clusters."""

    def __init__(self, clusters: Iterable[Iterable[int]], nodes: Iterable[EdgeNode]):
        self.clusters: tuple[tuple[int, ...], ...] = tuple(tuple(c) for c in clusters)
        node_list = list(nodes)
        self.nodes: dict[int, EdgeNode] = {}
        for node in node_list:
            if node.id in self.nodes:
                raise ModelError(f"duplicate node id {node.id}")
            self.nodes[node.id] = node
        if not self.clusters:
            raise ModelError("an infrastructure needs at least one cluster")
        seen: set[int] = set()
        for k, members in enumerate(self.clusters):
            if not members:
                raise ModelError(f"cluster {k} is empty")
            for d in members:
                if d not in self.nodes:
                    raise ModelError(f"cluster {k} references unknown node {d}")
                if d in seen:
                    raise ModelError(f"node {d} appears in more than one cluster")
                if self.nodes[d].cluster_id != k:
                    raise ModelError(
                        f"node {d} has cluster_id {self.nodes[d].cluster_id} but is listed in cluster {k}")
                seen.add(d)
        if seen != set(self.nodes):
            raise ModelError(f"nodes {sorted(set(self.nodes) - seen)} belong to no cluster")

    @property
    def K(self) -> int:
        return len(self.clusters)

    def cluster_nodes(self, k: int) -> list[EdgeNode]:
        return [self.nodes[d] for d in self.clusters[k]]

    def node_ids(self) -> list[int]:
        return [d for members in self.clusters for d in members]

    def __eq__(self, other):
        return (isinstance(other, Infrastructure)
                and self.clusters == other.clusters and self.nodes == other.nodes)

    def __repr__(self):
        return f"Infrastructure(K={self.K}, nodes={len(self.nodes)})"


@dataclass(frozen=True)
class SliceRequest:
    id: int
    rtype: ResourceType
    value: float
    demand: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "demand", tuple(float(x) for x in self.demand))
        if not (math.isfinite(self.value) and self.value > 0):
            raise ModelError(f"request {self.id}: value must be > 0, got {self.value}")
        if any(not math.isfinite(x) or x < 0 for x in self.demand):
            raise ModelError(f"request {self.id}: demands must be finite and >= 0")
        if not sum(self.demand) > 0:
            raise ModelError(f"request {self.id}: total demand must be positive")

    def effective_value(self, mode: ValueMode) -> float:
        return 1.0 if mode is ValueMode.COUNT else self.value


@dataclass
class SolverStats:
    lp_pivots: int = 0
    bnb_nodes: int = 0
    admm_iterations: int = 0
    wall_time: float = 0.0
    repairs: int = 0
    converged: bool | None = None

    @property
    def function_evaluations(self) -> int:
        return self.lp_pivots + self.bnb_nodes + self.admm_iterations

    def absorb(self, other: "SolverStats") -> None:
        """Add another solve's counters into this one (wall time excluded)."""
        self.lp_pivots += other.lp_pivots
        self.bnb_nodes += other.bnb_nodes
        self.admm_iterations += other.admm_iterations
        self.repairs += other.repairs

    def to_dict(self) -> dict:
        return {
            "lp_pivots": self.lp_pivots,
            "bnb_nodes": self.bnb_nodes,
            "admm_iterations": self.admm_iterations,
            "function_evaluations": self.function_evaluations,
            "wall_time": self.wall_time,
            "repairs": self.repairs,
            "converged": self.converged,
        }


@dataclass
class SlicingSolution:
    admission: dict[int, int]
    allocation: dict[tuple[int, int], float]
    objective: float
    stats: SolverStats = field(default_factory=SolverStats)

    def admitted(self) -> list[int]:
        return sorted(r for r, y in self.admission.items() if y)

    @classmethod
    def empty(cls, requests: Iterable[SliceRequest]) -> "SlicingSolution":
        return cls({r.id: 0 for r in requests}, {}, 0.0)


def collateral_consumption(
        node: EdgeNode,
        primary_allocations: Mapping[int, tuple[ResourceType, float]]) -> ResourceVector:
    """Per-type resources consumed at ``node`` by the given primary allocations.

    ``primary_allocations`` maps request id to ``(rtype, amount)``; the amount
    is in units of ``rtype`` and the unit diagonal of the collateral matrix
    accounts for the primary resource itself.
    """
    by_type = np.zeros(3)
    for rtype, amount in primary_allocations.values():
        by_type[int(rtype)] += amount
    return ResourceVector.from_array(node.collateral.matrix @ by_type)


@dataclass
class ValidationReport:
    demand_residuals: dict[tuple[int, int], float]
    violations: dict[tuple[int, ResourceType], float]
    feasible: bool

    @property
    def max_residual(self) -> float:
        return max(self.demand_residuals.values(), default=0.0)

    @property
    def max_violation(self) -> float:
        return max(self.violations.values(), default=0.0)

    def violating(self, tol: float = TOL_FEAS) -> list[tuple[int, ResourceType, float]]:
        return [(d, z, v) for (d, z), v in sorted(self.violations.items()) if v > tol]


def node_consumption(infra: Infrastructure, requests: Iterable[SliceRequest],
                     sol: SlicingSolution) -> dict[int, ResourceVector]:
    by_id = {r.id: r for r in requests}
    per_node: dict[int, dict[int, tuple[ResourceType, float]]] = {d: {} for d in infra.nodes}
    for (r, d), amount in sol.allocation.items():
        if r not in by_id:
            raise UnknownIdError(f"solution references unknown request {r}")
        if d not in infra.nodes:
            raise UnknownIdError(f"solution references unknown node {d}")
        per_node[d][r] = (by_id[r].rtype, amount)
    return {d: collateral_consumption(infra.nodes[d], allocs) for d, allocs in per_node.items()}


def validate_solution(infra: Infrastructure, requests: list[SliceRequest],
                      sol: SlicingSolution, tol: float = TOL_FEAS) -> ValidationReport:
    """Check demand satisfaction and per-node capacity for ``sol``.

    Residuals are reported for every (request, cluster) pair, so allocations
    belonging to rejected requests or to clusters without demand show up as
    nonzero residuals.
    """
    ids = {r.id for r in requests}
    for r in sol.admission:
        if r not in ids:
            raise UnknownIdError(f"solution references unknown request {r}")
    consumption = node_consumption(infra, requests, sol)

    placed: dict[tuple[int, int], float] = {}
    for (r, d), amount in sol.allocation.items():
        key = (r, infra.nodes[d].cluster_id)
        placed[key] = placed.get(key, 0.0) + amount

    residuals = {}
    for req in requests:
        if len(req.demand) != infra.K:
            raise ModelError(f"request {req.id}: demand has {len(req.demand)} entries, expected {infra.K}")
        y = sol.admission.get(req.id, 0)
        for k in range(infra.K):
            residuals[(req.id, k)] = abs(placed.get((req.id, k), 0.0) - req.demand[k] * y)

    violations = {}
    for d, used in consumption.items():
        cap = infra.nodes[d].capacity
        for z in ResourceType:
            violations[(d, z)] = max(0.0, used[z] - cap[z])

    negative = any(a < -tol for a in sol.allocation.values())
    feasible = (not negative
                and all(v <= tol for v in residuals.values())
                and all(v <= tol for v in violations.values()))
    return ValidationReport(residuals, violations, feasible)


def value_of(requests: Iterable[SliceRequest], admission: Mapping[int, int], mode: ValueMode) -> float:
    return float(sum(r.effective_value(mode) for r in requests if admission.get(r.id, 0)))
