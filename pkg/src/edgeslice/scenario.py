"""Seeded scenario generation and JSON persistence.

Every node and every request draws from its own PCG64 sub-stream keyed by
``(seed, kind, index)``, so changing the node count leaves request draws
untouched and vice versa.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any

import jsonschema
import numpy as np

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
)

SCHEMA_VERSION = 1

# Rows are the consumed type, columns the allocated type, both ordered (N, S, C):
# A^{S->N}=0.0382, A^{C->N}=0.1636, A^{N->S}=26.178, A^{C->S}=0.0063,
# A^{N->C}=0.49, A^{S->C}=0.15.
BASE_COLLATERAL = CollateralMatrix([
    [1.0, 0.0382, 0.1636],
    [26.178, 1.0, 0.0063],
    [0.49, 0.15, 1.0],
])

_NODE_STREAM = 0
_REQUEST_STREAM = 1


class ScenarioError(EdgeSliceError, ValueError):
    pass


@dataclass(frozen=True)
class ScenarioParams:
    K: int = 5
    nodes_per_cluster: int = 5
    rb_capacity: float = 50.0
    storage_max_mb: float = 1_000_000.0
    gips_max: float = 200.0
    capacity_floor_fraction: float = 0.1
    base_collateral: CollateralMatrix = field(default=BASE_COLLATERAL, compare=False)
    perturbation: float = 0.1
    request_count: int = 10
    value_range: tuple[float, float] = (1.0, 10.0)
    demand_intensity: float = 0.5
    cap_fraction: float = 0.5
    request_types: tuple[ResourceType, ...] = (ResourceType.N, ResourceType.S, ResourceType.C)
    # size demand against the first n nodes of each cluster instead of all of them
    demand_basis_nodes: int | None = None
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "value_range", tuple(float(v) for v in self.value_range))
        object.__setattr__(self, "request_types",
                           tuple(ResourceType.parse(t) if isinstance(t, str) else ResourceType(t)
                                 for t in self.request_types))
        if not isinstance(self.base_collateral, CollateralMatrix):
            object.__setattr__(self, "base_collateral", CollateralMatrix(self.base_collateral))
        self.validate()

    def validate(self) -> None:
        checks = [
            (self.K >= 1, "K must be >= 1"),
            (self.nodes_per_cluster >= 1, "nodes_per_cluster must be >= 1"),
            (self.rb_capacity > 0, "rb_capacity must be > 0"),
            (self.storage_max_mb > 0, "storage_max_mb must be > 0"),
            (self.gips_max > 0, "gips_max must be > 0"),
            (0 < self.capacity_floor_fraction <= 1, "capacity_floor_fraction must be in (0, 1]"),
            (0 <= self.perturbation < 1, "perturbation must be in [0, 1)"),
            (self.request_count >= 0, "request_count must be >= 0"),
            (len(self.value_range) == 2 and 0 < self.value_range[0] <= self.value_range[1],
             "value_range must be (low, high) with 0 < low <= high"),
            (0 < self.demand_intensity <= 1, "demand_intensity must be in (0, 1]"),
            (0 < self.cap_fraction <= 1, "cap_fraction must be in (0, 1]"),
            (len(self.request_types) >= 1, "request_types must not be empty"),
            (self.demand_basis_nodes is None or 1 <= self.demand_basis_nodes <= self.nodes_per_cluster,
             "demand_basis_nodes must be between 1 and nodes_per_cluster"),
            (0 <= self.seed < 2**64, "seed must be a 64-bit unsigned integer"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ScenarioError(msg)

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name == "base_collateral":
                v = v.matrix.tolist()
            elif f.name == "request_types":
                v = [t.name for t in v]
            elif f.name == "value_range":
                v = list(v)
            out[f.name] = v
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioParams":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ScenarioError(f"unknown scenario parameters: {sorted(unknown)}")
        return cls(**d)


def _stream(seed: int, *key: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=key)))


def _perturbed(base: CollateralMatrix, delta: float, rng: np.random.Generator) -> CollateralMatrix:
    m = base.matrix.copy()
    factors = 1.0 + rng.uniform(-delta, delta, size=(3, 3))
    off = ~np.eye(3, dtype=bool)
    m[off] = m[off] * factors[off]
    return CollateralMatrix(m)


def generate(params: ScenarioParams) -> tuple[Infrastructure, list[SliceRequest]]:
    params.validate()
    p = params
    nodes = []
    clusters = []
    for k in range(p.K):
        members = []
        for j in range(p.nodes_per_cluster):
            d = k * p.nodes_per_cluster + j
            # keyed by position inside the cluster: growing a cluster keeps its existing nodes
            rng = _stream(p.seed, _NODE_STREAM, k, j)
            s = rng.uniform(p.capacity_floor_fraction * p.storage_max_mb, p.storage_max_mb)
            c = rng.uniform(p.capacity_floor_fraction * p.gips_max, p.gips_max)
            collateral = _perturbed(p.base_collateral, p.perturbation, rng) if p.perturbation > 0 \
                else p.base_collateral
            nodes.append(EdgeNode(d, k, ResourceVector(p.rb_capacity, s, c), collateral))
            members.append(d)
        clusters.append(members)
    infra = Infrastructure(clusters, nodes)

    basis = p.demand_basis_nodes or p.nodes_per_cluster
    totals = np.zeros((p.K, 3))
    for k, members in enumerate(clusters):
        for d in members[:basis]:
            totals[k] += infra.nodes[d].capacity.as_array()

    requests = []
    for i in range(p.request_count):
        rng = _stream(p.seed, _REQUEST_STREAM, i)
        rtype = p.request_types[int(rng.integers(len(p.request_types)))]
        value = float(rng.uniform(*p.value_range))
        while True:
            included = rng.random(p.K) < p.demand_intensity
            if included.any():
                break
        # 1 - U[0,1) lies in (0, 1], so included clusters never get zero demand
        frac = 1.0 - rng.random(p.K)
        demand = np.where(included, frac * p.cap_fraction * totals[:, int(rtype)], 0.0)
        requests.append(SliceRequest(i, rtype, value, tuple(float(x) for x in demand)))
    return infra, requests


# --- persistence -----------------------------------------------------------

_VECTOR = {
    "type": "object",
    "required": ["n", "s", "c"],
    "properties": {k: {"type": "number", "minimum": 0} for k in ("n", "s", "c")},
}
_MATRIX = {
    "type": "array", "minItems": 3, "maxItems": 3,
    "items": {"type": "array", "minItems": 3, "maxItems": 3, "items": {"type": "number"}},
}
SCENARIO_SCHEMA = {
    "type": "object",
    "required": ["schema_version", "clusters", "requests"],
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "params": {"type": ["object", "null"]},
        "clusters": {
            "type": "array", "minItems": 1,
            "items": {
                "type": "object",
                "required": ["id", "nodes"],
                "properties": {
                    "id": {"type": "integer"},
                    "nodes": {
                        "type": "array", "minItems": 1,
                        "items": {
                            "type": "object",
                            "required": ["id", "capacity", "collateral"],
                            "properties": {
                                "id": {"type": "integer"},
                                "capacity": _VECTOR,
                                "collateral": _MATRIX,
                            },
                        },
                    },
                },
            },
        },
        "requests": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["id", "type", "value", "demand"],
                "properties": {
                    "id": {"type": "integer"},
                    "type": {"enum": ["N", "S", "C"]},
                    "value": {"type": "number", "exclusiveMinimum": 0},
                    "demand": {"type": "array", "items": {"type": "number", "minimum": 0}},
                },
            },
        },
    },
}

SOLUTION_SCHEMA = {
    "type": "object",
    "required": ["schema_version", "objective", "admission", "allocation"],
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "objective": {"type": "number"},
        "admission": {
            "type": "array",
            "items": {"type": "object", "required": ["request", "admitted"],
                      "properties": {"request": {"type": "integer"},
                                     "admitted": {"enum": [0, 1]}}},
        },
        "allocation": {
            "type": "array",
            "items": {"type": "object", "required": ["request", "node", "amount"],
                      "properties": {"request": {"type": "integer"},
                                     "node": {"type": "integer"},
                                     "amount": {"type": "number"}}},
        },
        "stats": {"type": "object"},
    },
}


def _field_path(err: jsonschema.ValidationError) -> str:
    path = "".join(f"[{p}]" if isinstance(p, int) else f".{p}" for p in err.absolute_path)
    return path.lstrip(".") or "<root>"


def _load_json(path: Path, schema: dict) -> Any:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ScenarioError(f"{path}: {exc.strerror or exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{path}: invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    err = jsonschema.exceptions.best_match(jsonschema.Draft7Validator(schema).iter_errors(data))
    if err is not None:
        raise ScenarioError(f"{path}: schema error at {_field_path(err)}: {err.message}")
    return data


def scenario_to_dict(infra: Infrastructure, requests: list[SliceRequest],
                     params: ScenarioParams | None = None) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "params": params.to_dict() if params is not None else None,
        "clusters": [
            {"id": k, "nodes": [
                {"id": node.id,
                 "capacity": {"n": node.capacity.n, "s": node.capacity.s, "c": node.capacity.c},
                 "collateral": node.collateral.matrix.tolist()}
                for node in infra.cluster_nodes(k)]}
            for k in range(infra.K)
        ],
        "requests": [
            {"id": r.id, "type": r.rtype.name, "value": r.value, "demand": list(r.demand)}
            for r in requests
        ],
    }


def scenario_from_dict(data: dict) -> tuple[Infrastructure, list[SliceRequest]]:
    clusters = []
    nodes = []
    for k, cl in enumerate(data["clusters"]):
        if cl["id"] != k:
            raise ScenarioError(f"clusters[{k}].id: expected {k} (clusters must be listed in id order)")
        members = []
        for node in cl["nodes"]:
            cap = node["capacity"]
            nodes.append(EdgeNode(node["id"], k, ResourceVector(cap["n"], cap["s"], cap["c"]),
                                  CollateralMatrix(node["collateral"])))
            members.append(node["id"])
        clusters.append(members)
    infra = Infrastructure(clusters, nodes)
    requests = [SliceRequest(r["id"], ResourceType.parse(r["type"]), r["value"], tuple(r["demand"]))
                for r in data["requests"]]
    return infra, requests


def save_scenario(path, infra: Infrastructure, requests: list[SliceRequest],
                  params: ScenarioParams | None = None) -> None:
    Path(path).write_text(json.dumps(scenario_to_dict(infra, requests, params), indent=1) + "\n")


def load_scenario(path) -> tuple[Infrastructure, list[SliceRequest]]:
    data = _load_json(Path(path), SCENARIO_SCHEMA)
    try:
        return scenario_from_dict(data)
    except (ValueError, KeyError) as exc:
        raise ScenarioError(f"{path}: {exc}") from exc


def solution_to_dict(sol: SlicingSolution, solver: str | None = None) -> dict:
    out = {"schema_version": SCHEMA_VERSION}
    if solver is not None:
        out["solver"] = solver
    out["objective"] = sol.objective
    out["admission"] = [{"request": r, "admitted": int(y)} for r, y in sorted(sol.admission.items())]
    out["allocation"] = [{"request": r, "node": d, "amount": a}
                         for (r, d), a in sorted(sol.allocation.items())]
    out["stats"] = sol.stats.to_dict()
    return out


def solution_from_dict(data: dict) -> SlicingSolution:
    stats_in = data.get("stats") or {}
    stats = SolverStats(**{k: stats_in[k] for k in
                           ("lp_pivots", "bnb_nodes", "admm_iterations", "wall_time", "repairs", "converged")
                           if k in stats_in})
    return SlicingSolution(
        {a["request"]: int(a["admitted"]) for a in data["admission"]},
        {(a["request"], a["node"]): float(a["amount"]) for a in data["allocation"]},
        float(data["objective"]),
        stats,
    )


def save_solution(path, sol: SlicingSolution, solver: str | None = None) -> None:
    Path(path).write_text(json.dumps(solution_to_dict(sol, solver), indent=1) + "\n")


def load_solution(path) -> SlicingSolution:
    return solution_from_dict(_load_json(Path(path), SOLUTION_SCHEMA))
