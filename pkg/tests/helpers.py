"""Small instance builders shared by the tests."""

import numpy as np

from edgeslice.linprog import LpProblem
from edgeslice.model import CollateralMatrix, EdgeNode, Infrastructure, ResourceType, ResourceVector
from edgeslice.scenario import ScenarioParams, generate


def small_scenario(seed, K=2, nodes_per_cluster=2, R=6, **kw):
    return generate(ScenarioParams(K=K, nodes_per_cluster=nodes_per_cluster, request_count=R, seed=seed, **kw))


def flat_infra(capacities, collateral=None, clusters=None):
    """Nodes 0..n-1 with the given (n, s, c) capacities; one cluster unless ``clusters`` lists sizes."""
    sizes = clusters or [len(capacities)]
    nodes, groups, d = [], [], 0
    for k, size in enumerate(sizes):
        groups.append(list(range(d, d + size)))
        for _ in range(size):
            nodes.append(EdgeNode(d, k, ResourceVector(*capacities[d]), collateral or CollateralMatrix.identity()))
            d += 1
    return Infrastructure(groups, nodes)


N, S, C = ResourceType.N, ResourceType.S, ResourceType.C


def random_lp(rng):
    """Integer-data LP with at most 8 variables and 8 constraints; any status is possible."""
    n = int(rng.integers(1, 9))
    m_ub = int(rng.integers(0, 7))
    m_eq = int(rng.integers(0, min(3, 9 - m_ub)))
    c = rng.integers(-5, 6, n).astype(float)
    A_ub = rng.integers(-4, 6, (m_ub, n)).astype(float)
    b_ub = rng.integers(-3, 12, m_ub).astype(float)
    A_eq = rng.integers(-3, 4, (m_eq, n)).astype(float)
    b_eq = rng.integers(-2, 6, m_eq).astype(float)
    upper = np.where(rng.random(n) < 0.3, rng.integers(1, 6, n).astype(float), np.inf)
    return LpProblem(c, A_eq, b_eq, A_ub, b_ub, upper)
