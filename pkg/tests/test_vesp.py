import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from edgeslice.exact import build_esp, solve_exact
from edgeslice.model import (
    CollateralMatrix,
    EdgeNode,
    EdgeSliceError,
    ResourceVector,
    SliceRequest,
    SolverStats,
    ValueMode,
    validate_solution,
)
from edgeslice.scenario import BASE_COLLATERAL, ScenarioParams, generate
from edgeslice.vesp import (
    DegenerateFeatureError,
    cosine_dissimilarity,
    partition,
    partition_cluster,
    prepare,
    similarity,
    solve_vesp,
    split_virtual_allocation,
    virtualize,
)

from helpers import C, N, flat_infra, small_scenario


def with_n_to_c(value):
    m = BASE_COLLATERAL.matrix.copy()
    m[int(C), int(N)] = value
    return CollateralMatrix(m)


@pytest.fixture
def five_nodes():
    """Two large twins, two small twins and a large node with a 10x networking-to-compute cost."""
    big = ResourceVector(50, 9e5, 180)
    return [
        EdgeNode(1, 0, big, BASE_COLLATERAL),
        EdgeNode(2, 0, ResourceVector(50, 8.8e5, 176), BASE_COLLATERAL),
        EdgeNode(3, 0, ResourceVector(50, 2e5, 40), BASE_COLLATERAL),
        EdgeNode(4, 0, big, with_n_to_c(4.9)),
        EdgeNode(5, 0, ResourceVector(50, 2.1e5, 42), BASE_COLLATERAL),
    ]


def test_identical_nodes_score_zero(five_nodes):
    a = five_nodes[0]
    assert similarity(a, a, five_nodes) == 0.0


def test_collateral_difference_is_visible(five_nodes):
    # nodes 1 and 4 share capacities, only the collateral differs
    assert similarity(five_nodes[0], five_nodes[3], five_nodes) > 0.5


def test_orthogonal_features():
    a, b = np.zeros(9), np.zeros(9)
    a[0], b[1] = 1.0, 1.0
    assert cosine_dissimilarity(a, b) == pytest.approx(1.0)
    assert cosine_dissimilarity(a, -a) == pytest.approx(2.0)


def test_zero_features():
    assert cosine_dissimilarity(np.zeros(9), np.zeros(9)) == 0.0
    with pytest.raises(DegenerateFeatureError):
        cosine_dissimilarity(np.zeros(9), np.ones(9))


def test_groups_twins_and_isolates_odd_node(five_nodes):
    assert partition_cluster(five_nodes, 0.1) == [(1, 2), (3, 5), (4,)]


def test_zero_threshold_keeps_distinct_nodes_apart(five_nodes):
    assert partition_cluster(five_nodes, 0.0) == [(1,), (2,), (3,), (4,), (5,)]


def test_identical_nodes_always_merge():
    nodes = [EdgeNode(d, 0, ResourceVector(50, 1e5, 100), BASE_COLLATERAL) for d in range(5)]
    for eps in (0.0, 0.1, 1.0):
        assert partition_cluster(nodes, eps) == [(0, 1, 2, 3, 4)]


def test_negative_threshold():
    with pytest.raises(ValueError):
        partition_cluster([EdgeNode(0, 0, ResourceVector(1, 1, 1))], -0.1)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.floats(0, 2))
def test_partitioning_is_disjoint_cover(seed, eps):
    infra, _ = small_scenario(seed, K=3, nodes_per_cluster=6, R=0)
    parts = partition(infra, eps)
    for k in range(infra.K):
        flat = [d for g in parts.groups[k] for d in g]
        assert sorted(flat) == sorted(infra.clusters[k])
        assert all(parts.groups[k])


def test_threshold_endpoints():
    infra, _ = small_scenario(2, K=3, nodes_per_cluster=6, R=0)
    assert partition(infra, 0.0).total() == 18
    assert partition(infra, 2.0).total() == 3


def test_partition_count_falls_on_average():
    counts = np.zeros(5)
    for seed in range(40):
        infra, _ = small_scenario(seed, K=2, nodes_per_cluster=8, R=0)
        counts += [partition(infra, e).total() for e in (0.0, 0.3, 0.6, 0.9, 1.2)]
    assert np.all(np.diff(counts) < 0)


def test_leader_rule_is_not_monotone_everywhere():
    # a looser threshold can move an early node under a different leader and strand a later one
    infra, _ = generate(ScenarioParams(K=1, nodes_per_cluster=8, request_count=0, seed=11))
    assert partition(infra, 0.5).G(0) == 4
    assert partition(infra, 0.525).G(0) == 5


def test_virtualize_singleton_is_the_node(five_nodes):
    nodes = {n.id: n for n in five_nodes}
    assert virtualize((3,), nodes) is nodes[3]


def test_virtualize_sums_capacity_and_takes_max_collateral():
    nodes = {
        0: EdgeNode(0, 0, ResourceVector(50, 100, 100), with_n_to_c(0.49)),
        1: EdgeNode(1, 0, ResourceVector(50, 200, 50), with_n_to_c(0.55)),
    }
    v = virtualize((1, 0), nodes)
    assert v.id == 0
    assert v.capacity == ResourceVector(100, 300, 150)
    assert v.collateral.coeff(N, C) == 0.55
    np.testing.assert_array_equal(np.diag(v.collateral.matrix), 1.0)


def test_virtualize_empty():
    with pytest.raises(EdgeSliceError):
        virtualize((), {})


@pytest.mark.parametrize("seed", range(8))
def test_zero_threshold_reproduces_exact(seed):
    infra, reqs = small_scenario(seed, K=3, nodes_per_cluster=3, R=8)
    exact = solve_exact(build_esp(infra, reqs))
    approx = solve_vesp(infra, reqs, 0.0)
    assert approx.admission == exact.admission
    assert approx.stats.repairs == 0


def test_twin_nodes_share_a_request():
    infra = flat_infra([(50, 0, 0), (50, 0, 0)])
    reqs = [SliceRequest(0, N, 2.0, (100,))]
    sol = solve_vesp(infra, reqs, 0.1)
    assert sol.admission == {0: 1}
    assert sol.allocation[(0, 0)] + sol.allocation[(0, 1)] == pytest.approx(100)
    assert validate_solution(infra, reqs, sol).feasible


def test_split_respects_members():
    nodes = [EdgeNode(0, 0, ResourceVector(50, 0, 0)), EdgeNode(1, 0, ResourceVector(30, 0, 0))]
    split = split_virtual_allocation(nodes, {7: (N, 60.0), 8: (N, 20.0)}, SolverStats())
    assert split is not None
    assert split[(7, 0)] + split[(7, 1)] == pytest.approx(60)
    assert split[(7, 0)] + split[(8, 0)] <= 50 + 1e-9
    assert split[(7, 1)] + split[(8, 1)] <= 30 + 1e-9


def test_unsplittable_pool_triggers_repair():
    # pooled compute covers 100 RB, but the compute-poor member cannot host its half
    infra = flat_infra([(50, 1e6, 10), (50, 1e6, 100)], collateral=BASE_COLLATERAL)
    reqs = [SliceRequest(0, N, 1.0, (100,))]
    sol = solve_vesp(infra, reqs, 2.0)
    assert sol.stats.repairs == 1
    assert sol.admission == {0: 0}
    assert validate_solution(infra, reqs, sol).feasible


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000), st.sampled_from([0.1, 0.3, 0.6, 0.9, 2.0]))
def test_feasible_and_never_above_exact(seed, eps):
    infra, reqs = small_scenario(seed, K=2, nodes_per_cluster=4, R=6)
    sol = solve_vesp(infra, reqs, eps)
    assert validate_solution(infra, reqs, sol).feasible
    assert sol.objective <= solve_exact(build_esp(infra, reqs)).objective + 1e-9


def test_prepared_handle_reused():
    infra, reqs = small_scenario(5, K=2, nodes_per_cluster=4, R=6)
    handle = prepare(infra, 0.3)
    assert solve_vesp(infra, reqs, handle).admission == solve_vesp(infra, reqs, 0.3).admission
    other, _ = small_scenario(6, K=2, nodes_per_cluster=4, R=6)
    with pytest.raises(EdgeSliceError):
        solve_vesp(other, reqs, handle)


def test_count_mode():
    infra, reqs = small_scenario(7, K=2, nodes_per_cluster=4, R=6)
    sol = solve_vesp(infra, reqs, 0.1, ValueMode.COUNT)
    assert sol.objective == len(sol.admitted())
