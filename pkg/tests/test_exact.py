import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from edgeslice.exact import BRUTE_FORCE_MAX, SizeError, brute_force, build_esp, solve_exact
from edgeslice.model import (
    EdgeNode,
    Infrastructure,
    ModelError,
    ResourceVector,
    SliceRequest,
    ValueMode,
    validate_solution,
)

from helpers import C, N, flat_infra, small_scenario


def solve(infra, reqs, mode=ValueMode.PROFIT):
    return solve_exact(build_esp(infra, reqs, mode))


def test_structure_one_cluster():
    infra = flat_infra([(10, 10, 10)] * 2)
    reqs = [SliceRequest(0, N, 1, (5,)), SliceRequest(1, C, 1, (5,))]
    inst = build_esp(infra, reqs)
    assert len(inst.y_cols) == 2 and len(inst.sigma_cols) == 4
    assert inst.problem.A_eq.shape[0] == 2
    assert inst.problem.A_ub.shape[0] == 6


def test_columns_only_where_demand_is_positive():
    infra = flat_infra([(10, 10, 10)] * 4, clusters=[2, 2])
    inst = build_esp(infra, [SliceRequest(0, N, 1, (0, 5))])
    assert sorted(d for (_, d) in inst.sigma_cols) == [2, 3]


def test_structure_matches_closed_form():
    infra, reqs = small_scenario(3, K=5, nodes_per_cluster=15, R=20)
    inst = build_esp(infra, reqs)
    per_cluster = [sum(1 for r in reqs if r.demand[k] > 0) for k in range(5)]
    assert inst.n_cols == 20 + sum(len(infra.clusters[k]) * per_cluster[k] for k in range(5))
    assert inst.problem.A_eq.shape[0] == sum(per_cluster)
    assert inst.problem.A_ub.shape[0] == 3 * 75


def test_wrong_demand_length():
    with pytest.raises(ModelError):
        build_esp(flat_infra([(1, 1, 1)]), [SliceRequest(0, N, 1, (1, 1))])


def test_no_requests():
    sol = solve(flat_infra([(1, 1, 1)]), [])
    assert sol.objective == 0 and sol.allocation == {}
    assert brute_force(build_esp(flat_infra([(1, 1, 1)]), [])).objective == 0


def test_saturating_fit():
    sol = solve(flat_infra([(50, 0, 0)]), [SliceRequest(0, N, 3.5, (50,))])
    assert sol.admission == {0: 1}
    assert sol.allocation[(0, 0)] == pytest.approx(50.0)
    assert sol.objective == 3.5


def test_oversized_request_rejected():
    inst = build_esp(flat_infra([(50, 0, 0)] * 2), [SliceRequest(0, N, 1, (101,))])
    assert brute_force(inst).objective == 0
    assert solve_exact(inst).admission == {0: 0}


def test_splittable_knapsack():
    # sizes 30, 40, 50 on two bins of 50: any two fit after splitting, all three (120) do not
    infra = flat_infra([(50, 0, 0)] * 2)
    reqs = [SliceRequest(i, N, 1.0, (size,)) for i, size in enumerate((30, 40, 50))]
    inst = build_esp(infra, reqs)
    assert brute_force(inst).objective == 2
    sol = solve_exact(inst)
    assert sol.objective == 2
    assert validate_solution(infra, reqs, sol).feasible


def test_mixed_types_on_one_cluster():
    infra, reqs = small_scenario(11, K=1, nodes_per_cluster=2, R=4)
    inst = build_esp(infra, reqs)
    assert solve_exact(inst).objective == pytest.approx(brute_force(inst).objective, abs=1e-6)


def test_brute_force_size_limit():
    reqs = [SliceRequest(i, N, 1, (1,)) for i in range(BRUTE_FORCE_MAX + 1)]
    with pytest.raises(SizeError):
        brute_force(build_esp(flat_infra([(1, 1, 1)]), reqs))


@pytest.mark.parametrize("seed", range(50))
def test_matches_brute_force(seed):
    rng = np.random.default_rng(seed)
    infra, reqs = small_scenario(seed, K=int(rng.integers(1, 3)), nodes_per_cluster=int(rng.integers(1, 3)),
                                 R=int(rng.integers(1, 9)), request_types=("N", "C"))
    for mode in ValueMode:
        inst = build_esp(infra, reqs, mode)
        exact, oracle = solve_exact(inst), brute_force(inst)
        assert exact.objective == pytest.approx(oracle.objective, abs=1e-6)
        assert validate_solution(infra, reqs, exact).feasible
        assert validate_solution(infra, reqs, oracle).feasible
        assert all(y in (0, 1) for y in exact.admission.values())
        if mode is ValueMode.COUNT:
            assert exact.objective == round(exact.objective)


def test_stats_populated():
    infra, reqs = small_scenario(1, R=6, request_types=("N", "C"))
    stats = solve(infra, reqs).stats
    assert stats.bnb_nodes >= 1 and stats.lp_pivots > 0
    assert stats.function_evaluations == stats.lp_pivots + stats.bnb_nodes


def test_deterministic():
    infra, reqs = small_scenario(4, R=8)
    a, b = solve(infra, reqs), solve(infra, reqs)
    assert a.admission == b.admission and a.allocation == b.allocation
    assert a.stats.lp_pivots == b.stats.lp_pivots


seeds = st.integers(0, 10_000)


@settings(max_examples=25, deadline=None)
@given(seeds, st.integers(0, 3), st.floats(1.0, 3.0))
def test_more_capacity_never_hurts(seed, which, factor):
    infra, reqs = small_scenario(seed, R=5, request_types=("N", "C"))
    d = infra.node_ids()[which % len(infra.nodes)]
    old = infra.nodes[d]
    bigger = EdgeNode(old.id, old.cluster_id, ResourceVector.from_array(old.capacity.as_array() * factor),
                      old.collateral)
    grown = Infrastructure(infra.clusters, [bigger if n.id == d else n for n in infra.nodes.values()])
    assert solve(grown, reqs).objective >= solve(infra, reqs).objective - 1e-9


@settings(max_examples=25, deadline=None)
@given(seeds, st.integers(0, 4))
def test_dropping_a_request_never_helps(seed, which):
    infra, reqs = small_scenario(seed, R=5, request_types=("N", "C"))
    fewer = reqs[:which] + reqs[which + 1:]
    assert solve(infra, fewer).objective <= solve(infra, reqs).objective + 1e-9


def test_value_mode_count_ignores_values():
    infra = flat_infra([(50, 0, 0)])
    reqs = [SliceRequest(0, N, 100.0, (50,)), SliceRequest(1, N, 1.0, (20,)), SliceRequest(2, N, 1.0, (30,))]
    assert solve(infra, reqs).admitted() == [0]
    assert solve(infra, reqs, ValueMode.COUNT).admitted() == [1, 2]


def test_collateral_limits_admission():
    # 50 RB would need 24.5 GIPS; only 20 available
    from edgeslice.scenario import BASE_COLLATERAL
    infra = flat_infra([(50, 1e6, 20)], collateral=BASE_COLLATERAL)
    assert solve(infra, [SliceRequest(0, N, 1.0, (50,))]).objective == 0
    infra = flat_infra([(50, 1e6, 25)], collateral=BASE_COLLATERAL)
    assert solve(infra, [SliceRequest(0, N, 1.0, (50,))]).objective == 1
