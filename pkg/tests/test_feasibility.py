import numpy as np
import pytest

from conftest import small_doc
from noma_uav.feasibility import GOAL, START, build_g0, check_feasibility, region_vertex
from noma_uav.scenario import derive_link_constants, scenario_from_dict
from noma_uav.zones import Disk, FeasibleRegion, build_regions, region_contains, regions_intersect


def disk_region(owner, cx, cy, r, exclusions=()):
    return FeasibleRegion(
        owner=owner,
        noma_disk=Disk(center=np.array([cx, cy], float), radius=float(r)),
        exclusions=tuple(Disk(center=np.asarray(c, float), radius=float(rr)) for c, rr in exclusions),
    )


def scn_with_endpoints(start, goal):
    doc = small_doc()
    doc["uav"]["start"] = list(start)
    doc["uav"]["goal"] = list(goal)
    return scenario_from_dict(doc)


def test_single_region_graph_shape():
    scn = scn_with_endpoints([-50, 0], [50, 0])
    regions = [disk_region(0, 0, 0, 100)]
    g = build_g0(scn, regions)
    assert g.n_vertices == 3
    assert g.adjacency.sum() == 4  # two undirected edges
    v = check_feasibility(g)
    assert v.feasible and v.witness_order == [0]


def test_far_apart_regions_have_no_edge():
    scn = scn_with_endpoints([-50, 0], [50, 0])
    regions = [disk_region(0, 0, 0, 100), disk_region(1, 5000, 0, 100)]
    g = build_g0(scn, regions)
    assert not g.adjacency[region_vertex(0), region_vertex(1)]


def test_isolated_goal_is_infeasible():
    scn = scn_with_endpoints([-50, 0], [4000, 0])
    regions = [disk_region(0, 0, 0, 100)]
    g = build_g0(scn, regions)
    v = check_feasibility(g)
    assert not v.feasible
    assert "goal" in v.reason
    assert len(v.components) == 2


def test_chain_of_four_regions_feasible():
    # chain layout: consecutive disks overlap, endpoints in the end disks
    scn = scn_with_endpoints([-80, 0], [560, 0])
    regions = [disk_region(m, 160.0 * m, 0, 100) for m in range(4)]
    g = build_g0(scn, regions)
    for m in range(3):
        assert g.adjacency[region_vertex(m), region_vertex(m + 1)]
    v = check_feasibility(g)
    assert v.feasible
    assert set(v.witness_order) == {0, 1, 2, 3}
    assert len(v.witness_order) <= 2 * 4 - 1
    assert v.witness_order[0] == 0 and v.witness_order[-1] == 3


def test_witness_satisfies_all_three_conditions():
    scn = scn_with_endpoints([-80, 20], [560, -10])
    regions = [
        disk_region(0, 0, 0, 110),
        disk_region(1, 150, 60, 100),
        disk_region(2, 300, -40, 110),
        disk_region(3, 460, 10, 110),
    ]
    g = build_g0(scn, regions)
    v = check_feasibility(g)
    assert v.feasible
    order = v.witness_order
    assert region_contains(regions[order[0]], scn.uav.start)
    assert region_contains(regions[order[-1]], scn.uav.goal)
    assert set(order) >= set(range(4))
    for a, b in zip(order[:-1], order[1:]):
        hit, _ = regions_intersect(regions[a], regions[b], 1.0)
        assert hit


def test_verdict_invariant_under_relabeling():
    scn = scn_with_endpoints([-80, 0], [560, 0])
    base = [disk_region(m, 160.0 * m, 0, 100) for m in range(4)]
    v1 = check_feasibility(build_g0(scn, base))
    shuffled = [disk_region(i, base[p].noma_disk.center[0], 0, 100)
                for i, p in enumerate([2, 0, 3, 1])]
    v2 = check_feasibility(build_g0(scn, shuffled))
    assert v1.feasible == v2.feasible


def test_point_membership_implies_region_edge():
    # both endpoints inside two overlapping-through-a-point regions: the
    # exact membership must imply the region-region edge even if the lens
    # sampling would be marginal
    scn = scn_with_endpoints([0, 0], [0, 0])
    regions = [disk_region(0, -100, 0, 101), disk_region(1, 100, 0, 101)]
    g = build_g0(scn, regions, resolution_m=37.0)
    assert g.adjacency[region_vertex(0), region_vertex(1)]


def test_feasibility_matches_flood_fill_oracle():
    from oracles import feasibility_flood_fill

    rng = np.random.default_rng(1234)
    checked = 0
    disagreements = []
    from conftest import random_small_scenario
    from noma_uav.errors import InvariantViolation, QosUnsatisfiable
    from noma_uav.fhf import PlannerParams, prepare_regions
    from noma_uav.zones import RegionVariant

    params = PlannerParams()
    while checked < 25:
        scn = random_small_scenario(rng)
        try:
            consts = derive_link_constants(scn)
            regions, _ = prepare_regions(scn, consts, RegionVariant.STANDARD, params)
        except (InvariantViolation, QosUnsatisfiable):
            continue
        checked += 1
        verdict = check_feasibility(build_g0(scn, regions, 1.0))
        oracle = feasibility_flood_fill(scn, regions, pitch=1.0)
        if verdict.feasible != oracle:
            disagreements.append(scn)
    assert len(disagreements) <= 1
