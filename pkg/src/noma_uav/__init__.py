"""Mission-time planning for a cellular-connected UAV over uplink NOMA.

A UAV must fly from a start to a goal point while uploading a required
number of bits to each ground base station, staying inside the serving
cell's power-ordering disk and outside every other cell's protected disk.
The package checks mission feasibility on a region-adjacency graph, builds
a fly-hover-fly plan (hover locations, convexified shortest paths, exact
open-route TSP, top-speed time allocation), refines it by successive convex
approximation, and compares against Multi-SIC, hover-only and OMA
benchmarks.
"""

__version__ = "0.1.0"

from .audit import AuditReport, audit_plan
from .conic import (
    ConeProgram,
    SolveReport,
    bilinear_lower_bound,
    rate_lower_bound,
    taylor_distance_lower_bound,
)
from .errors import NomaUavError
from .feasibility import RegionGraph, build_g0, check_feasibility
from .fhf import (
    DiscretePath,
    PlannerParams,
    PlanResult,
    allocate_time,
    build_g1,
    floyd_all_pairs,
    hover_location,
    pairwise_shortest_path,
    plan_fhf,
    reconstruct_full_path,
    tsp_with_dummy,
)
from .sca import (
    ScaState,
    SweepResult,
    discretize_problem,
    plan_hover_only,
    plan_multi_sic,
    plan_oma,
    plan_sca,
    plan_with_method,
    run_sweep,
    sca_iterate,
)
from .scenario import (
    LinkConstants,
    Scenario,
    Scheme,
    dbm_to_watts,
    derive_link_constants,
    gue_channel_gain,
    gue_rate,
    load_scenario,
    scenario_digest,
    scenario_from_dict,
    scenario_to_dict,
    uav_channel_gain,
    uav_rate,
)
from .zones import (
    Disk,
    FeasibleRegion,
    RegionVariant,
    build_regions,
    is_pathwise_connected,
    noma_radius_sq,
    qos_radius_sq,
    region_contains,
    regions_intersect,
)
