"""Trajectory refinement by successive convex approximation, plus benchmarks.

Starting from a feasible discretized plan with frozen serving-GBS flags, each
pass rebuilds a convex program around the incumbent: upload products are
bounded through the half-square coupling of durations and rate slacks, rates
through their tangent in squared distance, and keep-out disks through
supporting lines. Every iterate stays feasible for the true problem and the
completion time never increases.

The same machinery drives the benchmark schemes: Multi-SIC (keep-out disks
dropped, power-ordering disks kept), hover-only (straight-line tour, uploads
only while hovering), and OMA (half the band, no zone constraints).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .conic import ConeProgram, rate_lower_bound, taylor_distance_lower_bound
from .errors import InfeasibleN, SolverFailure
from .feasibility import GOAL, START
from .fhf import (
    DiscretePath,
    HoverSlot,
    PlannerParams,
    PlanResult,
    hover_location,
    plan_fhf,
    prepare_regions,
    tsp_with_dummy,
)
from .scenario import LinkConstants, Scenario, derive_link_constants, uav_rate
from .zones import Disk, FeasibleRegion, RegionVariant, default_cap_radius

METHODS = ("fhf", "sca", "multi_sic", "hover_only", "oma")


@dataclass
class ScaState:
    """Incumbent trajectory and the frozen problem data of one refinement run."""

    iteration: int
    waypoints: np.ndarray  # (N+1, 2)
    durations: np.ndarray  # (N,)
    segment_gbs: np.ndarray  # (N,)
    pi: np.ndarray  # (N,) true spectral rate at each segment's first waypoint
    objective_history: list[float]
    regions: list[FeasibleRegion]
    consts: LinkConstants
    required_bits: np.ndarray
    delta: float
    v_max: float
    diagnostics: list[str] = field(default_factory=list)

    @property
    def n_segments(self) -> int:
        return len(self.durations)

    def objective(self) -> float:
        return float(self.durations.sum())


def with_hover_segments(plan: PlanResult) -> DiscretePath:
    """Path with every positive hover expanded into a zero-length segment."""
    path = plan.path
    wps = [path.waypoints[i] for i in range(len(path.waypoints))]
    durs = list(path.durations)
    gbs = list(path.segment_gbs)
    hover_idx = plan.metadata.get("hover_waypoint_index", {})
    inserts = []
    for slot in plan.hover:
        if slot.duration_s <= 0.0:
            continue
        if slot.gbs not in hover_idx:
            raise SolverFailure(f"no hover waypoint recorded for GBS {slot.gbs}")
        inserts.append((hover_idx[slot.gbs], slot))
    for wp_idx, slot in sorted(inserts, key=lambda t: -t[0]):
        wps.insert(wp_idx, wps[wp_idx].copy())
        durs.insert(wp_idx, slot.duration_s)
        gbs.insert(wp_idx, slot.gbs)
    return DiscretePath(
        waypoints=np.array(wps), durations=np.array(durs), segment_gbs=np.array(gbs, dtype=int)
    )


def discretize_problem(
    scn: Scenario,
    consts: LinkConstants,
    regions: list[FeasibleRegion],
    plan0: PlanResult,
    params: PlannerParams,
    n_segments: int | None = None,
) -> ScaState:
    """Turn a plan into the discretized refinement state.

    Hover intervals become zero-length segments so the initial objective
    equals the plan's completion time; serving-GBS flags are frozen. A larger
    segment budget than the path needs is honored by splitting the longest
    segments; a smaller one is rejected.
    """
    path = with_hover_segments(plan0)
    if n_segments is not None:
        if n_segments < path.n_segments:
            raise InfeasibleN(
                f"requested {n_segments} segments but the reference path needs {path.n_segments}"
            )
        path = _split_to(path, n_segments)

    pi = np.array(
        [
            uav_rate(consts, path.waypoints[n], int(path.segment_gbs[n]))
            for n in range(path.n_segments)
        ]
    )
    state = ScaState(
        iteration=0,
        waypoints=path.waypoints.copy(),
        durations=path.durations.copy(),
        segment_gbs=path.segment_gbs.copy(),
        pi=pi,
        objective_history=[float(path.durations.sum())],
        regions=regions,
        consts=consts,
        required_bits=scn.mission.required_bits.copy(),
        delta=params.delta_for(scn),
        v_max=scn.uav.max_speed_m_s,
    )
    return state


def _split_to(path: DiscretePath, n_target: int) -> DiscretePath:
    wps = [path.waypoints[i] for i in range(len(path.waypoints))]
    durs = list(path.durations)
    gbs = list(path.segment_gbs)
    while len(durs) < n_target:
        lengths = [float(np.linalg.norm(wps[i + 1] - wps[i])) for i in range(len(durs))]
        k = int(np.argmax(lengths))
        mid = 0.5 * (wps[k] + wps[k + 1])
        wps.insert(k + 1, mid)
        durs[k] *= 0.5
        durs.insert(k + 1, durs[k])
        gbs.insert(k + 1, gbs[k])
    return DiscretePath(
        waypoints=np.array(wps), durations=np.array(durs), segment_gbs=np.array(gbs, dtype=int)
    )


def sca_iterate(state: ScaState, params: PlannerParams) -> ScaState:
    """One convexified pass around the incumbent; never worsens the objective."""
    n_seg = state.n_segments
    n_pts = n_seg + 1
    m_count = state.consts.n_gbs
    prog = ConeProgram()
    q_off = prog.add_var("q", 2 * (n_pts - 2))
    t_off = prog.add_var("t", n_seg)
    pi_off = prog.add_var("pi", n_seg)
    prog.add_objective(t_off + np.arange(n_seg), np.ones(n_seg))

    def q_cols(n):
        return (q_off + 2 * (n - 1), q_off + 2 * (n - 1) + 1)

    eta = state.consts.eta
    h = state.consts.height_diff_m
    alpha = state.consts.alpha
    w_hz = state.consts.bandwidth_hz
    gbs_xy = state.consts.gbs_xy
    ref = state.waypoints

    for n in range(n_seg):
        # step length <= delta and <= v_max * t_n
        rows = []
        for axis in range(2):
            cols, vals, const = [], [], 0.0
            if 1 <= n + 1 <= n_pts - 2:
                cols.append(q_cols(n + 1)[axis])
                vals.append(1.0)
            else:
                const += ref[n + 1][axis]
            if 1 <= n <= n_pts - 2:
                cols.append(q_cols(n)[axis])
                vals.append(-1.0)
            else:
                const -= ref[n][axis]
            rows.append((np.array(cols, dtype=int), np.array(vals), const))
        prog.norm_bound(rows, [], [], state.delta)
        prog.norm_bound(rows, [t_off + n], [state.v_max], 0.0)
        prog.lin_ineq([t_off + n], [-1.0], 0.0)
        prog.lin_ineq([pi_off + n], [-1.0], 0.0)

        # rate slack under its tangent bound, anchored at the first waypoint
        m = int(state.segment_gbs[n])
        bound = rate_lower_bound(ref[n], gbs_xy[m], eta[m], h, alpha)
        cap = bound.level + bound.slope * bound.dist_sq_ref
        if 1 <= n <= n_pts - 2:
            cx, cy = q_cols(n)
            prog.quad_upper(
                [(cx, 2.0 * bound.slope, gbs_xy[m][0]), (cy, 2.0 * bound.slope, gbs_xy[m][1])],
                [pi_off + n],
                [-1.0],
                cap,
            )
        else:
            z = float(np.sum((ref[n] - gbs_xy[m]) ** 2))
            prog.lin_ineq([pi_off + n], [1.0], bound(z))

    # zone membership and keep-out supporting lines per free waypoint
    for n in range(1, n_pts - 1):
        cx, cy = q_cols(n)
        adjacent = {int(state.segment_gbs[n - 1]), int(state.segment_gbs[n])}
        seen = set()
        for m in adjacent:
            reg = state.regions[m]
            key = ("noma", m)
            if key not in seen:
                seen.add(key)
                rows = [
                    (np.array([cx]), np.array([1.0]), -reg.noma_disk.center[0]),
                    (np.array([cy]), np.array([1.0]), -reg.noma_disk.center[1]),
                ]
                prog.norm_bound(rows, [], [], reg.noma_disk.radius)
            for ex in reg.exclusions:
                ekey = (ex.center[0], ex.center[1], ex.radius)
                if ekey in seen:
                    continue
                seen.add(ekey)
                tb = taylor_distance_lower_bound(ref[n], ex.center)
                prog.lin_ineq([cx, cy], -tb.grad, tb.const - ex.radius**2)

    # upload targets through the half-square coupling
    for m in range(m_count):
        if state.required_bits[m] <= 0.0:
            continue
        segs = np.flatnonzero(state.segment_gbs == m)
        slopes = state.durations[segs] + state.pi[segs]
        terms = [(int(t_off + n), 1.0, 0.0) for n in segs]
        terms += [(int(pi_off + n), 1.0, 0.0) for n in segs]
        d_cols = np.concatenate([t_off + segs, pi_off + segs])
        d_vals = np.concatenate([slopes, slopes])
        e = -0.5 * float(np.sum(slopes**2)) - state.required_bits[m] / w_hz
        prog.quad_upper(terms, d_cols, d_vals, e)

    report = prog.solve(params.feas_tol, params.opt_tol)
    new_obj = report.objective
    old_obj = state.objective()
    if new_obj > old_obj + 1e-9 * max(1.0, old_obj):
        raise SolverFailure(
            f"refinement pass worsened the objective ({old_obj:.6f} -> {new_obj:.6f})"
        )

    wps = state.waypoints.copy()
    wps[1:-1] = report.value("q").reshape(-1, 2)
    durations = np.maximum(report.value("t"), 0.0)
    pi = np.array(
        [uav_rate(state.consts, wps[n], int(state.segment_gbs[n])) for n in range(n_seg)]
    )
    return ScaState(
        iteration=state.iteration + 1,
        waypoints=wps,
        durations=durations,
        segment_gbs=state.segment_gbs,
        pi=pi,
        objective_history=state.objective_history + [float(durations.sum())],
        regions=state.regions,
        consts=state.consts,
        required_bits=state.required_bits,
        delta=state.delta,
        v_max=state.v_max,
        diagnostics=list(state.diagnostics),
    )


def plan_sca(
    scn: Scenario,
    init: PlanResult,
    params: PlannerParams | None = None,
    consts: LinkConstants | None = None,
    regions: list[FeasibleRegion] | None = None,
    scheme: str = "sca",
) -> PlanResult:
    """Refine a feasible plan until the fractional time gain drops below eps."""
    params = params or PlannerParams()
    consts = consts or derive_link_constants(scn)
    if regions is None:
        regions, _ = prepare_regions(scn, consts, RegionVariant.STANDARD, params)

    state = discretize_problem(scn, consts, regions, init, params)
    for _ in range(params.max_sca_iter):
        prev = state.objective()
        try:
            state = sca_iterate(state, params)
        except SolverFailure as exc:
            state.diagnostics.append(str(exc))
            break
        frac = (prev - state.objective()) / max(prev, 1e-12)
        if frac < params.eps_sca:
            break

    path = DiscretePath(
        waypoints=state.waypoints, durations=state.durations, segment_gbs=state.segment_gbs
    )
    delivered = np.zeros(scn.n_gbs)
    w_hz = consts.bandwidth_hz
    for n in range(path.n_segments):
        m = int(path.segment_gbs[n])
        delivered[m] += path.durations[n] * w_hz * uav_rate(consts, path.waypoints[n], m)
    order = [int(path.segment_gbs[0])]
    for g in path.segment_gbs[1:]:
        if int(g) != order[-1]:
            order.append(int(g))
    return PlanResult(
        scheme=scheme,
        path=path,
        association_order=order,
        hover=[],
        total_time_s=path.total_time(),
        delivered_bits=delivered,
        metadata={
            "iterations": state.iteration,
            "objective_history": [float(v) for v in state.objective_history],
            "diagnostics": state.diagnostics,
            "init_scheme": init.scheme,
            "hover_points": init.metadata.get("hover_points"),
        },
    )


# ---------------------------------------------------------------------------
# Benchmark schemes
# ---------------------------------------------------------------------------


def oma_link_constants(
    consts: LinkConstants, fraction: float = 0.5, isolated_subband: bool = False
) -> LinkConstants:
    """Orthogonal-access link budget on a band fraction.

    By default the UAV's SINR keeps the same denominator as the shared-band
    case and only the bandwidth shrinks; this reproduces the benchmark's
    doubled time-per-bit at hover. With ``isolated_subband`` the same-cell
    user's power is removed and cross-cell interference plus noise scale
    with the fraction, modeling a fully orthogonal slice.
    """
    if isolated_subband:
        eta = consts.beta0 / (fraction * consts.intercell_plus_noise_watts)
    else:
        eta = consts.eta
    return replace(consts, eta=eta, bandwidth_hz=fraction * consts.bandwidth_hz)


def free_space_regions(scn: Scenario, consts: LinkConstants) -> list[FeasibleRegion]:
    """Zone-free planning world: one effectively unbounded disk per GBS."""
    cap = default_cap_radius(scn)
    pts = np.concatenate([consts.gbs_xy, [scn.uav.start], [scn.uav.goal]], axis=0)
    pad = 25.0
    window = (
        float(pts[:, 0].min() - pad),
        float(pts[:, 0].max() + pad),
        float(pts[:, 1].min() - pad),
        float(pts[:, 1].max() + pad),
    )
    return [
        FeasibleRegion(
            owner=m,
            noma_disk=Disk(center=consts.gbs_xy[m].copy(), radius=cap),
            exclusions=(),
            variant=RegionVariant.STANDARD,
            raster_window=window,
        )
        for m in range(scn.n_gbs)
    ]


def plan_multi_sic(scn: Scenario, params: PlannerParams | None = None) -> PlanResult:
    """Full pipeline with interference cancelled at non-associated GBSs too.

    Keep-out disks vanish (their condition is absorbed by the power-ordering
    disks), so planning runs on the power-ordering disks alone.
    """
    params = params or PlannerParams()
    consts = derive_link_constants(scn)
    regions, notes = prepare_regions(scn, consts, RegionVariant.MULTI_SIC, params)
    fhf = plan_fhf(scn, params, consts=consts, regions=regions, scheme="multi_sic_fhf")
    plan = plan_sca(scn, fhf, params, consts=consts, regions=regions, scheme="multi_sic")
    plan.metadata["region_notes"] = notes
    plan.metadata["fhf_total_time_s"] = fhf.total_time_s
    return plan


def plan_hover_only(scn: Scenario, params: PlannerParams | None = None) -> PlanResult:
    """Straight-line tour of the hover points; uploads happen only while hovering."""
    params = params or PlannerParams()
    consts = derive_link_constants(scn)
    regions, _ = prepare_regions(scn, consts, RegionVariant.STANDARD, params)
    hover_pts = [
        hover_location(regions, m, params.angular_step_deg, params.refine_tol_m)
        for m in range(scn.n_gbs)
    ]
    points = [np.asarray(scn.uav.start, float), np.asarray(scn.uav.goal, float)] + hover_pts
    n = len(points)
    dist = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            dist[i, j] = float(np.linalg.norm(points[i] - points[j]))
    order = tsp_with_dummy(dist, START, GOAL, params.exact_tsp_limit)

    delta = params.delta_for(scn)
    wps = [points[order[0]]]
    gbs: list[int] = []
    first_visit: dict[int, int] = {}
    for u, v in zip(order[:-1], order[1:]):
        a, b = points[u], points[v]
        steps = max(int(math.ceil(np.linalg.norm(b - a) / delta)), 1)
        seg_pts = np.linspace(a, b, steps + 1)[1:]
        # Legs toward a hover point belong to that GBS; the leg into the
        # goal keeps the GBS it just left.
        owner = (v - 2) if v >= 2 else (u - 2)
        for p in seg_pts:
            wps.append(p)
            gbs.append(owner)
        if v >= 2:
            first_visit[v - 2] = len(wps) - 1
    waypoints = np.array(wps)
    lengths = np.linalg.norm(np.diff(waypoints, axis=0), axis=1)
    path = DiscretePath(
        waypoints=waypoints,
        durations=lengths / scn.uav.max_speed_m_s,
        segment_gbs=np.array(gbs, dtype=int),
    )

    w_hz = consts.bandwidth_hz
    hover = []
    delivered = np.zeros(scn.n_gbs)
    for m in range(scn.n_gbs):
        rate = w_hz * uav_rate(consts, hover_pts[m], m)
        t_h = scn.mission.required_bits[m] / rate
        hover.append(HoverSlot(gbs=m, location=hover_pts[m], duration_s=t_h))
        delivered[m] = t_h * rate
    total = path.total_time() + sum(h.duration_s for h in hover)
    order_gbs = [int(path.segment_gbs[0])]
    for g in path.segment_gbs[1:]:
        if int(g) != order_gbs[-1]:
            order_gbs.append(int(g))
    return PlanResult(
        scheme="hover_only",
        path=path,
        association_order=order_gbs,
        hover=hover,
        total_time_s=total,
        delivered_bits=delivered,
        metadata={
            "hover_waypoint_index": first_visit,
            "hover_points": [[float(c) for c in p] for p in hover_pts],
            "audit_exempt": ["zones", "qos"],
            "tsp_order": [int(v) for v in order],
        },
    )


def plan_oma(scn: Scenario, params: PlannerParams | None = None) -> PlanResult:
    """Orthogonal-access benchmark: halve the band, drop every zone constraint."""
    params = params or PlannerParams()
    consts = oma_link_constants(
        derive_link_constants(scn), params.oma_bandwidth_fraction, params.oma_isolated_subband
    )
    regions = free_space_regions(scn, consts)
    fhf = plan_fhf(scn, params, consts=consts, regions=regions, scheme="oma_fhf")
    fhf.metadata["audit_exempt"] = ["zones", "qos"]
    plan = plan_sca(scn, fhf, params, consts=consts, regions=regions, scheme="oma")
    plan.metadata["audit_exempt"] = ["zones", "qos"]
    plan.metadata["bandwidth_fraction"] = params.oma_bandwidth_fraction
    plan.metadata["fhf_total_time_s"] = fhf.total_time_s
    return plan


def plan_with_method(scn: Scenario, method: str, params: PlannerParams | None = None) -> PlanResult:
    """Dispatch a planning run by method name."""
    params = params or PlannerParams()
    method = method.replace("-", "_")
    if method == "fhf":
        return plan_fhf(scn, params)
    if method == "sca":
        consts = derive_link_constants(scn)
        regions, _ = prepare_regions(scn, consts, RegionVariant.STANDARD, params)
        fhf = plan_fhf(scn, params, consts=consts, regions=regions)
        plan = plan_sca(scn, fhf, params, consts=consts, regions=regions)
        plan.metadata["fhf_total_time_s"] = fhf.total_time_s
        return plan
    if method == "multi_sic":
        return plan_multi_sic(scn, params)
    if method == "hover_only":
        return plan_hover_only(scn, params)
    if method == "oma":
        return plan_oma(scn, params)
    raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")


# ---------------------------------------------------------------------------
# Parameter sweeps
# ---------------------------------------------------------------------------


@dataclass
class SweepResult:
    axis: str  # "u" (required Mbits) or "theta" (bit/s/Hz)
    values: list[float]
    cells: list[dict]  # {value, scheme, total_time_s | None, error | None}
    scenario_digest: str

    def to_dict(self) -> dict:
        return {
            "axis": self.axis,
            "values": self.values,
            "cells": self.cells,
            "scenario_digest": self.scenario_digest,
        }


def run_sweep(
    scn: Scenario,
    axis: str,
    values: list[float],
    methods: list[str],
    params: PlannerParams | None = None,
) -> SweepResult:
    """Re-plan across an axis of upload targets or rate targets.

    Rate-target sweeps rebuild the protected zones per value; failures are
    recorded per cell and do not stop the sweep.
    """
    from .scenario import scenario_digest, with_uniform_bits, with_uniform_qos

    params = params or PlannerParams()
    if axis not in ("u", "theta"):
        raise ValueError("axis must be 'u' or 'theta'")
    values = sorted(float(v) for v in values)
    cells: list[dict] = []
    for v in values:
        if axis == "u":
            scn_v = with_uniform_bits(scn, v * 1e6)
        else:
            scn_v = with_uniform_qos(scn, v)
        for method in methods:
            cell = {"value": v, "scheme": method, "total_time_s": None, "error": None}
            try:
                plan = plan_with_method(scn_v, method, params)
                cell["total_time_s"] = float(plan.total_time_s)
            except Exception as exc:  # noqa: BLE001 - recorded, sweep continues
                cell["error"] = f"{type(exc).__name__}: {exc}"
            cells.append(cell)
    return SweepResult(axis=axis, values=values, cells=cells, scenario_digest=scenario_digest(scn))
