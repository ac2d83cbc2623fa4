"""Fly-hover-fly mission planner.

Builds a complete plan in five stages: best hovering location inside each
feasible region, pairwise shortest paths between hover points by iterating
a convexified path problem, all-pairs closure of the resulting weighted
graph, an exact open-route TSP via a zero-cost dummy node, and finally time
allocation in which the UAV flies every segment at top speed and hovers at
the rate-maximizing points until each upload target is met.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .conic import ConeProgram, taylor_distance_lower_bound
from .errors import EmptyRegion, NoWitness, PlanInfeasible, SolverFailure
from .feasibility import GOAL, START, GraphKind, RegionGraph, build_g0, check_feasibility, region_vertex
from .scenario import LinkConstants, Scenario, derive_link_constants, uav_rate
from .zones import (
    Disk,
    FeasibleRegion,
    RegionVariant,
    build_regions,
    is_pathwise_connected,
    largest_component,
    region_contains,
    region_contains_many,
)


@dataclass(frozen=True)
class PlannerParams:
    """Shared knobs for both planning stages.

    ``delta_m`` defaults to a tenth of a second of flight at top speed so
    the per-segment rate approximation stays tight.
    """

    delta_m: float | None = None
    ns: int = 100
    eps_path: float = 1e-4
    eps_sca: float = 1e-3
    max_sca_iter: int = 50
    max_path_iter: int = 40
    resolution_m: float = 1.0
    feas_tol: float = 1e-7
    opt_tol: float = 1e-7
    angular_step_deg: float = 0.5
    refine_tol_m: float = 1e-3
    exact_tsp_limit: int = 15
    oma_bandwidth_fraction: float = 0.5
    oma_isolated_subband: bool = False

    def delta_for(self, scn: Scenario) -> float:
        return self.delta_m if self.delta_m is not None else 0.1 * scn.uav.max_speed_m_s


@dataclass
class DiscretePath:
    """Waypoint chain with per-segment durations and serving-GBS flags."""

    waypoints: np.ndarray  # (N+1, 2)
    durations: np.ndarray  # (N,)
    segment_gbs: np.ndarray  # (N,) int

    @property
    def n_segments(self) -> int:
        return len(self.durations)

    def lengths(self) -> np.ndarray:
        return np.linalg.norm(np.diff(self.waypoints, axis=0), axis=1)

    def total_length(self) -> float:
        return float(self.lengths().sum())

    def total_time(self) -> float:
        return float(self.durations.sum())

    @property
    def handover_indices(self) -> list[int]:
        flips = np.flatnonzero(np.diff(self.segment_gbs) != 0)
        return [int(i) + 1 for i in flips]

    def assoc_matrix(self, m_count: int) -> np.ndarray:
        a = np.zeros((m_count, self.n_segments), dtype=int)
        a[self.segment_gbs, np.arange(self.n_segments)] = 1
        return a


@dataclass
class HoverSlot:
    gbs: int
    location: np.ndarray
    duration_s: float


@dataclass
class PlanResult:
    scheme: str
    path: DiscretePath
    association_order: list[int]
    hover: list[HoverSlot]
    total_time_s: float
    delivered_bits: np.ndarray
    metadata: dict = field(default_factory=dict)

    @property
    def fly_time_s(self) -> float:
        return self.path.total_time()

    @property
    def hover_time_s(self) -> float:
        return float(sum(h.duration_s for h in self.hover))

    def handover_points(self) -> list[dict]:
        out = []
        for idx in self.path.handover_indices:
            out.append(
                {
                    "waypoint": idx,
                    "location": [float(v) for v in self.path.waypoints[idx]],
                    "from_gbs": int(self.path.segment_gbs[idx - 1]),
                    "to_gbs": int(self.path.segment_gbs[idx]),
                }
            )
        return out

    def to_dict(self) -> dict:
        meta = {k: v for k, v in self.metadata.items() if _json_safe(v)}
        return {
            "scheme": self.scheme,
            "total_time_s": self.total_time_s,
            "fly_time_s": self.fly_time_s,
            "hover_time_s": self.hover_time_s,
            "association_order": [int(m) for m in self.association_order],
            "hover": [
                {
                    "gbs": int(h.gbs),
                    "location": [float(v) for v in h.location],
                    "duration_s": float(h.duration_s),
                }
                for h in self.hover
            ],
            "handovers": self.handover_points(),
            "delivered_bits": [float(v) for v in self.delivered_bits],
            "n_segments": self.path.n_segments,
            "metadata": meta,
        }


def _json_safe(v) -> bool:
    return isinstance(v, (bool, int, float, str, list, dict, type(None)))


# ---------------------------------------------------------------------------
# Hovering locations
# ---------------------------------------------------------------------------


def hover_location(
    regions: list[FeasibleRegion],
    m: int,
    angular_step_deg: float = 0.5,
    refine_tol_m: float = 1e-3,
) -> np.ndarray:
    """Feasible point of region ``m`` closest to its own GBS.

    Returns the GBS position itself when feasible; otherwise scans every
    protected circle at a fixed angular step, keeps feasible samples, and
    refines the best arc locally. Ties break toward the earlier exclusion
    and the smaller angle.
    """
    region = regions[m]
    center = region.noma_disk.center
    if region_contains(region, center):
        return center.copy()

    best_pt = None
    best_obj = np.inf
    n_steps = max(int(round(360.0 / angular_step_deg)), 8)
    angles = np.linspace(0.0, 2.0 * math.pi, n_steps, endpoint=False)
    for ex in region.exclusions:
        pts = ex.center + ex.radius * np.stack([np.cos(angles), np.sin(angles)], axis=1)
        ok = region_contains_many(region, pts)
        if not ok.any():
            continue
        obj = np.where(ok, np.linalg.norm(pts - center, axis=1), np.inf)
        k = int(np.argmin(obj))
        phi, pt, val = _refine_on_circle(region, center, ex, angles[k], math.radians(angular_step_deg), refine_tol_m)
        if val < best_obj - 1e-12:
            best_obj, best_pt = val, pt

    if best_pt is None:
        best_pt = _nearest_raster_point(region, center)
        if best_pt is None:
            raise EmptyRegion(f"region of GBS {m} has no feasible point")
    return best_pt


def _refine_on_circle(region, center, ex, phi0, half_width, tol_m):
    """Shrinking angular sweep around the incumbent sample on one circle.

    Improvements below a nanometer are treated as float noise so exact ties
    (e.g. a concentric keep-out) keep the incumbent angle.
    """
    phi = phi0
    pt0 = ex.center + ex.radius * np.array([math.cos(phi0), math.sin(phi0)])
    if region_contains(region, pt0):
        best_val, best_pt = float(np.linalg.norm(pt0 - center)), pt0
    else:
        best_val, best_pt = np.inf, None
    h = half_width
    while True:
        cand = phi + np.linspace(-h, h, 9)
        pts = ex.center + ex.radius * np.stack([np.cos(cand), np.sin(cand)], axis=1)
        ok = region_contains_many(region, pts)
        obj = np.where(ok, np.linalg.norm(pts - center, axis=1), np.inf)
        k = int(np.argmin(obj))
        if obj[k] < best_val - 1e-9:
            best_val = float(obj[k])
            best_pt = pts[k]
            phi = float(cand[k])
        if h * max(ex.radius, 1.0) < tol_m / 4.0:
            break
        h *= 0.35
    return phi, best_pt, best_val


def _nearest_raster_point(region, target, pitch: float = 1.0):
    box = region.noma_disk
    xs = np.arange(box.center[0] - box.radius, box.center[0] + box.radius + pitch, pitch)
    ys = np.arange(box.center[1] - box.radius, box.center[1] + box.radius + pitch, pitch)
    if len(xs) * len(ys) > 16_000_000:
        return None
    gx, gy = np.meshgrid(xs, ys)
    pts = np.stack([gx, gy], axis=-1).reshape(-1, 2)
    ok = region_contains_many(region, pts)
    if not ok.any():
        return None
    pts = pts[ok]
    return pts[int(np.argmin(np.linalg.norm(pts - target, axis=1)))].copy()


# ---------------------------------------------------------------------------
# Pairwise shortest paths
# ---------------------------------------------------------------------------


def pairwise_shortest_path(
    regions: list[FeasibleRegion],
    i: int,
    j: int,
    q_start: np.ndarray,
    q_end: np.ndarray,
    witness: np.ndarray | None,
    params: PlannerParams,
    v_max: float,
    delta: float,
) -> tuple[float, DiscretePath]:
    """Shortest in-region path between two points, with a mid-leg handover.

    The first half of the leg stays in region ``i`` and the second half in
    region ``j``; the middle waypoint is the handover and must sit in both.
    Each pass linearizes the protected-disk keep-out constraints around the
    incumbent polyline and solves the resulting cone program, stopping when
    the length gain drops below the configured fraction.
    """
    q_start = np.asarray(q_start, dtype=float)
    q_end = np.asarray(q_end, dtype=float)
    if i == j:
        witness = None
    elif witness is None:
        raise NoWitness(f"no stored witness for regions {i} and {j}")

    direct = float(np.linalg.norm(q_end - q_start))
    if i == j and direct < 1e-9:
        path = DiscretePath(
            waypoints=np.stack([q_start, q_end]),
            durations=np.zeros(1),
            segment_gbs=np.array([i]),
        )
        return 0.0, path

    ref, owners = _initial_polyline(regions, i, j, q_start, q_end, witness, params, delta)
    prev_len = _polyline_length(ref)
    for _ in range(params.max_path_iter):
        new = _solve_path_step(regions, ref, owners, params, delta)
        new_len = _polyline_length(new)
        gain = (prev_len - new_len) / max(prev_len, 1e-12)
        ref = new
        if gain < params.eps_path:
            break
        prev_len = new_len

    n_seg = len(ref) - 1
    seg_gbs = np.empty(n_seg, dtype=int)
    half = n_seg // 2
    seg_gbs[:half] = i
    seg_gbs[half:] = j
    lengths = np.linalg.norm(np.diff(ref, axis=0), axis=1)
    path = DiscretePath(waypoints=ref, durations=lengths / v_max, segment_gbs=seg_gbs)
    return float(lengths.sum()), path


def _initial_polyline(regions, i, j, q_start, q_end, witness, params, delta):
    """Feasible starting polyline through the witness.

    Straight half-legs are first routed around every keep-out disk (runs of
    in-disk waypoints move to the shorter boundary arc), then each half is
    resampled to a uniform spacing under the step limit, and finally any
    residual chord dip is projected off the boundary.
    """
    if i == j:
        mid = 0.5 * (q_start + q_end)
        halves = [(q_start, mid), (mid, q_end)]
    else:
        halves = [(q_start, witness), (witness, q_end)]

    routed = []
    for (a, b), rid in zip(halves, (i, j)):
        n0 = max(16, int(math.ceil(np.linalg.norm(b - a) / delta)) + 1)
        pts = np.linspace(a, b, n0 + 1)
        routed.append(_route_off_keepouts(regions[rid], pts))

    lengths = [_polyline_length(p) for p in routed]
    ns = max(params.ns, int(math.ceil(1.25 * max(max(lengths), 1e-9) / delta)) + 1)
    first = _resample_polyline(routed[0], ns)
    second = _resample_polyline(routed[1], ns)
    pts = np.concatenate([first, second[1:]], axis=0)

    n_pts = len(pts)
    half = (n_pts - 1) // 2
    owners = []
    for n in range(n_pts):
        own = set()
        if n <= half:
            own.add(i)
        if n >= half:
            own.add(j)
        owners.append(sorted(own))

    for n in range(1, n_pts - 1):
        if not all(region_contains(regions[rid], pts[n]) for rid in owners[n]):
            pts[n] = _project_feasible(regions, owners[n], pts[n], params.resolution_m)
    return pts, owners


def _merge_overlapping_disks(disks):
    """Replace overlapping disks by their smallest covering disk.

    Used only to seed the path initializer: routing around disjoint covers
    cannot zig-zag between two overlapping keep-outs.
    """
    disks = [(np.asarray(c, float), float(r)) for c, r in disks]
    changed = True
    while changed and len(disks) > 1:
        changed = False
        for a in range(len(disks)):
            for b in range(a + 1, len(disks)):
                (c1, r1), (c2, r2) = disks[a], disks[b]
                d = float(np.linalg.norm(c2 - c1))
                if d >= r1 + r2:
                    continue
                if d + r2 <= r1:
                    cover = (c1, r1)
                elif d + r1 <= r2:
                    cover = (c2, r2)
                else:
                    r = (d + r1 + r2) / 2.0
                    center = c1 + (r - r1) * (c2 - c1) / d
                    cover = (center, r)
                disks[a] = cover
                del disks[b]
                changed = True
                break
            if changed:
                break
    return disks


def _route_off_keepouts(region, pts):
    """Move runs of in-disk waypoints to the disk boundary's shorter arc.

    Overlapping keep-outs are first merged into covering disks so a single
    arc detour clears them together; the replacement radius carries enough
    margin that chords between the arc samples stay outside the disk.
    """
    pts = pts.copy()
    covers = _merge_overlapping_disks([(ex.center, ex.radius) for ex in region.exclusions])
    covers = [Disk(center=c, radius=r) for c, r in covers]
    for _ in range(12):
        moved = False
        for ex in covers:
            d = np.linalg.norm(pts - ex.center, axis=1)
            inside = d < ex.radius - 1e-12
            inside[0] = inside[-1] = False  # endpoints are feasible by contract
            n = 0
            while n < len(pts):
                if not inside[n]:
                    n += 1
                    continue
                a = n
                while n < len(pts) and inside[n]:
                    n += 1
                b = n - 1  # run [a, b] strictly inside
                phi_a = math.atan2(*(pts[a - 1] - ex.center)[::-1])
                phi_b = math.atan2(*(pts[b + 1] - ex.center)[::-1])
                span = math.remainder(phi_b - phi_a, 2.0 * math.pi)
                if abs(abs(span) - math.pi) < 1e-12:
                    span = math.pi  # antipodal tie: go counterclockwise
                count = b - a + 1
                arc_step = abs(span) * ex.radius / (count + 1)
                margin = 0.011 + arc_step**2 / (8.0 * ex.radius)
                for k in range(count):
                    phi = phi_a + span * (k + 1) / (count + 1)
                    pts[a + k] = ex.center + (ex.radius + margin) * np.array(
                        [math.cos(phi), math.sin(phi)]
                    )
                moved = True
        # keep everything inside the serving disk
        off = pts - region.noma_disk.center
        d = np.linalg.norm(off, axis=1)
        out = d > region.noma_disk.radius
        if out.any():
            scale = (region.noma_disk.radius - 1e-6) / d[out]
            pts[out] = region.noma_disk.center + off[out] * scale[:, None]
            moved = True
        if not moved:
            break
    return pts


def _resample_polyline(pts, n_segments):
    """Uniform arc-length resampling to a fixed segment count."""
    seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    if cum[-1] <= 1e-12:
        return np.repeat(pts[:1], n_segments + 1, axis=0)
    targets = np.linspace(0.0, cum[-1], n_segments + 1)
    x = np.interp(targets, cum, pts[:, 0])
    y = np.interp(targets, cum, pts[:, 1])
    out = np.stack([x, y], axis=1)
    out[0] = pts[0]
    out[-1] = pts[-1]
    return out


def _project_feasible(regions, owner_ids, q, pitch):
    """Push one waypoint out of keep-outs and back inside its serving disks."""
    q = q.copy()
    for _ in range(12):
        moved = False
        for rid in owner_ids:
            reg = regions[rid]
            for ex in reg.exclusions:
                off = q - ex.center
                dist = float(np.linalg.norm(off))
                if dist < ex.radius and dist > 1e-9:
                    q = ex.center + (ex.radius + 0.011) * off / dist
                    moved = True
            off = q - reg.noma_disk.center
            dist = float(np.linalg.norm(off))
            if dist > reg.noma_disk.radius:
                q = reg.noma_disk.center + (reg.noma_disk.radius - 1e-6) * off / dist
                moved = True
        if not moved:
            break
    if all(region_contains(regions[rid], q) for rid in owner_ids):
        return q
    snapped = _snap_to_regions(regions, owner_ids, q, pitch)
    if snapped is None:
        raise SolverFailure("could not seed a feasible waypoint for the path problem")
    return snapped


def _snap_to_regions(regions, owner_ids, q, pitch):
    reach = pitch * 4.0
    for _ in range(10):
        xs = np.arange(q[0] - reach, q[0] + reach + pitch, pitch)
        ys = np.arange(q[1] - reach, q[1] + reach + pitch, pitch)
        gx, gy = np.meshgrid(xs, ys)
        pts = np.stack([gx, gy], axis=-1).reshape(-1, 2)
        ok = np.ones(len(pts), dtype=bool)
        for rid in owner_ids:
            ok &= region_contains_many(regions[rid], pts)
        if ok.any():
            pts = pts[ok]
            return pts[int(np.argmin(np.linalg.norm(pts - q, axis=1)))].copy()
        reach *= 2.0
    return None


def _polyline_length(pts) -> float:
    return float(np.linalg.norm(np.diff(pts, axis=0), axis=1).sum())


def _solve_path_step(regions, ref, owners, params, delta):
    """One convexified pass: minimize length with linearized keep-outs."""
    n_pts = len(ref)
    n_seg = n_pts - 1
    prog = ConeProgram()
    q_off = prog.add_var("q", 2 * (n_pts - 2))
    s_off = prog.add_var("s", n_seg)
    prog.add_objective(s_off + np.arange(n_seg), np.ones(n_seg))

    def q_cols(n):
        return np.array([q_off + 2 * (n - 1), q_off + 2 * (n - 1) + 1])

    for n in range(n_seg):
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
        prog.norm_bound(rows, [s_off + n], [1.0], 0.0)
        prog.lin_ineq([s_off + n], [1.0], delta)

    for n in range(1, n_pts - 1):
        cols = q_cols(n)
        seen = set()
        for rid in owners[n]:
            reg = regions[rid]
            key = (reg.noma_disk.center[0], reg.noma_disk.center[1], reg.noma_disk.radius)
            if key not in seen and np.isfinite(reg.noma_disk.radius):
                seen.add(key)
                rows = [
                    (np.array([cols[0]]), np.array([1.0]), -reg.noma_disk.center[0]),
                    (np.array([cols[1]]), np.array([1.0]), -reg.noma_disk.center[1]),
                ]
                prog.norm_bound(rows, [], [], reg.noma_disk.radius)
            for ex in reg.exclusions:
                key = (ex.center[0], ex.center[1], ex.radius)
                if key in seen:
                    continue
                seen.add(key)
                bound = taylor_distance_lower_bound(ref[n], ex.center)
                # bound.const + grad.q >= r^2  ->  -grad.q <= const - r^2
                prog.lin_ineq(cols, -bound.grad, bound.const - ex.radius**2)

    report = prog.solve(params.feas_tol, params.opt_tol)
    new = ref.copy()
    new[1:-1] = report.value("q").reshape(-1, 2)
    return new


# ---------------------------------------------------------------------------
# Weighted graph, all-pairs closure, open-route TSP
# ---------------------------------------------------------------------------


def build_g1(
    scn: Scenario,
    g0: RegionGraph,
    regions: list[FeasibleRegion],
    hover_pts: list[np.ndarray],
    params: PlannerParams,
) -> tuple[RegionGraph, dict]:
    """Weight every region-graph edge with its shortest-path length."""
    n = g0.n_vertices
    weights = np.full((n, n), np.inf)
    np.fill_diagonal(weights, 0.0)
    leg_paths: dict[tuple[int, int], DiscretePath] = {}
    v_max = scn.uav.max_speed_m_s
    delta = params.delta_for(scn)

    def vertex_point(v):
        if v == START:
            return np.asarray(scn.uav.start, dtype=float)
        if v == GOAL:
            return np.asarray(scn.uav.goal, dtype=float)
        return hover_pts[v - 2]

    for u in range(n):
        for v in range(u + 1, n):
            if not g0.adjacency[u, v]:
                continue
            if u == START and v == GOAL:
                continue
            ri = (u - 2) if u >= 2 else (v - 2)
            rj = (v - 2) if v >= 2 else (u - 2)
            if u < 2:
                i = j = v - 2
                witness = None
            else:
                i, j = u - 2, v - 2
                witness = g0.witness(u, v)
            length, path = pairwise_shortest_path(
                regions, i, j, vertex_point(u), vertex_point(v), witness, params, v_max, delta
            )
            weights[u, v] = weights[v, u] = length
            leg_paths[(u, v)] = path

    g1 = RegionGraph(
        kind=GraphKind.G1_WEIGHTED,
        n_regions=g0.n_regions,
        adjacency=np.isfinite(weights) & ~np.eye(n, dtype=bool),
        weights=weights,
        edge_witness=dict(g0.edge_witness),
    )
    return g1, leg_paths


def floyd_all_pairs(weights: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """All-pairs shortest distances plus a next-hop matrix for routes."""
    n = weights.shape[0]
    dist = weights.astype(float).copy()
    np.fill_diagonal(dist, 0.0)
    nxt = np.where(np.isfinite(dist), np.arange(n)[None, :], -1)
    np.fill_diagonal(nxt, np.arange(n))
    for k in range(n):
        alt = dist[:, k][:, None] + dist[k, :][None, :]
        better = alt < dist - 1e-12
        dist = np.where(better, alt, dist)
        nxt = np.where(better, np.broadcast_to(nxt[:, k][:, None], nxt.shape), nxt)
    return dist, nxt


def floyd_route(nxt: np.ndarray, u: int, v: int) -> list[int]:
    if nxt[u, v] < 0:
        return []
    route = [u]
    while u != v:
        u = int(nxt[u, v])
        route.append(u)
    return route


def tsp_with_dummy(
    dist: np.ndarray, start: int = START, end: int = GOAL, exact_limit: int = 15
) -> list[int]:
    """Open route start -> ... -> end visiting every vertex exactly once.

    A dummy city at zero cost from both endpoints turns the open requirement
    into a standard closed tour. Exact bitmask dynamic programming up to the
    configured size; nearest-neighbor with 2-opt beyond it. Cost ties resolve
    to the lexicographically smallest vertex sequence.
    """
    n = dist.shape[0]
    big = np.full((n + 1, n + 1), np.inf)
    big[:n, :n] = dist
    np.fill_diagonal(big, 0.0)
    big[n, start] = big[start, n] = 0.0
    big[n, end] = big[end, n] = 0.0

    if n - 2 <= exact_limit:
        order = _held_karp_from(big, n)
    else:
        order = _nn_two_opt(big, n)
    if order[0] == end:
        order = order[::-1]
    return order


def _held_karp_from(w: np.ndarray, source: int) -> list[int]:
    """Exact closed tour anchored at ``source``; lexicographic tie-break.

    ``dp[mask, b]`` is the cheapest path from the source through exactly the
    vertex set ``mask`` ending at ``others[b]``. Because the weights are
    symmetric, the same entry read backwards is the cheapest way to leave
    ``others[b]``, sweep ``mask``'s remaining vertices, and close at the
    source, which lets a forward greedy recover the lexicographically
    smallest optimal tour.
    """
    n = w.shape[0]
    others = [v for v in range(n) if v != source]
    k = len(others)
    full = (1 << k) - 1
    dp = np.full((full + 1, k), np.inf)
    for a in range(k):
        dp[1 << a, a] = w[source, others[a]]
    sub_w = w[np.ix_(others, others)]
    for mask in range(1, full + 1):
        row = dp[mask]
        active = np.flatnonzero(np.isfinite(row))
        if active.size == 0:
            continue
        cand = np.min(row[active][:, None] + sub_w[active, :], axis=0)
        free = (~mask) & full
        b = 0
        while free:
            if free & 1:
                nmask = mask | (1 << b)
                if cand[b] < dp[nmask, b]:
                    dp[nmask, b] = cand[b]
            free >>= 1
            b += 1

    closing = dp[full, :] + np.array([w[others[b], source] for b in range(k)])
    best = float(np.min(closing))

    seq: list[int] = []
    remaining = full
    cur = source
    cost = 0.0
    tol = 1e-6 * max(1.0, abs(best))
    for _ in range(k):
        chosen = None
        fallback = (np.inf, -1)
        for b in range(k):
            if not (remaining >> b) & 1:
                continue
            total = cost + w[cur, others[b]] + dp[remaining, b]
            if total <= best + tol:
                chosen = b
                break
            if total < fallback[0]:
                fallback = (total, b)
        if chosen is None:  # numerical safety net
            chosen = fallback[1]
        cost += w[cur, others[chosen]]
        cur = others[chosen]
        seq.append(cur)
        remaining &= ~(1 << chosen)
    return seq


def _nn_two_opt(w: np.ndarray, source: int) -> list[int]:
    n = w.shape[0]
    tour = [source]
    left = set(range(n)) - {source}
    cur = source
    while left:
        nxt = min(left, key=lambda v: (w[cur, v], v))
        tour.append(nxt)
        left.remove(nxt)
        cur = nxt
    improved = True
    passes = 0
    while improved and passes < 200:
        improved = False
        passes += 1
        for a in range(1, n - 1):
            for b in range(a + 1, n):
                i0, i1 = tour[a - 1], tour[a]
                j0, j1 = tour[b], tour[(b + 1) % n]
                # Sum comparison keeps +inf edges out of subtraction.
                if w[i0, j0] + w[i1, j1] < w[i0, i1] + w[j0, j1] - 1e-9:
                    tour[a : b + 1] = reversed(tour[a : b + 1])
                    improved = True
    return tour[1:]


# ---------------------------------------------------------------------------
# Assembly: full path, time allocation, the complete planner
# ---------------------------------------------------------------------------


def reconstruct_full_path(
    order: list[int],
    nxt: np.ndarray,
    leg_paths: dict[tuple[int, int], DiscretePath],
    v_max: float,
) -> tuple[DiscretePath, dict[int, int]]:
    """Stitch the visiting order back into one waypoint chain.

    Expands all-pairs shortcuts through intermediate vertices, reuses the
    stored leg geometry (reversed when traversed backwards), and records the
    waypoint index of each vertex's first visit for hover bookkeeping.
    """
    vertex_seq = [order[0]]
    for u, v in zip(order[:-1], order[1:]):
        route = floyd_route(nxt, u, v)
        vertex_seq.extend(route[1:])

    waypoints = None
    seg_gbs: list[np.ndarray] = []
    first_visit: dict[int, int] = {vertex_seq[0]: 0}
    for u, v in zip(vertex_seq[:-1], vertex_seq[1:]):
        key = (min(u, v), max(u, v))
        leg = leg_paths[key]
        wps, gbs = leg.waypoints, leg.segment_gbs
        if u > v:  # stored direction is low->high; flip for this traversal
            wps = wps[::-1]
            gbs = gbs[::-1]
        if waypoints is None:
            waypoints = wps.copy()
        else:
            waypoints = np.concatenate([waypoints, wps[1:]], axis=0)
        seg_gbs.append(gbs)
        first_visit.setdefault(v, len(waypoints) - 1)

    segment_gbs = np.concatenate(seg_gbs)
    lengths = np.linalg.norm(np.diff(waypoints, axis=0), axis=1)
    path = DiscretePath(waypoints=waypoints, durations=lengths / v_max, segment_gbs=segment_gbs)
    return path, first_visit


def allocate_time(
    scn: Scenario,
    consts: LinkConstants,
    path: DiscretePath,
    hover_pts: list[np.ndarray],
    hover_waypoint: dict[int, int],
    scheme: str = "fhf",
) -> PlanResult:
    """Fly-at-top-speed time allocation with per-GBS hover top-ups.

    Per-segment upload uses the rate at the segment's first waypoint; any
    shortfall against the target is served by hovering at the rate-best
    point of the owning region.
    """
    w_hz = consts.bandwidth_hz
    required = scn.mission.required_bits
    m_count = scn.n_gbs
    fly_bits = np.zeros(m_count)
    for n in range(path.n_segments):
        m = int(path.segment_gbs[n])
        rate = uav_rate(consts, path.waypoints[n], m)
        fly_bits[m] += path.durations[n] * w_hz * rate

    hover = []
    delivered = fly_bits.copy()
    for m in range(m_count):
        hover_rate = w_hz * uav_rate(consts, hover_pts[m], m)
        t_h = max(required[m] - fly_bits[m], 0.0) / hover_rate
        hover.append(HoverSlot(gbs=m, location=np.asarray(hover_pts[m], dtype=float), duration_s=t_h))
        delivered[m] += t_h * hover_rate

    total = path.total_time() + sum(h.duration_s for h in hover)
    order = [int(path.segment_gbs[0])]
    for g in path.segment_gbs[1:]:
        if int(g) != order[-1]:
            order.append(int(g))
    return PlanResult(
        scheme=scheme,
        path=path,
        association_order=order,
        hover=hover,
        total_time_s=total,
        delivered_bits=delivered,
        metadata={"hover_waypoint_index": {int(k) - 2: int(v) for k, v in hover_waypoint.items() if k >= 2}},
    )


def prepare_regions(
    scn: Scenario,
    consts: LinkConstants,
    variant: RegionVariant,
    params: PlannerParams,
) -> tuple[list[FeasibleRegion], list[str]]:
    """Build regions and restrict any disconnected one to its main component."""
    regions = build_regions(scn, consts, variant)
    notes: list[str] = []
    fixed = []
    for r in regions:
        if not r.exclusions or is_pathwise_connected(r, None, params.resolution_m):
            fixed.append(r)
        else:
            fixed.append(largest_component(r, params.resolution_m))
            notes.append(
                f"region {r.owner} was not pathwise connected; restricted to its "
                "largest component, so the plan time is an upper bound"
            )
    return fixed, notes


def plan_fhf(
    scn: Scenario,
    params: PlannerParams | None = None,
    consts: LinkConstants | None = None,
    regions: list[FeasibleRegion] | None = None,
    scheme: str = "fhf",
) -> PlanResult:
    """Run the full fly-hover-fly pipeline on a scenario."""
    params = params or PlannerParams()
    consts = consts or derive_link_constants(scn)
    notes: list[str] = []
    if regions is None:
        regions, notes = prepare_regions(scn, consts, RegionVariant.STANDARD, params)

    g0 = build_g0(scn, regions, params.resolution_m)
    verdict = check_feasibility(g0)
    if not verdict.feasible:
        raise PlanInfeasible(f"mission infeasible: {verdict.reason}", verdict)

    hover_pts = [
        hover_location(regions, m, params.angular_step_deg, params.refine_tol_m)
        for m in range(scn.n_gbs)
    ]
    g1, leg_paths = build_g1(scn, g0, regions, hover_pts, params)
    dist, nxt = floyd_all_pairs(g1.weights)
    order = tsp_with_dummy(dist, START, GOAL, params.exact_tsp_limit)
    path, first_visit = reconstruct_full_path(order, nxt, leg_paths, scn.uav.max_speed_m_s)
    plan = allocate_time(scn, consts, path, hover_pts, first_visit, scheme=scheme)
    plan.metadata["witness_order"] = [int(m) for m in verdict.witness_order]
    plan.metadata["tsp_order"] = [int(v) for v in order]
    plan.metadata["region_notes"] = notes
    plan.metadata["hover_points"] = [[float(c) for c in p] for p in hover_pts]
    return plan
