"""Mission feasibility via a region-adjacency graph.

Vertices are the start point, the goal point, and every GBS's feasible
region; edges record point-in-region membership and pairwise region
intersection. The mission is feasible exactly when this graph is one
connected component, and a witness association order is then read off a
BFS spanning tree walk.
"""

from __future__ import annotations

import enum
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .scenario import Scenario
from .zones import FeasibleRegion, region_contains, regions_intersect

START = 0
GOAL = 1


def region_vertex(m: int) -> int:
    return 2 + m


class GraphKind(enum.Enum):
    G0_UNWEIGHTED = "g0"
    G1_WEIGHTED = "g1"


@dataclass
class RegionGraph:
    """Adjacency over {start, goal, region 1..M}; optionally edge-weighted."""

    kind: GraphKind
    n_regions: int
    adjacency: np.ndarray  # bool, (M+2, M+2)
    weights: np.ndarray | None = None  # float with +inf for absent edges
    edge_witness: dict = field(default_factory=dict)  # (u, v) sorted -> point

    @property
    def n_vertices(self) -> int:
        return self.n_regions + 2

    def vertex_name(self, v: int) -> str:
        if v == START:
            return "start"
        if v == GOAL:
            return "goal"
        return f"region_{v - 2}"

    def witness(self, u: int, v: int) -> np.ndarray | None:
        return self.edge_witness.get((min(u, v), max(u, v)))


@dataclass
class FeasibilityVerdict:
    feasible: bool
    reason: str | None
    components: list[list[str]]
    witness_order: list[int]  # GBS indices

    def to_dict(self) -> dict:
        return {
            "feasible": self.feasible,
            "reason": self.reason,
            "components": self.components,
            "witness_order": self.witness_order,
        }


def build_g0(
    scn: Scenario, regions: list[FeasibleRegion], resolution_m: float = 1.0
) -> RegionGraph:
    """Assemble the unweighted adjacency graph over regions and endpoints."""
    m_count = len(regions)
    n = m_count + 2
    adj = np.zeros((n, n), dtype=bool)
    witness: dict = {}

    start_in = [region_contains(r, scn.uav.start) for r in regions]
    goal_in = [region_contains(r, scn.uav.goal) for r in regions]
    for m in range(m_count):
        if start_in[m]:
            u, v = START, region_vertex(m)
            adj[u, v] = adj[v, u] = True
            witness[(u, v)] = np.asarray(scn.uav.start, dtype=float).copy()
        if goal_in[m]:
            u, v = GOAL, region_vertex(m)
            adj[u, v] = adj[v, u] = True
            witness[(u, v)] = np.asarray(scn.uav.goal, dtype=float).copy()

    for i in range(m_count):
        for j in range(i + 1, m_count):
            u, v = region_vertex(i), region_vertex(j)
            # Exact point memberships subsume the sampled lens test.
            if start_in[i] and start_in[j]:
                adj[u, v] = adj[v, u] = True
                witness[(u, v)] = np.asarray(scn.uav.start, dtype=float).copy()
                continue
            if goal_in[i] and goal_in[j]:
                adj[u, v] = adj[v, u] = True
                witness[(u, v)] = np.asarray(scn.uav.goal, dtype=float).copy()
                continue
            hit, pt = regions_intersect(regions[i], regions[j], resolution_m)
            if hit:
                adj[u, v] = adj[v, u] = True
                witness[(u, v)] = pt
    return RegionGraph(
        kind=GraphKind.G0_UNWEIGHTED, n_regions=m_count, adjacency=adj, edge_witness=witness
    )


def _bfs_component(adj: np.ndarray, source: int) -> set[int]:
    seen = {source}
    queue = deque([source])
    while queue:
        u = queue.popleft()
        for v in np.flatnonzero(adj[u]):
            v = int(v)
            if v not in seen:
                seen.add(v)
                queue.append(v)
    return seen


def _components(adj: np.ndarray) -> list[set[int]]:
    left = set(range(adj.shape[0]))
    comps = []
    while left:
        src = min(left)
        comp = _bfs_component(adj, src) & left
        comps.append(comp)
        left -= comp
    return comps


def check_feasibility(g: RegionGraph) -> FeasibilityVerdict:
    """Single-component test plus a witness association order.

    The witness walks a BFS spanning tree of the region-only subgraph from a
    region holding the start to one holding the goal, doubling back on tree
    edges, so it touches every region in at most 2M-1 steps.
    """
    comps = _components(g.adjacency)
    names = [sorted(g.vertex_name(v) for v in comp) for comp in comps]
    if len(comps) > 1:
        start_comp = next(c for c in comps if START in c)
        if GOAL not in start_comp:
            reason = "goal unreachable from start"
        else:
            missing = sorted(
                v - 2 for comp in comps if comp is not start_comp for v in comp if v >= 2
            )
            reason = f"regions unreachable: {missing}"
        return FeasibilityVerdict(False, reason, names, [])
    if g.n_regions == 0:
        return FeasibilityVerdict(False, "no GBS regions", names, [])

    start_regions = sorted(int(v) - 2 for v in np.flatnonzero(g.adjacency[START]) if v >= 2)
    goal_regions = sorted(int(v) - 2 for v in np.flatnonzero(g.adjacency[GOAL]) if v >= 2)
    if not start_regions:
        return FeasibilityVerdict(False, "start not inside any region", names, [])
    if not goal_regions:
        return FeasibilityVerdict(False, "goal not inside any region", names, [])

    order = _witness_walk(g, start_regions[0], set(goal_regions))
    return FeasibilityVerdict(True, None, names, order)


def _witness_walk(g: RegionGraph, root_region: int, goal_regions: set[int]) -> list[int]:
    """Tree walk over regions ending inside a goal region."""
    m_count = g.n_regions
    parent = {root_region: None}
    layers = deque([root_region])
    children: dict[int, list[int]] = {m: [] for m in range(m_count)}
    while layers:
        u = layers.popleft()
        for v in range(m_count):
            if v not in parent and g.adjacency[region_vertex(u), region_vertex(v)]:
                parent[v] = u
                children[u].append(v)
                layers.append(v)

    end = root_region if root_region in goal_regions else min(goal_regions)
    on_end_path: set[int] = set()
    v: int | None = end
    while v is not None:
        on_end_path.add(v)
        v = parent[v]

    walk: list[int] = []

    def visit(u: int) -> None:
        walk.append(u)
        kids = sorted(children[u], key=lambda c: (c in on_end_path, c))
        for c in kids:
            visit(c)
            if c not in on_end_path:
                walk.append(u)

    visit(root_region)
    return walk
