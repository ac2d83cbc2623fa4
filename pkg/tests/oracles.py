"""Independent brute-force oracles the tests check the planners against.

Everything here is deliberately dumb and derivative-free: dense rasters,
flood fills, grid Dijkstra, permutation enumeration, and nested grid
refinement. None of it shares code paths with the implementations under
test.
"""

from __future__ import annotations

import itertools
import math

import numpy as np
from scipy import ndimage, sparse
from scipy.sparse import csgraph

from noma_uav.zones import FeasibleRegion, region_contains_many

EIGHT = np.ones((3, 3), dtype=int)


def union_mask(regions, box, pitch):
    """Boolean occupancy of the union of regions over a box raster."""
    x0, x1, y0, y1 = box
    xs = x0 + pitch * np.arange(int((x1 - x0) / pitch) + 1)
    ys = y0 + pitch * np.arange(int((y1 - y0) / pitch) + 1)
    gx, gy = np.meshgrid(xs, ys)
    pts = np.stack([gx, gy], axis=-1)
    combined = np.zeros(gx.shape, dtype=bool)
    per_region = []
    for reg in regions:
        m = region_contains_many(reg, pts)
        per_region.append(m)
        combined |= m
    return xs, ys, combined, per_region


def feasibility_flood_fill(scn, regions, pitch=0.5, pad=25.0):
    """Mission feasibility by flood fill over the union of regions.

    Feasible iff start and goal land in the same component and every
    region contributes at least one cell to it.
    """
    pts = [scn.uav.start, scn.uav.goal]
    for reg in regions:
        c, r = reg.noma_disk.center, reg.noma_disk.radius
        pts += [c - r, c + r]
    arr = np.array(pts)
    box = (arr[:, 0].min() - pad, arr[:, 0].max() + pad, arr[:, 1].min() - pad, arr[:, 1].max() + pad)
    xs, ys, combined, per_region = union_mask(regions, box, pitch)
    labels, count = ndimage.label(combined, structure=EIGHT)

    def cell_label(q):
        ix = int(round((q[0] - xs[0]) / pitch))
        iy = int(round((q[1] - ys[0]) / pitch))
        if 0 <= iy < labels.shape[0] and 0 <= ix < labels.shape[1]:
            return int(labels[iy, ix])
        return 0

    lab_start = cell_label(scn.uav.start)
    lab_goal = cell_label(scn.uav.goal)
    if lab_start == 0 or lab_goal == 0 or lab_start != lab_goal:
        return False
    for mask in per_region:
        if not np.any((labels == lab_start) & mask):
            return False
    return True


_OFFSETS_16 = [
    (1, 0), (-1, 0), (0, 1), (0, -1),
    (1, 1), (1, -1), (-1, 1), (-1, -1),
    (2, 1), (2, -1), (-2, 1), (-2, -1),
    (1, 2), (1, -2), (-1, 2), (-1, -2),
]


def grid_shortest_path(regions, q_start, q_end, pitch=0.5, pad=5.0):
    """Shortest-path length through the union of regions on a 16-neighbor grid.

    The extended neighborhood keeps the metric error below two percent of
    the Euclidean optimum.
    """
    pts = [np.asarray(q_start, float), np.asarray(q_end, float)]
    for reg in regions:
        c, r = reg.noma_disk.center, reg.noma_disk.radius
        pts += [c - r, c + r]
    arr = np.array(pts)
    box = (arr[:, 0].min() - pad, arr[:, 0].max() + pad, arr[:, 1].min() - pad, arr[:, 1].max() + pad)
    x0, x1, y0, y1 = box
    xs = x0 + pitch * np.arange(int((x1 - x0) / pitch) + 1)
    ys = y0 + pitch * np.arange(int((y1 - y0) / pitch) + 1)
    gx, gy = np.meshgrid(xs, ys)
    grid_pts = np.stack([gx, gy], axis=-1)
    free = np.zeros(gx.shape, dtype=bool)
    for reg in regions:
        free |= region_contains_many(reg, grid_pts)
    ny, nx = free.shape
    idx = np.arange(ny * nx).reshape(ny, nx)

    rows, cols, data = [], [], []
    for dx, dy in _OFFSETS_16:
        w = math.hypot(dx, dy) * pitch
        src_y = slice(max(0, -dy), ny - max(0, dy))
        src_x = slice(max(0, -dx), nx - max(0, dx))
        dst_y = slice(max(0, dy), ny - max(0, -dy))
        dst_x = slice(max(0, dx), nx - max(0, -dx))
        ok = free[src_y, src_x] & free[dst_y, dst_x]
        rows.append(idx[src_y, src_x][ok])
        cols.append(idx[dst_y, dst_x][ok])
        data.append(np.full(int(ok.sum()), w))
    graph = sparse.csr_matrix(
        (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
        shape=(ny * nx, ny * nx),
    )

    def nearest_free(q):
        ix = int(round((q[0] - xs[0]) / pitch))
        iy = int(round((q[1] - ys[0]) / pitch))
        ix = min(max(ix, 0), nx - 1)
        iy = min(max(iy, 0), ny - 1)
        if free[iy, ix]:
            return idx[iy, ix]
        fy, fx = np.nonzero(free)
        k = np.argmin((fy - iy) ** 2 + (fx - ix) ** 2)
        return idx[fy[k], fx[k]]

    s = nearest_free(q_start)
    t = nearest_free(q_end)
    dist = csgraph.dijkstra(graph, indices=[s], min_only=True)
    return float(dist[t])


def hover_grid_search(region, pitch=0.05, reach=None):
    """Closest in-region point to the region's own center by dense search."""
    center = region.noma_disk.center
    if reach is None:
        reach = region.noma_disk.radius
    best = None
    span = reach
    xs = center[0] + np.arange(-span, span + pitch, pitch)
    ys = center[1] + np.arange(-span, span + pitch, pitch)
    gx, gy = np.meshgrid(xs, ys)
    pts = np.stack([gx, gy], axis=-1).reshape(-1, 2)
    ok = region_contains_many(region, pts)
    if not ok.any():
        return None
    pts = pts[ok]
    d = np.linalg.norm(pts - center, axis=1)
    best = pts[int(np.argmin(d))]
    return best


def enumerate_open_tours(n_points, start, end):
    """All start->...->end orders over the remaining points."""
    middle = [v for v in range(n_points) if v not in (start, end)]
    for perm in itertools.permutations(middle):
        yield [start, *perm, end]


def tour_length(w, order):
    return float(sum(w[a, b] for a, b in zip(order[:-1], order[1:])))


def best_open_tour(w, start, end):
    """Exhaustive optimum of the open-route problem."""
    best = (np.inf, None)
    for order in enumerate_open_tours(w.shape[0], start, end):
        length = tour_length(w, order)
        if length < best[0]:
            best = (length, order)
    return best


def all_simple_path_shortest(w):
    """All-pairs shortest distances by enumerating simple paths."""
    n = w.shape[0]
    best = w.astype(float).copy()
    np.fill_diagonal(best, 0.0)
    verts = list(range(n))
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            others = [v for v in verts if v not in (i, j)]
            for k in range(0, len(others) + 1):
                for mid in itertools.permutations(others, k):
                    path = [i, *mid, j]
                    length = sum(w[a, b] for a, b in zip(path[:-1], path[1:]))
                    if length < best[i, j]:
                        best[i, j] = length
    return best


def nested_grid_minimize(evaluate_feasible, objective, center, half_width, levels=40, points=17):
    """Shrinking grid search: keep the best feasible point per level.

    ``evaluate_feasible`` maps an (N, d) array to a boolean mask and
    ``objective`` to values; the box recenters on the incumbent and shrinks
    by a fixed factor each level. The shrink factor stays above the
    per-level grid-cell radius so the true optimum cannot escape the box.
    """
    dim = len(center)
    center = np.asarray(center, dtype=float)
    best_val, best_pt = np.inf, None
    for _ in range(levels):
        axes = [np.linspace(c - half_width, c + half_width, points) for c in center]
        mesh = np.meshgrid(*axes, indexing="ij")
        pts = np.stack([m.ravel() for m in mesh], axis=-1)
        ok = evaluate_feasible(pts)
        if ok.any():
            vals = objective(pts[ok])
            k = int(np.argmin(vals))
            if vals[k] < best_val:
                best_val = float(vals[k])
                best_pt = pts[ok][k]
                center = best_pt.copy()
        half_width *= 0.6
    return best_val, best_pt
