"""Disk zones around base stations and the regions the UAV may occupy.

Each GBS carries two concentric disks: an uplink power-ordering ("NOMA")
disk inside which the UAV signal is strong enough to be decoded first, and a
protected disk outside which a non-associated UAV leaves the served user's
rate target intact. The feasible region of a GBS is its NOMA disk minus
every other GBS's protected disk; the Multi-SIC variant keeps the NOMA disk
only.

Geometric predicates (membership, pairwise intersection with a witness
point, pathwise connectivity) are resolved on rasters with a configurable
pitch; exact circle-arrangement topology is deliberately out of scope.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace

import numpy as np
from scipy import ndimage

from .errors import AnchorOutsideRegion, EmptyNomaZone, InvariantViolation, QosUnsatisfiable
from .scenario import LinkConstants, Scenario, protected_radius_sq

_EIGHT_CONN = np.ones((3, 3), dtype=int)
_MAX_RASTER_CELLS = 64_000_000


class RegionVariant(enum.Enum):
    STANDARD = "standard"
    MULTI_SIC = "multi_sic"


@dataclass(frozen=True)
class Disk:
    center: np.ndarray
    radius: float


@dataclass(frozen=True)
class RasterMask:
    """Boolean occupancy grid used to restrict a region to one component."""

    origin: np.ndarray  # (x0, y0) of cell (0, 0) center
    pitch: float
    cells: np.ndarray  # bool, shape (ny, nx)

    def contains(self, q: np.ndarray) -> bool:
        ix = int(round((q[0] - self.origin[0]) / self.pitch))
        iy = int(round((q[1] - self.origin[1]) / self.pitch))
        ny, nx = self.cells.shape
        if 0 <= iy < ny and 0 <= ix < nx:
            return bool(self.cells[iy, ix])
        return False


@dataclass(frozen=True)
class FeasibleRegion:
    owner: int
    noma_disk: Disk
    exclusions: tuple[Disk, ...]
    variant: RegionVariant = RegionVariant.STANDARD
    raster_window: tuple[float, float, float, float] | None = None  # (x0, x1, y0, y1)
    component_mask: RasterMask | None = None


def noma_radius_sq(consts: LinkConstants, m: int, cap_radius_m: float) -> float:
    """Squared radius of GBS ``m``'s uplink power-ordering disk.

    A GBS without a served user imposes no power-ordering limit, so the
    configured cap stands in for an unbounded radius.
    """
    if not consts.has_gue[m]:
        return cap_radius_m**2
    h_sq = consts.height_diff_m**2
    raw = (consts.beta0 / consts.signal_watts[m]) ** (2.0 / consts.alpha) - h_sq
    if raw < 0.0:
        raise EmptyNomaZone(
            f"GBS {m}: UAV cannot out-power the served user even directly overhead"
        )
    return raw


def qos_radius_sq(consts: LinkConstants, m: int, theta: float) -> float:
    """Squared radius of the protected disk for GBS ``m``'s served user.

    Zero when the user's rate target holds at any UAV distance; raises when
    the target fails even with the UAV infinitely far away.
    """
    if not consts.has_gue[m]:
        return 0.0
    try:
        return protected_radius_sq(
            consts.beta0,
            consts.height_diff_m,
            consts.alpha,
            consts.signal_watts[m],
            consts.intercell_plus_noise_watts[m],
            theta,
        )
    except QosUnsatisfiable as exc:
        raise QosUnsatisfiable(f"GBS {m}: {exc}") from None


def default_cap_radius(scn: Scenario) -> float:
    """Stand-in radius for unbounded zones: ten times the scene diameter.

    Floored so that even a degenerate point-like scene keeps every cap disk
    far larger than any real zone.
    """
    pts = [scn.uav.start, scn.uav.goal] + [b.position for b in scn.base_stations]
    arr = np.array(pts)
    span = np.linalg.norm(arr.max(axis=0) - arr.min(axis=0))
    return 10.0 * max(span, 100.0)


def build_regions(
    scn: Scenario,
    consts: LinkConstants,
    variant: RegionVariant = RegionVariant.STANDARD,
    cap_radius_m: float | None = None,
) -> list[FeasibleRegion]:
    """Construct every GBS's feasible region for the given scheme variant.

    Checks the per-GBS ordering (power-ordering radius strictly above the
    protected radius) that any feasible mission requires.
    """
    cap = default_cap_radius(scn) if cap_radius_m is None else cap_radius_m
    m_count = scn.n_gbs
    noma_sq = np.array([noma_radius_sq(consts, m, cap) for m in range(m_count)])
    qos_sq = np.zeros(m_count)
    for m in range(m_count):
        theta = 0.0
        if scn.base_stations[m].served_user is not None:
            theta = scn.base_stations[m].served_user.qos_bits_per_s_per_hz
        qos_sq[m] = qos_radius_sq(consts, m, theta)
        if qos_sq[m] >= noma_sq[m]:
            raise InvariantViolation(
                f"GBS {m}: protected radius >= power-ordering radius; no region order is feasible"
            )

    window = _scene_window(scn, consts, noma_sq, cap)
    regions = []
    for m in range(m_count):
        disk = Disk(center=consts.gbs_xy[m].copy(), radius=math.sqrt(noma_sq[m]))
        if variant is RegionVariant.MULTI_SIC:
            exclusions: tuple[Disk, ...] = ()
        else:
            exclusions = tuple(
                Disk(center=consts.gbs_xy[i].copy(), radius=math.sqrt(qos_sq[i]))
                for i in range(m_count)
                if i != m and qos_sq[i] > 0.0
            )
        capped = noma_sq[m] >= cap**2 * (1.0 - 1e-12)
        regions.append(
            FeasibleRegion(
                owner=m,
                noma_disk=disk,
                exclusions=exclusions,
                variant=variant,
                raster_window=window if capped else None,
            )
        )
    return regions


def _scene_window(scn, consts, noma_sq, cap) -> tuple[float, float, float, float]:
    """Bounding box that contains all mission-relevant geometry.

    Capped (effectively unbounded) disks are rasterized only inside this
    window; everything beyond it is exclusion-free, so the outer annulus is
    trivially connected.
    """
    xs = [scn.uav.start[0], scn.uav.goal[0]]
    ys = [scn.uav.start[1], scn.uav.goal[1]]
    for m in range(scn.n_gbs):
        r = math.sqrt(noma_sq[m])
        if r >= cap * (1.0 - 1e-12):
            r = 0.0  # capped disk: do not let it blow the window up
        reach = max(r, 1.0)
        xs += [consts.gbs_xy[m][0] - reach, consts.gbs_xy[m][0] + reach]
        ys += [consts.gbs_xy[m][1] - reach, consts.gbs_xy[m][1] + reach]
    pad = 25.0
    return (min(xs) - pad, max(xs) + pad, min(ys) - pad, max(ys) + pad)


def region_contains(region: FeasibleRegion, q: np.ndarray) -> bool:
    """Membership test; protected-disk boundaries belong to the region."""
    q = np.asarray(q, dtype=float)
    d_sq = float(np.sum((q - region.noma_disk.center) ** 2))
    if d_sq > region.noma_disk.radius**2:
        return False
    for ex in region.exclusions:
        if float(np.sum((q - ex.center) ** 2)) < ex.radius**2:
            return False
    if region.component_mask is not None and not region.component_mask.contains(q):
        return False
    return True


def region_contains_many(region: FeasibleRegion, pts: np.ndarray) -> np.ndarray:
    """Vectorized :func:`region_contains` over an (N, 2) point array."""
    pts = np.asarray(pts, dtype=float)
    ok = np.sum((pts - region.noma_disk.center) ** 2, axis=-1) <= region.noma_disk.radius**2
    for ex in region.exclusions:
        ok &= np.sum((pts - ex.center) ** 2, axis=-1) >= ex.radius**2
    if region.component_mask is not None:
        mask = region.component_mask
        ix = np.rint((pts[..., 0] - mask.origin[0]) / mask.pitch).astype(int)
        iy = np.rint((pts[..., 1] - mask.origin[1]) / mask.pitch).astype(int)
        ny, nx = mask.cells.shape
        inb = (ix >= 0) & (ix < nx) & (iy >= 0) & (iy < ny)
        hit = np.zeros(pts.shape[:-1], dtype=bool)
        hit[inb] = mask.cells[iy[inb], ix[inb]]
        ok &= hit
    return ok


def _clip_box(box, window):
    if window is None:
        return box
    x0, x1, y0, y1 = box
    wx0, wx1, wy0, wy1 = window
    return (max(x0, wx0), min(x1, wx1), max(y0, wy0), min(y1, wy1))


def _disk_box(disk: Disk):
    c, r = disk.center, disk.radius
    return (c[0] - r, c[0] + r, c[1] - r, c[1] + r)


def _grid(box, pitch):
    x0, x1, y0, y1 = box
    nx = max(int(math.floor((x1 - x0) / pitch)) + 1, 1)
    ny = max(int(math.floor((y1 - y0) / pitch)) + 1, 1)
    if nx * ny > _MAX_RASTER_CELLS:
        raise InvariantViolation(
            f"raster of {nx}x{ny} cells exceeds the safety limit; use a coarser resolution"
        )
    xs = x0 + pitch * np.arange(nx)
    ys = y0 + pitch * np.arange(ny)
    return xs, ys


def regions_intersect(
    r1: FeasibleRegion, r2: FeasibleRegion, resolution_m: float = 1.0
) -> tuple[bool, np.ndarray | None]:
    """Sample the lens of the two NOMA disks for a common feasible point.

    Returns the sample with the largest clearance from every bounding circle
    as the witness, which gives downstream path initializers room to move.
    """
    if resolution_m <= 0:
        raise InvariantViolation("resolution_m must be > 0")
    box = _disk_box(r1.noma_disk)
    b2 = _disk_box(r2.noma_disk)
    box = (max(box[0], b2[0]), min(box[1], b2[1]), max(box[2], b2[2]), min(box[3], b2[3]))
    box = _clip_box(box, r1.raster_window)
    box = _clip_box(box, r2.raster_window)
    if box[0] > box[1] or box[2] > box[3]:
        return False, None
    xs, ys = _grid(box, resolution_m)
    gx, gy = np.meshgrid(xs, ys)
    pts = np.stack([gx, gy], axis=-1)
    ok = region_contains_many(r1, pts) & region_contains_many(r2, pts)
    if not ok.any():
        return False, None
    margin = np.full(gx.shape, np.inf)
    for reg in (r1, r2):
        d = np.sqrt(np.sum((pts - reg.noma_disk.center) ** 2, axis=-1))
        margin = np.minimum(margin, reg.noma_disk.radius - d)
        for ex in reg.exclusions:
            d = np.sqrt(np.sum((pts - ex.center) ** 2, axis=-1))
            margin = np.minimum(margin, d - ex.radius)
    margin[~ok] = -np.inf
    iy, ix = np.unravel_index(int(np.argmax(margin)), margin.shape)
    return True, pts[iy, ix].copy()


def _rasterize(region: FeasibleRegion, resolution_m: float):
    box = _clip_box(_disk_box(region.noma_disk), region.raster_window)
    x0, x1, y0, y1 = box
    pad = resolution_m
    xs, ys = _grid((x0 - pad, x1 + pad, y0 - pad, y1 + pad), resolution_m)
    gx, gy = np.meshgrid(xs, ys)
    pts = np.stack([gx, gy], axis=-1)
    inside = region_contains_many(region, pts)
    return xs, ys, inside


def _labeled_components(region: FeasibleRegion, resolution_m: float):
    xs, ys, inside = _rasterize(region, resolution_m)
    labels, count = ndimage.label(inside, structure=_EIGHT_CONN)
    if count > 1 and region.raster_window is not None:
        # A capped disk extends past the window on every side where the
        # window edge is still inside the disk; the free space out there
        # joins all components that touch such an edge.
        edge_labels = set()
        for sel in (labels[0, :], labels[-1, :], labels[:, 0], labels[:, -1]):
            edge_labels.update(int(v) for v in np.unique(sel) if v != 0)
        if len(edge_labels) > 1:
            merged = min(edge_labels)
            for lab in edge_labels:
                labels[labels == lab] = merged
            remaining = np.unique(labels)
            count = len(remaining[remaining != 0])
    return xs, ys, labels, count


def is_pathwise_connected(
    region: FeasibleRegion, anchors: list[np.ndarray] | None = None, resolution_m: float = 1.0
) -> bool:
    """Flood-fill connectivity of the region at the given raster pitch.

    With anchors, checks that all of them fall in one component; without,
    checks that the whole region is a single component.
    """
    if resolution_m <= 0:
        raise InvariantViolation("resolution_m must be > 0")
    anchors = list(anchors or [])
    for a in anchors:
        if not region_contains(region, a):
            raise AnchorOutsideRegion(f"anchor {np.asarray(a).tolist()} lies outside the region")
    xs, ys, labels, count = _labeled_components(region, resolution_m)
    if count == 0:
        return False
    if not anchors:
        return count == 1
    want = None
    for a in anchors:
        lab = _anchor_label(labels, xs, ys, a, resolution_m)
        if lab == 0:
            return False
        if want is None:
            want = lab
        elif lab != want:
            return False
    return True


def _anchor_label(labels, xs, ys, anchor, pitch) -> int:
    ix = int(np.clip(round((anchor[0] - xs[0]) / pitch), 0, len(xs) - 1))
    iy = int(np.clip(round((anchor[1] - ys[0]) / pitch), 0, len(ys) - 1))
    if labels[iy, ix] != 0:
        return int(labels[iy, ix])
    # Rasterization can leave the anchor's own cell outside the mask; look
    # in a small neighborhood for the nearest labeled cell.
    for ring in range(1, 4):
        y_lo, y_hi = max(iy - ring, 0), min(iy + ring + 1, labels.shape[0])
        x_lo, x_hi = max(ix - ring, 0), min(ix + ring + 1, labels.shape[1])
        block = labels[y_lo:y_hi, x_lo:x_hi]
        nz = block[block != 0]
        if nz.size:
            return int(nz.min())
    return 0


def largest_component(region: FeasibleRegion, resolution_m: float = 1.0) -> FeasibleRegion:
    """Restrict a disconnected region to its largest flood-fill component."""
    xs, ys, labels, count = _labeled_components(region, resolution_m)
    if count <= 1:
        return region
    sizes = ndimage.sum_labels(np.ones_like(labels), labels, index=range(1, labels.max() + 1))
    keep = int(np.argmax(sizes)) + 1
    mask = RasterMask(
        origin=np.array([xs[0], ys[0]]), pitch=resolution_m, cells=labels == keep
    )
    return replace(region, component_mask=mask)
