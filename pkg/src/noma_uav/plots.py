"""Static SVG rendering of plans and sweep curves.

Output is byte-reproducible: the SVG hash salt is pinned and the date
metadata is stripped, so identical inputs yield identical files.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
matplotlib.rcParams["svg.hashsalt"] = "noma-uav"

import matplotlib.pyplot as plt
import numpy as np

from .fhf import PlanResult
from .sca import SweepResult, with_hover_segments
from .scenario import Scenario
from .zones import FeasibleRegion

_SCHEME_COLORS = {
    "fhf": "tab:orange",
    "sca": "tab:blue",
    "multi_sic": "tab:green",
    "hover_only": "tab:purple",
    "oma": "tab:red",
}


def _circle(ax, center, radius, **kw):
    ax.add_patch(plt.Circle((center[0], center[1]), radius, fill=False, **kw))


def plot_plan(scn: Scenario, regions: list[FeasibleRegion], plan: PlanResult, out_path: str) -> None:
    """Scene map: zones, stations, hover/handover markers, trajectory."""
    fig, ax = plt.subplots(figsize=(9.0, 5.0))
    cap_guard = 100.0 * max(
        np.linalg.norm(scn.uav.goal - scn.uav.start), 1.0
    )  # skip effectively unbounded disks
    for reg in regions:
        if reg.noma_disk.radius < cap_guard:
            _circle(ax, reg.noma_disk.center, reg.noma_disk.radius, color="tab:blue", lw=1.0)
    seen = set()
    for reg in regions:
        for ex in reg.exclusions:
            key = (float(ex.center[0]), float(ex.center[1]))
            if key not in seen and ex.radius > 0:
                seen.add(key)
                _circle(ax, ex.center, ex.radius, color="tab:red", ls="--", lw=1.0)

    gbs = scn.gbs_positions()
    ax.plot(gbs[:, 0], gbs[:, 1], "^", color="black", ms=8, label="GBS")
    gues = [b.served_user.position for b in scn.base_stations if b.served_user is not None]
    if gues:
        g = np.array(gues)
        ax.plot(g[:, 0], g[:, 1], ".", color="gray", ms=6, label="GUE")

    path = with_hover_segments(plan)
    ax.plot(path.waypoints[:, 0], path.waypoints[:, 1], "-", color=_SCHEME_COLORS.get(plan.scheme, "tab:blue"), lw=1.4, label=f"trajectory ({plan.scheme})")
    hover_pts = plan.metadata.get("hover_points")
    if hover_pts:
        hp = np.array(hover_pts)
        ax.plot(hp[:, 0], hp[:, 1], "*", color="tab:green", ms=11, label="hover location")
    handovers = plan.handover_points()
    if handovers:
        hx = [h["location"][0] for h in handovers]
        hy = [h["location"][1] for h in handovers]
        ax.plot(hx, hy, "o", mfc="none", color="black", ms=7, label="handover")
    ax.plot(*scn.uav.start, "s", color="tab:olive", ms=8, label="start")
    ax.plot(*scn.uav.goal, "D", color="tab:cyan", ms=8, label="goal")

    ax.set_xlabel("x [m]")
    ax.set_ylabel("y [m]")
    ax.set_aspect("equal", adjustable="datalim")
    ax.legend(loc="upper right", fontsize=8)
    ax.set_title(f"{plan.scheme}: T = {plan.total_time_s:.1f} s")
    fig.tight_layout()
    fig.savefig(out_path, format="svg", metadata={"Date": None})
    plt.close(fig)


def plot_sweep(sweep: SweepResult, out_path: str) -> None:
    """One completion-time curve per scheme along the swept axis."""
    fig, ax = plt.subplots(figsize=(7.0, 4.5))
    schemes = sorted({c["scheme"] for c in sweep.cells}, key=lambda s: list(_SCHEME_COLORS).index(s) if s in _SCHEME_COLORS else 99)
    for scheme in schemes:
        xs = [c["value"] for c in sweep.cells if c["scheme"] == scheme and c["total_time_s"] is not None]
        ys = [c["total_time_s"] for c in sweep.cells if c["scheme"] == scheme and c["total_time_s"] is not None]
        if xs:
            ax.plot(xs, ys, marker="o", ms=4, color=_SCHEME_COLORS.get(scheme), label=scheme)
    ax.set_xlabel("required upload per GBS [Mbit]" if sweep.axis == "u" else "user rate target [bit/s/Hz]")
    ax.set_ylabel("mission completion time [s]")
    ax.grid(True, alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(out_path, format="svg", metadata={"Date": None})
    plt.close(fig)
