"""Re-check an emitted plan against the original (non-surrogate) constraints.

Every planner output is audited with the true formulas: speed and step
limits, power-ordering membership wherever the UAV is associated, protected
distances (or their Multi-SIC replacement) wherever it is not, and the
delivered bits against each upload target. Residuals are relative, so a
clean plan reports values at solver-noise level.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .fhf import PlanResult
from .sca import with_hover_segments
from .scenario import LinkConstants, Scenario, uav_rate
from .zones import FeasibleRegion


@dataclass
class AuditReport:
    ok: bool
    max_rel_residual: float
    residuals: dict[str, float] = field(default_factory=dict)
    failures: list[str] = field(default_factory=list)
    exempt: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "ok": self.ok,
            "max_rel_residual": self.max_rel_residual,
            "residuals": self.residuals,
            "failures": self.failures,
            "exempt": self.exempt,
        }


def audit_plan(
    scn: Scenario,
    consts: LinkConstants,
    regions: list[FeasibleRegion],
    plan: PlanResult,
    rel_tol: float = 1e-6,
    multi_sic: bool = False,
) -> AuditReport:
    """Full constraint audit of a plan at relative tolerance ``rel_tol``.

    ``consts`` must be the link budget the plan was computed with (the
    orthogonal-access benchmark passes its modified budget). Plans carrying
    an ``audit_exempt`` marker skip the zone families but still face the
    speed and throughput checks.
    """
    exempt = list(plan.metadata.get("audit_exempt", []))
    path = with_hover_segments(plan)
    res: dict[str, float] = {}
    failures: list[str] = []

    # endpoints
    start_err = float(np.linalg.norm(path.waypoints[0] - scn.uav.start))
    goal_err = float(np.linalg.norm(path.waypoints[-1] - scn.uav.goal))
    res["endpoints"] = max(start_err, goal_err) / max(1.0, float(np.linalg.norm(scn.uav.goal - scn.uav.start)))
    if res["endpoints"] > rel_tol:
        failures.append("path endpoints do not match the mission endpoints")

    # speed and step limits
    lengths = path.lengths()
    v_max = scn.uav.max_speed_m_s
    speed_viol = 0.0
    for n in range(path.n_segments):
        limit = v_max * path.durations[n]
        speed_viol = max(speed_viol, (lengths[n] - limit) / max(1.0, limit))
    res["speed"] = speed_viol
    if speed_viol > rel_tol:
        failures.append("a segment exceeds the top-speed limit")

    noma_sq = np.array([r.noma_disk.radius ** 2 for r in regions])
    # Collect each GBS's protected disk once (region lists exclude the owner).
    protected: dict[int, tuple[np.ndarray, float]] = {}
    for r in regions:
        for ex in r.exclusions:
            for m in range(scn.n_gbs):
                if np.array_equal(ex.center, consts.gbs_xy[m]):
                    protected[m] = (ex.center, ex.radius)

    zone_viol = 0.0
    qos_viol = 0.0
    if "zones" not in exempt:
        for n in range(path.n_segments):
            m = int(path.segment_gbs[n])
            for wp in (path.waypoints[n], path.waypoints[n + 1]):
                d_sq = float(np.sum((wp - consts.gbs_xy[m]) ** 2))
                zone_viol = max(zone_viol, (d_sq - noma_sq[m]) / max(1.0, noma_sq[m]))
        res["sic_zone"] = zone_viol
        if zone_viol > rel_tol:
            failures.append("a waypoint leaves its serving power-ordering disk")

    if "qos" not in exempt and protected:
        for n in range(path.n_segments + 1):
            adjacent = set()
            if n > 0:
                adjacent.add(int(path.segment_gbs[n - 1]))
            if n < path.n_segments:
                adjacent.add(int(path.segment_gbs[n]))
            wp = path.waypoints[n]
            for m, (center, radius) in protected.items():
                if m in adjacent or radius <= 0.0:
                    continue
                d_sq = float(np.sum((wp - center) ** 2))
                if multi_sic and d_sq <= noma_sq[m]:
                    continue  # cancelled at that GBS instead of kept out
                qos_viol = max(qos_viol, (radius**2 - d_sq) / max(1.0, radius**2))
        res["qos"] = qos_viol
        if qos_viol > rel_tol:
            failures.append("a waypoint intrudes into a protected disk")

    # throughput via true rates
    w_hz = consts.bandwidth_hz
    delivered = np.zeros(scn.n_gbs)
    for n in range(path.n_segments):
        m = int(path.segment_gbs[n])
        delivered[m] += path.durations[n] * w_hz * uav_rate(consts, path.waypoints[n], m)
    if plan.scheme == "hover_only":
        # Only hovering counts for this benchmark; hover slots are already
        # part of the expanded path, so remove the moving segments' share.
        delivered = np.zeros(scn.n_gbs)
        for n in range(path.n_segments):
            if lengths[n] <= 1e-12:
                m = int(path.segment_gbs[n])
                delivered[m] += path.durations[n] * w_hz * uav_rate(consts, path.waypoints[n], m)
    thr_viol = 0.0
    for m in range(scn.n_gbs):
        need = scn.mission.required_bits[m]
        if need > 0:
            thr_viol = max(thr_viol, (need * (1.0 - 1e-6) - delivered[m]) / need)
    res["throughput"] = thr_viol
    if thr_viol > rel_tol:
        failures.append("an upload target is missed")

    # declared total matches the hover-expanded path
    t_claim = plan.total_time_s
    t_actual = float(path.durations.sum())
    res["time_consistency"] = abs(t_claim - t_actual) / max(1.0, t_claim)
    if res["time_consistency"] > rel_tol:
        failures.append("declared completion time does not match the path")

    worst = max(res.values())
    return AuditReport(
        ok=not failures, max_rel_residual=worst, residuals=res, failures=failures, exempt=exempt
    )
