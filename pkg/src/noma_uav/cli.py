"""Command-line front door: feasibility checks, planning runs, sweeps.

Verbs:
  check  - parse a scenario, build its regions, report the feasibility
           verdict as JSON (exit 0 feasible, 2 infeasible, 1 error)
  plan   - run one planning method; writes result.json, trajectory.csv and
           plot.svg into the output directory
  sweep  - re-plan across upload or rate targets; writes sweep.json,
           sweep.csv and curves.svg

All outputs are deterministic: identical scenario, parameters and seed
produce byte-identical files. Wall-clock timings go to the log only
(NOMA_UAV_LOG controls verbosity).
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
import time
from dataclasses import dataclass, field

from . import __version__
from .audit import audit_plan
from .errors import NomaUavError, PlanInfeasible
from .feasibility import build_g0, check_feasibility
from .fhf import PlannerParams, prepare_regions
from .sca import METHODS, free_space_regions, oma_link_constants, plan_with_method, run_sweep, with_hover_segments
from .scenario import Scheme, derive_link_constants, scenario_digest, scenario_from_dict
from .zones import RegionVariant

log = logging.getLogger("noma_uav")


@dataclass
class RunManifest:
    """Provenance block attached to every output file.

    The digest covers the scenario content and all planning parameters, so
    re-serializing the same inputs yields the same digest. Wall-clock time
    is logged but never serialized, keeping outputs byte-stable.
    """

    command: str
    scenario_digest: str
    parameters: dict
    tool_version: str = __version__
    wall_clock_s: float | None = None

    def run_digest(self) -> str:
        blob = json.dumps(
            {
                "command": self.command,
                "scenario": self.scenario_digest,
                "parameters": self.parameters,
                "version": self.tool_version,
            },
            sort_keys=True,
        )
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def to_dict(self) -> dict:
        return {
            "command": self.command,
            "scenario_digest": self.scenario_digest,
            "parameters": self.parameters,
            "tool_version": self.tool_version,
            "run_digest": self.run_digest(),
        }


def _load(path: str, seed: int | None):
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    if seed is not None:
        doc["rng_seed"] = seed
    return scenario_from_dict(doc)


def _params_from_args(args) -> PlannerParams:
    kw = {}
    if args.delta is not None:
        kw["delta_m"] = args.delta
    if args.ns is not None:
        kw["ns"] = args.ns
    if args.eps is not None:
        kw["eps_sca"] = args.eps
    return PlannerParams(**kw)


def _param_dict(params: PlannerParams, extra: dict) -> dict:
    out = {
        "delta_m": params.delta_m,
        "ns": params.ns,
        "eps_sca": params.eps_sca,
        "eps_path": params.eps_path,
        "resolution_m": params.resolution_m,
        "feas_tol": params.feas_tol,
        "opt_tol": params.opt_tol,
    }
    out.update(extra)
    return out


def _write_json(path: str, payload: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def cmd_check(args) -> int:
    scn = _load(args.scenario, args.seed)
    params = _params_from_args(args)
    variant = RegionVariant.MULTI_SIC if scn.mission.scheme is Scheme.MULTI_SIC else RegionVariant.STANDARD
    consts = derive_link_constants(scn)
    regions, notes = prepare_regions(scn, consts, variant, params)
    verdict = check_feasibility(build_g0(scn, regions, params.resolution_m))
    payload = verdict.to_dict()
    payload["region_notes"] = notes
    payload["scenario_digest"] = scenario_digest(scn)
    print(json.dumps(payload, indent=2, sort_keys=True))
    return 0 if verdict.feasible else 2


def _write_trajectory_csv(path: str, plan) -> None:
    full = with_hover_segments(plan)
    t = 0.0
    lines = ["n,t_cumulative_s,x_m,y_m,assoc_gbs"]
    n_seg = full.n_segments
    for n in range(n_seg + 1):
        assoc = int(full.segment_gbs[min(n, n_seg - 1)])
        x, y = full.waypoints[n]
        lines.append(f"{n},{t:.6g},{x:.6g},{y:.6g},{assoc}")
        if n < n_seg:
            t += float(full.durations[n])
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def cmd_plan(args) -> int:
    scn = _load(args.scenario, args.seed)
    params = _params_from_args(args)
    method = args.method.replace("-", "_")
    manifest = RunManifest(
        command="plan",
        scenario_digest=scenario_digest(scn),
        parameters=_param_dict(params, {"method": method, "seed": args.seed}),
    )
    os.makedirs(args.out, exist_ok=True)
    outputs = [os.path.join(args.out, n) for n in ("result.json", "trajectory.csv", "plot.svg")]
    t0 = time.perf_counter()
    try:
        plan = plan_with_method(scn, method, params)
        consts = derive_link_constants(scn)
        if method == "multi_sic":
            regions, _ = prepare_regions(scn, consts, RegionVariant.MULTI_SIC, params)
            report = audit_plan(scn, consts, regions, plan, multi_sic=True)
        elif method == "oma":
            oma_consts = oma_link_constants(consts, params.oma_bandwidth_fraction, params.oma_isolated_subband)
            regions = free_space_regions(scn, oma_consts)
            report = audit_plan(scn, oma_consts, regions, plan)
        else:
            regions, _ = prepare_regions(scn, consts, RegionVariant.STANDARD, params)
            report = audit_plan(scn, consts, regions, plan)

        payload = plan.to_dict()
        payload["required_mbits"] = [float(v) / 1e6 for v in scn.mission.required_bits]
        payload["audit"] = report.to_dict()
        payload["manifest"] = manifest.to_dict()
        _write_json(outputs[0], payload)
        _write_trajectory_csv(outputs[1], plan)
        from .plots import plot_plan

        plot_plan(scn, regions, plan, outputs[2])
    except PlanInfeasible as exc:
        for f in outputs:
            if os.path.exists(f):
                os.remove(f)
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except NomaUavError as exc:
        for f in outputs:
            if os.path.exists(f):
                os.remove(f)
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    manifest.wall_clock_s = time.perf_counter() - t0
    log.info("plan %s finished in %.2f s (run %s)", method, manifest.wall_clock_s, manifest.run_digest())
    if not report.ok:
        print(f"warning: audit failures: {report.failures}", file=sys.stderr)
    return 0


def cmd_sweep(args) -> int:
    scn = _load(args.scenario, args.seed)
    params = _params_from_args(args)
    values = [float(v) for v in args.values.split(",") if v.strip()]
    if not values:
        print("error: --values is empty", file=sys.stderr)
        return 1
    methods = [m.strip().replace("-", "_") for m in args.schemes.split(",") if m.strip()]
    if not methods:
        print("error: --schemes is empty", file=sys.stderr)
        return 1
    for m in methods:
        if m not in METHODS:
            print(f"error: unknown scheme {m!r}", file=sys.stderr)
            return 1
    manifest = RunManifest(
        command="sweep",
        scenario_digest=scenario_digest(scn),
        parameters=_param_dict(
            params, {"axis": args.axis, "values": values, "schemes": methods, "seed": args.seed}
        ),
    )
    os.makedirs(args.out, exist_ok=True)
    t0 = time.perf_counter()
    sweep = run_sweep(scn, args.axis, values, methods, params)
    payload = sweep.to_dict()
    payload["manifest"] = manifest.to_dict()
    _write_json(os.path.join(args.out, "sweep.json"), payload)
    lines = ["axis_value,scheme,T_s"]
    for cell in sweep.cells:
        t_txt = f"{cell['total_time_s']:.6g}" if cell["total_time_s"] is not None else ""
        lines.append(f"{cell['value']:.6g},{cell['scheme']},{t_txt}")
    with open(os.path.join(args.out, "sweep.csv"), "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
    from .plots import plot_sweep

    plot_sweep(sweep, os.path.join(args.out, "curves.svg"))
    manifest.wall_clock_s = time.perf_counter() - t0
    log.info("sweep finished in %.2f s (run %s)", manifest.wall_clock_s, manifest.run_digest())
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="noma-uav", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="verb", required=True)

    def common(p):
        p.add_argument("--scenario", required=True, help="scenario JSON path")
        p.add_argument("--seed", type=int, default=None, help="override the scenario RNG seed")
        p.add_argument("--delta", type=float, default=None, help="max segment length [m]")
        p.add_argument("--ns", type=int, default=None, help="half-leg segment count")
        p.add_argument("--eps", type=float, default=None, help="refinement stop threshold")

    p_check = sub.add_parser("check", help="feasibility verdict as JSON")
    common(p_check)
    p_check.set_defaults(func=cmd_check)

    p_plan = sub.add_parser("plan", help="run one planning method")
    common(p_plan)
    p_plan.add_argument("--method", default="sca", choices=[m.replace("_", "-") for m in METHODS] + list(METHODS))
    p_plan.add_argument("--out", default="out", help="output directory")
    p_plan.set_defaults(func=cmd_plan)

    p_sweep = sub.add_parser("sweep", help="re-plan across an axis of values")
    common(p_sweep)
    p_sweep.add_argument("--axis", required=True, choices=["u", "theta"])
    p_sweep.add_argument("--values", required=True, help="comma-separated axis values")
    p_sweep.add_argument("--schemes", default="fhf,sca", help="comma-separated methods")
    p_sweep.add_argument("--out", default="out", help="output directory")
    p_sweep.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("NOMA_UAV_LOG", "WARNING").upper())
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except NomaUavError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
