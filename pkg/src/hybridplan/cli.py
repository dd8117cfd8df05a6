"""Command-line interface: plan, sweep, gen-scene, verify.

Exit codes: 0 full success, 2 partial planning failure or failed
verification, 1 usage or input errors.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import bench, hybrid, scene_io
from .geometry import GeometryError
from .kinematics import KinematicsError
from .qp import QPError


def _traj_to_doc(traj: hybrid.Trajectory) -> dict:
    return {
        "states": [list(map(float, s)) for s in traj.states],
        "per_step": [
            {
                "success": m.success,
                "planner_used": m.planner_used,
                "wall_time": m.wall_time,
                "tcp_distance": m.tcp_distance,
                "safe_distance": m.safe_distance,
                "qp_iterations": m.qp_iterations,
                "ns_steps": m.ns_steps,
            }
            for m in traj.per_step
        ],
    }


def _traj_from_doc(doc: dict) -> hybrid.Trajectory:
    if not isinstance(doc, dict) or "states" not in doc or "per_step" not in doc:
        raise scene_io.SpecError("trajectory: expected object with states/per_step")
    states = [np.asarray(s, dtype=float) for s in doc["states"]]
    steps = []
    for i, m in enumerate(doc["per_step"]):
        try:
            steps.append(hybrid.StepMetrics(
                success=bool(m["success"]),
                planner_used=str(m["planner_used"]),
                wall_time=float(m["wall_time"]),
                tcp_distance=float(m["tcp_distance"]),
                safe_distance=float(m["safe_distance"]),
                qp_iterations=int(m.get("qp_iterations", 0)),
                ns_steps=int(m.get("ns_steps", 0)),
            ))
        except (KeyError, TypeError, ValueError) as e:
            raise scene_io.SpecError(f"trajectory.per_step[{i}]: {e}") from e
    return hybrid.Trajectory(states=states, per_step=steps)


def _load_json(path: str) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except OSError as e:
        raise scene_io.SpecError(f"cannot read {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise scene_io.SpecError(f"{path}:{e.lineno}: invalid JSON: {e.msg}") from e


def _cmd_plan(args) -> int:
    spec = scene_io.load_spec(args.spec)
    traj = hybrid.plan(spec.model, spec.scene, spec.path, spec.x_init,
                       cs_cfg=spec.cs_cfg, ns_cfg=spec.ns_cfg,
                       record_timing=not args.no_timing)
    if args.out:
        Path(args.out).write_text(json.dumps(_traj_to_doc(traj), indent=2) + "\n")
    total = len(spec.path)
    done = traj.success_count
    by_planner: dict[str, int] = {}
    for m in traj.per_step:
        if m.success:
            by_planner[m.planner_used] = by_planner.get(m.planner_used, 0) + 1
    used = ", ".join(f"{k}: {v}" for k, v in sorted(by_planner.items()))
    print(f"planned {done}/{total} waypoints ({used or 'none'})")
    if traj.per_step:
        time_total = sum(m.wall_time for m in traj.per_step)
        worst_tcp = max(m.tcp_distance for m in traj.per_step)
        min_safe = min(m.safe_distance for m in traj.per_step)
        print(f"total {time_total:.2f} s, worst tcp {worst_tcp * 1000.0:.3f} mm, "
              f"min clearance {min_safe * 1000.0:.3f} mm")
    if done < total:
        first_fail = len(traj.per_step) - 1
        print(f"stopped at waypoint {first_fail}")
        return 2
    return 0


def _cmd_sweep(args) -> int:
    spec = scene_io.load_spec(args.spec)
    variants = bench.variants_from_names(args.variants)
    report = bench.run_sweep(spec, variants, parallelism=args.parallel,
                             record_timing=not args.no_timing)
    if args.out:
        bench.emit_report(report, format=args.format, path=args.out)
        print(f"wrote {args.out}")
    elif args.format == "json":
        sys.stdout.write(bench.report_to_json(report))
    for name in report.variants:
        agg = report.aggregates.get(name)
        if agg is None:
            print(f"{name:>10}: no rows")
            continue
        time_s = "-" if agg.mean_step_time_s is None else f"{agg.mean_step_time_s:.3f}"
        tcp = "-" if agg.mean_tcp_mm is None else f"{agg.mean_tcp_mm:.3f}"
        safe = "-" if agg.mean_safe_mm is None else f"{agg.mean_safe_mm:.3f}"
        print(f"{name:>10}: success {agg.success_rate_pct:6.2f} %  "
              f"step {time_s} s  tcp {tcp} mm  safe {safe} mm")
    return 0 if all(r.success for r in report.rows) else 2


def _cmd_gen_scene(args) -> int:
    try:
        dims = [float(v) for v in args.tunnel.lower().split("x")]
    except ValueError:
        raise scene_io.SpecError(
            f"--tunnel: expected LxWxH numbers, got {args.tunnel!r}") from None
    if len(dims) != 3:
        raise scene_io.SpecError(f"--tunnel: expected 3 dims, got {len(dims)}")
    doc = scene_io.tunnel_experiment_doc(
        perturbation=args.perturb, seed=args.seed,
        generator={"tunnel": dims, "density": args.density,
                   "waypoints": args.waypoints, "seed": args.seed},
    )
    spec = scene_io.spec_from_doc(doc)  # validate before writing
    Path(args.out).write_text(json.dumps(doc, indent=2) + "\n")
    print(f"wrote {args.out}: {spec.scene.cloud.points.shape[0]} points, "
          f"{len(spec.path)} waypoints")
    return 0


def _cmd_verify(args) -> int:
    spec = scene_io.load_spec(args.spec)
    traj = _traj_from_doc(_load_json(args.trajectory))
    result = hybrid.verify_trajectory(spec.model, spec.scene, spec.path, traj,
                                      eq_threshold=spec.cs_cfg.eq_threshold)
    if result.ok:
        print(f"ok: {len(traj.states)} states verified")
        return 0
    for issue in result.issues:
        print(f"step {issue.step}: {issue.message}")
    print(f"{len(result.issues)} issue(s) found")
    return 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hybridplan",
        description="Incremental convex planner benchmark for confined scenes.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("plan", help="plan one spec and report per-step results")
    p.add_argument("spec", help="experiment spec JSON")
    p.add_argument("--out", help="write the trajectory JSON here")
    p.add_argument("--no-timing", action="store_true",
                   help="record zero wall times (deterministic output)")
    p.set_defaults(func=_cmd_plan)

    p = sub.add_parser("sweep", help="run planner variants over perturbations")
    p.add_argument("spec", help="experiment spec JSON")
    p.add_argument("--variants", default="baseline,csample,nsample,nlocal",
                   help="comma-separated planner variants")
    p.add_argument("--parallel", type=int, default=1, metavar="K",
                   help="worker processes")
    p.add_argument("--out", help="write the report here")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--no-timing", action="store_true",
                   help="record zero wall times (deterministic output)")
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("gen-scene", help="generate a tunnel experiment spec")
    p.add_argument("--tunnel", default="0.34x0.30x0.30", metavar="LxWxH",
                   help="bore interior dims in meters")
    p.add_argument("--density", type=float, default=3000.0,
                   help="wall sample density, points per square meter")
    p.add_argument("--waypoints", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--perturb", choices=("none", "robot", "workpiece"),
                   default="none", help="perturbation grid to embed")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_gen_scene)

    p = sub.add_parser("verify", help="independently re-check a trajectory")
    p.add_argument("trajectory", help="trajectory JSON from plan --out")
    p.add_argument("spec", help="experiment spec JSON")
    p.set_defaults(func=_cmd_verify)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (scene_io.SpecError, bench.BenchError, hybrid.PlanningError,
            GeometryError, KinematicsError, QPError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
