"""Benchmark harness: planner variants over perturbation sweeps.

Aggregation rules (also stated in the report header):
  - success_rate_pct counts every waypoint of every valid trial in the
    denominator; waypoints after a trial terminates count as failures.
  - mean_step_time_s averages over attempted steps only (rows that ran a
    planner; unattempted rows have empty time and distance cells).
  - mean_tcp_mm / mean_safe_mm average over successful steps only.

Per-trial seeding: SeedSequence((spec.seed, variant_index, trial_index)),
so results are independent of execution order and parallelism degree.
"""

from __future__ import annotations

import dataclasses
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import ClassVar, Union

import numpy as np

from . import cspace, hybrid, nullspace, scene_io


class BenchError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Planner variants


@dataclass(frozen=True)
class Baseline:
    """Incremental QP planner only; stuck means the trial stops there."""

    name: ClassVar[str] = "baseline"

    def plan_trial(self, spec: scene_io.ExperimentSpec,
                   seed_seq: np.random.SeedSequence,
                   record_timing: bool = True) -> hybrid.Trajectory:
        return hybrid.plan_with_fallback(
            spec.model, spec.scene, spec.path, spec.x_init,
            cs_cfg=spec.cs_cfg, fallback=None, record_timing=record_timing)


@dataclass(frozen=True)
class CSpaceSample:
    """Stuck recovery by random joint-space restarts near the stuck state."""

    restarts: int = 50
    ball_radius: float = 0.5

    name: ClassVar[str] = "csample"

    def __post_init__(self):
        if self.restarts < 1:
            raise BenchError("restarts must be >= 1")
        if self.ball_radius <= 0.0:
            raise BenchError("ball_radius must be positive")

    def plan_trial(self, spec: scene_io.ExperimentSpec,
                   seed_seq: np.random.SeedSequence,
                   record_timing: bool = True) -> hybrid.Trajectory:
        rng = np.random.default_rng(seed_seq)
        model, scene = spec.model, spec.scene

        def restart(x_prev, target):
            for _ in range(self.restarts):
                direction = rng.normal(size=model.dof)
                norm = float(np.linalg.norm(direction))
                if norm == 0.0:
                    continue
                radius = self.ball_radius * rng.random() ** (1.0 / model.dof)
                x_try = model.clamp(x_prev + (radius / norm) * direction)
                outcome = cspace.cspace_step(model, scene, x_try, target, spec.cs_cfg)
                if outcome.converged:
                    return outcome.state, "cspace", 0
            return None, "cspace", 0

        return hybrid.plan_with_fallback(
            model, scene, spec.path, spec.x_init,
            cs_cfg=spec.cs_cfg, fallback=restart, record_timing=record_timing)


@dataclass(frozen=True)
class NSpaceSample:
    """Null-space escape choosing directions by unit-sphere sampling."""

    directions: int = 50
    walk_steps: int = 100

    name: ClassVar[str] = "nsample"

    def __post_init__(self):
        if self.directions < 1:
            raise BenchError("directions must be >= 1")
        if self.walk_steps < 1:
            raise BenchError("walk_steps must be >= 1")

    def plan_trial(self, spec: scene_io.ExperimentSpec,
                   seed_seq: np.random.SeedSequence,
                   record_timing: bool = True) -> hybrid.Trajectory:
        seed = int(seed_seq.generate_state(1)[0])
        ns_cfg = dataclasses.replace(
            spec.ns_cfg,
            strategy=nullspace.UnitSphereSampling(
                sample_count=self.directions, seed=seed),
            max_steps=self.walk_steps,
        )
        model, scene = spec.model, spec.scene

        def escape(x_prev, target):
            state, steps = nullspace._escape(model, scene, x_prev, target, ns_cfg)
            return state, "nullspace", steps

        return hybrid.plan_with_fallback(
            model, scene, spec.path, spec.x_init,
            cs_cfg=spec.cs_cfg, fallback=escape, record_timing=record_timing)


@dataclass(frozen=True)
class NSpaceLocalOpt:
    """Null-space escape choosing directions by projected gradient descent."""

    inner_iters: int = 12
    learning_rate: float = 0.3

    name: ClassVar[str] = "nlocal"

    def __post_init__(self):
        if self.inner_iters < 1:
            raise BenchError("inner_iters must be >= 1")
        if self.learning_rate <= 0.0:
            raise BenchError("learning_rate must be positive")

    def plan_trial(self, spec: scene_io.ExperimentSpec,
                   seed_seq: np.random.SeedSequence,
                   record_timing: bool = True) -> hybrid.Trajectory:
        seed = int(seed_seq.generate_state(1)[0])
        ns_cfg = dataclasses.replace(
            spec.ns_cfg,
            strategy=nullspace.ProjectedGradientDescent(
                inner_iters=self.inner_iters, learning_rate=self.learning_rate,
                seed=seed),
        )
        model, scene = spec.model, spec.scene

        def escape(x_prev, target):
            state, steps = nullspace._escape(model, scene, x_prev, target, ns_cfg)
            return state, "nullspace", steps

        return hybrid.plan_with_fallback(
            model, scene, spec.path, spec.x_init,
            cs_cfg=spec.cs_cfg, fallback=escape, record_timing=record_timing)


PlannerVariant = Union[Baseline, CSpaceSample, NSpaceSample, NSpaceLocalOpt]

VARIANTS_BY_NAME = {
    "baseline": Baseline,
    "csample": CSpaceSample,
    "nsample": NSpaceSample,
    "nlocal": NSpaceLocalOpt,
}


def variants_from_names(names) -> list[PlannerVariant]:
    if isinstance(names, str):
        names = [n for n in names.split(",") if n]
    out = []
    for name in names:
        cls = VARIANTS_BY_NAME.get(name.strip())
        if cls is None:
            raise BenchError(f"unknown variant '{name}' "
                             f"(known: {', '.join(sorted(VARIANTS_BY_NAME))})")
        out.append(cls())
    return out


# ---------------------------------------------------------------------------
# Report model


@dataclass(frozen=True)
class BenchRow:
    variant: str
    trial_id: str
    step: int
    success: bool
    planner_used: str
    wall_time_s: float | None
    tcp_distance_mm: float | None
    safe_distance_mm: float | None


@dataclass(frozen=True)
class TrialInfo:
    trial_id: str
    valid: bool
    reason: str = ""


@dataclass(frozen=True)
class Aggregate:
    success_rate_pct: float
    mean_step_time_s: float | None
    mean_tcp_mm: float | None
    mean_safe_mm: float | None


@dataclass
class BenchReport:
    variants: list[str]
    trials: list[TrialInfo]
    waypoints: int
    rows: list[BenchRow]
    aggregates: dict[str, Aggregate]


def compute_aggregates(rows: list[BenchRow]) -> dict[str, Aggregate]:
    by_variant: dict[str, list[BenchRow]] = {}
    for row in rows:
        by_variant.setdefault(row.variant, []).append(row)
    out = {}
    for variant, vr in by_variant.items():
        succ = [r for r in vr if r.success]
        attempted = [r.wall_time_s for r in vr if r.wall_time_s is not None]
        rate = 100.0 * len(succ) / len(vr)
        mean_time = sum(attempted) / len(attempted) if attempted else None
        mean_tcp = sum(r.tcp_distance_mm for r in succ) / len(succ) if succ else None
        mean_safe = sum(r.safe_distance_mm for r in succ) / len(succ) if succ else None
        out[variant] = Aggregate(rate, mean_time, mean_tcp, mean_safe)
    return out


def _trajectory_rows(variant: str, trial_id: str, waypoints: int,
                     traj: hybrid.Trajectory) -> list[BenchRow]:
    rows = []
    for t in range(waypoints):
        if t < len(traj.per_step):
            m = traj.per_step[t]
            rows.append(BenchRow(variant, trial_id, t, m.success, m.planner_used,
                                 m.wall_time, m.tcp_distance * 1000.0,
                                 m.safe_distance * 1000.0))
        else:
            rows.append(BenchRow(variant, trial_id, t, False, "none",
                                 None, None, None))
    return rows


def _plan_work(args):
    variant, trial_spec, entropy, record_timing = args
    seed_seq = np.random.SeedSequence(entropy)
    return variant.plan_trial(trial_spec, seed_seq, record_timing)


def run_sweep(spec: scene_io.ExperimentSpec, variants: list[PlannerVariant],
              parallelism: int = 1, record_timing: bool = True) -> BenchReport:
    """Plan every valid (trial x variant) pair and aggregate the results."""
    if parallelism < 1:
        raise BenchError("parallelism must be >= 1")
    names = [v.name for v in variants]
    if len(set(names)) != len(names):
        raise BenchError(f"duplicate variant names in {names}")
    trials = scene_io.perturb(spec)
    infos = [TrialInfo(t.trial_id, t.valid, t.invalid_reason) for t in trials]
    waypoints = len(spec.path)

    work = []
    labels = []
    for vi, variant in enumerate(variants):
        for ti, trial in enumerate(trials):
            if not trial.valid:
                continue
            work.append((variant, trial.spec, (spec.seed, vi, ti), record_timing))
            labels.append((variant.name, trial.trial_id))
    if parallelism == 1 or len(work) <= 1:
        results = [_plan_work(w) for w in work]
    else:
        with ProcessPoolExecutor(max_workers=parallelism) as pool:
            results = list(pool.map(_plan_work, work))

    rows: list[BenchRow] = []
    for (vname, trial_id), traj in zip(labels, results):
        rows.extend(_trajectory_rows(vname, trial_id, waypoints, traj))
    return BenchReport(variants=names, trials=infos, waypoints=waypoints,
                       rows=rows, aggregates=compute_aggregates(rows))


# ---------------------------------------------------------------------------
# Serialization

_COLUMNS = ("variant", "trial_id", "step", "success", "planner_used",
            "wall_time_s", "tcp_distance_mm", "safe_distance_mm")
_AGG_COLUMNS = ("variant", "success_rate_pct", "mean_step_time_s",
                "mean_tcp_mm", "mean_safe_mm")


def _fmt(value) -> str:
    if value is None:
        return ""
    return repr(float(value))


def report_to_csv(report: BenchReport) -> str:
    invalid = [t for t in report.trials if not t.valid]
    lines = [
        "# sweep report",
        "# tcp/safe means over successful steps; step time over attempted steps;",
        "# success rate over all waypoints of all valid trials",
        f"# trials: {len(report.trials) - len(invalid)} valid, {len(invalid)} invalid",
    ]
    for t in invalid:
        lines.append(f"# invalid: {t.trial_id}: {t.reason}")
    lines.append(",".join(_COLUMNS))
    for r in report.rows:
        lines.append(",".join([
            r.variant, r.trial_id, str(r.step),
            "true" if r.success else "false", r.planner_used,
            _fmt(r.wall_time_s), _fmt(r.tcp_distance_mm), _fmt(r.safe_distance_mm),
        ]))
    lines.append("# aggregates")
    lines.append("# " + ",".join(_AGG_COLUMNS))
    for variant in report.variants:
        agg = report.aggregates.get(variant)
        if agg is None:
            continue
        lines.append("# " + ",".join([
            variant, _fmt(agg.success_rate_pct), _fmt(agg.mean_step_time_s),
            _fmt(agg.mean_tcp_mm), _fmt(agg.mean_safe_mm),
        ]))
    return "\n".join(lines) + "\n"


def report_to_json(report: BenchReport) -> str:
    doc = {
        "columns": list(_COLUMNS),
        "trials": [dataclasses.asdict(t) for t in report.trials],
        "waypoints": report.waypoints,
        "rows": [[r.variant, r.trial_id, r.step, r.success, r.planner_used,
                  r.wall_time_s, r.tcp_distance_mm, r.safe_distance_mm]
                 for r in report.rows],
        "aggregates": {name: dataclasses.asdict(agg)
                       for name, agg in report.aggregates.items()},
    }
    return json.dumps(doc, indent=2) + "\n"


def emit_report(report: BenchReport, format: str = "csv",
                path: str | Path | None = None) -> str:
    if format == "csv":
        text = report_to_csv(report)
    elif format == "json":
        text = report_to_json(report)
    else:
        raise BenchError(f"unknown report format '{format}'")
    if path is not None:
        try:
            Path(path).write_text(text)
        except OSError as e:
            raise BenchError(f"cannot write report {path}: {e}") from e
    return text


def _parse_opt(cell: str) -> float | None:
    return None if cell == "" else float(cell)


def read_report_csv(path: str | Path) -> tuple[list[BenchRow], dict[str, Aggregate]]:
    """Parse a CSV report back into rows and the emitted aggregate block."""
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise BenchError(f"cannot read report {path}: {e}") from e
    rows: list[BenchRow] = []
    aggregates: dict[str, Aggregate] = {}
    in_aggregates = False
    header_seen = False
    for lineno, line in enumerate(text.splitlines(), 1):
        if line == "# aggregates":
            in_aggregates = True
            continue
        if line.startswith("#"):
            if not in_aggregates:
                continue
            body = line[1:].strip()
            if not body or body.startswith("variant,"):
                continue
            cells = body.split(",")
            if len(cells) != len(_AGG_COLUMNS):
                raise BenchError(f"{path}:{lineno}: malformed aggregate line")
            aggregates[cells[0]] = Aggregate(
                float(cells[1]), _parse_opt(cells[2]),
                _parse_opt(cells[3]), _parse_opt(cells[4]))
            continue
        if not line.strip():
            continue
        cells = line.split(",")
        if not header_seen:
            if tuple(cells) != _COLUMNS:
                raise BenchError(f"{path}:{lineno}: unexpected header {cells}")
            header_seen = True
            continue
        if len(cells) != len(_COLUMNS):
            raise BenchError(f"{path}:{lineno}: expected {len(_COLUMNS)} cells")
        if cells[3] not in ("true", "false"):
            raise BenchError(f"{path}:{lineno}: bad success flag {cells[3]!r}")
        rows.append(BenchRow(cells[0], cells[1], int(cells[2]), cells[3] == "true",
                             cells[4], _parse_opt(cells[5]), _parse_opt(cells[6]),
                             _parse_opt(cells[7])))
    if not header_seen:
        raise BenchError(f"{path}: missing column header")
    return rows, aggregates
