"""Waypoint-level orchestration.

plan() walks a task path one waypoint at a time: the incremental QP planner
first, the null-space escape as fallback when it reports stuck. A waypoint
that both planners fail terminates planning and the partial trajectory is
returned with the failed step recorded. Step success is always re-derived
from the reached state, never trusted from the inner planners.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import cspace, geometry, kinematics, nullspace


class PlanningError(ValueError):
    pass


@dataclass(frozen=True)
class TaskPath:
    """Ordered Cartesian tool targets with bounded consecutive spacing."""

    targets: np.ndarray
    max_step: float = 0.05

    def __post_init__(self):
        targets = np.asarray(self.targets, dtype=float)
        if targets.ndim != 2 or targets.shape[1] != 3:
            raise PlanningError(f"path targets must be (T, 3), got {targets.shape}")
        if not np.isfinite(targets).all():
            raise PlanningError("path targets must be finite")
        if self.max_step <= 0.0:
            raise PlanningError("max_step must be positive")
        if targets.shape[0] >= 2:
            gaps = np.linalg.norm(np.diff(targets, axis=0), axis=1)
            if np.any(gaps > self.max_step + 1e-12):
                i = int(np.argmax(gaps > self.max_step + 1e-12))
                raise PlanningError(
                    f"path spacing {gaps[i]:.4f} m between waypoints {i} and {i + 1} "
                    f"exceeds max_step {self.max_step}"
                )
        object.__setattr__(self, "targets", targets)

    def __len__(self) -> int:
        return self.targets.shape[0]


@dataclass
class StepMetrics:
    success: bool
    planner_used: str  # "cspace" | "nullspace" | fallback label | "none"
    wall_time: float
    tcp_distance: float
    safe_distance: float
    qp_iterations: int
    ns_steps: int


@dataclass
class Trajectory:
    states: list[np.ndarray] = field(default_factory=list)
    per_step: list[StepMetrics] = field(default_factory=list)

    @property
    def success_count(self) -> int:
        return sum(1 for m in self.per_step if m.success)

    @property
    def all_succeeded(self) -> bool:
        return all(m.success for m in self.per_step) and len(self.per_step) > 0


def _check_initial_state(model, scene, x_init) -> np.ndarray:
    x_init = model.check_state(x_init)
    if not model.within_limits(x_init, atol=1e-9):
        raise PlanningError("initial state violates joint limits")
    clearance = geometry.signed_distance(model, x_init, scene).value
    if clearance <= 0.0:
        raise PlanningError(
            f"initial state is not strictly safe (clearance {clearance:.4f} m)"
        )
    return x_init


def plan_with_fallback(model: kinematics.RobotModel, scene: geometry.Scene,
                       path: TaskPath, x_init, cs_cfg: cspace.CSpaceConfig | None = None,
                       fallback=None, record_timing: bool = True) -> Trajectory:
    """Plan a path with an arbitrary stuck-step fallback.

    fallback(x_prev, target) returns (state, label, ns_steps) or raises
    nullspace.EscapeError / kinematics.IKError to signal failure.
    """
    cs_cfg = cs_cfg or cspace.CSpaceConfig()
    x_prev = _check_initial_state(model, scene, x_init)
    traj = Trajectory()
    for target in path.targets:
        t0 = time.perf_counter() if record_timing else 0.0
        outcome = cspace.cspace_step(model, scene, x_prev, target, cs_cfg)
        state = outcome.state
        label = "cspace"
        ns_steps = 0
        qp_iters = outcome.qp_iterations
        if not outcome.converged and fallback is not None:
            try:
                state, label, ns_steps = fallback(x_prev, target)
            except (nullspace.EscapeError, kinematics.IKError):
                state = None
        elapsed = time.perf_counter() - t0 if record_timing else 0.0
        if state is None:
            tcp = float(np.linalg.norm(
                kinematics.forward_kinematics(model, x_prev) - target))
            safe = geometry.signed_distance(model, x_prev, scene).value
            traj.states.append(x_prev.copy())
            traj.per_step.append(StepMetrics(False, "none", elapsed, tcp, safe,
                                             qp_iters, ns_steps))
            break
        tcp = float(np.linalg.norm(
            kinematics.forward_kinematics(model, state) - target))
        safe = geometry.signed_distance(model, state, scene).value
        success = tcp <= cs_cfg.eq_threshold and safe > 0.0
        traj.states.append(state)
        traj.per_step.append(StepMetrics(success, label, elapsed, tcp, safe,
                                         qp_iters, ns_steps))
        if not success:
            break
        x_prev = state
    return traj


def plan(model: kinematics.RobotModel, scene: geometry.Scene, path: TaskPath,
         x_init, cs_cfg: cspace.CSpaceConfig | None = None,
         ns_cfg: nullspace.NullSpaceConfig | None = None,
         record_timing: bool = True) -> Trajectory:
    """Hybrid planner: incremental QP steps with null-space escape fallback."""
    ns_cfg = ns_cfg or nullspace.NullSpaceConfig()

    def escape(x_prev, target):
        state, steps = nullspace._escape(model, scene, x_prev, target, ns_cfg)
        return state, "nullspace", steps

    return plan_with_fallback(model, scene, path, x_init, cs_cfg, escape,
                              record_timing)


@dataclass
class VerifyIssue:
    step: int
    message: str


@dataclass
class VerifyResult:
    ok: bool
    issues: list[VerifyIssue]
    tcp_errors: np.ndarray
    clearances: np.ndarray


def verify_trajectory(model: kinematics.RobotModel, scene: geometry.Scene,
                      path: TaskPath, traj: Trajectory,
                      eq_threshold: float = 1e-3,
                      metric_tol: float = 1e-9) -> VerifyResult:
    """Recompute every step's metrics from its recorded state and check the
    recorded values and success flags against them."""
    issues: list[VerifyIssue] = []
    n = len(traj.states)
    if n != len(traj.per_step):
        issues.append(VerifyIssue(-1, "states and per_step lengths differ"))
        n = min(n, len(traj.per_step))
    if n > len(path):
        issues.append(VerifyIssue(-1, "trajectory longer than path"))
        n = len(path)
    tcp = np.zeros(n)
    clear = np.zeros(n)
    for i in range(n):
        state = traj.states[i]
        metrics = traj.per_step[i]
        if not model.within_limits(state, atol=1e-9):
            issues.append(VerifyIssue(i, "state violates joint limits"))
        tcp[i] = float(np.linalg.norm(
            kinematics.forward_kinematics(model, state) - path.targets[i]))
        clear[i] = geometry.signed_distance(model, state, scene).value
        if abs(tcp[i] - metrics.tcp_distance) > metric_tol:
            issues.append(VerifyIssue(
                i, f"tcp_distance mismatch: recorded {metrics.tcp_distance!r}, "
                   f"recomputed {tcp[i]!r}"))
        if abs(clear[i] - metrics.safe_distance) > metric_tol:
            issues.append(VerifyIssue(
                i, f"safe_distance mismatch: recorded {metrics.safe_distance!r}, "
                   f"recomputed {clear[i]!r}"))
        achieved = tcp[i] <= eq_threshold and clear[i] > 0.0
        if metrics.success and not achieved:
            issues.append(VerifyIssue(
                i, f"recorded success but tcp {tcp[i]:.6f} m / clearance "
                   f"{clear[i]:.6f} m do not meet thresholds"))
        if metrics.success != achieved:
            issues.append(VerifyIssue(
                i, "success flag disagrees with recomputed thresholds"))
    return VerifyResult(not issues, issues, tcp, clear)
