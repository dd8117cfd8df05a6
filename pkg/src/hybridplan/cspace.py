"""Incremental configuration-space planning step.

Each waypoint is reached by solving a short sequence of convex QPs: the
task equality is linearized at the current reference, the safety constraint
is replaced by its supporting halfspace (gradient row at the reference), and
the step is boxed by joint limits intersected with a trust region. Getting
stuck is an expected outcome, reported as a value rather than an error, so
the caller can switch planners.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import geometry, kinematics, qp


@dataclass(frozen=True)
class CSpaceConfig:
    eq_threshold: float = 1e-3
    safety_eps: float = 1e-4
    max_outer_iter: int = 50
    step_converge_tol: float = 1e-6
    trust_region: float = 0.3

    def __post_init__(self):
        for name in ("eq_threshold", "safety_eps", "step_converge_tol", "trust_region"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be positive")
        if self.max_outer_iter < 1:
            raise ValueError("max_outer_iter must be >= 1")


@dataclass
class StepOutcome:
    """Result of one waypoint attempt.

    converged=True carries the reached state; otherwise reason is one of
    "qp_infeasible", "no_progress", "max_iterations", "qp_not_solved".
    objective_trace records ||x_k - x_prev||^2 after each QP solve.
    """

    converged: bool
    state: np.ndarray | None
    reason: str
    qp_iterations: int
    final_tcp_error: float
    final_clearance: float
    objective_trace: list[float] = field(default_factory=list)


def linearize_equality(model: kinematics.RobotModel, x_ref, c_next):
    """First-order task equality at x_ref: Jac x = Jac x_ref + (target - tip)."""
    x_ref = np.asarray(x_ref, dtype=float)
    c_next = np.asarray(c_next, dtype=float)
    J = kinematics.task_jacobian(model, x_ref).matrix
    tip = kinematics.forward_kinematics(model, x_ref)
    return J, J @ x_ref + (c_next - tip)


def convexify_safety(model: kinematics.RobotModel, x_ref, scene: geometry.Scene,
                     eps: float):
    """Supporting halfspace of the safety constraint at x_ref.

    Row a and offset b with a x >= b, where b = a x_ref - D(x_ref) + eps;
    eps keeps the realized constraint strictly inside the safe set.
    """
    x_ref = np.asarray(x_ref, dtype=float)
    c, grad = geometry.clearance_and_gradient(model, x_ref, scene)
    return grad, float(grad @ x_ref - c.value + eps)


def cspace_step(model: kinematics.RobotModel, scene: geometry.Scene, x_prev,
                c_next, cfg: CSpaceConfig | None = None) -> StepOutcome:
    """Plan one waypoint from x_prev toward tool target c_next."""
    cfg = cfg or CSpaceConfig()
    x_prev = model.check_state(x_prev)
    if not model.within_limits(x_prev, atol=1e-9):
        raise kinematics.KinematicsError("cspace_step start state violates joint limits")
    c_next = np.asarray(c_next, dtype=float)

    x_ref = x_prev.copy()
    qp_count = 0
    trace: list[float] = []
    H = 2.0 * np.eye(model.dof)

    while True:
        tip = kinematics.forward_kinematics(model, x_ref)
        tcp_err = float(np.linalg.norm(tip - c_next))
        clearance, grad = geometry.clearance_and_gradient(model, x_ref, scene)
        if tcp_err <= cfg.eq_threshold and clearance.value > 0.0:
            return StepOutcome(True, x_ref, "", qp_count, tcp_err, clearance.value, trace)
        if qp_count >= cfg.max_outer_iter:
            return StepOutcome(False, None, "max_iterations", qp_count, tcp_err,
                               clearance.value, trace)

        A_eq = kinematics.task_jacobian(model, x_ref).matrix
        b_eq = A_eq @ x_ref + (c_next - tip)
        a_in = grad[None, :]
        b_in = np.array([float(grad @ x_ref - clearance.value + cfg.safety_eps)])
        lower = np.maximum(model.lower, x_ref - cfg.trust_region)
        upper = np.minimum(model.upper, x_ref + cfg.trust_region)
        problem = qp.QPProblem(H, -2.0 * x_prev, A_eq=A_eq, b_eq=b_eq,
                               A_in=a_in, b_in=b_in, lower=lower, upper=upper)
        sol = qp.solve_qp(problem)
        qp_count += 1
        if sol.status == "infeasible":
            return StepOutcome(False, None, "qp_infeasible", qp_count, tcp_err,
                               clearance.value, trace)
        if sol.status != "optimal":
            return StepOutcome(False, None, "qp_not_solved", qp_count, tcp_err,
                               clearance.value, trace)
        step = float(np.max(np.abs(sol.x - x_ref)))
        trace.append(float(np.sum((sol.x - x_prev) ** 2)))
        x_ref = sol.x
        if step < cfg.step_converge_tol:
            tip = kinematics.forward_kinematics(model, x_ref)
            tcp_err = float(np.linalg.norm(tip - c_next))
            value = geometry.signed_distance(model, x_ref, scene).value
            if tcp_err <= cfg.eq_threshold and value > 0.0:
                return StepOutcome(True, x_ref, "", qp_count, tcp_err, value, trace)
            return StepOutcome(False, None, "no_progress", qp_count, tcp_err,
                               value, trace)
