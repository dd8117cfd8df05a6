"""Null-space escape planner.

When the incremental QP planner gets stuck, the arm is re-anchored onto the
task manifold by IK and then walked along its self-motion manifold: at each
step a unit direction w in null-space coordinates is chosen to trade off
clearance gain against drift from the previous state, the configuration
moves by alpha * N w, and IK re-anchors whenever the tool has drifted past
the task threshold. The walk ends at the first strictly safe configuration.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import geometry, kinematics

_IK_MAX_ITER = 150


class EscapeError(RuntimeError):
    """Null-space walk failed; carries the best clearance seen."""

    def __init__(self, message: str, best_clearance: float):
        self.best_clearance = float(best_clearance)
        super().__init__(f"{message} (best clearance {best_clearance:.4f} m)")


@dataclass(frozen=True)
class UnitSphereSampling:
    """Pick the best of sample_count random unit directions (ties broken by
    lowest sample index)."""

    sample_count: int = 50
    seed: int = 0


@dataclass(frozen=True)
class ProjectedGradientDescent:
    """Normalized-gradient descent on the unit sphere from a random initial
    direction, finite-difference gradients of the objective; keeps the best
    iterate."""

    inner_iters: int = 12
    learning_rate: float = 0.3
    fd_step: float = 1e-5
    seed: int = 0


DirectionStrategy = UnitSphereSampling | ProjectedGradientDescent


@dataclass(frozen=True)
class NullSpaceConfig:
    alpha: float = 0.05
    reanchor_threshold: float = 1e-3
    max_steps: int = 200
    ik_tol: float = 1e-6
    clearance_weight: float = 1.0
    strategy: DirectionStrategy = UnitSphereSampling()

    def __post_init__(self):
        if self.alpha <= 0.0:
            raise ValueError("alpha must be positive")
        if self.reanchor_threshold <= 0.0:
            raise ValueError("reanchor_threshold must be positive")
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")
        if self.ik_tol <= 0.0:
            raise ValueError("ik_tol must be positive")
        if self.clearance_weight <= 0.0:
            raise ValueError("clearance_weight must be positive")


def _direction_objective(model, scene, x_ref, x_prev, basis, cfg):
    alpha = cfg.alpha
    weight = cfg.clearance_weight

    def j2(w: np.ndarray) -> float:
        x = x_ref + alpha * (basis @ w)
        value = geometry.signed_distance(model, x, scene).value
        drift = x - x_prev
        return float(-weight * value + drift @ drift)

    return j2


def _normalize(w: np.ndarray) -> np.ndarray:
    norm = float(np.linalg.norm(w))
    if norm == 0.0:
        out = np.zeros_like(w)
        out[0] = 1.0
        return out
    return w / norm


def _optimize_direction(model, scene, x_ref, x_prev, basis, cfg,
                        rng: np.random.Generator | None) -> np.ndarray:
    k = basis.shape[1]
    j2 = _direction_objective(model, scene, x_ref, x_prev, basis, cfg)
    strategy = cfg.strategy
    if isinstance(strategy, UnitSphereSampling):
        if rng is None:
            rng = np.random.default_rng(strategy.seed)
        samples = rng.normal(size=(strategy.sample_count, k))
        best_w = None
        best_val = np.inf
        for row in samples:
            w = _normalize(row)
            val = j2(w)
            if val < best_val:
                best_val = val
                best_w = w
        return best_w
    if isinstance(strategy, ProjectedGradientDescent):
        # Random restart each call: a fixed initial direction (for example
        # the pull-back) can sit on a stationary crease of the objective and
        # trap every walk step in the same basin.
        if rng is None:
            rng = np.random.default_rng(strategy.seed)
        w = _normalize(rng.normal(size=k))
        best_w = w
        best_val = j2(w)
        h = strategy.fd_step
        for _ in range(strategy.inner_iters):
            grad = np.empty(k)
            for i in range(k):
                e = np.zeros(k)
                e[i] = h
                grad[i] = (j2(w + e) - j2(w - e)) / (2.0 * h)
            grad -= (grad @ w) * w
            norm = float(np.linalg.norm(grad))
            if norm == 0.0:
                break
            w = _normalize(w - strategy.learning_rate * grad / norm)
            val = j2(w)
            if val < best_val:
                best_val = val
                best_w = w
        return best_w
    raise TypeError(f"unknown direction strategy {strategy!r}")


def optimize_direction(model: kinematics.RobotModel, scene: geometry.Scene,
                       x_ref, x_prev, cfg: NullSpaceConfig,
                       rng: np.random.Generator | None = None) -> np.ndarray:
    """Unit direction in null-space coordinates minimizing the escape
    objective (negated weighted clearance plus squared drift from x_prev)."""
    x_ref = model.check_state(x_ref)
    x_prev = model.check_state(x_prev)
    jac = kinematics.task_jacobian(model, x_ref)
    basis = kinematics.kernel_basis(jac.matrix)
    if basis.shape[1] == 0:
        raise EscapeError("no null space at the anchor configuration",
                          geometry.signed_distance(model, x_ref, scene).value)
    return _optimize_direction(model, scene, x_ref, x_prev, basis, cfg, rng)


def _escape(model, scene, x_prev, c_next, cfg, trace=None):
    """Core walk; returns (state, steps_taken)."""
    x_prev = model.check_state(x_prev)
    c_next = np.asarray(c_next, dtype=float)
    x_ref = kinematics.solve_ik(model, x_prev, c_next, tol=cfg.ik_tol,
                                max_iter=_IK_MAX_ITER)
    rng = np.random.default_rng(cfg.strategy.seed)
    best = -np.inf
    steps = 0
    while True:
        clearance = geometry.signed_distance(model, x_ref, scene).value
        if clearance > best:
            best = clearance
        if clearance > 0.0:
            break
        if steps >= cfg.max_steps:
            raise EscapeError("null-space walk exhausted max_steps", best)
        jac = kinematics.task_jacobian(model, x_ref)
        basis = kinematics.kernel_basis(jac.matrix)
        if basis.shape[1] == 0:
            raise EscapeError("no null space at the anchor configuration", best)
        w = _optimize_direction(model, scene, x_ref, x_prev, basis, cfg, rng)
        x_ref = model.clamp(x_ref + cfg.alpha * (basis @ w))
        drift = float(np.linalg.norm(
            kinematics.forward_kinematics(model, x_ref) - c_next))
        if drift > cfg.reanchor_threshold:
            x_ref = kinematics.solve_ik(model, x_ref, c_next, tol=cfg.ik_tol,
                                        max_iter=_IK_MAX_ITER)
            drift = float(np.linalg.norm(
                kinematics.forward_kinematics(model, x_ref) - c_next))
        steps += 1
        if trace is not None:
            s = np.linalg.svd(jac.matrix, compute_uv=False)
            trace.append({
                "step": steps,
                "drift": drift,
                "sigma_max": float(s[0]) if s.size else 0.0,
                "clearance": geometry.signed_distance(model, x_ref, scene).value,
            })
    tip_err = float(np.linalg.norm(
        kinematics.forward_kinematics(model, x_ref) - c_next))
    if tip_err > cfg.reanchor_threshold:
        raise EscapeError("escape left the task manifold", best)
    return x_ref, steps


def nullspace_escape(model: kinematics.RobotModel, scene: geometry.Scene,
                     x_prev, c_next, cfg: NullSpaceConfig | None = None,
                     trace: list | None = None) -> np.ndarray:
    """Walk the self-motion manifold from a stuck state to a safe one.

    Returns a configuration with positive clearance whose tool error is
    within the re-anchor threshold. Raises EscapeError (carrying the best
    clearance reached) when the walk exhausts max_steps, and propagates
    IKError when the target cannot be anchored.
    """
    cfg = cfg or NullSpaceConfig()
    state, _ = _escape(model, scene, x_prev, c_next, cfg, trace)
    return state
