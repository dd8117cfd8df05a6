"""Serial-manipulator kinematics.

Robots are modeled as chains of revolute joints. Each joint carries a unit
rotation axis and a fixed rigid-transform offset from its parent link frame;
link i's frame is the joint i frame after rotation. Body points (capsule
endpoints, the tool tip) are expressed in link-local coordinates.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

AXIS_UNIT_TOL = 1e-12
RANK_REL_TOL = 1e-9


class KinematicsError(ValueError):
    pass


class RankDeficientError(KinematicsError):
    """Task Jacobian has lost row rank (kinematic singularity)."""

    def __init__(self, rank: int, expected: int):
        self.rank = rank
        self.expected = expected
        super().__init__(
            f"Jacobian row rank {rank} below task dimension {expected}"
        )


class IKError(RuntimeError):
    """Inverse kinematics failed to reach the requested tolerance."""

    def __init__(self, message: str, best_residual: float):
        self.best_residual = float(best_residual)
        super().__init__(f"{message} (best residual {best_residual:.3e} m)")


def rotation_about_axis(axis: np.ndarray, angle: float) -> np.ndarray:
    """Rodrigues rotation matrix for a unit axis."""
    x, y, z = axis
    c = np.cos(angle)
    s = np.sin(angle)
    t = 1.0 - c
    return np.array(
        [
            [c + x * x * t, x * y * t - z * s, x * z * t + y * s],
            [y * x * t + z * s, c + y * y * t, y * z * t - x * s],
            [z * x * t - y * s, z * y * t + x * s, c + z * z * t],
        ]
    )


def rpy_matrix(roll: float, pitch: float, yaw: float) -> np.ndarray:
    """Rotation from roll/pitch/yaw about fixed x, y, z axes (Rz @ Ry @ Rx)."""
    cr, sr = np.cos(roll), np.sin(roll)
    cp, sp = np.cos(pitch), np.sin(pitch)
    cy, sy = np.cos(yaw), np.sin(yaw)
    return np.array(
        [
            [cy * cp, cy * sp * sr - sy * cr, cy * sp * cr + sy * sr],
            [sy * cp, sy * sp * sr + cy * cr, sy * sp * cr - cy * sr],
            [-sp, cp * sr, cp * cr],
        ]
    )


def rigid_transform(rotation: np.ndarray | None = None,
                    translation: np.ndarray | None = None) -> np.ndarray:
    """Build a 4x4 homogeneous transform."""
    T = np.eye(4)
    if rotation is not None:
        T[:3, :3] = rotation
    if translation is not None:
        T[:3, 3] = translation
    return T


@dataclass(frozen=True)
class Joint:
    """Revolute joint: unit rotation axis plus a fixed offset from the parent
    link frame (4x4 homogeneous transform)."""

    axis: np.ndarray
    origin: np.ndarray

    def __post_init__(self):
        axis = np.asarray(self.axis, dtype=float)
        origin = np.asarray(self.origin, dtype=float)
        if axis.shape != (3,):
            raise KinematicsError(f"joint axis must be a 3-vector, got {axis.shape}")
        if abs(np.linalg.norm(axis) - 1.0) > 1e-9:
            raise KinematicsError(f"joint axis must be unit length, got norm {np.linalg.norm(axis)!r}")
        if origin.shape != (4, 4):
            raise KinematicsError(f"joint origin must be a 4x4 transform, got {origin.shape}")
        object.__setattr__(self, "axis", axis)
        object.__setattr__(self, "origin", origin)


@dataclass(frozen=True)
class BodyPoint:
    """A point fixed to a link, in link-local coordinates."""

    link: int
    offset: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "offset", np.asarray(self.offset, dtype=float))


@dataclass(frozen=True)
class CapsuleSpec:
    """Capsule attached to a link: local segment endpoints and radius.

    ``world_capsules`` returns instances of the same type with the endpoints
    mapped to world coordinates.
    """

    link: int
    p0: np.ndarray
    p1: np.ndarray
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "p0", np.asarray(self.p0, dtype=float))
        object.__setattr__(self, "p1", np.asarray(self.p1, dtype=float))
        if self.radius <= 0.0 or not np.isfinite(self.radius):
            raise KinematicsError(f"capsule radius must be positive, got {self.radius}")


@dataclass(frozen=True)
class TaskJacobian:
    """Positional task Jacobian with its row dimension made explicit so tests
    can carry reduced (e.g. planar) Jacobians through the same code paths."""

    matrix: np.ndarray
    task_dim: int


class RobotModel:
    """Kinematic description of a revolute-joint serial arm."""

    def __init__(self, joints, joint_limits, link_capsules, tool_point,
                 name: str = "robot"):
        self.name = name
        self.joints = tuple(joints)
        self.dof = len(self.joints)
        if self.dof == 0:
            raise KinematicsError("robot needs at least one joint")
        limits = np.asarray(joint_limits, dtype=float)
        if limits.shape != (self.dof, 2):
            raise KinematicsError(
                f"joint_limits must be ({self.dof}, 2), got {limits.shape}"
            )
        if np.any(limits[:, 0] >= limits[:, 1]):
            bad = int(np.argmax(limits[:, 0] >= limits[:, 1]))
            raise KinematicsError(f"joint {bad}: lower limit must be below upper limit")
        self.lower = limits[:, 0].copy()
        self.upper = limits[:, 1].copy()
        # Capsules sorted by link index so distance ties resolve to the lowest
        # link deterministically.
        caps = sorted(link_capsules, key=lambda c: c.link)
        for cap in caps:
            if not 0 <= cap.link < self.dof:
                raise KinematicsError(f"capsule link {cap.link} out of range [0, {self.dof})")
        self.link_capsules = tuple(caps)
        if not 0 <= tool_point.link < self.dof:
            raise KinematicsError(f"tool link {tool_point.link} out of range [0, {self.dof})")
        self.tool_point = tool_point
        self.max_capsule_radius = max((c.radius for c in caps), default=0.0)

    def clamp(self, q: np.ndarray) -> np.ndarray:
        return np.clip(q, self.lower, self.upper)

    def within_limits(self, q: np.ndarray, atol: float = 0.0) -> bool:
        q = np.asarray(q, dtype=float)
        return bool(np.all(q >= self.lower - atol) and np.all(q <= self.upper + atol))

    def check_state(self, q) -> np.ndarray:
        q = np.asarray(q, dtype=float)
        if q.shape != (self.dof,):
            raise KinematicsError(f"joint state must have shape ({self.dof},), got {q.shape}")
        return q

    def chain(self, q: np.ndarray):
        """Link frames plus world joint origins/axes, one forward pass.

        Returns (frames, origins, axes): frames[i] is the 4x4 world transform
        of link i; origins[i]/axes[i] the world position and axis of joint i.
        """
        q = self.check_state(q)
        frames = np.empty((self.dof, 4, 4))
        origins = np.empty((self.dof, 3))
        axes = np.empty((self.dof, 3))
        T = np.eye(4)
        for i, joint in enumerate(self.joints):
            T = T @ joint.origin
            origins[i] = T[:3, 3]
            axes[i] = T[:3, :3] @ joint.axis
            R = rotation_about_axis(joint.axis, q[i])
            T = T @ rigid_transform(rotation=R)
            frames[i] = T
        return frames, origins, axes


def _resolve_point(model: RobotModel, point: BodyPoint | None) -> BodyPoint:
    if point is None:
        return model.tool_point
    if not 0 <= point.link < model.dof:
        raise KinematicsError(
            f"body point link {point.link} out of range [0, {model.dof})"
        )
    return point


def forward_kinematics(model: RobotModel, q, point: BodyPoint | None = None) -> np.ndarray:
    """World position of a body point (the tool tip by default)."""
    point = _resolve_point(model, point)
    frames, _, _ = model.chain(q)
    T = frames[point.link]
    return T[:3, :3] @ point.offset + T[:3, 3]


def task_jacobian(model: RobotModel, q, point: BodyPoint | None = None) -> TaskJacobian:
    """3xN positional Jacobian of a body point.

    Columns for joints beyond the point's link are zero.
    """
    point = _resolve_point(model, point)
    frames, origins, axes = model.chain(q)
    return _jacobian_from_chain(model, frames, origins, axes, point)


def _jacobian_from_chain(model, frames, origins, axes, point: BodyPoint) -> TaskJacobian:
    T = frames[point.link]
    p = T[:3, :3] @ point.offset + T[:3, 3]
    J = np.zeros((3, model.dof))
    n = point.link + 1
    J[:, :n] = np.cross(axes[:n], p[None, :] - origins[:n]).T
    return TaskJacobian(matrix=J, task_dim=3)


def kernel_basis(matrix: np.ndarray) -> np.ndarray:
    """Orthonormal basis of the kernel at the numerical-rank tolerance."""
    matrix = np.atleast_2d(np.asarray(matrix, dtype=float))
    _, s, Vt = np.linalg.svd(matrix)
    if s.size == 0:
        rank = 0
    else:
        rank = int(np.sum(s > RANK_REL_TOL * s[0]))
    return Vt[rank:].T


def null_space_basis(jac: TaskJacobian) -> np.ndarray:
    """N x (N - M) orthonormal null-space basis of a full-row-rank Jacobian.

    Raises RankDeficientError at singular configurations so callers can fall
    back or re-seed instead of silently using a degenerate basis.
    """
    matrix = np.atleast_2d(np.asarray(jac.matrix, dtype=float))
    _, s, Vt = np.linalg.svd(matrix)
    rank = int(np.sum(s > RANK_REL_TOL * s[0])) if s.size else 0
    if rank < jac.task_dim:
        raise RankDeficientError(rank, jac.task_dim)
    return Vt[rank:].T


def world_capsules(model: RobotModel, q) -> list[CapsuleSpec]:
    """Model capsules posed in the world frame at configuration q."""
    frames, _, _ = model.chain(q)
    out = []
    for cap in model.link_capsules:
        T = frames[cap.link]
        R = T[:3, :3]
        t = T[:3, 3]
        out.append(CapsuleSpec(cap.link, R @ cap.p0 + t, R @ cap.p1 + t, cap.radius))
    return out


def solve_ik(model: RobotModel, q_seed, target, tol: float = 1e-6,
             max_iter: int = 100) -> np.ndarray:
    """Damped least squares position IK, projected to joint limits.

    Steps are clamped to 0.2 rad per joint per iteration. Raises IKError
    carrying the best residual when the target is out of reach or the
    iteration stalls.
    """
    if tol <= 0.0:
        raise KinematicsError(f"ik tolerance must be positive, got {tol}")
    target = np.asarray(target, dtype=float)
    if target.shape != (3,):
        raise KinematicsError(f"ik target must be a 3-vector, got {target.shape}")
    q = model.clamp(model.check_state(q_seed))
    damping = 1e-3
    step_clamp = 0.2
    best = np.inf
    for _ in range(max_iter + 1):
        frames, origins, axes = model.chain(q)
        T = frames[model.tool_point.link]
        tip = T[:3, :3] @ model.tool_point.offset + T[:3, 3]
        err = target - tip
        res = float(np.linalg.norm(err))
        if res < best:
            best = res
        if res <= tol:
            return q
        J = _jacobian_from_chain(model, frames, origins, axes, model.tool_point).matrix
        JJt = J @ J.T + (damping ** 2) * np.eye(3)
        dq = J.T @ np.linalg.solve(JJt, err)
        peak = float(np.max(np.abs(dq)))
        if peak > step_clamp:
            dq *= step_clamp / peak
        q = model.clamp(q + dq)
    raise IKError("inverse kinematics did not converge", best)
