"""Incremental convex motion planning for confined, cluttered workspaces.

Plans joint trajectories for redundant serial arms whose tool point must
track a Cartesian path while every link capsule keeps positive clearance
from a point-cloud workpiece. A per-waypoint QP planner handles the nominal
case; a null-space walk rescues stuck postures. A benchmark harness compares
planner variants over perturbation sweeps.
"""

from .cspace import (CSpaceConfig, StepOutcome, convexify_safety, cspace_step,
                     linearize_equality)
from .geometry import (Box, Capsule, Clearance, GeometryError, PointCloud,
                       Scene, distance_gradient, segment_cloud_distance,
                       signed_distance)
from .hybrid import (PlanningError, StepMetrics, TaskPath, Trajectory, plan,
                     plan_with_fallback, verify_trajectory)
from .kinematics import (BodyPoint, CapsuleSpec, IKError, Joint,
                         KinematicsError, RankDeficientError, RobotModel,
                         TaskJacobian, forward_kinematics, kernel_basis,
                         null_space_basis, solve_ik, task_jacobian,
                         world_capsules)
from .nullspace import (EscapeError, NullSpaceConfig, ProjectedGradientDescent,
                        UnitSphereSampling, nullspace_escape,
                        optimize_direction)
from .qp import QPError, QPProblem, QPSolution, solve_qp
from .scene_io import (ExperimentSpec, SpecError, TunnelParams,
                       generate_tunnel_scene, load_spec, load_xyz, perturb,
                       save_spec, save_xyz)

__version__ = "0.1.0"

__all__ = [
    "BodyPoint", "Box", "Capsule", "CapsuleSpec", "Clearance", "CSpaceConfig",
    "EscapeError", "ExperimentSpec", "GeometryError", "IKError", "Joint",
    "KinematicsError", "NullSpaceConfig", "PlanningError", "PointCloud",
    "ProjectedGradientDescent", "QPError", "QPProblem", "QPSolution",
    "RankDeficientError", "RobotModel", "Scene", "SpecError", "StepMetrics",
    "StepOutcome", "TaskJacobian", "TaskPath", "Trajectory", "TunnelParams",
    "UnitSphereSampling", "convexify_safety", "cspace_step",
    "distance_gradient", "forward_kinematics", "generate_tunnel_scene",
    "kernel_basis", "linearize_equality", "load_spec", "load_xyz",
    "null_space_basis", "nullspace_escape", "optimize_direction", "perturb",
    "plan", "plan_with_fallback", "save_spec", "save_xyz",
    "segment_cloud_distance", "signed_distance", "solve_ik", "solve_qp",
    "task_jacobian", "verify_trajectory", "world_capsules",
]
