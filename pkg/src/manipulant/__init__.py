"""Manipulability ellipsoids on the SPD manifold: analysis of human motion
and manipulability-tracking control of kinematic chains."""

__version__ = "0.1.0"

from ._kernels import BACKEND
from .errors import (
    ConfigError,
    ConvergenceError,
    DimensionError,
    DivergenceError,
    EmptyComponentError,
    GraspError,
    ManipulantError,
    NotSpdError,
    SingularConfigurationError,
    UnreachableError,
)
from .kinematics import (
    AnthropomorphicArm,
    ArmTriangle,
    GraspModel,
    KinematicChain,
    arm_triangle_to_joints,
    forward_kinematics,
    grasp_matrix,
    jacobian,
    jacobian_derivative,
    wrist_pose_to_arm_triangle,
)
from .manipulability import (
    DualArmSystem,
    ManipulabilityEllipsoid,
    classical_indices,
    dual_arm_force_manipulability,
    dual_arm_velocity_manipulability,
    force_manipulability,
    manipulability_jacobian,
    reframe,
    velocity_manipulability,
)
from .spd import (
    SpdCovariance,
    frechet_mean,
    geodesic,
    spd_covariance,
    spd_distance,
    spd_exp,
    spd_log,
    sym_unvec,
    sym_vec,
)

__all__ = [name for name in dir() if not name.startswith("_")] + ["BACKEND"]
