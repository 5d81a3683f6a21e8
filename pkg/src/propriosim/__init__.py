"""Desk-scale simulator for opening articulated objects with proprioceptive sensing.

The pipeline: an admittance-compliant end effector follows a reference that
advances along the current joint estimate; the joint twist is re-estimated
from the gripper pose history; a spring-coupled grasp with Coulomb-style slip
connects gripper and object.
"""

from .admittance import (
    AdmittanceParams,
    AdmittanceState,
    NonFiniteState,
    critical_damping,
    desired_pose,
    step_admittance,
)
from .articulation import (
    HELICAL,
    PRISMATIC,
    REVOLUTE,
    JointModel,
    OutOfLimits,
    PoseNoise,
    generate_pose_sequence,
    helical_joint,
    part_pose,
    prismatic_joint,
    revolute_joint,
    transform_joint,
)
from .contact import (
    ForceLimitExceeded,
    GraspCoupling,
    GraspLost,
    MechanismForces,
    World,
    apply_slip,
    contact_wrench,
    step_joint,
    step_world,
)
from .episode import EpisodeResult, RunnerConfig, axis_errors, run_episode
from .estimation import (
    EstimationResult,
    EstimatorOptions,
    InsufficientData,
    NoiseModel,
    estimate_joint,
    initial_estimate_from_grasp,
)
from .scenario import (
    ParseError,
    Scenario,
    ValidationError,
    build_world,
    builtin_scenario_path,
    list_builtin_scenarios,
    load_scenario,
    scenario_to_text,
)
from .se3 import Pose, Twist, adjoint_map, exp_twist, log_pose, se3_exp, se3_log

__version__ = "0.1.0"
