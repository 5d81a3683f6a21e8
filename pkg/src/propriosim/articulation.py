"""1-DOF joint models (prismatic, revolute, helical) as world-frame twists."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .se3 import Pose, Twist, adjoint_map, exp_twist, skew, so3_exp

PRISMATIC = "prismatic"
REVOLUTE = "revolute"
HELICAL = "helical"
JOINT_TYPES = (PRISMATIC, REVOLUTE, HELICAL)


class OutOfLimits(ValueError):
    """Requested joint configuration lies outside the joint limits."""


@dataclass(frozen=True)
class PoseNoise:
    """Zero-mean Gaussian pose perturbation: translation sigma (m), rotation sigma (rad)."""

    sigma_translation: float = 0.0
    sigma_rotation: float = 0.0

    @property
    def is_zero(self) -> bool:
        return self.sigma_translation == 0.0 and self.sigma_rotation == 0.0


@dataclass(frozen=True)
class JointModel:
    """A single-DOF joint: part pose at configuration q is exp(q [twist]) @ zero_pose.

    The twist is in canonical gauge and expressed in the world frame. For a
    helical joint the pitch (m/rad) is folded into the linear component while
    the angular part stays unit length.
    """

    twist: Twist
    zero_pose: Pose = field(default_factory=Pose.identity)
    q_limits: tuple[float, float] = (0.0, 1.0)
    joint_type: str = PRISMATIC
    pitch: float = 0.0

    def __post_init__(self):
        lo, hi = self.q_limits
        if not lo <= hi:
            raise ValueError(f"q_limits out of order: {self.q_limits}")
        if self.joint_type not in JOINT_TYPES:
            raise ValueError(f"unknown joint type {self.joint_type!r}")
        wn = float(np.linalg.norm(self.twist.angular))
        if self.joint_type == PRISMATIC and wn > 1e-9:
            raise ValueError("prismatic joint must have zero angular twist component")
        if self.joint_type in (REVOLUTE, HELICAL) and abs(wn - 1.0) > 1e-9:
            raise ValueError("revolute/helical joint twist must have unit angular part")
        if self.joint_type == HELICAL and abs(self.pitch) <= 0.0:
            raise ValueError("helical joint needs a nonzero pitch")

    def clamp(self, q: float) -> float:
        return float(np.clip(q, self.q_limits[0], self.q_limits[1]))


def prismatic_joint(direction, zero_pose: Pose | None = None, q_limits=(0.0, 1.0)) -> JointModel:
    d = np.asarray(direction, dtype=float)
    d = d / np.linalg.norm(d)
    return JointModel(Twist(np.zeros(3), d), zero_pose or Pose.identity(), tuple(q_limits), PRISMATIC)


def revolute_joint(axis_direction, axis_origin, zero_pose: Pose | None = None, q_limits=(0.0, np.pi)) -> JointModel:
    w = np.asarray(axis_direction, dtype=float)
    w = w / np.linalg.norm(w)
    p = np.asarray(axis_origin, dtype=float)
    v = -np.cross(w, p)
    return JointModel(Twist(w, v), zero_pose or Pose.identity(), tuple(q_limits), REVOLUTE)


def helical_joint(axis_direction, axis_origin, pitch: float, zero_pose: Pose | None = None, q_limits=(0.0, np.pi)) -> JointModel:
    w = np.asarray(axis_direction, dtype=float)
    w = w / np.linalg.norm(w)
    p = np.asarray(axis_origin, dtype=float)
    v = -np.cross(w, p) + pitch * w
    return JointModel(Twist(w, v), zero_pose or Pose.identity(), tuple(q_limits), HELICAL, pitch=pitch)


def part_pose(joint: JointModel, q: float) -> Pose:
    """World pose of the moving part at configuration q.

    Raises OutOfLimits when q violates the limits by more than 1e-9; callers
    that want clamping must clamp explicitly.
    """
    lo, hi = joint.q_limits
    if q < lo - 1e-9 or q > hi + 1e-9:
        raise OutOfLimits(f"q={q} outside limits [{lo}, {hi}]")
    return exp_twist(joint.twist, q) @ joint.zero_pose


def transform_joint(joint: JointModel, T: Pose) -> JointModel:
    """The same joint rigidly moved by T (twist adjoint-mapped, zero pose shifted)."""
    return JointModel(
        adjoint_map(T, joint.twist),
        T @ joint.zero_pose,
        joint.q_limits,
        joint.joint_type,
        joint.pitch,
    )


def perturb_pose(P: Pose, noise: PoseNoise, rng: np.random.Generator) -> Pose:
    """Apply Gaussian translation noise and axis-uniform rotation noise to P."""
    if noise.is_zero:
        return P
    t = P.translation + rng.normal(0.0, noise.sigma_translation, 3)
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    angle = rng.normal(0.0, noise.sigma_rotation)
    R = so3_exp(axis * angle) @ P.rotation
    return Pose(R, t)


def generate_pose_sequence(
    joint: JointModel,
    qs,
    noise: PoseNoise = PoseNoise(),
    seed: int = 0,
) -> list[Pose]:
    """Part poses at each q, perturbed by `noise`; deterministic for a given seed."""
    rng = np.random.default_rng(seed)
    return [perturb_pose(part_pose(joint, float(q)), noise, rng) for q in qs]


def joint_axis_line(twist: Twist) -> tuple[np.ndarray, np.ndarray | None]:
    """(direction, point on axis) of a canonical-gauge twist.

    For a prismatic twist the direction is the linear part and the point is
    None (a translation axis has no position).
    """
    wn = float(np.linalg.norm(twist.angular))
    if wn < 1e-9:
        v = twist.linear / np.linalg.norm(twist.linear)
        return v, None
    w = twist.angular / wn
    point = np.cross(w, twist.linear / wn)
    return w, point


# re-export for callers that build skew matrices from axis vectors
__all__ = [
    "PRISMATIC",
    "REVOLUTE",
    "HELICAL",
    "JOINT_TYPES",
    "OutOfLimits",
    "PoseNoise",
    "JointModel",
    "prismatic_joint",
    "revolute_joint",
    "helical_joint",
    "part_pose",
    "transform_joint",
    "perturb_pose",
    "generate_pose_sequence",
    "joint_axis_line",
    "skew",
]
