"""Quasi-static plant: spring-coupled grasp, Coulomb-style slip, 1-DOF joint dynamics.

The gripper is joined to the handle by a 6-DOF spring. Slip is restricted to
two directions where a parallel gripper actually gives way: rotation about the
closing axis and translation along the handle's long axis. Both use a
viscous-regularized Coulomb law (slip rate proportional to the excess over the
friction limit), which is deterministic and converges under dt refinement.

The joint itself is first order: generalized force (the reciprocal product of
joint twist and handle wrench) over damping gives the configuration rate,
after latch and closing-spring forces are taken out.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .articulation import JointModel, part_pose
from .se3 import Pose, so3_exp, so3_log


class GraspLost(RuntimeError):
    """Accumulated translational slip walked off the handle."""


class ForceLimitExceeded(RuntimeError):
    """Contact force magnitude passed the episode's abort threshold."""


@dataclass
class GraspCoupling:
    """Spring coupling between handle and gripper, with finite friction limits.

    grasp_transform maps the handle frame to the gripper's nominal (grasped)
    frame; it is identity at grasp time and only changes through slip.
    closing_axis / handle_axis are unit vectors in the handle frame: the
    fingers' closing line (rotational slip axis) and the handle's long axis
    (translational slip direction).
    """

    grasp_transform: Pose = field(default_factory=Pose.identity)
    k_couple_trans: float = 2000.0
    k_couple_rot: float = 20.0
    slip_torque_limit: float = np.inf
    slip_force_limit: float = np.inf
    slip_viscosity_rot: float = 1.0
    slip_viscosity_trans: float = 200.0
    closing_axis: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0, 0.0]))
    handle_axis: np.ndarray = field(default_factory=lambda: np.array([0.0, 1.0, 0.0]))
    handle_half_length: float = 0.06
    accumulated_slip_angle: float = 0.0
    accumulated_slip_dist: float = 0.0

    def __post_init__(self):
        self.closing_axis = np.asarray(self.closing_axis, dtype=float)
        self.handle_axis = np.asarray(self.handle_axis, dtype=float)
        for name in ("k_couple_trans", "k_couple_rot", "slip_viscosity_rot", "slip_viscosity_trans"):
            if getattr(self, name) < 0.0:
                raise ValueError(f"{name} must be >= 0")


@dataclass
class MechanismForces:
    """Joint-side mechanism forces: damping, breakaway latch, closing spring.

    The latch holds the joint (q_dot = 0) while q < latch_disengage_q unless
    the generalized force exceeds latch_breakaway. The closing spring pulls
    toward q = 0 while q < closing_spring_range_q. Damping must be positive:
    it sets the quasi-static rate q_dot = force / damping.
    """

    damping: float = 50.0
    latch_breakaway: float = 0.0
    latch_disengage_q: float = 0.0
    closing_spring_k: float = 0.0
    closing_spring_range_q: float = 0.0

    def __post_init__(self):
        if self.damping <= 0.0:
            raise ValueError("damping must be > 0")
        for name in ("latch_breakaway", "latch_disengage_q", "closing_spring_k", "closing_spring_range_q"):
            if getattr(self, name) < 0.0:
                raise ValueError(f"{name} must be >= 0")


@dataclass
class World:
    """Ground-truth scene state for one episode (single-threaded mutation)."""

    joint: JointModel
    grasp: GraspCoupling
    mech: MechanismForces
    gripper_pose: Pose
    q: float = 0.0
    handle_offset: Pose = field(default_factory=Pose.identity)
    force_limit: float = 80.0
    last_wrench: np.ndarray = field(default_factory=lambda: np.zeros(6))

    def handle_pose(self) -> Pose:
        return part_pose(self.joint, self.q) @ self.handle_offset


def contact_wrench(world: World) -> np.ndarray:
    """Spring wrench (torque; force) on the gripper, world axes, about the gripper origin.

    The handle sees the equal and opposite wrench at the same point.
    """
    anchor = world.handle_pose() @ world.grasp.grasp_transform
    e_t = anchor.translation - world.gripper_pose.translation
    e_r = so3_log(anchor.rotation @ world.gripper_pose.rotation.T)
    return np.concatenate(
        [world.grasp.k_couple_rot * e_r, world.grasp.k_couple_trans * e_t]
    )


def apply_slip(world: World, wrench: np.ndarray, dt: float) -> None:
    """Let the grasp give way where the coupling load exceeds the friction limits.

    Excess torque about the closing axis rotates grasp_transform at a rate
    excess/viscosity; excess force along the handle axis translates it
    likewise. Raises GraspLost once the translational slip leaves the handle.
    """
    grasp = world.grasp
    R_h = world.handle_pose().rotation

    tau_c = float(wrench[:3] @ (R_h @ grasp.closing_axis))
    if abs(tau_c) > grasp.slip_torque_limit:
        excess = abs(tau_c) - grasp.slip_torque_limit
        delta = np.sign(tau_c) * excess / grasp.slip_viscosity_rot * dt
        new_rot = so3_exp(-delta * grasp.closing_axis) @ grasp.grasp_transform.rotation
        grasp.grasp_transform = Pose(new_rot, grasp.grasp_transform.translation)
        grasp.accumulated_slip_angle += abs(delta)

    f_c = float(wrench[3:] @ (R_h @ grasp.handle_axis))
    if abs(f_c) > grasp.slip_force_limit:
        excess = abs(f_c) - grasp.slip_force_limit
        slide = np.sign(f_c) * excess / grasp.slip_viscosity_trans * dt
        grasp.grasp_transform = Pose(
            grasp.grasp_transform.rotation,
            grasp.grasp_transform.translation - slide * grasp.handle_axis,
        )
        grasp.accumulated_slip_dist += abs(slide)

    if grasp.accumulated_slip_dist > grasp.handle_half_length:
        raise GraspLost(
            f"slipped {grasp.accumulated_slip_dist:.4f} m along a handle of half-length "
            f"{grasp.handle_half_length:.4f} m"
        )


def step_joint(world: World, handle_wrench: np.ndarray, dt: float) -> None:
    """Advance q under the handle wrench (torque; force about the world origin)."""
    force = float(np.linalg.norm(handle_wrench[3:]))
    if force > world.force_limit:
        raise ForceLimitExceeded(f"contact force {force:.2f} N > limit {world.force_limit:.2f} N")

    V = world.joint.twist
    tau = float(V.angular @ handle_wrench[:3] + V.linear @ handle_wrench[3:])

    mech = world.mech
    tau_net = tau
    if world.q < mech.closing_spring_range_q:
        tau_net -= mech.closing_spring_k * world.q
    if world.q < mech.latch_disengage_q:
        if abs(tau) <= mech.latch_breakaway:
            return
        tau_net -= np.sign(tau) * mech.latch_breakaway

    world.q = world.joint.clamp(world.q + dt * tau_net / mech.damping)


def step_world(world: World, commanded_gripper_pose: Pose, dt: float) -> None:
    """One plant step: track the commanded pose, couple, slip, move the joint."""
    world.gripper_pose = commanded_gripper_pose
    w_g = contact_wrench(world)
    apply_slip(world, w_g, dt)
    p = world.gripper_pose.translation
    torque_h = -w_g[:3] + np.cross(p, -w_g[3:])
    step_joint(world, np.concatenate([torque_h, -w_g[3:]]), dt)
    world.last_wrench = w_g
