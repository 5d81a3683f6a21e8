"""Closed-loop opening episodes: move along the estimate, re-estimate, repeat.

Each episode starts from a prismatic prior along the grasp frame's -Z axis,
commands motions of step_dq along the current twist estimate, and re-runs the
joint estimation on the full measured pose history after every N motions,
until the (estimated or true) configuration reaches the target or the episode
fails. Ground truth is used only for termination checks and metrics, never by
the estimator.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

from .admittance import AdmittanceParams, AdmittanceState, desired_pose, step_admittance, wrench_to_frame
from .articulation import JointModel, PoseNoise, joint_axis_line, perturb_pose
from .contact import ForceLimitExceeded, GraspLost, World, step_world
from .estimation import (
    EstimationResult,
    InsufficientData,
    NoiseModel,
    estimate_joint,
    initial_estimate_from_grasp,
)
from .se3 import Twist, exp_twist

FAIL_GRASP_LOST = "GraspLost"
FAIL_FORCE_LIMIT = "ForceLimitExceeded"
FAIL_MAX_STEPS = "MaxSteps"
FAIL_NOT_CONVERGED = "NotConverged"

TRAJECTORY_COLUMNS = (
    "t",
    "gx",
    "gy",
    "gz",
    "gqw",
    "gqx",
    "gqy",
    "gqz",
    "q_true",
    "q_est",
    "fx",
    "fy",
    "fz",
    "tx",
    "ty",
    "tz",
    "slip_angle",
)


@dataclass(frozen=True)
class RunnerConfig:
    """Episode parameters. step_dq and target_q are in joint units (m or rad)."""

    target_q: float
    step_dq: float = 0.01
    poses_per_estimate: int = 5
    max_steps: int = 100
    dt: float = 0.002
    motion_time: float = 0.2
    pose_noise: PoseNoise = field(default_factory=PoseNoise)
    estimator_noise: NoiseModel = field(default_factory=NoiseModel)
    success_threshold: float = 0.9
    seed: int = 0

    def __post_init__(self):
        if self.poses_per_estimate < 1:
            raise ValueError("poses_per_estimate must be >= 1")
        if self.step_dq <= 0.0:
            raise ValueError("step_dq must be > 0")
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")


@dataclass
class EpisodeResult:
    success: bool
    final_q_fraction: float
    steps: int
    sim_time: float
    wall_time: float
    estimates: list[EstimationResult]
    axis_direction_error: float | None
    axis_position_error: float | None
    peak_force: float
    accumulated_slip_angle: float
    failure_reason: str | None
    trajectory: list[list[float]] | None = None


def axis_errors(estimated: Twist, truth: JointModel) -> tuple[float, float | None]:
    """(direction error deg in [0, 90], line-to-line distance m or None).

    A joint axis is a line without a preferred sign, so the direction error is
    folded below 90 degrees. The position error is reported only when both
    twists have a rotation axis; prismatic axes have no position.
    """
    d_est, p_est = joint_axis_line(estimated)
    d_true, p_true = joint_axis_line(truth.twist)
    dot = np.clip(abs(float(d_est @ d_true)), 0.0, 1.0)
    direction_error = float(np.degrees(np.arccos(dot)))
    if p_est is None or p_true is None:
        return direction_error, None
    diff = p_true - p_est
    cross = np.cross(d_est, d_true)
    ncross = float(np.linalg.norm(cross))
    if ncross < 1e-9:
        perp = diff - float(diff @ d_est) * d_est
        return direction_error, float(np.linalg.norm(perp))
    return direction_error, abs(float(diff @ cross)) / ncross


def _trajectory_row(t: float, world: World, q_est: float) -> list[float]:
    g = world.gripper_pose
    quat = g.quat_wxyz()
    w = world.last_wrench
    return [
        t,
        *(float(x) for x in g.translation),
        *(float(x) for x in quat),
        float(world.q),
        float(q_est),
        *(float(x) for x in w[3:]),  # force
        *(float(x) for x in w[:3]),  # torque
        float(world.grasp.accumulated_slip_angle),
    ]


def run_episode(
    world: World,
    controller: AdmittanceParams,
    cfg: RunnerConfig,
    record_trajectory: bool = False,
) -> EpisodeResult:
    """Run one opening episode to completion; failures land in failure_reason."""
    wall_start = time.perf_counter()
    rng = np.random.default_rng(cfg.seed)
    steps_per_motion = max(1, round(cfg.motion_time / cfg.dt))

    current_twist = initial_estimate_from_grasp(world.gripper_pose)
    direction = 1.0
    estimates: list[EstimationResult] = []
    history = [perturb_pose(world.gripper_pose, cfg.pose_noise, rng)]
    state = AdmittanceState(reference=world.gripper_pose)

    q_start = world.q
    q_est = 0.0
    motions = 0
    sim_time = 0.0
    peak_force = 0.0
    failure: str | None = None
    trajectory = [_trajectory_row(0.0, world, q_est)] if record_trajectory else None

    target_reached = cfg.target_q <= 0.0

    while not target_reached and motions < cfg.max_steps:
        # slew the reference along the current twist estimate: the sub-steps
        # compose to exactly exp(step_dq [V]) @ X_r per motion command
        advance = exp_twist(current_twist, direction * cfg.step_dq / steps_per_motion)
        try:
            for _ in range(steps_per_motion):
                state = state.with_reference(advance @ state.reference)
                w_ext = wrench_to_frame(world.last_wrench, world.gripper_pose, controller.frame)
                state = step_admittance(state, controller, w_ext, cfg.dt)
                step_world(world, desired_pose(state, controller), cfg.dt)
                sim_time += cfg.dt
                peak_force = max(peak_force, float(np.linalg.norm(world.last_wrench[3:])))
        except GraspLost:
            failure = FAIL_GRASP_LOST
            break
        except ForceLimitExceeded:
            failure = FAIL_FORCE_LIMIT
            break
        motions += 1
        history.append(perturb_pose(world.gripper_pose, cfg.pose_noise, rng))
        if motions % cfg.poses_per_estimate == 0:
            try:
                result = estimate_joint(history, cfg.estimator_noise, init=current_twist)
            except InsufficientData:
                result = None  # keep moving on the previous estimate
            if result is not None:
                estimates.append(result)
                current_twist = result.twist
                q_est = float(result.configurations[-1])
                direction = 1.0 if q_est >= 0.0 else -1.0
        if trajectory is not None:
            trajectory.append(_trajectory_row(sim_time, world, q_est))
        if world.q - q_start >= cfg.target_q or abs(q_est) >= cfg.target_q:
            target_reached = True

    if cfg.target_q > 0:
        fraction = (world.q - q_start) / cfg.target_q
    else:
        fraction = 1.0
    success = failure is None and fraction >= cfg.success_threshold
    if failure is None and not success and motions >= cfg.max_steps:
        if estimates and not estimates[-1].converged:
            failure = FAIL_NOT_CONVERGED
        else:
            failure = FAIL_MAX_STEPS
        success = False

    if estimates:
        dir_err, pos_err = axis_errors(estimates[-1].twist, world.joint)
    else:
        dir_err, pos_err = None, None

    return EpisodeResult(
        success=success,
        final_q_fraction=float(fraction),
        steps=motions,
        sim_time=float(sim_time),
        wall_time=time.perf_counter() - wall_start,
        estimates=estimates,
        axis_direction_error=dir_err,
        axis_position_error=pos_err,
        peak_force=float(peak_force),
        accumulated_slip_angle=float(world.grasp.accumulated_slip_angle),
        failure_reason=failure,
        trajectory=trajectory,
    )
