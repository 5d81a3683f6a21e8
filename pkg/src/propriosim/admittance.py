"""Admittance dynamics: external wrenches become deviations from a reference pose.

The deviation X_e and its rate are integrated in minimal 6-coordinates
(rotation; translation) with a semi-implicit Euler step of

    W_ext = K X_e + B dX_e + M ddX_e

so the zero-input energy 0.5 (dX_e' M dX_e + X_e' K X_e) is non-increasing
step by step for any stable dt.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .se3 import Pose, se3_exp

GRIPPER_FRAME = "gripper"
WORLD_FRAME = "world"

MAX_DT = 0.05


class NonFiniteState(ArithmeticError):
    """Integration blew up; the episode must abort."""


def _vec6(x, name: str) -> np.ndarray:
    v = np.asarray(x, dtype=float)
    if v.shape != (6,):
        raise ValueError(f"{name} must be a 6-vector, got shape {v.shape}")
    return v


def critical_damping(stiffness, mass) -> np.ndarray:
    """Per-axis damping 2 sqrt(K M) (no overshoot for a step input)."""
    return 2.0 * np.sqrt(np.asarray(stiffness, float) * np.asarray(mass, float))


@dataclass(frozen=True)
class AdmittanceParams:
    """Diagonal gains, rotational components first.

    stiffness: (N*m/rad x3, N/m x3); damping: (N*m*s/rad x3, N*s/m x3);
    mass: (kg*m^2 x3, kg x3). `frame` declares the frame the wrench is
    expressed in and the frame X_e composes in.
    """

    stiffness: np.ndarray = field(
        default_factory=lambda: np.array([2.0, 2.0, 2.0, 50.0, 50.0, 200.0])
    )
    mass: np.ndarray = field(
        default_factory=lambda: np.array([0.05, 0.05, 0.05, 2.0, 2.0, 2.0])
    )
    damping: np.ndarray | None = None
    frame: str = GRIPPER_FRAME

    def __post_init__(self):
        object.__setattr__(self, "stiffness", _vec6(self.stiffness, "stiffness"))
        object.__setattr__(self, "mass", _vec6(self.mass, "mass"))
        for name in ("stiffness", "mass"):
            if np.any(getattr(self, name) <= 0.0):
                raise ValueError(f"{name} must be > 0 on every axis")
        if self.damping is None:
            object.__setattr__(self, "damping", critical_damping(self.stiffness, self.mass))
        else:
            object.__setattr__(self, "damping", _vec6(self.damping, "damping"))
        if np.any(self.damping <= 0.0):
            raise ValueError("damping must be > 0 on every axis")
        if self.frame not in (GRIPPER_FRAME, WORLD_FRAME):
            raise ValueError(f"frame must be '{GRIPPER_FRAME}' or '{WORLD_FRAME}'")


@dataclass(frozen=True)
class AdmittanceState:
    """Reference pose plus deviation coordinates (rotation; translation)."""

    reference: Pose
    deviation: np.ndarray = field(default_factory=lambda: np.zeros(6))
    deviation_rate: np.ndarray = field(default_factory=lambda: np.zeros(6))

    def __post_init__(self):
        object.__setattr__(self, "deviation", _vec6(self.deviation, "deviation"))
        object.__setattr__(self, "deviation_rate", _vec6(self.deviation_rate, "deviation_rate"))

    def with_reference(self, reference: Pose) -> "AdmittanceState":
        return replace(self, reference=reference)


def step_admittance(
    state: AdmittanceState,
    params: AdmittanceParams,
    wrench: np.ndarray,
    dt: float,
) -> AdmittanceState:
    """One semi-implicit Euler step under the external wrench (torque; force)."""
    if not 0.0 < dt <= MAX_DT:
        raise ValueError(f"dt must be in (0, {MAX_DT}], got {dt}")
    w = _vec6(wrench, "wrench")
    x = state.deviation
    xd = state.deviation_rate
    with np.errstate(over="ignore", invalid="ignore"):  # divergence is caught below
        xdd = (w - params.stiffness * x - params.damping * xd) / params.mass
        xd = xd + dt * xdd
        x = x + dt * xd
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(xd))):
        raise NonFiniteState("admittance state diverged")
    return AdmittanceState(state.reference, x, xd)


def desired_pose(state: AdmittanceState, params: AdmittanceParams) -> Pose:
    """Reference pose perturbed by the deviation, in the declared frame."""
    offset = se3_exp(state.deviation)
    if params.frame == GRIPPER_FRAME:
        return state.reference @ offset
    return offset @ state.reference


def wrench_to_frame(wrench: np.ndarray, gripper_pose: Pose, frame: str) -> np.ndarray:
    """Re-express a world-frame wrench about the gripper origin in `frame`."""
    if frame == WORLD_FRAME:
        return np.asarray(wrench, dtype=float)
    Rt = gripper_pose.rotation.T
    w = np.asarray(wrench, dtype=float)
    return np.concatenate([Rt @ w[:3], Rt @ w[3:]])
