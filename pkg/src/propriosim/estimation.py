"""Joint twist and configuration estimation from a pose sequence.

Given gripper poses P_0..P_{n-1} assumed rigidly attached to a 1-DOF joint,
recover the joint twist V and per-pose configurations q_i (q_0 = 0 fixed) by
minimizing the weighted residual

    sum_i || W * log(P_i^-1 exp(q_i [V]) P_0) ||^2

jointly over V and {q_1..q_{n-1}} with Levenberg-Marquardt. The weight
W = diag(1/sigma_rot * 1_3, 1/sigma_trans * 1_3) makes the residual unitless;
the sigmas are deliberately larger than encoder accuracy so that moderate
grasp slip does not destabilize the fit.

The hot path evaluates all residual blocks with batched numpy kernels
(_exp_xi_batch / _log_T_batch); tests pin them against the scalar se3 maps.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .articulation import HELICAL, PRISMATIC, REVOLUTE
from .se3 import Pose, Twist, pose_difference, se3_log

# Any pose pair closer than this carries no excitation for the estimator.
MIN_TRANSLATION = 1e-4
MIN_ROTATION = 1e-3


class InsufficientData(ValueError):
    """Too few poses, or poses too close together, to constrain a joint."""


@dataclass(frozen=True)
class NoiseModel:
    """Assumed observation noise: translation sigma (m), rotation sigma (rad)."""

    sigma_translation: float = 0.005
    sigma_rotation: float = np.deg2rad(2.0)

    def __post_init__(self):
        if self.sigma_translation <= 0.0 or self.sigma_rotation <= 0.0:
            raise ValueError("noise sigmas must be positive")

    def weights(self) -> np.ndarray:
        w = np.empty(6)
        w[:3] = 1.0 / self.sigma_rotation
        w[3:] = 1.0 / self.sigma_translation
        return w


@dataclass(frozen=True)
class EstimatorOptions:
    """Solver and classification knobs (defaults are sensible for desk scale)."""

    lm_initial_damping: float = 1e-3
    lm_damping_factor: float = 10.0
    max_iterations: int = 200
    relative_tolerance: float = 1e-10
    fd_step: float = 1e-6
    # classification: total rotation below this is prismatic, axial translation
    # per radian below this is revolute, anything else helical
    prismatic_rotation_threshold: float = 0.02
    helical_pitch_threshold: float = 1e-3


@dataclass(frozen=True)
class EstimationResult:
    """Estimated twist (canonical gauge), configurations (q_0 = 0), and fit quality."""

    twist: Twist
    configurations: np.ndarray
    residual_rms: float
    joint_type: str
    converged: bool


def initial_estimate_from_grasp(grasp_pose: Pose) -> Twist:
    """Prismatic twist along the grasp frame's -Z axis, in world coordinates."""
    return Twist(np.zeros(3), -grasp_pose.rotation[:, 2].copy())


# --- batched se(3) kernels -------------------------------------------------

def _skew_batch(w: np.ndarray) -> np.ndarray:
    n = w.shape[0]
    K = np.zeros((n, 3, 3))
    K[:, 0, 1] = -w[:, 2]
    K[:, 0, 2] = w[:, 1]
    K[:, 1, 0] = w[:, 2]
    K[:, 1, 2] = -w[:, 0]
    K[:, 2, 0] = -w[:, 1]
    K[:, 2, 1] = w[:, 0]
    return K


def _coeffs_batch(angle: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    small = angle < 1e-8
    safe = np.where(small, 1.0, angle)
    a2 = angle * angle
    s = np.sin(safe)
    c = np.cos(safe)
    A = np.where(small, 1.0 - a2 / 6.0, s / safe)
    B = np.where(small, 0.5 - a2 / 24.0, (1.0 - c) / (safe * safe))
    C = np.where(small, 1.0 / 6.0 - a2 / 120.0, (safe - s) / (safe**3))
    return A, B, C


def _exp_xi_batch(xi: np.ndarray) -> np.ndarray:
    """(n,6) se(3) vectors -> (n,4,4) transforms."""
    w, v = xi[:, :3], xi[:, 3:]
    angle = np.linalg.norm(w, axis=1)
    A, B, C = _coeffs_batch(angle)
    K = _skew_batch(w)
    K2 = K @ K
    eye = np.eye(3)
    R = eye + A[:, None, None] * K + B[:, None, None] * K2
    G = eye + B[:, None, None] * K + C[:, None, None] * K2
    T = np.zeros((xi.shape[0], 4, 4))
    T[:, :3, :3] = R
    T[:, :3, 3] = np.einsum("nij,nj->ni", G, v)
    T[:, 3, 3] = 1.0
    return T


def _log_T_batch(T: np.ndarray) -> np.ndarray:
    """(n,4,4) transforms -> (n,6) se(3) vectors; scalar fallback near angle pi."""
    R = T[:, :3, :3]
    t = T[:, :3, 3]
    tr = np.clip((np.einsum("nii->n", R) - 1.0) / 2.0, -1.0, 1.0)
    angle = np.arccos(tr)
    vee = 0.5 * np.stack(
        [R[:, 2, 1] - R[:, 1, 2], R[:, 0, 2] - R[:, 2, 0], R[:, 1, 0] - R[:, 0, 1]], axis=1
    )
    small = angle < 1e-8
    safe = np.where(small, 1.0, angle)
    factor = np.where(small, 1.0 + angle * angle / 6.0, safe / np.sin(safe))
    w = factor[:, None] * vee
    near_pi = angle > np.pi - 1e-6
    if np.any(near_pi):
        from .se3 import so3_log  # rare branch; reuse the robust scalar extraction

        for i in np.nonzero(near_pi)[0]:
            w[i] = so3_log(R[i])
    _, B, C = _coeffs_batch(np.linalg.norm(w, axis=1))
    K = _skew_batch(w)
    G = np.eye(3) + B[:, None, None] * K + C[:, None, None] * (K @ K)
    v = np.linalg.solve(G, t[:, :, None])[:, :, 0]
    return np.concatenate([w, v], axis=1)


# --- solver ------------------------------------------------------------------


class _Problem:
    """Precomputed matrices and the weighted residual for one pose sequence."""

    def __init__(self, poses: list[Pose], weights: np.ndarray):
        self.m = len(poses) - 1
        self.P0 = poses[0].matrix()
        self.Ainv = np.stack([p.inverse().matrix() for p in poses[1:]])
        self.w6 = weights

    def residual(self, V: np.ndarray, qs: np.ndarray) -> np.ndarray:
        xi = qs[:, None] * V[None, :]
        E = _exp_xi_batch(xi)
        M = self.Ainv @ E @ self.P0
        return (_log_T_batch(M) * self.w6).ravel()

    def jacobian(self, V: np.ndarray, qs: np.ndarray, h: float) -> np.ndarray:
        J = np.zeros((6 * self.m, 6 + self.m))
        for k in range(6):
            dV = np.zeros(6)
            dV[k] = h
            J[:, k] = (self.residual(V + dV, qs) - self.residual(V - dV, qs)) / (2.0 * h)
        # every residual block depends on exactly one q, so one perturbed pass
        # per sign yields the whole block-diagonal section
        rp = self.residual(V, qs + h)
        rm = self.residual(V, qs - h)
        d = (rp - rm) / (2.0 * h)
        for i in range(self.m):
            J[6 * i : 6 * i + 6, 6 + i] = d[6 * i : 6 * i + 6]
        return J


def _check_excitation(poses: list[Pose]) -> None:
    if len(poses) < 3:
        raise InsufficientData(f"need at least 3 poses, got {len(poses)}")
    for prev, cur in zip(poses[:-1], poses[1:]):
        dt, dr = pose_difference(poses[0], cur)
        if dt > MIN_TRANSLATION or dr > MIN_ROTATION:
            return
        dt, dr = pose_difference(prev, cur)
        if dt > MIN_TRANSLATION or dr > MIN_ROTATION:
            return
    raise InsufficientData("poses do not move enough to constrain a joint")


def _initial_twist_from_data(poses: list[Pose]) -> np.ndarray:
    """Unit 6-vector from the log of the largest observed relative motion."""
    base_inv = poses[0].inverse()
    best, best_score = None, -1.0
    for p in poses[1:]:
        dt, dr = pose_difference(poses[0], p)
        score = dt + 0.3 * dr
        if score > best_score:
            best_score = score
            best = p
    xi = se3_log(best @ base_inv)
    n = np.linalg.norm(xi)
    if n < 1e-12:
        return np.array([0.0, 0.0, 0.0, 0.0, 0.0, -1.0])
    return xi / n


def _project_configurations(poses: list[Pose], V: np.ndarray) -> np.ndarray:
    """Initialize q_i by projecting each relative-motion log onto the twist."""
    base_inv = poses[0].inverse()
    vv = float(V @ V)
    qs = np.empty(len(poses) - 1)
    for i, p in enumerate(poses[1:]):
        qs[i] = float(se3_log(p @ base_inv) @ V) / vv
    return qs


def _classify(V: np.ndarray, qs_full: np.ndarray, opts: EstimatorOptions) -> str:
    q_range = float(qs_full.max() - qs_full.min())
    wn = float(np.linalg.norm(V[:3]))
    if wn * q_range < opts.prismatic_rotation_threshold:
        return PRISMATIC
    pitch = float(V[:3] @ V[3:]) / (wn * wn)
    if abs(pitch) < opts.helical_pitch_threshold:
        return REVOLUTE
    return HELICAL


def estimate_joint(
    poses: list[Pose],
    noise: NoiseModel = NoiseModel(),
    init: Twist | None = None,
    options: EstimatorOptions = EstimatorOptions(),
) -> EstimationResult:
    """Fit a joint twist and configurations to a pose sequence.

    `init` warm-starts the twist (e.g. the previous estimate or a grasp
    prior); when omitted the initial twist comes from the largest observed
    relative motion. Raises InsufficientData if the sequence cannot constrain
    a joint; a hit of the iteration budget is reported via converged=False,
    not an exception.
    """
    _check_excitation(poses)
    problem = _Problem(poses, noise.weights())
    m = problem.m

    if init is not None:
        V = init.as_array().astype(float)
        V = V / np.linalg.norm(V)
    else:
        V = _initial_twist_from_data(poses)
    qs = _project_configurations(poses, V)

    r = problem.residual(V, qs)
    cost = float(r @ r)
    damping = options.lm_initial_damping
    converged = False

    for _ in range(options.max_iterations):
        J = problem.jacobian(V, qs, options.fd_step)
        g = J.T @ r
        H = J.T @ J
        accepted = False
        while damping < 1e14:
            try:
                delta = np.linalg.solve(H + damping * np.eye(H.shape[0]), -g)
            except np.linalg.LinAlgError:
                damping *= options.lm_damping_factor
                continue
            V_new = V + delta[:6]
            qs_new = qs + delta[6:]
            r_new = problem.residual(V_new, qs_new)
            cost_new = float(r_new @ r_new)
            if cost_new < cost:
                damping = max(damping / options.lm_damping_factor, 1e-12)
                accepted = True
                break
            damping *= options.lm_damping_factor
        if not accepted:
            converged = True  # no descent direction left: at a (numerical) optimum
            break
        # re-gauge so the scale freedom of (V, q) cannot drift
        scale = float(np.linalg.norm(V_new))
        V = V_new / scale
        qs = qs_new * scale
        r = r_new
        rel_drop = abs(cost - cost_new) / max(cost, 1e-300)
        cost = cost_new
        if rel_drop < options.relative_tolerance or cost < 1e-28:
            converged = True
            break

    residual_rms = float(np.sqrt(cost / r.size))
    qs_full = np.concatenate([[0.0], qs])
    joint_type = _classify(V, qs_full, options)

    if joint_type == PRISMATIC:
        scale = float(np.linalg.norm(V[3:]))
        twist = Twist(np.zeros(3), V[3:] / scale)
    else:
        scale = float(np.linalg.norm(V[:3]))
        twist = Twist(V[:3] / scale, V[3:] / scale)
    return EstimationResult(
        twist=twist,
        configurations=qs_full * scale,
        residual_rms=residual_rms,
        joint_type=joint_type,
        converged=converged,
    )
