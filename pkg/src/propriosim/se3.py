"""Rigid-body geometry on SE(3): poses, twists, exponential/logarithm maps, adjoints.

Conventions
-----------
- Rotations are stored as 3x3 orthonormal matrices, translations as 3-vectors (m).
- A twist is the 6-vector (angular; linear). All 6-vectors in this package
  (twists, wrenches, deviations) put the rotational part first.
- Canonical twist gauge: ``|angular| = 1`` when the angular part is nonzero,
  else ``|linear| = 1``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

# Below this rotation angle the Rodrigues coefficients switch to their series forms.
SMALL_ANGLE = 1e-8

_NEAR_PI = np.pi - 1e-6


def skew(w: np.ndarray) -> np.ndarray:
    """3x3 matrix [w] such that [w] @ x == cross(w, x)."""
    return np.array(
        [
            [0.0, -w[2], w[1]],
            [w[2], 0.0, -w[0]],
            [-w[1], w[0], 0.0],
        ]
    )


def _rodrigues_coeffs(angle: float) -> tuple[float, float, float]:
    """Coefficients (sin t/t, (1-cos t)/t^2, (t-sin t)/t^3) with series fallback."""
    if angle < SMALL_ANGLE:
        a2 = angle * angle
        return 1.0 - a2 / 6.0, 0.5 - a2 / 24.0, 1.0 / 6.0 - a2 / 120.0
    s, c = np.sin(angle), np.cos(angle)
    return s / angle, (1.0 - c) / (angle * angle), (angle - s) / (angle**3)


def so3_exp(rotvec: np.ndarray) -> np.ndarray:
    """Rotation matrix for a rotation-vector (axis * angle)."""
    angle = float(np.linalg.norm(rotvec))
    a, b, _ = _rodrigues_coeffs(angle)
    K = skew(rotvec)
    return np.eye(3) + a * K + b * (K @ K)


def so3_log(R: np.ndarray) -> np.ndarray:
    """Rotation vector of a rotation matrix (principal branch, angle in [0, pi]).

    At angle pi the axis is recovered from the largest diagonal element of
    R + I with a fixed sign convention (first component above 1e-6 made
    positive), so the result is deterministic.
    """
    tr = np.clip((np.trace(R) - 1.0) / 2.0, -1.0, 1.0)
    angle = float(np.arccos(tr))
    vee = 0.5 * np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    if angle < SMALL_ANGLE:
        return vee
    if angle < _NEAR_PI:
        return (angle / np.sin(angle)) * vee
    # Near pi: any nonzero column of (R + I)/2 = axis axis^T is parallel to the axis.
    k = int(np.argmax(np.diag(R)))
    col = R[:, k] + np.eye(3)[:, k]
    axis = col / np.linalg.norm(col)
    sin_a = np.sin(angle)
    if abs(sin_a) > 1e-9:
        if np.dot(axis, vee) < 0.0:
            axis = -axis
    else:
        for comp in axis:
            if abs(comp) > 1e-6:
                if comp < 0.0:
                    axis = -axis
                break
    return angle * axis


def _translation_mixer(rotvec: np.ndarray) -> np.ndarray:
    """Matrix G with exp([w, v]) translation = G @ v, for rotation-vector w."""
    angle = float(np.linalg.norm(rotvec))
    _, b, c = _rodrigues_coeffs(angle)
    K = skew(rotvec)
    return np.eye(3) + b * K + c * (K @ K)


def project_rotation(R: np.ndarray) -> np.ndarray:
    """Nearest orthonormal matrix with det +1 (polar decomposition via SVD)."""
    U, _, Vt = np.linalg.svd(R)
    D = np.diag([1.0, 1.0, float(np.linalg.det(U @ Vt))])
    return U @ D @ Vt


def rotation_to_quat_wxyz(R: np.ndarray) -> np.ndarray:
    """Unit quaternion (w, x, y, z) for a rotation matrix, w >= 0."""
    tr = np.trace(R)
    if tr > 0.0:
        s = np.sqrt(tr + 1.0) * 2.0
        q = np.array(
            [0.25 * s, (R[2, 1] - R[1, 2]) / s, (R[0, 2] - R[2, 0]) / s, (R[1, 0] - R[0, 1]) / s]
        )
    else:
        k = int(np.argmax(np.diag(R)))
        i, j = (k + 1) % 3, (k + 2) % 3
        s = np.sqrt(1.0 + R[k, k] - R[i, i] - R[j, j]) * 2.0
        q = np.empty(4)
        q[0] = (R[j, i] - R[i, j]) / s
        q[1 + k] = 0.25 * s
        q[1 + i] = (R[i, k] + R[k, i]) / s
        q[1 + j] = (R[j, k] + R[k, j]) / s
    if q[0] < 0.0:
        q = -q
    return q


@dataclass(frozen=True)
class Pose:
    """Rigid transform: y = rotation @ x + translation."""

    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        object.__setattr__(self, "rotation", np.asarray(self.rotation, dtype=float))
        object.__setattr__(self, "translation", np.asarray(self.translation, dtype=float))

    @staticmethod
    def identity() -> "Pose":
        return Pose()

    def __matmul__(self, other: "Pose") -> "Pose":
        return Pose(
            self.rotation @ other.rotation,
            self.rotation @ other.translation + self.translation,
        )

    def inverse(self) -> "Pose":
        Rt = self.rotation.T
        return Pose(Rt, -Rt @ self.translation)

    def transform_point(self, p: np.ndarray) -> np.ndarray:
        return self.rotation @ np.asarray(p, dtype=float) + self.translation

    def matrix(self) -> np.ndarray:
        T = np.eye(4)
        T[:3, :3] = self.rotation
        T[:3, 3] = self.translation
        return T

    @staticmethod
    def from_matrix(T: np.ndarray) -> "Pose":
        return Pose(T[:3, :3].copy(), T[:3, 3].copy())

    def reprojected(self) -> "Pose":
        """Copy with the rotation snapped back onto SO(3).

        Use after long composition chains to keep orthonormality drift below
        tolerance.
        """
        return Pose(project_rotation(self.rotation), self.translation.copy())

    def quat_wxyz(self) -> np.ndarray:
        return rotation_to_quat_wxyz(self.rotation)


@dataclass(frozen=True)
class Twist:
    """Screw axis of a 1-DOF motion: (angular; linear) 6-vector."""

    angular: np.ndarray
    linear: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "angular", np.asarray(self.angular, dtype=float))
        object.__setattr__(self, "linear", np.asarray(self.linear, dtype=float))

    @staticmethod
    def from_array(x: np.ndarray) -> "Twist":
        x = np.asarray(x, dtype=float)
        return Twist(x[:3].copy(), x[3:].copy())

    def as_array(self) -> np.ndarray:
        return np.concatenate([self.angular, self.linear])

    def normalized(self) -> tuple["Twist", float]:
        """Canonical-gauge twist and the scale s with self = s * canonical."""
        wn = float(np.linalg.norm(self.angular))
        if wn > 1e-12:
            return Twist(self.angular / wn, self.linear / wn), wn
        vn = float(np.linalg.norm(self.linear))
        if vn > 1e-12:
            return Twist(np.zeros(3), self.linear / vn), vn
        raise ValueError("cannot normalize a zero twist")


def se3_exp(xi: np.ndarray) -> Pose:
    """Exponential of an se(3) 6-vector (angular; linear)."""
    xi = np.asarray(xi, dtype=float)
    w, v = xi[:3], xi[3:]
    R = so3_exp(w)
    t = _translation_mixer(w) @ v
    return Pose(R, t)


def se3_log(P: Pose) -> np.ndarray:
    """Principal logarithm of a pose as an se(3) 6-vector; inverse of se3_exp."""
    w = so3_log(P.rotation)
    v = np.linalg.solve(_translation_mixer(w), P.translation)
    return np.concatenate([w, v])


def exp_twist(V: Twist, q: float) -> Pose:
    """Pose reached by moving distance/angle q along twist V."""
    return se3_exp(q * V.as_array())


def log_pose(P: Pose) -> tuple[Twist, float]:
    """Canonical-gauge twist V and q >= 0 with exp_twist(V, q) == P.

    The identity pose maps to (prismatic +Z twist, 0) by convention.
    """
    xi = se3_log(P)
    wn = float(np.linalg.norm(xi[:3]))
    if wn > 1e-12:
        return Twist(xi[:3] / wn, xi[3:] / wn), wn
    vn = float(np.linalg.norm(xi[3:]))
    if vn > 1e-12:
        return Twist(np.zeros(3), xi[3:] / vn), vn
    return Twist(np.zeros(3), np.array([0.0, 0.0, 1.0])), 0.0


def adjoint_map(T: Pose, V: Twist) -> Twist:
    """Twist seen from the frame moved by T: exp(q[Ad_T V]) = T exp(q[V]) T^-1."""
    R, t = T.rotation, T.translation
    w = R @ V.angular
    v = skew(t) @ w + R @ V.linear
    return Twist(w, v)


def rotation_angle_between(Ra: np.ndarray, Rb: np.ndarray) -> float:
    """Geodesic angle between two rotation matrices (rad)."""
    tr = np.clip((np.trace(Ra.T @ Rb) - 1.0) / 2.0, -1.0, 1.0)
    return float(np.arccos(tr))


def pose_difference(a: Pose, b: Pose) -> tuple[float, float]:
    """(translation distance m, rotation angle rad) between two poses."""
    dt = float(np.linalg.norm(a.translation - b.translation))
    return dt, rotation_angle_between(a.rotation, b.rotation)
