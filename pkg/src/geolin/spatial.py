"""SE(3) and 6D spatial algebra.

Conventions used throughout the package:

* twists are ``[v; w]`` (linear first, angular second),
* wrenches are ``[f; n]`` (force first, moment second), so the power
  pairing of a wrench and a twist is a plain dot product,
* a pose ``H = (R, o)`` stands for the homogeneous transform ``^C H_D``
  (frame D expressed in frame C), and ``velocity_transform(H)`` is the
  matching twist transform ``^C X_D``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_SMALL_ANGLE = 1e-8
_LOG_BRANCH_MARGIN = 1e-6


class BranchError(ValueError):
    """Raised when the SE(3) logarithm is requested too close to angle pi."""


def skew(x: np.ndarray) -> np.ndarray:
    """3x3 matrix ``x^`` with ``skew(x) @ y == np.cross(x, y)``."""
    return np.array(
        [
            [0.0, -x[2], x[1]],
            [x[2], 0.0, -x[0]],
            [-x[1], x[0], 0.0],
        ]
    )


def unskew(m: np.ndarray) -> np.ndarray:
    return np.array([m[2, 1] - m[1, 2], m[0, 2] - m[2, 0], m[1, 0] - m[0, 1]]) / 2.0


@dataclass(frozen=True, eq=False)
class Pose:
    """Rigid transform stored as a rotation matrix and an origin.

    ``Pose(R, o)`` maps a point ``p_D`` to ``R @ p_D + o``. The 4x4 matrix is
    only a view (:meth:`as_matrix`).
    """

    rotation: np.ndarray
    origin: np.ndarray

    def __post_init__(self) -> None:
        rot = np.array(self.rotation, dtype=float)
        org = np.array(self.origin, dtype=float).reshape(3)
        if rot.shape != (3, 3):
            raise ValueError(f"rotation must be 3x3, got {rot.shape}")
        rot.setflags(write=False)
        org.setflags(write=False)
        object.__setattr__(self, "rotation", rot)
        object.__setattr__(self, "origin", org)

    @classmethod
    def identity(cls) -> Pose:
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_matrix(cls, h: np.ndarray) -> Pose:
        h = np.asarray(h, dtype=float)
        return cls(h[:3, :3], h[:3, 3])

    def as_matrix(self) -> np.ndarray:
        h = np.eye(4)
        h[:3, :3] = self.rotation
        h[:3, 3] = self.origin
        return h

    def inverse(self) -> Pose:
        rt = self.rotation.T
        return Pose(rt, -rt @ self.origin)

    def __matmul__(self, other: Pose) -> Pose:
        return Pose(
            self.rotation @ other.rotation,
            self.rotation @ other.origin + self.origin,
        )

    def orthogonality_error(self) -> float:
        """``||R^T R - I||`` (Frobenius)."""
        r = self.rotation
        return float(np.linalg.norm(r.T @ r - np.eye(3)))

    def is_valid(self, tol: float = 1e-10) -> bool:
        return self.orthogonality_error() <= tol and np.linalg.det(self.rotation) > 0.0

    def __repr__(self) -> str:
        return f"Pose(rotation={self.rotation.tolist()}, origin={self.origin.tolist()})"


def so3_exp(phi: np.ndarray) -> np.ndarray:
    """Rodrigues formula."""
    phi = np.asarray(phi, dtype=float)
    theta = np.linalg.norm(phi)
    k = skew(phi)
    if theta < _SMALL_ANGLE:
        return np.eye(3) + k + 0.5 * (k @ k)
    a = np.sin(theta) / theta
    b = (1.0 - np.cos(theta)) / theta**2
    return np.eye(3) + a * k + b * (k @ k)


def _left_jacobian(phi: np.ndarray) -> np.ndarray:
    theta = np.linalg.norm(phi)
    k = skew(phi)
    if theta < _SMALL_ANGLE:
        return np.eye(3) + 0.5 * k + (k @ k) / 6.0
    b = (1.0 - np.cos(theta)) / theta**2
    c = (theta - np.sin(theta)) / theta**3
    return np.eye(3) + b * k + c * (k @ k)


def _left_jacobian_inv(phi: np.ndarray) -> np.ndarray:
    theta = np.linalg.norm(phi)
    k = skew(phi)
    if theta < _SMALL_ANGLE:
        return np.eye(3) - 0.5 * k + (k @ k) / 12.0
    half = 0.5 * theta
    d = (1.0 - half * np.cos(half) / np.sin(half)) / theta**2
    return np.eye(3) - 0.5 * k + d * (k @ k)


def se3_exp(xi: np.ndarray) -> Pose:
    """Exponential map ``exp(xi^)`` for ``xi = [rho; phi]``."""
    xi = np.asarray(xi, dtype=float).reshape(6)
    rho, phi = xi[:3], xi[3:]
    return Pose(so3_exp(phi), _left_jacobian(phi) @ rho)


def so3_log(rot: np.ndarray) -> np.ndarray:
    cos_theta = np.clip((np.trace(rot) - 1.0) / 2.0, -1.0, 1.0)
    theta = np.arccos(cos_theta)
    if theta >= np.pi - _LOG_BRANCH_MARGIN:
        raise BranchError(f"rotation angle {theta!r} is outside the principal branch")
    w = unskew(rot)
    if theta < _SMALL_ANGLE:
        return w
    return w * (theta / np.sin(theta))


def se3_log(pose: Pose) -> np.ndarray:
    """Principal logarithm, inverse of :func:`se3_exp` for angles below pi."""
    phi = so3_log(pose.rotation)
    rho = _left_jacobian_inv(phi) @ pose.origin
    return np.concatenate([rho, phi])


def velocity_transform(pose: Pose) -> np.ndarray:
    """Twist transform ``[[R, o^ R], [0, R]]``."""
    r, o = pose.rotation, pose.origin
    x = np.zeros((6, 6))
    x[:3, :3] = r
    x[:3, 3:] = skew(o) @ r
    x[3:, 3:] = r
    return x


def wrench_transform(pose: Pose) -> np.ndarray:
    """Wrench transform ``[[R, 0], [o^ R, R]]``, the inverse-transpose of
    :func:`velocity_transform`."""
    r, o = pose.rotation, pose.origin
    x = np.zeros((6, 6))
    x[:3, :3] = r
    x[3:, :3] = skew(o) @ r
    x[3:, 3:] = r
    return x


def cross_motion(v: np.ndarray) -> np.ndarray:
    """``v x`` acting on twists: ``[[w^, v^], [0, w^]]``."""
    wx = skew(v[3:])
    out = np.zeros((6, 6))
    out[:3, :3] = wx
    out[:3, 3:] = skew(v[:3])
    out[3:, 3:] = wx
    return out


def cross_force(v: np.ndarray) -> np.ndarray:
    """``v x*`` acting on wrenches, equal to ``-cross_motion(v).T``."""
    return -cross_motion(v).T


def cross_force_operand(f: np.ndarray) -> np.ndarray:
    """Matrix ``G`` with ``cross_force(x) @ f == G @ x`` for every twist ``x``.

    Used to differentiate ``v x* m`` with respect to the twist slot.
    """
    fx = skew(f[:3])
    out = np.zeros((6, 6))
    out[:3, 3:] = -fx
    out[3:, :3] = -fx
    out[3:, 3:] = -skew(f[3:])
    return out


def spatial_inertia(mass: float, com: np.ndarray, inertia_com: np.ndarray) -> np.ndarray:
    """6x6 inertia of a rigid body about the frame origin (twist order [v; w])."""
    c = skew(np.asarray(com, dtype=float))
    out = np.zeros((6, 6))
    out[:3, :3] = mass * np.eye(3)
    out[:3, 3:] = -mass * c
    out[3:, :3] = mass * c
    out[3:, 3:] = np.asarray(inertia_com, dtype=float) - mass * (c @ c)
    return out
