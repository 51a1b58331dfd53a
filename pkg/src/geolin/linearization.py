"""Left-trivialized linearization of moving-base equations of motion.

The error state is ``z = [z_H (6); z_s (n_J); z_v (6); z_r (n_J)]`` where
``z_H`` is a right perturbation of the base pose (``H exp(z_H^)``) and the
other blocks are additive. The linearized dynamics are ``z' = A z + B w``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .derivatives import did_dH, did_dr, did_ds, did_dv
from .dynamics import GRAVITY, eidamb, forward_dynamics, immamb
from .model import MultibodyModel, SystemState
from .spatial import cross_motion


@dataclass(frozen=True)
class LinearizationMatrices:
    A: np.ndarray
    B: np.ndarray


def input_matrix(model: MultibodyModel, s: np.ndarray, minv: np.ndarray | None = None) -> np.ndarray:
    """``B = [0; 0; M^-1 S]`` with ``S`` selecting the joint columns."""
    if minv is None:
        minv = immamb(model, s)
    n, nj = model.n_dof, model.n_joints
    out = np.zeros((2 * n, nj))
    out[n:] = minv[:, 6:]
    return out


def state_matrix(
    model: MultibodyModel,
    state: SystemState,
    base_acc: np.ndarray,
    joint_acc: np.ndarray,
    gravity: np.ndarray = GRAVITY,
    minv: np.ndarray | None = None,
) -> np.ndarray:
    """State matrix at ``state`` with the given (true) accelerations.

    The base twist in ``state`` is the body twist, so the pose derivative is
    taken with that twist held fixed.
    """
    if minv is None:
        minv = immamb(model, state.joint_pos)
    _, ws = eidamb(model, state, base_acc, joint_acc, gravity)
    n, nj = model.n_dof, model.n_joints
    jac = np.hstack(
        [
            did_dH(model, ws, hold="body"),
            did_ds(model, ws),
            did_dv(model, ws),
            did_dr(model, ws),
        ]
    )
    a = np.zeros((2 * n, 2 * n))
    a[:6, :6] = -cross_motion(state.base_twist)
    a[:6, 6 + nj : 12 + nj] = np.eye(6)
    a[6 : 6 + nj, 12 + nj :] = np.eye(nj)
    a[n:] = -minv @ jac
    return a


def linearize(
    model: MultibodyModel,
    state: SystemState,
    tau: np.ndarray,
    gravity: np.ndarray = GRAVITY,
) -> LinearizationMatrices:
    """A and B at ``(state, tau)``; the accelerations come from the forward
    dynamics so the base wrench of the extended system is zero."""
    minv = immamb(model, state.joint_pos)
    base_acc, joint_acc = forward_dynamics(model, state, tau, gravity, minv=minv)
    a = state_matrix(model, state, base_acc, joint_acc, gravity, minv=minv)
    b = input_matrix(model, state.joint_pos, minv=minv)
    return LinearizationMatrices(a, b)
