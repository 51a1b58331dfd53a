"""Recursive dynamics for moving-base systems.

``eidamb`` is the extended inverse dynamics: besides the joint torques it
returns the fictitious base wrench that makes the system fully actuated, and
it keeps every intermediate of the sweep in a :class:`DynamicsWorkspace` so
that the derivative sweeps never redo kinematics.

Generalized vectors are stacked base first: ``[base (6); joints (n_J)]``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import ModelError, MultibodyModel, SystemState, jcalc
from .spatial import Pose, cross_force, cross_motion, velocity_transform

GRAVITY = np.array([0.0, 0.0, -9.81, 0.0, 0.0, 0.0])


@dataclass(frozen=True)
class ExtendedTorque:
    base_wrench: np.ndarray
    joint_torques: np.ndarray

    def stacked(self) -> np.ndarray:
        return np.concatenate([self.base_wrench, self.joint_torques])


@dataclass(eq=False)
class DynamicsWorkspace:
    """Intermediates of one EIDAmb evaluation.

    Per-body arrays have leading dimension ``n_B + 1``. Entries for the base
    (index 0) of joint-related arrays are zero. ``x_up[i]`` is ``^iX_{p(i)}``,
    ``x_joint[i]`` is ``^iX_{p(i)|i}``, ``acc_base[i]`` is ``^ia_{A,0}`` and
    ``unit_wrench`` is ``_0F`` (6 x n_J).
    """

    model: MultibodyModel
    state: SystemState
    base_acc: np.ndarray
    joint_acc: np.ndarray
    gravity: np.ndarray
    x_base: np.ndarray
    world_twist: np.ndarray
    x_joint: np.ndarray
    x_up: np.ndarray
    subspace: np.ndarray
    twist: np.ndarray
    joint_twist: np.ndarray
    acc_r: np.ndarray
    acc_vp: np.ndarray
    acc_base: np.ndarray
    momentum: np.ndarray
    composite_inertia: np.ndarray
    bias_c: np.ndarray
    bias_vp: np.ndarray
    unit_wrench: np.ndarray
    torque: ExtendedTorque | None = None


def _check_inputs(model: MultibodyModel, state: SystemState, joint_acc: np.ndarray) -> None:
    state.check(model)
    if joint_acc.shape != (model.n_joints,):
        raise ValueError(
            f"joint_acc must have shape ({model.n_joints},), got {joint_acc.shape}"
        )


def eidamb(
    model: MultibodyModel,
    state: SystemState,
    base_acc: np.ndarray,
    joint_acc: np.ndarray,
    gravity: np.ndarray = GRAVITY,
) -> tuple[ExtendedTorque, DynamicsWorkspace]:
    """Extended inverse dynamics.

    Args:
        model: multibody model.
        state: configuration and velocities; ``state.base_twist`` is ``^0v_{A,0}``.
        base_acc: base acceleration ``^0a_{A,0}`` (frame 0).
        joint_acc: joint accelerations.
        gravity: gravitational acceleration ``^Aa_grav`` (frame A).

    Returns:
        The extended torque ``[base wrench; joint torques]`` and the workspace.
    """
    base_acc = np.asarray(base_acc, dtype=float).reshape(6)
    joint_acc = np.asarray(joint_acc, dtype=float).reshape(-1)
    gravity = np.asarray(gravity, dtype=float).reshape(6)
    _check_inputs(model, state, joint_acc)
    nb = model.n_bodies
    s, r = state.joint_pos, state.joint_vel

    x_base = velocity_transform(state.base_pose.inverse())
    x_joint = np.zeros((nb + 1, 6, 6))
    x_up = np.zeros((nb + 1, 6, 6))
    subspace = np.zeros((nb + 1, 6))
    twist = np.zeros((nb + 1, 6))
    joint_twist = np.zeros((nb + 1, 6))
    acc_r = np.zeros((nb + 1, 6))
    acc_vp = np.zeros((nb + 1, 6))
    momentum = np.zeros((nb + 1, 6))
    mc = np.array(model.inertias)
    bias_c = np.zeros((nb + 1, 6))
    bias_vp = np.zeros((nb + 1, 6))

    # The state carries the body twist, so X0A @ (AX0 @ v0) is v0 itself.
    twist[0] = state.base_twist
    acc_r[0] = x_base @ gravity
    acc_vp[0] = acc_r[0]
    m0 = model.inertias[0]
    momentum[0] = m0 @ twist[0]
    bias_c[0] = m0 @ acc_r[0] + cross_force(twist[0]) @ momentum[0]
    bias_vp[0] = bias_c[0]

    for i in range(1, nb + 1):
        p = model.parent[i]
        x_joint[i], subspace[i] = jcalc(model.joints[i], s[i - 1])
        joint_twist[i] = subspace[i] * r[i - 1]
        x_up[i] = x_joint[i] @ model.fixed_velocity_transforms[i]
        twist[i] = x_up[i] @ twist[p] + joint_twist[i]
        vxvj = cross_motion(twist[i]) @ joint_twist[i]
        acc_r[i] = x_up[i] @ acc_r[p] + subspace[i] * joint_acc[i - 1] + vxvj
        acc_vp[i] = x_up[i] @ acc_vp[p] + vxvj
        mi = model.inertias[i]
        momentum[i] = mi @ twist[i]
        vxf = cross_force(twist[i]) @ momentum[i]
        bias_c[i] = mi @ acc_r[i] + vxf
        bias_vp[i] = mi @ acc_vp[i] + vxf

    for i in range(nb, 0, -1):
        p = model.parent[i]
        xt = x_up[i].T
        mc[p] += xt @ mc[i] @ x_up[i]
        bias_c[p] += xt @ bias_c[i]
        bias_vp[p] += xt @ bias_vp[i]

    acc_base = np.zeros((nb + 1, 6))
    acc_base[0] = base_acc
    tau = np.zeros(nb)
    unit_wrench = np.zeros((6, nb))
    for i in range(1, nb + 1):
        p = model.parent[i]
        acc_base[i] = x_up[i] @ acc_base[p]
        tau[i - 1] = subspace[i] @ (mc[i] @ acc_base[i] + bias_c[i])
        f = mc[i] @ subspace[i]
        j = i
        while model.parent[j] > 0:
            f = x_up[j].T @ f
            j = model.parent[j]
        unit_wrench[:, i - 1] = x_up[j].T @ f

    base_wrench = mc[0] @ base_acc + unit_wrench @ joint_acc + bias_vp[0]
    torque = ExtendedTorque(base_wrench, tau)
    ws = DynamicsWorkspace(
        model=model,
        state=state,
        base_acc=base_acc,
        joint_acc=joint_acc,
        gravity=gravity,
        x_base=x_base,
        world_twist=state.world_twist(),
        x_joint=x_joint,
        x_up=x_up,
        subspace=subspace,
        twist=twist,
        joint_twist=joint_twist,
        acc_r=acc_r,
        acc_vp=acc_vp,
        acc_base=acc_base,
        momentum=momentum,
        composite_inertia=mc,
        bias_c=bias_c,
        bias_vp=bias_vp,
        unit_wrench=unit_wrench,
        torque=torque,
    )
    return torque, ws


def inverse_dynamics(model, state, base_acc, joint_acc, gravity=GRAVITY) -> np.ndarray:
    """Stacked extended torque ``[base wrench; joint torques]``."""
    return eidamb(model, state, base_acc, joint_acc, gravity)[0].stacked()


def consistent_base_acceleration(ws: DynamicsWorkspace) -> np.ndarray:
    """Base acceleration ``-(M^c_0)^-1 b^c_0`` for which the base wrench vanishes."""
    mc0 = ws.composite_inertia[0]
    try:
        return -np.linalg.solve(mc0, ws.bias_c[0])
    except np.linalg.LinAlgError as exc:
        raise ModelError("composite inertia of the base is singular") from exc


def bias_vector(model: MultibodyModel, state: SystemState, gravity=GRAVITY) -> np.ndarray:
    """``h = C nu + G``: the extended inverse dynamics at zero acceleration."""
    return inverse_dynamics(model, state, np.zeros(6), np.zeros(model.n_joints), gravity)


def _rest_state(model: MultibodyModel, s: np.ndarray) -> SystemState:
    n = model.n_joints
    return SystemState(Pose.identity(), np.asarray(s, dtype=float), np.zeros(6), np.zeros(n))


def mass_matrix(model: MultibodyModel, s: np.ndarray) -> np.ndarray:
    """Mass matrix assembled column by column from unit accelerations."""
    state = _rest_state(model, s)
    n, nj = model.n_dof, model.n_joints
    zero = np.zeros(6)
    offset = inverse_dynamics(model, state, np.zeros(6), np.zeros(nj), zero)
    out = np.zeros((n, n))
    for j in range(n):
        e = np.zeros(n)
        e[j] = 1.0
        out[:, j] = inverse_dynamics(model, state, e[:6], e[6:], zero) - offset
    return out


def immamb(model: MultibodyModel, s: np.ndarray) -> np.ndarray:
    """Inverse of the mass matrix by articulated-body recursions.

    Row/column ``5 + i`` belongs to joint ``i``.
    """
    s = np.asarray(s, dtype=float).reshape(-1)
    nb = model.n_bodies
    if s.shape != (nb,):
        raise ValueError(f"s must have shape ({nb},), got {s.shape}")
    n = model.n_dof
    x_up = np.zeros((nb + 1, 6, 6))
    subspace = np.zeros((nb + 1, 6))
    for i in range(1, nb + 1):
        xj, subspace[i] = jcalc(model.joints[i], s[i - 1])
        x_up[i] = xj @ model.fixed_velocity_transforms[i]
    art = np.array(model.inertias)
    wrench_set = np.zeros((nb + 1, 6, n))
    motion_set = np.zeros((nb + 1, 6, n))
    u = np.zeros((nb + 1, 6))
    d_inv = np.zeros(nb + 1)
    minv = np.zeros((n, n))

    for i in range(nb, 0, -1):
        p = model.parent[i]
        gamma = subspace[i]
        u[i] = art[i] @ gamma
        d = gamma @ u[i]
        if not d > 0.0:
            raise ModelError(f"articulated inertia of joint {i} is not positive ({d!r})")
        d_inv[i] = 1.0 / d
        row = 5 + i
        cols = [5 + j for j in model.subtrees[i]]
        minv[row, row] = d_inv[i]
        minv[row, cols] -= d_inv[i] * (gamma @ wrench_set[i][:, cols])
        wrench_set[p][:, cols] += x_up[i].T @ (
            wrench_set[i][:, cols] + np.outer(u[i], minv[row, cols])
        )
        art_a = art[i] - np.outer(u[i], u[i]) * d_inv[i]
        art[p] += x_up[i].T @ art_a @ x_up[i]

    try:
        art0_inv = np.linalg.inv(art[0])
    except np.linalg.LinAlgError as exc:
        raise ModelError("articulated inertia of the base is singular") from exc
    motion_set[0][:, 6:] = -art0_inv @ wrench_set[0][:, 6:]
    for i in range(1, nb + 1):
        p = model.parent[i]
        row = 5 + i
        xp = x_up[i] @ motion_set[p][:, row:]
        minv[row, row:] -= d_inv[i] * (u[i] @ xp)
        motion_set[i][:, row:] = np.outer(subspace[i], minv[row, row:]) + xp

    minv[:6, 6:] = motion_set[0][:, 6:]
    minv[6:, :6] = minv[:6, 6:].T
    upper = np.triu_indices(nb)
    joint_block = minv[6:, 6:]
    joint_block.T[upper] = joint_block[upper]
    minv[:6, :6] = 0.5 * (art0_inv + art0_inv.T)
    return minv


def forward_dynamics(
    model: MultibodyModel,
    state: SystemState,
    tau: np.ndarray,
    gravity: np.ndarray = GRAVITY,
    minv: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Base and joint accelerations ``M^-1 (S tau - h)``.

    ``minv`` may be passed when the inverse mass matrix is already known.
    """
    tau = np.asarray(tau, dtype=float).reshape(-1)
    if tau.shape != (model.n_joints,):
        raise ValueError(f"tau must have shape ({model.n_joints},), got {tau.shape}")
    if minv is None:
        minv = immamb(model, state.joint_pos)
    rhs = -bias_vector(model, state, gravity)
    rhs[6:] += tau
    nu_dot = minv @ rhs
    return nu_dot[:6], nu_dot[6:]
