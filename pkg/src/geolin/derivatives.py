"""Derivatives of the extended inverse dynamics.

Each function consumes the workspace of one :func:`geolin.dynamics.eidamb`
call and returns an ``n x k`` Jacobian whose rows are stacked
``[base wrench (6); joint torques (n_J)]``.

The H, v and r derivatives share one forward/backward sweep that differs
only in how it is seeded; the s derivative needs its own sweep because the
joint transforms, composite inertias and unit wrenches all depend on s.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dynamics import DynamicsWorkspace
from .model import MultibodyModel, jcalc_deriv
from .spatial import cross_force, cross_force_operand, cross_motion, skew


@dataclass(frozen=True)
class IdJacobians:
    """Jacobians of the extended inverse dynamics w.r.t. H, s, v and r."""

    dH: np.ndarray
    ds: np.ndarray
    dv: np.ndarray
    dr: np.ndarray

    def blocks(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        return self.dH, self.ds, self.dv, self.dr

    def stacked(self) -> np.ndarray:
        return np.hstack(self.blocks())


def dXv_dH(rot_0a: np.ndarray, origin_a0: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Left-trivialized derivative of ``^0X_A w`` with respect to ``^AH_0``.

    Args:
        rot_0a: ``^0R_A``.
        origin_a0: ``^Ao_0``.
        w: twist-like 6-vector expressed in frame A, held constant.
    """
    lin, ang = w[:3], w[3:]
    rt = rot_0a.T
    wx = rot_0a @ skew(ang) @ rt
    out = np.zeros((6, 6))
    out[:3, :3] = wx
    out[:3, 3:] = rot_0a @ skew(lin - skew(origin_a0) @ ang) @ rt
    out[3:, 3:] = wx
    return out


def _stack(model: MultibodyModel, base_rows: np.ndarray, bias_rows: np.ndarray, ws) -> np.ndarray:
    nb = model.n_bodies
    out = np.zeros((6 + nb, base_rows.shape[1]))
    out[:6] = base_rows
    for i in range(1, nb + 1):
        out[5 + i] = ws.subspace[i] @ bias_rows[i]
    return out


def _bias_sweep(
    ws: DynamicsWorkspace,
    d_twist0: np.ndarray,
    d_acc0: np.ndarray,
    joint_seeded: bool,
) -> np.ndarray:
    """Propagate derivatives of the base twist and of ``a^r_0`` through the
    velocity-dependent lines of the sweep and return ``d b^c`` per body.

    With ``joint_seeded`` the columns are the joint velocities and each joint
    adds ``Gamma`` to its own column.
    """
    model = ws.model
    nb = model.n_bodies
    k = d_twist0.shape[1]
    d_twist = np.zeros((nb + 1, 6, k))
    d_acc = np.zeros((nb + 1, 6, k))
    d_bias = np.zeros((nb + 1, 6, k))

    m0 = model.inertias[0]
    d_twist[0] = d_twist0
    d_acc[0] = d_acc0
    d_mom = m0 @ d_twist0
    d_bias[0] = (
        m0 @ d_acc0
        + cross_force_operand(ws.momentum[0]) @ d_twist0
        + cross_force(ws.twist[0]) @ d_mom
    )
    for i in range(1, nb + 1):
        p = model.parent[i]
        x = ws.x_up[i]
        d_twist[i] = x @ d_twist[p]
        if joint_seeded:
            d_twist[i][:, i - 1] += ws.subspace[i]
        d_acc[i] = x @ d_acc[p] - cross_motion(ws.joint_twist[i]) @ d_twist[i]
        if joint_seeded:
            d_acc[i][:, i - 1] += cross_motion(ws.twist[i]) @ ws.subspace[i]
        mi = model.inertias[i]
        d_mom = mi @ d_twist[i]
        d_bias[i] = (
            mi @ d_acc[i]
            + cross_force_operand(ws.momentum[i]) @ d_twist[i]
            + cross_force(ws.twist[i]) @ d_mom
        )
    for i in range(nb, 0, -1):
        p = model.parent[i]
        d_bias[p] += ws.x_up[i].T @ d_bias[i]
    return d_bias


def did_dH(model: MultibodyModel, ws: DynamicsWorkspace, hold: str = "world") -> np.ndarray:
    """Left-trivialized derivative of the extended inverse dynamics w.r.t. H.

    ``hold`` selects which base-twist coordinates stay fixed while H moves:

    * ``"world"``: ``^Av_{A,0}`` is constant, so ``v_0 = ^0X_A ^Av_{A,0}``
      varies with H;
    * ``"body"``: ``^0v_{A,0}`` is constant. This is the derivative that
      enters the state matrix, where the base twist is a body twist.

    Gravity ``^Aa_grav`` is constant in both cases.
    """
    if hold not in ("world", "body"):
        raise ValueError(f"hold must be 'world' or 'body', got {hold!r}")
    pose = ws.state.base_pose
    rot_0a = pose.rotation.T
    if hold == "world":
        d_twist0 = dXv_dH(rot_0a, pose.origin, ws.world_twist)
    else:
        d_twist0 = np.zeros((6, 6))
    d_acc0 = dXv_dH(rot_0a, pose.origin, ws.gravity)
    d_bias = _bias_sweep(ws, d_twist0, d_acc0, joint_seeded=False)
    return _stack(model, d_bias[0], d_bias, ws)


def did_dv(model: MultibodyModel, ws: DynamicsWorkspace) -> np.ndarray:
    """Derivative w.r.t. the base body twist ``^0v_{A,0}``."""
    d_bias = _bias_sweep(ws, np.eye(6), np.zeros((6, 6)), joint_seeded=False)
    return _stack(model, d_bias[0], d_bias, ws)


def did_dr(model: MultibodyModel, ws: DynamicsWorkspace) -> np.ndarray:
    """Derivative w.r.t. the joint velocities."""
    nj = model.n_joints
    d_bias = _bias_sweep(ws, np.zeros((6, nj)), np.zeros((6, nj)), joint_seeded=True)
    return _stack(model, d_bias[0], d_bias, ws)


def did_ds(
    model: MultibodyModel,
    ws: DynamicsWorkspace,
    base_acc: np.ndarray | None = None,
    joint_acc: np.ndarray | None = None,
) -> np.ndarray:
    """Derivative w.r.t. the joint positions.

    ``base_acc``/``joint_acc`` default to the accelerations stored in the
    workspace; they enter only through the base row and ``^ia_{A,0}``.
    """
    base_acc = ws.base_acc if base_acc is None else np.asarray(base_acc, dtype=float)
    joint_acc = ws.joint_acc if joint_acc is None else np.asarray(joint_acc, dtype=float)
    nb = model.n_bodies
    nj = nb
    s = ws.state.joint_pos
    x_up = ws.x_up
    mc = ws.composite_inertia

    dx_up = np.zeros((nb + 1, 6, 6))
    d_twist = np.zeros((nb + 1, 6, nj))
    d_acc_r = np.zeros((nb + 1, 6, nj))
    d_acc_vp = np.zeros((nb + 1, 6, nj))
    d_bias_c = np.zeros((nb + 1, 6, nj))
    d_bias_vp = np.zeros((nb + 1, 6, nj))
    d_mc = np.zeros((nb + 1, nj, 6, 6))

    for i in range(1, nb + 1):
        p = model.parent[i]
        k = i - 1
        dx_up[i] = jcalc_deriv(model.joints[i], s[k]) @ model.fixed_velocity_transforms[i]
        x = x_up[i]
        d_twist[i] = x @ d_twist[p]
        d_twist[i][:, k] += dx_up[i] @ ws.twist[p]
        vj_cross = cross_motion(ws.joint_twist[i])
        d_acc_r[i] = x @ d_acc_r[p] - vj_cross @ d_twist[i]
        d_acc_r[i][:, k] += dx_up[i] @ ws.acc_r[p]
        d_acc_vp[i] = x @ d_acc_vp[p] - vj_cross @ d_twist[i]
        d_acc_vp[i][:, k] += dx_up[i] @ ws.acc_vp[p]
        mi = model.inertias[i]
        d_mom = mi @ d_twist[i]
        velocity_terms = (
            cross_force_operand(ws.momentum[i]) @ d_twist[i]
            + cross_force(ws.twist[i]) @ d_mom
        )
        d_bias_c[i] = mi @ d_acc_r[i] + velocity_terms
        d_bias_vp[i] = mi @ d_acc_vp[i] + velocity_terms

    for i in range(nb, 0, -1):
        p = model.parent[i]
        k = i - 1
        x = x_up[i]
        xt = x.T
        dxt = dx_up[i].T
        d_mc[p] += xt @ d_mc[i] @ x
        d_mc[p][k] += dxt @ mc[i] @ x + xt @ mc[i] @ dx_up[i]
        d_bias_c[p] += xt @ d_bias_c[i]
        d_bias_c[p][:, k] += dxt @ ws.bias_c[i]
        d_bias_vp[p] += xt @ d_bias_vp[i]
        d_bias_vp[p][:, k] += dxt @ ws.bias_vp[i]

    d_mc0_a0 = (d_mc[0] @ base_acc).T

    d_acc_base = np.zeros((nb + 1, 6, nj))
    d_tau = np.zeros((nb, nj))
    d_f_rdot = np.zeros((6, nj))
    for i in range(1, nb + 1):
        p = model.parent[i]
        k = i - 1
        x = x_up[i]
        gamma = ws.subspace[i]
        d_acc_base[i] = x @ d_acc_base[p]
        d_acc_base[i][:, k] += dx_up[i] @ ws.acc_base[p]
        d_mc_acc = (d_mc[i] @ ws.acc_base[i]).T
        d_tau[k] = gamma @ (d_mc_acc + mc[i] @ d_acc_base[i] + d_bias_c[i])

        f = mc[i] @ gamma
        d_f = (d_mc[i] @ gamma).T
        j = i
        while model.parent[j] > 0:
            d_f = x_up[j].T @ d_f
            d_f[:, j - 1] += dx_up[j].T @ f
            f = x_up[j].T @ f
            j = model.parent[j]
        d_f0 = x_up[j].T @ d_f
        d_f0[:, j - 1] += dx_up[j].T @ f
        d_f_rdot += d_f0 * joint_acc[k]

    d_base = d_mc0_a0 + d_f_rdot + d_bias_vp[0]
    return np.vstack([d_base, d_tau])


def id_jacobians(model: MultibodyModel, ws: DynamicsWorkspace, hold: str = "world") -> IdJacobians:
    return IdJacobians(
        dH=did_dH(model, ws, hold=hold),
        ds=did_ds(model, ws),
        dv=did_dv(model, ws),
        dr=did_dr(model, ws),
    )
